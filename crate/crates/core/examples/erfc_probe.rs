use ncvxcs_core::gauss::erfc;
fn main() {
    for x in [0.25, 0.46875, 0.5, 1.0, 2.0, 3.0, 3.9, 4.0, 4.1, 4.5625, 5.0, 6.0, 8.0, 10.0, 26.0] {
        println!("{x} {:e}", erfc(x));
    }
}
