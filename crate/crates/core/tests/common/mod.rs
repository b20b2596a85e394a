//! Shared test oracles: independent, slow reference implementations that the
//! closed-form code is checked against. Nothing here is used by the library.

use ncvxcs_core::penalty::PenaltySpec;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic uniform/Gaussian source for randomized test suites.
pub struct TestRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }

    pub fn gauss(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = (((self.rng.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Single-coordinate objective x²/(2s) − w·x + J(x).
pub fn single_body_objective(p: &PenaltySpec, s: f64, w: f64, x: f64) -> f64 {
    x * x / (2.0 * s) - w * x + p.value(x)
}

/// Brute-force minimizer of the single-coordinate objective by staged grid
/// refinement down to step ~3e-8. Returns (argmin, min value). The minimizer
/// always lies in [−s|w|−1, s|w|+1]: away from the origin the penalty is
/// nondecreasing in |x|, so the quadratic part pins |x*| ≤ s|w|.
pub fn brute_force_min(p: &PenaltySpec, s: f64, w: f64) -> (f64, f64) {
    let r = s * w.abs() + 1.0;
    let mut center = 0.0;
    let mut half = r;
    let mut best_x = 0.0;
    let mut best_f = f64::INFINITY;
    for stage in 0..4 {
        let n = if stage == 0 { 4000 } else { 400 };
        let step = 2.0 * half / n as f64;
        for k in 0..=n {
            let x = center - half + k as f64 * step;
            let f = single_body_objective(p, s, w, x);
            if f < best_f {
                best_f = f;
                best_x = x;
            }
        }
        center = best_x;
        half = 2.0 * step;
    }
    (best_x, best_f)
}

/// Composite Simpson on [a, b] with n panels (n even).
pub fn simpson(a: f64, b: f64, n: usize, f: &mut impl FnMut(f64) -> f64) -> f64 {
    assert!(n % 2 == 0 && n >= 2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Standard-normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Oracle for E_z[f(z)], z ~ N(0,1): per-segment Simpson between the sorted
/// finite kink locations, clipped to [−12, 12], 4000 panels per segment.
pub fn gauss_expect_oracle(kinks: &[f64], f: &mut impl FnMut(f64) -> f64) -> f64 {
    let mut cuts = vec![-12.0, 12.0];
    for &k in kinks {
        if k.is_finite() && k.abs() < 12.0 {
            cuts.push(k);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        if w[1] - w[0] > 1e-300 {
            acc += simpson(w[0], w[1], 4000, &mut |z| normal_pdf(z) * f(z));
        }
    }
    acc
}

/// erfc oracle: Taylor series of erf for |x| ≤ 2, Lentz continued fraction
/// for the tail; both are textbook expansions independent of the library's
/// rational approximation.
pub fn erfc_oracle(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_oracle(-x);
    }
    if x <= 2.0 {
        // erf(x) = 2/√π Σ (−1)^n x^{2n+1} / (n!(2n+1))
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        1.0 - sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        // erfc(x) = exp(−x²)/√π · 1/(x + 1/2/(x + 2/2/(x + 3/2/(x + …))))
        // evaluated by the modified Lentz algorithm.
        let tiny = 1e-300;
        let mut f = tiny;
        let mut c = f;
        let mut d = 0.0;
        for i in 0..300 {
            let (an, bn) = if i == 0 {
                (1.0, x)
            } else {
                (i as f64 / 2.0, x)
            };
            d = bn + an * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = bn + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() * f
    }
}
