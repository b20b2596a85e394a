//! Synthetic problem instances: Bernoulli–Gaussian signals measured through a
//! dense Gaussian matrix, y = A·x⁰ with no noise. Generation is fully
//! deterministic given the seed (ChaCha8 counter streams, Box–Muller
//! Gaussians), and the signal stream is prefix-stable: the first min(N, N')
//! entries agree across sizes for the same seed.
//!
//! The dense matvec/matvec-transpose kernels live here too; their
//! accumulation order is fixed (4-way unrolled dots, 512-row reduction
//! chunks merged in order) so results are bit-identical regardless of how
//! many rayon workers run them.

use crate::error::{Error, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAX_N: usize = 10_000_000;

const SIGNAL_STREAM: u64 = 0;
const MATRIX_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleParams {
    pub n: usize,
    pub alpha: f64,
    pub rho: f64,
    pub sigma_x2: f64,
    pub seed: u64,
}

impl EnsembleParams {
    pub fn new(n: usize, alpha: f64, rho: f64, sigma_x2: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: 0.0,
                constraint: "n >= 1",
            });
        }
        if n > MAX_N {
            return Err(Error::SizeLimit { n, max: MAX_N });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                constraint: "0 < alpha <= 1",
            });
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: rho,
                constraint: "0 < rho < 1",
            });
        }
        if !(sigma_x2.is_finite() && sigma_x2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_x2",
                value: sigma_x2,
                constraint: "0 < sigma_x2 < inf",
            });
        }
        Ok(EnsembleParams {
            n,
            alpha,
            rho,
            sigma_x2,
            seed,
        })
    }

    /// Number of measurement rows, round(α·N), floored at 1.
    pub fn m_rows(&self) -> usize {
        ((self.alpha * self.n as f64).round() as usize).max(1)
    }
}

/// One realized (x⁰, A, y) triple. `matrix` is dense row-major M×N; `y` is
/// stored exactly as computed at generation time.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub params: EnsembleParams,
    pub x0: Vec<f64>,
    pub matrix: Vec<f64>,
    pub y: Vec<f64>,
}

/// Sequential Gaussian source: Box–Muller pairs on one ChaCha8 stream, with
/// the sine mate cached, so consumption order is well defined.
struct GaussStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussStream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussStream { rng, spare: None }
    }

    /// Uniform on [0, 1) with 53 random bits.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    fn next_gauss(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 shifted into (0, 1] so the logarithm stays finite
        let u1 = (((self.rng.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

pub fn gen_instance(params: &EnsembleParams) -> Result<ProblemInstance> {
    if params.n > MAX_N {
        return Err(Error::SizeLimit {
            n: params.n,
            max: MAX_N,
        });
    }
    let n = params.n;
    let m = params.m_rows();
    let sigma_x = params.sigma_x2.sqrt();

    // Signal stream: one Bernoulli uniform per entry, Gaussians only on the
    // occupied ones — the prefix never depends on N.
    let mut sig = GaussStream::new(params.seed, SIGNAL_STREAM);
    let mut x0 = vec![0.0; n];
    for xi in x0.iter_mut() {
        if sig.uniform() < params.rho {
            *xi = sigma_x * sig.next_gauss();
        }
    }

    let mut mat = GaussStream::new(params.seed, MATRIX_STREAM);
    let scale = (1.0 / n as f64).sqrt();
    let mut matrix = vec![0.0; m * n];
    for aij in matrix.iter_mut() {
        *aij = scale * mat.next_gauss();
    }

    let y = matvec(m, n, &matrix, &x0);
    Ok(ProblemInstance {
        params: *params,
        x0,
        matrix,
        y,
    })
}

pub fn mse_against_truth(xhat: &[f64], inst: &ProblemInstance) -> Result<f64> {
    if xhat.len() != inst.x0.len() {
        return Err(Error::LengthMismatch {
            expected: inst.x0.len(),
            got: xhat.len(),
        });
    }
    let mut acc = 0.0;
    for (a, b) in xhat.iter().zip(inst.x0.iter()) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc / inst.x0.len() as f64)
}

/// Dot product with a fixed 4-accumulator association, independent of
/// vector length parity and of any SIMD the compiler picks.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = [0.0f64; 4];
    let quads = a.len() / 4 * 4;
    let mut i = 0;
    while i < quads {
        s[0] += a[i] * b[i];
        s[1] += a[i + 1] * b[i + 1];
        s[2] += a[i + 2] * b[i + 2];
        s[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    while i < a.len() {
        tail += a[i] * b[i];
        i += 1;
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// y = A·x for dense row-major A (m×n). Rows are independent, so parallelism
/// cannot change any bit of the result.
pub fn matvec(m: usize, n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(x.len(), n);
    a.par_chunks(n).map(|row| dot(row, x)).collect()
}

/// Rows per reduction chunk in `matvec_t`; part of the numeric contract, not
/// a tuning knob (changing it changes low-order bits).
pub const MATVEC_T_CHUNK: usize = 512;

/// z = Aᵀ·r for dense row-major A. Accumulates 512-row partials and merges
/// them in chunk order, so the float association is fixed no matter how the
/// chunks are scheduled.
pub fn matvec_t(m: usize, n: usize, a: &[f64], r: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(r.len(), m);
    let partials: Vec<Vec<f64>> = a
        .par_chunks(MATVEC_T_CHUNK * n)
        .zip(r.par_chunks(MATVEC_T_CHUNK))
        .map(|(rows, rs)| {
            let mut acc = vec![0.0f64; n];
            for (row, &rmu) in rows.chunks_exact(n).zip(rs.iter()) {
                for (zj, &aij) in acc.iter_mut().zip(row.iter()) {
                    *zj += rmu * aij;
                }
            }
            acc
        })
        .collect();
    let mut z = vec![0.0f64; n];
    for part in partials {
        for (zj, pj) in z.iter_mut().zip(part.iter()) {
            *zj += pj;
        }
    }
    z
}

/// Both AMP sweeps over A in one pass: resid_μ = y_μ − A_μ·x̂, its scaled
/// accumulation r_μ += resid_μ/denom, and z = Aᵀ·r — each row of A is read
/// once and reused while still hot, halving the memory traffic of the
/// matvec/matvec_t pair while computing the identical values (same per-row
/// dot, same 512-row merge order for z). Returns (Σ resid², z).
pub fn residual_field_pass(
    m: usize,
    n: usize,
    a: &[f64],
    y: &[f64],
    xhat: &[f64],
    r: &mut [f64],
    denom: f64,
) -> (f64, Vec<f64>) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(y.len(), m);
    debug_assert_eq!(r.len(), m);
    debug_assert_eq!(xhat.len(), n);
    let parts: Vec<(f64, Vec<f64>)> = a
        .par_chunks(MATVEC_T_CHUNK * n)
        .zip(y.par_chunks(MATVEC_T_CHUNK))
        .zip(r.par_chunks_mut(MATVEC_T_CHUNK))
        .map(|((rows, ys), rs)| {
            let mut acc = vec![0.0f64; n];
            let mut rn2 = 0.0;
            for ((row, &ymu), rmu) in rows.chunks_exact(n).zip(ys).zip(rs.iter_mut()) {
                let resid = ymu - dot(row, xhat);
                rn2 += resid * resid;
                *rmu += resid / denom;
                let rv = *rmu;
                for (zj, &aij) in acc.iter_mut().zip(row) {
                    *zj += rv * aij;
                }
            }
            (rn2, acc)
        })
        .collect();
    let mut z = vec![0.0f64; n];
    let mut rn2 = 0.0;
    for (p2, part) in parts {
        rn2 += p2;
        for (zj, pj) in z.iter_mut().zip(part) {
            *zj += pj;
        }
    }
    (rn2, z)
}

const MAGIC: &[u8; 7] = b"NCVXCS1";

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn m(&self) -> usize {
        self.params.m_rows()
    }

    pub fn row(&self, mu: usize) -> &[f64] {
        let n = self.n();
        &self.matrix[mu * n..(mu + 1) * n]
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.dump_to(&mut w)
    }

    pub fn dump_to(&self, w: &mut impl Write) -> Result<()> {
        let p = &self.params;
        w.write_all(MAGIC)?;
        w.write_all(&(p.n as u64).to_le_bytes())?;
        w.write_all(&(p.m_rows() as u64).to_le_bytes())?;
        w.write_all(&p.seed.to_le_bytes())?;
        w.write_all(&p.rho.to_le_bytes())?;
        w.write_all(&p.alpha.to_le_bytes())?;
        w.write_all(&p.sigma_x2.to_le_bytes())?;
        for arr in [&self.x0, &self.matrix, &self.y] {
            for v in arr.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::load_from(&mut r)
    }

    pub fn load_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)
            .map_err(|_| Error::MalformedFile("short header".into()))?;
        if &magic != MAGIC {
            return Err(Error::MalformedFile("bad magic".into()));
        }
        let mut u = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut u)
                .map_err(|_| Error::MalformedFile("short header".into()))?;
            Ok(u64::from_le_bytes(u))
        };
        let n = read_u64(r)? as usize;
        let m = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let rho = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
        let alpha = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
        let sigma_x2 = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
        let params = EnsembleParams::new(n, alpha, rho, sigma_x2, seed)
            .map_err(|e| Error::MalformedFile(format!("invalid stored params: {e}")))?;
        if params.m_rows() != m {
            return Err(Error::MalformedFile(format!(
                "row count {m} inconsistent with alpha*n = {}",
                params.m_rows()
            )));
        }
        let read_array = |r: &mut dyn Read, len: usize| -> Result<Vec<f64>> {
            let mut out = vec![0.0f64; len];
            let mut buf = [0u8; 8];
            for v in out.iter_mut() {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::MalformedFile("truncated payload".into()))?;
                *v = f64::from_le_bytes(buf);
            }
            Ok(out)
        };
        let x0 = read_array(r, n)?;
        let matrix = read_array(r, m * n)?;
        let y = read_array(r, m)?;
        Ok(ProblemInstance {
            params,
            x0,
            matrix,
            y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn params_validation() {
        assert!(EnsembleParams::new(0, 0.5, 0.3, 1.0, 1).is_err());
        assert!(EnsembleParams::new(100, 0.0, 0.3, 1.0, 1).is_err());
        assert!(EnsembleParams::new(100, 1.5, 0.3, 1.0, 1).is_err());
        assert!(EnsembleParams::new(100, 0.5, 0.0, 1.0, 1).is_err());
        assert!(EnsembleParams::new(100, 0.5, 1.0, 1.0, 1).is_err());
        assert!(EnsembleParams::new(100, 0.5, 0.3, 0.0, 1).is_err());
        match EnsembleParams::new(MAX_N + 1, 0.5, 0.3, 1.0, 1).unwrap_err() {
            Error::SizeLimit { n, max } => {
                assert_eq!(n, MAX_N + 1);
                assert_eq!(max, MAX_N);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_counts() {
        let p = EnsembleParams::new(10_000, 0.5, 0.3, 1.0, 1).unwrap();
        assert_eq!(p.m_rows(), 5000);
        let p = EnsembleParams::new(10, 0.333, 0.3, 1.0, 1).unwrap();
        assert_eq!(p.m_rows(), 3);
        let p = EnsembleParams::new(10, 0.01, 0.3, 1.0, 1).unwrap();
        assert_eq!(p.m_rows(), 1);
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let p = EnsembleParams::new(400, 0.5, 0.3, 2.0, 42).unwrap();
        let a = gen_instance(&p).unwrap();
        let b = gen_instance(&p).unwrap();
        assert_eq!(bits(&a.x0), bits(&b.x0));
        assert_eq!(bits(&a.matrix), bits(&b.matrix));
        assert_eq!(bits(&a.y), bits(&b.y));
        let p2 = EnsembleParams::new(400, 0.5, 0.3, 2.0, 43).unwrap();
        let c = gen_instance(&p2).unwrap();
        assert_ne!(bits(&a.x0), bits(&c.x0));
    }

    #[test]
    fn signal_prefix_is_stable_across_n() {
        let small = gen_instance(&EnsembleParams::new(500, 0.5, 0.3, 1.0, 7).unwrap()).unwrap();
        let large = gen_instance(&EnsembleParams::new(1000, 0.5, 0.3, 1.0, 7).unwrap()).unwrap();
        assert_eq!(bits(&small.x0), bits(&large.x0[..500]));
    }

    #[test]
    fn empty_support_limit() {
        let p = EnsembleParams::new(1000, 0.5, 1e-9, 1.0, 5).unwrap();
        let inst = gen_instance(&p).unwrap();
        assert!(inst.x0.iter().all(|&v| v == 0.0));
        assert!(inst.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonzero_fraction_within_binomial_band() {
        let n = 2000;
        let rho = 0.3;
        let p = EnsembleParams::new(n, 0.5, rho, 1.0, 11).unwrap();
        let inst = gen_instance(&p).unwrap();
        let frac = inst.x0.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        let band = 5.0 * (rho * (1.0 - rho) / n as f64).sqrt();
        assert!((frac - rho).abs() <= band, "frac {frac} vs rho {rho}");
    }

    #[test]
    fn mse_anchor_points() {
        let p = EnsembleParams::new(1500, 0.5, 0.4, 1.5, 3).unwrap();
        let inst = gen_instance(&p).unwrap();
        assert_eq!(mse_against_truth(&inst.x0, &inst).unwrap(), 0.0);

        let zeros = vec![0.0; 1500];
        let power: f64 = inst.x0.iter().map(|v| v * v).sum::<f64>() / 1500.0;
        let mse0 = mse_against_truth(&zeros, &inst).unwrap();
        assert!((mse0 - power).abs() < 1e-14);
        // zero estimator lands near ρσ_x² (loose LLN band)
        assert!((mse0 - 0.4 * 1.5).abs() < 0.15);

        let c = 0.37;
        let shifted: Vec<f64> = inst.x0.iter().map(|v| v + c).collect();
        let mse_c = mse_against_truth(&shifted, &inst).unwrap();
        assert!((mse_c - c * c).abs() < 1e-12);

        match mse_against_truth(&zeros[..10], &inst).unwrap_err() {
            Error::LengthMismatch { expected, got } => {
                assert_eq!(expected, 1500);
                assert_eq!(got, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn measurements_match_matvec() {
        let p = EnsembleParams::new(300, 0.7, 0.3, 1.0, 9).unwrap();
        let inst = gen_instance(&p).unwrap();
        let y2 = matvec(inst.m(), inst.n(), &inst.matrix, &inst.x0);
        assert_eq!(bits(&inst.y), bits(&y2));
    }

    #[test]
    fn transpose_kernel_has_fixed_association() {
        let p = EnsembleParams::new(64, 1.0, 0.4, 1.0, 13).unwrap();
        let mut inst = gen_instance(&p).unwrap();
        // stretch to 3 chunks by tiling rows: m = 1200, n = 64
        let base = inst.matrix.clone();
        for _ in 0..18 {
            let copy = inst.matrix[..base.len()].to_vec();
            inst.matrix.extend_from_slice(&copy);
        }
        let m = 19 * 64;
        let n = 64;
        let r: Vec<f64> = (0..m).map(|i| ((i * 37 + 11) % 101) as f64 / 50.0 - 1.0).collect();
        let fast = matvec_t(m, n, &inst.matrix[..m * n], &r);

        // sequential emulation of the same chunked accumulation order
        let mut expected = vec![0.0f64; n];
        for (rows, rs) in inst.matrix[..m * n]
            .chunks(MATVEC_T_CHUNK * n)
            .zip(r.chunks(MATVEC_T_CHUNK))
        {
            let mut acc = vec![0.0f64; n];
            for (row, &rmu) in rows.chunks_exact(n).zip(rs.iter()) {
                for (zj, &aij) in acc.iter_mut().zip(row.iter()) {
                    *zj += rmu * aij;
                }
            }
            for (e, a) in expected.iter_mut().zip(acc.iter()) {
                *e += a;
            }
        }
        assert_eq!(bits(&fast), bits(&expected));

        // and it agrees with a naive double loop to float accuracy
        let mut naive = vec![0.0f64; n];
        for mu in 0..m {
            for j in 0..n {
                naive[j] += r[mu] * inst.matrix[mu * n + j];
            }
        }
        for (a, b) in fast.iter().zip(naive.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn column_norms_concentrate() {
        // Square desk-scale stand-in for the large-N law-of-large-numbers
        // check: at α = 1 every column norm² concentrates at 1 with
        // σ = √(2/N), so 0.12 is a ≈6σ envelope at N = 5000.
        let n = 5000;
        let p = EnsembleParams::new(n, 1.0, 0.3, 1.0, 2).unwrap();
        let inst = gen_instance(&p).unwrap();
        let m = inst.m();
        let mut worst = 0.0f64;
        let mut mean = 0.0f64;
        for j in 0..n {
            let mut s = 0.0;
            for mu in 0..m {
                let v = inst.matrix[mu * n + j];
                s += v * v;
            }
            worst = worst.max((s - 1.0).abs());
            mean += s;
        }
        mean /= n as f64;
        assert!(worst <= 0.12, "worst column-norm² deviation {worst}");
        assert!((mean - 1.0).abs() <= 0.01, "mean column-norm² {mean}");
    }

    #[test]
    fn dump_load_roundtrip() {
        let p = EnsembleParams::new(120, 0.5, 0.3, 1.2, 77).unwrap();
        let inst = gen_instance(&p).unwrap();
        let mut buf = Vec::new();
        inst.dump_to(&mut buf).unwrap();
        assert_eq!(&buf[..7], b"NCVXCS1");
        let back = ProblemInstance::load_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.params, inst.params);
        assert_eq!(bits(&back.x0), bits(&inst.x0));
        assert_eq!(bits(&back.matrix), bits(&inst.matrix));
        assert_eq!(bits(&back.y), bits(&inst.y));

        let path = std::env::temp_dir().join("ncvxcs_roundtrip_test.bin");
        inst.dump(&path).unwrap();
        let back2 = ProblemInstance::load(&path).unwrap();
        assert_eq!(bits(&back2.matrix), bits(&inst.matrix));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_containers_are_rejected() {
        let p = EnsembleParams::new(50, 0.5, 0.3, 1.0, 1).unwrap();
        let inst = gen_instance(&p).unwrap();
        let mut buf = Vec::new();
        inst.dump_to(&mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            ProblemInstance::load_from(&mut bad.as_slice()),
            Err(Error::MalformedFile(_))
        ));

        let truncated = &buf[..buf.len() - 9];
        assert!(matches!(
            ProblemInstance::load_from(&mut &truncated[..]),
            Err(Error::MalformedFile(_))
        ));
    }
}
