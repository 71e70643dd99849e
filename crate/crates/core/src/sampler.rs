//! Scale-mixture samples `x_i = w_i T_p z_i` and their spectral statistics.
//!
//! Every observation draws from its own ChaCha stream keyed by the batch seed,
//! so a batch is identical whatever the number of worker threads.

use std::path::Path;

use matrixmultiply::dgemm;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BaseDistribution, MixingDistribution};

const DATA_DOMAIN: u64 = 0x6461_7461_5f73_7472;
const PERM_DOMAIN: u64 = 0x7065_726d_5f73_7472;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent 64-bit seed for replication `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut s = seed ^ splitmix64(&mut index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(&mut s)
}

/// Stream `index` of the generator keyed by `(key, domain)`.
fn stream(key: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut state = key ^ domain;
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(index);
    rng
}

impl BaseDistribution {
    /// One standardized draw (mean 0, variance 1).
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            BaseDistribution::StandardNormal => rng.sample(StandardNormal),
            BaseDistribution::ScaledT6 => {
                let z: f64 = rng.sample(StandardNormal);
                // χ²₆ = 2(E₁ + E₂ + E₃).
                let chi2: f64 =
                    2.0 * (0..3).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>();
                z / (chi2 / 6.0).sqrt() * (4.0f64 / 6.0).sqrt()
            }
            BaseDistribution::StandardizedChiSq3 => {
                let chi2: f64 = (0..3)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * z
                    })
                    .sum();
                (chi2 - 3.0) / 6.0f64.sqrt()
            }
            BaseDistribution::Uniform => {
                let u: f64 = rng.random();
                3.0f64.sqrt() * (2.0 * u - 1.0)
            }
        }
    }
}

/// Diagonal shape matrix `T_p`, given by the diagonal of `T_p²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    #[default]
    Identity,
    Diagonal { variances: Vec<f64> },
}

impl Shape {
    /// `T_p² = diag(1−x, …, 1−x, 1+x, …, 1+x)` with the two halves of equal size.
    pub fn two_level(p: usize, x: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::invalid(format!("two-level spread must lie in [0, 1), got {x}")));
        }
        if p % 2 != 0 {
            return Err(Error::invalid("two-level shape needs an even dimension"));
        }
        let variances = (0..p)
            .map(|j| if j < p / 2 { 1.0 - x } else { 1.0 + x })
            .collect();
        Ok(Shape::Diagonal { variances })
    }

    fn scales(&self, p: usize) -> Result<Option<Vec<f64>>> {
        match self {
            Shape::Identity => Ok(None),
            Shape::Diagonal { variances } => {
                if variances.len() != p {
                    return Err(Error::invalid(format!(
                        "shape has {} entries but p = {p}",
                        variances.len()
                    )));
                }
                if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::invalid("shape variances must be positive"));
                }
                let trace: f64 = variances.iter().sum();
                if (trace - p as f64).abs() > 1e-8 * p as f64 {
                    return Err(Error::invalid(format!(
                        "tr(T²) = {trace} but must equal p = {p}"
                    )));
                }
                Ok(Some(variances.iter().map(|v| v.sqrt()).collect()))
            }
        }
    }
}

/// `n` observations of dimension `p`, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    p: usize,
    n: usize,
    dof: usize,
    data: Vec<f64>,
    w_squares: Option<Vec<f64>>,
    seed: Option<u64>,
    base: Option<BaseDistribution>,
}

impl SampleBatch {
    /// Wraps observed data (`n` rows of length `p`).
    pub fn from_rows(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 || n == 0 || data.len() != p * n {
            return Err(Error::invalid(format!(
                "data of length {} does not match {n} rows of length {p}",
                data.len()
            )));
        }
        Ok(SampleBatch {
            p,
            n,
            dof: n,
            data,
            w_squares: None,
            seed: None,
            base: None,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Divisor of the sample covariance: `n`, or `n − 1` once centered.
    pub fn dof(&self) -> usize {
        self.dof
    }

    /// `p / dof`.
    pub fn ratio(&self) -> f64 {
        self.p as f64 / self.dof as f64
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn w_squares(&self) -> Option<&[f64]> {
        self.w_squares.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn base(&self) -> Option<BaseDistribution> {
        self.base
    }

    /// Mean-centered copy, with sample covariance `Σ(x−x̄)(x−x̄)'/(n−1)`.
    pub fn centered(&self) -> Result<SampleBatch> {
        if self.n < 2 {
            return Err(Error::invalid("centering needs at least two observations"));
        }
        let mut mean = vec![0.0; self.p];
        for row in self.data.chunks(self.p) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let data = self
            .data
            .chunks(self.p)
            .flat_map(|row| row.iter().zip(&mean).map(|(x, m)| x - m))
            .collect();
        Ok(SampleBatch {
            dof: self.n - 1,
            data,
            ..self.clone()
        })
    }

    /// Copy with each observation's coordinates shuffled by an independent
    /// uniform permutation drawn from stream `(perm_seed, i)`.
    pub fn permuted(&self, perm_seed: u64) -> SampleBatch {
        let mut data = self.data.clone();
        data.par_chunks_mut(self.p).enumerate().for_each(|(i, row)| {
            let mut rng = stream(perm_seed, PERM_DOMAIN, i as u64);
            row.shuffle(&mut rng);
        });
        SampleBatch {
            data,
            ..self.clone()
        }
    }
}

/// Draws `n` observations `x_i = w_i T_p z_i` with `w_i² ~ G` and `z_ij` i.i.d. from `base`.
pub fn sample(
    g: &MixingDistribution,
    base: BaseDistribution,
    shape: &Shape,
    p: usize,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if p < 1 || n < 2 {
        return Err(Error::invalid(format!("need p ≥ 1 and n ≥ 2, got p = {p}, n = {n}")));
    }
    let scales = shape.scales(p)?;
    let cumulative: Vec<f64> = g
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let atoms = g.atoms();

    let mut data = vec![0.0; n * p];
    let w_squares: Vec<f64> = data
        .par_chunks_mut(p)
        .enumerate()
        .map(|(i, row)| {
            let mut rng = stream(seed, DATA_DOMAIN, i as u64);
            let u: f64 = rng.random();
            let idx = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(atoms.len() - 1);
            let w2 = atoms[idx];
            let w = w2.sqrt();
            for (j, x) in row.iter_mut().enumerate() {
                let scale = scales.as_ref().map_or(1.0, |s| s[j]);
                *x = w * scale * base.draw(&mut rng);
            }
            w2
        })
        .collect();

    Ok(SampleBatch {
        p,
        n,
        dof: n,
        data,
        w_squares: Some(w_squares),
        seed: Some(seed),
        base: Some(base),
    })
}

/// Gram matrix on the smaller side: `XX'` (n×n) when `n ≤ p`, else `X'X` (p×p).
/// Both share the nonzero spectrum of `n·B_n`.
fn small_gram(batch: &SampleBatch) -> (Vec<f64>, usize) {
    let (n, p) = (batch.n, batch.p);
    let x = batch.data.as_ptr();
    if n <= p {
        let mut out = vec![0.0; n * n];
        // SAFETY: strides describe the n×p row-major buffer and its transpose;
        // the output buffer is n×n and does not alias the input.
        unsafe {
            dgemm(
                n, p, n, 1.0, x, p as isize, 1, x, 1, p as isize, 0.0,
                out.as_mut_ptr(), n as isize, 1,
            );
        }
        (out, n)
    } else {
        let mut out = vec![0.0; p * p];
        // SAFETY: as above with the roles of the two factors swapped.
        unsafe {
            dgemm(
                p, n, p, 1.0, x, 1, p as isize, x, p as isize, 1, 0.0,
                out.as_mut_ptr(), p as isize, 1,
            );
        }
        (out, p)
    }
}

fn square_product(a: &[f64], b: &[f64], s: usize) -> Vec<f64> {
    let mut out = vec![0.0; s * s];
    // SAFETY: a, b and out are s×s row-major buffers; out is freshly allocated.
    unsafe {
        dgemm(
            s, s, s, 1.0, a.as_ptr(), s as isize, 1, b.as_ptr(), s as isize, 1, 0.0,
            out.as_mut_ptr(), s as isize, 1,
        );
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `tr(B_n^k)/p` for `k = 0..=kmax`, with the `k = 0` entry equal to 1.
///
/// Uses `tr S^{2r} = ‖S^r‖²_F` and `tr S^{2r+1} = ⟨S^r, S^{r+1}⟩` for the
/// symmetric Gram matrix `S`, so no eigendecomposition is needed.
pub fn power_traces(batch: &SampleBatch, kmax: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    if kmax == 0 {
        return out;
    }
    let (mut gram, s) = small_gram(batch);
    let scale = 1.0 / batch.dof as f64;
    gram.iter_mut().for_each(|v| *v *= scale);
    let p = batch.p as f64;

    let mut powers: Vec<Vec<f64>> = vec![gram];
    while powers.len() < kmax.div_ceil(2) {
        let next = square_product(powers.last().unwrap(), &powers[0], s);
        powers.push(next);
    }
    for k in 1..=kmax {
        let trace = if k == 1 {
            (0..s).map(|i| powers[0][i * s + i]).sum()
        } else if k % 2 == 0 {
            let r = &powers[k / 2 - 1];
            dot(r, r)
        } else {
            dot(&powers[k / 2 - 1], &powers[k / 2])
        };
        out.push(trace / p);
    }
    out
}

/// Spectral moment statistics of a batch and of its coordinate-permuted copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub p: usize,
    pub n: usize,
    pub beta1_hat: f64,
    pub beta2_hat: f64,
    pub beta1_check: f64,
    pub beta2_check: f64,
    pub gamma2_hat: f64,
    pub gamma2_check: f64,
    pub c_n: f64,
}

/// `(β̂_{n1}, β̂_{n2})` of a batch.
pub fn leading_moments(batch: &SampleBatch) -> (f64, f64) {
    let (gram, _) = small_gram(batch);
    let d = batch.dof as f64;
    let p = batch.p as f64;
    let beta1 = dot(&batch.data, &batch.data) / (d * p);
    let beta2 = dot(&gram, &gram) / (d * d * p);
    (beta1, beta2)
}

/// `β̂_{n1}, β̂_{n2}` from Gram traces and `β̌_{n1}, β̌_{n2}` from the copy
/// with coordinates permuted independently per observation.
pub fn moment_stats(batch: &SampleBatch, perm_seed: u64) -> MomentStats {
    moment_stats_paired(batch, &batch.permuted(perm_seed))
        .expect("a permuted copy shares the batch shape")
}

/// [`moment_stats`] with the coordinate-permuted copy supplied by the caller.
pub fn moment_stats_paired(batch: &SampleBatch, permuted: &SampleBatch) -> Result<MomentStats> {
    if (permuted.p, permuted.n, permuted.dof) != (batch.p, batch.n, batch.dof) {
        return Err(Error::invalid("permuted copy does not match the batch shape"));
    }
    let (beta1_hat, beta2_hat) = leading_moments(batch);
    let (_, beta2_check) = leading_moments(permuted);
    // Permutation preserves norms, so the first moment is shared exactly.
    let beta1_check = beta1_hat;
    let c_n = batch.ratio();
    Ok(MomentStats {
        p: batch.p,
        n: batch.dof,
        beta1_hat,
        beta2_hat,
        beta1_check,
        beta2_check,
        gamma2_hat: (beta2_hat - beta1_hat * beta1_hat) / c_n,
        gamma2_check: (beta2_check - beta1_check * beta1_check) / c_n,
        c_n,
    })
}

/// All `p` eigenvalues of `B_n`, ascending.
pub fn eigenvalues(batch: &SampleBatch) -> Result<Vec<f64>> {
    let (gram, s) = small_gram(batch);
    let m = DMatrix::from_row_slice(s, s, &gram) / batch.dof as f64;
    let norm = m.norm();
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("eigensolver returned non-finite values", f64::NAN));
    }
    let floor = -1e-10 * norm.max(f64::MIN_POSITIVE);
    if let Some(bad) = ev.iter().find(|&&v| v < floor) {
        return Err(Error::numerical("negative eigenvalue of a Gram matrix", *bad));
    }
    ev.iter_mut().for_each(|v| *v = v.max(0.0));
    ev.resize(batch.p, 0.0);
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Reads a numeric CSV with observations in rows.
pub fn ingest_csv(path: &Path, has_header: bool) -> Result<SampleBatch> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(value);
        }
        rows += 1;
    }
    let p = width.unwrap_or(0);
    if rows == 0 || p == 0 {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "no data rows".into(),
        });
    }
    SampleBatch::from_rows(p, rows, data)
}
