//! Brute-force quadrature sampler and empirical estimators.
//!
//! Records are produced in fixed-size blocks. Block `k` draws from stream `k`
//! of a ChaCha8 generator keyed by the master seed, so output is identical
//! whether blocks run serially or on the rayon pool. Reductions over blocks
//! always proceed in block order.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{GaussianMixture, Quadrature};
use crate::distill::tap_matrix;
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_log_negativity, TwoModeCovariance};
use crate::tol;

/// Records per RNG block.
pub const BLOCK_LEN: usize = 1 << 16;

/// One heralding shot: the signal quadratures after the tap, the tap
/// quadratures, and the mixture component that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRecord {
    pub x_a: f64,
    pub p_a: f64,
    /// `x'_B`, mode B after the tap.
    pub x_b: f64,
    pub p_b: f64,
    pub x_t: f64,
    pub p_t: f64,
    pub component: u32,
}

impl QuadratureRecord {
    pub fn signal(&self) -> [f64; 4] {
        [self.x_a, self.p_a, self.x_b, self.p_b]
    }

    pub fn is_finite(&self) -> bool {
        [self.x_a, self.p_a, self.x_b, self.p_b, self.x_t, self.p_t]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Factor `L` with `L L^T = cm`. Falls back to a jittered Cholesky and then to
/// a clamped eigendecomposition for matrices on the edge of definiteness.
fn factor(cm: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    if let Some(ch) = cm.cholesky() {
        return Ok(ch.l());
    }
    let jittered = cm + Matrix4::identity() * tol::FACTOR_JITTER * cm.diagonal().max().max(1.0);
    if let Some(ch) = jittered.cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(*cm);
    if eig.eigenvalues.iter().any(|&v| v < -tol::PHYSICAL) {
        return Err(Error::Factorization(format!(
            "eigenvalues {:?} are not non-negative",
            eig.eigenvalues.as_slice()
        )));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix4::from_diagonal(&root))
}

/// Seeded sampler for a mixture sent through the tap.
#[derive(Debug, Clone)]
pub struct Sampler {
    factors: Vec<Matrix4<f64>>,
    cumulative: Vec<f64>,
    tap: nalgebra::Matrix6<f64>,
    seed: u64,
}

impl Sampler {
    pub fn new(mix: &GaussianMixture, transmittivity: f64, seed: u64) -> Result<Self> {
        if !(transmittivity > 0.0 && transmittivity <= 1.0) {
            return Err(Error::Param(format!(
                "tap transmittivity {transmittivity} must lie in (0, 1]"
            )));
        }
        let factors = mix
            .components()
            .iter()
            .map(|(_, cm)| factor(cm.matrix()))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = mix
            .weights()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        Ok(Self {
            factors,
            cumulative,
            tap: tap_matrix(transmittivity),
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> QuadratureRecord {
        let u: f64 = rng.random();
        let component = self.cumulative.partition_point(|&c| c <= u);
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let s = self.factors[component] * z;
        let x_v: f64 = rng.sample(StandardNormal);
        let p_v: f64 = rng.sample(StandardNormal);
        let input = nalgebra::Vector6::new(s[0], s[1], s[2], s[3], x_v, p_v);
        let out = self.tap * input;
        QuadratureRecord {
            x_a: out[0],
            p_a: out[1],
            x_b: out[2],
            p_b: out[3],
            x_t: out[4],
            p_t: out[5],
            component: component as u32,
        }
    }

    /// Records `[index * BLOCK_LEN, index * BLOCK_LEN + len)` of the stream.
    pub fn block(&self, index: u64, len: usize) -> Vec<QuadratureRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        (0..len).map(|_| self.draw(&mut rng)).collect()
    }

    fn block_lengths(n: usize) -> impl IndexedParallelIterator<Item = (u64, usize)> {
        let blocks = n.div_ceil(BLOCK_LEN);
        (0..blocks)
            .into_par_iter()
            .map(move |b| (b as u64, BLOCK_LEN.min(n - b * BLOCK_LEN)))
    }

    /// The first `n` records.
    pub fn sample(&self, n: usize) -> Vec<QuadratureRecord> {
        let blocks: Vec<Vec<QuadratureRecord>> = Self::block_lengths(n).map(|(b, len)| self.block(b, len)).collect();
        blocks.concat()
    }

    /// Applies `f` to each block of the first `n` records; results come back
    /// in block order.
    pub fn map_blocks<A, F>(&self, n: usize, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(&[QuadratureRecord]) -> A + Sync + Send,
    {
        Self::block_lengths(n).map(|(b, len)| f(&self.block(b, len))).collect()
    }

    /// Streams `n` records and accumulates heralded signal moments for each
    /// threshold. Block `k` also feeds batch `k % n_batches`, for batch-means
    /// error estimates of nonlinear functionals.
    pub fn tally(&self, n: usize, thresholds: &[f64], n_batches: usize) -> McTally {
        let n_components = self.factors.len();
        let per_block = self.map_blocks(n, |records| {
            thresholds
                .iter()
                .map(|&h| {
                    let mut acc = MomentAccumulator::default();
                    let mut by_component = vec![0u64; n_components];
                    for r in records.iter().filter(|r| r.x_t >= h) {
                        acc.push(r.signal());
                        by_component[r.component as usize] += 1;
                    }
                    (acc, by_component)
                })
                .collect::<Vec<_>>()
        });
        let n_batches = n_batches.max(1);
        let mut per_threshold: Vec<ThresholdTally> = thresholds
            .iter()
            .map(|&threshold| ThresholdTally {
                threshold,
                moments: MomentAccumulator::default(),
                batches: vec![MomentAccumulator::default(); n_batches],
                by_component: vec![0; n_components],
            })
            .collect();
        for (b, block) in per_block.into_iter().enumerate() {
            for (tally, (acc, counts)) in per_threshold.iter_mut().zip(block) {
                tally.moments.merge(&acc);
                tally.batches[b % n_batches].merge(&acc);
                for (c, k) in tally.by_component.iter_mut().zip(counts) {
                    *c += k;
                }
            }
        }
        McTally {
            n_total: n as u64,
            per_threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McTally {
    pub n_total: u64,
    pub per_threshold: Vec<ThresholdTally>,
}

#[derive(Debug, Clone)]
pub struct ThresholdTally {
    pub threshold: f64,
    pub moments: MomentAccumulator,
    pub batches: Vec<MomentAccumulator>,
    pub by_component: Vec<u64>,
}

impl ThresholdTally {
    /// Accepted fraction and its binomial standard error.
    pub fn acceptance(&self, n_total: u64) -> (f64, f64) {
        binomial(self.moments.count(), n_total)
    }

    /// Log-negativity of the pooled estimate with a batch-means standard
    /// error. Batches whose estimate is not a valid covariance are skipped.
    pub fn ln_with_batch_se(&self) -> Result<(f64, f64)> {
        let pooled = self.moments.estimate()?.covariance()?;
        let ln = gaussian_log_negativity(&pooled)?;
        let batch_lns: Vec<f64> = self
            .batches
            .iter()
            .filter_map(|b| b.estimate().ok())
            .filter_map(|e| e.covariance().ok())
            .filter_map(|cm| gaussian_log_negativity(&cm).ok())
            .collect();
        if batch_lns.len() < 2 {
            return Err(Error::TooFewAccepted {
                accepted: batch_lns.len(),
                needed: 2,
            });
        }
        let k = batch_lns.len() as f64;
        let mean = batch_lns.iter().sum::<f64>() / k;
        let var = batch_lns.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Ok((ln, (var / k).sqrt()))
    }
}

fn binomial(accepted: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 0.0);
    }
    let f = accepted as f64 / total as f64;
    (f, (f * (1.0 - f) / total as f64).sqrt())
}

/// Raw power sums of the signal vector up to fourth order, enough for means,
/// covariances and the asymptotic standard errors of the covariances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    s1: [f64; 4],
    s11: [[f64; 4]; 4],
    /// `sum y_j^2 y_k`
    s21: [[f64; 4]; 4],
    /// `sum y_j^2 y_k^2`
    s22: [[f64; 4]; 4],
}

impl MomentAccumulator {
    pub fn push(&mut self, y: [f64; 4]) {
        self.n += 1;
        for j in 0..4 {
            self.s1[j] += y[j];
            let yj2 = y[j] * y[j];
            for k in 0..4 {
                self.s11[j][k] += y[j] * y[k];
                self.s21[j][k] += yj2 * y[k];
                self.s22[j][k] += yj2 * y[k] * y[k];
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for j in 0..4 {
            self.s1[j] += other.s1[j];
            for k in 0..4 {
                self.s11[j][k] += other.s11[j][k];
                self.s21[j][k] += other.s21[j][k];
                self.s22[j][k] += other.s22[j][k];
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Result<EstimatedCM> {
        if self.n < 2 {
            return Err(Error::TooFewAccepted {
                accepted: self.n as usize,
                needed: 2,
            });
        }
        let n = self.n as f64;
        let mean = Vector4::from_fn(|j, _| self.s1[j] / n);
        let e11 = |j: usize, k: usize| self.s11[j][k] / n;
        let pop = Matrix4::from_fn(|j, k| e11(j, k) - mean[j] * mean[k]);
        let matrix = pop * (n / (n - 1.0));
        let se = Matrix4::from_fn(|j, k| {
            let (a, b) = (mean[j], mean[k]);
            // E[(Y-a)^2 (Z-b)^2] from raw moments.
            let m22 = self.s22[j][k] / n - 2.0 * b * self.s21[j][k] / n - 2.0 * a * self.s21[k][j] / n
                + b * b * e11(j, j)
                + a * a * e11(k, k)
                + 4.0 * a * b * e11(j, k)
                - 3.0 * a * a * b * b;
            ((m22 - pop[(j, k)].powi(2)).max(0.0) / n).sqrt()
        });
        Ok(EstimatedCM {
            matrix,
            mean,
            n: self.n as usize,
            se,
            stat_term: (2.0 / (n - 1.0)).sqrt(),
        })
    }
}

/// Sample covariance matrix of heralded signal records.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCM {
    /// Unbiased covariance estimate of `(x_A, p_A, x'_B, p'_B)`, including
    /// intra-mode entries. Not guaranteed positive definite for tiny samples.
    pub matrix: Matrix4<f64>,
    pub mean: Vector4<f64>,
    pub n: usize,
    /// Per-element asymptotic standard errors.
    pub se: Matrix4<f64>,
    /// `sqrt(2 / (n - 1))`.
    pub stat_term: f64,
}

impl EstimatedCM {
    pub fn covariance(&self) -> Result<TwoModeCovariance> {
        TwoModeCovariance::new(self.matrix)
    }
}

/// Two-pass covariance estimate over the records with `x_t >= threshold`.
pub fn empirical_cm(records: &[QuadratureRecord], threshold: f64) -> Result<EstimatedCM> {
    let accepted: Vec<[f64; 4]> = records
        .iter()
        .filter(|r| r.x_t >= threshold)
        .map(|r| r.signal())
        .collect();
    let count = accepted.len();
    if count < 2 {
        return Err(Error::TooFewAccepted {
            accepted: count,
            needed: 2,
        });
    }
    let n = count as f64;
    let mut mean = Vector4::zeros();
    for y in &accepted {
        for j in 0..4 {
            mean[j] += y[j];
        }
    }
    mean /= n;
    let mut co = Matrix4::zeros();
    for y in &accepted {
        let d = Vector4::from_fn(|j, _| y[j] - mean[j]);
        co += d * d.transpose();
    }
    let pop = co / n;
    let mut fourth = Matrix4::zeros();
    for y in &accepted {
        let d = Vector4::from_fn(|j, _| y[j] - mean[j]);
        fourth += Matrix4::from_fn(|j, k| (d[j] * d[k] - pop[(j, k)]).powi(2));
    }
    Ok(EstimatedCM {
        matrix: co / (n - 1.0),
        mean,
        n: count,
        se: (fourth / (n * n)).map(f64::sqrt),
        stat_term: (2.0 / (n - 1.0)).sqrt(),
    })
}

/// Fraction of records with `x_t >= threshold` and its binomial standard
/// error.
pub fn acceptance_rate(records: &[QuadratureRecord], threshold: f64) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::TooFewAccepted { accepted: 0, needed: 1 });
    }
    let accepted = records.iter().filter(|r| r.x_t >= threshold).count();
    Ok(binomial(accepted as u64, records.len() as u64))
}

/// Minimum heralded sample for [`kurtosis_diagnostic`].
pub const KURTOSIS_MIN_ACCEPTED: usize = 100;

/// Sample excess kurtosis (bias-corrected `G2`) of a heralded marginal and its
/// standard error. A Gaussian marginal gives zero.
pub fn kurtosis_diagnostic(records: &[QuadratureRecord], quadrature: Quadrature, threshold: f64) -> Result<(f64, f64)> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.x_t >= threshold)
        .map(|r| quadrature.eval(r.x_a, r.p_a, r.x_b, r.p_b))
        .collect();
    if values.len() < KURTOSIS_MIN_ACCEPTED {
        return Err(Error::TooFewAccepted {
            accepted: values.len(),
            needed: KURTOSIS_MIN_ACCEPTED,
        });
    }
    Ok(excess_kurtosis(&values))
}

pub(crate) fn excess_kurtosis(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m4) = values.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d2 = (v - mean).powi(2);
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    let g2 = m4 / (m2 * m2) - 3.0;
    let big_g2 = ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    let se = (24.0 * n * (n - 1.0).powi(2) / ((n - 3.0) * (n - 2.0) * (n + 3.0) * (n + 5.0))).sqrt();
    (big_g2, se)
}
