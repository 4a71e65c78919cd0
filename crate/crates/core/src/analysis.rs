//! Metrics of trained predictors, the support-recovery baseline,
//! cross-predictability estimators, the lower-bound expression, and the
//! edge-chain observable `φ_v` with its moments and Gaussian approximation.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::boolfn::{pattern_sign, walsh_hadamard, write_pattern, BooleanFunction, Subset, MAX_TABLE_SUPPORT};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};
use crate::walk::{fill_uniform, EdgeWalk, Walk, WalkConfig};

/// Largest number of coordinates enumerated by exact metrics.
pub const MAX_EXACT_COORDS: usize = 16;

pub trait Predictor: Sync {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[i8]) -> f64;
    /// 0-indexed coordinates the predictor can depend on, when known.
    fn relevant_coordinates(&self) -> Option<Vec<usize>> {
        None
    }
}

impl Predictor for BooleanFunction {
    fn dim(&self) -> usize {
        BooleanFunction::dim(self)
    }

    fn predict(&self, x: &[i8]) -> f64 {
        self.value(x)
    }

    fn relevant_coordinates(&self) -> Option<Vec<usize>> {
        Some(self.support_indices().to_vec())
    }
}

/// A predictor given by a closure, for tests and ad-hoc comparisons.
pub struct FnPredictor<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[i8]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[i8]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MseMode {
    Exact,
    MonteCarlo { n: usize, seed: u64 },
}

fn check_dim(pred: &impl Predictor, f: &BooleanFunction) -> Result<()> {
    if pred.dim() != f.dim() {
        return Err(invalid!("predictor dimension {} differs from function dimension {}", pred.dim(), f.dim()));
    }
    Ok(())
}

/// `E_x[(pred(x) − f(x))²]` by enumeration over the coordinates either side
/// depends on.
pub fn uniform_mse_exact(pred: &impl Predictor, f: &BooleanFunction) -> Result<f64> {
    check_dim(pred, f)?;
    let mut coords = pred
        .relevant_coordinates()
        .ok_or_else(|| invalid!("exact MSE needs a predictor with known relevant coordinates"))?;
    coords.extend_from_slice(f.support_indices());
    coords.sort_unstable();
    coords.dedup();
    if coords.len() > MAX_EXACT_COORDS {
        return Err(Error::Capacity(format!(
            "exact MSE over {} coordinates exceeds {MAX_EXACT_COORDS}",
            coords.len()
        )));
    }
    let n = 1usize << coords.len();
    let mut x = vec![1i8; f.dim()];
    let mut total = 0.0;
    for m in 0..n {
        write_pattern(m, &coords, &mut x);
        total += (pred.predict(&x) - f.value(&x)).powi(2);
    }
    Ok(total / n as f64)
}

pub fn uniform_mse(pred: &impl Predictor, f: &BooleanFunction, mode: MseMode) -> Result<Estimate> {
    match mode {
        MseMode::Exact => Ok(Estimate {
            value: uniform_mse_exact(pred, f)?,
            std_error: 0.0,
        }),
        MseMode::MonteCarlo { n, seed } => {
            check_dim(pred, f)?;
            let test = TestSet::uniform(f, n, seed)?;
            let sq: Vec<f64> = test
                .predictions(pred)
                .iter()
                .zip(&test.labels)
                .map(|(p, y)| (p - y).powi(2))
                .collect();
            Ok(mean_se(&sq))
        }
    }
}

fn mean_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

/// `sign` with `sign(0) = +1`.
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Fixed uniform evaluation points with their labels.
#[derive(Debug, Clone)]
pub struct TestSet {
    dim: usize,
    points: Vec<i8>,
    labels: Vec<f64>,
}

impl TestSet {
    pub fn uniform(f: &BooleanFunction, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid!("test set must be nonempty"));
        }
        let dim = f.dim();
        let mut rng = rng::stream(seed, Stream::TestSet);
        let mut points = vec![0i8; n * dim];
        for x in points.chunks_exact_mut(dim) {
            fill_uniform(&mut rng, x);
        }
        let labels = points.chunks_exact(dim).map(|x| f.value(x)).collect();
        Ok(Self { dim, points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i8] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Predictions in test-set order; evaluation fans out over threads.
    pub fn predictions(&self, pred: &impl Predictor) -> Vec<f64> {
        self.points.par_chunks(self.dim).map(|x| pred.predict(x)).collect()
    }

    pub fn mse(&self, preds: &[f64]) -> f64 {
        preds.iter().zip(&self.labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / self.len() as f64
    }

    pub fn sign_accuracy(&self, preds: &[f64]) -> Result<f64> {
        if self.labels.iter().any(|y| y.abs() != 1.0) {
            return Err(invalid!("sign accuracy needs a ±1-valued target"));
        }
        let hits = preds.iter().zip(&self.labels).filter(|(p, y)| sign(**p) == **y).count();
        Ok(hits as f64 / self.len() as f64)
    }

    /// Empirical `E[pred(x)·χ_A(x)]` with its standard error.
    pub fn fourier_coeff(&self, preds: &[f64], subset: &Subset) -> (f64, f64) {
        let v: Vec<f64> = preds
            .iter()
            .enumerate()
            .map(|(i, p)| p * subset.character(self.point(i)) as f64)
            .collect();
        let e = mean_se(&v);
        (e.value, e.std_error)
    }
}

/// Fraction of points where `sign(pred)` agrees with `f`.
pub fn sign_accuracy(pred: &impl Predictor, f: &BooleanFunction, points: &[Vec<i8>]) -> Result<f64> {
    check_dim(pred, f)?;
    if !f.is_boolean_valued() {
        return Err(invalid!("sign accuracy needs a ±1-valued target"));
    }
    if points.is_empty() {
        return Err(invalid!("no test points"));
    }
    let hits = points.iter().filter(|x| sign(pred.predict(x)) == f.value(x)).count();
    Ok(hits as f64 / points.len() as f64)
}

/// Monte-Carlo `E_x[pred(x)·χ_A(x)]` over `n` uniform points.
pub fn net_fourier_coeff(pred: &impl Predictor, subset: &Subset, n: usize, seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(invalid!("need at least one sample"));
    }
    if subset.indices().last().is_some_and(|&i| i >= pred.dim()) {
        return Err(invalid!("subset {subset} outside the predictor's input"));
    }
    let mut rng = rng::stream(seed, Stream::MonteCarlo);
    let mut x = vec![0i8; pred.dim()];
    let v: Vec<f64> = (0..n)
        .map(|_| {
            fill_uniform(&mut rng, &mut x);
            pred.predict(&x) * subset.character(&x) as f64
        })
        .collect();
    Ok(mean_se(&v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    /// Recovered coordinates, 1-indexed and sorted.
    pub support: Vec<usize>,
    /// Walk steps consumed.
    pub steps: u64,
    /// Step at which the last coordinate was added (0 if none).
    pub last_discovery: u64,
    /// The step cap was reached before the patience window closed.
    pub capped: bool,
}

/// Adds a coordinate whenever one of its flips changes the label, and stops
/// once `patience` consecutive steps bring nothing new or after `cap` steps.
pub fn baseline_support_recovery(f: &BooleanFunction, walk: &mut Walk, patience: u64, cap: u64) -> Result<BaselineResult> {
    if walk.config().dim != f.dim() {
        return Err(invalid!("walk dimension differs from function dimension"));
    }
    if patience == 0 {
        return Err(invalid!("patience must be positive"));
    }
    let mut found = vec![false; f.dim()];
    let mut y = f.value(walk.current());
    let start = walk.step_count();
    let mut last_discovery = 0;
    let mut quiet = 0;
    loop {
        let used = walk.step_count() - start;
        if quiet >= patience {
            break;
        }
        if used >= cap {
            return Ok(BaselineResult {
                support: collect_found(&found),
                steps: used,
                last_discovery,
                capped: true,
            });
        }
        let mv = walk.step();
        quiet += 1;
        if mv.flipped {
            let y_new = f.value(walk.current());
            let j = mv.coordinate() - 1;
            if y_new != y && !found[j] {
                found[j] = true;
                last_discovery = walk.step_count() - start;
                quiet = 0;
            }
            y = y_new;
        }
    }
    Ok(BaselineResult {
        support: collect_found(&found),
        steps: walk.step_count() - start,
        last_discovery,
        capped: false,
    })
}

fn collect_found(found: &[bool]) -> Vec<usize> {
    found.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i + 1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpMethod {
    Exact,
    Mc,
    RwBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: CpMethod,
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `CP` of the orbit of a k-parity under coordinate permutations,
/// `1 / C(d, k)`.
pub fn cp_exact_parity_orbit(dim: usize, k: usize) -> Result<f64> {
    if k == 0 || k > dim {
        return Err(invalid!("need 1 ≤ k ≤ d, got k = {k}, d = {dim}"));
    }
    Ok(1.0 / binomial(dim, k))
}

fn check_orbit_args(dim: usize, k: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(invalid!("need 1 ≤ k ≤ d, got k = {k}, d = {dim}"));
    }
    Ok(())
}

/// `e_k(z) / C(d, k)` with `z = x ∘ x'`, the average of `χ_S(x)χ_S(x')` over
/// all `|S| = k`.
pub fn orbit_kernel_parity(x: &[i8], x2: &[i8], k: usize) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(invalid!("points have dimensions {} and {}", x.len(), x2.len()));
    }
    check_orbit_args(x.len(), k)?;
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (a, b) in x.iter().zip(x2) {
        let z = (a * b) as f64;
        for j in (1..=k).rev() {
            e[j] += z * e[j - 1];
        }
    }
    Ok(e[k] / binomial(x.len(), k))
}

pub trait Kernel: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[i8], x2: &[i8]) -> f64;
}

/// The parity-orbit kernel tabulated by Hamming distance.
#[derive(Debug, Clone)]
pub struct ParityOrbitKernel {
    dim: usize,
    by_distance: Vec<f64>,
}

impl ParityOrbitKernel {
    pub fn new(dim: usize, k: usize) -> Result<Self> {
        check_orbit_args(dim, k)?;
        let by_distance = (0..=dim)
            .map(|m| {
                let x = vec![1i8; dim];
                let mut y = x.clone();
                y[..m].iter_mut().for_each(|v| *v = -1);
                orbit_kernel_parity(&x, &y, k)
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim, by_distance })
    }
}

impl Kernel for ParityOrbitKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[i8], x2: &[i8]) -> f64 {
        self.by_distance[crate::boolfn::hamming(x, x2)]
    }
}

/// `E_{x,x'}[K(x, x')²]` over independent uniform pairs; equals `CP`.
pub fn cp_mc(kernel: &impl Kernel, n: usize, seed: u64) -> Result<CpEstimate> {
    if n < 2 {
        return Err(invalid!("need at least two samples"));
    }
    let mut rng = rng::stream(seed, Stream::MonteCarlo);
    let d = kernel.dim();
    let (mut x, mut y) = (vec![0i8; d], vec![0i8; d]);
    let v: Vec<f64> = (0..n)
        .map(|_| {
            fill_uniform(&mut rng, &mut x);
            fill_uniform(&mut rng, &mut y);
            kernel.eval(&x, &y).powi(2)
        })
        .collect();
    let e = mean_se(&v);
    Ok(CpEstimate {
        value: e.value,
        std_error: e.std_error,
        method: CpMethod::Mc,
    })
}

/// `E[(1/B²) Σ_{i,j} K(x_i, x_j)²]` over `n_outer` stationary walk batches
/// of `B` consecutive points.
pub fn cp_rw_batch(kernel: &impl Kernel, flip_prob: f64, batch: usize, n_outer: usize, seed: u64) -> Result<CpEstimate> {
    if batch == 0 || n_outer < 2 {
        return Err(invalid!("need B ≥ 1 and at least two outer replicas"));
    }
    let d = kernel.dim();
    WalkConfig::new(d, flip_prob, seed)?;
    let vals: Vec<f64> = (0..n_outer as u64)
        .into_par_iter()
        .map(|r| {
            let mut walk = Walk::new(WalkConfig {
                dim: d,
                flip_prob,
                seed: rng::sub_seed(seed, r),
            })
            .expect("validated");
            let mut pts = Vec::with_capacity(batch);
            pts.push(walk.current().to_vec());
            while pts.len() < batch {
                walk.step();
                pts.push(walk.current().to_vec());
            }
            let mut total = 0.0;
            for i in 0..batch {
                total += kernel.eval(&pts[i], &pts[i]).powi(2);
                for j in i + 1..batch {
                    total += 2.0 * kernel.eval(&pts[i], &pts[j]).powi(2);
                }
            }
            total / (batch * batch) as f64
        })
        .collect();
    let e = mean_se(&vals);
    Ok(CpEstimate {
        value: e.value,
        std_error: e.std_error,
        method: CpMethod::RwBatch,
    })
}

/// `½ + (T√M·A)/(2τ) · (cp + d/(pB))^{1/4}`.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound_rhs(t: f64, m: f64, a: f64, tau_noise: f64, cp: f64, dim: f64, flip_prob: f64, batch: f64) -> Result<f64> {
    if [m, a, tau_noise, dim, flip_prob, batch].iter().any(|v| !(*v > 0.0)) || !(t >= 0.0) || !(cp >= 0.0) {
        return Err(invalid!("lower bound needs T ≥ 0, cp ≥ 0 and all other arguments positive"));
    }
    Ok(0.5 + t * m.sqrt() * a / (2.0 * tau_noise) * (cp + dim / (flip_prob * batch)).powf(0.25))
}

/// The observable `φ_v(x, y) = (f(y) − f(x))·Σ_j (y_j − x_j) v_j` on edges of
/// the support chain, with `v = s − r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiObservable {
    k: usize,
    table: Vec<f64>,
    v: Vec<i8>,
    coeffs: Vec<f64>,
    influences: Vec<f64>,
}

impl PhiObservable {
    /// `s` and `r` are sign patterns over the support (in support order).
    pub fn new(f: &BooleanFunction, s: &[i8], r: &[i8]) -> Result<Self> {
        let k = f.support_size();
        if k == 0 {
            return Err(invalid!("φ needs a non-constant function"));
        }
        if k > MAX_TABLE_SUPPORT {
            return Err(Error::Capacity(format!("support of size {k} exceeds {MAX_TABLE_SUPPORT}")));
        }
        if s.len() != k || r.len() != k || s.iter().chain(r).any(|&v| v != 1 && v != -1) {
            return Err(invalid!("s and r must be ±1 patterns of length {k}"));
        }
        let table = f.support_table()?;
        let idx = |p: &[i8]| p.iter().fold(0usize, |m, &v| (m << 1) | usize::from(v > 0));
        let (fs, fr) = (table[idx(s)], table[idx(r)]);
        if (fs - fr).abs() <= 1e-12 * fs.abs().max(fr.abs()).max(1.0) {
            return Err(invalid!("f̃(s) = f̃(r); the direction carries no signal"));
        }
        let support = f.support_indices();
        let coeffs = support
            .iter()
            .map(|&j| f.coefficient(&Subset::from_indices(vec![j])))
            .collect();
        let influences = support.iter().map(|&j| f.influence_index(j)).collect();
        Ok(Self {
            k,
            table,
            v: s.iter().zip(r).map(|(a, b)| a - b).collect(),
            coeffs,
            influences,
        })
    }

    pub fn support_size(&self) -> usize {
        self.k
    }

    pub fn direction(&self) -> &[i8] {
        &self.v
    }

    /// `φ_v` on an edge of pattern indices.
    pub fn eval(&self, from: u32, to: u32) -> f64 {
        let df = self.table[to as usize] - self.table[from as usize];
        if df == 0.0 {
            return 0.0;
        }
        let (k, a, b) = (self.k, from as usize, to as usize);
        let proj: i32 = (0..k)
            .map(|i| (pattern_sign(b, i, k) - pattern_sign(a, i, k)) as i32 * self.v[i] as i32)
            .sum();
        df * proj as f64
    }

    /// `(4p/k) Σ_j v_j f̂_j`.
    pub fn mean_formula(&self, flip_prob: f64) -> f64 {
        4.0 * flip_prob / self.k as f64 * self.v.iter().zip(&self.coeffs).map(|(&v, c)| v as f64 * c).sum::<f64>()
    }

    /// `(64p/k) Σ_{v_j ≠ 0} Inf_j`.
    pub fn second_moment_formula(&self, flip_prob: f64) -> f64 {
        64.0 * flip_prob / self.k as f64
            * self
                .v
                .iter()
                .zip(&self.influences)
                .filter(|(&v, _)| v != 0)
                .map(|(_, i)| i)
                .sum::<f64>()
    }

    /// One-step conditional mean `h(u) = E[φ(u, U₁) | U₀ = u]`.
    fn one_step_mean(&self, flip_prob: f64) -> Vec<f64> {
        let w = flip_prob / self.k as f64;
        (0..1u32 << self.k)
            .map(|u| (0..self.k).map(|j| w * self.eval(u, u ^ (1 << j))).sum())
            .collect()
    }

    /// Stationary mean, second moment, variance, and asymptotic variance
    /// of the additive functional, by enumeration over edges.
    pub fn exact_moments(&self, flip_prob: f64) -> Result<ExactPhiMoments> {
        if self.k > crate::shallow::MAX_ENUM_COORDS {
            return Err(Error::Capacity(format!("edge enumeration needs k ≤ {}", crate::shallow::MAX_ENUM_COORDS)));
        }
        check_flip(flip_prob)?;
        let n = 1u32 << self.k;
        let w = flip_prob / self.k as f64 / n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for u in 0..n {
            for j in 0..self.k {
                let phi = self.eval(u, u ^ (1 << j));
                m1 += w * phi;
                m2 += w * phi * phi;
            }
        }
        let var = m2 - m1 * m1;
        // σ² = Var φ + 2 Σ_{t≥1} Cov(φ₀, φ_t); by reversibility and symmetry
        // of φ the lag-t covariance is ⟨h̄, P^{t−1} h̄⟩, summed in the
        // character basis where P has eigenvalue 1 − 2p|S|/k
        let mut h = self.one_step_mean(flip_prob);
        walsh_hadamard(&mut h);
        let tail: f64 = h
            .iter()
            .enumerate()
            .skip(1)
            .map(|(mask, &raw)| {
                let c = raw / n as f64;
                c * c * self.k as f64 / (2.0 * flip_prob * mask.count_ones() as f64)
            })
            .sum();
        Ok(ExactPhiMoments {
            mean: m1,
            second_moment: m2,
            variance: var,
            sigma_sq: var + 2.0 * tail,
        })
    }

    /// Distinct values of `φ` on edges as integer multiples of a common
    /// unit, when such a unit exists.
    fn lattice(&self) -> Option<(f64, Vec<(u32, u32, i64)>)> {
        let n = 1u32 << self.k;
        let mut edges = Vec::new();
        let mut unit = f64::INFINITY;
        for u in 0..n {
            for j in 0..self.k {
                let phi = self.eval(u, u ^ (1 << j));
                if phi != 0.0 {
                    unit = unit.min(phi.abs());
                }
                edges.push((u, u ^ (1 << j), phi));
            }
        }
        if !unit.is_finite() {
            return None;
        }
        let mut out = Vec::with_capacity(edges.len());
        for (u, v, phi) in edges {
            let q = phi / unit;
            if (q - q.round()).abs() > 1e-9 || q.abs() > 64.0 {
                return None;
            }
            out.push((u, v, q.round() as i64));
        }
        Some((unit, out))
    }
}

fn check_flip(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid!("flip probability {p} not in (0, 1)"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactPhiMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// Asymptotic variance of `√T·Ȳ_T`.
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiMoments {
    pub mean_formula: f64,
    pub second_moment_formula: f64,
    pub exact: Option<ExactPhiMoments>,
    pub empirical_mean: Estimate,
    pub empirical_second_moment: Estimate,
    /// Batch-means estimate of the asymptotic variance.
    pub batch_sigma_sq: Estimate,
    pub batch_len: usize,
    pub n_steps: usize,
}

impl PhiMoments {
    /// Whether `Var ≤ σ̂² ≤ 2(k/p) Var` holds within `z` standard errors.
    pub fn sandwich_holds(&self, k: usize, flip_prob: f64, z: f64) -> Option<bool> {
        let var = self.exact?.variance;
        let s = self.batch_sigma_sq;
        Some(s.value + z * s.std_error >= var && s.value - z * s.std_error <= 2.0 * k as f64 / flip_prob * var)
    }
}

/// Batch length `⌈10k²/p⌉` used by the batch-means estimator.
pub fn batch_length(k: usize, flip_prob: f64) -> usize {
    (10.0 * (k * k) as f64 / flip_prob).ceil() as usize
}

/// Batch-means estimate of `lim T·Var(mean of T values)`.
fn batch_means(values: &[f64], len: usize) -> Result<(Estimate, Estimate)> {
    let m = values.len() / len;
    if m < 2 {
        return Err(invalid!("need at least two batches of length {len}, have {} values", values.len()));
    }
    let means: Vec<f64> = values[..m * len]
        .chunks_exact(len)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let e = mean_se(&means);
    let sigma_sq = e.std_error.powi(2) * m as f64 * len as f64;
    let sigma_se = sigma_sq * (2.0 / (m as f64 - 1.0)).sqrt();
    Ok((
        e,
        Estimate {
            value: sigma_sq,
            std_error: sigma_se,
        },
    ))
}

pub fn phi_moments(obs: &PhiObservable, flip_prob: f64, n_steps: usize, seed: u64) -> Result<PhiMoments> {
    check_flip(flip_prob)?;
    let k = obs.support_size();
    let len = batch_length(k, flip_prob);
    let mut walk = EdgeWalk::new(k, flip_prob, seed)?;
    let mut vals = Vec::with_capacity(n_steps);
    let mut sq = Vec::with_capacity(n_steps);
    let mut e = walk.state();
    for _ in 0..n_steps {
        let phi = obs.eval(e.from, e.to);
        vals.push(phi);
        sq.push(phi * phi);
        e = walk.advance();
    }
    let (mean, sigma) = batch_means(&vals, len)?;
    let (second, _) = batch_means(&sq, len)?;
    let exact = if k <= crate::shallow::MAX_ENUM_COORDS {
        Some(obs.exact_moments(flip_prob)?)
    } else {
        None
    };
    Ok(PhiMoments {
        mean_formula: obs.mean_formula(flip_prob),
        second_moment_formula: obs.second_moment_formula(flip_prob),
        exact,
        empirical_mean: mean,
        empirical_second_moment: second,
        batch_sigma_sq: sigma,
        batch_len: len,
        n_steps,
    })
}

/// Kolmogorov distance between the empirical law of `samples` and `N(0,1)`.
pub fn ks_distance_normal(samples: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &z)| {
            let c = normal.cdf(z);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

/// Exact law of `Σ_{t=1}^T φ(U_{t−1}, U_t)` from a stationary start, as
/// `(sum, probability)` pairs; `None` if the values of `φ` do not lie on a
/// lattice. Mass beyond `±width_sd` standard deviations is dropped.
pub fn exact_sum_law(obs: &PhiObservable, flip_prob: f64, t: usize, width_sd: f64) -> Result<Option<Vec<(f64, f64)>>> {
    check_flip(flip_prob)?;
    let Some((unit, edges)) = obs.lattice() else {
        return Ok(None);
    };
    let moments = obs.exact_moments(flip_prob)?;
    let k = obs.support_size();
    let n = 1usize << k;
    let max_q = edges.iter().map(|e| e.2.unsigned_abs()).max().unwrap_or(0) as i64;
    let drift = moments.mean / unit * t as f64;
    let spread = width_sd * (moments.sigma_sq.max(moments.variance) * t as f64).sqrt() / unit + 2.0 * max_q as f64;
    let lo = (drift - spread).floor().max(-(max_q * t as i64) as f64) as i64;
    let hi = (drift + spread).ceil().min((max_q * t as i64) as f64) as i64;
    let width = (hi - lo + 1) as usize;
    let stay = 1.0 - flip_prob;
    let mv = flip_prob / k as f64;
    let mut cur = vec![0.0; n * width];
    let mut next = vec![0.0; n * width];
    let zero = (-lo) as usize;
    for u in 0..n {
        cur[u * width + zero] = 1.0 / n as f64;
    }
    let mut reach = 0i64;
    for _ in 0..t {
        reach = (reach + max_q).min(hi.max(-lo));
        let (a, b) = ((-reach).max(lo), reach.min(hi));
        next.iter_mut().for_each(|v| *v = 0.0);
        for u in 0..n {
            for s in a..=b {
                let p = cur[u * width + (s - lo) as usize];
                if p == 0.0 {
                    continue;
                }
                next[u * width + (s - lo) as usize] += stay * p;
                for j in 0..k {
                    let (_, v, q) = edges[u * k + j];
                    let s2 = s + q;
                    if s2 >= lo && s2 <= hi {
                        next[v as usize * width + (s2 - lo) as usize] += mv * p;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let law = (0..width)
        .map(|i| {
            let p: f64 = (0..n).map(|u| cur[u * width + i]).sum();
            ((i as i64 + lo) as f64 * unit, p)
        })
        .filter(|(_, p)| *p > 0.0)
        .collect();
    Ok(Some(law))
}

/// Kolmogorov distance of `(S_T − T·m)/(σ√T)` to `N(0,1)` for the exact law.
pub fn exact_ks_distance(obs: &PhiObservable, flip_prob: f64, t: usize) -> Result<Option<f64>> {
    let Some(law) = exact_sum_law(obs, flip_prob, t, 14.0)? else {
        return Ok(None);
    };
    let m = obs.exact_moments(flip_prob)?;
    let scale = (m.sigma_sq * t as f64).sqrt();
    if !(scale > 0.0) {
        return Err(invalid!("degenerate asymptotic variance"));
    }
    let normal = Normal::standard();
    let mut cdf = 0.0;
    let mut dist = 0.0f64;
    for (s, p) in law {
        let z = (s - m.mean * t as f64) / scale;
        let g = normal.cdf(z);
        dist = dist.max((cdf - g).abs());
        cdf += p;
        dist = dist.max((cdf - g).abs());
    }
    Ok(Some(dist))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub t: usize,
    pub n_replicas: usize,
    pub sigma_hat: f64,
    pub ks_distance: f64,
    pub ks_distance_16t: f64,
    pub exact_distance: Option<f64>,
    pub exact_distance_16t: Option<f64>,
    pub ceiling: f64,
    pub pass: bool,
}

impl CltReport {
    /// Ratio of the distance at `T` to the distance at `16T`, exact when
    /// available.
    pub fn shrink_ratio(&self) -> f64 {
        match (self.exact_distance, self.exact_distance_16t) {
            (Some(a), Some(b)) => a / b,
            _ => self.ks_distance / self.ks_distance_16t,
        }
    }
}

/// Replicas of `√T(Ȳ_T − m)/σ̂` from independent stationary edge walks.
pub fn standardized_replicas(obs: &PhiObservable, flip_prob: f64, t: usize, n_replicas: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let k = obs.support_size();
    EdgeWalk::new(k, flip_prob, seed)?;
    let m = obs.mean_formula(flip_prob);
    Ok((0..n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut walk = EdgeWalk::new(k, flip_prob, rng::sub_seed(seed, r)).expect("validated");
            let mut e = walk.state();
            let mut total = 0.0;
            for i in 0..t {
                total += obs.eval(e.from, e.to);
                if i + 1 < t {
                    e = walk.advance();
                }
            }
            (total / t as f64 - m) * (t as f64).sqrt() / sigma
        })
        .collect())
}

/// Empirical Gaussian-approximation check at `T` and `16T`.
///
/// `σ` is estimated by batch means on an independent calibration stream.
/// The check passes when the distance at `T` is below `ceiling` and the
/// distance shrinks by a factor in `[2, 8]` from `T` to `16T`, using the
/// exact law when `φ` is lattice-valued and the Monte-Carlo distances
/// otherwise (where only a decrease is required).
pub fn clt_check(obs: &PhiObservable, flip_prob: f64, t: usize, n_replicas: usize, seed: u64, ceiling: f64) -> Result<CltReport> {
    if t == 0 || n_replicas < 2 {
        return Err(invalid!("need T ≥ 1 and at least two replicas"));
    }
    let k = obs.support_size();
    let len = batch_length(k, flip_prob);
    let calib = phi_moments(obs, flip_prob, (2000 * len).max(1_000_000), rng::sub_seed(seed, u64::MAX))?;
    let sigma = calib.batch_sigma_sq.value.sqrt();
    if !(sigma > 0.0) {
        return Err(invalid!("estimated asymptotic variance is zero"));
    }
    let ks = ks_distance_normal(&standardized_replicas(obs, flip_prob, t, n_replicas, sigma, seed)?);
    let ks16 = ks_distance_normal(&standardized_replicas(
        obs,
        flip_prob,
        16 * t,
        n_replicas,
        sigma,
        rng::sub_seed(seed, u64::MAX - 1),
    )?);
    let exact = exact_ks_distance(obs, flip_prob, t)?;
    let exact16 = exact_ks_distance(obs, flip_prob, 16 * t)?;
    let rate_ok = match (exact, exact16) {
        (Some(a), Some(b)) => (2.0..=8.0).contains(&(a / b)),
        _ => ks16 < ks,
    };
    Ok(CltReport {
        t,
        n_replicas,
        sigma_hat: sigma,
        ks_distance: ks,
        ks_distance_16t: ks16,
        exact_distance: exact,
        exact_distance_16t: exact16,
        ceiling,
        pass: ks < ceiling && rate_ok,
    })
}

/// Uniform random pair of patterns `(s, r)` with `f̃(s) ≠ f̃(r)`.
pub fn random_direction(f: &BooleanFunction, seed: u64) -> Result<(Vec<i8>, Vec<i8>)> {
    let k = f.support_size();
    let table = f.support_table()?;
    if table.iter().all(|&v| v == table[0]) {
        return Err(invalid!("constant function has no informative direction"));
    }
    let mut rng = rng::stream(seed, Stream::MonteCarlo);
    loop {
        let (s, r) = (rng.gen_range(0..table.len()), rng.gen_range(0..table.len()));
        if (table[s] - table[r]).abs() > 1e-12 {
            let pat = |m: usize| (0..k).map(|i| pattern_sign(m, i, k)).collect::<Vec<_>>();
            return Ok((pat(s), pat(r)));
        }
    }
}
