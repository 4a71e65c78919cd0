//! Two-layer ReLU network trained layerwise with the TD loss.
//!
//! Phase I starts from `w = 0, a = κ, b = 1/N` and takes `T₁` large-batch
//! steps on the first layer with the increment-only loss (`α = 1`). The
//! biases are then redrawn uniformly on `[−A, A]` and Phase II runs
//! single-sample ridge-regularised SGD on the output weights while the walk
//! keeps going.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{uniform_mse_exact, Predictor};
use crate::boolfn::{write_pattern, BooleanFunction, HypercubePoint};
use crate::error::{invalid, Error, Result};
use crate::loss::{td_loss_output_grads, TdParams};
use crate::record::{hexfloat, RunRecord};
use crate::rng::{self, Stream};
use crate::walk::{PairSample, Walk, WalkConfig, WalkSnapshot};

/// Largest number of relevant coordinates for exhaustive pattern routines.
pub const MAX_ENUM_COORDS: usize = 12;

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// `NN(x) = Σ_i a_i ReLU(w_iᵀx + b_i)` with `w` stored row-major (`N × d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    n_hidden: usize,
    dim: usize,
    #[serde(with = "hexfloat")]
    w: Vec<f64>,
    #[serde(with = "hexfloat")]
    a: Vec<f64>,
    #[serde(with = "hexfloat")]
    b: Vec<f64>,
}

impl TwoLayerNet {
    pub fn new(dim: usize, w: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if n == 0 || dim == 0 {
            return Err(invalid!("network needs at least one unit and one input"));
        }
        if b.len() != n || w.len() != n * dim {
            return Err(invalid!("inconsistent shapes: w {}, a {}, b {}", w.len(), n, b.len()));
        }
        if w.iter().chain(&a).chain(&b).any(|v| !v.is_finite()) {
            return Err(invalid!("network parameters must be finite"));
        }
        Ok(Self {
            n_hidden: n,
            dim,
            w,
            a,
            b,
        })
    }

    /// `w = 0`, `a = κ`, `b = 1/N`.
    pub fn algorithm1_init(n_hidden: usize, dim: usize, kappa: f64) -> Result<Self> {
        if n_hidden == 0 {
            return Err(invalid!("need at least one hidden unit"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid!("init scale must be positive, got {kappa}"));
        }
        Self::new(
            dim,
            vec![0.0; n_hidden * dim],
            vec![kappa; n_hidden],
            vec![1.0 / n_hidden as f64; n_hidden],
        )
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.a
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }

    pub fn set_output_weights(&mut self, a: Vec<f64>) -> Result<()> {
        if a.len() != self.n_hidden {
            return Err(invalid!("expected {} output weights, got {}", self.n_hidden, a.len()));
        }
        self.a = a;
        Ok(())
    }

    pub fn set_biases(&mut self, b: Vec<f64>) -> Result<()> {
        if b.len() != self.n_hidden {
            return Err(invalid!("expected {} biases, got {}", self.n_hidden, b.len()));
        }
        self.b = b;
        Ok(())
    }

    pub fn forward(&self, x: &HypercubePoint) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(invalid!("point has dimension {}, network has {}", x.dim(), self.dim));
        }
        Ok(self.value(x.as_slice()))
    }

    pub fn value(&self, x: &[i8]) -> f64 {
        (0..self.n_hidden)
            .map(|i| self.a[i] * relu(pre_activation(self.row(i), x) + self.b[i]))
            .sum()
    }

    /// Hidden features `Φ(x)_i = ReLU(w_iᵀx + b_i)`.
    pub fn features(&self, x: &[i8]) -> Vec<f64> {
        (0..self.n_hidden)
            .map(|i| relu(pre_activation(self.row(i), x) + self.b[i]))
            .collect()
    }

    /// 0-indexed input coordinates with a nonzero first-layer weight.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&j| (0..self.n_hidden).any(|i| self.w[i * self.dim + j] != 0.0))
            .collect()
    }

    pub fn rows_identical(&self) -> bool {
        (1..self.n_hidden).all(|i| self.row(i) == self.row(0))
    }

    /// `max_i ‖w_i‖₁`.
    pub fn max_row_l1(&self) -> f64 {
        (0..self.n_hidden)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Upper bound on `max_x ‖Φ(x)‖₂`, tight when all rows coincide.
    pub fn feature_norm_bound(&self) -> f64 {
        (0..self.n_hidden)
            .map(|i| {
                let l1: f64 = self.row(i).iter().map(|v| v.abs()).sum();
                relu(l1 + self.b[i]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Gradient of the TD loss on one pair with respect to `(w, a, b)`.
    pub fn td_gradient(&self, prev: &[i8], next: &[i8], y_prev: f64, y_next: f64, params: TdParams) -> Result<TwoLayerGrads> {
        if prev.len() != self.dim || next.len() != self.dim {
            return Err(invalid!("pair dimension differs from network dimension {}", self.dim));
        }
        let n = self.n_hidden;
        let z = |x: &[i8]| -> Vec<f64> { (0..n).map(|i| pre_activation(self.row(i), x) + self.b[i]).collect() };
        let (zp, zn) = (z(prev), z(next));
        let out = |z: &[f64]| -> f64 { (0..n).map(|i| self.a[i] * relu(z[i])).sum() };
        let (gp, gn) = td_loss_output_grads(params, y_prev, y_next, out(&zp), out(&zn));
        let mut g = TwoLayerGrads {
            w: vec![0.0; n * self.dim],
            a: vec![0.0; n],
            b: vec![0.0; n],
        };
        for (x, zs, go) in [(prev, &zp, gp), (next, &zn, gn)] {
            for i in 0..n {
                g.a[i] += go * relu(zs[i]);
                if zs[i] >= 0.0 {
                    let c = go * self.a[i];
                    g.b[i] += c;
                    for (gw, &s) in g.w[i * self.dim..(i + 1) * self.dim].iter_mut().zip(x) {
                        *gw += c * s as f64;
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<f64> {
        self.w.iter().chain(&self.a).chain(&self.b).copied().collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let (nw, n) = (self.w.len(), self.n_hidden);
        if flat.len() != nw + 2 * n {
            return Err(invalid!("expected {} parameters, got {}", nw + 2 * n, flat.len()));
        }
        self.w.copy_from_slice(&flat[..nw]);
        self.a.copy_from_slice(&flat[nw..nw + n]);
        self.b.copy_from_slice(&flat[nw + n..]);
        Ok(())
    }

    fn add_to_rows(&mut self, update: &[Vec<f64>]) {
        for (i, u) in update.iter().enumerate() {
            for (w, du) in self.w[i * self.dim..(i + 1) * self.dim].iter_mut().zip(u) {
                *w += du;
            }
        }
    }

    /// Replaces the biases with i.i.d. draws from `Unif[−A, A]`.
    pub fn redraw_biases(&mut self, range: f64, seed: u64) -> Result<()> {
        use rand::Rng as _;
        if !(range > 0.0 && range.is_finite()) {
            return Err(invalid!("bias range must be positive, got {range}"));
        }
        let mut rng = rng::stream(seed, Stream::BiasRedraw);
        for b in &mut self.b {
            *b = rng.gen_range(-range..=range);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerGrads {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TwoLayerGrads {
    /// Flattened in the order of [`TwoLayerNet::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.w.iter().chain(&self.a).chain(&self.b).copied().collect()
    }
}

fn pre_activation(row: &[f64], x: &[i8]) -> f64 {
    row.iter().zip(x).map(|(w, &s)| w * s as f64).sum()
}

impl Predictor for TwoLayerNet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[i8]) -> f64 {
        self.value(x)
    }

    fn relevant_coordinates(&self) -> Option<Vec<usize>> {
        Some(self.active_columns())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase1Config {
    pub batch_size: usize,
    pub lr: f64,
    pub kappa: f64,
    pub steps: usize,
}

impl Phase1Config {
    /// `B = ⌈d/ε²⌉`, `γ₁ = √(2Bd)/(κ√k)`, `T₁ = 1`.
    pub fn theorem_scaled(dim: usize, k: usize, kappa: f64, epsilon: f64) -> Self {
        let batch_size = (dim as f64 / (epsilon * epsilon)).ceil() as usize;
        let lr = (2.0 * batch_size as f64 * dim as f64).sqrt() / (kappa * (k.max(1) as f64).sqrt());
        Self {
            batch_size,
            lr,
            kappa,
            steps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(invalid!("phase I needs B ≥ 1 and T₁ ≥ 1"));
        }
        if !(self.lr > 0.0 && self.kappa > 0.0) {
            return Err(invalid!("phase I needs γ₁ > 0 and κ > 0"));
        }
        Ok(())
    }

    /// Effective step `η = κγ₁/B` multiplying the increment sums.
    pub fn eta(&self) -> f64 {
        self.kappa * self.lr / self.batch_size as f64
    }

    /// Default non-degeneracy threshold, a tenth of the smallest nonzero
    /// per-pair contribution `4η`.
    pub fn default_margin_epsilon(&self) -> f64 {
        0.1 * 4.0 * self.eta()
    }
}

fn check_consecutive(pairs: &[PairSample], batch_size: usize) -> Result<()> {
    if pairs.len() != batch_size {
        return Err(invalid!("batch has {} pairs, configured B = {batch_size}", pairs.len()));
    }
    for (t, w) in pairs.windows(2).enumerate() {
        if w[0].next != w[1].prev {
            return Err(invalid!("pairs {t} and {} are not consecutive", t + 1));
        }
    }
    if pairs.iter().any(|p| crate::boolfn::hamming(&p.prev, &p.next) > 1) {
        return Err(invalid!("pair endpoints differ in more than one coordinate"));
    }
    Ok(())
}

/// Closed-form first-layer update at the Algorithm-1 init,
/// `G = (κγ₁/B) Σ_t (x^{(t)} − x^{(t−1)}) Δf^{(t)}`.
pub fn phase1_closed_form_update(pairs: &[PairSample], cfg: &Phase1Config) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_consecutive(pairs, cfg.batch_size)?;
    let dim = pairs.first().map_or(0, |p| p.prev.len());
    let mut g = vec![0.0; dim];
    for p in pairs {
        let df = p.y_next - p.y_prev;
        for (j, gj) in g.iter_mut().enumerate() {
            *gj += (p.next[j] - p.prev[j]) as f64 * df;
        }
    }
    let eta = cfg.eta();
    for gj in &mut g {
        *gj *= eta;
    }
    Ok(g)
}

/// First-layer update `−(γ₁/B) Σ_t ∇_w L₁^TD` obtained by backpropagating
/// the increment loss through the network (ReLU subgradient `1{z ≥ 0}`).
/// Returns one row per hidden unit.
pub fn phase1_autograd_update(net: &TwoLayerNet, pairs: &[PairSample], cfg: &Phase1Config) -> Result<Vec<Vec<f64>>> {
    phase1_backprop(net, pairs, cfg).map(|(rows, _)| rows)
}

/// As [`phase1_autograd_update`], also returning the mean batch loss.
/// Units with identical parameters share one gradient computation.
fn phase1_backprop(net: &TwoLayerNet, pairs: &[PairSample], cfg: &Phase1Config) -> Result<(Vec<Vec<f64>>, f64)> {
    cfg.validate()?;
    check_consecutive(pairs, cfg.batch_size)?;
    if pairs.iter().any(|p| p.prev.len() != net.dim) {
        return Err(invalid!("pair dimension differs from network dimension {}", net.dim));
    }
    let same = |i: usize, j: usize| net.a[i] == net.a[j] && net.b[i] == net.b[j] && net.row(i) == net.row(j);
    let mut reps: Vec<usize> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut group_of = Vec::with_capacity(net.n_hidden);
    for i in 0..net.n_hidden {
        match reps.iter().position(|&r| same(r, i)) {
            Some(g) => {
                counts[g] += 1.0;
                group_of.push(g);
            }
            None => {
                reps.push(i);
                counts.push(1.0);
                group_of.push(reps.len() - 1);
            }
        }
    }

    let params = TdParams::increments_only();
    let mut grad = vec![vec![0.0; net.dim]; reps.len()];
    let mut pre_prev = vec![0.0; reps.len()];
    let mut pre_next = vec![0.0; reps.len()];
    let mut loss = 0.0;
    for p in pairs {
        for (g, &i) in reps.iter().enumerate() {
            pre_prev[g] = pre_activation(net.row(i), &p.prev) + net.b[i];
            pre_next[g] = pre_activation(net.row(i), &p.next) + net.b[i];
        }
        let out = |pre: &[f64]| -> f64 { reps.iter().enumerate().map(|(g, &i)| counts[g] * net.a[i] * relu(pre[g])).sum() };
        let (out_prev, out_next) = (out(&pre_prev), out(&pre_next));
        loss += crate::loss::td_loss(params, p.y_prev, p.y_next, out_prev, out_next);
        let (g_prev, g_next) = td_loss_output_grads(params, p.y_prev, p.y_next, out_prev, out_next);
        for (g, gi) in grad.iter_mut().enumerate() {
            let a = net.a[reps[g]];
            let cp = if pre_prev[g] >= 0.0 { g_prev * a } else { 0.0 };
            let cn = if pre_next[g] >= 0.0 { g_next * a } else { 0.0 };
            if cp == 0.0 && cn == 0.0 {
                continue;
            }
            for (j, gij) in gi.iter_mut().enumerate() {
                *gij += cp * p.prev[j] as f64 + cn * p.next[j] as f64;
            }
        }
    }
    let scale = -cfg.lr / cfg.batch_size as f64;
    for gi in &mut grad {
        for v in gi.iter_mut() {
            *v *= scale;
        }
    }
    let rows = group_of.iter().map(|&g| grad[g].clone()).collect();
    Ok((rows, loss / pairs.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondegeneracyReport {
    /// `min |Σ_j w_j (s_j − r_j)|` over support patterns with `f̃(s) ≠ f̃(r)`;
    /// infinite when `f̃` is constant.
    pub min_margin: f64,
    /// Closest value-distinguishing pair, reported when `min_margin ≤ ε`.
    pub violating_pair: Option<(Vec<i8>, Vec<i8>)>,
    pub epsilon: f64,
}

impl NondegeneracyReport {
    pub fn is_nondegenerate(&self) -> bool {
        self.min_margin > self.epsilon
    }
}

const VALUE_TOL: f64 = 1e-9;

/// Margin of the projection `s ↦ ⟨w_S, s⟩` over value-distinguishing
/// support patterns. Needs ground-truth support; a diagnostic only.
pub fn check_nondegeneracy(w_row: &[f64], f: &BooleanFunction, epsilon: f64) -> Result<NondegeneracyReport> {
    if w_row.len() != f.dim() {
        return Err(invalid!("weight row has length {}, function dimension {}", w_row.len(), f.dim()));
    }
    let support = f.support_indices();
    let k = support.len();
    if k > MAX_ENUM_COORDS {
        return Err(Error::Capacity(format!("non-degeneracy check needs k ≤ {MAX_ENUM_COORDS}, got {k}")));
    }
    let table = f.support_table()?;
    let n = 1usize << k;
    let proj: Vec<f64> = (0..n)
        .map(|m| {
            (0..k)
                .map(|i| w_row[support[i]] * crate::boolfn::pattern_sign(m, i, k) as f64)
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| proj[x].total_cmp(&proj[y]).then(x.cmp(&y)));

    // nearest left neighbour with a different value is either the previous
    // element or the latest element whose value differs from the previous one
    let differs = |x: usize, y: usize| (table[x] - table[y]).abs() > VALUE_TOL * table[x].abs().max(1.0);
    let mut best = f64::INFINITY;
    let mut best_pair = None;
    let mut last: Option<usize> = None;
    let mut other: Option<usize> = None;
    for &m in &order {
        if let Some(l) = last {
            let cand = if differs(m, l) { Some(l) } else { other };
            if let Some(c) = cand {
                let gap = (proj[m] - proj[c]).abs();
                if gap < best {
                    best = gap;
                    best_pair = Some((m, c));
                }
            }
            if differs(m, l) {
                other = Some(l);
            }
        }
        last = Some(m);
    }
    let to_point = |m: usize| -> Vec<i8> { (0..k).map(|i| crate::boolfn::pattern_sign(m, i, k)).collect() };
    Ok(NondegeneracyReport {
        min_margin: best,
        violating_pair: if best <= epsilon {
            best_pair.map(|(s, r)| (to_point(s), to_point(r)))
        } else {
            None
        },
        epsilon,
    })
}

/// Feature matrix `Φ` over all patterns of the given 0-indexed coordinates.
fn feature_matrix(net: &TwoLayerNet, coords: &[usize]) -> DMatrix<f64> {
    let n = 1usize << coords.len();
    let mut x = vec![1i8; net.dim];
    let mut phi = DMatrix::zeros(n, net.n_hidden);
    for m in 0..n {
        write_pattern(m, coords, &mut x);
        for (i, v) in net.features(&x).into_iter().enumerate() {
            phi[(m, i)] = v;
        }
    }
    phi
}

fn relevant_union(net: &TwoLayerNet, f: &BooleanFunction) -> Result<Vec<usize>> {
    if net.dim != f.dim() {
        return Err(invalid!("network dimension {} differs from function dimension {}", net.dim, f.dim()));
    }
    let mut coords = net.active_columns();
    coords.extend_from_slice(f.support_indices());
    coords.sort_unstable();
    coords.dedup();
    if coords.len() > MAX_ENUM_COORDS {
        return Err(Error::Capacity(format!(
            "{} relevant coordinates exceed {MAX_ENUM_COORDS}",
            coords.len()
        )));
    }
    Ok(coords)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub a_star: Vec<f64>,
    /// `max_s |Φ(s)ᵀa* − f̃(s)|` over all relevant patterns.
    pub residual: f64,
}

/// Minimal-norm least-squares solution of `Φ a = f̃` over the frozen
/// features; a tiny residual certifies exact representability.
pub fn certificate_solve(net: &TwoLayerNet, f: &BooleanFunction) -> Result<Certificate> {
    let coords = relevant_union(net, f)?;
    let phi = feature_matrix(net, &coords);
    let target = DVector::from_vec(f.table_over(&coords)?);
    // min-norm solution from the SVD of the tall matrix Φᵀ = UΣVᵀ,
    // a = UΣ⁺Vᵀy, followed by iterative refinement on the residual
    let svd = phi.transpose().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v requested");
    let sv = &svd.singular_values;
    let tol = sv.max() * phi.ncols().max(phi.nrows()) as f64 * f64::EPSILON;
    let apply = |rhs: &DVector<f64>| -> DVector<f64> {
        // Φ = VΣUᵀ, so Φ⁺ = UΣ⁺Vᵀ
        let mut c = v_t * rhs;
        for (ci, &s) in c.iter_mut().zip(sv.iter()) {
            *ci = if s > tol { *ci / s } else { 0.0 };
        }
        u * c
    };
    let mut a = apply(&target);
    for _ in 0..3 {
        let r = &target - &phi * &a;
        a += apply(&r);
    }
    let residual = (&phi * &a - &target).amax();
    Ok(Certificate {
        a_star: a.as_slice().to_vec(),
        residual,
    })
}

/// Builds output weights from step functions `H_m` placed in the gaps
/// between consecutive distinct projected values where `f̃` changes.
///
/// Requires identical first-layer rows (the Algorithm-1 output) and, for
/// each gap, two distinct ReLU thresholds `−b̂_i` strictly inside it plus one
/// below the smallest projection. Returns `None` when the biases miss a gap
/// or the projection collapses two patterns with different values.
pub fn certificate_construct(net: &TwoLayerNet, f: &BooleanFunction) -> Result<Option<Vec<f64>>> {
    if !net.rows_identical() {
        return Err(invalid!("constructive certificate needs identical first-layer rows"));
    }
    let coords = relevant_union(net, f)?;
    let k = coords.len();
    let table = f.table_over(&coords)?;
    let row = net.row(0);
    let mut x = vec![1i8; net.dim];
    let mut points: Vec<(f64, f64)> = (0..1usize << k)
        .map(|m| {
            write_pattern(m, &coords, &mut x);
            (pre_activation(row, &x), table[m])
        })
        .collect();
    points.sort_by(|p, q| p.0.total_cmp(&q.0));

    // runs of constant value along the projection axis
    let mut runs: Vec<(f64, f64, f64)> = Vec::new(); // (lo, hi, value)
    for &(u, v) in &points {
        match runs.last_mut() {
            Some(last) if (last.2 - v).abs() <= VALUE_TOL * v.abs().max(1.0) => last.1 = u,
            Some(last) if last.1 == u => return Ok(None),
            _ => runs.push((u, u, v)),
        }
    }

    let thresholds: Vec<f64> = net.b.iter().map(|b| -b).collect();
    let mut a = vec![0.0; net.n_hidden];
    let mut prev_value = 0.0;
    let mut prev_hi = f64::NEG_INFINITY;
    for &(lo, hi, value) in &runs {
        // thresholds t with prev_hi < t < lo; H = (ReLU(u − t⁻) − ReLU(u − t⁺))/(t⁺ − t⁻)
        let inside: Vec<usize> = (0..thresholds.len())
            .filter(|&i| thresholds[i] > prev_hi && thresholds[i] < lo)
            .collect();
        let lo_i = inside.iter().copied().min_by(|&p, &q| thresholds[p].total_cmp(&thresholds[q]));
        let hi_i = inside.iter().copied().max_by(|&p, &q| thresholds[p].total_cmp(&thresholds[q]));
        let (Some(i_minus), Some(i_plus)) = (lo_i, hi_i) else {
            return Ok(None);
        };
        let width = thresholds[i_plus] - thresholds[i_minus];
        if width <= 0.0 {
            return Ok(None);
        }
        let jump = (value - prev_value) / width;
        a[i_minus] += jump;
        a[i_plus] -= jump;
        prev_value = value;
        prev_hi = hi;
    }
    Ok(Some(a))
}

/// Step-size rule for the output-layer SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSize {
    Fixed { value: f64 },
    /// `fraction / M_λ` with `M_λ = R_Φ² + λ` and `R_Φ` the support-oblivious
    /// feature-norm bound.
    InverseSmoothness { fraction: f64 },
    /// `min{1/M_λ, log(λ²T₂‖a⁽⁰⁾ − a_λ*‖² / (M_λ τ_mix σ²_λ*)) / (λT₂)}`,
    /// falling back to `1/M_λ` when the log is not positive. Uses the ridge
    /// optimum over the true support, so it is an oracle rule.
    MarkovOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BiasRange {
    Fixed { value: f64 },
    /// `A = ‖w^{(1)}‖₁ + margin`.
    L1Plus { margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase2Config {
    pub lr: StepSize,
    pub ridge: f64,
    pub steps: u64,
    pub bias_range: BiasRange,
}

impl Phase2Config {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = match self.lr {
            StepSize::Fixed { value } => value > 0.0,
            StepSize::InverseSmoothness { fraction } => fraction > 0.0,
            StepSize::MarkovOracle => self.ridge > 0.0,
        };
        let a_ok = match self.bias_range {
            BiasRange::Fixed { value } => value > 0.0,
            BiasRange::L1Plus { margin } => margin > 0.0,
        };
        if !lr_ok || !a_ok || self.ridge < 0.0 || self.steps == 0 {
            return Err(invalid!("phase II needs γ₂ > 0, λ ≥ 0, T₂ ≥ 1, A > 0"));
        }
        Ok(())
    }

    pub fn resolve_bias_range(&self, net: &TwoLayerNet) -> f64 {
        match self.bias_range {
            BiasRange::Fixed { value } => value,
            BiasRange::L1Plus { margin } => net.max_row_l1() + margin,
        }
    }

    pub fn resolve_lr(&self, net: &TwoLayerNet, f: &BooleanFunction, flip_prob: f64) -> Result<f64> {
        let r = net.feature_norm_bound();
        let smooth = r * r + self.ridge;
        Ok(match self.lr {
            StepSize::Fixed { value } => value,
            StepSize::InverseSmoothness { fraction } => fraction / smooth,
            StepSize::MarkovOracle => {
                if self.ridge <= 0.0 {
                    return Err(invalid!("the Markov step-size rule needs λ > 0"));
                }
                let (a_star, sigma_sq) = ridge_optimum(net, f, self.ridge)?;
                let dist_sq: f64 = net.a.iter().zip(&a_star).map(|(a, b)| (a - b).powi(2)).sum();
                let k = f.support_size() as f64;
                let tau_mix = f.dim() as f64 / (2.0 * flip_prob) * (2.0 * k + 1.0) * std::f64::consts::LN_2;
                let t2 = self.steps as f64;
                let arg = self.ridge * self.ridge * t2 * dist_sq / (smooth * tau_mix * sigma_sq);
                let inv = 1.0 / smooth;
                if arg.is_finite() && arg > 1.0 {
                    inv.min(arg.ln() / (self.ridge * t2))
                } else {
                    inv
                }
            }
        })
    }
}

/// Ridge optimum `a_λ*` of the uniform objective over the relevant
/// patterns, with `σ²_λ* = max_s ‖∇ℓ_λ(s; a_λ*)‖²`.
pub fn ridge_optimum(net: &TwoLayerNet, f: &BooleanFunction, ridge: f64) -> Result<(Vec<f64>, f64)> {
    let coords = relevant_union(net, f)?;
    let phi = feature_matrix(net, &coords);
    let m = phi.nrows() as f64;
    let target = DVector::from_vec(f.table_over(&coords)?);
    let n = net.n_hidden;
    let lhs = phi.transpose() * &phi / m + DMatrix::identity(n, n) * ridge;
    let rhs = phi.transpose() * &target / m;
    let a = lhs
        .cholesky()
        .ok_or_else(|| invalid!("ridge system is not positive definite"))?
        .solve(&rhs);
    let resid = &phi * &a - &target;
    let sigma_sq = (0..phi.nrows())
        .map(|s| (phi.row(s).transpose() * resid[s] + &a * ridge).norm_squared())
        .fold(0.0, f64::max);
    Ok((a.as_slice().to_vec(), sigma_sq))
}

/// `a ← a − γ₂((aᵀΦ(x) − y)Φ(x) + λa)`; returns the regularised loss at
/// the pre-update weights.
pub fn phase2_sgd_step(net: &mut TwoLayerNet, x: &[i8], y: f64, lr: f64, ridge: f64) -> f64 {
    let phi = net.features(x);
    phase2_update(&mut net.a, &phi, y, lr, ridge)
}

fn phase2_update(a: &mut [f64], phi: &[f64], y: f64, lr: f64, ridge: f64) -> f64 {
    let resid: f64 = a.iter().zip(phi).map(|(a, p)| a * p).sum::<f64>() - y;
    let norm_sq: f64 = a.iter().map(|v| v * v).sum();
    for (ai, &p) in a.iter_mut().zip(phi) {
        *ai -= lr * (resid * p + ridge * *ai);
    }
    0.5 * resid * resid + 0.5 * ridge * norm_sq
}

/// Hidden features restricted to the nonzero first-layer columns, for fast
/// Phase-II steps.
#[derive(Debug, Clone)]
struct FrozenFeatures {
    cols: Vec<usize>,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl FrozenFeatures {
    fn new(net: &TwoLayerNet) -> Self {
        let cols = net.active_columns();
        let w = (0..net.n_hidden)
            .flat_map(|i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| net.w[i * net.dim + j])
            .collect();
        Self {
            cols,
            w,
            b: net.b.clone(),
        }
    }

    fn fill(&self, x: &[i8], out: &mut [f64]) {
        let c = self.cols.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.w[i * c..(i + 1) * c];
            let z: f64 = row.iter().zip(&self.cols).map(|(w, &j)| w * x[j] as f64).sum();
            *o = relu(z + self.b[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
    Done,
}

/// Resumable execution of the two-phase procedure on one walk trajectory.
#[derive(Debug, Clone)]
pub struct Algorithm1 {
    f: BooleanFunction,
    phase1: Phase1Config,
    phase2: Phase2Config,
    seed: u64,
    eval_every: u64,
    net: TwoLayerNet,
    walk: Walk,
    phase: Phase,
    step: u64,
    lr2: f64,
    frozen: Option<FrozenFeatures>,
    loss_sum: f64,
    loss_count: u64,
    record: RunRecord,
    phase1_update: Option<Vec<f64>>,
}

pub const ALGORITHM1_COLUMNS: [&str; 3] = ["phase", "train_loss", "test_mse"];

impl Algorithm1 {
    pub fn new(
        f: &BooleanFunction,
        walk: WalkConfig,
        phase1: Phase1Config,
        phase2: Phase2Config,
        n_hidden: usize,
        seed: u64,
        eval_every: u64,
    ) -> Result<Self> {
        phase1.validate()?;
        phase2.validate()?;
        if walk.dim != f.dim() {
            return Err(invalid!("walk dimension {} differs from function dimension {}", walk.dim, f.dim()));
        }
        let net = TwoLayerNet::algorithm1_init(n_hidden, f.dim(), phase1.kappa)?;
        let config = serde_json::json!({
            "learner": "algorithm1",
            "walk": walk,
            "phase1": phase1,
            "phase2": phase2,
            "n_hidden": n_hidden,
        });
        Ok(Self {
            f: f.clone(),
            phase1,
            phase2,
            seed,
            eval_every: eval_every.max(1),
            net,
            walk: Walk::new(walk)?,
            phase: Phase::One,
            step: 0,
            lr2: 0.0,
            frozen: None,
            loss_sum: 0.0,
            loss_count: 0,
            record: RunRecord::new(ALGORITHM1_COLUMNS.iter().map(|s| s.to_string()).collect(), config, seed),
            phase1_update: None,
        })
    }

    pub fn net(&self) -> &TwoLayerNet {
        &self.net
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn samples(&self) -> u64 {
        self.walk.step_count()
    }

    /// Phase-II step size in use (zero before the bias redraw).
    pub fn phase2_lr(&self) -> f64 {
        self.lr2
    }

    /// First-layer row after Phase I (shared by all units).
    pub fn phase1_update(&self) -> Option<&[f64]> {
        self.phase1_update.as_deref()
    }

    fn log(&mut self, phase: f64) -> Result<()> {
        let loss = if self.loss_count > 0 {
            self.loss_sum / self.loss_count as f64
        } else {
            f64::NAN
        };
        let mse = uniform_mse_exact(&self.net, &self.f)?;
        self.record.push(self.walk.step_count(), vec![phase, loss, mse])?;
        self.loss_sum = 0.0;
        self.loss_count = 0;
        Ok(())
    }

    fn run_phase1_step(&mut self) -> Result<()> {
        let pairs: Vec<PairSample> = self.walk.pairs(&self.f, self.phase1.batch_size)?.collect();
        let (update, mean_loss) = phase1_backprop(&self.net, &pairs, &self.phase1)?;
        self.loss_sum += mean_loss;
        self.loss_count += 1;
        self.net.add_to_rows(&update);
        self.step += 1;
        if self.step as usize == self.phase1.steps {
            self.phase1_update = Some(self.net.row(0).to_vec());
            let range = self.phase2.resolve_bias_range(&self.net);
            self.net.redraw_biases(range, self.seed)?;
            self.lr2 = self.phase2.resolve_lr(&self.net, &self.f, self.walk.config().flip_prob)?;
            self.frozen = Some(FrozenFeatures::new(&self.net));
            self.log(1.0)?;
            self.phase = Phase::Two;
            self.step = 0;
        }
        Ok(())
    }

    /// Runs until completion, or until `halt_after` walk steps have been
    /// consumed (for interrupted runs).
    pub fn run(&mut self, halt_after: Option<u64>) -> Result<()> {
        let mut phi = vec![0.0; self.net.n_hidden];
        let mut phi_valid = false;
        let mut y = self.f.value(self.walk.current());
        loop {
            if halt_after.is_some_and(|h| self.walk.step_count() >= h) {
                return Ok(());
            }
            match self.phase {
                Phase::Done => return Ok(()),
                Phase::One => {
                    self.run_phase1_step()?;
                    y = self.f.value(self.walk.current());
                }
                Phase::Two => {
                    let frozen = self.frozen.as_ref().expect("frozen after phase I");
                    if !phi_valid {
                        frozen.fill(self.walk.current(), &mut phi);
                        phi_valid = true;
                    }
                    let mv = self.walk.step();
                    if mv.flipped {
                        y = self.f.value(self.walk.current());
                        if frozen.cols.binary_search(&mv.index).is_ok() {
                            frozen.fill(self.walk.current(), &mut phi);
                        }
                    }
                    let loss = phase2_update(&mut self.net.a, &phi, y, self.lr2, self.phase2.ridge);
                    self.loss_sum += loss;
                    self.loss_count += 1;
                    self.step += 1;
                    if !self.net.a.iter().all(|v| v.is_finite()) {
                        return Err(invalid!("phase II diverged at step {}; reduce the step size", self.step));
                    }
                    if self.step == self.phase2.steps {
                        self.log(2.0)?;
                        self.phase = Phase::Done;
                    } else if self.step % self.eval_every == 0 {
                        self.log(2.0)?;
                    }
                }
            }
        }
    }

    pub fn checkpoint(&self) -> Algorithm1Checkpoint {
        Algorithm1Checkpoint {
            net: self.net.clone(),
            walk: self.walk.snapshot(),
            phase: self.phase,
            step: self.step,
            lr2: self.lr2,
            loss_sum: self.loss_sum,
            loss_count: self.loss_count,
            record_csv: self.record.to_csv(),
            phase1_update: self.phase1_update.clone(),
        }
    }

    /// Rebuilds a run from a checkpoint taken with the same configuration.
    pub fn resume(mut self, ckpt: &Algorithm1Checkpoint) -> Result<Self> {
        if ckpt.net.dim != self.net.dim || ckpt.net.n_hidden != self.net.n_hidden {
            return Err(Error::Format("checkpoint network shape differs from configuration".into()));
        }
        self.net = ckpt.net.clone();
        self.walk = Walk::restore(&ckpt.walk)?;
        self.phase = ckpt.phase;
        self.step = ckpt.step;
        self.lr2 = ckpt.lr2;
        self.loss_sum = ckpt.loss_sum;
        self.loss_count = ckpt.loss_count;
        self.record = RunRecord::from_csv(&ckpt.record_csv)?;
        self.phase1_update = ckpt.phase1_update.clone();
        self.frozen = (self.phase != Phase::One).then(|| FrozenFeatures::new(&self.net));
        Ok(self)
    }
}

/// Self-describing checkpoint; floats are stored as IEEE-754 hex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Algorithm1Checkpoint {
    pub net: TwoLayerNet,
    pub walk: WalkSnapshot,
    pub phase: Phase,
    pub step: u64,
    #[serde(with = "hexfloat::scalar")]
    pub lr2: f64,
    #[serde(with = "hexfloat::scalar")]
    pub loss_sum: f64,
    pub loss_count: u64,
    pub record_csv: String,
    #[serde(with = "hexfloat::option")]
    pub phase1_update: Option<Vec<f64>>,
}

/// Runs the full two-phase procedure and returns the trained network and
/// its metric record.
pub fn run_algorithm1(
    f: &BooleanFunction,
    walk: WalkConfig,
    phase1: Phase1Config,
    phase2: Phase2Config,
    n_hidden: usize,
    seed: u64,
) -> Result<(TwoLayerNet, RunRecord)> {
    let eval_every = (phase2.steps / 100).max(1);
    let mut run = Algorithm1::new(f, walk, phase1, phase2, n_hidden, seed, eval_every)?;
    run.run(None)?;
    Ok((run.net, run.record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::WalkConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn walk_pairs(f: &BooleanFunction, p: f64, seed: u64, n: usize) -> Vec<PairSample> {
        let mut w = Walk::new(WalkConfig::new(f.dim(), p, seed).unwrap()).unwrap();
        w.pairs(f, n).unwrap().collect()
    }

    fn cfg(b: usize) -> Phase1Config {
        Phase1Config {
            batch_size: b,
            lr: 1.5,
            kappa: 0.7,
            steps: 1,
        }
    }

    /// Independent forward pass: hidden layer as explicit sums.
    fn forward_oracle(w: &[Vec<f64>], a: &[f64], b: &[f64], x: &[i8]) -> f64 {
        let mut out = 0.0;
        for i in 0..a.len() {
            let mut z = b[i];
            for j in 0..x.len() {
                z += w[i][j] * x[j] as f64;
            }
            if z > 0.0 {
                out += a[i] * z;
            }
        }
        out
    }

    #[test]
    fn init_is_constant_kappa() {
        let net = TwoLayerNet::algorithm1_init(7, 5, 0.3).unwrap();
        for x in [[1i8, 1, 1, 1, 1], [-1, 1, -1, 1, -1]] {
            assert!((net.value(&x) - 0.3).abs() < 1e-15);
        }
        let one = TwoLayerNet::algorithm1_init(1, 3, 2.0).unwrap();
        assert_eq!(one.value(&[1, -1, 1]), 2.0);
        assert!(TwoLayerNet::algorithm1_init(0, 3, 1.0).is_err());
        assert!(TwoLayerNet::algorithm1_init(2, 3, 0.0).is_err());
    }

    #[test]
    fn forward_examples() {
        let net = TwoLayerNet::new(3, vec![1.0, 0.0, 0.0], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(net.forward(&HypercubePoint::new(vec![1, -1, 1]).unwrap()).unwrap(), 1.0);
        assert_eq!(net.forward(&HypercubePoint::new(vec![-1, 1, 1]).unwrap()).unwrap(), 0.0);
        assert!(net.forward(&HypercubePoint::ones(4)).is_err());
        let zero_a = TwoLayerNet::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(zero_a.value(&[1, 1]), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (n, d) = (rng.gen_range(1..6), rng.gen_range(1..8));
            let w: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<i8> = (0..d).map(|_| if rng.gen() { 1 } else { -1 }).collect();
            let net = TwoLayerNet::new(d, w.concat(), a.clone(), b.clone()).unwrap();
            assert!((net.value(&x) - forward_oracle(&w, &a, &b, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_zero_off_support_and_matches_autograd() {
        let f = BooleanFunction::parity(25, &[3, 9, 14]).unwrap();
        let pairs = walk_pairs(&f, 0.5, 4, 400);
        let c = cfg(400);
        let g = phase1_closed_form_update(&pairs, &c).unwrap();
        for j in 0..25 {
            if ![2, 8, 13].contains(&j) {
                assert_eq!(g[j], 0.0);
            }
        }
        let net = TwoLayerNet::algorithm1_init(4, 25, c.kappa).unwrap();
        let rows = phase1_autograd_update(&net, &pairs, &c).unwrap();
        for row in &rows {
            for (u, v) in row.iter().zip(&g) {
                assert!((u - v).abs() <= 1e-10 * v.abs().max(1.0));
            }
            assert_eq!(row, &rows[0]);
        }
        // independent of N and b at this init
        let mut other = TwoLayerNet::algorithm1_init(9, 25, c.kappa).unwrap();
        other.set_biases(vec![0.5; 9]).unwrap();
        let rows9 = phase1_autograd_update(&other, &pairs, &c).unwrap();
        assert_eq!(rows9[0], rows[0]);
    }

    #[test]
    fn two_parity_single_flip_cases() {
        // all 8 cases of (x_prev on {1,2}, flipped coordinate) for x₁x₂
        let f = BooleanFunction::parity(3, &[1, 2]).unwrap();
        let c = cfg(1);
        for m in 0..4usize {
            for flip in 0..2usize {
                let prev = vec![crate::boolfn::pattern_sign(m, 0, 2), crate::boolfn::pattern_sign(m, 1, 2), 1];
                let mut next = prev.clone();
                next[flip] = -next[flip];
                let pair = PairSample {
                    y_prev: f.value(&prev),
                    y_next: f.value(&next),
                    prev: prev.clone(),
                    next: next.clone(),
                };
                let g = phase1_closed_form_update(&[pair.clone()], &c).unwrap();
                let df = pair.y_next - pair.y_prev;
                let dx = (next[flip] - prev[flip]) as f64;
                assert_eq!(df.abs(), 2.0);
                assert_eq!(g[flip], c.eta() * dx * df);
                assert_eq!(g[flip].abs(), 4.0 * c.eta());
                assert_eq!(g[1 - flip], 0.0);
                assert_eq!(g[2], 0.0);
            }
        }
    }

    #[test]
    fn lazy_and_constant_batches_give_zero() {
        let x = vec![1i8, -1, 1];
        let lazy: Vec<PairSample> = (0..5)
            .map(|_| PairSample {
                prev: x.clone(),
                next: x.clone(),
                y_prev: 1.0,
                y_next: 1.0,
            })
            .collect();
        assert_eq!(phase1_closed_form_update(&lazy, &cfg(5)).unwrap(), vec![0.0; 3]);
        let net = TwoLayerNet::algorithm1_init(2, 3, 0.7).unwrap();
        let rows = phase1_autograd_update(&net, &lazy, &cfg(5)).unwrap();
        assert!(rows.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn non_consecutive_pairs_rejected() {
        let f = BooleanFunction::parity(6, &[1]).unwrap();
        let mut pairs = walk_pairs(&f, 0.9, 2, 10);
        assert!(phase1_closed_form_update(&pairs, &cfg(9)).is_err());
        pairs.swap(2, 7);
        if pairs[1].next != pairs[2].prev {
            assert!(phase1_closed_form_update(&pairs, &cfg(10)).is_err());
        }
    }

    #[test]
    fn nondegeneracy_examples() {
        let k = 5;
        let f = BooleanFunction::parity(8, &[1, 2, 3, 4, 5]).unwrap();
        let mut w = vec![0.0; 8];
        for (j, wj) in w.iter_mut().take(k).enumerate() {
            *wj = (1u32 << j) as f64;
        }
        let rep = check_nondegeneracy(&w, &f, 0.1).unwrap();
        assert!(rep.min_margin >= 2.0);
        assert!(rep.is_nondegenerate());
        assert!(rep.violating_pair.is_none());

        let zero = check_nondegeneracy(&[0.0; 8], &f, 0.1).unwrap();
        assert_eq!(zero.min_margin, 0.0);
        let (s, r) = zero.violating_pair.unwrap();
        let fs: i8 = s.iter().product();
        let fr: i8 = r.iter().product();
        assert_ne!(fs, fr);

        let dict = BooleanFunction::parity(3, &[2]).unwrap();
        let rep = check_nondegeneracy(&[0.0, 0.013, 0.0], &dict, 0.001).unwrap();
        assert!((rep.min_margin - 0.026).abs() < 1e-15);
    }

    #[test]
    fn nondegeneracy_matches_pairwise_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let k = rng.gen_range(1..=5);
            let table: Vec<f64> = (0..1 << k).map(|_| rng.gen_range(0..3) as f64).collect();
            let support: Vec<usize> = (1..=k).collect();
            let f = BooleanFunction::junta_from_table(k + 2, &support, &table).unwrap();
            let w: Vec<f64> = (0..k + 2).map(|_| rng.gen_range(-3..=3) as f64 * 0.5).collect();
            let rep = check_nondegeneracy(&w, &f, 0.0).unwrap();
            let coords = f.support_indices().to_vec();
            let tab = f.support_table().unwrap();
            let kk = coords.len();
            let mut brute = f64::INFINITY;
            for s in 0..1usize << kk {
                for r in 0..1usize << kk {
                    if (tab[s] - tab[r]).abs() > 1e-9 {
                        let m: f64 = (0..kk)
                            .map(|i| {
                                w[coords[i]]
                                    * (crate::boolfn::pattern_sign(s, i, kk) - crate::boolfn::pattern_sign(r, i, kk)) as f64
                            })
                            .sum();
                        brute = brute.min(m.abs());
                    }
                }
            }
            assert_eq!(rep.min_margin, brute);
        }
    }

    #[test]
    fn redraw_biases_properties() {
        let mut net = TwoLayerNet::algorithm1_init(10_000, 2, 1.0).unwrap();
        let before_w = net.row(0).to_vec();
        net.redraw_biases(2.5, 9).unwrap();
        assert!(net.biases().iter().all(|b| (-2.5..=2.5).contains(b)));
        assert_eq!(net.row(0), &before_w[..]);
        assert!(net.output_weights().iter().all(|&a| a == 1.0));
        let mut again = TwoLayerNet::algorithm1_init(10_000, 2, 1.0).unwrap();
        again.redraw_biases(2.5, 9).unwrap();
        assert_eq!(net.biases(), again.biases());

        // Kolmogorov–Smirnov against Unif[-A, A] at significance 0.001
        let mut sorted = net.biases().to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let d = sorted
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let cdf = (b + 2.5) / 5.0;
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(d * n.sqrt() < 1.949, "KS statistic {d}");
        assert!(net.redraw_biases(0.0, 1).is_err());
    }

    #[test]
    fn certificate_cases() {
        // w = (1, 0) puts (+,+) and (+,−) on the same projection
        let f = BooleanFunction::parity(3, &[1, 2]).unwrap();
        let mut net = TwoLayerNet::new(3, vec![1.0, 0.0, 0.0].repeat(50), vec![0.0; 50], vec![0.0; 50]).unwrap();
        net.redraw_biases(3.0, 1).unwrap();
        let cert = certificate_solve(&net, &f).unwrap();
        assert!(cert.residual >= 1.0 - 1e-9, "gap/2 = 1, got {}", cert.residual);
        assert_eq!(certificate_construct(&net, &f).unwrap(), None);

        // non-degenerate with dense biases
        let mut good = TwoLayerNet::new(3, vec![1.0, 2.0, 0.0].repeat(200), vec![0.0; 200], vec![0.0; 200]).unwrap();
        good.redraw_biases(3.5, 2).unwrap();
        let cert = certificate_solve(&good, &f).unwrap();
        assert!(cert.residual < 1e-9, "{}", cert.residual);
        let a = certificate_construct(&good, &f).unwrap().expect("biases cover every gap");
        good.set_output_weights(a).unwrap();
        for m in 0..8usize {
            let x: Vec<i8> = (0..3).map(|i| crate::boolfn::pattern_sign(m, i, 3)).collect();
            assert!((good.value(&x) - f.value(&x)).abs() < 1e-12);
        }

        // constant target: two units above ‖w‖₁ differ by a constant
        let c = BooleanFunction::from_terms(3, [(crate::boolfn::Subset::empty(), 0.7)]).unwrap();
        let row = [0.5, -0.25, 0.0];
        let mut net = TwoLayerNet::new(3, row.repeat(2), vec![0.0; 2], vec![1.0, -3.0]).unwrap();
        assert!(certificate_solve(&net, &c).unwrap().residual > 0.1);
        net = TwoLayerNet::new(3, row.repeat(3), vec![0.0; 3], vec![1.0, -3.0, 2.0]).unwrap();
        let cert = certificate_solve(&net, &c).unwrap();
        assert!(cert.residual < 1e-12, "{}", cert.residual);
    }

    #[test]
    fn phase2_step_examples() {
        let mut net = TwoLayerNet::new(1, vec![0.0], vec![0.0], vec![2.0]).unwrap();
        phase2_sgd_step(&mut net, &[1], 1.0, 0.1, 0.0);
        assert!((net.output_weights()[0] - 0.2).abs() < 1e-15);

        let mut fit = TwoLayerNet::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.5, -0.25], vec![1.0, 2.0]).unwrap();
        let y = fit.value(&[1, -1]);
        let before = fit.output_weights().to_vec();
        phase2_sgd_step(&mut fit, &[1, -1], y, 0.3, 0.0);
        assert_eq!(fit.output_weights(), &before[..]);
    }

    #[test]
    fn averaged_phase2_update_vanishes_at_ridge_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 1..=6usize {
            let support: Vec<usize> = (1..=k).collect();
            let table: Vec<f64> = (0..1 << k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = BooleanFunction::junta_from_table(k, &support, &table).unwrap();
            let n = 12;
            let w: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut net = TwoLayerNet::new(k, w, vec![0.0; n], b).unwrap();
            let lambda = 0.05;
            // ridge optimum: (ΦᵀΦ/2^k + λI) a = Φᵀf/2^k
            let coords: Vec<usize> = (0..k).collect();
            let phi = feature_matrix(&net, &coords);
            let m = (1 << k) as f64;
            let target = DVector::from_vec(f.table_over(&coords).unwrap());
            let lhs = phi.transpose() * &phi / m + DMatrix::identity(n, n) * lambda;
            let rhs = phi.transpose() * target / m;
            let a = lhs.lu().solve(&rhs).unwrap();
            net.set_output_weights(a.as_slice().to_vec()).unwrap();
            let mut mean = vec![0.0; n];
            let mut x = vec![0i8; k];
            for s in 0..1usize << k {
                write_pattern(s, &coords, &mut x);
                let mut probe = net.clone();
                phase2_sgd_step(&mut probe, &x, f.value(&x), 1.0, lambda);
                for (acc, (after, before)) in mean.iter_mut().zip(probe.output_weights().iter().zip(net.output_weights())) {
                    *acc += (after - before) / m;
                }
            }
            assert!(mean.iter().all(|v| v.abs() < 1e-10), "{mean:?}");
        }
    }

    #[test]
    fn constant_target_run() {
        let f = BooleanFunction::from_terms(10, [(crate::boolfn::Subset::empty(), 1.0)]).unwrap();
        let p1 = Phase1Config::theorem_scaled(10, 1, 1.0, 0.5);
        let p2 = Phase2Config {
            lr: StepSize::InverseSmoothness { fraction: 0.5 },
            ridge: 1e-6,
            steps: 20_000,
            bias_range: BiasRange::L1Plus { margin: 0.5 },
        };
        let (net, rec) = run_algorithm1(&f, WalkConfig::new(10, 0.5, 1).unwrap(), p1, p2, 20, 3).unwrap();
        assert!(net.active_columns().is_empty());
        assert!(rec.last("test_mse").unwrap() < 1e-4);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let f = BooleanFunction::parity(12, &[1, 2]).unwrap();
        let p1 = Phase1Config::theorem_scaled(12, 2, 1.0, 0.3);
        let p2 = Phase2Config {
            lr: StepSize::InverseSmoothness { fraction: 0.5 },
            ridge: 1e-4,
            steps: 3000,
            bias_range: BiasRange::L1Plus { margin: 0.1 },
        };
        let walk = WalkConfig::new(12, 0.5, 7).unwrap();
        let mut full = Algorithm1::new(&f, walk, p1, p2, 30, 1, 500).unwrap();
        full.run(None).unwrap();

        let mut part = Algorithm1::new(&f, walk, p1, p2, 30, 1, 500).unwrap();
        part.run(Some(p1.batch_size as u64 + 1234)).unwrap();
        let json = serde_json::to_string(&part.checkpoint()).unwrap();
        let ckpt: Algorithm1Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(ckpt, part.checkpoint());
        let mut resumed = Algorithm1::new(&f, walk, p1, p2, 30, 1, 500).unwrap().resume(&ckpt).unwrap();
        resumed.run(None).unwrap();
        assert_eq!(resumed.net(), full.net());
        assert_eq!(resumed.record().to_csv(), full.record().to_csv());
    }
}
