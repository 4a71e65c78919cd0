//! Data-generating processes on the hypercube.
//!
//! The p-lazy walk draws a uniform coordinate `j_t ∈ [d]` and an independent
//! `Z_t ~ Ber(p)` at every step and flips `x_{j_t}` iff `Z_t = 1`. Initial
//! point, coordinate choices and flips come from separate seeded streams.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::boolfn::{BooleanFunction, HypercubePoint};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Rng, RngState, Stream};

/// Largest support for which the projected kernel is materialised densely.
pub const MAX_DENSE_SUPPORT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub dim: usize,
    pub flip_prob: f64,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(dim: usize, flip_prob: f64, seed: u64) -> Result<Self> {
        let cfg = Self { dim, flip_prob, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid!("walk dimension must be positive"));
        }
        if !(self.flip_prob > 0.0 && self.flip_prob < 1.0) {
            return Err(invalid!("flip probability {} not in (0, 1)", self.flip_prob));
        }
        Ok(())
    }
}

/// The proposal made at one step: coordinate `j_t` and the lazy flag `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub(crate) index: usize,
    pub flipped: bool,
}

impl Move {
    /// 1-indexed coordinate `j_t`.
    pub fn coordinate(&self) -> usize {
        self.index + 1
    }
}

/// Single-owner state of a lazy random walk.
#[derive(Debug, Clone)]
pub struct Walk {
    cfg: WalkConfig,
    current: Vec<i8>,
    step_count: u64,
    coord_rng: Rng,
    flip_rng: Rng,
    last_move: Option<Move>,
}

impl Walk {
    /// Starts the walk at `x^{(0)} ~ Unif{±1}^d`.
    pub fn new(cfg: WalkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = rng::stream(cfg.seed, Stream::InitialPoint);
        let current = uniform_point(&mut init, cfg.dim);
        Ok(Self {
            cfg,
            current,
            step_count: 0,
            coord_rng: rng::stream(cfg.seed, Stream::Coordinate),
            flip_rng: rng::stream(cfg.seed, Stream::Flip),
            last_move: None,
        })
    }

    pub fn config(&self) -> &WalkConfig {
        &self.cfg
    }

    pub fn current(&self) -> &[i8] {
        &self.current
    }

    pub fn point(&self) -> HypercubePoint {
        HypercubePoint::new(self.current.clone()).expect("walk points are ±1")
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn last_move(&self) -> Option<Move> {
        self.last_move
    }

    /// Advances one step and returns the move taken.
    pub fn step(&mut self) -> Move {
        let index = self.coord_rng.gen_range(0..self.cfg.dim);
        let flipped = self.flip_rng.gen_bool(self.cfg.flip_prob);
        if flipped {
            self.current[index] = -self.current[index];
        }
        let mv = Move { index, flipped };
        self.last_move = Some(mv);
        self.step_count += 1;
        mv
    }

    /// Overlapping consecutive pairs `(x^{(t-1)}, x^{(t)})` with exact labels.
    pub fn pairs<'a>(&'a mut self, f: &'a BooleanFunction, n: usize) -> Result<PairStream<'a>> {
        if f.dim() != self.cfg.dim {
            return Err(invalid!("function dimension {} differs from walk dimension {}", f.dim(), self.cfg.dim));
        }
        let y = f.value(&self.current);
        Ok(PairStream {
            walk: self,
            f,
            remaining: n,
            y_current: y,
        })
    }

    pub fn snapshot(&self) -> WalkSnapshot {
        WalkSnapshot {
            cfg: self.cfg,
            current: self.current.clone(),
            step_count: self.step_count,
            coord_rng: RngState::capture(&self.coord_rng),
            flip_rng: RngState::capture(&self.flip_rng),
            last_move: self.last_move,
        }
    }

    pub fn restore(s: &WalkSnapshot) -> Result<Self> {
        s.cfg.validate()?;
        if s.current.len() != s.cfg.dim {
            return Err(Error::Format("walk snapshot has wrong dimension".into()));
        }
        Ok(Self {
            cfg: s.cfg,
            current: s.current.clone(),
            step_count: s.step_count,
            coord_rng: s.coord_rng.restore(),
            flip_rng: s.flip_rng.restore(),
            last_move: s.last_move,
        })
    }

    /// Writes `n` steps as CSV (`step,j_t,Z_t,y_t`) with a config header.
    /// Row 0 is the initial point, whose move columns are empty.
    pub fn dump_trajectory<W: Write>(&mut self, f: &BooleanFunction, n: usize, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# dim={} flip_prob={} seed={}",
            self.cfg.dim, self.cfg.flip_prob, self.cfg.seed
        )?;
        writeln!(out, "step,j_t,Z_t,y_t")?;
        writeln!(out, "{},,,{}", self.step_count, f.value(&self.current))?;
        for _ in 0..n {
            let mv = self.step();
            writeln!(
                out,
                "{},{},{},{}",
                self.step_count,
                mv.coordinate(),
                u8::from(mv.flipped),
                f.value(&self.current)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSnapshot {
    pub cfg: WalkConfig,
    pub current: Vec<i8>,
    pub step_count: u64,
    pub coord_rng: RngState,
    pub flip_rng: RngState,
    pub last_move: Option<Move>,
}

/// Consecutive points of one trajectory with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub prev: Vec<i8>,
    pub next: Vec<i8>,
    pub y_prev: f64,
    pub y_next: f64,
}

pub struct PairStream<'a> {
    walk: &'a mut Walk,
    f: &'a BooleanFunction,
    remaining: usize,
    y_current: f64,
}

impl Iterator for PairStream<'_> {
    type Item = PairSample;

    fn next(&mut self) -> Option<PairSample> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let prev = self.walk.current.clone();
        let y_prev = self.y_current;
        let mv = self.walk.step();
        // off-support or lazy moves leave the label untouched
        if mv.flipped {
            self.y_current = self.f.value(&self.walk.current);
        }
        Some(PairSample {
            prev,
            next: self.walk.current.clone(),
            y_prev,
            y_next: self.y_current,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Independent uniform points of `{±1}^d`.
#[derive(Debug, Clone)]
pub struct IidSampler {
    dim: usize,
    rng: Rng,
    draws: u64,
}

impl IidSampler {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            rng: rng::stream(seed, Stream::Iid),
            draws: 0,
        }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn draw_into(&mut self, x: &mut [i8]) {
        debug_assert_eq!(x.len(), self.dim);
        fill_uniform(&mut self.rng, x);
        self.draws += 1;
    }

    pub fn draw(&mut self) -> Vec<i8> {
        let mut x = vec![0i8; self.dim];
        self.draw_into(&mut x);
        x
    }

    pub fn snapshot(&self) -> (RngState, u64) {
        (RngState::capture(&self.rng), self.draws)
    }

    pub fn restore(dim: usize, state: &RngState, draws: u64) -> Self {
        Self {
            dim,
            rng: state.restore(),
            draws,
        }
    }
}

/// `n` i.i.d. uniform points with exact labels.
pub fn iid_stream(dim: usize, seed: u64, f: &BooleanFunction, n: usize) -> Result<Vec<(HypercubePoint, f64)>> {
    if f.dim() != dim {
        return Err(invalid!("function dimension {} differs from {dim}", f.dim()));
    }
    let mut sampler = IidSampler::new(dim, seed);
    Ok((0..n)
        .map(|_| {
            let x = sampler.draw();
            let y = f.value(&x);
            (HypercubePoint::new(x).expect("±1 entries"), y)
        })
        .collect())
}

pub(crate) fn uniform_point(rng: &mut Rng, dim: usize) -> Vec<i8> {
    let mut x = vec![0i8; dim];
    fill_uniform(rng, &mut x);
    x
}

pub(crate) fn fill_uniform(rng: &mut Rng, x: &mut [i8]) {
    for chunk in x.chunks_mut(64) {
        let bits: u64 = rng.gen();
        for (i, v) in chunk.iter_mut().enumerate() {
            *v = if (bits >> i) & 1 == 1 { 1 } else { -1 };
        }
    }
}

/// Spectral gap `2p/d` of the p-lazy walk on `{±1}^d`.
pub fn spectral_gap(dim: usize, flip_prob: f64) -> f64 {
    2.0 * flip_prob / dim as f64
}

/// Transition matrix of the full walk on `{±1}^d`, indexed by pattern
/// order over all `d` coordinates. Only for small `d`.
pub fn full_kernel(dim: usize, flip_prob: f64) -> Result<DMatrix<f64>> {
    projected_chain_kernel(dim, dim, flip_prob)
}

/// Kernel of `x^{(t)}_S` for a support of size `k` inside dimension `d`:
/// each of the `k` neighbours has probability `p/d`, the diagonal `1 − kp/d`.
pub fn projected_chain_kernel(support_size: usize, dim: usize, flip_prob: f64) -> Result<DMatrix<f64>> {
    if support_size > MAX_DENSE_SUPPORT {
        return Err(Error::Capacity(format!(
            "dense kernel for k = {support_size} exceeds k ≤ {MAX_DENSE_SUPPORT}"
        )));
    }
    if support_size > dim {
        return Err(invalid!("support size {support_size} exceeds dimension {dim}"));
    }
    let n = 1usize << support_size;
    let move_prob = flip_prob / dim as f64;
    let stay = 1.0 - support_size as f64 * move_prob;
    Ok(DMatrix::from_fn(n, n, |s, t| {
        if s == t {
            stay
        } else if (s ^ t).count_ones() == 1 {
            move_prob
        } else {
            0.0
        }
    }))
}

/// An edge state `(u, v)` of the k-dimensional lazy edge chain, with both
/// endpoints encoded as pattern indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
}

/// The p-lazy edge walk on `{±1}^k × {±1}^k`, started stationary.
///
/// Each step proposes a uniform coordinate of `[k]` and flips it with
/// probability `p`; a lazy step produces the self-loop `(v, v)`.
#[derive(Debug, Clone)]
pub struct EdgeWalk {
    k: usize,
    flip_prob: f64,
    state: Edge,
    coord_rng: Rng,
    flip_rng: Rng,
}

impl EdgeWalk {
    pub fn new(support_size: usize, flip_prob: f64, seed: u64) -> Result<Self> {
        if support_size == 0 || support_size > crate::boolfn::MAX_TABLE_SUPPORT {
            return Err(Error::Capacity(format!("edge walk needs 1 ≤ k ≤ 20, got {support_size}")));
        }
        if !(flip_prob > 0.0 && flip_prob < 1.0) {
            return Err(invalid!("flip probability {flip_prob} not in (0, 1)"));
        }
        let mut init = rng::stream(seed, Stream::InitialPoint);
        let start: u32 = init.gen_range(0..1u32 << support_size);
        let mut walk = Self {
            k: support_size,
            flip_prob,
            state: Edge { from: start, to: start },
            coord_rng: rng::stream(seed, Stream::Coordinate),
            flip_rng: rng::stream(seed, Stream::Flip),
        };
        let first = walk.lazy_step(start);
        walk.state = Edge { from: start, to: first };
        Ok(walk)
    }

    pub fn support_size(&self) -> usize {
        self.k
    }

    pub fn state(&self) -> Edge {
        self.state
    }

    fn lazy_step(&mut self, v: u32) -> u32 {
        let j = self.coord_rng.gen_range(0..self.k);
        if self.flip_rng.gen_bool(self.flip_prob) {
            v ^ (1 << j)
        } else {
            v
        }
    }

    /// Shifts `(u, v) → (v, v')` and returns the new state.
    pub fn advance(&mut self) -> Edge {
        let v = self.state.to;
        let next = self.lazy_step(v);
        self.state = Edge { from: v, to: next };
        self.state
    }
}

/// `n` consecutive edge states; the first is the stationary start.
pub fn edge_walk_stream(support_size: usize, flip_prob: f64, seed: u64, n: usize) -> Result<Vec<Edge>> {
    let mut walk = EdgeWalk::new(support_size, flip_prob, seed)?;
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(walk.state());
    }
    while out.len() < n {
        out.push(walk.advance());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boolfn::hamming;
    use nalgebra::SymmetricEigen;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi_square_uniform_passes(counts: &[u64], alpha: f64) -> bool {
        let n: u64 = counts.iter().sum();
        let expected = n as f64 / counts.len() as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
        1.0 - dist.cdf(stat) > alpha
    }

    #[test]
    fn initial_point_is_deterministic() {
        let cfg = WalkConfig::new(30, 0.9, 11).unwrap();
        assert_eq!(Walk::new(cfg).unwrap().current(), Walk::new(cfg).unwrap().current());
        let one = Walk::new(WalkConfig::new(1, 0.5, 3).unwrap()).unwrap();
        assert!(one.current()[0] == 1 || one.current()[0] == -1);
        assert_eq!(one.step_count(), 0);
    }

    #[test]
    fn initial_point_is_uniform() {
        let d = 8;
        let mut sums = vec![0i64; d];
        for seed in 0..100_000u64 {
            let w = Walk::new(WalkConfig::new(d, 0.5, seed).unwrap()).unwrap();
            for (s, &x) in sums.iter_mut().zip(w.current()) {
                *s += x as i64;
            }
        }
        for s in sums {
            assert!((s as f64 / 1e5).abs() <= 0.02);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(WalkConfig::new(0, 0.5, 0).is_err());
        assert!(WalkConfig::new(3, 0.0, 0).is_err());
        assert!(WalkConfig::new(3, 1.0, 0).is_err());
    }

    #[test]
    fn non_lazy_fraction_and_single_flips() {
        let mut w = Walk::new(WalkConfig::new(50, 0.9, 5).unwrap()).unwrap();
        let mut flips = 0;
        let mut prev = w.current().to_vec();
        for _ in 0..100_000 {
            let mv = w.step();
            let h = hamming(&prev, w.current());
            assert_eq!(h, usize::from(mv.flipped));
            flips += usize::from(mv.flipped);
            prev.copy_from_slice(w.current());
        }
        let frac = flips as f64 / 1e5;
        assert!((0.894..=0.906).contains(&frac), "{frac}");
        assert_eq!(w.step_count(), 100_000);
    }

    #[test]
    fn equal_seeds_give_identical_states() {
        let cfg = WalkConfig::new(20, 0.3, 99).unwrap();
        let mut a = Walk::new(cfg).unwrap();
        let mut b = Walk::new(cfg).unwrap();
        for _ in 0..1000 {
            a.step();
            b.step();
        }
        assert_eq!(a.current(), b.current());
        assert_eq!(a.last_move(), b.last_move());
        let snap = a.snapshot();
        let mut c = Walk::restore(&snap).unwrap();
        for _ in 0..100 {
            assert_eq!(a.step(), c.step());
        }
    }

    #[test]
    fn pair_stream_properties() {
        let f = BooleanFunction::parity(12, &[1, 2, 3]).unwrap();
        let cfg = WalkConfig::new(12, 0.9, 1).unwrap();
        let start = Walk::new(cfg).unwrap().current().to_vec();
        let mut w = Walk::new(cfg).unwrap();
        let pairs: Vec<PairSample> = w.pairs(&f, 500).unwrap().collect();
        assert_eq!(pairs[0].prev, start);
        for win in pairs.windows(2) {
            assert_eq!(win[0].next, win[1].prev);
        }
        for p in &pairs {
            assert_eq!(p.y_prev, f.value(&p.prev));
            assert_eq!(p.y_next, f.value(&p.next));
            assert!(hamming(&p.prev, &p.next) <= 1);
            let changed: Vec<usize> = (0..12).filter(|&i| p.prev[i] != p.next[i]).collect();
            if changed.iter().all(|&i| i >= 3) {
                assert_eq!(p.y_next - p.y_prev, 0.0);
            }
        }
        let g = BooleanFunction::parity(11, &[1]).unwrap();
        assert!(w.pairs(&g, 1).is_err());
    }

    #[test]
    fn iid_points_are_far_apart() {
        let f = BooleanFunction::parity(50, &[1, 2]).unwrap();
        let pts = iid_stream(50, 4, &f, 10_001).unwrap();
        let mean: f64 = pts
            .windows(2)
            .map(|w| hamming(w[0].0.as_slice(), w[1].0.as_slice()) as f64)
            .sum::<f64>()
            / 10_000.0;
        assert!((24.5..=25.5).contains(&mean), "{mean}");
        for (x, y) in &pts {
            assert_eq!(*y, f.eval(x).unwrap());
        }
        assert_eq!(pts, iid_stream(50, 4, &f, 10_001).unwrap());
    }

    #[test]
    fn spectral_gap_values() {
        assert!((spectral_gap(50, 0.9) - 0.036).abs() < 1e-15);
        assert_eq!(spectral_gap(2, 0.5), 0.5);
        let kernel = full_kernel(4, 0.25).unwrap();
        let mut eig = SymmetricEigen::new(kernel).eigenvalues.as_slice().to_vec();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eig[0] - 1.0).abs() < 1e-10);
        assert!((eig[1] - 0.875).abs() < 1e-10);
    }

    #[test]
    fn projected_kernel_shape() {
        let k1 = projected_chain_kernel(1, 10, 0.5).unwrap();
        assert_eq!(k1[(0, 0)], 1.0 - 0.05);
        assert_eq!(k1[(0, 1)], 0.05);
        let k = projected_chain_kernel(3, 10, 0.5).unwrap();
        for r in 0..8 {
            let s: f64 = k.row(r).iter().sum();
            assert_eq!(s, 1.0);
        }
        // characters are eigenvectors with eigenvalue 1 − 2p|S|/d
        for mask in 0..8usize {
            let chi = nalgebra::DVector::from_fn(8, |m, _| {
                if (m & mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 }
            });
            let lam = 1.0 - 2.0 * 0.5 * mask.count_ones() as f64 / 10.0;
            assert!((&k * &chi - chi * lam).amax() < 1e-10);
        }
        assert!(projected_chain_kernel(13, 20, 0.5).is_err());
    }

    #[test]
    fn edge_walk_is_stationary() {
        let k = 4;
        let mut first = vec![0u64; 16];
        let mut hundredth = vec![0u64; 16];
        for seed in 0..100_000u64 {
            let mut w = EdgeWalk::new(k, 0.5, seed).unwrap();
            first[w.state().from as usize] += 1;
            for _ in 0..99 {
                w.advance();
            }
            hundredth[w.state().from as usize] += 1;
        }
        assert!(chi_square_uniform_passes(&first, 0.001));
        assert!(chi_square_uniform_passes(&hundredth, 0.001));

        let edges = edge_walk_stream(5, 0.7, 2, 10_000).unwrap();
        for e in &edges {
            assert!((e.from ^ e.to).count_ones() <= 1);
        }
        for w in edges.windows(2) {
            assert_eq!(w[0].to, w[1].from);
        }
    }

    #[test]
    fn stationary_marginal_of_full_walk() {
        let d = 6;
        let mut counts = vec![0u64; 1 << d];
        let coords: Vec<usize> = (0..d).collect();
        for seed in 0..100_000u64 {
            let mut w = Walk::new(WalkConfig::new(d, 0.9, seed).unwrap()).unwrap();
            for _ in 0..7 {
                w.step();
            }
            counts[crate::boolfn::read_pattern(w.current(), &coords)] += 1;
        }
        assert!(chi_square_uniform_passes(&counts, 0.001));
    }

    #[test]
    fn off_support_step_rate() {
        let (d, k, p) = (40, 5, 0.9);
        let f = BooleanFunction::parity(d, &[1, 2, 3, 4, 5]).unwrap();
        let mut w = Walk::new(WalkConfig::new(d, p, 8).unwrap()).unwrap();
        let n = 200_000;
        let unchanged = w.pairs(&f, n).unwrap().filter(|s| s.y_prev == s.y_next).count();
        let rate = unchanged as f64 / n as f64;
        let expected = (d - k) as f64 / d as f64 + (k as f64 / d as f64) * (1.0 - p);
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((rate - expected).abs() < 3.0 * sigma, "{rate} vs {expected}");
    }

    #[test]
    fn trajectory_dump_is_reproducible() {
        let f = BooleanFunction::parity(10, &[1, 2]).unwrap();
        let cfg = WalkConfig::new(10, 0.5, 21).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        Walk::new(cfg).unwrap().dump_trajectory(&f, 50, &mut a).unwrap();
        Walk::new(cfg).unwrap().dump_trajectory(&f, 50, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# dim=10 flip_prob=0.5 seed=21\nstep,j_t,Z_t,y_t\n0,,,"));
        assert_eq!(text.lines().count(), 53);
    }
}
