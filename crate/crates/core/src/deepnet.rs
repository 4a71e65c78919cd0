//! Fully connected ReLU networks trained jointly by batch-1 SGD.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis::{Predictor, TestSet};
use crate::boolfn::{BooleanFunction, Subset};
use crate::error::{invalid, Error, Result};
use crate::loss::{td_loss, td_loss_output_grads, TdParams};
use crate::record::{hexfloat, RunRecord};
use crate::rng::{self, RngState, Stream};
use crate::walk::{IidSampler, Walk, WalkConfig, WalkSnapshot};

/// Hidden sizes of the wide 512-unit preset.
pub const PAPER_HIDDEN: [usize; 3] = [512, 512, 64];
/// Alternative wide hidden sizes with a 1024-unit middle layer.
pub const PAPER_HIDDEN_MAIN_TEXT: [usize; 3] = [512, 1024, 64];
/// Desk-scale hidden sizes.
pub const DESK_HIDDEN: [usize; 3] = [64, 64, 32];

/// Dense layer with `w` stored row-major as `n_out × n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    #[serde(with = "hexfloat")]
    pub w: Vec<f64>,
    #[serde(with = "hexfloat")]
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    layers: Vec<Layer>,
}

/// Activations of one forward pass: `z[l]` pre-activations and `h[l]`
/// inputs of layer `l` (`h[0]` is the input point).
#[derive(Debug, Clone, Default)]
pub struct Tape {
    h: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> f64 {
        self.z.last().map_or(0.0, |z| z[0])
    }
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl MlpGrads {
    fn zeros(net: &MlpNet) -> Self {
        Self {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.iter().any(|&n| n == 0) {
        return Err(invalid!("layer dims must have length ≥ 2 and positive entries, got {dims:?}"));
    }
    if *dims.last().unwrap() != 1 {
        return Err(invalid!("output dimension must be 1, got {}", dims.last().unwrap()));
    }
    Ok(())
}

impl MlpNet {
    /// Every weight and bias i.i.d. `Unif[−1/√fan_in, 1/√fan_in]`.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(layer_dims)?;
        let mut rng = rng::stream(seed, Stream::NetworkInit);
        let layers = layer_dims
            .windows(2)
            .map(|pair| {
                let (n_in, n_out) = (pair[0], pair[1]);
                let bound = 1.0 / (n_in as f64).sqrt();
                let w = (0..n_in * n_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                let b = (0..n_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                Layer { n_in, n_out, w, b }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let mut dims: Vec<usize> = layers.first().map(|l| vec![l.n_in]).unwrap_or_default();
        for (i, l) in layers.iter().enumerate() {
            if l.w.len() != l.n_in * l.n_out || l.b.len() != l.n_out {
                return Err(invalid!("layer {i} has inconsistent parameter lengths"));
            }
            if dims.last() != Some(&l.n_in) {
                return Err(invalid!("layer {i} input {} does not match previous output", l.n_in));
            }
            dims.push(l.n_out);
        }
        check_dims(&dims)?;
        Ok(Self { layers })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].n_in];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[i8]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(invalid!("input has dimension {}, network expects {}", x.len(), self.input_dim()));
        }
        Ok(self.value(x))
    }

    /// Unchecked forward pass.
    pub fn value(&self, x: &[i8]) -> f64 {
        let mut h: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.b.clone();
            for (o, row) in out.iter_mut().zip(layer.w.chunks_exact(layer.n_in)) {
                *o += dot(row, &h);
                if l < last {
                    *o = o.max(0.0);
                }
            }
            h = out;
        }
        h[0]
    }

    pub fn forward_tape(&self, x: &[i8], tape: &mut Tape) {
        let n = self.layers.len();
        tape.h.resize_with(n, Vec::new);
        tape.z.resize_with(n, Vec::new);
        tape.h[0].clear();
        tape.h[0].extend(x.iter().map(|&v| v as f64));
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &mut tape.z[l];
            z.clear();
            z.extend(layer.w.chunks_exact(layer.n_in).zip(&layer.b).map(|(row, b)| dot(row, &tape.h[l]) + b));
            if l + 1 < n {
                let (z, h) = (&tape.z[l], &mut tape.h[l + 1]);
                h.clear();
                h.extend(z.iter().map(|&v| v.max(0.0)));
            }
        }
    }

    /// Accumulates `dout · ∇_θ NN` for a recorded pass into `grads`.
    fn backward(&self, tape: &Tape, dout: f64, grads: &mut MlpGrads) {
        if dout == 0.0 {
            return;
        }
        let mut delta = vec![dout];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &tape.h[l];
            for (o, &dl) in delta.iter().enumerate() {
                if dl == 0.0 {
                    continue;
                }
                grads.b[l][o] += dl;
                axpy(dl, input, &mut grads.w[l][o * layer.n_in..(o + 1) * layer.n_in]);
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.n_in];
                for (o, &dl) in delta.iter().enumerate() {
                    if dl != 0.0 {
                        axpy(dl, &layer.w[o * layer.n_in..(o + 1) * layer.n_in], &mut prev);
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&tape.z[l - 1]) {
                    if z < 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Gradient of the TD loss on one consecutive pair.
    pub fn td_gradient(&self, prev: &[i8], next: &[i8], y_prev: f64, y_next: f64, params: TdParams) -> Result<MlpGrads> {
        if prev.len() != self.input_dim() || next.len() != self.input_dim() {
            return Err(invalid!("pair dimension differs from network input {}", self.input_dim()));
        }
        let (mut tp, mut tn) = (Tape::default(), Tape::default());
        self.forward_tape(prev, &mut tp);
        self.forward_tape(next, &mut tn);
        let (gp, gn) = td_loss_output_grads(params, y_prev, y_next, tp.output(), tn.output());
        let mut grads = MlpGrads::zeros(self);
        self.backward(&tp, gp, &mut grads);
        self.backward(&tn, gn, &mut grads);
        Ok(grads)
    }

    /// Gradient of `(NN(x) − y)²`.
    pub fn square_gradient(&self, x: &[i8], y: f64) -> Result<MlpGrads> {
        if x.len() != self.input_dim() {
            return Err(invalid!("input has dimension {}, network expects {}", x.len(), self.input_dim()));
        }
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape);
        let mut grads = MlpGrads::zeros(self);
        self.backward(&tape, 2.0 * (tape.output() - y), &mut grads);
        Ok(grads)
    }

    /// Flat parameter view in the order used by [`MlpGrads::flatten`].
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(invalid!("expected {} parameters, got {}", self.num_params(), flat.len()));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }

    /// One SGD step on the sum of `dout_i · NN(x_i)` over recorded passes.
    /// Both passes are backpropagated through the pre-update weights of each
    /// layer before that layer is overwritten.
    fn sgd_step(&mut self, tapes: &[(&Tape, f64)], lr: f64, scratch: &mut StepScratch) {
        let n_layers = self.layers.len();
        scratch.deltas.resize_with(tapes.len(), Vec::new);
        for (d, (_, dout)) in scratch.deltas.iter_mut().zip(tapes) {
            d.clear();
            d.push(*dout);
        }
        for l in (0..n_layers).rev() {
            let layer = &mut self.layers[l];
            let n_in = layer.n_in;
            if l > 0 {
                scratch.next_deltas.resize_with(tapes.len(), Vec::new);
                for ((delta, nd), (tape, _)) in scratch.deltas.iter().zip(scratch.next_deltas.iter_mut()).zip(tapes) {
                    nd.clear();
                    nd.resize(n_in, 0.0);
                    for (o, &dl) in delta.iter().enumerate() {
                        if dl != 0.0 {
                            axpy(dl, &layer.w[o * n_in..(o + 1) * n_in], nd);
                        }
                    }
                    for (p, &z) in nd.iter_mut().zip(&tape.z[l - 1]) {
                        if z < 0.0 {
                            *p = 0.0;
                        }
                    }
                }
            }
            for (delta, (tape, _)) in scratch.deltas.iter().zip(tapes) {
                let input = &tape.h[l];
                for (o, &dl) in delta.iter().enumerate() {
                    if dl != 0.0 {
                        layer.b[o] -= lr * dl;
                        axpy(-lr * dl, input, &mut layer.w[o * n_in..(o + 1) * n_in]);
                    }
                }
            }
            if l > 0 {
                std::mem::swap(&mut scratch.deltas, &mut scratch.next_deltas);
            }
        }
    }
}

#[derive(Debug, Default, Clone)]
struct StepScratch {
    deltas: Vec<Vec<f64>>,
    next_deltas: Vec<Vec<f64>>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Predictor for MlpNet {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn predict(&self, x: &[i8]) -> f64 {
        self.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    Td { alpha: f64 },
    /// `(NN(x) − y)²` on the newest point.
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataMode {
    Walk { flip_prob: f64 },
    Iid,
}

fn default_window() -> usize {
    1000
}

fn default_test_size() -> usize {
    8192
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub loss: LossKind,
    pub data: DataMode,
    pub lr: f64,
    pub max_iters: u64,
    /// Stop once the mean training loss over the last `stop_window`
    /// iterations drops below this; `null` disables early stopping.
    pub stop_loss: Option<f64>,
    #[serde(default = "default_window")]
    pub stop_window: usize,
    /// Iterations between evaluations; `0` picks `max(1, max_iters/500)`.
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// 1-indexed subsets whose Fourier coefficient is tracked.
    #[serde(default)]
    pub tracked: Vec<Vec<usize>>,
}

impl TrainConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr));
        }
        if self.stop_loss.is_some_and(|s| !(s >= 0.0)) {
            return Err(invalid!("stop_loss must be ≥ 0"));
        }
        if self.stop_window == 0 || self.test_size == 0 || self.max_iters == 0 {
            return Err(invalid!("stop_window, test_size and max_iters must be positive"));
        }
        if let LossKind::Td { alpha } = self.loss {
            TdParams::new(alpha)?;
        }
        if let DataMode::Walk { flip_prob } = self.data {
            WalkConfig::new(dim, flip_prob, 0)?;
        }
        for s in &self.tracked {
            Subset::new(dim, s)?;
        }
        check_dims(&self.layer_dims(dim))
    }

    pub fn layer_dims(&self, dim: usize) -> Vec<usize> {
        let mut d = vec![dim];
        d.extend(&self.hidden);
        d.push(1);
        d
    }

    pub fn resolved_eval_every(&self) -> u64 {
        if self.eval_every == 0 {
            (self.max_iters / 500).max(1)
        } else {
            self.eval_every
        }
    }
}

fn coeff_tag(s: &[usize]) -> String {
    let parts: Vec<String> = s.iter().map(|c| c.to_string()).collect();
    format!("coeff_{}", if parts.is_empty() { "empty".into() } else { parts.join("_") })
}

#[derive(Debug, Clone)]
enum Source {
    Walk(Walk),
    Iid(IidSampler),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum SourceState {
    Walk(WalkSnapshot),
    Iid { rng: RngState, draws: u64 },
}

/// Resumable batch-1 SGD run of an [`MlpNet`].
#[derive(Debug, Clone)]
pub struct MlpTrainer {
    f: BooleanFunction,
    cfg: TrainConfig,
    net: MlpNet,
    source: Source,
    test: TestSet,
    tracked: Vec<Subset>,
    prev: Vec<i8>,
    y_prev: f64,
    iter: u64,
    window: Vec<f64>,
    window_sum: f64,
    log_sum: f64,
    log_count: u64,
    record: RunRecord,
    stopped: bool,
    tape_prev: Tape,
    tape_next: Tape,
    scratch: StepScratch,
}

impl MlpTrainer {
    pub fn new(f: &BooleanFunction, cfg: TrainConfig, seed: u64) -> Result<Self> {
        let dim = f.dim();
        cfg.validate(dim)?;
        let net = MlpNet::init(&cfg.layer_dims(dim), seed)?;
        let mut source = match cfg.data {
            DataMode::Walk { flip_prob } => Source::Walk(Walk::new(WalkConfig::new(dim, flip_prob, seed)?)?),
            DataMode::Iid => Source::Iid(IidSampler::new(dim, seed)),
        };
        // TD on i.i.d. data pairs consecutive draws; the square loss needs no
        // previous point
        let prev = match (&mut source, cfg.loss) {
            (Source::Walk(w), _) => w.current().to_vec(),
            (Source::Iid(s), LossKind::Td { .. }) => s.draw(),
            (Source::Iid(_), LossKind::Square) => vec![1; dim],
        };
        let y_prev = f.value(&prev);
        let test = TestSet::uniform(f, cfg.test_size, seed)?;
        let tracked = cfg.tracked.iter().map(|s| Subset::new(dim, s)).collect::<Result<Vec<_>>>()?;
        let mut columns = vec!["train_loss".to_string(), "test_mse".into(), "test_acc".into()];
        columns.extend(cfg.tracked.iter().map(|s| coeff_tag(s)));
        let config = serde_json::json!({ "learner": "mlp", "train": cfg, "dim": dim });
        Ok(Self {
            f: f.clone(),
            net,
            source,
            test,
            tracked,
            prev,
            y_prev,
            iter: 0,
            window: vec![0.0; cfg.stop_window],
            window_sum: 0.0,
            log_sum: 0.0,
            log_count: 0,
            record: RunRecord::new(columns, config, seed),
            stopped: false,
            tape_prev: Tape::default(),
            tape_next: Tape::default(),
            scratch: StepScratch::default(),
            cfg,
        })
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn iterations(&self) -> u64 {
        self.iter
    }

    pub fn finished(&self) -> bool {
        self.stopped || self.iter >= self.cfg.max_iters
    }

    /// Fresh samples consumed so far.
    pub fn samples(&self) -> u64 {
        match &self.source {
            Source::Walk(w) => w.step_count(),
            Source::Iid(s) => s.draws(),
        }
    }

    fn next_point(&mut self) -> (Vec<i8>, f64) {
        match &mut self.source {
            Source::Walk(w) => {
                let mv = w.step();
                let y = if mv.flipped { self.f.value(w.current()) } else { self.y_prev };
                (w.current().to_vec(), y)
            }
            Source::Iid(s) => {
                let x = s.draw();
                let y = self.f.value(&x);
                (x, y)
            }
        }
    }

    fn train_step(&mut self) -> f64 {
        let (next, y_next) = self.next_point();
        let lr = self.cfg.lr;
        let loss = match self.cfg.loss {
            LossKind::Td { alpha } => {
                let params = TdParams::new(alpha).expect("validated");
                self.net.forward_tape(&self.prev, &mut self.tape_prev);
                self.net.forward_tape(&next, &mut self.tape_next);
                let (yp, yn) = (self.tape_prev.output(), self.tape_next.output());
                let (gp, gn) = td_loss_output_grads(params, self.y_prev, y_next, yp, yn);
                let tapes = [(&self.tape_prev, gp), (&self.tape_next, gn)];
                self.net.sgd_step(&tapes, lr, &mut self.scratch);
                td_loss(params, self.y_prev, y_next, yp, yn)
            }
            LossKind::Square => {
                self.net.forward_tape(&next, &mut self.tape_next);
                let r = self.tape_next.output() - y_next;
                self.net.sgd_step(&[(&self.tape_next, 2.0 * r)], lr, &mut self.scratch);
                r * r
            }
        };
        self.prev = next;
        self.y_prev = y_next;
        loss
    }

    fn log(&mut self) -> Result<()> {
        let train_loss = if self.log_count > 0 {
            self.log_sum / self.log_count as f64
        } else {
            f64::NAN
        };
        let preds = self.test.predictions(&self.net);
        let mut row = vec![train_loss, self.test.mse(&preds), self.test.sign_accuracy(&preds).unwrap_or(f64::NAN)];
        for s in &self.tracked {
            row.push(self.test.fourier_coeff(&preds, s).0);
        }
        self.record.push(self.samples(), row)?;
        self.log_sum = 0.0;
        self.log_count = 0;
        Ok(())
    }

    /// Trains until the iteration budget or the stopping rule is hit, or
    /// until `halt_after` iterations have run in total.
    pub fn run(&mut self, halt_after: Option<u64>) -> Result<()> {
        let every = self.cfg.resolved_eval_every();
        if self.iter == 0 && self.record.rows.is_empty() {
            self.log()?;
        }
        let w = self.cfg.stop_window;
        while !self.finished() {
            if halt_after.is_some_and(|h| self.iter >= h) {
                return Ok(());
            }
            let loss = self.train_step();
            if !loss.is_finite() {
                return Err(invalid!("training diverged at iteration {}", self.iter + 1));
            }
            let slot = (self.iter as usize) % w;
            self.window_sum += loss - self.window[slot];
            self.window[slot] = loss;
            self.iter += 1;
            self.log_sum += loss;
            self.log_count += 1;
            if self.iter % (w as u64) == 0 {
                // re-sum to keep the running total from drifting
                self.window_sum = self.window.iter().sum();
            }
            if let Some(stop) = self.cfg.stop_loss {
                if self.iter >= w as u64 && self.window_sum / (w as f64) < stop {
                    self.stopped = true;
                }
            }
            if self.iter % every == 0 || self.finished() {
                self.log()?;
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> MlpCheckpoint {
        let source = match &self.source {
            Source::Walk(w) => SourceState::Walk(w.snapshot()),
            Source::Iid(s) => {
                let (rng, draws) = s.snapshot();
                SourceState::Iid { rng, draws }
            }
        };
        MlpCheckpoint {
            net: self.net.clone(),
            source,
            prev: self.prev.clone(),
            y_prev: self.y_prev,
            iter: self.iter,
            window: self.window.clone(),
            window_sum: self.window_sum,
            log_sum: self.log_sum,
            log_count: self.log_count,
            stopped: self.stopped,
            record_csv: self.record.to_csv(),
        }
    }

    pub fn resume(mut self, ckpt: &MlpCheckpoint) -> Result<Self> {
        if ckpt.net.layer_dims() != self.net.layer_dims() || ckpt.window.len() != self.window.len() {
            return Err(Error::Format("checkpoint shape differs from configuration".into()));
        }
        self.net = ckpt.net.clone();
        self.source = match (&ckpt.source, &self.source) {
            (SourceState::Walk(s), Source::Walk(_)) => Source::Walk(Walk::restore(s)?),
            (SourceState::Iid { rng, draws }, Source::Iid(_)) => Source::Iid(IidSampler::restore(self.f.dim(), rng, *draws)),
            _ => return Err(Error::Format("checkpoint data mode differs from configuration".into())),
        };
        self.prev = ckpt.prev.clone();
        self.y_prev = ckpt.y_prev;
        self.iter = ckpt.iter;
        self.window = ckpt.window.clone();
        self.window_sum = ckpt.window_sum;
        self.log_sum = ckpt.log_sum;
        self.log_count = ckpt.log_count;
        self.stopped = ckpt.stopped;
        self.record = RunRecord::from_csv(&ckpt.record_csv)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    net: MlpNet,
    source: SourceState,
    prev: Vec<i8>,
    #[serde(with = "hexfloat::scalar")]
    y_prev: f64,
    iter: u64,
    #[serde(with = "hexfloat")]
    window: Vec<f64>,
    #[serde(with = "hexfloat::scalar")]
    window_sum: f64,
    #[serde(with = "hexfloat::scalar")]
    log_sum: f64,
    log_count: u64,
    stopped: bool,
    record_csv: String,
}

/// Trains a fresh network and returns it with its metric record.
pub fn train_mlp(f: &BooleanFunction, cfg: &TrainConfig, seed: u64) -> Result<(MlpNet, RunRecord)> {
    let mut t = MlpTrainer::new(f, cfg.clone(), seed)?;
    t.run(None)?;
    Ok((t.net, t.record))
}
