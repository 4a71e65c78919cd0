//! Experiment specifications, presets and the multi-seed runner.
//!
//! A run writes `<output>/<name>/seed_<s>.csv` per seed and
//! `<output>/<name>/aggregate.csv` once every seed has finished. Unfinished
//! seeds leave a `seed_<s>.ckpt.json` next to their CSV and pick up from it
//! on the next invocation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, BaselineResult, CltReport, CpEstimate, Kernel, ParityOrbitKernel, PhiObservable};
use crate::boolfn::{BooleanFunction, FunctionSpec};
use crate::deepnet::{DataMode, LossKind, MlpCheckpoint, MlpTrainer, TrainConfig, DESK_HIDDEN, PAPER_HIDDEN, PAPER_HIDDEN_MAIN_TEXT};
use crate::error::{invalid, Error, Result};
use crate::record::{Aggregate, RunRecord};
use crate::shallow::{Algorithm1, Algorithm1Checkpoint, BiasRange, Phase, Phase1Config, Phase2Config, StepSize};
use crate::walk::{Walk, WalkConfig};

pub const SPEC_VERSION: u32 = 1;

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "JUNTAWALK_WORKERS";

/// A target given either as a path to a function-spec file (relative to
/// the experiment file) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetRef {
    Path(PathBuf),
    Inline(FunctionSpec),
}

impl TargetRef {
    pub fn resolve(&self, base: &Path) -> Result<BooleanFunction> {
        match self {
            TargetRef::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                if !path.exists() {
                    return Err(invalid!("target file {} does not exist", path.display()));
                }
                FunctionSpec::load(&path)
            }
            TargetRef::Inline(spec) => spec.build(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase1Spec {
    Explicit {
        batch_size: usize,
        lr: f64,
        kappa: f64,
        steps: usize,
    },
    /// `B = ⌈d/ε²⌉`, `γ₁ = √(2Bd)/(κ√k)`, `T₁ = 1`.
    Theorem { kappa: f64, epsilon: f64 },
}

impl Phase1Spec {
    pub fn resolve(&self, f: &BooleanFunction) -> Phase1Config {
        match *self {
            Phase1Spec::Explicit {
                batch_size,
                lr,
                kappa,
                steps,
            } => Phase1Config {
                batch_size,
                lr,
                kappa,
                steps,
            },
            Phase1Spec::Theorem { kappa, epsilon } => Phase1Config::theorem_scaled(f.dim(), f.support_size(), kappa, epsilon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Algorithm1Spec {
    pub flip_prob: f64,
    pub n_hidden: usize,
    pub phase1: Phase1Spec,
    pub phase2: Phase2Config,
    /// Phase-II steps between evaluations; `0` picks `max(1, T₂/500)`.
    #[serde(default)]
    pub eval_every: u64,
}

impl Algorithm1Spec {
    pub fn resolved_eval_every(&self) -> u64 {
        if self.eval_every == 0 {
            (self.phase2.steps / 500).max(1)
        } else {
            self.eval_every
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Mlp(TrainConfig),
    Algorithm1(Algorithm1Spec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub name: String,
    pub target: TargetRef,
    pub learner: LearnerSpec,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Checks the spec and returns the resolved target.
    pub fn validate(&self, base: &Path) -> Result<BooleanFunction> {
        if self.version != SPEC_VERSION {
            return Err(invalid!("unsupported spec version {} (expected {SPEC_VERSION})", self.version));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(invalid!("experiment name `{}` must be non-empty and use [A-Za-z0-9-_.]", self.name));
        }
        if self.seeds.is_empty() {
            return Err(invalid!("seed list is empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(invalid!("seed list has duplicates"));
        }
        let f = self.target.resolve(base)?;
        match &self.learner {
            LearnerSpec::Mlp(cfg) => cfg.validate(f.dim())?,
            LearnerSpec::Algorithm1(a) => {
                WalkConfig::new(f.dim(), a.flip_prob, 0)?;
                a.phase1.resolve(&f).validate()?;
                a.phase2.validate()?;
                if a.n_hidden == 0 {
                    return Err(invalid!("n_hidden must be positive"));
                }
            }
        }
        Ok(f)
    }

    pub fn run_dir(&self, base: &Path) -> PathBuf {
        let out = if self.output.is_absolute() { self.output.clone() } else { base.join(&self.output) };
        out.join(&self.name)
    }
}

/// The desk-scale MLP configuration: 64-64-32, batch 1, learning rate
/// 0.005, stopping at training loss 0.01 or 5·10⁵ iterations.
pub fn desk_mlp_config(loss: LossKind, data: DataMode) -> TrainConfig {
    TrainConfig {
        hidden: DESK_HIDDEN.to_vec(),
        loss,
        data,
        lr: 0.005,
        max_iters: 500_000,
        stop_loss: Some(0.01),
        stop_window: 1000,
        eval_every: 0,
        test_size: 8192,
        tracked: vec![vec![1], vec![6], vec![1, 2, 3, 4, 5]],
    }
}

pub const TD_ALPHA: f64 = 0.9;
pub const EXPERIMENT_FLIP_PROB: f64 = 0.9;

pub fn walk_td() -> (LossKind, DataMode) {
    (LossKind::Td { alpha: TD_ALPHA }, DataMode::Walk { flip_prob: EXPERIMENT_FLIP_PROB })
}

pub fn walk_square() -> (LossKind, DataMode) {
    (LossKind::Square, DataMode::Walk { flip_prob: EXPERIMENT_FLIP_PROB })
}

pub fn iid_td() -> (LossKind, DataMode) {
    (LossKind::Td { alpha: TD_ALPHA }, DataMode::Iid)
}

pub fn iid_square() -> (LossKind, DataMode) {
    (LossKind::Square, DataMode::Iid)
}

/// Algorithm-1 settings for the 3-parity at `d = 30`.
pub fn algorithm1_3parity_spec() -> Algorithm1Spec {
    Algorithm1Spec {
        flip_prob: 0.5,
        n_hidden: 1000,
        phase1: Phase1Spec::Theorem {
            kappa: 1e-3,
            epsilon: 0.02,
        },
        phase2: Phase2Config {
            lr: StepSize::InverseSmoothness { fraction: 0.1 },
            ridge: 1e-6,
            steps: 5_000_000,
            bias_range: BiasRange::L1Plus { margin: 1.0 },
        },
        eval_every: 0,
    }
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub specs: Vec<ExperimentSpec>,
}

fn spec(name: &str, target: FunctionSpec, learner: LearnerSpec, seeds: Vec<u64>) -> ExperimentSpec {
    ExperimentSpec {
        version: SPEC_VERSION,
        name: name.into(),
        target: TargetRef::Inline(target),
        learner,
        seeds,
        output: PathBuf::from("results"),
    }
}

fn mlp_arms(prefix: &str, dim: usize, hidden: &[usize], arms: &[(&str, (LossKind, DataMode))], max_iters: u64) -> Vec<ExperimentSpec> {
    arms.iter()
        .map(|(tag, (loss, data))| {
            let mut cfg = desk_mlp_config(*loss, *data);
            cfg.hidden = hidden.to_vec();
            cfg.max_iters = max_iters;
            spec(
                &format!("{prefix}-{tag}"),
                FunctionSpec::parity(dim, vec![1, 2, 3, 4, 5]),
                LearnerSpec::Mlp(cfg),
                (0..5).collect(),
            )
        })
        .collect()
}

pub fn presets() -> Vec<Preset> {
    let fig1_arms = [("walk-td", walk_td()), ("iid-td", iid_td()), ("iid-square", iid_square())];
    let seven = FunctionSpec::from(&crate::boolfn::seven_junta(50).expect("d = 50 holds seven coordinates"));
    let mut seven_cfg = desk_mlp_config(LossKind::Td { alpha: TD_ALPHA }, DataMode::Walk { flip_prob: EXPERIMENT_FLIP_PROB });
    seven_cfg.hidden = PAPER_HIDDEN.to_vec();
    seven_cfg.max_iters = 1_000_000;
    seven_cfg.tracked = vec![vec![1], vec![6], vec![7], vec![1, 2, 3, 4, 5], vec![1, 2, 3, 4, 5, 6, 7]];
    vec![
        Preset {
            name: "fig1-desk",
            description: "5-parity at d=30, 64-64-32 MLP: walk+TD against i.i.d.+TD and i.i.d.+square",
            specs: mlp_arms("fig1-desk", 30, &DESK_HIDDEN, &fig1_arms, 500_000),
        },
        Preset {
            name: "fig3-desk",
            description: "5-parity at d=30, 64-64-32 MLP: walk data with the square loss",
            specs: mlp_arms("fig3-desk", 30, &DESK_HIDDEN, &[("walk-square", walk_square())], 500_000),
        },
        Preset {
            name: "fig1-paper",
            description: "5-parity at d=50, 512-512-64 MLP, up to 10^6 iterations",
            specs: mlp_arms("fig1-paper", 50, &PAPER_HIDDEN, &fig1_arms, 1_000_000),
        },
        Preset {
            name: "fig1-paper-main-text",
            description: "5-parity at d=50, 512-1024-64 MLP, up to 10^6 iterations",
            specs: mlp_arms("fig1-paper-main-text", 50, &PAPER_HIDDEN_MAIN_TEXT, &fig1_arms, 1_000_000),
        },
        Preset {
            name: "seven-junta",
            description: "7-junta at d=50, 512-512-64 MLP, walk+TD",
            specs: vec![spec("seven-junta", seven, LearnerSpec::Mlp(seven_cfg), (0..5).collect())],
        },
        Preset {
            name: "algorithm1-3parity",
            description: "layerwise two-phase training of a two-layer net on the 3-parity at d=30",
            specs: vec![spec(
                "algorithm1-3parity",
                FunctionSpec::parity(30, vec![1, 2, 3]),
                LearnerSpec::Algorithm1(algorithm1_3parity_spec()),
                (0..5).collect(),
            )],
        },
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| invalid!("unknown preset `{name}`"))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Progress units (iterations for the MLP, walk steps for Algorithm 1)
    /// between checkpoints; `0` disables checkpointing.
    pub checkpoint_every: u64,
    /// Halts every seed once it reaches this much progress, leaving a
    /// checkpoint behind. Used to exercise resumption.
    pub halt_after: Option<u64>,
    pub gnuplot: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            checkpoint_every: 100_000,
            halt_after: None,
            gnuplot: false,
        }
    }
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available cores.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(invalid!("{WORKERS_ENV} must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LearnerState {
    Mlp(MlpCheckpoint),
    Algorithm1(Algorithm1Checkpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    seed: u64,
    target: FunctionSpec,
    learner: LearnerSpec,
    state: LearnerState,
}

enum Learner {
    Mlp(Box<MlpTrainer>),
    Algorithm1(Box<Algorithm1>),
}

impl Learner {
    fn new(f: &BooleanFunction, spec: &LearnerSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            LearnerSpec::Mlp(cfg) => Learner::Mlp(Box::new(MlpTrainer::new(f, cfg.clone(), seed)?)),
            LearnerSpec::Algorithm1(a) => Learner::Algorithm1(Box::new(Algorithm1::new(
                f,
                WalkConfig::new(f.dim(), a.flip_prob, seed)?,
                a.phase1.resolve(f),
                a.phase2,
                a.n_hidden,
                seed,
                a.resolved_eval_every(),
            )?)),
        })
    }

    fn progress(&self) -> u64 {
        match self {
            Learner::Mlp(t) => t.iterations(),
            Learner::Algorithm1(r) => r.samples(),
        }
    }

    fn finished(&self) -> bool {
        match self {
            Learner::Mlp(t) => t.finished(),
            Learner::Algorithm1(r) => r.phase() == Phase::Done,
        }
    }

    fn run(&mut self, halt_after: Option<u64>) -> Result<()> {
        match self {
            Learner::Mlp(t) => t.run(halt_after),
            Learner::Algorithm1(r) => r.run(halt_after),
        }
    }

    fn record(&self) -> &RunRecord {
        match self {
            Learner::Mlp(t) => t.record(),
            Learner::Algorithm1(r) => r.record(),
        }
    }

    fn state(&self) -> LearnerState {
        match self {
            Learner::Mlp(t) => LearnerState::Mlp(t.checkpoint()),
            Learner::Algorithm1(r) => LearnerState::Algorithm1(r.checkpoint()),
        }
    }

    fn resume(self, state: &LearnerState) -> Result<Self> {
        Ok(match (self, state) {
            (Learner::Mlp(t), LearnerState::Mlp(c)) => Learner::Mlp(Box::new(t.resume(c)?)),
            (Learner::Algorithm1(r), LearnerState::Algorithm1(c)) => Learner::Algorithm1(Box::new(r.resume(c)?)),
            _ => return Err(Error::Format("checkpoint learner kind differs from the spec".into())),
        })
    }
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedStatus {
    Completed,
    /// Already complete on disk; nothing was recomputed.
    Reused,
    Halted { progress: u64 },
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seeds: Vec<(u64, SeedStatus)>,
    pub aggregate: Option<PathBuf>,
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.ckpt.json"))
}

fn run_seed(f: &BooleanFunction, spec: &ExperimentSpec, dir: &Path, seed: u64, opts: &RunOptions) -> Result<SeedStatus> {
    let csv = seed_csv_path(dir, seed);
    let ckpt = checkpoint_path(dir, seed);
    if csv.exists() && !ckpt.exists() {
        return Ok(SeedStatus::Reused);
    }
    let target = FunctionSpec::from(f);
    let mut learner = Learner::new(f, &spec.learner, seed)?;
    if ckpt.exists() {
        let saved: CheckpointFile = serde_json::from_str(&fs::read_to_string(&ckpt)?)?;
        if saved.seed != seed || saved.learner != spec.learner || saved.target != target {
            return Err(Error::Format(format!(
                "checkpoint {} was written for a different configuration",
                ckpt.display()
            )));
        }
        learner = learner.resume(&saved.state)?;
    }
    let save = |learner: &Learner| -> Result<()> {
        let file = CheckpointFile {
            version: SPEC_VERSION,
            seed,
            target: target.clone(),
            learner: spec.learner.clone(),
            state: learner.state(),
        };
        write_atomic(&ckpt, &serde_json::to_string(&file)?)?;
        write_atomic(&csv, &learner.record().to_csv())
    };
    while !learner.finished() {
        let mut next = if opts.checkpoint_every > 0 {
            learner.progress() + opts.checkpoint_every
        } else {
            u64::MAX
        };
        if let Some(h) = opts.halt_after {
            if learner.progress() >= h {
                save(&learner)?;
                return Ok(SeedStatus::Halted {
                    progress: learner.progress(),
                });
            }
            next = next.min(h);
        }
        learner.run((next != u64::MAX).then_some(next))?;
        if !learner.finished() && opts.checkpoint_every > 0 {
            save(&learner)?;
        }
    }
    write_atomic(&csv, &learner.record().to_csv())?;
    if ckpt.exists() {
        fs::remove_file(&ckpt)?;
    }
    Ok(SeedStatus::Completed)
}

/// Runs every seed of `spec` (paths resolve against `base`) and writes the
/// aggregate once all seeds are complete.
pub fn run_experiment(spec: &ExperimentSpec, base: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let f = spec.validate(base)?;
    let dir = spec.run_dir(base);
    fs::create_dir_all(&dir)?;
    write_atomic(&dir.join("spec.json"), &spec.to_json())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| invalid!("cannot build worker pool: {e}"))?;
    let statuses: Vec<Result<SeedStatus>> =
        pool.install(|| spec.seeds.par_iter().map(|&s| run_seed(&f, spec, &dir, s, opts)).collect());
    let mut seeds = Vec::with_capacity(statuses.len());
    for (&s, st) in spec.seeds.iter().zip(statuses) {
        seeds.push((s, st?));
    }
    let mut aggregate = None;
    if seeds.iter().all(|(_, st)| !matches!(st, SeedStatus::Halted { .. })) {
        let records = spec
            .seeds
            .iter()
            .map(|&s| RunRecord::from_csv(&fs::read_to_string(seed_csv_path(&dir, s))?))
            .collect::<Result<Vec<_>>>()?;
        let path = dir.join("aggregate.csv");
        write_atomic(&path, &Aggregate::from_records(&records)?.to_csv())?;
        if opts.gnuplot {
            write_atomic(&dir.join("plot.gp"), &gnuplot_script(spec, &records[0].columns))?;
        }
        aggregate = Some(path);
    }
    Ok(RunSummary { dir, seeds, aggregate })
}

/// A gnuplot script plotting the aggregate mean with ±1 standard deviation.
pub fn gnuplot_script(spec: &ExperimentSpec, columns: &[String]) -> String {
    let metric = if columns.iter().any(|c| c == "test_acc") { "test_acc" } else { "test_mse" };
    // aggregate layout: samples, n_runs, then (mean, std) per column
    let idx = columns.iter().position(|c| c == metric).unwrap_or(0);
    let mean_col = 3 + 2 * idx;
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{}.png'", spec.name);
    let _ = writeln!(s, "set xlabel 'fresh samples'");
    let _ = writeln!(s, "set ylabel '{metric}'");
    let _ = writeln!(
        s,
        "plot 'aggregate.csv' every ::1 using 1:{m}:(${m}-${sd}):(${m}+${sd}) with filledcurves fs transparent solid 0.2 notitle, \\",
        m = mean_col,
        sd = mean_col + 1
    );
    let _ = writeln!(s, "     '' every ::1 using 1:{mean_col} with lines title '{}'", spec.name);
    s
}

/// JSON summary attached to every analysis report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub estimate: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub csv: String,
    pub summary: AnalysisSummary,
}

impl Report {
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(format!("{stem}.csv")), &self.csv)?;
        write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(&self.summary)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpRow {
    pub batch: usize,
    pub estimate: CpEstimate,
    pub bound: f64,
    pub holds: bool,
}

/// Random-walk batch CP of the k-parity orbit against `CP + d/(pB)` for each
/// batch size.
pub fn analyze_cp(dim: usize, k: usize, flip_prob: f64, batches: &[usize], n_outer: usize, seed: u64) -> Result<(Vec<CpRow>, Report)> {
    let kernel = ParityOrbitKernel::new(dim, k)?;
    let cp = analysis::cp_exact_parity_orbit(dim, k)?;
    let mut rows = Vec::with_capacity(batches.len());
    let mut csv = String::from("batch,estimate,std_error,cp_exact,bound,holds\n");
    for &b in batches {
        let est = analysis::cp_rw_batch(&kernel, flip_prob, b, n_outer, seed)?;
        let bound = cp + kernel.dim() as f64 / (flip_prob * b as f64);
        let holds = est.value <= bound + 3.0 * est.std_error;
        let _ = writeln!(csv, "{b},{},{},{cp},{bound},{holds}", est.value, est.std_error);
        rows.push(CpRow {
            batch: b,
            estimate: est,
            bound,
            holds,
        });
    }
    let last = rows.last().map(|r| r.estimate);
    let summary = AnalysisSummary {
        estimate: last.map_or(cp, |e| e.value),
        std_error: last.map_or(0.0, |e| e.std_error),
        n: n_outer as u64,
        seed,
        config: serde_json::json!({"kind": "cp", "d": dim, "k": k, "p": flip_prob, "batches": batches, "cp_exact": cp}),
    };
    Ok((rows, Report { csv, summary }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub t: f64,
    pub m: f64,
    pub a: f64,
    pub tau: f64,
    pub dim: usize,
    pub k: usize,
    pub flip_prob: f64,
    pub batch: f64,
}

pub fn analyze_bound(p: &BoundParams) -> Result<(f64, Report)> {
    let cp = analysis::cp_exact_parity_orbit(p.dim, p.k)?;
    let v = analysis::lower_bound_rhs(p.t, p.m, p.a, p.tau, cp, p.dim as f64, p.flip_prob, p.batch)?;
    let csv = format!("t,m,a,tau,cp,d,p,batch,rhs\n{},{},{},{},{cp},{},{},{},{v}\n", p.t, p.m, p.a, p.tau, p.dim, p.flip_prob, p.batch);
    let summary = AnalysisSummary {
        estimate: v,
        std_error: 0.0,
        n: 1,
        seed: 0,
        config: serde_json::to_value(p)?,
    };
    Ok((v, Report { csv, summary }))
}

/// CLT check for the k-parity on coordinates `1..=k` along the direction
/// from the all-ones pattern to the pattern with its last sign flipped.
pub fn analyze_clt(k: usize, flip_prob: f64, t: usize, replicas: usize, seed: u64, ceiling: f64) -> Result<(CltReport, Report)> {
    let support: Vec<usize> = (1..=k).collect();
    let f = BooleanFunction::parity(k, &support)?;
    let s = vec![1i8; k];
    let mut r = s.clone();
    r[k - 1] = -1;
    let obs = PhiObservable::new(&f, &s, &r)?;
    let rep = analysis::clt_check(&obs, flip_prob, t, replicas, seed, ceiling)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let csv = format!(
        "t,ks_mc,ks_exact\n{t},{},{}\n{},{},{}\n",
        rep.ks_distance,
        opt(rep.exact_distance),
        16 * t,
        rep.ks_distance_16t,
        opt(rep.exact_distance_16t)
    );
    let summary = AnalysisSummary {
        estimate: rep.ks_distance,
        std_error: 1.0 / (replicas as f64).sqrt(),
        n: replicas as u64,
        seed,
        config: serde_json::json!({"kind": "clt", "k": k, "p": flip_prob, "t": t, "ceiling": ceiling,
            "sigma_hat": rep.sigma_hat, "shrink_ratio": rep.shrink_ratio(), "pass": rep.pass}),
    };
    Ok((rep, Report { csv, summary }))
}

/// Support recovery over `seeds` independent walks.
pub fn analyze_baseline(f: &BooleanFunction, flip_prob: f64, seeds: &[u64], patience: u64, cap: u64) -> Result<(Vec<BaselineResult>, Report)> {
    let results = seeds
        .iter()
        .map(|&s| {
            let mut walk = Walk::new(WalkConfig::new(f.dim(), flip_prob, s)?)?;
            analysis::baseline_support_recovery(f, &mut walk, patience, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("seed,support,steps,last_discovery,capped\n");
    for (s, r) in seeds.iter().zip(&results) {
        let sup: Vec<String> = r.support.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(csv, "{s},{},{},{},{}", sup.join(" "), r.steps, r.last_discovery, r.capped);
    }
    let last: Vec<f64> = results.iter().map(|r| r.last_discovery as f64).collect();
    let (mean, sd) = crate::record::mean_std(last.iter().copied());
    let summary = AnalysisSummary {
        estimate: mean,
        std_error: sd / (last.len() as f64).sqrt(),
        n: seeds.len() as u64,
        seed: seeds.first().copied().unwrap_or(0),
        config: serde_json::json!({"kind": "baseline", "d": f.dim(), "p": flip_prob, "patience": patience, "cap": cap,
            "true_support": f.support()}),
    };
    Ok((results, Report { csv, summary }))
}
