use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use juntawalk::boolfn::FunctionSpec;
use juntawalk::harness::{self, BoundParams, ExperimentSpec, RunOptions, SeedStatus};
use juntawalk::verify::{self, SuiteOptions};
use juntawalk::Error;

#[derive(Parser)]
#[command(name = "juntawalk", version, about = "Junta learning from lazy random-walk data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run experiment specs (JSON files) or a named preset.
    Run {
        specs: Vec<PathBuf>,
        #[arg(long, conflicts_with = "specs")]
        preset: Option<String>,
        /// Base directory for preset outputs.
        #[arg(long, default_value = ".")]
        base: PathBuf,
        #[arg(long)]
        gnuplot_script: bool,
        /// Progress units between checkpoints, 0 to disable.
        #[arg(long, default_value_t = 100_000)]
        checkpoint_every: u64,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
        #[arg(long)]
        skip_determinism: bool,
    },
    Analyze {
        #[command(subcommand)]
        kind: Analyze,
    },
    /// List presets, or write one out as spec files.
    Presets {
        name: Option<String>,
        #[arg(long, requires = "name")]
        write: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Random-walk batch cross-predictability of the k-parity orbit.
    Cp {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        p: f64,
        #[arg(long = "B", value_delimiter = ',', required = true)]
        batches: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        outer: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Right-hand side of the large-batch accuracy bound.
    Bound {
        #[arg(long = "T")]
        t: f64,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        #[arg(long = "A", default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long = "B", default_value_t = 1.0)]
        batch: f64,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Gaussian approximation of the additive edge functional.
    Clt {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long = "T", default_value_t = 10_000)]
        t: usize,
        #[arg(long, default_value_t = 2000)]
        replicas: usize,
        #[arg(long, default_value_t = 0.05)]
        ceiling: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Support recovery by watching which flips change the label.
    Baseline {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Defaults to 20·(d/p)·ln(k+1) with k the true support size.
        #[arg(long)]
        patience: Option<u64>,
        #[arg(long)]
        cap: Option<u64>,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
}

const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidArgument(_) | Error::Json(_) => USAGE,
                _ => 1,
            })
        }
    }
}

fn dispatch(cmd: Cmd) -> juntawalk::Result<u8> {
    match cmd {
        Cmd::Run {
            specs,
            preset,
            base,
            gnuplot_script,
            checkpoint_every,
        } => {
            let opts = RunOptions {
                workers: harness::workers_from_env()?,
                checkpoint_every,
                halt_after: None,
                gnuplot: gnuplot_script,
            };
            let jobs: Vec<(ExperimentSpec, PathBuf)> = match preset {
                Some(name) => harness::preset(&name)?.specs.into_iter().map(|s| (s, base.clone())).collect(),
                None if specs.is_empty() => return Err(Error::InvalidArgument("give spec files or --preset".into())),
                None => specs
                    .iter()
                    .map(|p| Ok((ExperimentSpec::load(p)?, parent(p))))
                    .collect::<juntawalk::Result<_>>()?,
            };
            for (spec, dir) in &jobs {
                spec.validate(dir)?;
            }
            for (spec, dir) in &jobs {
                let summary = harness::run_experiment(spec, dir, &opts)?;
                for (seed, st) in &summary.seeds {
                    let st = match st {
                        SeedStatus::Completed => "completed".to_string(),
                        SeedStatus::Reused => "reused".to_string(),
                        SeedStatus::Halted { progress } => format!("halted at {progress}"),
                    };
                    println!("{} seed {seed}: {st}", spec.name);
                }
                if let Some(a) = &summary.aggregate {
                    println!("{} aggregate: {}", spec.name, a.display());
                }
            }
            Ok(0)
        }
        Cmd::Verify { only, skip_determinism } => {
            let opts = SuiteOptions {
                only,
                determinism: !skip_determinism,
            };
            let results = verify::run_suite(&opts, |r| println!("{}", r.line()));
            let passed = verify::suite_passed(&results);
            let failed = results.iter().filter(|r| !r.pass && r.gating).count();
            println!("{} checks, {failed} gating failures", results.len());
            Ok(if passed { 0 } else { 1 })
        }
        Cmd::Analyze { kind } => analyze(kind),
        Cmd::Presets { name, write } => {
            match (name, write) {
                (None, _) => {
                    for p in harness::presets() {
                        println!("{:<22} {}", p.name, p.description);
                    }
                }
                (Some(name), None) => {
                    for s in harness::preset(&name)?.specs {
                        println!("{}", s.to_json());
                    }
                }
                (Some(name), Some(dir)) => {
                    std::fs::create_dir_all(&dir)?;
                    for s in harness::preset(&name)?.specs {
                        let path = dir.join(format!("{}.json", s.name));
                        std::fs::write(&path, s.to_json())?;
                        println!("{}", path.display());
                    }
                }
            }
            Ok(0)
        }
    }
}

fn parent(p: &Path) -> PathBuf {
    p.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn analyze(kind: Analyze) -> juntawalk::Result<u8> {
    match kind {
        Analyze::Cp {
            d,
            k,
            p,
            batches,
            outer,
            seed,
            out,
        } => {
            let (rows, report) = harness::analyze_cp(d, k, p, &batches, outer, seed)?;
            report.write(&out, "cp")?;
            print!("{}", report.csv);
            Ok(if rows.iter().all(|r| r.holds) { 0 } else { 1 })
        }
        Analyze::Bound {
            t,
            m,
            a,
            tau,
            d,
            k,
            p,
            batch,
            out,
        } => {
            let params = BoundParams {
                t,
                m,
                a,
                tau,
                dim: d,
                k,
                flip_prob: p,
                batch,
            };
            let (v, report) = harness::analyze_bound(&params)?;
            report.write(&out, "bound")?;
            println!("{v}");
            Ok(0)
        }
        Analyze::Clt {
            k,
            p,
            t,
            replicas,
            ceiling,
            seed,
            out,
        } => {
            let (rep, report) = harness::analyze_clt(k, p, t, replicas, seed, ceiling)?;
            report.write(&out, "clt")?;
            print!("{}", report.csv);
            Ok(if rep.pass { 0 } else { 1 })
        }
        Analyze::Baseline {
            target,
            p,
            seeds,
            patience,
            cap,
            out,
        } => {
            let f = FunctionSpec::load(&target)?;
            let default = verify::baseline_step_bound(f.dim(), f.support_size(), p).ceil() as u64;
            let patience = patience.unwrap_or(default);
            let cap = cap.unwrap_or(50 * patience);
            let seed_list: Vec<u64> = (0..seeds).collect();
            let (_, report) = harness::analyze_baseline(&f, p, &seed_list, patience, cap)?;
            report.write(&out, "baseline")?;
            print!("{}", report.csv);
            Ok(0)
        }
    }
}
