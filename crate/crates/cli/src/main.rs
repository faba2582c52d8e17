//! `nckernel`: datasets, Gram matrices, NC1, sweeps, EoS solves, FCN training and verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use nckernel::data::{read_matrix_csv, write_matrix_csv};
use nckernel::eos::{default_schedule, solve_eos, AnnealSchedule};
use nckernel::fcn::{init_fcn, train, FcnArch, TrainConfig};
use nckernel::kernels::{feature_gram, Activation};
use nckernel::nc1::{data_nc1, Nc1Record};
use nckernel::rng::derive_seed;
use nckernel::sweep::{DatasetPreset, RecordStatus, SweepConfig};
use nckernel::verify::{run_suite, Suite};
use nckernel::{assemble_gram, emit_outputs, nc1_of_features, nc1_of_gram, run_sweep, Dataset, Gram, KernelKind, Nc1Report};

#[derive(Parser)]
#[command(name = "nckernel", version, about = "NC1 of NNGP, NTK, adaptive EoS kernels and finite-width networks")]
struct Cli {
    /// TOML configuration; read by `sweep` (whole file) and `eos` (hyperparameters and `[solver]`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit 0 even when some records are not ok.
    #[arg(long, global = true)]
    allow_partial: bool,
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write `<name>.csv` and `<name>.json`.
    Gen {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "data")]
        name: String,
    },
    /// Assemble a kernel Gram matrix and export it.
    Gram {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        kernel: KernelKind,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// NC1 of a Gram matrix, a feature matrix, or a kernel on a dataset.
    Nc1 {
        /// Stem of an exported Gram pair.
        #[arg(long, conflicts_with_all = ["features", "kernel"])]
        gram: Option<PathBuf>,
        /// Sample-major feature CSV (`N × d`); needs `--partition`.
        #[arg(long, requires = "partition")]
        features: Option<PathBuf>,
        /// Class sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        partition: Option<Vec<usize>>,
        /// Kernel evaluated on the dataset given by the data flags.
        #[arg(long)]
        kernel: Option<KernelKind>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Stabilizer of the relative NC1.
        #[arg(long, default_value_t = nckernel::nc1::DEFAULT_TAU)]
        tau: f64,
    },
    /// (N, d0) sweep over methods and seeds.
    Sweep {
        /// Named profile used when no config file is given.
        #[arg(long, default_value = "d1")]
        profile: String,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        d0_grid: Option<Vec<usize>>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Methods: kernel names, `eos:<d1>` or `fcn:<activation>`.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        no_svg: bool,
    },
    /// Solve the Equations of State at a target width.
    Eos {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2000)]
        target_d1: u64,
        /// σ_a²
        #[arg(long, default_value_t = nckernel::eos::DEFAULT_READOUT_VAR)]
        readout_var: f64,
        /// Ridge σ².
        #[arg(long, default_value_t = nckernel::eos::DEFAULT_RIDGE)]
        sigma2: f64,
        /// Explicit annealing factors, comma separated, ending at the target.
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<f64>>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Train a fully connected network and report penultimate-feature NC1.
    TrainFcn {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 500)]
        width: usize,
        #[arg(long, default_value = "erf")]
        activation: Activation,
        /// Training preset: erf, relu or non-separable; defaults to the activation's.
        #[arg(long)]
        train_preset: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        /// Weight decay λ.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Oracle comparisons; `all` runs every suite.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Stem of a dataset pair written by `gen`; overrides the preset flags.
    #[arg(long)]
    data: Option<PathBuf>,
    /// d1, d2, imbalanced, non-separable or wide.
    #[arg(long, default_value = "d1")]
    preset: String,
    #[arg(short = 'n', long = "n", default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    d0: usize,
    /// First-class share for the imbalanced preset.
    #[arg(long, default_value_t = 0.125)]
    minority_fraction: f64,
}

#[derive(Args, Clone)]
struct HyperArgs {
    /// σ_w²
    #[arg(long)]
    weight_var: Option<f64>,
    /// σ_b²
    #[arg(long)]
    bias_var: Option<f64>,
}

impl DataArgs {
    fn preset(&self) -> Result<DatasetPreset> {
        Ok(match self.preset.as_str() {
            "d1" => DatasetPreset::D1,
            "d2" => DatasetPreset::D2,
            "imbalanced" => DatasetPreset::Imbalanced { minority_fraction: self.minority_fraction },
            "non-separable" => DatasetPreset::NonSeparable,
            "wide" => DatasetPreset::Wide,
            other => bail!("unknown dataset preset `{other}`"),
        })
    }

    fn load(&self, seed: u64) -> Result<Dataset> {
        match &self.data {
            Some(stem) => Dataset::read_csv_pair(stem).with_context(|| format!("reading dataset {}", stem.display())),
            None => Ok(self.preset()?.sample(self.n, self.d0, seed)?),
        }
    }
}

impl HyperArgs {
    fn resolve(&self, base: &SweepConfig, d0: usize) -> nckernel::HyperParams {
        let mut h = base.hyper(d0);
        if let Some(v) = self.weight_var {
            h.weight_var = v;
        }
        if let Some(v) = self.bias_var {
            h.bias_var = v;
        }
        h
    }
}

/// One NC1 outcome written as JSON by the single-record subcommands.
#[derive(Serialize)]
struct StatusRecord {
    status: RecordStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<Nc1Record>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn status_of(e: &nckernel::Error) -> RecordStatus {
    match e {
        nckernel::Error::DegenerateBetweenVariance(_)
        | nckernel::Error::NegativeWithinVariance(_)
        | nckernel::Error::DegenerateInput { .. } => RecordStatus::Degenerate,
        nckernel::Error::NonConvergence { .. } => RecordStatus::NonConverged,
        nckernel::Error::Diverged { .. } => RecordStatus::Diverged,
        _ => RecordStatus::Failed,
    }
}

/// Writes `<stem>.json` for an NC1 outcome and returns whether it is ok.
fn emit_record(
    path: &Path,
    kind: &str,
    partition: &[usize],
    seed: u64,
    d0: usize,
    outcome: nckernel::Result<Nc1Report>,
) -> Result<bool> {
    let rec = match outcome {
        Ok(report) => {
            println!("{kind}: NC1 = {:e} (log10 {:.4})", report.nc1, report.log10_nc1);
            StatusRecord {
                status: RecordStatus::Ok,
                message: None,
                record: Some(Nc1Record {
                    kind: kind.to_string(),
                    n: partition.iter().sum(),
                    d0,
                    partition: partition.to_vec(),
                    seed,
                    report,
                }),
            }
        }
        Err(e) => {
            eprintln!("{kind}: {e}");
            StatusRecord { status: status_of(&e), message: Some(e.to_string()), record: None }
        }
    };
    let ok = rec.status == RecordStatus::Ok;
    write_json(path, &rec)?;
    Ok(ok)
}

fn base_config(cli: &Cli) -> Result<SweepConfig> {
    match &cli.config {
        Some(path) => Ok(SweepConfig::from_toml_path(path)?),
        None => Ok(SweepConfig::profile("d1")?),
    }
}

fn with_data(report: nckernel::Result<Nc1Report>, ds: &Dataset, tau: f64) -> nckernel::Result<Nc1Report> {
    report?.with_data(data_nc1(ds)?, tau)
}

fn run(cli: &Cli) -> Result<bool> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let seed = cli.seed.unwrap_or(0);
    let out = &cli.out;
    match &cli.command {
        Command::Gen { data, name } => {
            let ds = data.load(seed)?;
            let (csv, json) = ds.write_csv_pair(&out.join(name))?;
            println!("wrote {} and {}", csv.display(), json.display());
            Ok(true)
        }
        Command::Gram { data, kernel, hyper } => {
            let ds = data.load(seed)?;
            let h = hyper.resolve(&base_config(cli)?, ds.d0());
            match assemble_gram(*kernel, &ds, &h) {
                Ok(g) => {
                    let (csv, json) = g.export(&out.join(format!("gram_{}", kernel.name())))?;
                    println!("wrote {} and {}", csv.display(), json.display());
                    Ok(true)
                }
                Err(e) => {
                    eprintln!("{}: {e}", kernel.name());
                    Ok(false)
                }
            }
        }
        Command::Nc1 { gram, features, partition, kernel, data, hyper, tau } => {
            let path = out.join("nc1.json");
            if let Some(stem) = gram {
                let g = Gram::import(stem).with_context(|| format!("reading Gram {}", stem.display()))?;
                let kind = g.kind().map(|k| k.name().to_string()).unwrap_or_else(|| "gram".into());
                let d0 = g.hyper.map(|h| h.d0).unwrap_or(0);
                let partition = g.partition.clone();
                emit_record(&path, &kind, &partition, seed, d0, nc1_of_gram(&g))
            } else if let Some(file) = features {
                let h = read_matrix_csv(file)?;
                let partition = partition.clone().expect("required by clap");
                emit_record(&path, "features", &partition, seed, h.ncols(), nc1_of_features(&h, &partition))
            } else {
                let ds = data.load(seed)?;
                let hp = hyper.resolve(&base_config(cli)?, ds.d0());
                let (name, report) = match kernel {
                    Some(k) => (k.name(), assemble_gram(*k, &ds, &hp).and_then(|g| nc1_of_gram(&g))),
                    None => ("data", nc1_of_gram(&feature_gram(&ds.x.transpose(), &ds.partition)?)),
                };
                emit_record(&path, name, &ds.partition.clone(), ds.seed(), ds.d0(), with_data(report, &ds, *tau))
            }
        }
        Command::Sweep { profile, n_grid, d0_grid, seeds, methods, no_svg } => {
            let mut cfg = match &cli.config {
                Some(path) => SweepConfig::from_toml_path(path)?,
                None => SweepConfig::profile(profile)?,
            };
            if let Some(v) = n_grid {
                cfg.n_grid = v.clone();
            }
            if let Some(v) = d0_grid {
                cfg.d0_grid = v.clone();
            }
            if let Some(v) = seeds {
                cfg.seeds = *v;
            }
            if let Some(v) = methods {
                cfg.methods = v.iter().map(|m| m.parse()).collect::<nckernel::Result<_>>()?;
            }
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            cfg.output_dir = out.clone();
            cfg.validate()?;
            let result = run_sweep(&cfg)?;
            let files = emit_outputs(&result, out, !no_svg)?;
            for (status, count) in result.status_counts() {
                if count > 0 {
                    println!("{:>14}: {count}", status.name());
                }
            }
            println!("{} records, {} files in {}", result.records.len(), files.len(), out.display());
            Ok(result.all_ok())
        }
        Command::Eos { data, target_d1, readout_var, sigma2, schedule, tolerance, hyper } => {
            let base = base_config(cli)?;
            let ds = data.load(seed)?;
            let mut h = hyper.resolve(&base, ds.d0());
            h.readout_var = *readout_var;
            let sched = match schedule {
                Some(f) => AnnealSchedule::new(f.clone())?,
                None => default_schedule(*target_d1)?,
            };
            let mut solver = base.solver;
            if let Some(t) = tolerance {
                solver.tolerance = *t;
            }
            let kind = format!("eos-{}", sched.target());
            let outcome = solve_eos(&ds, &h, *sigma2, &sched, &solver);
            let report = match outcome {
                Ok(state) => {
                    write_matrix_csv(&out.join("C.csv"), &state.c)?;
                    write_matrix_csv(&out.join("Q.csv"), &state.q)?;
                    write_json(&out.join("eos_log.json"), &state.log)?;
                    with_data(state.gram(&ds.partition, &h).and_then(|g| nc1_of_gram(&g)), &ds, nckernel::nc1::DEFAULT_TAU)
                }
                Err(e) => {
                    if let nckernel::Error::NonConvergence { history, .. } = &e {
                        write_json(&out.join("eos_log.json"), &serde_json::json!({ "error": e.to_string(), "history": history }))?;
                    }
                    Err(e)
                }
            };
            emit_record(&out.join("nc1.json"), &kind, &ds.partition.clone(), ds.seed(), ds.d0(), report)
        }
        Command::TrainFcn { data, depth, width, activation, train_preset, lr, lambda, steps } => {
            let ds = data.load(seed)?;
            let arch = FcnArch::new(ds.d0(), *width, *depth, *activation)?;
            let init_seed = derive_seed(ds.seed(), &[1]);
            let base = match train_preset.as_deref() {
                None => TrainConfig::preset(*activation, init_seed),
                Some("erf") => TrainConfig::erf_preset(init_seed),
                Some("relu") => TrainConfig::relu_preset(init_seed),
                Some("non-separable") => TrainConfig::non_separable_preset(init_seed),
                Some(other) => bail!("unknown training preset `{other}`"),
            };
            let cfg = TrainConfig {
                lr: lr.unwrap_or(base.lr),
                weight_decay: lambda.unwrap_or(base.weight_decay),
                steps: steps.unwrap_or(base.steps),
                seed: init_seed,
            };
            let kind = format!("fcn-{activation}-l{depth}-w{width}");
            let mut model = init_fcn(&arch, init_seed)?;
            let outcome = train(&mut model, &ds, &cfg);
            let report = match outcome {
                Ok(trace) => {
                    let path = out.join("trace.csv");
                    fs::write(&path, trace.to_csv()).with_context(|| format!("writing {}", path.display()))?;
                    println!(
                        "final loss {:e}, accuracy {}",
                        trace.loss.last().copied().unwrap_or(f64::NAN),
                        trace.accuracy.last().copied().unwrap_or(f64::NAN)
                    );
                    let features = nckernel::fcn::penultimate_features(&model, &ds.x)?;
                    with_data(nc1_of_features(&features, &ds.partition), &ds, nckernel::nc1::DEFAULT_TAU)
                }
                Err(e) => Err(e),
            };
            emit_record(&out.join("nc1.json"), &kind, &ds.partition.clone(), ds.seed(), ds.d0(), report)
        }
        Command::Verify { suite } => {
            let suites: Vec<Suite> =
                if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse::<Suite>()?] };
            let mut all = true;
            for s in suites {
                let report = run_suite(s, seed)?;
                println!("{:<13} {}", s.name(), if report.passed { "pass" } else { "FAIL" });
                for row in &report.rows {
                    println!("  {:<44} {}", row.case, if row.pass { "ok" } else { "off" });
                }
                if let Some(v) = &report.supported_variant {
                    println!("  supported variant: {v}");
                }
                write_json(&out.join(format!("verify_{}.json", s.name())), &report)?;
                all &= report.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.allow_partial => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
