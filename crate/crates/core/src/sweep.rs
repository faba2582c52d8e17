//! `(N, d0)` sweeps across methods and repeated seeds.
//!
//! Every `(N, d0, seed index)` triple draws one dataset from its own derived seed; all methods of
//! that triple see the same data. Jobs fan out over the rayon pool and the records are sorted back
//! into a fixed order, so results do not depend on scheduling.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_gaussian_mixture, Dataset, MixtureSpec};
use crate::eos::{default_schedule, solve_eos, SolverConfig, DEFAULT_READOUT_VAR, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::fcn::{init_fcn, penultimate_features, train, FcnArch, TrainConfig};
use crate::kernels::{assemble_gram, Activation, HyperParams, KernelKind};
use crate::nc1::{aggregate_log10, data_nc1, nc1_of_features, nc1_of_gram, Log10Summary, Nc1Report, DEFAULT_TAU};
use crate::rng::derive_seed;

/// Dataset family of a sweep. Class sizes follow `N` from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetPreset {
    /// Two balanced classes, means ∓2, σ = 0.5.
    D1,
    /// Four balanced classes, means −6, −2, 2, 6, σ = 0.5.
    D2,
    /// D1 means and spread with `round(N · minority_fraction)` samples in the first class.
    Imbalanced { minority_fraction: f64 },
    /// Overlapping classes, means ∓2, σ = 2.
    NonSeparable,
    /// Widely separated classes, means ∓10, σ = 1.
    Wide,
    /// Arbitrary mixture; `N` is split in proportion to the spec's class counts.
    Custom { spec: MixtureSpec },
}

impl DatasetPreset {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetPreset::D1 => "d1",
            DatasetPreset::D2 => "d2",
            DatasetPreset::Imbalanced { .. } => "imbalanced",
            DatasetPreset::NonSeparable => "non-separable",
            DatasetPreset::Wide => "wide",
            DatasetPreset::Custom { .. } => "custom",
        }
    }

    /// The mixture for a given `N` and `d0`.
    pub fn spec(&self, n: usize, d0: usize) -> Result<MixtureSpec> {
        let spec = match self {
            DatasetPreset::D1 => MixtureSpec::two_class(n, d0, 2.0, 0.5)?,
            DatasetPreset::NonSeparable => MixtureSpec::two_class(n, d0, 2.0, 2.0)?,
            DatasetPreset::Wide => MixtureSpec::two_class(n, d0, 10.0, 1.0)?,
            DatasetPreset::D2 => {
                if !n.is_multiple_of(4) {
                    return Err(Error::InvalidSpec(format!("N = {n} must be divisible by 4")));
                }
                let classes = [(-6.0, -3.0), (-2.0, -1.0), (2.0, 1.0), (6.0, 3.0)]
                    .iter()
                    .map(|&(m, l)| crate::data::ClassSpec::new(m, 0.5, n / 4, l))
                    .collect();
                MixtureSpec { d0, classes }
            }
            DatasetPreset::Imbalanced { minority_fraction } => {
                if !(*minority_fraction > 0.0 && *minority_fraction < 1.0) {
                    return Err(Error::InvalidSpec(format!("minority fraction {minority_fraction} outside (0, 1)")));
                }
                let n1 = (n as f64 * minority_fraction).round() as usize;
                let mut spec = MixtureSpec::two_class(2, d0, 2.0, 0.5)?;
                spec.classes[0].count = n1;
                spec.classes[1].count = n.saturating_sub(n1);
                spec
            }
            DatasetPreset::Custom { spec } => {
                let total: usize = spec.classes.iter().map(|c| c.count).sum();
                let mut out = spec.clone();
                out.d0 = d0;
                let mut assigned = 0;
                let last = out.classes.len().saturating_sub(1);
                for (i, class) in out.classes.iter_mut().enumerate() {
                    class.count = if i == last {
                        n.saturating_sub(assigned)
                    } else {
                        (n as f64 * class.count as f64 / total.max(1) as f64).round() as usize
                    };
                    assigned += class.count;
                    if let Some(mean) = &class.mean {
                        if mean.len() != d0 {
                            return Err(Error::InvalidSpec(
                                "custom specs with explicit means cannot vary d0".into(),
                            ));
                        }
                    }
                }
                out
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sample(&self, n: usize, d0: usize, seed: u64) -> Result<Dataset> {
        sample_gaussian_mixture(&self.spec(n, d0)?, seed)
    }

    /// Separability decides the FCN training preset when none is given.
    fn separable(&self) -> bool {
        !matches!(self, DatasetPreset::NonSeparable)
    }
}

/// One NC1 estimator evaluated in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Method {
    Kernel {
        kernel: KernelKind,
    },
    Eos {
        target_d1: u64,
        #[serde(default = "default_ridge")]
        sigma2: f64,
        #[serde(default = "default_readout")]
        readout_var: f64,
    },
    Fcn {
        activation: Activation,
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "default_depth")]
        depth: usize,
        /// Falls back to the preset for the activation and dataset.
        #[serde(default)]
        lr: Option<f64>,
        #[serde(default)]
        weight_decay: Option<f64>,
        #[serde(default)]
        steps: Option<usize>,
    },
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}
fn default_readout() -> f64 {
    DEFAULT_READOUT_VAR
}
fn default_width() -> usize {
    500
}
fn default_depth() -> usize {
    2
}

impl Method {
    pub fn kernel(kernel: KernelKind) -> Self {
        Method::Kernel { kernel }
    }

    pub fn eos(target_d1: u64) -> Self {
        Method::Eos { target_d1, sigma2: DEFAULT_RIDGE, readout_var: DEFAULT_READOUT_VAR }
    }

    pub fn fcn(activation: Activation) -> Self {
        Method::Fcn { activation, width: 500, depth: 2, lr: None, weight_decay: None, steps: None }
    }

    /// File-name-safe label; also the `method` column of `records.csv`.
    pub fn label(&self) -> String {
        match self {
            Method::Kernel { kernel } => kernel.name().to_string(),
            Method::Eos { target_d1, .. } => format!("eos-{target_d1}"),
            Method::Fcn { activation, width, depth, .. } => format!("fcn-{activation}-l{depth}-w{width}"),
        }
    }

    fn train_config(&self, preset: &DatasetPreset, seed: u64) -> Option<TrainConfig> {
        let Method::Fcn { activation, lr, weight_decay, steps, .. } = self else {
            return None;
        };
        let base =
            if preset.separable() { TrainConfig::preset(*activation, seed) } else { TrainConfig::non_separable_preset(seed) };
        Some(TrainConfig {
            lr: lr.unwrap_or(base.lr),
            weight_decay: weight_decay.unwrap_or(base.weight_decay),
            steps: steps.unwrap_or(base.steps),
            seed,
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Short forms: a kernel name, `eos:<d1>` or `fcn:<activation>`.
impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("eos:") {
            let d1 = rest.parse().map_err(|_| Error::Parse(format!("bad EoS width in `{s}`")))?;
            return Ok(Method::eos(d1));
        }
        if let Some(rest) = s.strip_prefix("fcn:") {
            return Ok(Method::fcn(rest.parse()?));
        }
        KernelKind::ALL
            .iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .map(|&k| Method::kernel(k))
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// A method entry as written in TOML: either a short string or a full table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MethodEntry {
    Short(String),
    Full(Method),
}

/// Fully resolved sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset: DatasetPreset,
    pub n_grid: Vec<usize>,
    pub d0_grid: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub weight_var: f64,
    pub bias_var: f64,
    /// Stabilizer of the relative NC1.
    pub tau: f64,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
}

/// Partial configuration as read from TOML; unset fields come from the chosen profile.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    profile: Option<String>,
    dataset: Option<DatasetPreset>,
    n_grid: Option<Vec<usize>>,
    d0_grid: Option<Vec<usize>>,
    seeds: Option<usize>,
    master_seed: Option<u64>,
    methods: Option<Vec<MethodEntry>>,
    weight_var: Option<f64>,
    bias_var: Option<f64>,
    tau: Option<f64>,
    solver: Option<SolverConfig>,
    output_dir: Option<PathBuf>,
}

/// Names accepted by [`SweepConfig::profile`].
pub const PROFILES: [&str; 6] = ["d1", "d2", "imbalanced", "imbalanced-mild", "non-separable", "wide"];

impl SweepConfig {
    /// A named profile. All use the full heatmap grid, 10 seeds and the four limiting kernels.
    pub fn profile(name: &str) -> Result<Self> {
        let dataset = match name {
            "d1" => DatasetPreset::D1,
            "d2" => DatasetPreset::D2,
            "imbalanced" => DatasetPreset::Imbalanced { minority_fraction: 0.125 },
            "imbalanced-mild" => DatasetPreset::Imbalanced { minority_fraction: 0.25 },
            "non-separable" => DatasetPreset::NonSeparable,
            "wide" => DatasetPreset::Wide,
            _ => return Err(Error::Parse(format!("unknown profile `{name}`; expected one of {PROFILES:?}"))),
        };
        let methods = [KernelKind::NngpErf, KernelKind::NtkErf, KernelKind::NngpRelu, KernelKind::NtkRelu]
            .into_iter()
            .map(Method::kernel)
            .collect();
        Ok(Self {
            dataset,
            n_grid: vec![128, 256, 512, 1024],
            d0_grid: vec![1, 2, 8, 32, 128],
            seeds: 10,
            master_seed: 0,
            methods,
            weight_var: 1.0,
            bias_var: 0.0,
            tau: DEFAULT_TAU,
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
        })
    }

    /// Parses TOML. A `profile` key (default `d1`) supplies every field the file leaves out.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SweepFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut cfg = Self::profile(file.profile.as_deref().unwrap_or("d1"))?;
        if let Some(v) = file.dataset {
            cfg.dataset = v;
        }
        if let Some(v) = file.n_grid {
            cfg.n_grid = v;
        }
        if let Some(v) = file.d0_grid {
            cfg.d0_grid = v;
        }
        if let Some(v) = file.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = file.master_seed {
            cfg.master_seed = v;
        }
        if let Some(entries) = file.methods {
            cfg.methods = entries
                .into_iter()
                .map(|e| match e {
                    MethodEntry::Short(s) => s.parse(),
                    MethodEntry::Full(m) => Ok(m),
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = file.weight_var {
            cfg.weight_var = v;
        }
        if let Some(v) = file.bias_var {
            cfg.bias_var = v;
        }
        if let Some(v) = file.tau {
            cfg.tau = v;
        }
        if let Some(v) = file.solver {
            cfg.solver = v;
        }
        if let Some(v) = file.output_dir {
            cfg.output_dir = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.d0_grid.is_empty() {
            return Err(Error::InvalidParameter("N and d0 grids must be nonempty".into()));
        }
        if self.n_grid.contains(&0) || self.d0_grid.contains(&0) {
            return Err(Error::InvalidParameter("grid entries must be >= 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("seed count must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("method list is empty".into()));
        }
        let mut labels: Vec<String> = self.methods.iter().map(Method::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return Err(Error::InvalidParameter("duplicate methods in the method list".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("τ = {} must be > 0", self.tau)));
        }
        for m in &self.methods {
            match m {
                Method::Eos { target_d1, sigma2, readout_var } => {
                    default_schedule(*target_d1)?;
                    if !(*sigma2 > 0.0 && *readout_var > 0.0) {
                        return Err(Error::InvalidParameter(format!("{m}: σ² and σ_a² must be > 0")));
                    }
                }
                Method::Fcn { width, depth, activation, .. } => {
                    FcnArch::new(1, *width, *depth, *activation)?;
                }
                Method::Kernel { .. } => {}
            }
        }
        self.solver.validate()?;
        self.hyper(1).validate()
    }

    pub fn hyper(&self, d0: usize) -> HyperParams {
        HyperParams { weight_var: self.weight_var, bias_var: self.bias_var, d0, readout_var: 1.0 }
    }

    /// Seed of the dataset for one `(N, d0, seed index)` cell.
    pub fn dataset_seed(&self, n: usize, d0: usize, seed_index: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, d0 as u64, seed_index as u64])
    }

    pub fn expected_records(&self) -> usize {
        self.methods.len() * self.n_grid.len() * self.d0_grid.len() * self.seeds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Ok,
    /// Degenerate between-class variance, negative within-class trace or undefined ReLU angle.
    Degenerate,
    NonConverged,
    Diverged,
    Failed,
}

impl RecordStatus {
    pub fn name(self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Degenerate => "degenerate",
            RecordStatus::NonConverged => "non-converged",
            RecordStatus::Diverged => "diverged",
            RecordStatus::Failed => "failed",
        }
    }

    fn of_error(e: &Error) -> Self {
        match e {
            Error::DegenerateBetweenVariance(_) | Error::NegativeWithinVariance(_) | Error::DegenerateInput { .. } => {
                RecordStatus::Degenerate
            }
            Error::NonConvergence { .. } => RecordStatus::NonConverged,
            Error::Diverged { .. } => RecordStatus::Diverged,
            _ => RecordStatus::Failed,
        }
    }
}

/// One `(method, N, d0, seed)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub d0: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub partition: Vec<usize>,
    pub status: RecordStatus,
    pub report: Option<Nc1Report>,
    pub message: Option<String>,
    pub seconds: f64,
}

/// Mean and spread of `log10 NC1` over the ok records of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub d0: usize,
    pub ok: usize,
    pub total: usize,
    pub log10_nc1: Option<Log10Summary>,
    pub log10_relative_nc1: Option<Log10Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Ordered by method, then `N`, `d0` and seed index.
    pub records: Vec<SweepRecord>,
    pub cells: Vec<CellSummary>,
    pub seconds: f64,
}

impl SweepResult {
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(|r| r.status == RecordStatus::Ok)
    }

    pub fn cell(&self, method: &str, n: usize, d0: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.n == n && c.d0 == d0)
    }

    pub fn status_counts(&self) -> Vec<(RecordStatus, usize)> {
        let all = [
            RecordStatus::Ok,
            RecordStatus::Degenerate,
            RecordStatus::NonConverged,
            RecordStatus::Diverged,
            RecordStatus::Failed,
        ];
        all.iter().map(|&s| (s, self.records.iter().filter(|r| r.status == s).count())).collect()
    }
}

/// NC1 of one method on one dataset.
pub fn evaluate_method(method: &Method, dataset: &Dataset, cfg: &SweepConfig, seed: u64) -> Result<Nc1Report> {
    let hyper = cfg.hyper(dataset.d0());
    let report = match method {
        Method::Kernel { kernel } => nc1_of_gram(&assemble_gram(*kernel, dataset, &hyper)?)?,
        Method::Eos { target_d1, sigma2, readout_var } => {
            let hyper = HyperParams { readout_var: *readout_var, ..hyper };
            let state = solve_eos(dataset, &hyper, *sigma2, &default_schedule(*target_d1)?, &cfg.solver)?;
            nc1_of_gram(&state.gram(&dataset.partition, &hyper)?)?
        }
        Method::Fcn { activation, width, depth, .. } => {
            let mut arch = FcnArch::new(dataset.d0(), *width, *depth, *activation)?;
            arch.weight_var = cfg.weight_var;
            arch.bias_var = cfg.bias_var;
            let tc = method.train_config(&cfg.dataset, seed).expect("FCN method");
            let mut model = init_fcn(&arch, seed)?;
            train(&mut model, dataset, &tc)?;
            // recomputed so a degenerate feature set surfaces as a typed error
            nc1_of_features(&penultimate_features(&model, &dataset.x)?, &dataset.partition)?
        }
    };
    report.with_data(data_nc1(dataset)?, cfg.tau)
}

/// Runs every `(method, N, d0, seed)` combination. Failures become records, never errors.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let jobs: Vec<(usize, usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| cfg.d0_grid.iter().flat_map(move |&d0| (0..cfg.seeds).map(move |s| (n, d0, s))))
        .collect();
    info!("sweep: {} datasets × {} methods", jobs.len(), cfg.methods.len());

    let mut records: Vec<SweepRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(n, d0, seed_index)| {
            let seed = cfg.dataset_seed(n, d0, seed_index);
            let dataset = cfg.dataset.sample(n, d0, seed);
            cfg.methods
                .iter()
                .map(|method| {
                    let t0 = Instant::now();
                    let init_seed = derive_seed(seed, &[1]);
                    let (partition, outcome) = match &dataset {
                        Ok(ds) => (ds.partition.clone(), evaluate_method(method, ds, cfg, init_seed)),
                        Err(e) => (Vec::new(), Err(Error::InvalidSpec(e.to_string()))),
                    };
                    let (status, report, message) = match outcome {
                        Ok(r) => (RecordStatus::Ok, Some(r), None),
                        Err(e) => {
                            warn!("{method} N={n} d0={d0} seed#{seed_index}: {e}");
                            (RecordStatus::of_error(&e), None, Some(e.to_string()))
                        }
                    };
                    SweepRecord {
                        method: method.label(),
                        n,
                        d0,
                        seed_index,
                        seed,
                        partition,
                        status,
                        report,
                        message,
                        seconds: t0.elapsed().as_secs_f64(),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let order: Vec<String> = cfg.methods.iter().map(Method::label).collect();
    let rank = |m: &str| order.iter().position(|o| o == m).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        (rank(&a.method), a.n, a.d0, a.seed_index).cmp(&(rank(&b.method), b.n, b.d0, b.seed_index))
    });

    let cells = summarize(cfg, &records);
    Ok(SweepResult { config: cfg.clone(), records, cells, seconds: start.elapsed().as_secs_f64() })
}

fn summarize(cfg: &SweepConfig, records: &[SweepRecord]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for method in cfg.methods.iter().map(Method::label) {
        for &n in &cfg.n_grid {
            for &d0 in &cfg.d0_grid {
                let group: Vec<&SweepRecord> =
                    records.iter().filter(|r| r.method == method && r.n == n && r.d0 == d0).collect();
                let ok: Vec<&Nc1Report> = group.iter().filter_map(|r| r.report.as_ref()).collect();
                let logs: Vec<f64> = ok.iter().map(|r| r.log10_nc1).collect();
                let rel: Vec<f64> =
                    ok.iter().filter_map(|r| r.relative_nc1).filter(|v| *v > 0.0).map(f64::log10).collect();
                cells.push(CellSummary {
                    method: method.clone(),
                    n,
                    d0,
                    ok: ok.len(),
                    total: group.len(),
                    log10_nc1: aggregate_log10(&logs),
                    log10_relative_nc1: aggregate_log10(&rel),
                });
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            n_grid: vec![16, 32],
            d0_grid: vec![1, 4],
            seeds: 2,
            methods: vec![Method::kernel(KernelKind::NngpErf), Method::kernel(KernelKind::Linear)],
            ..SweepConfig::profile("d1").unwrap()
        }
    }

    #[test]
    fn method_short_forms() {
        assert_eq!("ntk-relu".parse::<Method>().unwrap(), Method::kernel(KernelKind::NtkRelu));
        assert_eq!("eos:500".parse::<Method>().unwrap(), Method::eos(500));
        assert_eq!("fcn:erf".parse::<Method>().unwrap(), Method::fcn(Activation::Erf));
        assert!("eos:abc".parse::<Method>().is_err());
        assert!("rbf".parse::<Method>().is_err());
        assert_eq!(Method::eos(2000).label(), "eos-2000");
        assert_eq!(Method::fcn(Activation::Relu).label(), "fcn-relu-l2-w500");
    }

    #[test]
    fn profiles_validate() {
        for p in PROFILES {
            let cfg = SweepConfig::profile(p).unwrap();
            cfg.validate().unwrap();
            cfg.dataset.spec(128, 2).unwrap();
        }
        assert!(SweepConfig::profile("mnist").is_err());
    }

    #[test]
    fn preset_class_sizes() {
        let s = DatasetPreset::Imbalanced { minority_fraction: 0.125 }.spec(2048, 1).unwrap();
        assert_eq!(s.class_sizes(), vec![256, 1792]);
        let s = DatasetPreset::D2.spec(64, 3).unwrap();
        assert_eq!(s.class_sizes(), vec![16; 4]);
        let custom = DatasetPreset::Custom { spec: MixtureSpec::two_class(4, 1, 1.0, 1.0).unwrap() };
        assert_eq!(custom.spec(10, 2).unwrap().class_sizes(), vec![5, 5]);
        assert!(DatasetPreset::D1.spec(7, 1).is_err());
    }

    #[test]
    fn toml_overrides_profile() {
        let text = r#"
            profile = "wide"
            n_grid = [16]
            d0_grid = [1, 2]
            seeds = 3
            methods = ["nngp-relu", "eos:2000", { type = "fcn", activation = "erf", width = 20, steps = 5 }]
            [solver]
            max_newton = 10
        "#;
        let cfg = SweepConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dataset, DatasetPreset::Wide);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.methods.len(), 3);
        assert_eq!(cfg.methods[2].label(), "fcn-erf-l2-w20");
        assert_eq!(cfg.solver.max_newton, 10);
        assert_eq!(cfg.solver.tolerance, SolverConfig::default().tolerance);
        assert_eq!(cfg.expected_records(), 3 * 2 * 3);
        assert!(SweepConfig::from_toml("seeds = 0").is_err());
        assert!(SweepConfig::from_toml("n_grid = []").is_err());
        assert!(SweepConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn completeness_and_order() {
        let cfg = small();
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.records.len(), cfg.expected_records());
        assert!(res.all_ok());
        assert_eq!(res.cells.len(), 2 * 2 * 2);
        assert_eq!(res.records[0].method, "nngp-erf");
        assert_eq!((res.records[0].n, res.records[0].d0, res.records[0].seed_index), (16, 1, 0));
        // both methods see the same dataset for a given cell and seed
        assert_eq!(res.records[0].seed, res.records[cfg.expected_records() / 2].seed);
        let cell = res.cell("linear", 32, 4).unwrap();
        assert_eq!(cell.ok, 2);
        assert!(cell.log10_nc1.unwrap().mean.is_finite());
    }

    #[test]
    fn failures_become_records() {
        let cfg = SweepConfig {
            n_grid: vec![8],
            d0_grid: vec![1],
            seeds: 1,
            methods: vec![Method::kernel(KernelKind::NngpErf)],
            dataset: DatasetPreset::Imbalanced { minority_fraction: 0.01 },
            ..SweepConfig::profile("d1").unwrap()
        };
        // round(8 × 0.01) = 0 samples in the first class
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.records.len(), 1);
        assert_eq!(res.records[0].status, RecordStatus::Failed);
        assert!(res.records[0].message.is_some());
        assert!(!res.all_ok());
        assert!(res.cells[0].log10_nc1.is_none());
    }
}
