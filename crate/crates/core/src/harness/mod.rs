//! Config-driven experiment runner. The harness knows the population
//! exactly, so every true loss is computed analytically, while learners see
//! the training set only through the copy ledger.

pub mod population;
pub mod rules;
pub mod strategies;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{majority_error_exact, rademacher_b, renyi_mutual_info, strategy_gap_bounds, GapBoundInputs};
use crate::classifiers::KernelTrainConfig;
use crate::embeddings::LabeledEnsemble;
use crate::error::{Error, Result};
use crate::qcore::{check_dim_cap, trace_product_re, Label, DIM_CAP};
use crate::rng::sub_stream;
use crate::sampling::{write_shot_csv, CopyLedger, ShotRecord};

pub use population::{DatasetSpec, Population, StateSpec, SupportPoint};
pub use rules::{MultiCopyCache, ObservableOutcomes, Rule};
pub use strategies::{
    empirical_reference, learn, population_reference, Learned, LearnerSpec, PeSettings, StrategyKind, TestMode,
};

/// Tolerance of the error-zoo identities and optimality checks.
pub const ZOO_TOL: f64 = 1e-9;
/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "QLEARN_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub dataset: DatasetSpec,
    /// Overrides the dataset dimension.
    pub dim: Option<usize>,
    /// Overrides the number of Fourier frequencies.
    pub omega: Option<usize>,
    pub n: usize,
    pub s: usize,
    pub v: usize,
    pub strategy: StrategyKind,
    /// Learn from the classical descriptions of the training states.
    pub known_states: bool,
    pub test_mode: TestMode,
    pub seed: u64,
    pub trials: usize,
    pub output: Option<PathBuf>,
    /// Monte Carlo test classifications per trial, on top of the exact loss.
    pub mc_tests: usize,
    /// Sequential test states served by a transductive learner.
    pub test_states: usize,
    pub pe: PeSettings,
    pub kernel: KernelTrainConfig,
    pub fixed_labels: Option<Vec<Label>>,
    pub threads: Option<usize>,
    /// Writes the raw measurement outcomes of the dictionary learner here.
    pub dump_shots: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            dataset: DatasetSpec::Fourier {
                omega: 4,
                frequencies: None,
                plus_range: [0.0, 1.5],
                minus_range: [1.5, 3.0],
            },
            dim: None,
            omega: None,
            n: 16,
            s: 100,
            v: 1,
            strategy: StrategyKind::Tomography,
            known_states: false,
            test_mode: TestMode::Majority,
            seed: 0,
            trials: 1,
            output: None,
            mc_tests: 0,
            test_states: 1,
            pe: PeSettings::default(),
            kernel: KernelTrainConfig::default(),
            fixed_labels: None,
            threads: None,
            dump_shots: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a `.json` file, or TOML otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    /// Dataset with the `dim` and `omega` overrides applied.
    pub fn effective_dataset(&self) -> Result<DatasetSpec> {
        let mut ds = self.dataset.clone();
        if let Some(d) = self.dim {
            ds = ds.with_dim(d)?;
        }
        if let Some(k) = self.omega {
            ds = ds.with_omega(k)?;
        }
        Ok(ds)
    }

    fn uses_majority(&self) -> bool {
        if self.known_states {
            return false;
        }
        match self.strategy {
            StrategyKind::Tomography => self.test_mode == TestMode::Majority,
            StrategyKind::PeHelstrom | StrategyKind::FixedPovm | StrategyKind::Dictionary => true,
            StrategyKind::Representer | StrategyKind::Kernel => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("N must be at least 2, got {}", self.n)));
        }
        if self.v == 0 {
            return Err(Error::Config("V must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.uses_majority() && self.v.is_multiple_of(2) {
            return Err(Error::Config(format!("majority voting needs an odd V, got {}", self.v)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    fn learner_spec(&self) -> LearnerSpec {
        LearnerSpec {
            strategy: self.strategy,
            known_states: self.known_states,
            v: self.v,
            test_mode: self.test_mode,
            test_states: self.test_states,
            pe: self.pe,
            kernel: self.kernel,
            fixed_labels: self.fixed_labels.clone(),
            record_shots: self.dump_shots.is_some(),
        }
    }
}

/// The five exact losses from which the error decomposition is assembled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZooInputs {
    /// `L_P(f*)`.
    pub min_loss: f64,
    /// `L_P(f_S)`.
    pub true_loss_empirical: f64,
    /// `L(f_S, S)`.
    pub dataset_loss: f64,
    /// `L(f^S_S, S)`.
    pub dataset_loss_learned: f64,
    /// `L_P(f^S_S)`.
    pub test_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorZooReport {
    pub min_loss: f64,
    pub dataset_loss: f64,
    /// `L_P(f_S) − L(f_S, S)`.
    pub gen_err: f64,
    pub knowledge_gap: f64,
    pub excess_test: f64,
    pub test_loss: f64,
    pub opt_gap: f64,
    pub true_loss_empirical: f64,
    /// `L_P(f^S_S) − L(f^S_S, S)`.
    pub gen_err_learned: f64,
    pub dataset_loss_learned: f64,
    /// Largest violation of the decomposition identities.
    pub residual: f64,
}

/// Assembles the error decomposition and checks its identities, along with
/// the optimality of `f*` for the population and of `f_S` for the dataset.
pub fn error_zoo(x: &ZooInputs) -> Result<ErrorZooReport> {
    let all = [x.min_loss, x.true_loss_empirical, x.dataset_loss, x.dataset_loss_learned, x.test_loss];
    if let Some(bad) = all.iter().find(|l| !l.is_finite() || **l < -ZOO_TOL || **l > 1.0 + ZOO_TOL) {
        return Err(Error::Internal(format!("loss {bad} outside [0, 1]")));
    }
    let gen_err = x.true_loss_empirical - x.dataset_loss;
    let knowledge_gap = x.dataset_loss_learned - x.dataset_loss;
    let excess_test = x.test_loss - x.true_loss_empirical;
    let opt_gap = x.true_loss_empirical - x.min_loss;
    let gen_err_learned = x.test_loss - x.dataset_loss_learned;
    let residual = [
        x.test_loss - (x.dataset_loss + gen_err_learned + knowledge_gap),
        x.true_loss_empirical - (x.min_loss + opt_gap),
        x.true_loss_empirical - (x.dataset_loss + gen_err),
        x.test_loss - (x.true_loss_empirical + excess_test),
    ]
    .iter()
    .fold(0.0f64, |m, r| m.max(r.abs()));
    if residual > ZOO_TOL {
        return Err(Error::Internal(format!("error decomposition residual {residual:e}")));
    }
    if knowledge_gap < -ZOO_TOL {
        return Err(Error::Internal(format!("learned rule beats the dataset-optimal rule by {:e}", -knowledge_gap)));
    }
    if opt_gap < -ZOO_TOL {
        return Err(Error::Internal(format!("empirical rule beats the population-optimal rule by {:e}", -opt_gap)));
    }
    Ok(ErrorZooReport {
        min_loss: x.min_loss,
        dataset_loss: x.dataset_loss,
        gen_err,
        knowledge_gap,
        excess_test,
        test_loss: x.test_loss,
        opt_gap,
        true_loss_empirical: x.true_loss_empirical,
        gen_err_learned,
        dataset_loss_learned: x.dataset_loss_learned,
        residual,
    })
}

/// Everything measured in one trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub zoo: ErrorZooReport,
    pub copies_used: usize,
    pub measured_test_error: Option<f64>,
    pub measured_stderr: Option<f64>,
    pub renyi_mutual_info: Option<f64>,
    pub rademacher_b: Option<f64>,
    pub pe_bits: Option<f64>,
    pub pe_failure_bound: Option<f64>,
    pub bounds: BTreeMap<String, Option<f64>>,
    #[serde(skip)]
    pub shots: Vec<ShotRecord>,
}

/// Draws the training set of one trial. A file dataset is used as is, with
/// `cfg.s` copies per item.
pub fn training_set(cfg: &ExperimentConfig, pop: &Population, trial: usize) -> Result<LabeledEnsemble> {
    if let DatasetSpec::File { path } = &cfg.effective_dataset()? {
        let ens = LabeledEnsemble::load(path)?;
        let meta = ens.meta.clone();
        return Ok(LabeledEnsemble::with_uniform_copies(ens.items().to_vec(), cfg.s)?.with_meta(meta));
    }
    let mut rng = sub_stream(cfg.seed, trial as u64, 0);
    pop.draw_ensemble(cfg.n, cfg.s, cfg.seed, &mut rng)
}

fn check_capacity(cfg: &ExperimentConfig, d: usize) -> Result<()> {
    let joint = d.checked_pow(cfg.v as u32).unwrap_or(usize::MAX);
    check_dim_cap(joint, DIM_CAP)
}

fn trial_bounds(
    ens: &LabeledEnsemble,
    cfg: &ExperimentConfig,
    learned: &Learned,
    pop: &Population,
) -> Result<(BTreeMap<String, Option<f64>>, Option<f64>, Option<f64>)> {
    let (mp, mm) = ens.class_means()?;
    let rb = rademacher_b(ens).ok();
    let info = renyi_mutual_info(ens).ok();
    let mut inputs = GapBoundInputs::new(
        ens.dim(),
        ens.len(),
        cfg.s,
        cfg.v,
        trace_product_re(mp.matrix(), mm.matrix()),
        (mp.purity(), mm.purity()),
    );
    inputs.rademacher_b = rb;
    let mut out: BTreeMap<String, Option<f64>> =
        strategy_gap_bounds(&inputs).into_iter().map(|(k, b)| (k, b.value)).collect();
    if let Rule::Majority { povm, v } = &learned.rule {
        let single = Rule::Majority { povm: povm.clone(), v: 1 }.true_loss(pop, &mut MultiCopyCache::default())?;
        out.insert("majority_binomial".into(), majority_error_exact(1.0 - single, *v).ok());
    }
    Ok((out, info, rb))
}

fn run_trial(cfg: &ExperimentConfig, pop: &Population, trial: usize) -> Result<TrialReport> {
    let ens = training_set(cfg, pop, trial)?;
    check_capacity(cfg, ens.dim())?;
    let mut ledger = CopyLedger::new(ens.copy_budget().to_vec());
    let mut rng = sub_stream(cfg.seed, trial as u64, 1);
    let learned = learn(&ens, &cfg.learner_spec(), &mut ledger, &mut rng)?;
    let f_s = empirical_reference(&ens, cfg.v)?;
    let f_star = population_reference(pop, cfg.v)?;
    let mut cache = MultiCopyCache::default();
    let zoo = error_zoo(&ZooInputs {
        min_loss: f_star.true_loss(pop, &mut cache)?,
        true_loss_empirical: f_s.true_loss(pop, &mut cache)?,
        dataset_loss: f_s.dataset_loss(&ens)?,
        dataset_loss_learned: learned.rule.dataset_loss(&ens)?,
        test_loss: learned.rule.true_loss(pop, &mut cache)?,
    })?;
    let (measured_test_error, measured_stderr) = if cfg.mc_tests > 0 {
        let mut rng = sub_stream(cfg.seed, trial as u64, 2);
        let mut wrong = 0usize;
        for _ in 0..cfg.mc_tests {
            let y = if rng.random::<bool>() { Label::Plus } else { Label::Minus };
            let item = pop.sample(y, &mut rng)?;
            if learned.rule.sample_prediction(&item.state, &mut rng)? != y {
                wrong += 1;
            }
        }
        let p = wrong as f64 / cfg.mc_tests as f64;
        (Some(p), Some((p * (1.0 - p) / cfg.mc_tests as f64).sqrt()))
    } else {
        (None, None)
    };
    let (bounds, renyi, rb) = trial_bounds(&ens, cfg, &learned, pop)?;
    Ok(TrialReport {
        trial,
        seed: cfg.seed,
        zoo,
        copies_used: ledger.total_consumed(),
        measured_test_error,
        measured_stderr,
        renyi_mutual_info: renyi,
        rademacher_b: rb,
        pe_bits: learned.pe_bits,
        pe_failure_bound: learned.pe_failure_bound,
        bounds,
        shots: learned.shots,
    })
}

/// Worker count: `cfg.threads`, capped by `QLEARN_THREADS` when set.
pub fn worker_count(cfg: &ExperimentConfig) -> Result<usize> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    let default = std::thread::available_parallelism().map_or(1, |k| k.get());
    Ok(match (cfg.threads, env) {
        (Some(t), Some(e)) => t.min(e),
        (Some(t), None) => t,
        (None, Some(e)) => e,
        (None, None) => default,
    })
}

/// Runs every trial of `cfg`; reports are returned in trial order.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    cfg.validate()?;
    let pop = Population::build(&cfg.effective_dataset()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg)?)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<TrialReport>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &pop, t)).collect());
    results
        .into_iter()
        .enumerate()
        .map(|(trial, r)| r.map_err(|e| Error::Trial { trial, source: Box::new(e) }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    N,
    S,
    V,
    D,
    Omega,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::S => "S",
            SweepAxis::V => "V",
            SweepAxis::D => "d",
            SweepAxis::Omega => "omega",
        }
    }

    pub fn apply(self, cfg: &ExperimentConfig, value: usize) -> ExperimentConfig {
        let mut out = cfg.clone();
        match self {
            SweepAxis::N => out.n = value,
            SweepAxis::S => out.s = value,
            SweepAxis::V => out.v = value,
            SweepAxis::D => out.dim = Some(value),
            SweepAxis::Omega => out.omega = Some(value),
        }
        out
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(SweepAxis::N),
            "S" | "s" => Ok(SweepAxis::S),
            "V" | "v" => Ok(SweepAxis::V),
            "d" | "D" | "dim" => Ok(SweepAxis::D),
            "omega" => Ok(SweepAxis::Omega),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}; expected N, S, V, d or omega"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scenario: String,
    pub axis: String,
    pub value: usize,
    pub report: TrialReport,
}

pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &value in values {
        for report in run_scenario(&axis.apply(cfg, value))? {
            rows.push(SweepRow { scenario: cfg.scenario.clone(), axis: axis.name().into(), value, report });
        }
    }
    Ok(rows)
}

/// Rows for a plain run: the axis column is empty.
pub fn run_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    Ok(run_scenario(cfg)?
        .into_iter()
        .map(|report| SweepRow { scenario: cfg.scenario.clone(), axis: String::new(), value: 0, report })
        .collect())
}

const BASE_COLUMNS: [&str; 21] = [
    "scenario",
    "axis",
    "value",
    "trial",
    "seed",
    "min_loss",
    "dataset_loss",
    "gen_err",
    "knowledge_gap",
    "excess_test",
    "test_loss",
    "opt_gap",
    "true_loss_empirical",
    "gen_err_learned",
    "dataset_loss_learned",
    "residual",
    "copies_used",
    "measured_test_error",
    "measured_stderr",
    "renyi_mutual_info",
    "rademacher_b",
];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Writes the result table; `bound_*` columns cover every bound seen in
/// any row.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let keys: BTreeSet<&str> = rows.iter().flat_map(|r| r.report.bounds.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(["pe_bits".into(), "pe_failure_bound".into()]);
    header.extend(keys.iter().map(|k| format!("bound_{k}")));
    w.write_record(&header)?;
    for row in rows {
        let r = &row.report;
        let z = &r.zoo;
        let mut rec = vec![
            row.scenario.clone(),
            row.axis.clone(),
            if row.axis.is_empty() { String::new() } else { row.value.to_string() },
            r.trial.to_string(),
            r.seed.to_string(),
        ];
        rec.extend(
            [
                z.min_loss,
                z.dataset_loss,
                z.gen_err,
                z.knowledge_gap,
                z.excess_test,
                z.test_loss,
                z.opt_gap,
                z.true_loss_empirical,
                z.gen_err_learned,
                z.dataset_loss_learned,
                z.residual,
            ]
            .map(fmt),
        );
        rec.push(r.copies_used.to_string());
        rec.extend(
            [
                r.measured_test_error,
                r.measured_stderr,
                r.renyi_mutual_info,
                r.rademacher_b,
                r.pe_bits,
                r.pe_failure_bound,
            ]
            .map(fmt_opt),
        );
        rec.extend(keys.iter().map(|k| fmt_opt(r.bounds.get(*k).copied().flatten())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trial,shot,outcome` rows for every recorded measurement.
pub fn write_shots<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "shot", "outcome"])?;
    for row in rows {
        for rec in &row.report.shots {
            write_shot_csv(&mut w, row.report.trial, rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Training set of trial 0, for saving to disk.
pub fn generate(cfg: &ExperimentConfig) -> Result<LabeledEnsemble> {
    cfg.validate()?;
    let pop = Population::build(&cfg.effective_dataset()?)?;
    training_set(cfg, &pop, 0)
}
