//! Learners. Each one sees the training set only through simulated
//! measurements that debit the copy ledger.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    empirical_helstrom, kernel_train, project_psd_gram, representer_coefficients, weighted_bayes_rule,
    weighted_helstrom, KernelTrainConfig, SINGULARITY_TOL,
};
use crate::embeddings::LabeledEnsemble;
use crate::error::{Error, Result};
use crate::qcore::{BinaryPovm, CMat, DensityMatrix, Label, DIM_CAP};
use crate::rng::Rng;
use crate::sampling::{
    born_sample, swap_test_estimate, tomography_mean, tomography_reconstruct, CopyLedger, Povm, ShotRecord,
};
use crate::transductive::{affordable_bits, failure_prob_bound, pe_effective_povm, PeMode, PhaseEstimationConfig};

use super::population::Population;
use super::rules::{ObservableOutcomes, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Tomography of the class means, then the Helstrom measurement.
    Tomography,
    /// Approximate Helstrom measurement by phase estimation.
    PeHelstrom,
    /// Representer-theorem observable with swap-test estimated overlaps.
    Representer,
    /// Kernel classifier on a swap-test estimated Gram matrix.
    Kernel,
    /// A fixed, untrained computational-basis labelling.
    FixedPovm,
    /// Computational-basis measurement with a learned outcome-to-label map.
    Dictionary,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Tomography => "tomography",
            StrategyKind::PeHelstrom => "pe_helstrom",
            StrategyKind::Representer => "representer",
            StrategyKind::Kernel => "kernel",
            StrategyKind::FixedPovm => "fixed_povm",
            StrategyKind::Dictionary => "dictionary",
        }
    }
}

/// How a single-copy rule is applied to `V` test copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    #[default]
    Majority,
    Collective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeSettings {
    pub m: usize,
    pub mode: PeMode,
    pub delta: Option<f64>,
    pub allow_degenerate: bool,
}

impl Default for PeSettings {
    fn default() -> Self {
        Self { m: 4, mode: PeMode::ExactUnitary, delta: None, allow_degenerate: true }
    }
}

impl PeSettings {
    pub fn config(&self) -> PhaseEstimationConfig {
        PhaseEstimationConfig { m: self.m, mode: self.mode, delta: self.delta, allow_degenerate: self.allow_degenerate }
    }
}

/// Parameters shared by all learners.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub strategy: StrategyKind,
    pub known_states: bool,
    pub v: usize,
    pub test_mode: TestMode,
    pub test_states: usize,
    pub pe: PeSettings,
    pub kernel: KernelTrainConfig,
    pub fixed_labels: Option<Vec<Label>>,
    pub record_shots: bool,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub rule: Rule,
    pub shots: Vec<ShotRecord>,
    /// Phase-estimation bits actually used, averaged over test states.
    pub pe_bits: Option<f64>,
    pub pe_failure_bound: Option<f64>,
}

impl Learned {
    fn plain(rule: Rule) -> Self {
        Self { rule, shots: Vec::new(), pe_bits: None, pe_failure_bound: None }
    }
}

fn prior_plus(ens: &LabeledEnsemble) -> f64 {
    ens.count(Label::Plus) as f64 / ens.len() as f64
}

fn class_members(ens: &LabeledEnsemble, y: Label) -> Vec<usize> {
    ens.items().iter().enumerate().filter(|(_, it)| it.y == y).map(|(i, _)| i).collect()
}

/// `(mean over class +1, mean over class −1)` of `f(state)`.
fn class_means_of(
    ens: &LabeledEnsemble,
    f: impl Fn(&DensityMatrix) -> Result<DensityMatrix>,
) -> Result<(DensityMatrix, DensityMatrix)> {
    let mut out = Vec::with_capacity(2);
    for y in [Label::Plus, Label::Minus] {
        let mapped = class_members(ens, y).into_iter().map(|i| f(&ens.items()[i].state)).collect::<Result<Vec<_>>>()?;
        out.push(DensityMatrix::uniform_mixture(mapped.iter())?);
    }
    let minus = out.pop().expect("two classes");
    Ok((out.pop().expect("two classes"), minus))
}

/// Best rule on `v` test copies for the training set with known states: the
/// Helstrom measurement between the `v`-copy class means, weighted by the
/// class frequencies.
pub fn empirical_reference(ens: &LabeledEnsemble, v: usize) -> Result<Rule> {
    if v == 1 {
        return Ok(Rule::Collective { povm: empirical_helstrom(ens)?.povm, v: 1 });
    }
    let (p, m) = class_means_of(ens, |s| s.tensor_power(v, DIM_CAP))?;
    Ok(Rule::Collective { povm: weighted_helstrom(&p, &m, prior_plus(ens))?.povm, v })
}

/// Best rule on `v` test copies for the population.
pub fn population_reference(pop: &Population, v: usize) -> Result<Rule> {
    let p = pop.multi_copy_average(Label::Plus, v)?;
    let m = pop.multi_copy_average(Label::Minus, v)?;
    Ok(Rule::Collective { povm: weighted_helstrom(&p, &m, 0.5)?.povm, v })
}

fn apply_test_mode(povm: BinaryPovm, spec: &LearnerSpec) -> Rule {
    Rule::Majority { povm, v: spec.v }
}

/// Swap-test estimate of `Tr[ρ_i ρ_j]` for all pairs, each with
/// `⌊S/(N+1)⌋` shots so that every item spends at most `S` copies.
fn estimated_overlaps(ens: &LabeledEnsemble, ledger: &mut CopyLedger, rng: &mut Rng) -> Result<DMatrix<f64>> {
    let n = ens.len();
    let budget = ens.copy_budget().iter().copied().min().unwrap_or(0);
    let shots = budget / (n + 1);
    if shots == 0 {
        return Err(Error::CopyExhausted { item: 0, requested: n + 1, remaining: budget });
    }
    let items = ens.items();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let est = swap_test_estimate(&items[i].state, &items[j].state, shots, ledger, (i, j), rng)?;
            k[(i, j)] = est.estimate;
            k[(j, i)] = est.estimate;
        }
    }
    Ok(k)
}

fn observable_rule(a: CMat, v: usize) -> Result<Rule> {
    Ok(Rule::ObservableMean { outcomes: ObservableOutcomes::of(&a)?, v })
}

fn block_mean(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &i in rows {
        for &j in cols {
            acc += k[(i, j)];
        }
    }
    acc / (rows.len() * cols.len()) as f64
}

fn default_fixed_labels(d: usize) -> Vec<Label> {
    (0..d).map(|k| if k == 0 { Label::Plus } else { Label::Minus }).collect()
}

/// Trains the configured learner on `ens`.
pub fn learn(ens: &LabeledEnsemble, spec: &LearnerSpec, ledger: &mut CopyLedger, rng: &mut Rng) -> Result<Learned> {
    if spec.known_states {
        return Ok(Learned::plain(empirical_reference(ens, spec.v)?));
    }
    let d = ens.dim();
    let prior = prior_plus(ens);
    match spec.strategy {
        StrategyKind::Tomography => match spec.test_mode {
            TestMode::Majority => {
                let mut means = Vec::with_capacity(2);
                for y in [Label::Plus, Label::Minus] {
                    let members: Vec<(usize, &DensityMatrix, usize)> = class_members(ens, y)
                        .into_iter()
                        .map(|i| (i, &ens.items()[i].state, ens.copy_budget()[i]))
                        .collect();
                    means.push(tomography_mean(&members, ledger, rng)?);
                }
                let povm = weighted_helstrom(&means[0], &means[1], prior)?.povm;
                Ok(Learned::plain(apply_test_mode(povm, spec)))
            }
            TestMode::Collective => {
                let mut estimates = Vec::with_capacity(ens.len());
                for (i, it) in ens.items().iter().enumerate() {
                    let s = ens.copy_budget()[i];
                    ledger.debit(i, s)?;
                    estimates.push(tomography_reconstruct(s, &it.state, rng)?);
                }
                let mut means = Vec::with_capacity(2);
                for y in [Label::Plus, Label::Minus] {
                    let powers = class_members(ens, y)
                        .into_iter()
                        .map(|i| estimates[i].tensor_power(spec.v, DIM_CAP))
                        .collect::<Result<Vec<_>>>()?;
                    means.push(DensityMatrix::uniform_mixture(powers.iter())?);
                }
                let povm = weighted_helstrom(&means[0], &means[1], prior)?.povm;
                Ok(Learned::plain(Rule::Collective { povm, v: spec.v }))
            }
        },
        StrategyKind::Dictionary => {
            let povm = Povm::computational(d);
            let mut counts = [vec![0usize; d], vec![0usize; d]];
            let mut shots = Vec::new();
            for (i, it) in ens.items().iter().enumerate() {
                let s = ens.copy_budget()[i];
                if s == 0 {
                    continue;
                }
                let rec = born_sample(&it.state, &povm, s, ledger, i, rng)?;
                let class = usize::from(it.y == Label::Minus);
                for &k in &rec.outcomes {
                    counts[class][k] += 1;
                }
                if spec.record_shots {
                    shots.push(rec);
                }
            }
            let freq = |c: &Vec<usize>| {
                let total = c.iter().sum::<usize>().max(1) as f64;
                c.iter().map(|&k| k as f64 / total).collect::<Vec<_>>()
            };
            let rule = weighted_bayes_rule(&freq(&counts[0]), &freq(&counts[1]), prior)?;
            let binary = rule.to_binary_povm(&povm)?;
            Ok(Learned { rule: apply_test_mode(binary, spec), shots, pe_bits: None, pe_failure_bound: None })
        }
        StrategyKind::FixedPovm => {
            let labels = spec.fixed_labels.clone().unwrap_or_else(|| default_fixed_labels(d));
            if labels.len() != d {
                return Err(Error::Config(format!("fixed_labels has {} entries for dimension {d}", labels.len())));
            }
            Ok(Learned::plain(apply_test_mode(BinaryPovm::from_basis_labels(&labels), spec)))
        }
        StrategyKind::Representer => {
            let k = estimated_overlaps(ens, ledger, rng)?;
            let plus = class_members(ens, Label::Plus);
            let minus = class_members(ens, Label::Minus);
            let (p_plus, p_minus, f) =
                (block_mean(&k, &plus, &plus), block_mean(&k, &minus, &minus), block_mean(&k, &plus, &minus));
            let (a_plus, a_minus) = representer_coefficients(p_plus, p_minus, f, SINGULARITY_TOL)?;
            let (mean_plus, mean_minus) = ens.class_means()?;
            let a = mean_plus.matrix().scale(a_plus) + mean_minus.matrix().scale(a_minus);
            Ok(Learned::plain(observable_rule(a, spec.v)?))
        }
        StrategyKind::Kernel => {
            let k = project_psd_gram(&estimated_overlaps(ens, ledger, rng)?)?;
            let labels: Vec<Label> = ens.items().iter().map(|it| it.y).collect();
            let model = kernel_train(&k, &labels, &spec.kernel)?;
            let mut a = CMat::zeros(d, d);
            for (alpha, it) in model.alphas.iter().zip(ens.items()) {
                a += it.state.matrix().scale(*alpha);
            }
            Ok(Learned::plain(observable_rule(a, spec.v)?))
        }
        StrategyKind::PeHelstrom => {
            let cfg = spec.pe.config();
            let mut rules = Vec::with_capacity(spec.test_states);
            let mut bits = 0usize;
            let mut bound = 0.0;
            for _ in 0..spec.test_states.max(1) {
                match affordable_bits(ens, &cfg, ledger) {
                    Some(m) => {
                        let run = pe_effective_povm(ens, &PhaseEstimationConfig { m, ..cfg }, ledger, rng)?;
                        bits += run.m_used;
                        bound += run.failure_prob_bound;
                        rules.push(apply_test_mode(run.povm, spec));
                    }
                    None => {
                        bound += failure_prob_bound(0);
                        rules.push(apply_test_mode(BinaryPovm::trivial(d), spec));
                    }
                }
            }
            let count = rules.len() as f64;
            let rule = if rules.len() == 1 { rules.pop().expect("one rule") } else { Rule::Average(rules) };
            Ok(Learned {
                rule,
                shots: Vec::new(),
                pe_bits: Some(bits as f64 / count),
                pe_failure_bound: Some(bound / count),
            })
        }
    }
}
