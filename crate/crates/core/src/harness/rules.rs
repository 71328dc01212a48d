//! Learned decision rules and their exact error probabilities.

use rand::Rng as _;

use crate::bounds::majority_error_exact;
use crate::embeddings::LabeledEnsemble;
use crate::error::{Error, Result};
use crate::qcore::{hermitian_spectrum, BinaryPovm, CMat, DensityMatrix, Label, DIM_CAP};
use crate::rng::Rng;
use crate::sampling::{binomial, multinomial};

use super::population::Population;

/// Eigenvalues closer than this are merged into one outcome.
const EIGEN_MERGE_TOL: f64 = 1e-9;
/// Sample means within this of zero count as ties.
const TIE_TOL: f64 = 1e-12;

/// Projective measurement of a decision observable: distinct eigenvalues
/// and their spectral projectors.
#[derive(Debug, Clone)]
pub struct ObservableOutcomes {
    pub values: Vec<f64>,
    pub projectors: Vec<CMat>,
}

impl ObservableOutcomes {
    pub fn of(a: &CMat) -> Result<Self> {
        let spec = hermitian_spectrum(a)?;
        let mut values: Vec<f64> = Vec::new();
        let mut projectors: Vec<CMat> = Vec::new();
        for (k, &v) in spec.values.iter().enumerate() {
            let col = spec.vectors.column(k);
            let proj = col * col.adjoint();
            match values.last() {
                Some(&last) if (last - v).abs() < EIGEN_MERGE_TOL => *projectors.last_mut().expect("paired") += proj,
                _ => {
                    values.push(v);
                    projectors.push(proj);
                }
            }
        }
        Ok(Self { values, projectors })
    }

    fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        let raw: Vec<f64> = self.projectors.iter().map(|p| rho.expectation(p).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|p| p / total).collect()
    }
}

/// A binary classifier acting on `v` copies of the test state.
#[derive(Debug, Clone)]
pub enum Rule {
    /// Majority vote of a single-copy binary POVM over `v` copies.
    Majority { povm: BinaryPovm, v: usize },
    /// Binary POVM on the joint `v`-copy state.
    Collective { povm: BinaryPovm, v: usize },
    /// Sign of the `v`-shot sample mean of an observable; ties are broken
    /// by a fair coin.
    ObservableMean { outcomes: ObservableOutcomes, v: usize },
    /// Uniform mixture of rules, one per sequential test classification.
    Average(Vec<Rule>),
}

/// `P(Σ_k n_k a_k > 0) + ½ P(Σ_k n_k a_k = 0)` over multinomial counts of
/// `v` shots with outcome probabilities `q`.
fn positive_mean_probability(values: &[f64], q: &[f64], v: usize) -> f64 {
    let support: Vec<(f64, f64)> = values.iter().zip(q).filter(|(_, &p)| p > 0.0).map(|(&a, &p)| (a, p)).collect();
    let mut log_fact = vec![0.0f64; v + 1];
    for k in 1..=v {
        log_fact[k] = log_fact[k - 1] + (k as f64).ln();
    }
    let scale = values.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
    let mut out = 0.0;
    fn walk(
        idx: usize,
        left: usize,
        sum: f64,
        log_p: f64,
        support: &[(f64, f64)],
        log_fact: &[f64],
        tie: f64,
        out: &mut f64,
    ) {
        if idx + 1 == support.len() {
            let (a, p) = support[idx];
            let total = sum + left as f64 * a;
            let lp = log_p + left as f64 * p.ln() - log_fact[left];
            let prob = lp.exp();
            if total > tie {
                *out += prob;
            } else if total >= -tie {
                *out += 0.5 * prob;
            }
            return;
        }
        let (a, p) = support[idx];
        for k in 0..=left {
            walk(
                idx + 1,
                left - k,
                sum + k as f64 * a,
                log_p + k as f64 * p.ln() - log_fact[k],
                support,
                log_fact,
                tie,
                out,
            );
        }
    }
    if support.is_empty() {
        return 0.5;
    }
    walk(0, v, 0.0, log_fact[v], &support, &log_fact, TIE_TOL * scale * v as f64, &mut out);
    out.clamp(0.0, 1.0)
}

impl Rule {
    pub fn copies(&self) -> usize {
        match self {
            Rule::Majority { v, .. } | Rule::Collective { v, .. } | Rule::ObservableMean { v, .. } => *v,
            Rule::Average(rules) => rules.first().map_or(1, Rule::copies),
        }
    }

    /// Whether the error probability is linear in the single-copy state, so
    /// that class averages suffice.
    pub fn is_linear(&self) -> bool {
        match self {
            Rule::Majority { v, .. } | Rule::Collective { v, .. } | Rule::ObservableMean { v, .. } => *v == 1,
            Rule::Average(rules) => rules.iter().all(Rule::is_linear),
        }
    }

    /// Probability of predicting `+1` on `v` copies of `rho`.
    pub fn prob_plus(&self, rho: &DensityMatrix) -> Result<f64> {
        match self {
            Rule::Majority { povm, v } => Ok(1.0 - majority_error_exact(povm.prob_plus(rho).clamp(0.0, 1.0), *v)?),
            Rule::Collective { povm, v } => Ok(povm.prob_plus(&rho.tensor_power(*v, DIM_CAP)?).clamp(0.0, 1.0)),
            Rule::ObservableMean { outcomes, v } => {
                Ok(positive_mean_probability(&outcomes.values, &outcomes.probabilities(rho), *v))
            }
            Rule::Average(rules) => {
                let mut acc = 0.0;
                for r in rules {
                    acc += r.prob_plus(rho)?;
                }
                Ok(acc / rules.len() as f64)
            }
        }
    }

    pub fn error(&self, rho: &DensityMatrix, y: Label) -> Result<f64> {
        let p = self.prob_plus(rho)?;
        Ok(match y {
            Label::Plus => 1.0 - p,
            Label::Minus => p,
        })
    }

    /// Error on the exact `v`-copy class average, for collective rules and
    /// mixtures of them.
    fn error_on_average(&self, avg: &DensityMatrix, y: Label) -> Result<f64> {
        match self {
            Rule::Collective { povm, .. } => Ok(povm.prob(y.flip(), avg).clamp(0.0, 1.0)),
            _ => self.error(avg, y),
        }
    }

    /// Average error on the training items, `(1/N) Σ_n P(wrong | ρ_n, y_n)`.
    pub fn dataset_loss(&self, ens: &LabeledEnsemble) -> Result<f64> {
        let mut acc = 0.0;
        for it in ens.items() {
            acc += self.error(&it.state, it.y)?;
        }
        Ok(acc / ens.len() as f64)
    }

    /// Exact error under the population with class prior ½.
    pub fn true_loss(&self, pop: &Population, cache: &mut MultiCopyCache) -> Result<f64> {
        if let Rule::Average(rules) = self {
            let mut acc = 0.0;
            for r in rules {
                acc += r.true_loss(pop, cache)?;
            }
            return Ok(acc / rules.len() as f64);
        }
        let mut total = 0.0;
        for y in [Label::Plus, Label::Minus] {
            let class_loss = if self.is_linear() {
                self.error(pop.average(y), y)?
            } else if let Rule::Collective { v, .. } = self {
                self.error_on_average(cache.get(pop, y, *v)?, y)?
            } else {
                let pts = pop.support(y).ok_or_else(|| {
                    Error::Config("multi-copy test rules need a population with finite support".into())
                })?;
                let mut acc = 0.0;
                for p in pts {
                    acc += p.weight * self.error(&p.state, y)?;
                }
                acc
            };
            total += 0.5 * class_loss;
        }
        Ok(total)
    }

    /// Simulated prediction on `v` fresh copies of `rho`.
    pub fn sample_prediction(&self, rho: &DensityMatrix, rng: &mut Rng) -> Result<Label> {
        let coin = |p: f64, rng: &mut Rng| if rng.random::<f64>() < p { Label::Plus } else { Label::Minus };
        match self {
            Rule::Majority { povm, v } => {
                let plus = binomial(*v as u64, povm.prob_plus(rho).clamp(0.0, 1.0), rng) as usize;
                Ok(if 2 * plus > *v { Label::Plus } else { Label::Minus })
            }
            Rule::Collective { .. } => Ok(coin(self.prob_plus(rho)?, rng)),
            Rule::ObservableMean { outcomes, v } => {
                let counts = multinomial(*v, &outcomes.probabilities(rho), rng);
                let sum: f64 = counts.iter().zip(&outcomes.values).map(|(&n, a)| n as f64 * a).sum();
                let scale = outcomes.values.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
                let tie = TIE_TOL * scale * *v as f64;
                Ok(if sum > tie {
                    Label::Plus
                } else if sum < -tie {
                    Label::Minus
                } else {
                    coin(0.5, rng)
                })
            }
            Rule::Average(rules) => rules[rng.random_range(0..rules.len())].sample_prediction(rho, rng),
        }
    }
}

/// Lazily computed `E[ρ^{⊗v} | y]` for the population.
#[derive(Debug, Default)]
pub struct MultiCopyCache {
    entries: Vec<(Label, usize, DensityMatrix)>,
}

impl MultiCopyCache {
    pub fn get(&mut self, pop: &Population, y: Label, v: usize) -> Result<&DensityMatrix> {
        if let Some(pos) = self.entries.iter().position(|(l, k, _)| *l == y && *k == v) {
            return Ok(&self.entries[pos].2);
        }
        let avg = pop.multi_copy_average(y, v)?;
        self.entries.push((y, v, avg));
        Ok(&self.entries.last().expect("just pushed").2)
    }
}
