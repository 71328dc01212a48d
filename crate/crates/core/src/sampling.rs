//! Finite-copy measurement simulation: Born-rule sampling, swap tests,
//! tomography, majority voting and shot-based observable estimation.
//!
//! Every operation that touches a copy of a state debits a [`CopyLedger`].

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::qcore::{
    hermitian_spectrum, identity, trace_product_re, traceless_operator_basis, BinaryPovm, CMat, DensityMatrix, Label,
    Observable, POVM_SUM_TOL, PSD_TOL,
};
use crate::rng::Rng;

/// Per-item copy accounting for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyLedger {
    remaining: Vec<usize>,
    consumed: Vec<usize>,
}

impl CopyLedger {
    pub fn new(budgets: Vec<usize>) -> Self {
        let n = budgets.len();
        Self { remaining: budgets, consumed: vec![0; n] }
    }

    /// `n` items with no effective limit.
    pub fn unbounded(n: usize) -> Self {
        Self::new(vec![usize::MAX; n])
    }

    pub fn debit(&mut self, item: usize, copies: usize) -> Result<()> {
        let remaining = *self.remaining.get(item).ok_or_else(|| Error::Shape(format!("ledger has no item {item}")))?;
        if copies > remaining {
            return Err(Error::CopyExhausted { item, requested: copies, remaining });
        }
        self.remaining[item] -= copies;
        self.consumed[item] += copies;
        Ok(())
    }

    pub fn remaining(&self, item: usize) -> usize {
        self.remaining[item]
    }

    pub fn consumed(&self, item: usize) -> usize {
        self.consumed[item]
    }

    pub fn total_consumed(&self) -> usize {
        self.consumed.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_empty(&self) -> bool {
        self.remaining.is_empty()
    }
}

/// Outcomes of repeated single-copy measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub outcomes: Vec<usize>,
    pub povm_id: String,
    pub copies_consumed: usize,
}

impl ShotRecord {
    pub fn counts(&self, n_outcomes: usize) -> Vec<usize> {
        let mut c = vec![0; n_outcomes];
        for &o in &self.outcomes {
            c[o] += 1;
        }
        c
    }
}

/// Appends `trial,shot,outcome` rows.
pub fn write_shot_csv<W: Write>(w: &mut csv::Writer<W>, trial: usize, record: &ShotRecord) -> Result<()> {
    for (shot, outcome) in record.outcomes.iter().enumerate() {
        w.write_record([trial.to_string(), shot.to_string(), outcome.to_string()])?;
    }
    Ok(())
}

/// Validated POVM with any number of outcomes.
#[derive(Debug, Clone)]
pub struct Povm {
    pub id: String,
    effects: Vec<CMat>,
}

impl Povm {
    pub fn new(id: impl Into<String>, effects: Vec<CMat>) -> Result<Self> {
        let first = effects.first().ok_or_else(|| Error::Config("POVM needs at least one effect".into()))?;
        let d = first.nrows();
        let mut sum = CMat::zeros(d, d);
        for e in &effects {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::Shape("POVM effects differ in dimension".into()));
            }
            let min = hermitian_spectrum(e)?.values.last().copied().unwrap_or(0.0);
            if min < -PSD_TOL {
                return Err(Error::InvalidState(format!("POVM effect has eigenvalue {min:e}")));
            }
            sum += e;
        }
        let defect = (sum - identity(d)).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if defect > POVM_SUM_TOL {
            return Err(Error::InvalidState(format!("POVM effects do not sum to identity (defect {defect:e})")));
        }
        Ok(Self { id: id.into(), effects })
    }

    /// Rank-one projectors onto the computational basis.
    pub fn computational(d: usize) -> Self {
        let effects = (0..d)
            .map(|k| {
                let mut e = CMat::zeros(d, d);
                e[(k, k)] = crate::qcore::c(1.0, 0.0);
                e
            })
            .collect();
        Self { id: format!("computational{d}"), effects }
    }

    pub fn from_binary(id: impl Into<String>, p: &BinaryPovm) -> Self {
        Self { id: id.into(), effects: vec![p.plus().clone(), p.minus().clone()] }
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }

    /// Born probabilities, clipped at zero and renormalized.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        normalized_probs(self.effects.iter().map(|e| trace_product_re(e, rho.matrix())))
    }
}

fn normalized_probs(raw: impl Iterator<Item = f64>) -> Vec<f64> {
    let p: Vec<f64> = raw.map(|v| v.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    p.into_iter().map(|v| v / total).collect()
}

/// One categorical draw.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Multinomial counts by sequential conditional binomials.
pub fn multinomial(n: usize, probs: &[f64], rng: &mut Rng) -> Vec<usize> {
    let mut counts = vec![0; probs.len()];
    let mut left = n as u64;
    let mut mass = 1.0f64;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() || mass <= 0.0 {
            counts[k] = left as usize;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = binomial(left, q, rng);
        counts[k] = draw as usize;
        left -= draw;
        mass -= p;
    }
    counts
}

pub fn binomial(n: u64, p: f64, rng: &mut Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability lies in (0, 1)").sample(rng)
}

/// I.i.d. Born-rule outcomes of `povm` on `shots` copies of `rho`.
pub fn born_sample(
    rho: &DensityMatrix,
    povm: &Povm,
    shots: usize,
    ledger: &mut CopyLedger,
    item: usize,
    rng: &mut Rng,
) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::Config("born_sample needs at least one shot".into()));
    }
    if povm.dim() != rho.dim() {
        return Err(Error::Shape(format!("POVM of dim {} on state of dim {}", povm.dim(), rho.dim())));
    }
    ledger.debit(item, shots)?;
    let probs = povm.probabilities(rho);
    let outcomes = (0..shots).map(|_| sample_index(&probs, rng)).collect();
    Ok(ShotRecord { outcomes, povm_id: povm.id.clone(), copies_consumed: shots })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Swap-test estimate of `Tr[ρσ]`. Each shot consumes one copy of each
/// state and yields `±1` with `P(+1) = (1 + Tr[ρσ])/2`.
pub fn swap_test_estimate(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    shots: usize,
    ledger: &mut CopyLedger,
    items: (usize, usize),
    rng: &mut Rng,
) -> Result<OverlapEstimate> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Shape("swap test between states of different dimension".into()));
    }
    if shots == 0 {
        return Err(Error::Config("swap test needs at least one shot".into()));
    }
    ledger.debit(items.0, shots)?;
    ledger.debit(items.1, shots)?;
    let overlap = trace_product_re(rho.matrix(), sigma.matrix()).clamp(0.0, 1.0);
    let plus = binomial(shots as u64, (1.0 + overlap) / 2.0, rng);
    Ok(overlap_from_counts(plus as usize, shots))
}

/// Estimator `2 n₊/shots − 1` with standard error `√((1 − est²)/shots)`.
pub fn overlap_from_counts(plus: usize, shots: usize) -> OverlapEstimate {
    let estimate = 2.0 * plus as f64 / shots as f64 - 1.0;
    let stderr = ((1.0 - estimate * estimate).max(0.0) / shots as f64).sqrt();
    OverlapEstimate { estimate, stderr }
}

/// Projective measurement in the eigenbasis of a Hermitian operator, with
/// degenerate eigenvalues merged into one outcome.
#[derive(Debug, Clone)]
pub struct MeasurementSetting {
    pub label: String,
    pub effects: Vec<CMat>,
    pub values: Vec<f64>,
}

impl MeasurementSetting {
    pub fn of_operator(label: impl Into<String>, op: &CMat) -> Result<Self> {
        let spec = hermitian_spectrum(op)?;
        let d = op.nrows();
        let mut values: Vec<f64> = Vec::new();
        let mut effects: Vec<CMat> = Vec::new();
        for (j, &v) in spec.values.iter().enumerate() {
            let col = spec.vectors.column(j);
            let proj = col * col.adjoint();
            match values.iter().position(|&u| (u - v).abs() < 1e-9) {
                Some(k) => effects[k] += proj,
                None => {
                    values.push(v);
                    effects.push(CMat::zeros(d, d) + proj);
                }
            }
        }
        Ok(Self { label: label.into(), effects, values })
    }

    /// Identity: a single deterministic outcome of value 1.
    pub fn trivial(d: usize) -> Self {
        Self { label: "I".into(), effects: vec![identity(d)], values: vec![1.0] }
    }

    pub fn operator(&self) -> CMat {
        let d = self.effects[0].nrows();
        let mut m = CMat::zeros(d, d);
        for (e, &v) in self.effects.iter().zip(&self.values) {
            m += e.scale(v);
        }
        m
    }

    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        normalized_probs(self.effects.iter().map(|e| trace_product_re(e, rho.matrix())))
    }

    pub fn exact_mean(&self, rho: &DensityMatrix) -> f64 {
        self.probabilities(rho).iter().zip(&self.values).map(|(p, v)| p * v).sum()
    }

    /// Sample mean of outcome values over `shots` single-copy measurements.
    pub fn sample_mean(&self, rho: &DensityMatrix, shots: usize, rng: &mut Rng) -> f64 {
        let counts = multinomial(shots, &self.probabilities(rho), rng);
        counts.iter().zip(&self.values).map(|(&n, v)| n as f64 * v).sum::<f64>() / shots as f64
    }
}

/// Weighted sum of measurement settings reconstructing an observable.
pub type Decomposition = Vec<(f64, MeasurementSetting)>;

/// Traceless basis settings of dimension `d` (Pauli strings for `d = 2^n`,
/// Gell-Mann otherwise) with their Hilbert–Schmidt norms.
pub fn basis_settings(d: usize) -> Result<Vec<(MeasurementSetting, f64)>> {
    traceless_operator_basis(d)
        .into_iter()
        .map(|b| Ok((MeasurementSetting::of_operator(b.label, &b.matrix)?, b.norm_sq)))
        .collect()
}

/// Expansion `A = (Tr A / d) I + Σ_α (Tr[A P_α]/‖P_α‖²) P_α`, dropping
/// negligible terms.
pub fn operator_decomposition(a: &Observable) -> Result<Decomposition> {
    let d = a.dim();
    let mut out = Vec::new();
    let tr = a.matrix().trace().re / d as f64;
    if tr.abs() > 1e-14 {
        out.push((tr, MeasurementSetting::trivial(d)));
    }
    for b in traceless_operator_basis(d) {
        let coeff = trace_product_re(a.matrix(), &b.matrix) / b.norm_sq;
        if coeff.abs() > 1e-14 {
            out.push((coeff, MeasurementSetting::of_operator(b.label, &b.matrix)?));
        }
    }
    Ok(out)
}

/// Splits `total` evenly over `parts`, remainder to the leading entries.
pub fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|k| base + usize::from(k < extra)).collect()
}

/// Shot-based estimate of `Tr[Aρ]` from a decomposition of `A`.
pub fn observable_shot_mean(
    rho: &DensityMatrix,
    a: &Observable,
    decomposition: &[(f64, MeasurementSetting)],
    shots: usize,
    ledger: &mut CopyLedger,
    item: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if decomposition.is_empty() {
        return Err(Error::Config("empty observable decomposition".into()));
    }
    let d = a.dim();
    let mut rebuilt = CMat::zeros(d, d);
    for (coeff, s) in decomposition {
        rebuilt += s.operator().scale(*coeff);
    }
    let defect = (rebuilt - a.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if defect > 1e-9 {
        return Err(Error::Config(format!("decomposition does not reconstruct the observable (defect {defect:e})")));
    }
    if shots < decomposition.len() {
        return Err(Error::Config(format!("{shots} shots cannot cover {} decomposition terms", decomposition.len())));
    }
    ledger.debit(item, shots)?;
    let alloc = split_evenly(shots, decomposition.len());
    Ok(decomposition.iter().zip(alloc).map(|((coeff, s), n)| coeff * s.sample_mean(rho, n, rng)).sum())
}

/// Linear inversion `ρ = I/d + Σ_α (e_α/‖P_α‖²) P_α` from traceless-basis
/// expectations `e_α`, without positivity repair.
pub fn linear_inversion(d: usize, expectations: &[f64]) -> Result<CMat> {
    let basis = traceless_operator_basis(d);
    if expectations.len() != basis.len() {
        return Err(Error::Shape(format!("{} expectations for {} basis operators", expectations.len(), basis.len())));
    }
    let mut m = identity(d).unscale(d as f64);
    for (b, &e) in basis.iter().zip(expectations) {
        m += b.matrix.scale(e / b.norm_sq);
    }
    Ok(m)
}

/// Exact traceless-basis expectations of `rho`.
pub fn exact_basis_expectations(rho: &DensityMatrix) -> Vec<f64> {
    traceless_operator_basis(rho.dim()).iter().map(|b| rho.expectation(&b.matrix)).collect()
}

/// Tomography of a single state from `copies` fresh copies: each basis
/// setting measured `copies/(d²−1)` times, linear inversion, then
/// eigenvalue clipping and trace renormalization.
pub fn tomography_reconstruct(copies: usize, rho_true: &DensityMatrix, rng: &mut Rng) -> Result<DensityMatrix> {
    let d = rho_true.dim();
    if copies < d * d {
        return Err(Error::Config(format!(
            "tomography in dimension {d} needs at least {} copies, got {copies}",
            d * d
        )));
    }
    let settings = basis_settings(d)?;
    let alloc = split_evenly(copies, settings.len());
    let est: Vec<f64> = settings.iter().zip(alloc).map(|((s, _), n)| s.sample_mean(rho_true, n, rng)).collect();
    DensityMatrix::project_psd(&linear_inversion(d, &est)?)
}

/// Tomographic estimate of the mean of several states `(item, state,
/// copies)`. Each state spreads its copies over the basis settings, with
/// the starting setting rotated between states so small budgets still cover
/// every setting; a setting's estimate averages the per-state sample means
/// of the states that measured it.
pub fn tomography_mean(
    states: &[(usize, &DensityMatrix, usize)],
    ledger: &mut CopyLedger,
    rng: &mut Rng,
) -> Result<DensityMatrix> {
    let (_, first, _) = states.first().ok_or_else(|| Error::Data("tomography of an empty set".into()))?;
    let d = first.dim();
    let settings = basis_settings(d)?;
    let m = settings.len();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    let mut offset = 0;
    for &(item, rho, copies) in states {
        ledger.debit(item, copies)?;
        let base = copies / m;
        let extra = copies % m;
        for (alpha, (setting, _)) in settings.iter().enumerate() {
            let shots = base + usize::from((alpha + m - offset) % m < extra);
            if shots > 0 {
                sums[alpha] += setting.sample_mean(rho, shots, rng);
                counts[alpha] += 1;
            }
        }
        offset = (offset + extra) % m;
    }
    let est = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| {
            if n == 0 {
                Err(Error::Config(format!("tomography in dimension {d} needs at least {m} copies in total")))
            } else {
                Ok(s / n as f64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DensityMatrix::project_psd(&linear_inversion(d, &est)?)
}

/// Majority label of `v` single-copy measurements of `povm`.
pub fn majority_vote(
    rho_test: &DensityMatrix,
    povm: &BinaryPovm,
    v: usize,
    ledger: &mut CopyLedger,
    item: usize,
    rng: &mut Rng,
) -> Result<Label> {
    if v.is_multiple_of(2) {
        return Err(Error::Config(format!("majority vote needs an odd number of copies, got {v}")));
    }
    ledger.debit(item, v)?;
    let plus = binomial(v as u64, povm.prob_plus(rho_test), rng);
    Ok(if 2 * plus as usize > v { Label::Plus } else { Label::Minus })
}
