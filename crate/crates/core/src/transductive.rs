//! Approximate Helstrom measurement by state exponentiation and phase
//! estimation.
//!
//! `H = (ρ̄₊ − ρ̄₋)/2` is never formed by the finite-copy learner: each
//! controlled `e^{2πi 2^j H}` is replaced by a sequence of controlled
//! partial-swap steps, each consuming one fresh copy of a `+` item and one
//! of a `−` item from the ledger.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embeddings::LabeledEnsemble;
use crate::error::{Error, Result};
use crate::qcore::{
    c, check_dim_cap, expm_i_hermitian, hermitian_part, hermitian_spectrum, identity, kron, partial_trace_mat,
    swap_operator, BinaryPovm, CMat, DensityMatrix, Label, Observable, C64, DIM_CAP,
};
use crate::rng::Rng;
use crate::sampling::CopyLedger;

/// Largest number of ancilla bits supported.
pub const MAX_ANCILLA_BITS: usize = 12;
/// Phases closer to zero than this are degenerate.
pub const PHASE_ZERO_TOL: f64 = 1e-9;

/// `Tr₁[e^{−it·SWAP}(ρ ⊗ σ)e^{it·SWAP}]`, computed on the joint space.
pub fn swap_exponentiation_step(rho: &DensityMatrix, sigma: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let d = rho.dim();
    if sigma.dim() != d {
        return Err(Error::Shape("state exponentiation needs equal dimensions".into()));
    }
    check_dim_cap(d * d, DIM_CAP)?;
    let s = swap_operator(d);
    let u = identity(d * d).scale(t.cos()) - s.scale(t.sin()) * c(0.0, 1.0);
    let joint = kron(rho.matrix(), sigma.matrix());
    let out = &u * joint * u.adjoint();
    Ok(DensityMatrix::from_trusted(partial_trace_mat(&out, &[d, d], &[1])?))
}

/// Closed form of the partial-swap step applied to an arbitrary operator
/// `y` on the target: `cos²t·y + sin²t·Tr(y)·ρ − i·sin t·cos t·[ρ, y]`.
pub fn swap_step_operator(y: &CMat, rho: &CMat, t: f64) -> CMat {
    let (s, co) = t.sin_cos();
    let comm = rho * y - y * rho;
    y.scale(co * co) + rho * (y.trace() * s * s) - comm * c(0.0, s * co)
}

/// `e^{iHt} σ e^{−iHt}`.
pub fn exact_conjugation(h: &Observable, sigma: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let u = expm_i_hermitian(h.matrix(), t)?;
    Ok(sigma.evolve(&u))
}

/// `H = (ρ̄₊ − ρ̄₋)/2` from unweighted class means.
pub fn helstrom_hamiltonian(ensemble: &LabeledEnsemble) -> Result<Observable> {
    let (p, m) = ensemble.class_means()?;
    Ok(Observable::from_trusted((p.matrix() - m.matrix()).scale(0.5)))
}

/// Supplies training copies to the simulation: either the exact class
/// means or copies of randomly chosen items drawn from a ledger.
pub enum CopySource<'a> {
    ClassMeans,
    Ledger(&'a mut CopyLedger),
}

/// Pools of item indices per class with copies left.
struct ClassPools {
    plus: Vec<usize>,
    minus: Vec<usize>,
}

impl ClassPools {
    fn new(ensemble: &LabeledEnsemble, ledger: &CopyLedger) -> Self {
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for (i, it) in ensemble.items().iter().enumerate() {
            if ledger.remaining(i) > 0 {
                match it.y {
                    Label::Plus => plus.push(i),
                    Label::Minus => minus.push(i),
                }
            }
        }
        Self { plus, minus }
    }

    fn draw(&mut self, label: Label, ledger: &mut CopyLedger, rng: &mut Rng) -> Result<usize> {
        let pool = match label {
            Label::Plus => &mut self.plus,
            Label::Minus => &mut self.minus,
        };
        if pool.is_empty() {
            return Err(Error::CopyExhausted { item: usize::MAX, requested: 1, remaining: 0 });
        }
        let k = rng.random_range(0..pool.len());
        let item = pool[k];
        ledger.debit(item, 1)?;
        if ledger.remaining(item) == 0 {
            pool.swap_remove(k);
        }
        Ok(item)
    }

    fn available(&self, ledger: &CopyLedger) -> (usize, usize) {
        let count = |p: &Vec<usize>| p.iter().map(|&i| ledger.remaining(i)).fold(0usize, |a, b| a.saturating_add(b));
        (count(&self.plus), count(&self.minus))
    }
}

/// Approximates `e^{iHt} σ e^{−iHt}` with `steps` rounds, each applying a
/// partial-swap step with a `+` copy at time `−t/(2·steps)` and with a `−`
/// copy at time `+t/(2·steps)`.
pub fn simulate_hamiltonian_evolution(
    ensemble: &LabeledEnsemble,
    sigma: &DensityMatrix,
    t: f64,
    steps: usize,
    source: CopySource<'_>,
    rng: &mut Rng,
) -> Result<DensityMatrix> {
    if steps == 0 {
        return Err(Error::Config("Hamiltonian simulation needs at least one step".into()));
    }
    if sigma.dim() != ensemble.dim() {
        return Err(Error::Shape("target and training states differ in dimension".into()));
    }
    let dt = t / (2.0 * steps as f64);
    let mut y = sigma.matrix().clone();
    match source {
        CopySource::ClassMeans => {
            let (p, m) = ensemble.class_means()?;
            for _ in 0..steps {
                y = swap_step_operator(&y, p.matrix(), -dt);
                y = swap_step_operator(&y, m.matrix(), dt);
            }
        }
        CopySource::Ledger(ledger) => {
            let mut pools = ClassPools::new(ensemble, ledger);
            let items = ensemble.items();
            for _ in 0..steps {
                let ip = pools.draw(Label::Plus, ledger, rng)?;
                y = swap_step_operator(&y, items[ip].state.matrix(), -dt);
                let im = pools.draw(Label::Minus, ledger, rng)?;
                y = swap_step_operator(&y, items[im].state.matrix(), dt);
            }
        }
    }
    Ok(DensityMatrix::from_trusted(y))
}

// --- phase estimation ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeMode {
    /// `U = e^{2πiH}` applied exactly from the class means.
    ExactUnitary,
    /// Each controlled power of `U` replaced by controlled partial-swap
    /// steps on fresh training copies.
    FiniteCopy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimationConfig {
    pub m: usize,
    pub mode: PeMode,
    /// Per-stage simulation precision; defaults to `2^{−m}/m`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Map zero phases to outcome 0 instead of failing.
    #[serde(default)]
    pub allow_degenerate: bool,
}

impl PhaseEstimationConfig {
    pub fn exact(m: usize) -> Self {
        Self { m, mode: PeMode::ExactUnitary, delta: None, allow_degenerate: false }
    }

    pub fn finite(m: usize) -> Self {
        Self { m, mode: PeMode::FiniteCopy, delta: None, allow_degenerate: false }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(self.m))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.m == 0 || self.m > MAX_ANCILLA_BITS {
            return Err(Error::Config(format!("ancilla bits m={} must lie in 1..={MAX_ANCILLA_BITS}", self.m)));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0) {
                return Err(Error::Config(format!("simulation precision {delta} must be positive")));
            }
        }
        if self.mode == PeMode::FiniteCopy {
            check_dim_cap((1usize << self.m) * d, DIM_CAP)?;
        }
        Ok(())
    }
}

pub fn default_delta(m: usize) -> f64 {
    (0.5f64).powi(m as i32) / m as f64
}

/// Number of partial-swap rounds for each controlled power
/// `e^{2πi 2^j H}`, `j = 0..m`: `⌈t_j²/δ⌉` with `t_j = 2π·2^j`.
pub fn stage_schedule(m: usize, delta: f64) -> Vec<usize> {
    (0..m)
        .map(|j| {
            let t = 2.0 * PI * (1u64 << j) as f64;
            (t * t / delta).ceil() as usize
        })
        .collect()
}

/// Training copies consumed by one finite-copy classification: two per
/// round.
pub fn copies_required(m: usize, delta: f64) -> usize {
    stage_schedule(m, delta).iter().map(|n| 2 * n).sum()
}

/// Phase-estimation failure bound `ε` from `m ≥ 1 + log₂(2 + 1/(2ε))`,
/// i.e. `1/(2^m − 4)` for `m ≥ 3` and the trivial bound 1 otherwise.
pub fn failure_prob_bound(m: usize) -> f64 {
    if m < 3 {
        1.0
    } else {
        (1.0 / ((1u64 << m) as f64 - 4.0)).min(1.0)
    }
}

/// Distribution of the `m`-bit phase estimate for eigenphase `φ' ∈ [0, 1)`.
pub fn phase_distribution(phi_prime: f64, m: usize) -> Vec<f64> {
    let big_m = 1usize << m;
    (0..big_m)
        .map(|b| {
            // geometric sum: |Σ_x e^{iθx}|/M = |sin(Mθ/2) / (M sin(θ/2))|
            let half_theta = PI * (phi_prime - b as f64 / big_m as f64);
            let den = big_m as f64 * half_theta.sin();
            if den.abs() < 1e-12 {
                1.0
            } else {
                ((big_m as f64 * half_theta).sin() / den).powi(2)
            }
        })
        .collect()
}

/// `φ' = φ` for `φ > 0`, `1 + φ` otherwise.
pub fn wrapped_phase(phi: f64) -> f64 {
    if phi >= 0.0 {
        phi
    } else {
        1.0 + phi
    }
}

/// Probability that the leading bit of the estimate is 0 (label `+1`).
pub fn leading_zero_probability(phi: f64, m: usize) -> f64 {
    let half = 1usize << (m - 1);
    phase_distribution(wrapped_phase(phi), m)[..half].iter().sum::<f64>().clamp(0.0, 1.0)
}

fn check_phases(values: &[f64], allow_degenerate: bool) -> Result<()> {
    if allow_degenerate {
        return Ok(());
    }
    match values.iter().find(|v| v.abs() < PHASE_ZERO_TOL) {
        Some(&phase) => Err(Error::DegeneratePhase { phase }),
        None => Ok(()),
    }
}

/// Effective binary POVM of ideal phase estimation with `U = e^{2πiH}`:
/// diagonal in the eigenbasis of `H` with weights `P(b₁ = 0 | φ_j)`.
pub fn pe_effective_povm_exact(h: &Observable, m: usize, allow_degenerate: bool) -> Result<BinaryPovm> {
    let spec = h.spectrum()?;
    check_phases(&spec.values, allow_degenerate)?;
    let plus = spec.reconstruct_with(|phi| leading_zero_probability(phi, m));
    Ok(BinaryPovm::from_plus_trusted(plus))
}

/// Matrix `Q = F Π_low F†` on the ancilla register, so that the leading
/// bit after the inverse QFT is 0 with probability `Tr[(Q ⊗ I) X]`.
fn leading_zero_operator(m: usize) -> CMat {
    let big_m = 1usize << m;
    let half = big_m / 2;
    let norm = big_m as f64;
    CMat::from_fn(big_m, big_m, |x, xp| {
        let mut acc = c(0.0, 0.0);
        for b in 0..half {
            acc += C64::from_polar(1.0, 2.0 * PI * (x as f64 - xp as f64) * b as f64 / norm);
        }
        acc / norm
    })
}

/// Circuit-level simulation with an explicit unitary: ancillas in `|+⟩^m`,
/// controlled powers of `u`, inverse QFT, leading-bit measurement. Returns
/// `P(b₁ = 0)` for input `σ`.
pub fn pe_circuit_leading_zero(u: &CMat, sigma: &DensityMatrix, m: usize) -> Result<f64> {
    if m == 0 || m > MAX_ANCILLA_BITS {
        return Err(Error::Config(format!("ancilla bits m={m} must lie in 1..={MAX_ANCILLA_BITS}")));
    }
    let big_m = 1usize << m;
    let q = leading_zero_operator(m);
    let spec = sigma.spectrum()?;
    let mut total = 0.0;
    for (k, &w) in spec.values.iter().enumerate() {
        if w <= 1e-15 {
            continue;
        }
        // |ψ_x⟩ = U^x |v_k⟩, the system state attached to ancilla value x
        let mut vecs = Vec::with_capacity(big_m);
        vecs.push(spec.vectors.column(k).into_owned());
        for x in 1..big_m {
            let next = u * &vecs[x - 1];
            vecs.push(next);
        }
        let mut p = c(0.0, 0.0);
        for x in 0..big_m {
            for xp in 0..big_m {
                p += q[(xp, x)] * vecs[xp].dotc(&vecs[x]);
            }
        }
        total += w * p.re / big_m as f64;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Controlled partial-swap step on the joint (ancilla register ⊗ target)
/// operator `x`, controlled by ancilla bit `bit`, with a fresh copy `rho`.
fn controlled_swap_step(x: &mut CMat, rho: &CMat, t: f64, bit: usize, d: usize) {
    let big_m = x.nrows() / d;
    let (s, co) = t.sin_cos();
    let mut block = CMat::zeros(d, d);
    for a in 0..big_m {
        let ca = (a >> bit) & 1 == 1;
        for b in 0..big_m {
            let cb = (b >> bit) & 1 == 1;
            if !ca && !cb {
                continue;
            }
            block.copy_from(&x.view((a * d, b * d), (d, d)));
            let out = match (ca, cb) {
                (true, true) => swap_step_operator(&block, rho, t),
                (true, false) => block.scale(co) - (rho * &block) * c(0.0, s),
                (false, true) => block.scale(co) + (&block * rho) * c(0.0, s),
                (false, false) => unreachable!(),
            };
            x.view_mut((a * d, b * d), (d, d)).copy_from(&out);
        }
    }
}

/// Runs the finite-copy circuit on every operator-basis input `|i⟩⟨j|` at
/// once, so that one realization of the sampled copies yields the effect
/// `Π₊` with `Tr[Π₊ σ] = P(b₁ = 0 | σ)` for every `σ`.
fn finite_copy_effect(
    ensemble: &LabeledEnsemble,
    m: usize,
    delta: f64,
    ledger: &mut CopyLedger,
    rng: &mut Rng,
) -> Result<CMat> {
    let d = ensemble.dim();
    let big_m = 1usize << m;
    let dim = big_m * d;
    check_dim_cap(dim, DIM_CAP)?;
    let plus_anc = CMat::from_element(big_m, big_m, c(1.0 / big_m as f64, 0.0));
    let mut joints: Vec<CMat> = (0..d * d)
        .map(|ij| {
            let mut e = CMat::zeros(d, d);
            e[(ij / d, ij % d)] = c(1.0, 0.0);
            kron(&plus_anc, &e)
        })
        .collect();
    let mut pools = ClassPools::new(ensemble, ledger);
    let items = ensemble.items();
    for (j, &rounds) in stage_schedule(m, delta).iter().enumerate() {
        let t = 2.0 * PI * (1u64 << j) as f64;
        let dt = t / (2.0 * rounds as f64);
        for _ in 0..rounds {
            let ip = pools.draw(Label::Plus, ledger, rng)?;
            let im = pools.draw(Label::Minus, ledger, rng)?;
            for x in joints.iter_mut() {
                controlled_swap_step(x, items[ip].state.matrix(), -dt, j, d);
                controlled_swap_step(x, items[im].state.matrix(), dt, j, d);
            }
        }
    }
    let q = leading_zero_operator(m);
    let mut effect = CMat::zeros(d, d);
    for (ij, x) in joints.iter().enumerate() {
        let (i, jj) = (ij / d, ij % d);
        let mut p = c(0.0, 0.0);
        for a in 0..big_m {
            for b in 0..big_m {
                let mut tr = c(0.0, 0.0);
                for k in 0..d {
                    tr += x[(a * d + k, b * d + k)];
                }
                p += q[(b, a)] * tr;
            }
        }
        // Tr[Π₊ |i⟩⟨j|] = (Π₊)_{ji}
        effect[(jj, i)] = p;
    }
    Ok(hermitian_part(&effect))
}

/// Clamps the spectrum of a nominal effect into `[0, 1]`.
fn clamp_effect(e: &CMat) -> Result<BinaryPovm> {
    let spec = hermitian_spectrum(e)?;
    Ok(BinaryPovm::from_plus_trusted(spec.reconstruct_with(|v| v.clamp(0.0, 1.0))))
}

/// Effective POVM of one run of the approximate Helstrom pipeline.
#[derive(Debug, Clone)]
pub struct PeRun {
    pub povm: BinaryPovm,
    pub m_used: usize,
    pub copies_used: usize,
    pub failure_prob_bound: f64,
}

/// Builds the effective measurement realized by one classification. In
/// finite-copy mode the copies are debited from `ledger`.
pub fn pe_effective_povm(
    ensemble: &LabeledEnsemble,
    cfg: &PhaseEstimationConfig,
    ledger: &mut CopyLedger,
    rng: &mut Rng,
) -> Result<PeRun> {
    cfg.validate(ensemble.dim())?;
    let h = helstrom_hamiltonian(ensemble)?;
    check_phases(&h.spectrum()?.values, cfg.allow_degenerate)?;
    match cfg.mode {
        PeMode::ExactUnitary => Ok(PeRun {
            povm: pe_effective_povm_exact(&h, cfg.m, cfg.allow_degenerate)?,
            m_used: cfg.m,
            copies_used: 0,
            failure_prob_bound: failure_prob_bound(cfg.m),
        }),
        PeMode::FiniteCopy => {
            let before = ledger.total_consumed();
            let effect = finite_copy_effect(ensemble, cfg.m, cfg.delta(), ledger, rng)?;
            Ok(PeRun {
                povm: clamp_effect(&effect)?,
                m_used: cfg.m,
                copies_used: ledger.total_consumed() - before,
                failure_prob_bound: failure_prob_bound(cfg.m),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeOutcome {
    pub label: Label,
    /// `P(label = +1)` of the realized measurement on the test state.
    pub p_plus: f64,
    pub failure_prob_bound: f64,
    pub m_used: usize,
    pub copies_used: usize,
}

/// Classifies one test state: the first ancilla bit is 0 → `+1`.
pub fn pe_helstrom_classify(
    ensemble: &LabeledEnsemble,
    test: &DensityMatrix,
    cfg: &PhaseEstimationConfig,
    ledger: &mut CopyLedger,
    rng: &mut Rng,
) -> Result<PeOutcome> {
    if test.dim() != ensemble.dim() {
        return Err(Error::Shape("test state and training states differ in dimension".into()));
    }
    let run = pe_effective_povm(ensemble, cfg, ledger, rng)?;
    let p_plus = run.povm.prob_plus(test);
    let label = if rng.random::<f64>() < p_plus { Label::Plus } else { Label::Minus };
    Ok(PeOutcome {
        label,
        p_plus,
        failure_prob_bound: run.failure_prob_bound,
        m_used: run.m_used,
        copies_used: run.copies_used,
    })
}

/// Largest `m' ≤ cfg.m` whose finite-copy requirement the ledger can still
/// cover in both classes. Exact mode consumes no copies.
pub fn affordable_bits(ensemble: &LabeledEnsemble, cfg: &PhaseEstimationConfig, ledger: &CopyLedger) -> Option<usize> {
    if cfg.mode == PeMode::ExactUnitary {
        return Some(cfg.m);
    }
    let (avail_plus, avail_minus) = ClassPools::new(ensemble, ledger).available(ledger);
    (1..=cfg.m).rev().find(|&mp| {
        let delta = cfg.delta.unwrap_or_else(|| default_delta(mp));
        let per_class = copies_required(mp, delta) / 2;
        per_class <= avail_plus && per_class <= avail_minus
    })
}

/// Classifies test states one after another from a shared ledger. Each
/// classification uses the largest `m' ≤ cfg.m` whose copy requirement is
/// still affordable, or a fair coin when none is.
pub fn classify_sequence(
    ensemble: &LabeledEnsemble,
    tests: &[DensityMatrix],
    cfg: &PhaseEstimationConfig,
    ledger: &mut CopyLedger,
    rng: &mut Rng,
) -> Result<Vec<PeOutcome>> {
    let mut out = Vec::with_capacity(tests.len());
    for test in tests {
        match affordable_bits(ensemble, cfg, ledger) {
            Some(mp) => {
                let sub = PhaseEstimationConfig { m: mp, ..*cfg };
                out.push(pe_helstrom_classify(ensemble, test, &sub, ledger, rng)?);
            }
            None => {
                let label = if rng.random::<bool>() { Label::Plus } else { Label::Minus };
                out.push(PeOutcome { label, p_plus: 0.5, failure_prob_bound: 1.0, m_used: 0, copies_used: 0 });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::empirical_helstrom;
    use crate::embeddings::{random_mixed_state, random_pure_state, LabeledItem};
    use crate::qcore::{trace_distance, trace_norm_mat, CVec, PureState};
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn ket_plus() -> DensityMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(CVec::from_vec(vec![c(h, 0.0), c(h, 0.0)])).unwrap().density()
    }

    fn pair_ensemble(a: &DensityMatrix, b: &DensityMatrix, copies: usize) -> LabeledEnsemble {
        LabeledEnsemble::with_uniform_copies(
            vec![
                LabeledItem::mixed(vec![], Label::Plus, a.clone()),
                LabeledItem::mixed(vec![], Label::Minus, b.clone()),
            ],
            copies,
        )
        .unwrap()
    }

    #[test]
    fn swap_step_closed_form_matches_joint_computation() {
        let mut rng = stream(1, 0);
        for _ in 0..5 {
            let rho = random_mixed_state(3, 2, &mut rng);
            let sigma = random_mixed_state(3, 3, &mut rng);
            for t in [0.0, 0.3, -1.1] {
                let joint = swap_exponentiation_step(&rho, &sigma, t).unwrap();
                let closed = swap_step_operator(sigma.matrix(), rho.matrix(), t);
                assert!((joint.matrix() - closed).iter().all(|z| z.norm() < 1e-12));
            }
        }
    }

    #[test]
    fn swap_step_trivial_cases() {
        let mut rng = stream(2, 0);
        let rho = random_mixed_state(2, 2, &mut rng);
        let sigma = random_mixed_state(2, 2, &mut rng);
        let same = swap_exponentiation_step(&rho, &sigma, 0.0).unwrap();
        assert!(trace_distance(&same, &sigma).unwrap() < 1e-14);
        let a = DensityMatrix::diagonal(&[0.2, 0.8]).unwrap();
        let b = DensityMatrix::diagonal(&[0.6, 0.4]).unwrap();
        for t in [0.1, 0.7, 2.0] {
            // commuting states: σ ↦ cos²t σ + sin²t ρ is still diagonal but
            // moves towards ρ; the unitary part is trivial
            let out = swap_exponentiation_step(&a, &b, t).unwrap();
            let expected = b.matrix().scale(t.cos().powi(2)) + a.matrix().scale(t.sin().powi(2));
            assert!((out.matrix() - expected).iter().all(|z| z.norm() < 1e-14));
            assert!(out.matrix()[(0, 1)].norm() < 1e-15);
        }
    }

    #[test]
    fn swap_step_is_second_order_accurate() {
        let mut rng = stream(3, 0);
        let rho = random_pure_state(2, &mut rng).density();
        let sigma = random_pure_state(2, &mut rng).density();
        let comm = rho.matrix() * sigma.matrix() - sigma.matrix() * rho.matrix();
        let errs: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&t| {
                let out = swap_exponentiation_step(&rho, &sigma, t).unwrap();
                let first = sigma.matrix() - comm.clone() * c(0.0, t);
                trace_norm_mat(&(out.matrix() - first)).unwrap()
            })
            .collect();
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn hamiltonian_simulation_converges() {
        let mut rng = stream(4, 0);
        for _ in 0..3 {
            let a = random_pure_state(2, &mut rng).density();
            let b = random_pure_state(2, &mut rng).density();
            let sigma = random_mixed_state(2, 2, &mut rng);
            let ens = pair_ensemble(&a, &b, 1);
            let h = helstrom_hamiltonian(&ens).unwrap();
            let exact = exact_conjugation(&h, &sigma, 1.0).unwrap();
            let zero = simulate_hamiltonian_evolution(&ens, &sigma, 0.0, 3, CopySource::ClassMeans, &mut rng).unwrap();
            assert!(trace_distance(&zero, &sigma).unwrap() < 1e-14);
            let approx =
                simulate_hamiltonian_evolution(&ens, &sigma, 1.0, 256, CopySource::ClassMeans, &mut rng).unwrap();
            assert!(trace_distance(&approx, &exact).unwrap() <= 0.02);
            let e1 = trace_distance(
                &simulate_hamiltonian_evolution(&ens, &sigma, 1.0, 64, CopySource::ClassMeans, &mut rng).unwrap(),
                &exact,
            )
            .unwrap();
            let e2 = trace_distance(
                &simulate_hamiltonian_evolution(&ens, &sigma, 1.0, 32, CopySource::ClassMeans, &mut rng).unwrap(),
                &exact,
            )
            .unwrap();
            let ratio = e2 / e1;
            assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
        }
    }

    #[test]
    fn ledger_driven_simulation_debits_two_copies_per_step() {
        let mut rng = stream(5, 0);
        let ens = pair_ensemble(&DensityMatrix::basis(2, 0), &ket_plus(), 10);
        let mut ledger = CopyLedger::new(ens.copy_budget().to_vec());
        simulate_hamiltonian_evolution(
            &ens,
            &DensityMatrix::basis(2, 1),
            0.5,
            7,
            CopySource::Ledger(&mut ledger),
            &mut rng,
        )
        .unwrap();
        assert_eq!(ledger.consumed(0), 7);
        assert_eq!(ledger.consumed(1), 7);
        let r = simulate_hamiltonian_evolution(
            &ens,
            &DensityMatrix::basis(2, 1),
            0.5,
            7,
            CopySource::Ledger(&mut ledger),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::CopyExhausted { .. })));
    }

    #[test]
    fn phase_distribution_is_normalized_and_sharp_for_exact_phases() {
        for m in 1..=6 {
            let p = phase_distribution(0.3, m);
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        for (phi, m) in [(0.3, 3usize), (0.77, 5), (0.0625, 4)] {
            let big_m = 1usize << m;
            for (b, pb) in phase_distribution(phi, m).iter().enumerate() {
                let amp: C64 = (0..big_m)
                    .map(|x| C64::from_polar(1.0, 2.0 * PI * x as f64 * (phi - b as f64 / big_m as f64)))
                    .sum::<C64>()
                    / big_m as f64;
                assert_abs_diff_eq!(*pb, amp.norm_sqr(), epsilon = 1e-12);
            }
        }
        let p = phase_distribution(0.25, 4);
        assert_abs_diff_eq!(p[4], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn circuit_matches_analytic_effective_povm() {
        let mut rng = stream(6, 0);
        for _ in 0..4 {
            let a = random_mixed_state(2, 2, &mut rng);
            let b = random_mixed_state(2, 1, &mut rng);
            let ens = pair_ensemble(&a, &b, 1);
            let h = helstrom_hamiltonian(&ens).unwrap();
            let u = expm_i_hermitian(h.matrix(), 2.0 * PI).unwrap();
            let sigma = random_mixed_state(2, 2, &mut rng);
            for m in [1usize, 3, 5] {
                let povm = pe_effective_povm_exact(&h, m, false).unwrap();
                let circuit = pe_circuit_leading_zero(&u, &sigma, m).unwrap();
                assert_abs_diff_eq!(povm.prob_plus(&sigma), circuit, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eigenvector_of_positive_quarter_is_labelled_plus() {
        // H = diag(1/4, −1/4) from ρ₊ = diag(3/4, 1/4), ρ₋ = diag(1/4, 3/4)
        let a = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let b = DensityMatrix::diagonal(&[0.25, 0.75]).unwrap();
        let ens = pair_ensemble(&a, &b, 1);
        let mut ledger = CopyLedger::unbounded(2);
        let mut rng = stream(7, 0);
        let test = DensityMatrix::basis(2, 0);
        let plus = (0..1000)
            .filter(|_| {
                pe_helstrom_classify(&ens, &test, &PhaseEstimationConfig::exact(8), &mut ledger, &mut rng)
                    .unwrap()
                    .label
                    == Label::Plus
            })
            .count();
        assert!(plus >= 990);
    }

    #[test]
    fn maximally_mixed_test_matches_empirical_helstrom() {
        let ens = pair_ensemble(&DensityMatrix::basis(2, 0), &ket_plus(), 1);
        let emp = empirical_helstrom(&ens).unwrap().povm;
        let mut ledger = CopyLedger::unbounded(2);
        let mut rng = stream(8, 0);
        let test = DensityMatrix::maximally_mixed(2);
        let n = 4000;
        let plus = (0..n)
            .filter(|_| {
                pe_helstrom_classify(&ens, &test, &PhaseEstimationConfig::exact(10), &mut ledger, &mut rng)
                    .unwrap()
                    .label
                    == Label::Plus
            })
            .count();
        assert!((plus as f64 / n as f64 - emp.prob_plus(&test)).abs() < 0.02);
    }

    #[test]
    fn degenerate_phases_are_rejected_unless_allowed() {
        let a = DensityMatrix::diagonal(&[0.5, 0.5, 0.0]).unwrap();
        let b = DensityMatrix::diagonal(&[0.5, 0.0, 0.5]).unwrap();
        let ens = pair_ensemble(&a, &b, 1);
        let mut ledger = CopyLedger::unbounded(2);
        let mut rng = stream(9, 0);
        let test = DensityMatrix::maximally_mixed(3);
        let r = pe_helstrom_classify(&ens, &test, &PhaseEstimationConfig::exact(4), &mut ledger, &mut rng);
        assert!(matches!(r, Err(Error::DegeneratePhase { .. })));
        let cfg = PhaseEstimationConfig { allow_degenerate: true, ..PhaseEstimationConfig::exact(4) };
        assert!(pe_helstrom_classify(&ens, &test, &cfg, &mut ledger, &mut rng).is_ok());
    }

    #[test]
    fn finite_copy_run_matches_schedule_and_approaches_exact() {
        let ens = pair_ensemble(&DensityMatrix::basis(2, 0), &ket_plus(), 1_000_000);
        let h = helstrom_hamiltonian(&ens).unwrap();
        for m in 1..=2usize {
            let cfg = PhaseEstimationConfig::finite(m);
            let mut ledger = CopyLedger::new(ens.copy_budget().to_vec());
            let mut rng = stream(10, m as u64);
            let run = pe_effective_povm(&ens, &cfg, &mut ledger, &mut rng).unwrap();
            assert_eq!(run.copies_used, copies_required(m, cfg.delta()));
            assert_eq!(ledger.total_consumed(), run.copies_used);
            let exact = pe_effective_povm_exact(&h, m, false).unwrap();
            let diff = trace_norm_mat(&(run.povm.plus() - exact.plus())).unwrap();
            assert!(diff < 0.1, "m={m} diff {diff}");
        }
    }

    #[test]
    fn failure_bound_values() {
        assert_eq!(failure_prob_bound(1), 1.0);
        assert_eq!(failure_prob_bound(2), 1.0);
        assert_abs_diff_eq!(failure_prob_bound(3), 0.25);
        assert_abs_diff_eq!(failure_prob_bound(8), 1.0 / 252.0);
    }

    #[test]
    fn sequence_falls_back_when_budget_runs_out() {
        let m = 1;
        let need = copies_required(m, default_delta(m)) / 2;
        let ens = pair_ensemble(&DensityMatrix::basis(2, 0), &ket_plus(), need);
        let mut ledger = CopyLedger::new(ens.copy_budget().to_vec());
        let mut rng = stream(11, 0);
        let tests = vec![DensityMatrix::basis(2, 0), DensityMatrix::basis(2, 0)];
        let out = classify_sequence(&ens, &tests, &PhaseEstimationConfig::finite(m), &mut ledger, &mut rng).unwrap();
        assert_eq!(out[0].m_used, 1);
        assert_eq!(out[1].m_used, 0);
        assert_eq!(out[1].p_plus, 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(PhaseEstimationConfig::exact(0).validate(2).is_err());
        assert!(PhaseEstimationConfig::exact(13).validate(2).is_err());
        assert!(PhaseEstimationConfig::exact(12).validate(2).is_ok());
        assert!(matches!(PhaseEstimationConfig::finite(12).validate(2), Err(Error::Capacity { .. })));
    }
}
