//! Closed-form complexity quantities and error bounds evaluated on concrete
//! ensembles. All logarithms are base 2.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classifiers::{representer_coefficients, SINGULARITY_TOL};
use crate::embeddings::{FourierSpec, LabeledEnsemble};
use crate::error::{Error, Result};
use crate::qcore::{
    c, clamped_probabilities, floored_sqrt, hermitian_eigenvalues, hermitian_fn, max_asymmetry, renyi_half_of,
    trace_norm_mat, trace_re, CMat, DensityMatrix, C64,
};
use crate::sampling::Povm;

/// Slack for PSD checks on Gram matrices.
pub const GRAM_PSD_TOL: f64 = 1e-8;

/// `2 log₂ Σ √λ` over a spectrum normalized to unit sum, with the floor.
fn renyi_half_floored(values: &[f64]) -> f64 {
    let probs = clamped_probabilities(values);
    let root = floored_sqrt(&probs);
    2.0 * probs.iter().map(|&p| root(p)).sum::<f64>().log2()
}

/// `(½ − ¼‖ρ̄₊ − ρ̄₋‖₁, −log₂(1 − loss))`.
pub fn min_loss_and_minentropy(rho_plus: &DensityMatrix, rho_minus: &DensityMatrix) -> Result<(f64, f64)> {
    if rho_plus.dim() != rho_minus.dim() {
        return Err(Error::Shape("class averages differ in dimension".into()));
    }
    let loss = (0.5 - 0.25 * trace_norm_mat(&(rho_plus.matrix() - rho_minus.matrix()))?).clamp(0.0, 0.5);
    Ok((loss, -(1.0 - loss).log2()))
}

fn mean_square(ensemble: &LabeledEnsemble) -> Result<CMat> {
    if ensemble.is_empty() {
        return Err(Error::Data("empty ensemble".into()));
    }
    let d = ensemble.dim();
    let mut acc = CMat::zeros(d, d);
    for rho in ensemble.states() {
        acc += rho.matrix() * rho.matrix();
    }
    Ok(acc.unscale(ensemble.len() as f64))
}

/// `B = (Tr √((1/N) Σ ρ(xₙ)²))²`, from the eigenvalues of the mean square.
pub fn rademacher_b(ensemble: &LabeledEnsemble) -> Result<f64> {
    let eig = hermitian_eigenvalues(&mean_square(ensemble)?)?;
    let root = floored_sqrt(&eig);
    let root_sum: f64 = eig.iter().map(|&v| root(v)).sum();
    Ok(root_sum * root_sum)
}

/// `I_{1/2} = 2 log₂ Tr √((1/N) Σ ρ(xₙ)²)`, from the matrix square root.
pub fn renyi_mutual_info(ensemble: &LabeledEnsemble) -> Result<f64> {
    let ms = mean_square(ensemble)?;
    let floor = floored_sqrt(&hermitian_eigenvalues(&ms)?);
    let root = hermitian_fn(&ms, floor)?;
    Ok(2.0 * trace_re(&root).log2())
}

/// `H_{1/2}` of the eigenvalues of `K/N` for an `N×N` Gram matrix.
pub fn kernel_spectrum_entropy(gram: &CMat) -> Result<f64> {
    let n = gram.nrows();
    if n == 0 || gram.ncols() != n {
        return Err(Error::Shape("Gram matrix must be square and non-empty".into()));
    }
    let asym = max_asymmetry(gram);
    if asym > GRAM_PSD_TOL {
        return Err(Error::Data(format!("Gram matrix is not Hermitian (asymmetry {asym:e})")));
    }
    let eig = hermitian_eigenvalues(&gram.unscale(n as f64))?;
    if let Some(&neg) = eig.iter().find(|&&v| v < -GRAM_PSD_TOL) {
        return Err(Error::Data(format!("Gram matrix is not PSD (eigenvalue {neg:e})")));
    }
    Ok(renyi_half_floored(&eig))
}

/// Real Gram matrix as a complex one.
pub fn complex_gram(gram: &DMatrix<f64>) -> CMat {
    gram.map(|v| c(v, 0.0))
}

/// Generalization-gap scaling `√(B/N)`.
pub fn generalization_scale(b: f64, n: usize) -> f64 {
    (b / n as f64).sqrt()
}

fn require_odd(v: usize) -> Result<()> {
    if v.is_multiple_of(2) {
        return Err(Error::Config(format!("majority vote needs an odd number of copies, got {v}")));
    }
    Ok(())
}

/// Growth factor `√(V+1)` of the Rademacher constant under `V`-copy majority
/// voting.
pub fn majority_bound_factor(v: usize) -> Result<f64> {
    require_odd(v)?;
    Ok(((v + 1) as f64).sqrt())
}

/// `c_{(V−1)/2}(p) = Σ_{k ≤ (V−1)/2} C(V,k) pᵏ (1−p)^{V−k}`: probability that
/// the majority of `V` votes is wrong when each vote is right with
/// probability `p`.
pub fn majority_error_exact(p: f64, v: usize) -> Result<f64> {
    require_odd(v)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("single-vote success probability {p} outside [0, 1]")));
    }
    let mut total = 0.0;
    let mut binom = 1.0;
    for k in 0..=(v - 1) / 2 {
        if k > 0 {
            binom *= (v - k + 1) as f64 / k as f64;
        }
        total += binom * p.powi(k as i32) * (1.0 - p).powi((v - k) as i32);
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `(Σ √N_k / (2N), √(2^{H_{1/2}(p)} / (8s)))` for an outcome histogram over
/// `N = 2s` measured copies, with `p_k = N_k/N`.
pub fn fixed_measurement_bounds(counts: &[usize], s: usize) -> Result<(f64, f64)> {
    let n: usize = counts.iter().sum();
    if s == 0 || n != 2 * s {
        return Err(Error::Config(format!("histogram total {n} must equal 2s = {}", 2 * s)));
    }
    let nf = n as f64;
    let empirical = counts.iter().map(|&k| (k as f64).sqrt()).sum::<f64>() / (2.0 * nf);
    let probs: Vec<f64> = counts.iter().map(|&k| k as f64 / nf).collect();
    Ok((empirical, entropy_form(&probs, s)))
}

/// `√(2^{H_{1/2}(p)} / (8s))`.
pub fn entropy_form(probs: &[f64], s: usize) -> f64 {
    (renyi_half_of(probs).exp2() / (8.0 * s as f64)).sqrt()
}

/// Outcome distribution of `povm` on the equal mixture of two states.
pub fn average_outcome_distribution(povm: &Povm, rho_plus: &DensityMatrix, rho_minus: &DensityMatrix) -> Vec<f64> {
    povm.probabilities(rho_plus).iter().zip(povm.probabilities(rho_minus)).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// `F_{ω,ω'} = (1/(N|Ω|)) Σₙ e^{ixₙ(ω−ω')}` and its Rényi-½ entropy, capped by
/// `log₂|Ω|`. Returns `(h_half, cap)`.
pub fn fourier_bound(inputs: &[f64], spec: &FourierSpec) -> Result<(f64, f64)> {
    if inputs.is_empty() {
        return Err(Error::Data("Fourier bound needs at least one input".into()));
    }
    let freqs = spec.frequencies();
    let k = freqs.len();
    let norm = (inputs.len() * k) as f64;
    let f = CMat::from_fn(k, k, |a, b| {
        inputs.iter().map(|&x| C64::from_polar(1.0, x * (freqs[a] - freqs[b]))).sum::<C64>() / norm
    });
    let eig = hermitian_eigenvalues(&f)?;
    Ok((renyi_half_floored(&eig), (k as f64).log2()))
}

/// Whether a bound value is a closed form from the theory or only a
/// scaling expression with unknown constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Closed,
    Scaling,
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBound {
    pub value: Option<f64>,
    pub kind: BoundKind,
    /// Expression evaluated, in plain notation.
    pub expression: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LabeledBound {
    fn closed(value: f64, expression: &str) -> Self {
        Self { value: Some(value), kind: BoundKind::Closed, expression: expression.into(), error: None }
    }

    fn scaling(value: f64, expression: &str) -> Self {
        Self { value: Some(value), kind: BoundKind::Scaling, expression: expression.into(), error: None }
    }

    fn failed(kind: BoundKind, expression: &str, err: &Error) -> Self {
        Self { value: None, kind, expression: expression.into(), error: Some(err.to_string()) }
    }

    /// Constant fitted to measurements, labelled as such.
    pub fn fitted(value: f64, expression: &str) -> Self {
        Self { value: Some(value), kind: BoundKind::Fitted, expression: expression.into(), error: None }
    }
}

/// Inputs to the per-strategy knowledge-gap and test-error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBoundInputs {
    pub d: usize,
    pub n: usize,
    /// Training copies per item.
    pub s: usize,
    /// Test copies.
    pub v: usize,
    /// `Tr[ρ₊ρ₋]`.
    pub f_overlap: f64,
    /// `(Tr ρ₊², Tr ρ₋²)`.
    pub purities: (f64, f64),
    /// Tomography accuracy in trace distance, when known.
    pub eps_tomo: Option<f64>,
    /// Lipschitz constant of the loss.
    pub lambda: f64,
    /// Copies spent estimating the representer overlap; defaults to `s`.
    pub s_prime: Option<usize>,
    /// Rademacher constant of the ensemble, when known.
    pub rademacher_b: Option<f64>,
}

impl GapBoundInputs {
    pub fn new(d: usize, n: usize, s: usize, v: usize, f_overlap: f64, purities: (f64, f64)) -> Self {
        Self { d, n, s, v, f_overlap, purities, eps_tomo: None, lambda: 1.0, s_prime: None, rademacher_b: None }
    }
}

/// Dictionary of bound values keyed by a descriptive tag.
pub fn strategy_gap_bounds(p: &GapBoundInputs) -> BTreeMap<String, LabeledBound> {
    let mut out = BTreeMap::new();
    match p.eps_tomo {
        Some(eps) => out.insert("tomography_knowledge_gap".into(), LabeledBound::closed(2.0 * eps, "2*eps")),
        None => out.insert(
            "tomography_knowledge_gap".into(),
            LabeledBound::scaling(p.d as f64 / (p.s as f64).sqrt(), "d/sqrt(S)"),
        ),
    };
    let f = p.f_overlap;
    let sp = p.s_prime.unwrap_or(p.s) as f64;
    let repr_expr = "2*lambda*sqrt((1+F)/((1-F)*S'))";
    let repr = if f >= 1.0 - SINGULARITY_TOL {
        LabeledBound::failed(
            BoundKind::Closed,
            repr_expr,
            &Error::DegenerateStates(format!("overlap F = {f} leaves the representer bound undefined")),
        )
    } else {
        LabeledBound::closed(2.0 * p.lambda * ((1.0 + f) / ((1.0 - f) * sp)).sqrt(), repr_expr)
    };
    out.insert("representer_excess_risk".into(), repr);
    out.insert("fidelity_decay".into(), LabeledBound::closed(0.5 * f.max(0.0).powf(p.v as f64 / 2.0), "F^(V/2)/2"));
    // ‖A*‖∞ ≤ max(|α₊|, |α₋|) for A* = α₊ρ₊ + α₋ρ₋ with PSD ρ±
    let hoeff_expr = "exp(-V*<A>^2/(2*|A|_inf^2))";
    let hoeff = match representer_coefficients(p.purities.0, p.purities.1, f, SINGULARITY_TOL) {
        Ok((ap, am)) => {
            let mean_plus = ap * p.purities.0 + am * f;
            let mean_minus = ap * f + am * p.purities.1;
            let margin = mean_plus.abs().min(mean_minus.abs());
            let norm = ap.abs().max(am.abs());
            LabeledBound::closed((-(p.v as f64) * margin * margin / (2.0 * norm * norm)).exp(), hoeff_expr)
        }
        Err(e) => LabeledBound::failed(BoundKind::Closed, hoeff_expr, &e),
    };
    out.insert("observable_test_error".into(), hoeff);
    if let Some(b) = p.rademacher_b {
        let nb = p.n as f64 / b;
        out.insert(
            "pe_helstrom_balanced_copies".into(),
            LabeledBound::scaling(nb.log2() * (nb / (b * b)).sqrt(), "log2(N/B)*sqrt(N/B^3)"),
        );
        out.insert("generalization".into(), LabeledBound::scaling(generalization_scale(b, p.n), "sqrt(B/N)"));
        if p.v % 2 == 1 {
            let factor = ((p.v + 1) as f64).sqrt();
            out.insert(
                "generalization_majority".into(),
                LabeledBound::scaling(generalization_scale(factor * b, p.n), "sqrt(sqrt(V+1)*B/N)"),
            );
        }
    }
    out
}

/// All computable quantities for one labelled ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n: usize,
    pub d: usize,
    pub min_loss: f64,
    pub h_min: f64,
    pub renyi_mutual_info: f64,
    pub rademacher_b: f64,
    /// Kernel-spectrum entropy, for pure ensembles.
    #[serde(default)]
    pub kernel_entropy: Option<f64>,
    pub majority_factor: f64,
    /// Entropy-form Rademacher bound of the computational-basis measurement.
    pub fixed_meas_bound: f64,
    #[serde(default)]
    pub fourier_bound: Option<f64>,
    #[serde(default)]
    pub fourier_cap: Option<f64>,
    pub gap_bounds: BTreeMap<String, LabeledBound>,
    pub notes: Vec<String>,
}

impl BoundsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fourier inputs and frequencies recorded in an ensemble's generator
/// metadata, if it was built from a Fourier embedding.
fn fourier_metadata(ensemble: &LabeledEnsemble) -> Option<(Vec<f64>, FourierSpec)> {
    let gen = &ensemble.meta.generator;
    if gen.get("family")?.as_str()? != "fourier" {
        return None;
    }
    let freqs: Vec<f64> = gen.get("frequencies")?.as_array()?.iter().filter_map(|v| v.as_f64()).collect();
    let spec = FourierSpec::new(freqs).ok()?;
    let xs = ensemble.items().iter().filter_map(|it| it.x.first().copied()).collect::<Vec<_>>();
    (xs.len() == ensemble.len()).then_some((xs, spec))
}

/// Evaluates every bound on the ensemble with `s` training and `v` test
/// copies.
pub fn bounds_report(ensemble: &LabeledEnsemble, s: usize, v: usize) -> Result<BoundsReport> {
    let (plus, minus) = ensemble.class_means()?;
    let (min_loss, h_min) = min_loss_and_minentropy(&plus, &minus)?;
    let b = rademacher_b(ensemble)?;
    let info = renyi_mutual_info(ensemble)?;
    let kernel_entropy =
        if ensemble.is_pure() { Some(kernel_spectrum_entropy(&ensemble.state_gram()?)?) } else { None };
    let povm = Povm::computational(ensemble.dim());
    let fixed_meas_bound = entropy_form(&average_outcome_distribution(&povm, &plus, &minus), s.max(1));
    let (fourier_bound, fourier_cap) = match fourier_metadata(ensemble) {
        Some((xs, spec)) => {
            let (h, cap) = self::fourier_bound(&xs, &spec)?;
            (Some(h), Some(cap))
        }
        None => (None, None),
    };
    let mut inputs = GapBoundInputs::new(
        ensemble.dim(),
        ensemble.len(),
        s,
        v,
        crate::qcore::overlap(&plus, &minus),
        (plus.purity(), minus.purity()),
    );
    inputs.rademacher_b = Some(b);
    let majority_factor = majority_bound_factor(if v % 2 == 1 { v } else { v + 1 })?;
    let mut notes = vec!["h_min is computed from the trace-distance identity; no SDP is solved".to_string()];
    if v.is_multiple_of(2) {
        notes.push(format!("majority factor evaluated at V={} since V={v} is even", v + 1));
    }
    Ok(BoundsReport {
        n: ensemble.len(),
        d: ensemble.dim(),
        min_loss,
        h_min,
        renyi_mutual_info: info,
        rademacher_b: b,
        kernel_entropy,
        majority_factor,
        fixed_meas_bound,
        fourier_bound,
        fourier_cap,
        gap_bounds: strategy_gap_bounds(&inputs),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{fourier_embed, random_pure_state, LabeledItem};
    use crate::qcore::{Label, PureState};
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    fn ket_plus() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(crate::qcore::CVec::from_vec(vec![c(h, 0.0), c(h, 0.0)])).unwrap()
    }

    fn pure_ensemble(states: Vec<PureState>) -> LabeledEnsemble {
        let items = states
            .into_iter()
            .enumerate()
            .map(|(i, s)| LabeledItem::pure(vec![], if i % 2 == 0 { Label::Plus } else { Label::Minus }, s))
            .collect();
        LabeledEnsemble::with_uniform_copies(items, 1).unwrap()
    }

    #[test]
    fn min_loss_examples() {
        let rho = DensityMatrix::maximally_mixed(3);
        let (l, h) = min_loss_and_minentropy(&rho, &rho).unwrap();
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-12);
        let (l, h) = min_loss_and_minentropy(&DensityMatrix::basis(2, 0), &DensityMatrix::basis(2, 1)).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h, 0.0, epsilon = 1e-12);
        let (l, h) = min_loss_and_minentropy(&DensityMatrix::basis(2, 0), &ket_plus().density()).unwrap();
        let expected = 0.5 - 0.5 * std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(l, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.14645, epsilon = 1e-5);
        assert_abs_diff_eq!(h, -(1.0 - expected).log2(), epsilon = 1e-12);
    }

    #[test]
    fn rademacher_examples() {
        let same = pure_ensemble(vec![PureState::basis(3, 1); 4]);
        assert_abs_diff_eq!(rademacher_b(&same).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(renyi_mutual_info(&same).unwrap(), 0.0, epsilon = 1e-10);
        let orth = pure_ensemble((0..3).map(|k| PureState::basis(4, k)).collect());
        assert_abs_diff_eq!(rademacher_b(&orth).unwrap(), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(renyi_mutual_info(&orth).unwrap(), 3f64.log2(), epsilon = 1e-10);
        let pair = pure_ensemble(vec![PureState::basis(2, 0), ket_plus()]);
        let r = 0.5f64.sqrt();
        let oracle = (((1.0 + r) / 2.0).sqrt() + ((1.0 - r) / 2.0).sqrt()).powi(2);
        assert_abs_diff_eq!(rademacher_b(&pair).unwrap(), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 1.70711, epsilon = 1e-5);
        let info = renyi_mutual_info(&pair).unwrap();
        assert_abs_diff_eq!(info, oracle.log2(), epsilon = 1e-12);
        let k = kernel_spectrum_entropy(&pair.state_gram().unwrap()).unwrap();
        assert_abs_diff_eq!(info, k, epsilon = 1e-9);
    }

    #[test]
    fn info_equals_kernel_entropy_on_random_pure_ensembles() {
        let mut rng = stream(21, 0);
        for _ in 0..20 {
            let d = rng.random_range(2..=8);
            let n = rng.random_range(1..=12);
            let ens = pure_ensemble((0..n).map(|_| random_pure_state(d, &mut rng)).collect());
            let info = renyi_mutual_info(&ens).unwrap();
            assert_abs_diff_eq!(info, kernel_spectrum_entropy(&ens.state_gram().unwrap()).unwrap(), epsilon = 1e-9);
            assert_abs_diff_eq!(info.exp2(), rademacher_b(&ens).unwrap(), epsilon = 1e-9);
        }
    }

    #[test]
    fn kernel_entropy_examples_and_errors() {
        let n = 5;
        assert_abs_diff_eq!(
            kernel_spectrum_entropy(&CMat::identity(n, n)).unwrap(),
            (n as f64).log2(),
            epsilon = 1e-12
        );
        let ones = CMat::from_element(n, n, c(1.0, 0.0));
        assert_abs_diff_eq!(kernel_spectrum_entropy(&ones).unwrap(), 0.0, epsilon = 1e-10);
        let mut bad = CMat::identity(2, 2);
        bad[(0, 1)] = c(2.0, 0.0);
        bad[(1, 0)] = c(2.0, 0.0);
        assert!(matches!(kernel_spectrum_entropy(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn majority_examples() {
        assert_abs_diff_eq!(majority_bound_factor(1).unwrap(), 2f64.sqrt());
        assert!(majority_bound_factor(2).is_err());
        for p in [0.1, 0.6, 0.9] {
            assert_abs_diff_eq!(majority_error_exact(p, 1).unwrap(), 1.0 - p, epsilon = 1e-15);
        }
        for v in [1, 3, 5, 7, 9] {
            assert_abs_diff_eq!(majority_error_exact(0.5, v).unwrap(), 0.5, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(majority_error_exact(0.75, 3).unwrap(), 0.15625, epsilon = 1e-15);
        assert!(majority_error_exact(1.2, 3).is_err());
    }

    #[test]
    fn fixed_measurement_examples() {
        let (e, _) = fixed_measurement_bounds(&[8], 4).unwrap();
        assert_abs_diff_eq!(e, 8f64.sqrt() / 16.0, epsilon = 1e-15);
        let (e, h) = fixed_measurement_bounds(&[4, 4], 4).unwrap();
        assert_abs_diff_eq!(e, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(h, 0.25, epsilon = 1e-15);
        let (e, _) = fixed_measurement_bounds(&[2, 2, 2, 2, 2, 2], 6).unwrap();
        assert_abs_diff_eq!(e, (6.0f64 / 12.0).sqrt() / 2.0, epsilon = 1e-15);
        assert!(fixed_measurement_bounds(&[3, 4], 4).is_err());
    }

    #[test]
    fn fourier_examples() {
        let spec = FourierSpec::new(vec![0.0, 1.0]).unwrap();
        let (h, cap) = fourier_bound(&[0.0, std::f64::consts::PI], &spec).unwrap();
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cap, 1.0, epsilon = 1e-15);
        let (h, _) = fourier_bound(&[0.7], &spec).unwrap();
        assert_abs_diff_eq!(h, 0.0, epsilon = 1e-10);
        let spec8 = FourierSpec::integer(8).unwrap();
        let mut rng = stream(22, 0);
        let xs: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..6.3)).collect();
        let (h, cap) = fourier_bound(&xs, &spec8).unwrap();
        assert!(h <= cap + 1e-9 && cap == 3.0);
        // the Fourier matrix shares its spectrum with the mean embedded state
        let ens = pure_ensemble(xs.iter().map(|&x| fourier_embed(x, &spec8).unwrap()).collect());
        assert_abs_diff_eq!(h, renyi_mutual_info(&ens).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn gap_bound_examples() {
        let mut p = GapBoundInputs::new(2, 10, 300, 2, 0.5, (1.0, 1.0));
        p.eps_tomo = Some(0.01);
        let b = strategy_gap_bounds(&p);
        assert_abs_diff_eq!(b["tomography_knowledge_gap"].value.unwrap(), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(b["fidelity_decay"].value.unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(b["representer_excess_risk"].value.unwrap(), 0.2, epsilon = 1e-12);
        // pure states: exp(−V(1−F)²/2)
        assert_abs_diff_eq!(b["observable_test_error"].value.unwrap(), (-2.0f64 * 0.25 / 2.0).exp(), epsilon = 1e-12);
        let degenerate = strategy_gap_bounds(&GapBoundInputs::new(2, 10, 300, 2, 1.0, (1.0, 1.0)));
        assert!(degenerate["representer_excess_risk"].value.is_none());
        assert!(degenerate["representer_excess_risk"].error.as_deref().unwrap().contains("degenerate"));
        assert!(degenerate["fidelity_decay"].value.is_some());
    }

    #[test]
    fn report_serializes() {
        let ens = pure_ensemble(vec![PureState::basis(2, 0), ket_plus()]);
        let r = bounds_report(&ens, 10, 3).unwrap();
        assert_abs_diff_eq!(r.renyi_mutual_info.exp2(), r.rademacher_b, epsilon = 1e-9);
        assert!((0.0..=0.5).contains(&r.min_loss));
        let back: BoundsReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
