//! Binary classification rules: Helstrom and empirical Helstrom
//! measurements, Bayes rules for a fixed POVM, the two-state representer
//! observable, a kernel classifier trained by subgradient descent, and the
//! prior-averaged joint discriminator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embeddings::LabeledEnsemble;
use crate::error::{Error, Result};
use crate::qcore::{
    check_dim_cap, matrix_sign, overlap, tensor_with_cap, trace_norm_mat, BinaryPovm, CMat, DensityMatrix, Label,
    Observable, DEFAULT_ZERO_TOL, DIM_CAP,
};
use crate::sampling::Povm;

/// Default threshold on `P₊P₋ − F²` below which two states are treated as
/// indistinguishable.
pub const SINGULARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct HelstromResult {
    pub povm: BinaryPovm,
    /// Minimum average single-shot error with the given class prior.
    pub loss: f64,
}

/// Optimal measurement for `prior_plus · ρ₊` versus `(1 − prior_plus) · ρ₋`.
pub fn weighted_helstrom(
    rho_plus: &DensityMatrix,
    rho_minus: &DensityMatrix,
    prior_plus: f64,
) -> Result<HelstromResult> {
    if rho_plus.dim() != rho_minus.dim() {
        return Err(Error::Shape("Helstrom measurement between states of different dimension".into()));
    }
    let diff = rho_plus.matrix().scale(prior_plus) - rho_minus.matrix().scale(1.0 - prior_plus);
    let norm = trace_norm_mat(&diff)?;
    let sign = matrix_sign(&Observable::from_trusted(diff), DEFAULT_ZERO_TOL)?;
    let loss = (0.5 - 0.5 * norm).clamp(0.0, 0.5);
    Ok(HelstromResult { povm: BinaryPovm::from_sign(&sign), loss })
}

/// `Π± = (I ± sign(ρ₊ − ρ₋))/2` with minimum error `½ − ¼‖ρ₊ − ρ₋‖₁`.
pub fn helstrom(rho_plus: &DensityMatrix, rho_minus: &DensityMatrix) -> Result<HelstromResult> {
    weighted_helstrom(rho_plus, rho_minus, 0.5)
}

/// Helstrom measurement between the class means of a training set, with
/// class weights `N_y/N`. The returned loss is the training loss of the
/// measurement on the ensemble.
pub fn empirical_helstrom(ensemble: &LabeledEnsemble) -> Result<HelstromResult> {
    let (plus, minus) = ensemble.class_means()?;
    let prior = ensemble.count(Label::Plus) as f64 / ensemble.len() as f64;
    weighted_helstrom(&plus, &minus, prior)
}

/// Helstrom measurement on `v` copies of each state.
pub fn multi_copy_helstrom(
    rho_plus: &DensityMatrix,
    rho_minus: &DensityMatrix,
    v: usize,
    cap: usize,
) -> Result<HelstromResult> {
    helstrom(&rho_plus.tensor_power(v, cap)?, &rho_minus.tensor_power(v, cap)?)
}

/// Average 0-1 loss of a binary POVM on labelled states.
pub fn povm_loss<'a>(povm: &BinaryPovm, data: impl IntoIterator<Item = (&'a DensityMatrix, Label, f64)>) -> f64 {
    data.into_iter().map(|(rho, y, w)| w * povm.prob(y.flip(), rho)).sum()
}

/// Outcome-to-label map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryRule {
    pub mapping: Vec<Label>,
}

impl DictionaryRule {
    pub fn classify(&self, outcome: usize) -> Label {
        self.mapping[outcome]
    }

    /// `½ Σ_k (p₊(k)·[f(k) = −1] + p₋(k)·[f(k) = +1])`.
    pub fn average_loss(&self, p_plus: &[f64], p_minus: &[f64]) -> f64 {
        self.weighted_loss(p_plus, p_minus, 0.5)
    }

    pub fn weighted_loss(&self, p_plus: &[f64], p_minus: &[f64], prior_plus: f64) -> f64 {
        self.mapping
            .iter()
            .zip(p_plus.iter().zip(p_minus))
            .map(|(l, (a, b))| match l {
                Label::Plus => (1.0 - prior_plus) * b,
                Label::Minus => prior_plus * a,
            })
            .sum()
    }

    /// Coarse-grains a POVM into the binary POVM that reports `f(k)`.
    pub fn to_binary_povm(&self, povm: &Povm) -> Result<BinaryPovm> {
        if povm.len() != self.mapping.len() {
            return Err(Error::Shape(format!("{} outcomes but rule has {} entries", povm.len(), self.mapping.len())));
        }
        let d = povm.dim();
        let mut plus = CMat::zeros(d, d);
        for (e, l) in povm.effects().iter().zip(&self.mapping) {
            if *l == Label::Plus {
                plus += e;
            }
        }
        Ok(BinaryPovm::from_plus_trusted(plus))
    }
}

/// `f(k) = +1` iff `p₊(k) ≥ p₋(k)`.
pub fn bayes_rule_for_fixed_povm(p_plus: &[f64], p_minus: &[f64]) -> Result<DictionaryRule> {
    weighted_bayes_rule(p_plus, p_minus, 0.5)
}

/// `f(k) = +1` iff `π₊ p₊(k) ≥ π₋ p₋(k)`.
pub fn weighted_bayes_rule(p_plus: &[f64], p_minus: &[f64], prior_plus: f64) -> Result<DictionaryRule> {
    if p_plus.len() != p_minus.len() {
        return Err(Error::Shape("outcome distributions differ in length".into()));
    }
    let mapping =
        p_plus.iter().zip(p_minus).map(|(a, b)| Label::from_sign(prior_plus * a - (1.0 - prior_plus) * b)).collect();
    Ok(DictionaryRule { mapping })
}

/// `A* = [(P₋ + F) ρ₊ − (P₊ + F) ρ₋] / (P₊P₋ − F²)` with purities `P±` and
/// overlap `F = Tr[ρ₊ρ₋]`.
pub fn representer_observable(rho_plus: &DensityMatrix, rho_minus: &DensityMatrix) -> Result<Observable> {
    representer_observable_with_tol(rho_plus, rho_minus, SINGULARITY_TOL)
}

pub fn representer_observable_with_tol(
    rho_plus: &DensityMatrix,
    rho_minus: &DensityMatrix,
    tol: f64,
) -> Result<Observable> {
    if rho_plus.dim() != rho_minus.dim() {
        return Err(Error::Shape("representer between states of different dimension".into()));
    }
    let (a, b) = representer_coefficients(rho_plus.purity(), rho_minus.purity(), overlap(rho_plus, rho_minus), tol)?;
    Ok(Observable::from_trusted(rho_plus.matrix().scale(a) + rho_minus.matrix().scale(b)))
}

/// Coefficients `(α₊, α₋)` of `A* = α₊ρ₊ + α₋ρ₋` from purities and overlap.
pub fn representer_coefficients(p_plus: f64, p_minus: f64, f: f64, tol: f64) -> Result<(f64, f64)> {
    let den = p_plus * p_minus - f * f;
    if den <= tol {
        return Err(Error::DegenerateStates(format!(
            "P+P- - F^2 = {den:e} is below the singularity tolerance {tol:e}"
        )));
    }
    Ok(((p_minus + f) / den, -(p_plus + f) / den))
}

// --- kernel classifier -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelLoss {
    Hinge,
    /// `log(1 + e^{−z})`.
    Logistic,
}

impl KernelLoss {
    pub fn value(self, z: f64) -> f64 {
        match self {
            KernelLoss::Hinge => (1.0 - z).max(0.0),
            KernelLoss::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
        }
    }

    /// A subgradient `Λ'(z)`.
    pub fn slope(self, z: f64) -> f64 {
        match self {
            KernelLoss::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            KernelLoss::Logistic => -1.0 / (1.0 + z.exp()),
        }
    }
}

/// Trained kernel classifier `sign(Σ_n α_n k(x_n, x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub alphas: Vec<f64>,
    pub mu: f64,
    pub loss: KernelLoss,
    pub seed: Option<u64>,
    /// SHA-256 of the repaired Gram matrix (row-major little-endian f64).
    pub gram_hash: String,
    /// Best objective seen at each checkpoint.
    #[serde(skip)]
    pub checkpoints: Vec<f64>,
}

impl KernelModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn decision(&self, kernel_row: &[f64]) -> Result<f64> {
        if kernel_row.len() != self.alphas.len() {
            return Err(Error::Shape(format!(
                "kernel row of length {} for a model over {} items",
                kernel_row.len(),
                self.alphas.len()
            )));
        }
        Ok(self.alphas.iter().zip(kernel_row).map(|(a, k)| a * k).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelTrainConfig {
    pub mu: f64,
    pub loss: KernelLoss,
    pub iters: usize,
    /// Step size at iteration 1; iteration `t` uses `step/√t`.
    pub step: f64,
    /// Objective is recorded every `checkpoint_every` iterations.
    pub checkpoint_every: usize,
}

impl Default for KernelTrainConfig {
    fn default() -> Self {
        Self { mu: 1e-2, loss: KernelLoss::Hinge, iters: 5000, step: 1.0, checkpoint_every: 100 }
    }
}

/// Symmetric PSD check with eigenvalue clipping of negativity up to `tol`.
/// Larger asymmetry or negativity is a data error.
pub fn repair_gram(gram: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    if gram.ncols() != n || n == 0 {
        return Err(Error::Shape(format!("Gram matrix must be square, got {}x{}", gram.nrows(), gram.ncols())));
    }
    let asym = (gram - gram.transpose()).amax();
    if asym > tol {
        return Err(Error::Data(format!("Gram matrix asymmetry {asym:e} exceeds {tol:e}")));
    }
    let sym = (gram + gram.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Gram eigendecomposition did not converge".into()))?;
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::Data(format!("Gram matrix has eigenvalue {min:e} below -{tol:e}")));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose())
}

/// Clips all negative eigenvalues of a noisy symmetric estimate.
pub fn project_psd_gram(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (gram + gram.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Gram eigendecomposition did not converge".into()))?;
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose())
}

pub fn gram_hash(gram: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            h.update(gram[(i, j)].to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// `(1/N) Σ_n Λ(y_n (Kα)_n) + μ αᵀKα`.
pub fn kernel_objective(gram: &DMatrix<f64>, labels: &[Label], alphas: &[f64], mu: f64, loss: KernelLoss) -> f64 {
    let a = nalgebra::DVector::from_column_slice(alphas);
    let f = gram * &a;
    let n = labels.len() as f64;
    let data: f64 = labels.iter().zip(f.iter()).map(|(y, fx)| loss.value(y.sign() * fx)).sum::<f64>() / n;
    data + mu * a.dot(&f)
}

/// Minimizes the regularized kernel loss by subgradient descent in the
/// function space of the kernel (the update direction is the gradient with
/// respect to `Kα` pulled back through `K`), with step `step/√t`, and
/// returns the best iterate.
pub fn kernel_train(gram: &DMatrix<f64>, labels: &[Label], cfg: &KernelTrainConfig) -> Result<KernelModel> {
    if cfg.mu <= 0.0 {
        return Err(Error::Config(format!("regularizer mu must be positive, got {}", cfg.mu)));
    }
    if labels.len() != gram.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for a {}x{} Gram matrix",
            labels.len(),
            gram.nrows(),
            gram.ncols()
        )));
    }
    let k = repair_gram(gram, 1e-8)?;
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let mut alpha = vec![0.0; n];
    let mut best = alpha.clone();
    let mut best_obj = kernel_objective(&k, labels, &alpha, cfg.mu, cfg.loss);
    let mut checkpoints = vec![best_obj];
    let every = cfg.checkpoint_every.max(1);
    for t in 1..=cfg.iters {
        let a = nalgebra::DVector::from_column_slice(&alpha);
        let f = &k * &a;
        let eta = cfg.step / (t as f64).sqrt();
        for i in 0..n {
            let g = cfg.loss.slope(y[i] * f[i]) * y[i] / n as f64 + 2.0 * cfg.mu * alpha[i];
            alpha[i] -= eta * g;
        }
        let obj = kernel_objective(&k, labels, &alpha, cfg.mu, cfg.loss);
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&alpha);
        }
        if t % every == 0 {
            checkpoints.push(best_obj);
        }
    }
    Ok(KernelModel { alphas: best, mu: cfg.mu, loss: cfg.loss, seed: None, gram_hash: gram_hash(&k), checkpoints })
}

/// `sign(Σ α_n k_n)` with zero mapped to `+1`.
pub fn kernel_predict(model: &KernelModel, kernel_row: &[f64]) -> Result<Label> {
    Ok(Label::from_sign(model.decision(kernel_row)?))
}

// --- prior-averaged joint discrimination ------------------------------------

#[derive(Debug, Clone)]
pub struct JointDiscriminator {
    pub povm: BinaryPovm,
    pub avg_error: f64,
    pub dim: usize,
}

/// Helstrom measurement between `σ± = E[ρ₊^{⊗s} ⊗ ρ₋^{⊗s} ⊗ ρ±^{⊗v}]`, the
/// prior average being the empirical mean over `prior_samples`.
pub fn bayesian_joint_discriminator(
    prior_samples: &[(DensityMatrix, DensityMatrix)],
    s: usize,
    v: usize,
) -> Result<JointDiscriminator> {
    bayesian_joint_discriminator_with_cap(prior_samples, s, v, DIM_CAP)
}

pub fn bayesian_joint_discriminator_with_cap(
    prior_samples: &[(DensityMatrix, DensityMatrix)],
    s: usize,
    v: usize,
    cap: usize,
) -> Result<JointDiscriminator> {
    let (p0, _) = prior_samples.first().ok_or_else(|| Error::Data("empty prior sample".into()))?;
    if v == 0 {
        return Err(Error::Config("at least one test copy is required".into()));
    }
    let d = p0.dim();
    let joint = (2 * s + v) as u32;
    let dim = d.checked_pow(joint).unwrap_or(usize::MAX);
    check_dim_cap(dim, cap)?;
    let mut sig_plus = CMat::zeros(dim, dim);
    let mut sig_minus = CMat::zeros(dim, dim);
    for (rp, rm) in prior_samples {
        let train = if s == 0 {
            None
        } else {
            Some(tensor_with_cap(&rp.tensor_power(s, cap)?, &rm.tensor_power(s, cap)?, cap)?)
        };
        let tp = rp.tensor_power(v, cap)?;
        let tm = rm.tensor_power(v, cap)?;
        match &train {
            Some(t) => {
                sig_plus += tensor_with_cap(t, &tp, cap)?.matrix();
                sig_minus += tensor_with_cap(t, &tm, cap)?.matrix();
            }
            None => {
                sig_plus += tp.matrix();
                sig_minus += tm.matrix();
            }
        }
    }
    let k = prior_samples.len() as f64;
    let sp = DensityMatrix::from_trusted(sig_plus.unscale(k));
    let sm = DensityMatrix::from_trusted(sig_minus.unscale(k));
    let h = helstrom(&sp, &sm)?;
    Ok(JointDiscriminator { povm: h.povm, avg_error: h.loss, dim })
}
