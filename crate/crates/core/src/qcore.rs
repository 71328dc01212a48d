//! Dense complex Hermitian linear algebra and the basic quantum objects
//! (density matrices, pure states, observables, binary POVMs).
//!
//! All values are immutable after construction. Nominally Hermitian inputs
//! are symmetrized as `(M + M†)/2` before any spectral computation and are
//! rejected when the asymmetry exceeds [`ASYMMETRY_REJECT`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Entrywise Hermiticity tolerance of a stored density matrix or observable.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Inputs more asymmetric than this are rejected instead of symmetrized.
pub const ASYMMETRY_REJECT: f64 = 1e-8;
/// Smallest admissible eigenvalue is `-PSD_TOL`.
pub const PSD_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;
pub const POVM_SUM_TOL: f64 = 1e-9;
pub const PURE_NORM_TOL: f64 = 1e-12;
/// Default cap on any Hilbert-space dimension built by this crate.
pub const DIM_CAP: usize = 4096;
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// Largest entrywise modulus of `M - M†`.
pub fn max_asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

fn check_square(m: &CMat, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Shape(format!("{what} must be a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

/// Symmetrizes after checking the asymmetry threshold.
pub fn symmetrized(m: &CMat) -> Result<CMat> {
    check_square(m, "Hermitian input")?;
    let asym = max_asymmetry(m);
    if asym > ASYMMETRY_REJECT {
        return Err(Error::InvalidState(format!(
            "matrix is not Hermitian: asymmetry {asym:e} exceeds {ASYMMETRY_REJECT:e}"
        )));
    }
    Ok(hermitian_part(m))
}

/// Spectral decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: CMat,
}

impl Spectrum {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for i in 0..n {
                scaled[(i, j)] *= fv;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        self.reconstruct_with(|v| v)
    }
}

/// Eigendecomposition of an already-Hermitian matrix (no asymmetry check).
pub fn hermitian_spectrum(m: &CMat) -> Result<Spectrum> {
    let n = check_square(m, "eigendecomposition input")?;
    if n == 1 {
        return Ok(Spectrum { values: vec![m[(0, 0)].re], vectors: identity(1) });
    }
    let h = hermitian_part(m);
    let eig = SymmetricEigen::try_new(h, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical(format!("Hermitian eigensolver did not converge (dim {n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(Spectrum { values, vectors })
}

pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    Ok(hermitian_spectrum(m)?.values)
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    Ok(hermitian_spectrum(m)?.reconstruct_with(f))
}

/// `exp(i t H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let spec = hermitian_spectrum(h)?;
    let n = spec.values.len();
    let mut scaled = spec.vectors.clone();
    for (j, &v) in spec.values.iter().enumerate() {
        let phase = C64::from_polar(1.0, v * t);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    Ok(&scaled * spec.vectors.adjoint())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn check_dim_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::Capacity { requested: dim, cap });
    }
    Ok(())
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// `Re Tr[A B]` without forming the product.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

fn subsystem_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

/// Partial trace of a matrix over all subsystems not listed in `keep`.
/// Subsystem 0 is the most significant tensor factor.
pub fn partial_trace_mat(m: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || total != m.nrows() || m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "subsystem dims {dims:?} do not match matrix of size {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if keep.is_empty() {
        return Err(Error::Shape("keep set must be non-empty".into()));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Shape(format!("invalid keep set {keep:?} for {} subsystems", dims.len())));
    }
    let strides = subsystem_strides(dims);
    let kept_dim: usize = keep_sorted.iter().map(|&k| dims[k]).product();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep_sorted.contains(k)).collect();
    let traced_dim: usize = traced.iter().map(|&k| dims[k]).product();

    // groups[t][a] = full index with traced multi-index t and kept multi-index a
    let mut groups = vec![vec![0usize; kept_dim]; traced_dim];
    for full in 0..total {
        let mut kept_idx = 0;
        let mut traced_idx = 0;
        for (k, &d) in dims.iter().enumerate() {
            let digit = (full / strides[k]) % d;
            if keep_sorted.contains(&k) {
                kept_idx = kept_idx * d + digit;
            } else {
                traced_idx = traced_idx * d + digit;
            }
        }
        groups[traced_idx][kept_idx] = full;
    }
    let mut out = CMat::zeros(kept_dim, kept_dim);
    for g in &groups {
        for a in 0..kept_dim {
            for b in 0..kept_dim {
                out[(a, b)] += m[(g[a], g[b])];
            }
        }
    }
    Ok(out)
}

/// Reorders tensor factors: output factor `k` is input factor `perm[k]`.
pub fn permute_subsystems(m: &CMat, dims: &[usize], perm: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if total != m.nrows() || perm.len() != dims.len() {
        return Err(Error::Shape(format!("permutation {perm:?} incompatible with dims {dims:?}")));
    }
    let mut seen = vec![false; dims.len()];
    for &p in perm {
        if p >= dims.len() || seen[p] {
            return Err(Error::Shape(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    let in_strides = subsystem_strides(dims);
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let out_strides = subsystem_strides(&out_dims);
    let map: Vec<usize> = (0..total)
        .map(|full| {
            let mut out_idx = 0;
            for (k, &p) in perm.iter().enumerate() {
                let digit = (full / in_strides[p]) % dims[p];
                out_idx += digit * out_strides[k];
            }
            out_idx
        })
        .collect();
    let mut out = CMat::zeros(total, total);
    for i in 0..total {
        for j in 0..total {
            out[(map[i], map[j])] = m[(i, j)];
        }
    }
    Ok(out)
}

/// SWAP operator on `C^d ⊗ C^d`.
pub fn swap_operator(d: usize) -> CMat {
    let mut s = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(j * d + i, i * d + j)] = c(1.0, 0.0);
        }
    }
    s
}

/// A valid density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    /// Validates and stores `m`. Eigenvalues in `[-PSD_TOL, 0)` are clamped
    /// and the trace renormalized; anything more negative is rejected.
    pub fn new(m: CMat) -> Result<Self> {
        let h = symmetrized(&m)?;
        let tr = trace_re(&h);
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let spec = hermitian_spectrum(&h)?;
        let min = spec.values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        if min < 0.0 {
            let repaired = spec.reconstruct_with(|v| v.max(0.0));
            let tr = trace_re(&repaired);
            return Ok(Self::from_trusted(repaired.unscale(tr)));
        }
        Ok(Self::from_trusted(h))
    }

    /// Projects a Hermitian estimate onto the state space by clipping all
    /// negative eigenvalues and renormalizing the trace.
    pub fn project_psd(m: &CMat) -> Result<Self> {
        let h = symmetrized(m)?;
        let clipped = hermitian_fn(&h, |v| v.max(0.0))?;
        let tr = trace_re(&clipped);
        if tr <= 0.0 {
            let d = m.nrows();
            return Ok(Self::maximally_mixed(d));
        }
        Ok(Self::from_trusted(clipped.unscale(tr)))
    }

    /// Skips validation. Callers guarantee the invariants (products and
    /// convex combinations of valid states).
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        Self { mat: hermitian_part(&mat) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: identity(dim).unscale(dim as f64) }
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut m = CMat::zeros(dim, dim);
        m[(k, k)] = c(1.0, 0.0);
        Self { mat: m }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = psi.amplitudes();
        Self { mat: v * v.adjoint() }
    }

    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        let m = CMat::from_fn(probs.len(), probs.len(), |i, j| if i == j { c(probs[i], 0.0) } else { c(0.0, 0.0) });
        Self::new(m)
    }

    /// Weighted average of states with non-negative weights summing to one.
    pub fn mixture(states: &[&DensityMatrix], weights: &[f64]) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(Error::Shape("mixture needs one weight per state".into()));
        }
        let dim = states[0].dim();
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("mixture weights must be a distribution (sum {total})")));
        }
        let mut acc = CMat::zeros(dim, dim);
        for (s, &w) in states.iter().zip(weights) {
            if s.dim() != dim {
                return Err(Error::Shape("mixture of states with different dimensions".into()));
            }
            acc += s.matrix().scale(w);
        }
        Ok(Self::from_trusted(acc.unscale(total)))
    }

    pub fn uniform_mixture<'a>(states: impl IntoIterator<Item = &'a DensityMatrix>) -> Result<Self> {
        let mut acc: Option<CMat> = None;
        let mut count = 0usize;
        for s in states {
            match &mut acc {
                None => acc = Some(s.matrix().clone()),
                Some(a) => {
                    if a.nrows() != s.dim() {
                        return Err(Error::Shape("mixture of states with different dimensions".into()));
                    }
                    *a += s.matrix();
                }
            }
            count += 1;
        }
        let acc = acc.ok_or_else(|| Error::Data("empty mixture".into()))?;
        Ok(Self::from_trusted(acc.unscale(count as f64)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn expectation(&self, op: &CMat) -> f64 {
        trace_product_re(op, &self.mat)
    }

    pub fn purity(&self) -> f64 {
        trace_product_re(&self.mat, &self.mat)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        hermitian_spectrum(&self.mat)
    }

    /// `n`-fold tensor power.
    pub fn tensor_power(&self, n: usize, cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("tensor power must be at least 1".into()));
        }
        let dim = self.dim().checked_pow(n as u32).unwrap_or(usize::MAX);
        check_dim_cap(dim, cap)?;
        let mut acc = self.mat.clone();
        for _ in 1..n {
            acc = kron(&acc, &self.mat);
        }
        Ok(Self { mat: acc })
    }

    /// Conjugation `U ρ U†`.
    pub fn evolve(&self, u: &CMat) -> Self {
        Self::from_trusted(u * &self.mat * u.adjoint())
    }
}

/// Kronecker product of two states.
pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    tensor_with_cap(a, b, DIM_CAP)
}

pub fn tensor_with_cap(a: &DensityMatrix, b: &DensityMatrix, cap: usize) -> Result<DensityMatrix> {
    let dim = a.dim().saturating_mul(b.dim());
    check_dim_cap(dim, cap)?;
    Ok(DensityMatrix { mat: kron(a.matrix(), b.matrix()) })
}

/// Reduced state on the subsystems in `keep`.
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    let reduced = partial_trace_mat(rho.matrix(), dims, keep)?;
    Ok(DensityMatrix::from_trusted(reduced))
}

/// Unit-norm state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: CVec,
}

impl PureState {
    pub fn new(amps: CVec) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::Shape("pure state needs at least one amplitude".into()));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > PURE_NORM_TOL {
            return Err(Error::InvalidState(format!("state vector norm {norm} is not 1")));
        }
        Ok(Self { amps })
    }

    /// Normalizes a non-zero vector.
    pub fn normalized(amps: CVec) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Ok(Self { amps: amps.unscale(norm) })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = CVec::zeros(dim);
        v[k] = c(1.0, 0.0);
        Self { amps: v }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState { amps: self.amps.kronecker(&other.amps) }
    }

    pub fn apply(&self, u: &CMat) -> Result<PureState> {
        Self::normalized(u * &self.amps)
    }
}

/// Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    mat: CMat,
}

impl Observable {
    pub fn new(m: CMat) -> Result<Self> {
        Ok(Self { mat: symmetrized(&m)? })
    }

    pub(crate) fn from_trusted(m: CMat) -> Self {
        Self { mat: hermitian_part(&m) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        trace_product_re(&self.mat, rho.matrix())
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        hermitian_spectrum(&self.mat)
    }

    /// Largest absolute eigenvalue.
    pub fn operator_norm(&self) -> Result<f64> {
        let vals = self.spectrum()?.values;
        Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// `sqrt(Tr[A²])`.
    pub fn frobenius_norm(&self) -> f64 {
        trace_product_re(&self.mat, &self.mat).max(0.0).sqrt()
    }

    pub fn trace_norm(&self) -> Result<f64> {
        trace_norm(self)
    }
}

/// Two-outcome POVM `{Π+, Π−}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPovm {
    plus: CMat,
    minus: CMat,
}

impl BinaryPovm {
    pub fn new(plus: CMat, minus: CMat) -> Result<Self> {
        let plus = symmetrized(&plus)?;
        let minus = symmetrized(&minus)?;
        let d = plus.nrows();
        if minus.nrows() != d {
            return Err(Error::Shape("POVM effects differ in dimension".into()));
        }
        let defect = (&plus + &minus - identity(d)).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if defect > POVM_SUM_TOL {
            return Err(Error::InvalidState(format!("effects do not sum to identity (defect {defect:e})")));
        }
        for (name, e) in [("plus", &plus), ("minus", &minus)] {
            let min = hermitian_spectrum(e)?.values.last().copied().unwrap_or(0.0);
            if min < -PSD_TOL {
                return Err(Error::InvalidState(format!("{name} effect has eigenvalue {min:e}")));
            }
        }
        Ok(Self { plus, minus })
    }

    /// `Π+ = plus`, `Π− = I − plus` for an effect known to lie in `[0, I]`.
    pub(crate) fn from_plus_trusted(plus: CMat) -> Self {
        let plus = hermitian_part(&plus);
        let minus = identity(plus.nrows()) - &plus;
        Self { plus, minus }
    }

    /// `Π± = (I ± S)/2` for an operator `S` with spectrum in `[-1, 1]`.
    pub fn from_sign(sign: &Observable) -> Self {
        let d = sign.dim();
        let id = identity(d);
        Self { plus: (&id + sign.matrix()).scale(0.5), minus: (&id - sign.matrix()).scale(0.5) }
    }

    /// Computational-basis projectors with outcomes assigned by `labels`.
    pub fn from_basis_labels(labels: &[Label]) -> Self {
        let d = labels.len();
        let plus =
            CMat::from_fn(d, d, |i, j| if i == j && labels[i] == Label::Plus { c(1.0, 0.0) } else { c(0.0, 0.0) });
        Self::from_plus_trusted(plus)
    }

    pub fn trivial(dim: usize) -> Self {
        let half = identity(dim).scale(0.5);
        Self { plus: half.clone(), minus: half }
    }

    pub fn dim(&self) -> usize {
        self.plus.nrows()
    }

    pub fn plus(&self) -> &CMat {
        &self.plus
    }

    pub fn minus(&self) -> &CMat {
        &self.minus
    }

    pub fn effect(&self, label: Label) -> &CMat {
        match label {
            Label::Plus => &self.plus,
            Label::Minus => &self.minus,
        }
    }

    /// `Tr[Π+ ρ]`, clamped to `[0, 1]`.
    pub fn prob_plus(&self, rho: &DensityMatrix) -> f64 {
        trace_product_re(&self.plus, rho.matrix()).clamp(0.0, 1.0)
    }

    /// Probability of reporting `label` on `rho`.
    pub fn prob(&self, label: Label, rho: &DensityMatrix) -> f64 {
        let p = self.prob_plus(rho);
        match label {
            Label::Plus => p,
            Label::Minus => 1.0 - p,
        }
    }

    pub fn effects(&self) -> [&CMat; 2] {
        [&self.plus, &self.minus]
    }
}

/// Binary class label. All sign decisions map zero to `Plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Plus,
    Minus,
}

impl Label {
    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            Label::Plus
        } else {
            Label::Minus
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Plus => 1.0,
            Label::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Plus => Label::Minus,
            Label::Minus => Label::Plus,
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Plus => 1,
            Label::Minus => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Plus),
            -1 => Ok(Label::Minus),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// Eigendecomposition of an observable with descending eigenvalues.
pub fn eig_hermitian(m: &Observable) -> Result<Spectrum> {
    hermitian_spectrum(m.matrix())
}

/// Spectral sign with `+1`, `-1` or `0` (inside `zero_tol`).
pub fn matrix_sign(h: &Observable, zero_tol: f64) -> Result<Observable> {
    let spec = eig_hermitian(h)?;
    Ok(Observable::from_trusted(spec.reconstruct_with(|v| {
        if v > zero_tol {
            1.0
        } else if v < -zero_tol {
            -1.0
        } else {
            0.0
        }
    })))
}

pub fn trace_norm(m: &Observable) -> Result<f64> {
    Ok(eig_hermitian(m)?.values.iter().map(|v| v.abs()).sum())
}

pub fn trace_norm_mat(m: &CMat) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.iter().map(|v| v.abs()).sum())
}

/// `½‖a − b‖₁`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape("trace distance between states of different dimension".into()));
    }
    Ok((0.5 * trace_norm_mat(&(a.matrix() - b.matrix()))?).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entropies {
    /// `2 log₂ Tr √ρ`.
    pub renyi_half: f64,
    pub von_neumann: f64,
    pub purity: f64,
}

/// Eigenvalues with negatives clamped and renormalized to a distribution.
pub fn clamped_probabilities(values: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return clipped;
    }
    clipped.iter().map(|v| v / total).collect()
}

/// Classical Rényi-½ entropy `2 log₂ Σ √p`.
pub fn renyi_half_of(probs: &[f64]) -> f64 {
    let s: f64 = probs.iter().map(|p| p.max(0.0).sqrt()).sum();
    2.0 * s.log2()
}

pub fn entropies(rho: &DensityMatrix) -> Result<Entropies> {
    let probs = clamped_probabilities(&rho.spectrum()?.values);
    let von_neumann = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>();
    Ok(Entropies { renyi_half: renyi_half_of(&probs), von_neumann, purity: probs.iter().map(|p| p * p).sum() })
}

/// Eigenvalues below this fraction of the largest are treated as zero before
/// taking square roots, so that round-off in a null space does not enter
/// `Tr √·` at the `√ε` level.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

/// `√v` for eigenvalues above the relative floor of `values`, else 0.
pub fn floored_sqrt(values: &[f64]) -> impl Fn(f64) -> f64 {
    let floor = SPECTRAL_FLOOR * values.iter().fold(0.0f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
    move |v| if v > floor { v.sqrt() } else { 0.0 }
}

fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let spec = hermitian_spectrum(m)?;
    Ok(spec.reconstruct_with(floored_sqrt(&spec.values)))
}

/// `F(a, b) = ‖√a √b‖₁² = (Tr √(√a b √a))²`.
pub fn uhlmann_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape("fidelity between states of different dimension".into()));
    }
    let sa = psd_sqrt(a.matrix())?;
    let inner = &sa * b.matrix() * &sa;
    let eig = hermitian_eigenvalues(&inner)?;
    let root = floored_sqrt(&eig);
    let root_sum: f64 = eig.iter().map(|&v| root(v)).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// `Tr[a b]`.
pub fn overlap(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    trace_product_re(a.matrix(), b.matrix())
}

// --- operator bases -------------------------------------------------------

pub fn pauli_matrices() -> [CMat; 4] {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        CMat::from_row_slice(2, 2, &[l, o, o, l]),
        CMat::from_row_slice(2, 2, &[o, l, l, o]),
        CMat::from_row_slice(2, 2, &[o, -i, i, o]),
        CMat::from_row_slice(2, 2, &[l, o, o, -l]),
    ]
}

/// A traceless Hermitian basis element normalized as `Tr[P²] = norm_sq`.
#[derive(Debug, Clone)]
pub struct BasisOperator {
    pub label: String,
    pub matrix: CMat,
    pub norm_sq: f64,
}

/// Non-identity Pauli strings for dimension `2^n`, otherwise the
/// generalized Gell-Mann matrices. Either way `d² − 1` traceless Hermitian
/// operators orthogonal in the Hilbert–Schmidt inner product.
pub fn traceless_operator_basis(dim: usize) -> Vec<BasisOperator> {
    if dim.is_power_of_two() && dim >= 2 {
        pauli_strings(dim.trailing_zeros() as usize)
            .into_iter()
            .filter(|(label, _)| label.chars().any(|ch| ch != 'I'))
            .map(|(label, matrix)| BasisOperator { label, matrix, norm_sq: dim as f64 })
            .collect()
    } else {
        gell_mann(dim)
    }
}

/// All `4^n` Pauli strings, labelled e.g. `"XZ"`.
pub fn pauli_strings(n_qubits: usize) -> Vec<(String, CMat)> {
    let paulis = pauli_matrices();
    let names = ['I', 'X', 'Y', 'Z'];
    let mut out = vec![(String::new(), CMat::identity(1, 1))];
    for _ in 0..n_qubits {
        let mut next = Vec::with_capacity(out.len() * 4);
        for (label, m) in &out {
            for (k, p) in paulis.iter().enumerate() {
                let mut l = label.clone();
                l.push(names[k]);
                next.push((l, kron(m, p)));
            }
        }
        out = next;
    }
    out
}

pub fn gell_mann(dim: usize) -> Vec<BasisOperator> {
    let mut out = Vec::with_capacity(dim * dim - 1);
    for j in 0..dim {
        for k in (j + 1)..dim {
            let mut sym = CMat::zeros(dim, dim);
            sym[(j, k)] = c(1.0, 0.0);
            sym[(k, j)] = c(1.0, 0.0);
            out.push(BasisOperator { label: format!("S{j}{k}"), matrix: sym, norm_sq: 2.0 });
            let mut anti = CMat::zeros(dim, dim);
            anti[(j, k)] = c(0.0, -1.0);
            anti[(k, j)] = c(0.0, 1.0);
            out.push(BasisOperator { label: format!("A{j}{k}"), matrix: anti, norm_sq: 2.0 });
        }
    }
    for l in 1..dim {
        let scale = (2.0 / (l as f64 * (l as f64 + 1.0))).sqrt();
        let mut diag = CMat::zeros(dim, dim);
        for m in 0..l {
            diag[(m, m)] = c(scale, 0.0);
        }
        diag[(l, l)] = c(-(l as f64) * scale, 0.0);
        out.push(BasisOperator { label: format!("D{l}"), matrix: diag, norm_sq: 2.0 });
    }
    out
}

// --- serialization ---------------------------------------------------------

/// JSON form `{dim, re, im}` with row-major entry arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&DensityMatrix> for DensityMatrixJson {
    fn from(rho: &DensityMatrix) -> Self {
        let d = rho.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(rho.matrix()[(i, j)].re);
                im.push(rho.matrix()[(i, j)].im);
            }
        }
        Self { dim: d, re, im }
    }
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(j: DensityMatrixJson) -> Result<Self> {
        let n = j.dim * j.dim;
        if j.dim == 0 || j.re.len() != n || j.im.len() != n {
            return Err(Error::Shape(format!(
                "density matrix JSON with dim {} needs {} entries, got re={} im={}",
                j.dim,
                n,
                j.re.len(),
                j.im.len()
            )));
        }
        let m = CMat::from_fn(j.dim, j.dim, |r, col| c(j.re[r * j.dim + col], j.im[r * j.dim + col]));
        DensityMatrix::new(m)
    }
}

impl DensityMatrix {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DensityMatrixJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: DensityMatrixJson = serde_json::from_str(s)?;
        j.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ket_plus() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(CVec::from_vec(vec![c(h, 0.0), c(h, 0.0)])).unwrap()
    }

    fn max_entry_diff(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    #[test]
    fn tensor_of_maximally_mixed() {
        let half = DensityMatrix::maximally_mixed(2);
        let t = tensor(&half, &half).unwrap();
        assert_eq!(t.dim(), 4);
        assert!(max_entry_diff(t.matrix(), DensityMatrix::maximally_mixed(4).matrix()) < 1e-15);
    }

    #[test]
    fn tensor_of_basis_states() {
        let t = tensor(&DensityMatrix::basis(2, 0), &DensityMatrix::basis(2, 1)).unwrap();
        assert!(max_entry_diff(t.matrix(), DensityMatrix::basis(4, 1).matrix()) < 1e-15);
    }

    #[test]
    fn tensor_respects_cap() {
        let a = DensityMatrix::maximally_mixed(64);
        let b = DensityMatrix::maximally_mixed(128);
        assert!(matches!(tensor(&a, &b), Err(Error::Capacity { requested: 8192, cap: 4096 })));
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::new(CVec::from_vec(vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)])).unwrap();
        let red = partial_trace(&bell.density(), &[2, 2], &[0]).unwrap();
        assert!(max_entry_diff(red.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_of_three_qubits() {
        let rho = DensityMatrix::basis(8, 0);
        let red = partial_trace(&rho, &[2, 2, 2], &[1]).unwrap();
        assert!(max_entry_diff(red.matrix(), DensityMatrix::basis(2, 0).matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_shape_errors() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(matches!(partial_trace(&rho, &[2, 3], &[0]), Err(Error::Shape(_))));
        assert!(matches!(partial_trace(&rho, &[2, 2], &[]), Err(Error::Shape(_))));
        assert!(matches!(partial_trace(&rho, &[2, 2], &[2]), Err(Error::Shape(_))));
    }

    #[test]
    fn eig_of_diagonal_and_pauli_x() {
        let d = Observable::new(CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-3.0, 0.0)]))
            .unwrap();
        let s = eig_hermitian(&d).unwrap();
        assert_abs_diff_eq!(s.values[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.values[1], -3.0, epsilon = 1e-14);

        let x = Observable::new(pauli_matrices()[1].clone()).unwrap();
        let s = eig_hermitian(&x).unwrap();
        assert_abs_diff_eq!(s.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.values[1], -1.0, epsilon = 1e-14);
        let plus = s.vectors.column(0);
        // |+⟩ up to a global phase
        let amp = plus[0] / plus[0].norm();
        assert_abs_diff_eq!((plus[1] / amp).re, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!((plus[0] / amp).re, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1e-6, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(Observable::new(m), Err(Error::InvalidState(_))));
    }

    #[test]
    fn small_negativity_is_repaired_and_large_rejected() {
        let tiny = CMat::from_row_slice(2, 2, &[c(1.0 + 5e-10, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-5e-10, 0.0)]);
        let rho = DensityMatrix::new(tiny).unwrap();
        assert!(rho.matrix()[(1, 1)].re >= 0.0);
        let bad = CMat::from_row_slice(2, 2, &[c(1.1, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.1, 0.0)]);
        assert!(DensityMatrix::new(bad).is_err());
    }

    #[test]
    fn sign_of_diagonal_and_zero() {
        let d = Observable::new(CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-3.0, 0.0)]))
            .unwrap();
        let s = matrix_sign(&d, DEFAULT_ZERO_TOL).unwrap();
        assert!(max_entry_diff(s.matrix(), &pauli_matrices()[3]) < 1e-14);

        let z = matrix_sign(&Observable::new(CMat::zeros(3, 3)).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        assert!(max_entry_diff(z.matrix(), &CMat::zeros(3, 3)) < 1e-15);
        let povm = BinaryPovm::from_sign(&z);
        assert!(max_entry_diff(povm.plus(), &identity(3).scale(0.5)) < 1e-15);
    }

    #[test]
    fn sign_of_zero_minus_plus_projector() {
        let h = DensityMatrix::basis(2, 0).matrix() - ket_plus().density().matrix();
        let obs = Observable::new(h).unwrap();
        let spec = eig_hermitian(&obs).unwrap();
        assert_abs_diff_eq!(spec.values[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.values[1], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        let s = matrix_sign(&obs, DEFAULT_ZERO_TOL).unwrap();
        let s_spec = eig_hermitian(&s).unwrap();
        assert_abs_diff_eq!(s_spec.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s_spec.values[1], -1.0, epsilon = 1e-12);
        // same eigenvectors: S v = sign(λ) v
        for (k, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let v = spec.vectors.column(k).into_owned();
            let sv = s.matrix() * &v;
            assert!((sv - v.scale(sign)).norm() < 1e-12);
        }
    }

    #[test]
    fn trace_distances() {
        let zero = DensityMatrix::basis(2, 0);
        let one = DensityMatrix::basis(2, 1);
        assert_abs_diff_eq!(trace_distance(&zero, &zero).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&zero, &ket_plus().density()).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let e = entropies(&DensityMatrix::maximally_mixed(8)).unwrap();
        assert_abs_diff_eq!(e.renyi_half, 3.0, epsilon = 1e-12);
        let e = entropies(&ket_plus().density()).unwrap();
        assert_abs_diff_eq!(e.renyi_half, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.purity, 1.0, epsilon = 1e-12);
        let e = entropies(&DensityMatrix::diagonal(&[0.75, 0.25]).unwrap()).unwrap();
        let expected = 2.0 * (0.75f64.sqrt() + 0.5).log2();
        assert_abs_diff_eq!(e.renyi_half, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(e.renyi_half, 0.9, epsilon = 1e-4);
    }

    #[test]
    fn fidelity_examples() {
        let zero = DensityMatrix::basis(2, 0);
        let rho = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(uhlmann_fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(uhlmann_fidelity(&zero, &DensityMatrix::basis(2, 1)).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(overlap(&zero, &ket_plus().density()), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(uhlmann_fidelity(&zero, &ket_plus().density()).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn operator_bases_are_orthogonal() {
        for d in [2usize, 3, 4, 5] {
            let basis = traceless_operator_basis(d);
            assert_eq!(basis.len(), d * d - 1);
            for (i, a) in basis.iter().enumerate() {
                assert!(trace_re(&a.matrix).abs() < 1e-14);
                for (j, b) in basis.iter().enumerate() {
                    let ip = trace_product_re(&a.matrix, &b.matrix);
                    let expected = if i == j { a.norm_sq } else { 0.0 };
                    assert_abs_diff_eq!(ip, expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let rho = ket_plus().density();
        let back = DensityMatrix::from_json(&rho.to_json().unwrap()).unwrap();
        assert!(max_entry_diff(rho.matrix(), back.matrix()) < 1e-15);
        let bad = r#"{"dim":2,"re":[1.0,0.0,0.0,1.0],"im":[0,0,0,0]}"#;
        assert!(matches!(DensityMatrix::from_json(bad), Err(Error::InvalidState(_))));
        let short = r#"{"dim":2,"re":[1.0],"im":[0]}"#;
        assert!(matches!(DensityMatrix::from_json(short), Err(Error::Shape(_))));
    }

    #[test]
    fn swap_operator_swaps() {
        let a = DensityMatrix::basis(3, 0);
        let b = DensityMatrix::basis(3, 2);
        let s = swap_operator(3);
        let ab = tensor(&a, &b).unwrap();
        let ba = tensor(&b, &a).unwrap();
        assert!(max_entry_diff(&(&s * ab.matrix() * &s), ba.matrix()) < 1e-15);
    }

    #[test]
    fn permute_subsystems_matches_swap() {
        let a = DensityMatrix::diagonal(&[0.2, 0.8]).unwrap();
        let b = DensityMatrix::diagonal(&[0.1, 0.3, 0.6]).unwrap();
        let ab = tensor(&a, &b).unwrap();
        let ba = tensor(&b, &a).unwrap();
        let p = permute_subsystems(ab.matrix(), &[2, 3], &[1, 0]).unwrap();
        assert!(max_entry_diff(&p, ba.matrix()) < 1e-15);
    }
}
