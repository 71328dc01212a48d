//! State families and labelled datasets: Fourier embeddings, Haar-random
//! states, the two-copy entanglement problem, k-local reductions and
//! environment-perturbed copies.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    c, check_dim_cap, identity, partial_trace, permute_subsystems, swap_operator, trace_product_re, CMat, CVec,
    DensityMatrix, DensityMatrixJson, Label, PureState, C64, DIM_CAP,
};
use crate::rng::Rng;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Frequencies `Ω` and an orthonormal basis `|φ_ω⟩` (columns of `basis`).
#[derive(Debug, Clone)]
pub struct FourierSpec {
    frequencies: Vec<f64>,
    basis: Option<CMat>,
}

impl FourierSpec {
    /// Computational basis, one basis vector per frequency.
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Config("frequency set must be non-empty".into()));
        }
        Ok(Self { frequencies, basis: None })
    }

    pub fn with_basis(frequencies: Vec<f64>, basis: CMat) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Config("frequency set must be non-empty".into()));
        }
        if basis.ncols() != frequencies.len() {
            return Err(Error::Config(format!(
                "{} frequencies but {} basis vectors",
                frequencies.len(),
                basis.ncols()
            )));
        }
        let gram = basis.adjoint() * &basis;
        let defect = (gram - identity(basis.ncols())).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if defect > ORTHONORMAL_TOL {
            return Err(Error::Config(format!("basis is not orthonormal (defect {defect:e})")));
        }
        Ok(Self { frequencies, basis: Some(basis) })
    }

    /// Integer frequencies `0, 1, …, n−1`.
    pub fn integer(n: usize) -> Result<Self> {
        Self::new((0..n).map(|k| k as f64).collect())
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn dim(&self) -> usize {
        self.basis.as_ref().map_or(self.frequencies.len(), |b| b.nrows())
    }
}

/// `|ψ(x)⟩ = |Ω|^{-1/2} Σ_ω e^{iωx} |φ_ω⟩`.
pub fn fourier_embed(x: f64, spec: &FourierSpec) -> Result<PureState> {
    let scale = (spec.frequencies.len() as f64).sqrt().recip();
    let coeffs =
        CVec::from_iterator(spec.frequencies.len(), spec.frequencies.iter().map(|&w| C64::from_polar(scale, w * x)));
    let amps = match &spec.basis {
        None => coeffs,
        Some(b) => b * coeffs,
    };
    PureState::normalized(amps)
}

/// Matrix of i.i.d. standard complex Gaussians (unit variance per entry).
pub fn ginibre(rows: usize, cols: usize, rng: &mut Rng) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re * h, im * h)
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of the
/// diagonal of R moved into Q.
pub fn haar_unitary(d: usize, rng: &mut Rng) -> CMat {
    let z = ginibre(d, d, rng);
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-random pure state.
pub fn random_pure_state(d: usize, rng: &mut Rng) -> PureState {
    let v = ginibre(d, 1, rng).column(0).into_owned();
    PureState::normalized(v).expect("Gaussian vector is non-zero with probability one")
}

/// Random mixed state `G G† / Tr` with a `d × rank` Ginibre matrix.
pub fn random_mixed_state(d: usize, rank: usize, rng: &mut Rng) -> DensityMatrix {
    let g = ginibre(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_trusted(m.unscale(tr))
}

/// Single labelled example.
#[derive(Debug, Clone)]
pub struct LabeledItem {
    pub x: Vec<f64>,
    pub y: Label,
    pub state: DensityMatrix,
    /// State vector when the state is known to be pure.
    pub pure: Option<PureState>,
}

impl LabeledItem {
    pub fn mixed(x: Vec<f64>, y: Label, state: DensityMatrix) -> Self {
        Self { x, y, state, pure: None }
    }

    pub fn pure(x: Vec<f64>, y: Label, psi: PureState) -> Self {
        Self { x, y, state: psi.density(), pure: Some(psi) }
    }
}

/// Provenance stored alongside a serialized ensemble.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct EnsembleMeta {
    pub generator: serde_json::Value,
    pub seed: Option<u64>,
}

/// Training set: labelled states with a per-item copy budget.
#[derive(Debug, Clone)]
pub struct LabeledEnsemble {
    items: Vec<LabeledItem>,
    copy_budget: Vec<usize>,
    pub meta: EnsembleMeta,
}

impl LabeledEnsemble {
    pub fn new(items: Vec<LabeledItem>, copy_budget: Vec<usize>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Data("ensemble must contain at least one item".into()));
        }
        if copy_budget.len() != items.len() {
            return Err(Error::Shape(format!("{} items but {} copy budgets", items.len(), copy_budget.len())));
        }
        if copy_budget.contains(&0) {
            return Err(Error::Data("copy budgets must be positive".into()));
        }
        let dim = items[0].state.dim();
        if items.iter().any(|it| it.state.dim() != dim) {
            return Err(Error::Shape("all states in an ensemble must share a dimension".into()));
        }
        Ok(Self { items, copy_budget, meta: EnsembleMeta::default() })
    }

    /// Every item gets `s` copies, so the total is `N·s`.
    pub fn with_uniform_copies(items: Vec<LabeledItem>, s: usize) -> Result<Self> {
        let n = items.len();
        Self::new(items, vec![s; n])
    }

    pub fn with_meta(mut self, meta: EnsembleMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn items(&self) -> &[LabeledItem] {
        &self.items
    }

    pub fn copy_budget(&self) -> &[usize] {
        &self.copy_budget
    }

    pub fn total_copies(&self) -> usize {
        self.copy_budget.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].state.dim()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|it| it.y == label).count()
    }

    pub fn states(&self) -> impl Iterator<Item = &DensityMatrix> {
        self.items.iter().map(|it| &it.state)
    }

    pub fn is_pure(&self) -> bool {
        self.items.iter().all(|it| it.pure.is_some())
    }

    /// Class mean states `(ρ̄+, ρ̄−)`. Fails if either class is empty.
    pub fn class_means(&self) -> Result<(DensityMatrix, DensityMatrix)> {
        let mean = |label: Label| {
            DensityMatrix::uniform_mixture(self.items.iter().filter(|it| it.y == label).map(|it| &it.state))
                .map_err(|_| Error::Config(format!("ensemble has no items with label {label}")))
        };
        Ok((mean(Label::Plus)?, mean(Label::Minus)?))
    }

    /// Real overlap kernel `K_nm = Tr[ρ_n ρ_m]`.
    pub fn overlap_gram(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = trace_product_re(self.items[i].state.matrix(), self.items[j].state.matrix());
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Complex inner-product Gram matrix `⟨ψ_n|ψ_m⟩` of a pure ensemble.
    pub fn state_gram(&self) -> Result<CMat> {
        let vecs: Vec<&PureState> = self
            .items
            .iter()
            .map(|it| it.pure.as_ref().ok_or_else(|| Error::Data("ensemble is not pure".into())))
            .collect::<Result<_>>()?;
        let n = vecs.len();
        Ok(CMat::from_fn(n, n, |i, j| vecs[i].inner(vecs[j])))
    }

    /// Applies a channel to every state, keeping labels, inputs and budgets.
    pub fn map_states(&self, f: impl Fn(&DensityMatrix) -> Result<DensityMatrix>) -> Result<Self> {
        let items = self
            .items
            .iter()
            .map(|it| Ok(LabeledItem::mixed(it.x.clone(), it.y, f(&it.state)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { items, copy_budget: self.copy_budget.clone(), meta: self.meta.clone() })
    }
}

// --- two-copy entanglement problem -----------------------------------------

/// `|Φ⟩ = d^{-1/2} Σ_i |ii⟩`.
pub fn maximally_entangled(d: usize) -> PureState {
    let mut v = CVec::zeros(d * d);
    let a = (d as f64).sqrt().recip();
    for i in 0..d {
        v[i * d + i] = c(a, 0.0);
    }
    PureState::normalized(v).expect("non-zero vector")
}

/// Single copy of a class state on `A ⊗ B`: a product state for `Plus`,
/// a locally rotated maximally entangled state for `Minus`.
pub fn entanglement_single_copy(d: usize, y: Label, ua: &CMat, ub: &CMat) -> Result<PureState> {
    let local = ua.kronecker(ub);
    match y {
        Label::Plus => PureState::basis(d * d, 0).apply(&local),
        Label::Minus => maximally_entangled(d).apply(&local),
    }
}

/// Two-copy item with subsystem layout `(A, B, A', B')`.
pub fn entanglement_item(d: usize, y: Label, ua: &CMat, ub: &CMat) -> Result<PureState> {
    let one = entanglement_single_copy(d, y, ua, ub)?;
    Ok(one.tensor(&one))
}

/// `n_per_class` items of each class with Haar-random local unitaries.
pub fn entanglement_dataset(d: usize, n_per_class: usize, rng: &mut Rng) -> Result<LabeledEnsemble> {
    if d < 2 {
        return Err(Error::Config("entanglement dataset needs d >= 2".into()));
    }
    check_dim_cap(d.pow(4), DIM_CAP)?;
    let mut items = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for y in [Label::Plus, Label::Minus] {
            let ua = haar_unitary(d, rng);
            let ub = haar_unitary(d, rng);
            items.push(LabeledItem::pure(Vec::new(), y, entanglement_item(d, y, &ua, &ub)?));
        }
    }
    let meta = EnsembleMeta {
        generator: serde_json::json!({ "family": "entanglement", "d": d, "n_per_class": n_per_class }),
        seed: None,
    };
    Ok(LabeledEnsemble::with_uniform_copies(items, 1)?.with_meta(meta))
}

/// Projectors onto the symmetric and antisymmetric subspaces of `C^d ⊗ C^d`.
pub fn symmetric_projectors(d: usize) -> (CMat, CMat) {
    let s = swap_operator(d);
    let id = identity(d * d);
    ((&id + &s).scale(0.5), (&id - &s).scale(0.5))
}

/// Exact Haar average of a two-copy class state in the `(A, B, A', B')`
/// layout.
pub fn entanglement_class_average(d: usize, y: Label) -> Result<DensityMatrix> {
    check_dim_cap(d.pow(4), DIM_CAP)?;
    let (ps, pa) = symmetric_projectors(d);
    let ds = (d * (d + 1) / 2) as f64;
    let da = (d * (d - 1) / 2) as f64;
    // built in the (A, A', B, B') ordering, then permuted to (A, B, A', B')
    let grouped = match y {
        Label::Plus => {
            let sym = ps.unscale(ds);
            sym.kronecker(&sym)
        }
        Label::Minus => {
            let df = d as f64;
            let sym = ps.kronecker(&ps).scale((1.0 + 1.0 / df) / 2.0 / (ds * ds));
            let anti = if da > 0.0 {
                pa.kronecker(&pa).scale((1.0 - 1.0 / df) / 2.0 / (da * da))
            } else {
                CMat::zeros(d.pow(4), d.pow(4))
            };
            sym + anti
        }
    };
    let m = permute_subsystems(&grouped, &[d, d, d, d], &[0, 2, 1, 3])?;
    DensityMatrix::new(m)
}

/// Qubit state `diag(Tr[P_S ρ_AA'], Tr[P_A ρ_AA'])` of a two-copy state in
/// the `(A, B, A', B')` layout.
pub fn swap_projection(state: &DensityMatrix, d: usize) -> Result<DensityMatrix> {
    let expected = d.checked_pow(4).unwrap_or(usize::MAX);
    if state.dim() != expected {
        return Err(Error::Shape(format!("swap projection expects dimension d^4 = {expected}, got {}", state.dim())));
    }
    let rho_aa = partial_trace(state, &[d, d, d, d], &[0, 2])?;
    let (ps, pa) = symmetric_projectors(d);
    let p_sym = rho_aa.expectation(&ps).clamp(0.0, 1.0);
    let p_anti = rho_aa.expectation(&pa).clamp(0.0, 1.0);
    let total = p_sym + p_anti;
    DensityMatrix::diagonal(&[p_sym / total, p_anti / total])
}

// --- k-local reductions ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalVariant {
    Averaged,
    DirectSum,
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Reduces an `n`-qubit state to its `k`-qubit marginals, either averaged on
/// one `2^k` space or as a block-diagonal direct sum with weights `1/C(n,k)`.
pub fn local_map(state: &DensityMatrix, n_qubits: usize, k: usize, variant: LocalVariant) -> Result<DensityMatrix> {
    if state.dim() != 1usize << n_qubits {
        return Err(Error::Shape(format!("state of dim {} is not a {n_qubits}-qubit state", state.dim())));
    }
    if k == 0 || k > n_qubits {
        return Err(Error::Config(format!("locality k={k} must lie in 1..={n_qubits}")));
    }
    let dims = vec![2usize; n_qubits];
    let sets = subsets(n_qubits, k);
    let nk = sets.len() as f64;
    let block = 1usize << k;
    match variant {
        LocalVariant::Averaged => {
            let mut acc = CMat::zeros(block, block);
            for s in &sets {
                acc += partial_trace(state, &dims, s)?.matrix();
            }
            Ok(DensityMatrix::from_trusted(acc.unscale(nk)))
        }
        LocalVariant::DirectSum => {
            let total = sets.len() * block;
            check_dim_cap(total, DIM_CAP)?;
            let mut out = CMat::zeros(total, total);
            for (b, s) in sets.iter().enumerate() {
                let red = partial_trace(state, &dims, s)?;
                out.view_mut((b * block, b * block), (block, block)).copy_from(&red.matrix().unscale(nk));
            }
            Ok(DensityMatrix::from_trusted(out))
        }
    }
}

// --- environment perturbations --------------------------------------------

/// `(1−q) ρ + q I/d`.
pub fn depolarize(rho: &DensityMatrix, q: f64) -> DensityMatrix {
    let d = rho.dim();
    let m = rho.matrix().scale(1.0 - q) + identity(d).scale(q / d as f64);
    DensityMatrix::from_trusted(m)
}

/// `s` copies of `ρ(x)`, each passed through a depolarizing channel whose
/// strength is drawn uniformly from `[0, p]`. The mean copy is
/// `(1 − p/2) ρ(x) + (p/2) I/d`.
pub fn perturbed_copies(
    state_builder: impl Fn(&[f64]) -> Result<DensityMatrix>,
    x: &[f64],
    s: usize,
    p: f64,
    rng: &mut Rng,
) -> Result<Vec<DensityMatrix>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("noise strength {p} must lie in [0, 1]")));
    }
    let rho = state_builder(x)?;
    Ok((0..s)
        .map(|_| {
            let q = if p == 0.0 { 0.0 } else { rng.random_range(0.0..=p) };
            depolarize(&rho, q)
        })
        .collect())
}

// --- serialization -----------------------------------------------------------

/// `meta.json` of a serialized ensemble directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleFileMeta {
    pub dim: usize,
    pub n: usize,
    /// Average copies per item.
    pub s: f64,
    pub generator: serde_json::Value,
    pub seed: Option<u64>,
    /// Layout note for multi-subsystem states.
    #[serde(default)]
    pub layout: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRow {
    index: usize,
    y: i8,
    x: String,
    copies: usize,
    state_file: String,
}

impl LabeledEnsemble {
    /// Writes `meta.json`, `items.csv` and `states/<index>.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("states"))?;
        let layout = match self.meta.generator.get("family").and_then(|f| f.as_str()) {
            Some("entanglement") => Some("A,B,A',B'".to_string()),
            _ => None,
        };
        let meta = EnsembleFileMeta {
            dim: self.dim(),
            n: self.len(),
            s: self.total_copies() as f64 / self.len() as f64,
            generator: self.meta.generator.clone(),
            seed: self.meta.seed,
            layout,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        let mut w = csv::Writer::from_path(dir.join("items.csv"))?;
        for (i, (it, &copies)) in self.items.iter().zip(&self.copy_budget).enumerate() {
            let state_file = format!("states/{i}.json");
            fs::write(dir.join(&state_file), serde_json::to_string(&DensityMatrixJson::from(&it.state))?)?;
            let x = it.x.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(";");
            w.serialize(ItemRow { index: i, y: it.y.into(), x, copies, state_file })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a directory written by [`LabeledEnsemble::save`]. `path` may be
    /// the directory or its `meta.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let dir =
            if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
        let meta: EnsembleFileMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let mut r = csv::Reader::from_path(dir.join("items.csv"))?;
        let mut items = Vec::new();
        let mut budget = Vec::new();
        for row in r.deserialize::<ItemRow>() {
            let row = row?;
            let y = Label::try_from(row.y).map_err(Error::Data)?;
            let x = if row.x.is_empty() {
                Vec::new()
            } else {
                row.x
                    .split(';')
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Data(format!("bad input value {v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?
            };
            let json: DensityMatrixJson = serde_json::from_str(&fs::read_to_string(dir.join(&row.state_file))?)?;
            let state = DensityMatrix::try_from(json)?;
            let pure = recover_pure(&state);
            items.push(LabeledItem { x, y, state, pure });
            budget.push(row.copies);
        }
        if items.len() != meta.n {
            return Err(Error::Data(format!("meta.json declares {} items, found {}", meta.n, items.len())));
        }
        let ens = Self::new(items, budget)?;
        if ens.dim() != meta.dim {
            return Err(Error::Data(format!("meta.json declares dim {}, states have {}", meta.dim, ens.dim())));
        }
        Ok(ens.with_meta(EnsembleMeta { generator: meta.generator, seed: meta.seed }))
    }
}

/// State vector of a pure density matrix (purity within 1e-10), up to phase.
fn recover_pure(rho: &DensityMatrix) -> Option<PureState> {
    if (rho.purity() - 1.0).abs() > 1e-10 {
        return None;
    }
    let spec = rho.spectrum().ok()?;
    PureState::normalized(spec.vectors.column(0).into_owned()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::tensor;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn max_entry_diff(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    #[test]
    fn fourier_examples() {
        let single = FourierSpec::new(vec![0.0]).unwrap();
        let psi = fourier_embed(1.3, &single).unwrap();
        assert_abs_diff_eq!(psi.amplitudes()[0].re, 1.0, epsilon = 1e-15);

        let two = FourierSpec::integer(2).unwrap();
        let a = fourier_embed(0.0, &two).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(a.amplitudes()[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(a.amplitudes()[1].re, h, epsilon = 1e-15);
        let b = fourier_embed(PI, &two).unwrap();
        assert_abs_diff_eq!(b.amplitudes()[1].re, -h, epsilon = 1e-15);
        assert_abs_diff_eq!(b.amplitudes()[1].im, 0.0, epsilon = 1e-15);

        assert!(matches!(FourierSpec::new(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn fourier_gram_identity() {
        let spec = FourierSpec::new(vec![0.0, 1.0, 2.5, -3.0]).unwrap();
        for (x, xp) in [(0.3, 1.7), (-2.0, 0.4), (5.0, 5.0)] {
            let direct = fourier_embed(x, &spec).unwrap().inner(&fourier_embed(xp, &spec).unwrap());
            let sum: crate::qcore::C64 = spec
                .frequencies()
                .iter()
                .map(|&w| crate::qcore::C64::from_polar(1.0, w * (xp - x)))
                .sum::<crate::qcore::C64>()
                / 4.0;
            assert!((direct - sum).norm() < 1e-12);
        }
    }

    #[test]
    fn fourier_custom_basis() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let hadamard = CMat::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]);
        let spec = FourierSpec::with_basis(vec![0.0, 1.0], hadamard).unwrap();
        let psi = fourier_embed(0.0, &spec).unwrap();
        assert_abs_diff_eq!(psi.amplitudes()[0].re, 1.0, epsilon = 1e-12);
        let bad = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(FourierSpec::with_basis(vec![0.0, 1.0], bad).is_err());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = stream(1, 0);
        for d in [1usize, 2, 5] {
            let u = haar_unitary(d, &mut rng);
            assert!(max_entry_diff(&(u.adjoint() * &u), &identity(d)) < 1e-12);
        }
    }

    #[test]
    fn entanglement_fixed_unitaries() {
        let d = 2;
        let id = identity(d);
        let psi = entanglement_item(d, Label::Minus, &id, &id).unwrap();
        let phi = maximally_entangled(2);
        let expected = phi.tensor(&phi);
        assert!((psi.inner(&expected).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entangled_marginal_is_maximally_mixed() {
        let mut rng = stream(2, 0);
        let d = 3;
        let ua = haar_unitary(d, &mut rng);
        let ub = haar_unitary(d, &mut rng);
        let one = entanglement_single_copy(d, Label::Minus, &ua, &ub).unwrap();
        let red = partial_trace(&one.density(), &[d, d], &[0]).unwrap();
        assert!(max_entry_diff(red.matrix(), DensityMatrix::maximally_mixed(d).matrix()) < 1e-12);
    }

    #[test]
    fn separable_single_copy_average_is_maximally_mixed() {
        let d = 2;
        let n = 10_000;
        let mut rng = stream(3, 0);
        let mut acc = CMat::zeros(d * d, d * d);
        let mut sq = DMatrix::<f64>::zeros(d * d, d * d);
        for _ in 0..n {
            let ua = haar_unitary(d, &mut rng);
            let ub = haar_unitary(d, &mut rng);
            let m = entanglement_single_copy(d, Label::Plus, &ua, &ub).unwrap().density().into_matrix();
            for i in 0..d * d {
                for j in 0..d * d {
                    sq[(i, j)] += m[(i, j)].norm_sqr();
                }
            }
            acc += m;
        }
        let target = identity(d * d).unscale((d * d) as f64);
        for i in 0..d * d {
            for j in 0..d * d {
                let mean = acc[(i, j)] / n as f64;
                let var = sq[(i, j)] / n as f64 - mean.norm_sqr();
                let se = (var.max(0.0) / n as f64).sqrt();
                assert!((mean - target[(i, j)]).norm() <= 3.0 * se + 1e-12, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn swap_projection_of_classes() {
        let mut rng = stream(4, 0);
        for d in [2usize, 3] {
            for _ in 0..3 {
                let ua = haar_unitary(d, &mut rng);
                let ub = haar_unitary(d, &mut rng);
                let sep = swap_projection(&entanglement_item(d, Label::Plus, &ua, &ub).unwrap().density(), d).unwrap();
                assert!(max_entry_diff(sep.matrix(), DensityMatrix::basis(2, 0).matrix()) < 1e-9);
                let ent = swap_projection(&entanglement_item(d, Label::Minus, &ua, &ub).unwrap().density(), d).unwrap();
                let df = d as f64;
                let expected = DensityMatrix::diagonal(&[(1.0 + 1.0 / df) / 2.0, (1.0 - 1.0 / df) / 2.0]).unwrap();
                assert!(max_entry_diff(ent.matrix(), expected.matrix()) < 1e-9);
            }
        }
        let bad = DensityMatrix::maximally_mixed(8);
        assert!(matches!(swap_projection(&bad, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn class_averages_match_monte_carlo() {
        let d = 2;
        let mut rng = stream(5, 0);
        for y in [Label::Plus, Label::Minus] {
            let exact = entanglement_class_average(d, y).unwrap();
            let n = 4000;
            let mut acc = CMat::zeros(16, 16);
            for _ in 0..n {
                let ua = haar_unitary(d, &mut rng);
                let ub = haar_unitary(d, &mut rng);
                acc += entanglement_item(d, y, &ua, &ub).unwrap().density().matrix();
            }
            let mc = acc.unscale(n as f64);
            assert!(max_entry_diff(&mc, exact.matrix()) < 0.02, "{y}");
            let proj = swap_projection(&exact, d).unwrap();
            let p0 = if y == Label::Plus { 1.0 } else { 0.75 };
            assert_abs_diff_eq!(proj.matrix()[(0, 0)].re, p0, epsilon = 1e-12);
        }
    }

    #[test]
    fn local_map_examples() {
        let a = DensityMatrix::diagonal(&[0.9, 0.1]).unwrap();
        let b = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        let ab = tensor(&a, &b).unwrap();
        let avg = local_map(&ab, 2, 1, LocalVariant::Averaged).unwrap();
        let expected = (a.matrix() + b.matrix()).scale(0.5);
        assert!(max_entry_diff(avg.matrix(), &expected) < 1e-15);

        let full = local_map(&ab, 2, 2, LocalVariant::Averaged).unwrap();
        assert!(max_entry_diff(full.matrix(), ab.matrix()) < 1e-12);

        let zero3 = DensityMatrix::basis(8, 0);
        let ds = local_map(&zero3, 3, 1, LocalVariant::DirectSum).unwrap();
        assert_eq!(ds.dim(), 6);
        for blk in 0..3 {
            assert_abs_diff_eq!(ds.matrix()[(2 * blk, 2 * blk)].re, 1.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(ds.matrix()[(2 * blk + 1, 2 * blk + 1)].re, 0.0, epsilon = 1e-15);
        }
        let e = crate::qcore::entropies(&ds).unwrap();
        assert!(e.renyi_half <= 1.0 * 3f64.log2() + 1e-12);
    }

    #[test]
    fn perturbed_copy_examples() {
        let mut rng = stream(6, 0);
        let rho = DensityMatrix::basis(2, 0);
        let builder = |_: &[f64]| Ok(rho.clone());
        let exact = perturbed_copies(builder, &[0.0], 5, 0.0, &mut rng).unwrap();
        assert!(exact.iter().all(|s| s == &rho));
        let mixed = perturbed_copies(builder, &[0.0], 3, 1.0, &mut rng).unwrap();
        assert_eq!(mixed.len(), 3);
        assert!(perturbed_copies(builder, &[0.0], 1, 1.5, &mut rng).is_err());
    }

    #[test]
    fn ensemble_round_trip() {
        let mut rng = stream(7, 0);
        let ens = entanglement_dataset(2, 2, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ens.save(dir.path()).unwrap();
        let back = LabeledEnsemble::load(dir.path()).unwrap();
        assert_eq!(back.len(), ens.len());
        assert!(back.is_pure());
        for (a, b) in ens.items().iter().zip(back.items()) {
            assert_eq!(a.y, b.y);
            assert!(max_entry_diff(a.state.matrix(), b.state.matrix()) < 1e-15);
        }
        assert_eq!(back.meta.generator["family"], "entanglement");
    }

    #[test]
    fn single_class_means_fail() {
        let items = vec![LabeledItem::mixed(vec![], Label::Plus, DensityMatrix::basis(2, 0))];
        let ens = LabeledEnsemble::with_uniform_copies(items, 1).unwrap();
        assert!(matches!(ens.class_means(), Err(Error::Config(_))));
    }
}
