//! Dataset families with exactly known class-conditional distributions.

use std::f64::consts::FRAC_1_SQRT_2;
use std::num::NonZeroUsize;
use std::path::PathBuf;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embeddings::{
    entanglement_class_average, entanglement_item, fourier_embed, haar_unitary, random_mixed_state, random_pure_state,
    swap_projection, EnsembleMeta, FourierSpec, LabeledEnsemble, LabeledItem,
};
use crate::error::{Error, Result};
use crate::qcore::{c, check_dim_cap, CMat, CVec, DensityMatrix, Label, PureState, DIM_CAP};
use crate::rng::{stream, Rng};

/// Gauss-Legendre nodes per class when multi-copy expectations over a
/// continuous input range are needed.
pub const QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Basis {
        dim: usize,
        index: usize,
    },
    /// `|+⟩ = (|0⟩ + |1⟩)/√2`.
    Plus,
    /// Qubit with Bloch vector `r·(sin θ cos φ, sin θ sin φ, cos θ)`.
    Bloch {
        theta: f64,
        #[serde(default)]
        phi: f64,
        #[serde(default = "unit")]
        r: f64,
    },
    Diagonal {
        probs: Vec<f64>,
    },
    /// Random state of the given rank, drawn from `seed`.
    Random {
        dim: usize,
        rank: usize,
        seed: u64,
    },
}

fn unit() -> f64 {
    1.0
}

impl StateSpec {
    pub fn build(&self) -> Result<DensityMatrix> {
        match self {
            StateSpec::Basis { dim, index } => {
                if index >= dim {
                    return Err(Error::Config(format!("basis index {index} out of range for dim {dim}")));
                }
                Ok(DensityMatrix::basis(*dim, *index))
            }
            StateSpec::Plus => {
                Ok(PureState::new(CVec::from_vec(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]))?.density())
            }
            StateSpec::Bloch { theta, phi, r } => {
                if !(0.0..=1.0).contains(r) {
                    return Err(Error::Config(format!("Bloch radius {r} outside [0, 1]")));
                }
                let (x, y, z) = (r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos());
                let m = CMat::from_row_slice(
                    2,
                    2,
                    &[c((1.0 + z) / 2.0, 0.0), c(x / 2.0, -y / 2.0), c(x / 2.0, y / 2.0), c((1.0 - z) / 2.0, 0.0)],
                );
                DensityMatrix::new(m)
            }
            StateSpec::Diagonal { probs } => DensityMatrix::diagonal(probs),
            StateSpec::Random { dim, rank, seed } => {
                if *rank == 0 || rank > dim {
                    return Err(Error::Config(format!("rank {rank} must lie in 1..={dim}")));
                }
                let mut rng = stream(*seed, 0);
                Ok(if *rank == 1 {
                    random_pure_state(*dim, &mut rng).density()
                } else {
                    random_mixed_state(*dim, *rank, &mut rng)
                })
            }
        }
    }
}

fn default_plus_range() -> [f64; 2] {
    [0.0, 1.5]
}

fn default_minus_range() -> [f64; 2] {
    [1.5, 3.0]
}

fn default_omega() -> usize {
    4
}

fn default_rank() -> usize {
    1
}

fn default_per_class() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Fourier embedding of `x`, uniform on a per-class interval.
    Fourier {
        #[serde(default = "default_omega")]
        omega: usize,
        /// Explicit frequencies; defaults to `0..omega`.
        #[serde(default)]
        frequencies: Option<Vec<f64>>,
        #[serde(default = "default_plus_range")]
        plus_range: [f64; 2],
        #[serde(default = "default_minus_range")]
        minus_range: [f64; 2],
    },
    /// Every item of a class is the same state.
    TwoState { plus: StateSpec, minus: StateSpec },
    /// Each class is uniform over `per_class` random states fixed by `seed`.
    HaarMixture {
        dim: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_rank")]
        rank: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Two copies of a product (`+1`) or maximally entangled (`−1`) state
    /// under Haar-random local unitaries, optionally reduced to the qubit
    /// of symmetric/antisymmetric swap outcomes.
    Entanglement {
        dim: usize,
        #[serde(default)]
        project: bool,
    },
    /// Population given by a saved ensemble (uniform over its items).
    File { path: PathBuf },
}

impl DatasetSpec {
    pub fn with_dim(&self, d: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            DatasetSpec::Fourier { omega, frequencies, .. } => {
                *omega = d;
                *frequencies = None;
            }
            DatasetSpec::HaarMixture { dim, .. } | DatasetSpec::Entanglement { dim, .. } => *dim = d,
            _ => return Err(Error::Config("this dataset family has no dimension parameter".into())),
        }
        Ok(out)
    }

    pub fn with_omega(&self, n: usize) -> Result<Self> {
        match self {
            DatasetSpec::Fourier { .. } => self.with_dim(n),
            _ => Err(Error::Config("the omega axis applies to the fourier family only".into())),
        }
    }
}

/// A class-conditional support point: weight, input, state.
#[derive(Debug, Clone)]
pub struct SupportPoint {
    pub weight: f64,
    pub x: Vec<f64>,
    pub state: DensityMatrix,
    pub pure: Option<PureState>,
}

#[derive(Debug, Clone)]
enum Sampler {
    Support,
    Fourier { spec: FourierSpec, ranges: [[f64; 2]; 2] },
    Entanglement { d: usize, project: bool },
}

/// The data-generating distribution `P(x, y)` with class prior ½, known to
/// the harness but not to the learners.
#[derive(Debug, Clone)]
pub struct Population {
    dim: usize,
    averages: [DensityMatrix; 2],
    /// Finite support (or quadrature nodes) per class, when available.
    support: Option<[Vec<SupportPoint>; 2]>,
    sampler: Sampler,
    generator: serde_json::Value,
}

fn class_index(y: Label) -> usize {
    match y {
        Label::Plus => 0,
        Label::Minus => 1,
    }
}

/// `(1/|Ω|)(1/(b−a)) ∫_a^b e^{ix(ω−ω')} dx`.
fn fourier_average(freqs: &[f64], range: [f64; 2]) -> Result<DensityMatrix> {
    let k = freqs.len();
    let [a, b] = range;
    if !(b > a) {
        return Err(Error::Config(format!("input range [{a}, {b}) is empty")));
    }
    let m = CMat::from_fn(k, k, |i, j| {
        let w = freqs[i] - freqs[j];
        if w.abs() < 1e-14 {
            c(1.0 / k as f64, 0.0)
        } else {
            let num = crate::qcore::C64::from_polar(1.0, w * b) - crate::qcore::C64::from_polar(1.0, w * a);
            num / (c(0.0, w) * (b - a) * k as f64)
        }
    });
    DensityMatrix::new(crate::qcore::hermitian_part(&m))
}

impl Population {
    pub fn build(spec: &DatasetSpec) -> Result<Self> {
        match spec {
            DatasetSpec::Fourier { omega, frequencies, plus_range, minus_range } => {
                let freqs = frequencies.clone().unwrap_or_else(|| (0..*omega).map(|k| k as f64).collect());
                let fspec = FourierSpec::new(freqs.clone())?;
                check_dim_cap(fspec.dim(), DIM_CAP)?;
                let ranges = [*plus_range, *minus_range];
                let averages = [fourier_average(&freqs, ranges[0])?, fourier_average(&freqs, ranges[1])?];
                let quad = GaussLegendre::new(NonZeroUsize::new(QUADRATURE_NODES).expect("non-zero"));
                let support = ranges.map(|[a, b]| {
                    quad.iter()
                        .map(|(node, w)| {
                            let x = 0.5 * ((b - a) * node + (b + a));
                            let psi = fourier_embed(x, &fspec).expect("valid spec");
                            SupportPoint { weight: 0.5 * w, x: vec![x], state: psi.density(), pure: Some(psi) }
                        })
                        .collect::<Vec<_>>()
                });
                Ok(Self {
                    dim: fspec.dim(),
                    averages,
                    support: Some(support),
                    sampler: Sampler::Fourier { spec: fspec, ranges },
                    generator: serde_json::json!({ "family": "fourier", "frequencies": freqs, "plus_range": plus_range, "minus_range": minus_range }),
                })
            }
            DatasetSpec::TwoState { plus, minus } => {
                let p = plus.build()?;
                let m = minus.build()?;
                if p.dim() != m.dim() {
                    return Err(Error::Config("two_state classes differ in dimension".into()));
                }
                let point = |s: &DensityMatrix| {
                    vec![SupportPoint { weight: 1.0, x: vec![], state: s.clone(), pure: pure_of(s) }]
                };
                Ok(Self {
                    dim: p.dim(),
                    support: Some([point(&p), point(&m)]),
                    averages: [p, m],
                    sampler: Sampler::Support,
                    generator: serde_json::json!({ "family": "two_state", "plus": plus, "minus": minus }),
                })
            }
            DatasetSpec::HaarMixture { dim, per_class, rank, seed } => {
                if *per_class == 0 || *rank == 0 || rank > dim {
                    return Err(Error::Config("haar_mixture needs per_class >= 1 and 1 <= rank <= dim".into()));
                }
                check_dim_cap(*dim, DIM_CAP)?;
                let mut rng = stream(*seed, 0);
                let mut classes: [Vec<SupportPoint>; 2] = [Vec::new(), Vec::new()];
                for class in classes.iter_mut() {
                    for k in 0..*per_class {
                        let (state, pure) = if *rank == 1 {
                            let psi = random_pure_state(*dim, &mut rng);
                            (psi.density(), Some(psi))
                        } else {
                            (random_mixed_state(*dim, *rank, &mut rng), None)
                        };
                        class.push(SupportPoint { weight: 1.0 / *per_class as f64, x: vec![k as f64], state, pure });
                    }
                }
                let averages = [support_average(&classes[0])?, support_average(&classes[1])?];
                Ok(Self {
                    dim: *dim,
                    averages,
                    support: Some(classes),
                    sampler: Sampler::Support,
                    generator: serde_json::json!({ "family": "haar_mixture", "dim": dim, "per_class": per_class, "rank": rank, "seed": seed }),
                })
            }
            DatasetSpec::Entanglement { dim, project } => {
                let d = *dim;
                if d < 2 {
                    return Err(Error::Config("entanglement family needs dim >= 2".into()));
                }
                let raw = [entanglement_class_average(d, Label::Plus)?, entanglement_class_average(d, Label::Minus)?];
                let generator = serde_json::json!({ "family": "entanglement", "d": d, "project": project });
                if *project {
                    // the projected states do not depend on the local unitaries
                    let averages = [swap_projection(&raw[0], d)?, swap_projection(&raw[1], d)?];
                    let point = |s: &DensityMatrix| {
                        vec![SupportPoint { weight: 1.0, x: vec![], state: s.clone(), pure: pure_of(s) }]
                    };
                    Ok(Self {
                        dim: 2,
                        support: Some([point(&averages[0]), point(&averages[1])]),
                        averages,
                        sampler: Sampler::Entanglement { d, project: true },
                        generator,
                    })
                } else {
                    Ok(Self {
                        dim: d.pow(4),
                        averages: raw,
                        support: None,
                        sampler: Sampler::Entanglement { d, project: false },
                        generator,
                    })
                }
            }
            DatasetSpec::File { path } => Self::from_ensemble(&LabeledEnsemble::load(path)?),
        }
    }

    /// Population uniform over the items of each class of `ens`.
    pub fn from_ensemble(ens: &LabeledEnsemble) -> Result<Self> {
        let mut classes: [Vec<SupportPoint>; 2] = [Vec::new(), Vec::new()];
        for it in ens.items() {
            classes[class_index(it.y)].push(SupportPoint {
                weight: 1.0,
                x: it.x.clone(),
                state: it.state.clone(),
                pure: it.pure.clone(),
            });
        }
        for class in classes.iter_mut() {
            if class.is_empty() {
                return Err(Error::Data("saved ensemble must contain both classes".into()));
            }
            let n = class.len() as f64;
            for p in class.iter_mut() {
                p.weight = 1.0 / n;
            }
        }
        let averages = [support_average(&classes[0])?, support_average(&classes[1])?];
        Ok(Self {
            dim: ens.dim(),
            averages,
            support: Some(classes),
            sampler: Sampler::Support,
            generator: ens.meta.generator.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact class average `E[ρ(x) | y]`.
    pub fn average(&self, y: Label) -> &DensityMatrix {
        &self.averages[class_index(y)]
    }

    pub fn support(&self, y: Label) -> Option<&[SupportPoint]> {
        self.support.as_ref().map(|s| s[class_index(y)].as_slice())
    }

    pub fn has_support(&self) -> bool {
        self.support.is_some()
    }

    /// Exact `E[ρ(x)^{⊗v} | y]`.
    pub fn multi_copy_average(&self, y: Label, v: usize) -> Result<DensityMatrix> {
        if v == 1 {
            return Ok(self.average(y).clone());
        }
        let pts = self
            .support(y)
            .ok_or_else(|| Error::Config("multi-copy expectations need a population with finite support".into()))?;
        let powers = pts.iter().map(|p| p.state.tensor_power(v, DIM_CAP)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DensityMatrix> = powers.iter().collect();
        let weights: Vec<f64> = pts.iter().map(|p| p.weight).collect();
        DensityMatrix::mixture(&refs, &weights)
    }

    /// One labelled item drawn from `P(x | y)`.
    pub fn sample(&self, y: Label, rng: &mut Rng) -> Result<LabeledItem> {
        match &self.sampler {
            Sampler::Support => {
                let pts = self.support(y).expect("support sampler has support");
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = pts.len() - 1;
                for (i, p) in pts.iter().enumerate() {
                    acc += p.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let p = &pts[pick];
                Ok(match &p.pure {
                    Some(psi) => LabeledItem::pure(p.x.clone(), y, psi.clone()),
                    None => LabeledItem::mixed(p.x.clone(), y, p.state.clone()),
                })
            }
            Sampler::Fourier { spec, ranges } => {
                let [a, b] = ranges[class_index(y)];
                let x = rng.random_range(a..b);
                Ok(LabeledItem::pure(vec![x], y, fourier_embed(x, spec)?))
            }
            Sampler::Entanglement { d, project } => {
                let ua = haar_unitary(*d, rng);
                let ub = haar_unitary(*d, rng);
                let psi = entanglement_item(*d, y, &ua, &ub)?;
                if *project {
                    let q = swap_projection(&psi.density(), *d)?;
                    Ok(match pure_of(&q) {
                        Some(p) => LabeledItem::pure(vec![], y, p),
                        None => LabeledItem::mixed(vec![], y, q),
                    })
                } else {
                    Ok(LabeledItem::pure(vec![], y, psi))
                }
            }
        }
    }

    /// Training set of `n` items with alternating labels starting at `+1`
    /// and `s` copies per item.
    pub fn draw_ensemble(&self, n: usize, s: usize, seed: u64, rng: &mut Rng) -> Result<LabeledEnsemble> {
        if n < 2 {
            return Err(Error::Config(format!("training set needs at least one item per class, got N={n}")));
        }
        let items = (0..n)
            .map(|i| self.sample(if i % 2 == 0 { Label::Plus } else { Label::Minus }, rng))
            .collect::<Result<Vec<_>>>()?;
        let meta = EnsembleMeta { generator: self.generator.clone(), seed: Some(seed) };
        Ok(LabeledEnsemble::with_uniform_copies(items, s)?.with_meta(meta))
    }
}

fn support_average(points: &[SupportPoint]) -> Result<DensityMatrix> {
    let refs: Vec<&DensityMatrix> = points.iter().map(|p| &p.state).collect();
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    DensityMatrix::mixture(&refs, &weights)
}

/// Leading eigenvector of a state of unit purity.
fn pure_of(rho: &DensityMatrix) -> Option<PureState> {
    if (rho.purity() - 1.0).abs() > 1e-10 {
        return None;
    }
    let spec = rho.spectrum().ok()?;
    PureState::normalized(spec.vectors.column(0).into_owned()).ok()
}
