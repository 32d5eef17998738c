//! Random weight vectors `A = (A_1, A_2, ...)` of the smoothing transform.
//!
//! Each model can be sampled and, where possible, knows the spectral moments
//! `E[Σ_j A_j^θ log^k A_j]` for `k = 0, 1, 2` in closed form or by quadrature.
//! Zero weights never enter a [`WeightVector`]: a zero-weight child is never
//! born, so dropping it at sampling time loses nothing.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::distributions::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

const PROB_SUM_TOL: f64 = 1e-9;
const QUAD_TOL: f64 = 1e-10;

/// One realization of the weight vector with zero entries removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Keeps the strictly positive entries in their original order.
    pub fn from_raw(raw: &[f64]) -> Self {
        Self(raw.iter().copied().filter(|&w| w > 0.0).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A bounded-support law for one econophysics trade coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientLaw {
    Uniform { lo: f64, hi: f64 },
    Discrete { atoms: Vec<Atom> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub value: f64,
    pub p: f64,
}

impl CoefficientLaw {
    fn validate(&self, name: &str) -> Result<()> {
        match self {
            CoefficientLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo <= hi) {
                    return Err(Error::Config(format!(
                        "{name}: uniform law needs 0 <= lo <= hi, got [{lo}, {hi}]"
                    )));
                }
            }
            CoefficientLaw::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Config(format!("{name}: discrete law has no atoms")));
                }
                if atoms.iter().any(|a| !(a.value.is_finite() && a.value >= 0.0 && a.p >= 0.0)) {
                    return Err(Error::Config(format!(
                        "{name}: atoms need finite nonnegative values and probabilities"
                    )));
                }
                check_prob_sum(name, atoms.iter().map(|a| a.p))?;
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CoefficientLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            CoefficientLaw::Discrete { atoms } => {
                let idx = pick(atoms.iter().map(|a| a.p), atoms.len(), rng);
                atoms[idx].value
            }
        }
    }

    fn is_continuous(&self) -> bool {
        matches!(self, CoefficientLaw::Uniform { lo, hi } if hi > lo)
    }

    /// `E[X^θ log^k X; X > 0]`.
    fn moment(&self, theta: f64, order: u32) -> f64 {
        match self {
            CoefficientLaw::Uniform { lo, hi } => {
                if hi == lo {
                    return power_log(*lo, theta, order);
                }
                (uniform_primitive(*hi, theta, order) - uniform_primitive(*lo, theta, order))
                    / (hi - lo)
            }
            CoefficientLaw::Discrete { atoms } => atoms
                .iter()
                .map(|a| a.p * power_log(a.value, theta, order))
                .sum(),
        }
    }
}

/// `x^θ log^k x` with the ghost convention `0 ↦ 0`.
fn power_log(x: f64, theta: f64, order: u32) -> f64 {
    if x > 0.0 {
        x.powf(theta) * x.ln().powi(order as i32)
    } else {
        0.0
    }
}

/// `∫₀^x y^θ log^k y dy` for `k ≤ 2`.
fn uniform_primitive(x: f64, theta: f64, order: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s = theta + 1.0;
    let l = x.ln();
    let xs = x.powf(s);
    match order {
        0 => xs / s,
        1 => xs * (l / s - 1.0 / (s * s)),
        _ => xs * (l * l / s - 2.0 * l / (s * s) + 2.0 / (s * s * s)),
    }
}

/// One atom of a user-supplied table model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableAtom {
    pub p: f64,
    pub w: Vec<f64>,
}

/// Model presets as they appear in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `(|sin U|, |cos U|)` with `U` uniform on `[0, 2π)`.
    Kac {},
    /// Two deterministic weights `(a, a)`.
    DeterministicPair { a: f64 },
    /// `(U^a, (1-U)^a)` with `U` uniform on `(0, 1)`.
    PowerUniformSplit { a: f64 },
    /// Random-trade wealth exchange: `(εp₁ + (1-ε)q₂, εq₁ + (1-ε)p₂)` with a
    /// fair coin `ε`.
    Econophysics {
        p1: CoefficientLaw,
        q1: CoefficientLaw,
        p2: CoefficientLaw,
        q2: CoefficientLaw,
    },
    /// Finite mixture of fixed weight vectors.
    Table {
        atoms: Vec<TableAtom>,
        #[serde(default)]
        nonlattice: Option<bool>,
    },
}

/// Declared status of the non-lattice condition; it is never computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NonLattice {
    Yes,
    No,
    Unknown,
}

/// How a spectral moment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Quadrature,
    MonteCarlo,
}

/// A validated weight model. Immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    spec: ModelSpec,
    nonlattice: NonLattice,
    max_children: Option<usize>,
}

impl WeightModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let (nonlattice, max_children) = match &spec {
            ModelSpec::Kac {} => (NonLattice::Yes, Some(2)),
            ModelSpec::DeterministicPair { a } => {
                positive_param("deterministic_pair.a", *a)?;
                (NonLattice::No, Some(2))
            }
            ModelSpec::PowerUniformSplit { a } => {
                positive_param("power_uniform_split.a", *a)?;
                (NonLattice::Yes, Some(2))
            }
            ModelSpec::Econophysics { p1, q1, p2, q2 } => {
                for (name, law) in [("p1", p1), ("q1", q1), ("p2", p2), ("q2", q2)] {
                    law.validate(name)?;
                }
                let continuous = [p1, q1, p2, q2].iter().any(|l| l.is_continuous());
                let flag = if continuous { NonLattice::Yes } else { NonLattice::Unknown };
                (flag, Some(2))
            }
            ModelSpec::Table { atoms, nonlattice } => {
                if atoms.is_empty() {
                    return Err(Error::Config("table model has no atoms".into()));
                }
                for atom in atoms {
                    if !(atom.p >= 0.0) || atom.w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                        return Err(Error::Config(
                            "table atoms need p >= 0 and finite nonnegative weights".into(),
                        ));
                    }
                }
                check_prob_sum("table", atoms.iter().map(|a| a.p))?;
                let flag = match nonlattice {
                    Some(true) => NonLattice::Yes,
                    Some(false) => NonLattice::No,
                    None => NonLattice::Unknown,
                };
                (flag, atoms.iter().map(|a| a.w.len()).max())
            }
        };
        Ok(Self { spec, nonlattice, max_children })
    }

    pub fn kac() -> Self {
        Self::new(ModelSpec::Kac {}).expect("valid preset")
    }

    pub fn deterministic_pair(a: f64) -> Result<Self> {
        Self::new(ModelSpec::DeterministicPair { a })
    }

    pub fn power_uniform_split(a: f64) -> Result<Self> {
        Self::new(ModelSpec::PowerUniformSplit { a })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        match self.spec {
            ModelSpec::Kac {} => "kac",
            ModelSpec::DeterministicPair { .. } => "deterministic_pair",
            ModelSpec::PowerUniformSplit { .. } => "power_uniform_split",
            ModelSpec::Econophysics { .. } => "econophysics",
            ModelSpec::Table { .. } => "table",
        }
    }

    pub fn nonlattice_declared(&self) -> NonLattice {
        self.nonlattice
    }

    pub fn max_children(&self) -> Option<usize> {
        self.max_children
    }

    /// Draw one weight vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector {
        let mut out = Vec::with_capacity(self.max_children.unwrap_or(2));
        self.sample_into(rng, &mut out);
        WeightVector(out)
    }

    /// Append the positive weights of one draw to `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match &self.spec {
            ModelSpec::Kac {} => {
                let u = 2.0 * PI * rng.gen::<f64>();
                push_positive(out, u.sin().abs());
                push_positive(out, u.cos().abs());
            }
            ModelSpec::DeterministicPair { a } => {
                out.push(*a);
                out.push(*a);
            }
            ModelSpec::PowerUniformSplit { a } => {
                let u: f64 = Open01.sample(rng);
                let [w1, w2] = power_split(*a, u);
                push_positive(out, w1);
                push_positive(out, w2);
            }
            ModelSpec::Econophysics { p1, q1, p2, q2 } => {
                let (first, second) = if rng.gen::<bool>() { (p1, q1) } else { (q2, p2) };
                push_positive(out, first.sample(rng));
                push_positive(out, second.sample(rng));
            }
            ModelSpec::Table { atoms, .. } => {
                let idx = pick(atoms.iter().map(|a| a.p), atoms.len(), rng);
                out.extend(atoms[idx].w.iter().copied().filter(|&w| w > 0.0));
            }
        }
    }

    /// Append `log A_j` for the positive weights of one draw. Consumes the
    /// random stream exactly like [`sample_into`](Self::sample_into).
    pub fn sample_log_weights_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match &self.spec {
            ModelSpec::DeterministicPair { a } => {
                let l = a.ln();
                out.push(l);
                out.push(l);
            }
            ModelSpec::PowerUniformSplit { a } => {
                let u: f64 = Open01.sample(rng);
                let (l1, l2) = (a * u.ln(), a * (-u).ln_1p());
                if l1.is_finite() {
                    out.push(l1);
                }
                if l2.is_finite() {
                    out.push(l2);
                }
            }
            _ => {
                let start = out.len();
                self.sample_into(rng, out);
                for w in &mut out[start..] {
                    *w = w.ln();
                }
            }
        }
    }

    /// `E[Σ_j A_j^θ log^k A_j]` for `k ∈ {0, 1, 2}` from the model's closed
    /// form or quadrature. Every preset has one.
    pub fn spectral_moment(&self, theta: f64, order: u32) -> Option<(f64, Method)> {
        if order > 2 || theta.is_nan() || theta < 0.0 {
            return None;
        }
        match &self.spec {
            ModelSpec::Kac {} => {
                // |sin U| and |cos U| share the law of sin V, V uniform on (0, π/2)
                let v = quadrature::integrate(
                    |u| power_log(u.sin(), theta, order),
                    0.0,
                    FRAC_PI_2,
                    QUAD_TOL,
                );
                Some((4.0 / PI * v, Method::Quadrature))
            }
            ModelSpec::DeterministicPair { a } => {
                Some((2.0 * power_log(*a, theta, order), Method::Analytic))
            }
            ModelSpec::PowerUniformSplit { a } => {
                // 2∫₀¹ u^{aθ}(a log u)^k du = 2 (-a)^k k! / (aθ+1)^{k+1}
                let s = a * theta + 1.0;
                let k = order as i32;
                let fact = [1.0, 1.0, 2.0][order as usize];
                Some((2.0 * (-a).powi(k) * fact / s.powi(k + 1), Method::Analytic))
            }
            ModelSpec::Econophysics { p1, q1, p2, q2 } => {
                let total: f64 = [p1, q1, p2, q2].iter().map(|l| l.moment(theta, order)).sum();
                Some((0.5 * total, Method::Analytic))
            }
            ModelSpec::Table { atoms, .. } => {
                let v = atoms
                    .iter()
                    .map(|at| at.p * at.w.iter().map(|&w| power_log(w, theta, order)).sum::<f64>())
                    .sum();
                Some((v, Method::Analytic))
            }
        }
    }

    /// `Φ(θ) = E[Σ A_j^θ] - 1` when the model has a closed form or quadrature.
    pub fn analytic_phi(&self, theta: f64) -> Option<f64> {
        self.spectral_moment(theta, 0).map(|(m, _)| m - 1.0)
    }
}

/// `(U^a, (1-U)^a)` for a given uniform draw.
pub fn power_split(a: f64, u: f64) -> [f64; 2] {
    [u.powf(a), (1.0 - u).powf(a)]
}

fn push_positive(out: &mut Vec<f64>, w: f64) {
    if w > 0.0 {
        out.push(w);
    }
}

fn positive_param(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_prob_sum<I: Iterator<Item = f64>>(name: &str, probs: I) -> Result<()> {
    let total: f64 = probs.sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::Config(format!(
            "{name}: probabilities sum to {total}, expected 1 within {PROB_SUM_TOL:e}"
        )));
    }
    Ok(())
}

/// Inverse-CDF pick among `len` outcomes. A single outcome consumes no
/// randomness.
fn pick<R: Rng + ?Sized, I: Iterator<Item = f64>>(probs: I, len: usize, rng: &mut R) -> usize {
    if len == 1 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    len - 1
}

/// The named preset models.
pub fn builtin_models() -> Vec<WeightModel> {
    let unit = || CoefficientLaw::Uniform { lo: 0.0, hi: 1.0 };
    let specs = vec![
        ModelSpec::Kac {},
        ModelSpec::DeterministicPair { a: 0.5 },
        ModelSpec::PowerUniformSplit { a: 2.0 },
        ModelSpec::Econophysics { p1: unit(), q1: unit(), p2: unit(), q2: unit() },
        ModelSpec::Table {
            atoms: vec![
                TableAtom { p: 0.5, w: vec![0.3, 0.7] },
                TableAtom { p: 0.5, w: vec![0.6, 0.2, 0.2] },
            ],
            nonlattice: None,
        },
    ];
    specs
        .into_iter()
        .map(|s| WeightModel::new(s).expect("valid preset"))
        .collect()
}
