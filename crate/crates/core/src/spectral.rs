//! The spectral function `Φ(θ) = E[Σ A_j^θ] - 1`, its slope function
//! `F(θ) = Φ(θ)/θ`, the minimizer `ϑ` of `F` and the scaling regimes it
//! governs.
//!
//! `ϑ` is located as the root of `D(θ) = θΦ'(θ) - Φ(θ)`, which is
//! increasing (`D' = θΦ''`) and vanishes exactly where `F' = 0`.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{mean_se, Estimate};
use crate::weights::{Method, NonLattice, WeightModel};

pub const DEFAULT_BRACKET: (f64, f64) = (0.05, 4.0);
pub const DEFAULT_TOL: f64 = 1e-10;
const BRACKET_EXPANSIONS: u32 = 3;
const DIVERGENCE_SE: f64 = 5.0;

/// A fixed Monte Carlo sample of weight vectors, stored as `log A_j`.
/// Evaluating every θ on the same draws keeps `θ ↦ Φ̂(θ)` smooth.
#[derive(Debug, Clone)]
pub struct WeightSample {
    logs: Vec<f64>,
    offsets: Vec<usize>,
}

impl WeightSample {
    pub fn draw<R: Rng + ?Sized>(model: &WeightModel, draws: usize, rng: &mut R) -> Self {
        let mut logs = Vec::with_capacity(2 * draws);
        let mut offsets = Vec::with_capacity(draws + 1);
        offsets.push(0);
        for _ in 0..draws {
            model.sample_log_weights_into(rng, &mut logs);
            offsets.push(logs.len());
        }
        Self { logs, offsets }
    }

    pub fn draws(&self) -> usize {
        self.offsets.len() - 1
    }

    fn per_draw<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        self.offsets
            .windows(2)
            .map(|w| f(&self.logs[w[0]..w[1]]))
            .collect()
    }

    /// Per-draw values of `Σ_j A_j^θ log^k A_j`.
    pub fn moment_terms(&self, theta: f64, order: u32) -> Vec<f64> {
        self.per_draw(|ls| {
            ls.iter()
                .map(|&l| (theta * l).exp() * l.powi(order as i32))
                .sum()
        })
    }

    /// Per-draw values of `θ Σ A^θ log A - Σ A^θ + 1`, whose mean is `D(θ)`.
    fn d_terms(&self, theta: f64) -> Vec<f64> {
        self.per_draw(|ls| {
            1.0 + ls
                .iter()
                .map(|&l| (theta * l).exp() * (theta * l - 1.0))
                .sum::<f64>()
        })
    }
}

/// Where spectral moments come from.
#[derive(Debug, Clone)]
pub enum SpectralSource {
    /// Closed form or quadrature supplied by the model.
    Exact(WeightModel),
    /// Common-random-number Monte Carlo.
    Sampled(Arc<WeightSample>),
}

impl SpectralSource {
    pub fn exact(model: &WeightModel) -> Result<Self> {
        if model.spectral_moment(1.0, 0).is_none() {
            return Err(Error::Precondition(format!(
                "model {} has no closed-form spectral moments",
                model.name()
            )));
        }
        Ok(Self::Exact(model.clone()))
    }

    pub fn monte_carlo<R: Rng + ?Sized>(model: &WeightModel, draws: usize, rng: &mut R) -> Self {
        Self::Sampled(Arc::new(WeightSample::draw(model, draws, rng)))
    }

    pub fn method(&self) -> Method {
        match self {
            Self::Exact(m) => m.spectral_moment(1.0, 0).map(|x| x.1).unwrap_or(Method::Analytic),
            Self::Sampled(_) => Method::MonteCarlo,
        }
    }

    /// `E[Σ A_j^θ log^k A_j]`.
    pub fn moment(&self, theta: f64, order: u32) -> Estimate {
        match self {
            Self::Exact(m) => Estimate::exact(
                m.spectral_moment(theta, order).map(|x| x.0).unwrap_or(f64::NAN),
            ),
            Self::Sampled(s) => mean_se(&s.moment_terms(theta, order)),
        }
    }

    pub fn phi(&self, theta: f64) -> Estimate {
        let m = self.moment(theta, 0);
        Estimate { value: m.value - 1.0, ..m }
    }

    /// `D(θ) = θΦ'(θ) - Φ(θ)`.
    pub fn d(&self, theta: f64) -> Estimate {
        match self {
            Self::Exact(_) => {
                let p = self.phi(theta).value;
                let dp = self.moment(theta, 1).value;
                Estimate::exact(theta * dp - p)
            }
            Self::Sampled(s) => mean_se(&s.d_terms(theta)),
        }
    }
}

/// How `Φ` should be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    /// The model's closed form or quadrature.
    Auto,
    /// Plain Monte Carlo over the given number of draws.
    MonteCarlo { draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue {
    pub theta: f64,
    pub value: f64,
    pub se: f64,
    pub method: Method,
}

/// Evaluate `Φ(θ)`.
///
/// The Monte Carlo path compares the estimate from the first half of the
/// draws with the full estimate and reports suspected divergence when they
/// differ by more than 5 standard errors.
pub fn phi<R: Rng + ?Sized>(
    model: &WeightModel,
    theta: f64,
    eval: Evaluation,
    rng: &mut R,
) -> Result<PhiValue> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("theta = {theta} must be >= 0")));
    }
    match eval {
        Evaluation::Auto => {
            let (m, method) = model.spectral_moment(theta, 0).ok_or_else(|| {
                Error::Precondition(format!("model {} has no closed form", model.name()))
            })?;
            Ok(PhiValue { theta, value: m - 1.0, se: 0.0, method })
        }
        Evaluation::MonteCarlo { draws } => {
            if draws < 2 {
                return Err(Error::Domain("Monte Carlo evaluation needs at least 2 draws".into()));
            }
            let sample = WeightSample::draw(model, draws, rng);
            let terms = sample.moment_terms(theta, 0);
            let full = mean_se(&terms);
            let half = mean_se(&terms[..draws / 2]);
            if !full.value.is_finite() || (full.value - half.value).abs() > DIVERGENCE_SE * full.se {
                return Err(Error::DivergenceSuspected {
                    theta,
                    half: half.value - 1.0,
                    full: full.value - 1.0,
                    se: full.se,
                });
            }
            Ok(PhiValue {
                theta,
                value: full.value - 1.0,
                se: full.se,
                method: Method::MonteCarlo,
            })
        }
    }
}

/// The located minimizer of `F` and the quantities evaluated there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Minimizer {
    pub theta_star: f64,
    /// Standard error of `ϑ` (zero for exact sources).
    pub theta_se: f64,
    pub phi: f64,
    /// `E[Σ A^ϑ log A]`.
    pub phi_prime: f64,
    /// `E[Σ A^ϑ log² A]`, the second-moment screen.
    pub phi_log2: f64,
    /// `F(ϑ) = Φ(ϑ)/ϑ`.
    pub f: f64,
    /// `D(ϑ)`, the residual of the defining identity.
    pub d_residual: f64,
    pub d_se: f64,
}

/// Evaluators for `Φ`, `Φ'`, `E[ΣA^θ log²A]`, `F`, plus the minimizer once
/// located. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    source: SpectralSource,
    minimizer: Option<Minimizer>,
}

impl SpectralProfile {
    /// A profile without a located minimizer.
    pub fn new(source: SpectralSource) -> Self {
        Self { source, minimizer: None }
    }

    pub fn source(&self) -> &SpectralSource {
        &self.source
    }

    pub fn method(&self) -> Method {
        self.source.method()
    }

    pub fn phi(&self, theta: f64) -> Estimate {
        self.source.phi(theta)
    }

    pub fn phi_prime(&self, theta: f64) -> Estimate {
        self.source.moment(theta, 1)
    }

    pub fn phi_log2(&self, theta: f64) -> Estimate {
        self.source.moment(theta, 2)
    }

    pub fn f(&self, theta: f64) -> Estimate {
        let p = self.phi(theta);
        Estimate { value: p.value / theta, se: p.se / theta, n: p.n }
    }

    pub fn minimizer(&self) -> Result<&Minimizer> {
        self.minimizer
            .as_ref()
            .ok_or_else(|| Error::Precondition("spectral profile has no located minimizer".into()))
    }

    pub fn theta_star(&self) -> Result<f64> {
        self.minimizer().map(|m| m.theta_star)
    }

    /// Skeleton variance `E[Σ_{u∈I_δ} V(u)² e^{-V(u)}] = δ ϑ² E[Σ A^ϑ log² A]`.
    ///
    /// Follows from the many-to-one formula over a Poisson(δ) number of
    /// generations once `ϑΦ'(ϑ) = Φ(ϑ)`.
    pub fn sigma2(&self, delta: f64) -> Result<f64> {
        let m = self.minimizer()?;
        Ok(delta * m.theta_star * m.theta_star * m.phi_log2)
    }
}

/// Locate `ϑ` as the root of `D(θ) = θΦ'(θ) - Φ(θ)`.
///
/// The bracket is widened geometrically (at most three times) until `D`
/// changes sign. For Monte Carlo sources the sign change must be
/// significant at both ends and `ϑ` is reported with a delta-method
/// standard error `se(D̂(ϑ)) / (ϑ E[ΣA^ϑ log²A])`.
pub fn find_theta_star(source: SpectralSource, bracket: (f64, f64), tol: f64) -> Result<SpectralProfile> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("invalid bracket ({lo}, {hi})")));
    }
    let d = |t: f64| source.d(t);
    let (mut dlo, mut dhi) = (d(lo), d(hi));
    let mut expansions = 0;
    while dlo.value.signum() == dhi.value.signum() && expansions < BRACKET_EXPANSIONS {
        lo *= 0.5;
        hi *= 2.0;
        dlo = d(lo);
        dhi = d(hi);
        expansions += 1;
    }
    if !(dlo.value.is_finite() && dhi.value.is_finite()) || dlo.value.signum() == dhi.value.signum() {
        return Err(Error::NotBracketed { lo, hi, d_lo: dlo.value, d_hi: dhi.value });
    }
    if matches!(source, SpectralSource::Sampled(_))
        && (dlo.value.abs() < 3.0 * dlo.se || dhi.value.abs() < 3.0 * dhi.se)
    {
        return Err(Error::BudgetInsufficient(format!(
            "sign of D at the bracket ends is not resolved: D({lo}) = {:.3e} ± {:.1e}, D({hi}) = {:.3e} ± {:.1e}",
            dlo.value, dlo.se, dhi.value, dhi.se
        )));
    }
    let root = brent(|t| d(t).value, lo, hi, dlo.value, dhi.value);
    let at = d(root);
    let phi_log2 = source.moment(root, 2).value;
    let theta_se = if at.se > 0.0 { at.se / (root * phi_log2) } else { 0.0 };
    if at.value.abs() > tol.max(4.0 * at.se) {
        return Err(Error::BudgetInsufficient(format!(
            "|D(ϑ)| = {:.3e} exceeds tolerance {tol:.1e}",
            at.value.abs()
        )));
    }
    if theta_se > 0.1 * root {
        return Err(Error::BudgetInsufficient(format!(
            "Monte Carlo noise too large near the root: ϑ = {root:.4} ± {theta_se:.3}"
        )));
    }
    let phi = source.phi(root).value;
    let minimizer = Minimizer {
        theta_star: root,
        theta_se,
        phi,
        phi_prime: source.moment(root, 1).value,
        phi_log2,
        f: phi / root,
        d_residual: at.value,
        d_se: at.se,
    };
    Ok(SpectralProfile { source, minimizer: Some(minimizer) })
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
pub fn brent<F: Fn(f64) -> f64>(f: F, a0: f64, b0: f64, fa0: f64, fb0: f64) -> f64 {
    let (mut a, mut b, mut fa, mut fb) = (a0, b0, fa0, fb0);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when a == c
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}

/// `m(t, θ) = E[Σ_{u∈I_t} e^{-θS(u)}] = e^{tΦ(θ)}`.
pub fn m_t_theta(profile: &SpectralProfile, t: f64, theta: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t = {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok((t * profile.phi(theta).value).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `γ < ϑ`: rescale by `e^{-F(γ)t}`.
    Subcritical,
    /// `γ = ϑ`: rescale by `t^{1/(2ϑ)} e^{-F(ϑ)t}`.
    Boundary,
    /// `γ > ϑ`: rescale by `t^{3/(2ϑ)} e^{-F(ϑ)t}`.
    BeyondBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub gamma: f64,
    pub theta_star: f64,
    pub regime: Regime,
    /// Rescaler `t^p e^{-rt}`.
    pub p: f64,
    pub r: f64,
    pub tie_tol: f64,
}

/// Scaling exponents `(p, r)` for a given regime.
pub fn regime_exponents(profile: &SpectralProfile, regime: Regime, gamma: f64) -> Result<(f64, f64)> {
    let m = profile.minimizer()?;
    Ok(match regime {
        Regime::Subcritical => (0.0, profile.f(gamma).value),
        Regime::Boundary => (1.0 / (2.0 * m.theta_star), m.f),
        Regime::BeyondBoundary => (3.0 / (2.0 * m.theta_star), m.f),
    })
}

/// Classify the regime of `γ` relative to `ϑ`. `tie_tol` defaults to 1e-6
/// for exact profiles and to three standard errors of `ϑ` otherwise.
pub fn classify_regime(profile: &SpectralProfile, gamma: f64, tie_tol: Option<f64>) -> Result<RegimeReport> {
    if !(gamma > 0.0 && gamma <= 2.0) {
        return Err(Error::Domain(format!("gamma = {gamma} outside (0, 2]")));
    }
    let m = profile.minimizer()?;
    let tie_tol = tie_tol.unwrap_or(if m.theta_se > 0.0 { 3.0 * m.theta_se } else { 1e-6 });
    let gap = gamma - m.theta_star;
    let regime = if gap.abs() <= tie_tol {
        Regime::Boundary
    } else if gap < 0.0 {
        Regime::Subcritical
    } else {
        Regime::BeyondBoundary
    };
    let (p, r) = regime_exponents(profile, regime, gamma)?;
    Ok(RegimeReport { gamma, theta_star: m.theta_star, regime, p, r, tie_tol })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexCurve {
    /// `(t, m(t))`, `None` where the denominator is not positive.
    pub points: Vec<(f64, Option<f64>)>,
    /// Smallest positive root of `m(t) = 1` found on the grid.
    pub alpha: Option<f64>,
}

/// The characteristic index function
/// `m(t) = (Φ(t) + 1) / ((t/ϑ)Φ(ϑ) + 1)` of the fixed-point weights
/// `U^{F(ϑ)} A_j`, and its smallest positive root.
///
/// Since `m` is convex with `m(ϑ) = 1` and `m'(ϑ) = 0`, roots are often
/// tangential; local minima of `m` between grid points are refined by
/// golden-section search and accepted when `|m - 1| ≤ 1e-8`.
pub fn characteristic_index_curve(profile: &SpectralProfile, t_grid: &[f64]) -> Result<IndexCurve> {
    let min = profile.minimizer()?;
    let m = |t: f64| -> Option<f64> {
        let denom = t / min.theta_star * min.phi + 1.0;
        (denom > 0.0).then(|| (profile.phi(t).value + 1.0) / denom)
    };
    let points: Vec<(f64, Option<f64>)> = t_grid.iter().map(|&t| (t, m(t))).collect();
    let mut roots = Vec::new();
    for (i, &(t, v)) in points.iter().enumerate() {
        let Some(v) = v else { continue };
        if t > 0.0 && (v - 1.0).abs() <= 1e-9 {
            roots.push(t);
        }
        if let Some(&(t2, Some(v2))) = points.get(i + 1) {
            if (v - 1.0) * (v2 - 1.0) < 0.0 {
                roots.push(brent(|x| m(x).unwrap_or(f64::NAN) - 1.0, t, t2, v - 1.0, v2 - 1.0));
            }
        }
        if i > 0 {
            if let (Some(&(t0, Some(v0))), Some(&(t2, Some(v2)))) = (points.get(i - 1), points.get(i + 1)) {
                if v <= v0 && v <= v2 {
                    let (tm, vm) = golden_min(|x| m(x).unwrap_or(f64::INFINITY), t0, t2);
                    if tm > 0.0 && (vm - 1.0).abs() <= 1e-8 {
                        roots.push(tm);
                    }
                }
            }
        }
    }
    let alpha = roots.into_iter().filter(|r| *r > 0.0).reduce(f64::min);
    Ok(IndexCurve { points, alpha })
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 * (a.abs() + b.abs()).max(1e-12) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// A screened moment with its finiteness verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Screen {
    pub estimate: Estimate,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub theta_star: f64,
    /// Declared, never computed.
    pub nonlattice: NonLattice,
    /// `E[Σ A^ϑ log² A]`.
    pub second_moment: Screen,
    /// `E[X log₊² X]` with `X = Σ A^ϑ`.
    pub x_log2_x: Screen,
    /// `E[X̃ log₊ X̃]` with `X̃ = Σ A^ϑ log₊ A`.
    pub xt_log_xt: Screen,
    /// `E[N]`.
    pub expected_offspring: Estimate,
    pub non_explosion: bool,
    pub non_explosion_reason: String,
}

fn screen(terms: &[f64]) -> Screen {
    let full = mean_se(terms);
    let half = mean_se(&terms[..terms.len() / 2]);
    let finite = full.value.is_finite()
        && full.se.is_finite()
        && (full.value - half.value).abs() <= DIVERGENCE_SE * full.se.max(f64::MIN_POSITIVE);
    Screen { estimate: full, finite }
}

/// Advisory Monte Carlo screens of the moment conditions at `ϑ`.
pub fn screen_assumptions<R: Rng + ?Sized>(
    model: &WeightModel,
    profile: &SpectralProfile,
    draws: usize,
    rng: &mut R,
) -> Result<AssumptionReport> {
    let theta = profile.theta_star()?;
    if draws < 2 {
        return Err(Error::Domain("screening needs at least 2 draws".into()));
    }
    let sample = WeightSample::draw(model, draws, rng);
    let log2 = sample.moment_terms(theta, 2);
    let second_moment = match model.spectral_moment(theta, 2) {
        Some((v, _)) => Screen { estimate: Estimate::exact(v), finite: v.is_finite() },
        None => screen(&log2),
    };
    let x_terms: Vec<f64> = sample
        .moment_terms(theta, 0)
        .into_iter()
        .map(|x| x * x.ln().max(0.0).powi(2))
        .collect();
    let xt_terms: Vec<f64> = sample
        .per_draw(|ls| ls.iter().map(|&l| (theta * l).exp() * l.max(0.0)).sum())
        .into_iter()
        .map(|x| if x > 0.0 { x * x.ln().max(0.0) } else { 0.0 })
        .collect();
    let counts: Vec<f64> = sample.per_draw(|ls| ls.len() as f64);
    let expected_offspring = match model.spectral_moment(0.0, 0) {
        Some((v, _)) => Estimate::exact(v),
        None => mean_se(&counts),
    };
    let (non_explosion, non_explosion_reason) = match model.max_children() {
        Some(n) => (true, format!("N <= {n} declared, so E[N] < ∞")),
        None if expected_offspring.value.is_finite() => (true, "E[N] < ∞".to_string()),
        None => (false, "E[N] not shown finite".to_string()),
    };
    Ok(AssumptionReport {
        theta_star: theta,
        nonlattice: model.nonlattice_declared(),
        second_moment,
        x_log2_x: screen(&x_terms),
        xt_log_xt: screen(&xt_terms),
        expected_offspring,
        non_explosion,
        non_explosion_reason,
    })
}
