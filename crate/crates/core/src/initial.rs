//! Initial conditions `μ₀` with a declared index `γ ∈ (0, 2]`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::distributions::{Distribution, Open01};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{Error, Result};
use crate::stats::{mean_se, Estimate};

/// Initial-law block of a run configuration. `gamma` defaults to the
/// natural index of the preset when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    PointMass {
        c: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    CenteredUniform {
        half_width: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Gaussian {
        #[serde(default)]
        mean: f64,
        sd: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    SymmetricStable {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    PointMass { c: f64 },
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
    /// Characteristic function `exp(-|scale·ξ|^α)`.
    SymmetricStable { alpha: f64, scale: f64 },
}

/// A validated initial law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialLaw {
    pub kind: InitialKind,
    pub gamma: f64,
    pub centered: bool,
}

impl InitialLaw {
    pub fn new(kind: InitialKind, gamma: Option<f64>) -> Result<Self> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite")))
            }
        };
        let centered = match kind {
            InitialKind::PointMass { c } => {
                finite("c", c)?;
                c == 0.0
            }
            InitialKind::Uniform { lo, hi } => {
                finite("lo", lo)?;
                finite("hi", hi)?;
                if lo > hi {
                    return Err(Error::Config(format!("uniform law needs lo <= hi, got [{lo}, {hi}]")));
                }
                lo + hi == 0.0
            }
            InitialKind::Gaussian { mean, sd } => {
                finite("mean", mean)?;
                if !(sd.is_finite() && sd > 0.0) {
                    return Err(Error::Config(format!("gaussian sd must be > 0, got {sd}")));
                }
                mean == 0.0
            }
            InitialKind::SymmetricStable { alpha, scale } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(Error::Config(format!("stable alpha must lie in (0, 2], got {alpha}")));
                }
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::Config(format!("stable scale must be > 0, got {scale}")));
                }
                true
            }
        };
        let gamma = gamma.unwrap_or(match kind {
            InitialKind::SymmetricStable { alpha, .. } => alpha,
            _ if centered => 2.0,
            _ => 1.0,
        });
        if !(gamma > 0.0 && gamma <= 2.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 2], got {gamma}")));
        }
        if gamma > 1.0 && !centered {
            return Err(Error::Config(format!(
                "gamma = {gamma} > 1 requires a centered initial law"
            )));
        }
        Ok(Self { kind, gamma, centered })
    }

    pub fn from_spec(spec: &InitialSpec) -> Result<Self> {
        match *spec {
            InitialSpec::PointMass { c, gamma } => Self::new(InitialKind::PointMass { c }, gamma),
            InitialSpec::Uniform { lo, hi, gamma } => Self::new(InitialKind::Uniform { lo, hi }, gamma),
            InitialSpec::CenteredUniform { half_width, gamma } => {
                if !(half_width >= 0.0) {
                    return Err(Error::Config(format!("half_width must be >= 0, got {half_width}")));
                }
                Self::new(InitialKind::Uniform { lo: -half_width, hi: half_width }, gamma)
            }
            InitialSpec::Gaussian { mean, sd, gamma } => Self::new(InitialKind::Gaussian { mean, sd }, gamma),
            InitialSpec::SymmetricStable { alpha, scale, gamma } => {
                Self::new(InitialKind::SymmetricStable { alpha, scale }, gamma)
            }
        }
    }

    pub fn point_mass(c: f64) -> Self {
        Self::new(InitialKind::PointMass { c }, Some(1.0)).expect("valid point mass")
    }

    pub fn centered_uniform(half_width: f64) -> Self {
        Self::new(InitialKind::Uniform { lo: -half_width, hi: half_width }, Some(2.0))
            .expect("valid centered uniform")
    }

    pub fn symmetric_stable(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(InitialKind::SymmetricStable { alpha, scale }, None)
    }

    /// One i.i.d. draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            InitialKind::PointMass { c } => c,
            InitialKind::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            InitialKind::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            InitialKind::SymmetricStable { alpha, scale } => scale * symmetric_stable(alpha, rng),
        }
    }

    /// Closed-form `E[X]` when it exists.
    pub fn mean(&self) -> Option<f64> {
        match self.kind {
            InitialKind::PointMass { c } => Some(c),
            InitialKind::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            InitialKind::Gaussian { mean, .. } => Some(mean),
            InitialKind::SymmetricStable { alpha, .. } => (alpha > 1.0).then_some(0.0),
        }
    }

    /// Closed-form `E|X|^γ` when it is finite and known.
    pub fn abs_moment(&self, gamma: f64) -> Option<f64> {
        match self.kind {
            InitialKind::PointMass { c } => Some(c.abs().powf(gamma)),
            InitialKind::Uniform { lo, hi } => {
                if lo == hi {
                    return Some(lo.abs().powf(gamma));
                }
                let prim = |x: f64| x.signum() * x.abs().powf(gamma + 1.0) / (gamma + 1.0);
                Some((prim(hi) - prim(lo)) / (hi - lo))
            }
            InitialKind::Gaussian { mean, sd } => {
                (mean == 0.0).then(|| gaussian_abs_moment(sd, gamma))
            }
            InitialKind::SymmetricStable { alpha, scale } => {
                if alpha == 2.0 {
                    Some(gaussian_abs_moment(std::f64::consts::SQRT_2 * scale, gamma))
                } else if gamma < alpha {
                    Some(
                        scale.powf(gamma) * 2f64.powf(gamma) * gamma_fn((1.0 + gamma) / 2.0)
                            * gamma_fn(1.0 - gamma / alpha)
                            / (PI.sqrt() * gamma_fn(1.0 - gamma / 2.0)),
                    )
                } else {
                    None
                }
            }
        }
    }

    /// Analytic membership in the class of laws with finite absolute
    /// moment of order `γ`, centered when `γ > 1`.
    pub fn is_member(&self, gamma: f64) -> bool {
        let moment_finite = match self.kind {
            InitialKind::SymmetricStable { alpha, .. } => alpha == 2.0 || gamma < alpha,
            _ => true,
        };
        moment_finite && (gamma <= 1.0 || self.centered)
    }
}

fn gaussian_abs_moment(sd: f64, gamma: f64) -> f64 {
    sd.powf(gamma) * 2f64.powf(gamma / 2.0) * gamma_fn((gamma + 1.0) / 2.0) / PI.sqrt()
}

/// Exact symmetric α-stable draw with characteristic function
/// `exp(-|ξ|^α)`, from one uniform angle and one unit exponential.
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let angle = PI * u - FRAC_PI_2;
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return angle.tan();
    }
    (alpha * angle).sin() / angle.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * angle).cos() / w).powf((1.0 - alpha) / alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub gamma: f64,
    pub member: bool,
    pub analytic_moment: Option<f64>,
    pub mc_moment: Estimate,
}

/// Declared membership plus a Monte Carlo estimate of `E|X|^γ`.
pub fn check_membership<R: Rng + ?Sized>(
    law: &InitialLaw,
    gamma: f64,
    draws: usize,
    rng: &mut R,
) -> Result<MembershipReport> {
    if !(gamma > 0.0 && gamma <= 2.0) {
        return Err(Error::Domain(format!("gamma = {gamma} outside (0, 2]")));
    }
    let vals: Vec<f64> = (0..draws).map(|_| law.sample(rng).abs().powf(gamma)).collect();
    let member = law.is_member(gamma);
    Ok(MembershipReport {
        gamma,
        member,
        analytic_moment: if member { law.abs_moment(gamma) } else { None },
        mc_moment: mean_se(&vals),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{bootstrap_ci, empirical_cf};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn point_mass_is_constant() {
        let law = InitialLaw::point_mass(1.0);
        let mut r = rng(0);
        assert!((0..100).all(|_| law.sample(&mut r) == 1.0));
    }

    #[test]
    fn centered_uniform_range_and_mean() {
        let law = InitialLaw::centered_uniform(1.0);
        let mut r = rng(1);
        let v: Vec<f64> = (0..1_000_000).map(|_| law.sample(&mut r)).collect();
        assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert!(mean_se(&v).within(0.0, 4.0));
    }

    #[test]
    fn stable_cf_matches_closed_form() {
        let law = InitialLaw::symmetric_stable(0.8, 1.0).unwrap();
        let mut r = rng(2);
        let v: Vec<f64> = (0..100_000).map(|_| law.sample(&mut r)).collect();
        let mut boot = rng(3);
        for xi in [0.5, 1.0, 2.0] {
            let target = (-f64::powf(xi, 0.8)).exp();
            let (lo, hi) = bootstrap_ci(&v, 200, 0.99, &mut boot, |s| empirical_cf(s, xi).0);
            assert!(lo <= target && target <= hi, "ξ={xi}: [{lo}, {hi}] vs {target}");
        }
    }

    #[test]
    fn cauchy_branch() {
        let law = InitialLaw::symmetric_stable(1.0, 2.0).unwrap();
        let mut r = rng(4);
        let v: Vec<f64> = (0..50_000).map(|_| law.sample(&mut r)).collect();
        // Cauchy(0, 2) has quartiles ±2
        let q = crate::stats::quantile(&v, 0.75).unwrap();
        assert!((q - 2.0).abs() < 0.1, "{q}");
    }

    #[test]
    fn membership_examples() {
        let mut r = rng(5);
        let u = check_membership(&InitialLaw::centered_uniform(1.0), 2.0, 10_000, &mut r).unwrap();
        assert!(u.member);
        assert!((u.analytic_moment.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let s = InitialLaw::symmetric_stable(0.8, 1.0).unwrap();
        assert!(!check_membership(&s, 1.0, 100, &mut r).unwrap().member);
        let z = check_membership(&InitialLaw::point_mass(0.0), 0.7, 100, &mut r).unwrap();
        assert!(z.member && z.analytic_moment == Some(0.0) && z.mc_moment.value == 0.0);
        assert!(matches!(
            check_membership(&s, 2.5, 1, &mut r),
            Err(Error::Domain(_))
        ));
        assert!(!InitialLaw::point_mass(1.0).is_member(1.5));
    }

    #[test]
    fn monte_carlo_moments_match_closed_forms() {
        let laws = [
            (InitialLaw::point_mass(1.5), 1.0),
            (InitialLaw::centered_uniform(2.0), 2.0),
            (InitialLaw::new(InitialKind::Uniform { lo: -0.5, hi: 2.0 }, Some(1.0)).unwrap(), 0.7),
            (InitialLaw::new(InitialKind::Gaussian { mean: 0.0, sd: 1.3 }, None).unwrap(), 1.5),
            (InitialLaw::symmetric_stable(1.5, 1.0).unwrap(), 0.6),
            (InitialLaw::symmetric_stable(2.0, 0.5).unwrap(), 2.0),
        ];
        for (i, (law, gamma)) in laws.iter().enumerate() {
            let mut r = rng(40 + i as u64);
            let rep = check_membership(law, *gamma, 100_000, &mut r).unwrap();
            let exact = rep.analytic_moment.unwrap();
            assert!(rep.mc_moment.value.is_finite());
            assert!(rep.mc_moment.within(exact, 4.0), "{law:?}: {rep:?}");
            if law.centered {
                let v: Vec<f64> = (0..100_000).map(|_| law.sample(&mut r)).collect();
                assert!(mean_se(&v).within(0.0, 4.0));
            }
        }
    }

    #[test]
    fn gamma_above_one_requires_centering() {
        assert!(InitialLaw::new(InitialKind::PointMass { c: 1.0 }, Some(2.0)).is_err());
        assert!(InitialLaw::new(InitialKind::PointMass { c: 0.0 }, Some(2.0)).is_ok());
        let spec: InitialSpec =
            serde_json::from_str(r#"{"kind": "centered_uniform", "half_width": 1.0, "gamma": 2.0}"#).unwrap();
        let law = InitialLaw::from_spec(&spec).unwrap();
        assert_eq!(law.gamma, 2.0);
        assert!(law.centered);
        assert_eq!(InitialLaw::symmetric_stable(0.8, 1.0).unwrap().gamma, 0.8);
    }
}
