//! Scaling studies of `U_t`: rescaling, empirical characteristic functions
//! and consecutive-time convergence diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::brw::sample_mu_t;
use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::rng::SeedTree;
use crate::spectral::{classify_regime, regime_exponents, Regime, RegimeReport, SpectralProfile};
use crate::stats::{iqr, ks_two_sample, loglog_slope, mean_se, median_abs, quantile_sorted, Estimate, SlopeFit};
use crate::weights::WeightModel;

/// Rescaler `t^p e^{-rt}` applied to a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    pub p: f64,
    pub r: f64,
    pub factor: f64,
}

/// Independent samples of one law, tagged with their time and master seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    values: Vec<f64>,
    pub t: f64,
    pub scaling: Option<Scaling>,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, t: f64, seed: u64) -> Self {
        Self { values, t, scaling: None, seed }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Multiply every value by `t^p e^{-rt}`.
pub fn rescale(set: &SampleSet, p: f64, r: f64) -> Result<SampleSet> {
    if set.scaling.is_some() {
        return Err(Error::Precondition("sample set is already rescaled".into()));
    }
    if p != 0.0 && !(set.t > 0.0) {
        return Err(Error::Domain(format!("polynomial rescaling needs t > 0, got t = {}", set.t)));
    }
    let factor = scale_factor(set.t, p, r);
    Ok(SampleSet {
        values: set.values.iter().map(|v| v * factor).collect(),
        t: set.t,
        scaling: Some(Scaling { p, r, factor }),
        seed: set.seed,
    })
}

/// `t^p e^{-rt}`.
pub fn scale_factor(t: f64, p: f64, r: f64) -> f64 {
    let poly = if p == 0.0 { 1.0 } else { t.powf(p) };
    poly * (-r * t).exp()
}

/// Empirical characteristic function at one frequency with 95% percentile
/// bootstrap intervals for both parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfPoint {
    pub xi: f64,
    pub re: f64,
    pub im: f64,
    pub re_ci: (f64, f64),
    pub im_ci: (f64, f64),
}

pub const DEFAULT_BOOTSTRAP: usize = 500;

fn cf_sums(values: &[f64], xi: f64, idx: Option<&[usize]>) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    let mut add = |x: f64| {
        let (s, c) = (xi * x).sin_cos();
        re += c;
        im += s;
    };
    match idx {
        Some(idx) => idx.iter().for_each(|&i| add(values[i])),
        None => values.iter().for_each(|&x| add(x)),
    }
    let n = values.len() as f64;
    (re / n, im / n)
}

/// `φ̂(ξ) = (1/n) Σ exp(iξx_k)` over `xi_grid`. One set of bootstrap
/// resamples is shared by all frequencies.
pub fn empirical_cf_curve<R: Rng + ?Sized>(
    set: &SampleSet,
    xi_grid: &[f64],
    bootstrap: usize,
    rng: &mut R,
) -> Result<Vec<CfPoint>> {
    let values = set.values();
    if values.is_empty() {
        return Err(Error::Domain("empirical CF of an empty sample set".into()));
    }
    let points: Vec<(f64, f64)> = xi_grid.iter().map(|&xi| cf_sums(values, xi, None)).collect();
    let mut boot: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::with_capacity(bootstrap), Vec::with_capacity(bootstrap)); xi_grid.len()];
    let mut idx = vec![0usize; values.len()];
    for _ in 0..bootstrap {
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..values.len());
        }
        for (k, &xi) in xi_grid.iter().enumerate() {
            let (re, im) = cf_sums(values, xi, Some(&idx));
            boot[k].0.push(re);
            boot[k].1.push(im);
        }
    }
    let interval = |mut v: Vec<f64>, point: f64| {
        if v.is_empty() {
            return (point, point);
        }
        v.sort_by(f64::total_cmp);
        (quantile_sorted(&v, 0.025).min(point), quantile_sorted(&v, 0.975).max(point))
    };
    Ok(xi_grid
        .iter()
        .zip(points)
        .zip(boot)
        .map(|((&xi, (re, im)), (bre, bim))| CfPoint {
            xi,
            re,
            im,
            re_ci: interval(bre, re),
            im_ci: interval(bim, im),
        })
        .collect())
}

/// Settings of a scaling study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOptions {
    /// Strictly increasing observation times.
    pub t_grid: Vec<f64>,
    pub n_samples: usize,
    pub cap: usize,
    pub xi_grid: Vec<f64>,
    pub bootstrap: usize,
    /// Convergence threshold on the final consecutive KS distance.
    pub ks_tol: f64,
    /// Terminal IQR must be at least this fraction of the initial IQR.
    pub iqr_floor: f64,
    /// Force a regime instead of classifying `law.gamma`.
    pub regime_override: Option<Regime>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            t_grid: (1..=8).map(f64::from).collect(),
            n_samples: 10_000,
            cap: crate::brw::DEFAULT_CAP,
            xi_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            bootstrap: DEFAULT_BOOTSTRAP,
            ks_tol: 0.05,
            iqr_floor: 0.1,
            regime_override: None,
        }
    }
}

/// Diagnostics of the rescaled sample at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRow {
    pub t: f64,
    pub n: usize,
    pub factor: f64,
    /// KS distance to the rescaled set of the previous grid time.
    pub ks_prev: Option<f64>,
    pub ks_crit_1pct: Option<f64>,
    pub iqr: f64,
    pub median_abs: f64,
    /// Mean of the unscaled values.
    pub mean: Estimate,
    /// `e^{tΦ(1)} E[X]` when the initial law has a mean.
    pub mean_expected: Option<f64>,
    pub cf: Vec<CfPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub converged: bool,
    pub final_ks: f64,
    pub iqr: f64,
    pub initial_iqr: f64,
    pub trending_down: bool,
    pub non_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudyResult {
    pub regime: RegimeReport,
    pub rows: Vec<TimeRow>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
    /// Unscaled sample sets, one per grid time.
    #[serde(skip)]
    pub raw: Vec<SampleSet>,
    /// Rescaled sample sets, one per grid time.
    #[serde(skip)]
    pub scaled: Vec<SampleSet>,
}

/// Sample `U_t` afresh at every grid time, rescale with the regime's
/// `(p, r)` and compare consecutive times.
pub fn scaling_study(
    model: &WeightModel,
    law: &InitialLaw,
    profile: &SpectralProfile,
    opts: &StudyOptions,
    seeds: &SeedTree,
) -> Result<ScalingStudyResult> {
    if opts.t_grid.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    if opts.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be strictly increasing".into()));
    }
    if opts.n_samples == 0 {
        return Err(Error::Domain("n_samples must be >= 1".into()));
    }
    let mut regime = classify_regime(profile, law.gamma, None)?;
    if let Some(forced) = opts.regime_override {
        let (p, r) = regime_exponents(profile, forced, law.gamma)?;
        regime = RegimeReport { regime: forced, p, r, ..regime };
    }
    if regime.regime == Regime::BeyondBoundary && regime.theta_star >= 2.0 {
        return Err(Error::Precondition(format!(
            "beyond-boundary scaling needs theta* < 2, got {}",
            regime.theta_star
        )));
    }
    if regime.p != 0.0 && opts.t_grid[0] <= 0.0 {
        return Err(Error::Domain("polynomial rescaling needs a positive time grid".into()));
    }

    let mut warnings = Vec::new();
    let growth = profile.phi(0.0).value;
    for &t in &opts.t_grid {
        let expected = (t * growth).exp();
        if expected * 10.0 > opts.cap as f64 {
            warnings.push(format!(
                "t = {t}: expected population {expected:.3e} is within a factor 10 of the cap {}",
                opts.cap
            ));
        }
    }

    let study = seeds.child("scaling-study");
    let raw = opts
        .t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            sample_mu_t(model, law, t, opts.n_samples, &study.child_index(k as u64), opts.cap)
                .map(|s| SampleSet { seed: seeds.master(), ..s })
        })
        .collect::<Result<Vec<_>>>()?;
    let scaled = raw
        .iter()
        .map(|s| rescale(s, regime.p, regime.r))
        .collect::<Result<Vec<_>>>()?;

    let phi1 = profile.phi(1.0).value;
    let boot = seeds.child("cf-bootstrap");
    let rows = (0..raw.len())
        .into_par_iter()
        .map(|k| -> Result<TimeRow> {
            let set = &scaled[k];
            let ks = if k > 0 { Some(ks_two_sample(scaled[k - 1].values(), set.values())?) } else { None };
            let mut rng = boot.stream(k as u64);
            Ok(TimeRow {
                t: set.t,
                n: set.count(),
                factor: set.scaling.map_or(1.0, |s| s.factor),
                ks_prev: ks.map(|k| k.statistic),
                ks_crit_1pct: ks.map(|k| k.critical_1pct),
                iqr: iqr(set.values())?,
                median_abs: median_abs(set.values())?,
                mean: mean_se(raw[k].values()),
                mean_expected: law.mean().map(|m| (set.t * phi1).exp() * m),
                cf: empirical_cf_curve(set, &opts.xi_grid, opts.bootstrap, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let verdict = verdict(&rows, opts);
    if !verdict.non_degenerate {
        warnings.push(format!(
            "terminal IQR {:.3e} fell below {} of the initial IQR {:.3e}",
            verdict.iqr, opts.iqr_floor, verdict.initial_iqr
        ));
    }
    Ok(ScalingStudyResult { regime, rows, verdict, warnings, raw, scaled })
}

fn verdict(rows: &[TimeRow], opts: &StudyOptions) -> Verdict {
    let ks: Vec<f64> = rows.iter().filter_map(|r| r.ks_prev).collect();
    let initial_iqr = rows[0].iqr;
    let last_iqr = rows[rows.len() - 1].iqr;
    let final_ks = ks.last().copied().unwrap_or(f64::NAN);
    let trending_down = match ks.len() {
        0 => false,
        1 => true,
        n => {
            let half = n / 2;
            let early = ks[..half].iter().sum::<f64>() / half as f64;
            let late = ks[n - half..].iter().sum::<f64>() / half as f64;
            late < early
        }
    };
    let non_degenerate = last_iqr >= opts.iqr_floor * initial_iqr;
    Verdict {
        converged: final_ks < opts.ks_tol && trending_down,
        final_ks,
        iqr: last_iqr,
        initial_iqr,
        trending_down,
        non_degenerate,
    }
}

/// Log-log slope of median |value| under an alternative polynomial exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastReport {
    pub p_alt: f64,
    pub points: Vec<(f64, f64)>,
    pub fit: SlopeFit,
    /// Slope implied by the ratio of the two rescalers.
    pub expected_slope: f64,
    pub relative_error: f64,
}

/// Rescale the raw sets of `study` with `t^{p_alt} e^{-rt}` and regress the
/// median absolute value on `t` over the last `last` grid times.
pub fn exponent_contrast(study: &ScalingStudyResult, p_alt: f64, last: usize) -> Result<ContrastReport> {
    let n = study.raw.len();
    if last < 3 || last > n {
        return Err(Error::Domain(format!("need 3 <= last <= {n}, got {last}")));
    }
    let points = study.raw[n - last..]
        .iter()
        .map(|s| Ok((s.t, median_abs(rescale(s, p_alt, study.regime.r)?.values())?)))
        .collect::<Result<Vec<_>>>()?;
    let fit = loglog_slope(&points)?;
    let expected_slope = p_alt - study.regime.p;
    Ok(ContrastReport {
        p_alt,
        points,
        fit,
        expected_slope,
        relative_error: ((fit.slope - expected_slope) / expected_slope).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{find_theta_star, SpectralSource, DEFAULT_BRACKET, DEFAULT_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(values: Vec<f64>, t: f64) -> SampleSet {
        SampleSet::new(values, t, 0)
    }

    #[test]
    fn rescale_examples() {
        let s = set(vec![1.0, -2.0, 3.5], 1.0);
        assert_eq!(rescale(&s, 0.0, 0.0).unwrap().values(), s.values());
        let e = rescale(&s, 7.0, 0.3).unwrap();
        for (a, b) in e.values().iter().zip(s.values()) {
            assert_eq!(*a, b * (-0.3f64).exp());
        }
        assert!(rescale(&e, 0.0, 0.0).is_err());
        assert!(rescale(&set(vec![1.0], 0.0), 1.0, 0.0).is_err());
        assert!(rescale(&set(vec![1.0], 0.0), 0.0, 1.0).is_ok());
    }

    #[test]
    fn beyond_boundary_multiplier_at_ten() {
        let theta = (1.0 + 2f64.sqrt()) / 2.0;
        let f = 4.0 * 2f64.sqrt() - 6.0;
        let got = scale_factor(10.0, 3.0 / (2.0 * theta), f);
        let want = 10f64.powf(1.2426) * 3.4315f64.exp();
        assert!((got / want - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cf_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let c = 1.7;
        let pm = set(vec![c; 50], 1.0);
        let cf = empirical_cf_curve(&pm, &[0.0, 0.4, 3.0], 100, &mut r).unwrap();
        assert_eq!((cf[0].re, cf[0].im), (1.0, 0.0));
        for p in &cf {
            assert!((p.re - (c * p.xi).cos()).abs() < 1e-12);
            assert!((p.im - (c * p.xi).sin()).abs() < 1e-12);
            assert!(p.re_ci.0 <= p.re && p.re <= p.re_ci.1);
        }
        let sym = set(vec![0.3, -0.3, 2.0, -2.0, 5.5, -5.5], 1.0);
        for p in empirical_cf_curve(&sym, &[0.7, 1.9], 50, &mut r).unwrap() {
            assert!(p.im.abs() < 1e-15);
        }
        assert!(empirical_cf_curve(&set(vec![], 1.0), &[1.0], 10, &mut r).is_err());
    }

    fn pus_profile() -> (WeightModel, SpectralProfile) {
        let m = WeightModel::power_uniform_split(2.0).unwrap();
        let p = find_theta_star(SpectralSource::exact(&m).unwrap(), DEFAULT_BRACKET, DEFAULT_TOL).unwrap();
        (m, p)
    }

    #[test]
    fn small_study_is_well_formed() {
        let (m, prof) = pus_profile();
        let law = InitialLaw::centered_uniform(1.0);
        let opts = StudyOptions { t_grid: vec![1.0, 2.0, 3.0], n_samples: 400, bootstrap: 20, ..Default::default() };
        let res = scaling_study(&m, &law, &prof, &opts, &SeedTree::new(5)).unwrap();
        assert_eq!(res.regime.regime, Regime::BeyondBoundary);
        assert_eq!(res.rows.len(), 3);
        assert!(res.rows[0].ks_prev.is_none());
        for r in &res.rows[1..] {
            let k = r.ks_prev.unwrap();
            assert!((0.0..=1.0).contains(&k));
            assert!(r.iqr >= 0.0);
        }
        let again = scaling_study(&m, &law, &prof, &opts, &SeedTree::new(5)).unwrap();
        assert_eq!(res.rows, again.rows);
    }

    #[test]
    fn time_zero_reproduces_initial_law() {
        let (m, prof) = pus_profile();
        let law = InitialLaw::symmetric_stable(0.8, 1.0).unwrap();
        let opts = StudyOptions { t_grid: vec![0.0, 0.5], n_samples: 2000, bootstrap: 0, ..Default::default() };
        let res = scaling_study(&m, &law, &prof, &opts, &SeedTree::new(2)).unwrap();
        assert_eq!(res.regime.regime, Regime::Subcritical);
        let mut r = ChaCha8Rng::seed_from_u64(77);
        let direct: Vec<f64> = (0..2000).map(|_| law.sample(&mut r)).collect();
        assert!(!ks_two_sample(res.scaled[0].values(), &direct).unwrap().rejected);
    }

    #[test]
    fn unscaled_means_track_phi_one() {
        let (m, prof) = pus_profile();
        let law = InitialLaw::point_mass(1.0);
        let opts = StudyOptions { t_grid: vec![0.5, 1.0, 2.0], n_samples: 4000, bootstrap: 0, ..Default::default() };
        let res = scaling_study(&m, &law, &prof, &opts, &SeedTree::new(3)).unwrap();
        for r in &res.rows {
            assert!(r.mean.within(r.mean_expected.unwrap(), 4.0), "{r:?}");
        }
    }

    #[test]
    fn refuses_beyond_boundary_for_large_theta() {
        let m = WeightModel::deterministic_pair(0.5).unwrap();
        let prof = find_theta_star(SpectralSource::exact(&m).unwrap(), DEFAULT_BRACKET, DEFAULT_TOL).unwrap();
        let opts = StudyOptions {
            t_grid: vec![1.0],
            n_samples: 10,
            regime_override: Some(Regime::BeyondBoundary),
            ..Default::default()
        };
        let err = scaling_study(&m, &InitialLaw::point_mass(1.0), &prof, &opts, &SeedTree::new(1)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
