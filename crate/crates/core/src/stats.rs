//! Statistical machinery shared by the simulation reports: two-sample
//! Kolmogorov–Smirnov, empirical characteristic functions, bootstrap
//! intervals, log-log regression and the moment-subadditivity checker.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Asymptotic constant of the two-sample KS test at the 1% level.
pub const KS_CRIT_1PCT: f64 = 1.628;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0, n: 0 }
    }

    /// Number of standard errors separating the estimate from `target`.
    /// Agreement to within rounding (relative 1e-12) counts as exact; a
    /// zero-variance estimate that disagrees gives infinity.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d <= 1e-12 * target.abs().max(1.0) {
            0.0
        } else if self.se > 0.0 {
            d / self.se
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        self.z_score(target) <= n_se
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate { value: f64::NAN, se: f64::NAN, n };
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return Estimate { value: mean, se: 0.0, n };
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss / (n as f64 - 1.0);
    Estimate { value: mean, se: (var / n as f64).sqrt(), n }
}

fn sorted_copy(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Linear-interpolation quantile (type 7) of an already sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    Ok(quantile_sorted(&sorted_copy(values)?, q))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

pub fn median_abs(values: &[f64]) -> Result<f64> {
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    median(&abs)
}

/// Interquartile range.
pub fn iqr(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("IQR of an empty sample".into()));
    }
    let s = sorted_copy(values)?;
    Ok(quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n1: usize,
    pub n2: usize,
    pub critical_1pct: f64,
    pub rejected: bool,
}

/// Two-sample Kolmogorov–Smirnov test: exact sup-distance between the two
/// empirical CDFs, compared against the asymptotic 1% critical value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("KS test needs two non-empty samples".into()));
    }
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let statistic = ks_sorted(&a, &b);
    let (n1, n2) = (a.len(), b.len());
    let critical_1pct = KS_CRIT_1PCT * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt();
    Ok(KsResult {
        statistic,
        n1,
        n2,
        critical_1pct,
        rejected: statistic > critical_1pct,
    })
}

/// KS statistic for sorted inputs; ties are stepped over together.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Empirical characteristic function `(1/n) Σ exp(iξx)` as `(re, im)`.
pub fn empirical_cf(values: &[f64], xi: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let re = compensated_sum(values.iter().map(|&x| (xi * x).cos()));
    let im = compensated_sum(values.iter().map(|&x| (xi * x).sin()));
    (re / n, im / n)
}

/// Percentile bootstrap interval of `stat`, widened if necessary so that it
/// contains the point estimate.
pub fn bootstrap_ci<R, S>(values: &[f64], resamples: usize, level: f64, rng: &mut R, stat: S) -> (f64, f64)
where
    R: Rng + ?Sized,
    S: Fn(&[f64]) -> f64,
{
    let point = stat(values);
    if values.is_empty() || resamples == 0 {
        return (point, point);
    }
    let mut buf = vec![0.0; values.len()];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = values[rng.gen_range(0..values.len())];
            }
            stat(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    let lo = quantile_sorted(&stats, alpha);
    let hi = quantile_sorted(&stats, 1.0 - alpha);
    (lo.min(point), hi.max(point))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub se: f64,
    /// 95% normal-theory interval for the slope.
    pub ci: (f64, f64),
    pub points: usize,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "log-log regression needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Domain(format!("nonpositive coordinate ({x}, {y})")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        se,
        ci: (slope - 1.96 * se, slope + 1.96 * se),
        points: points.len(),
    })
}

/// Outcome of the exhaustive moment-subadditivity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubadditivityReport {
    pub gamma: f64,
    pub trials: usize,
    pub violations: usize,
    /// Largest observed `E|ΣX_j|^γ / ΣE|X_j|^γ`; the bound allows 2.
    pub max_ratio: f64,
}

/// A finitely supported law given by `(value, probability)` atoms.
pub type DiscreteLaw = Vec<(f64, f64)>;

/// Exact `E|ΣX_j|^γ` and `ΣE|X_j|^γ` for independent discrete summands,
/// by enumeration over every outcome combination.
pub fn exact_moment_pair(laws: &[DiscreteLaw], gamma: f64) -> (f64, f64) {
    let rhs: f64 = laws
        .iter()
        .map(|law| law.iter().map(|(v, p)| p * v.abs().powf(gamma)).sum::<f64>())
        .sum();
    let mut lhs = 0.0;
    let mut idx = vec![0usize; laws.len()];
    'outer: loop {
        let (mut s, mut p) = (0.0, 1.0);
        for (law, &k) in laws.iter().zip(&idx) {
            s += law[k].0;
            p *= law[k].1;
        }
        lhs += p * s.abs().powf(gamma);
        for d in 0..laws.len() {
            idx[d] += 1;
            if idx[d] < laws[d].len() {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    (lhs, rhs)
}

/// Check `E|ΣX_j|^γ ≤ 2 ΣE|X_j|^γ` on `trials` random instances of at most
/// six independent discrete summands (centered when `γ > 1`).
pub fn check_moment_subadditivity<R: Rng + ?Sized>(
    gamma: f64,
    trials: usize,
    rng: &mut R,
) -> Result<SubadditivityReport> {
    if !(gamma > 0.0 && gamma <= 2.0) {
        return Err(Error::Domain(format!("gamma = {gamma} outside (0, 2]")));
    }
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for _ in 0..trials {
        let summands = rng.gen_range(1..=6);
        let laws: Vec<DiscreteLaw> = (0..summands)
            .map(|_| random_law(gamma > 1.0, rng))
            .collect();
        let (lhs, rhs) = exact_moment_pair(&laws, gamma);
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
        if lhs > 2.0 * rhs * (1.0 + 1e-12) + 1e-300 {
            violations += 1;
        }
    }
    Ok(SubadditivityReport { gamma, trials, violations, max_ratio })
}

fn random_law<R: Rng + ?Sized>(centered: bool, rng: &mut R) -> DiscreteLaw {
    let atoms = rng.gen_range(1..=3);
    let mut law: DiscreteLaw = (0..atoms)
        .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(0.05..1.0)))
        .collect();
    let total: f64 = law.iter().map(|a| a.1).sum();
    for a in law.iter_mut() {
        a.1 /= total;
    }
    if centered {
        let mean: f64 = law.iter().map(|(v, p)| v * p).sum();
        for a in law.iter_mut() {
            a.0 -= mean;
        }
    }
    law
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap().statistic, 1.0);
        let r = ks_two_sample(&a, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((r.statistic - 0.25).abs() < 1e-15);
        assert!((r.critical_1pct - 1.628 * (8.0f64 / 16.0).sqrt()).abs() < 1e-15);
        assert!(!r.rejected);
    }

    #[test]
    fn ks_rejects_empty_and_nan() {
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::Domain(_))));
        assert!(ks_two_sample(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn ks_handles_ties() {
        // F_a jumps to 1 at 1; F_b is 1/2 there
        let r = ks_two_sample(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subadditivity_examples() {
        let fair = vec![(-1.0, 0.5), (1.0, 0.5)];
        let (lhs, rhs) = exact_moment_pair(&[fair.clone(), fair.clone()], 1.0);
        assert!((lhs - 1.0).abs() < 1e-15);
        assert!((rhs - 2.0).abs() < 1e-15);
        // gamma = 2, centered: variances add
        let l1 = vec![(-2.0, 0.25), (2.0 / 3.0, 0.75)];
        let (lhs, rhs) = exact_moment_pair(&[l1, fair], 2.0);
        assert!((lhs - rhs).abs() < 1e-12);
        let single = vec![(0.3, 0.4), (-2.0, 0.6)];
        let (lhs, rhs) = exact_moment_pair(&[single], 0.5);
        assert!((lhs - rhs).abs() < 1e-15);
    }

    #[test]
    fn subadditivity_holds_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for gamma in [0.5, 1.0, 1.5, 2.0] {
            let r = check_moment_subadditivity(gamma, 200, &mut rng).unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
            assert!(r.max_ratio <= 2.0);
        }
        assert!(check_moment_subadditivity(2.5, 1, &mut rng).is_err());
    }

    #[test]
    fn slope_examples() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, (i * i) as f64)).collect();
        assert!((loglog_slope(&pts).unwrap().slope - 2.0).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 3.5)).collect();
        assert!(loglog_slope(&flat).unwrap().slope.abs() < 1e-10);
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn slope_with_multiplicative_noise() {
        // oracle: y = c x^{-1/ϑ} (1 + 5% noise), ϑ = (1+√2)/2
        let theta = (1.0 + 2f64.sqrt()) / 2.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let x = 5.0 + i as f64;
                let noise = 1.0 + 0.05 * rng.gen_range(-1.0..1.0);
                (x, 2.0 * x.powf(-1.0 / theta) * noise)
            })
            .collect();
        let fit = loglog_slope(&pts).unwrap();
        assert!((fit.slope + 1.0 / theta).abs() <= 0.3 / theta, "{fit:?}");
    }

    #[test]
    fn cf_of_point_mass() {
        let v = vec![0.7; 10];
        let (re, im) = empirical_cf(&v, 2.0);
        assert!((re - (1.4f64).cos()).abs() < 1e-14 && (im - (1.4f64).sin()).abs() < 1e-14);
        assert_eq!(empirical_cf(&[1.0, -3.0], 0.0), (1.0, 0.0));
    }

    #[test]
    fn quantiles_and_means() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v).unwrap(), 2.5);
        assert_eq!(iqr(&v).unwrap(), 1.5);
        let e = mean_se(&[1.0, 3.0]);
        assert_eq!(e.value, 2.0);
        assert!((e.se - 1.0).abs() < 1e-15);
        assert!(iqr(&[]).is_err());
    }

    proptest! {
        #[test]
        fn ks_is_symmetric_and_rank_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 1..40),
            b in prop::collection::vec(-10.0f64..10.0, 1..40),
        ) {
            let d1 = ks_two_sample(&a, &b).unwrap().statistic;
            let d2 = ks_two_sample(&b, &a).unwrap().statistic;
            prop_assert_eq!(d1, d2);
            prop_assert!((0.0..=1.0).contains(&d1));
            let ta: Vec<f64> = a.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            let tb: Vec<f64> = b.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(ks_two_sample(&ta, &tb).unwrap().statistic, d1);
        }

        #[test]
        fn bootstrap_ci_contains_estimate(v in prop::collection::vec(-5.0f64..5.0, 1..30), seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let (lo, hi) = bootstrap_ci(&v, 50, 0.95, &mut rng, mean);
            let m = mean(&v);
            prop_assert!(lo <= m && m <= hi);
        }

        #[test]
        fn cf_in_unit_disk(v in prop::collection::vec(-100.0f64..100.0, 1..50), xi in -5.0f64..5.0) {
            let (re, im) = empirical_cf(&v, xi);
            prop_assert!(re.hypot(im) <= 1.0 + 1e-12);
        }
    }
}
