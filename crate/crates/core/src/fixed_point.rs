//! Population dynamics for `Z = U^{F(ϑ)} Σ A_j Z_j` and the
//! `W^{1/ϑ}·Y_ϑ` factorization diagnostic.

use rand::distributions::{Distribution, Open01};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::brw::discrete_derivative_martingale;
use crate::error::{Error, Result};
use crate::initial::symmetric_stable;
use crate::rng::SeedTree;
use crate::spectral::SpectralProfile;
use crate::stats::{ks_two_sample, loglog_slope, median_abs, quantile_sorted, SlopeFit};
use crate::weights::WeightModel;

/// A sample approximating the law of `Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointPool {
    samples: Vec<f64>,
    pub iteration: usize,
    /// Median `|Z|` after every iteration, starting with the seed pool.
    pub scale_tracker: Vec<f64>,
}

impl FixedPointPool {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("pool must be non-empty".into()));
        }
        if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("pool contains non-finite value {x}")));
        }
        let m = median_abs(&samples)?;
        Ok(Self { samples, iteration: 0, scale_tracker: vec![m] })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One application of the smoothing map. Output index `i` of iteration `k`
/// draws from stream `i` of `seeds.child_index(k)`.
pub fn smoothing_step(pool: &FixedPointPool, model: &WeightModel, f_theta: f64, seeds: &SeedTree) -> FixedPointPool {
    let prev = &pool.samples;
    let step = seeds.child_index(pool.iteration as u64);
    let samples: Vec<f64> = (0..prev.len() as u64)
        .into_par_iter()
        .map_init(Vec::new, |weights, i| {
            let mut rng = step.stream(i);
            let u: f64 = Open01.sample(&mut rng);
            weights.clear();
            model.sample_into(&mut rng, weights);
            let sum: f64 = weights.iter().map(|a| a * prev[rng.gen_range(0..prev.len())]).sum();
            u.powf(f_theta) * sum
        })
        .collect();
    let mut tracker = pool.scale_tracker.clone();
    tracker.push(median_abs(&samples).unwrap_or(0.0));
    FixedPointPool { samples, iteration: pool.iteration + 1, scale_tracker: tracker }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    /// `KS(pool_k, pool_{k+1})` per step.
    pub ks: Vec<f64>,
    pub scale_tracker: Vec<f64>,
    pub converged: bool,
    /// Median `|Z|` fell below 1% of its initial value.
    pub collapsed: bool,
    pub iterations: usize,
}

/// Iterate until consecutive pools are within `ks_tol` in KS distance.
pub fn iterate_to_fixed_point(
    seed_pool: FixedPointPool,
    model: &WeightModel,
    f_theta: f64,
    max_iters: usize,
    ks_tol: f64,
    seeds: &SeedTree,
) -> Result<(FixedPointPool, IterationReport)> {
    let seeds = seeds.child("fixed-point");
    let initial = seed_pool.scale_tracker[0];
    let mut pool = seed_pool;
    let mut ks = Vec::new();
    let mut converged = false;
    let mut collapsed = false;
    for _ in 0..max_iters {
        let next = smoothing_step(&pool, model, f_theta, &seeds);
        let d = ks_two_sample(&pool.samples, &next.samples)?.statistic;
        ks.push(d);
        pool = next;
        let m = *pool.scale_tracker.last().expect("tracker non-empty");
        if initial > 0.0 && m < 0.01 * initial {
            collapsed = true;
            break;
        }
        if d < ks_tol {
            converged = true;
            break;
        }
    }
    let report = IterationReport {
        iterations: ks.len(),
        ks,
        scale_tracker: pool.scale_tracker.clone(),
        converged,
        collapsed,
    };
    Ok((pool, report))
}

/// Residual `KS(pool, T(pool))` and the split-half noise floor of the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub ks: f64,
    pub noise_floor: f64,
}

pub fn fixed_point_residual(
    pool: &FixedPointPool,
    model: &WeightModel,
    f_theta: f64,
    seeds: &SeedTree,
) -> Result<Residual> {
    if pool.len() < 2 {
        return Err(Error::Domain("residual needs at least 2 pool samples".into()));
    }
    let next = smoothing_step(pool, model, f_theta, &seeds.child("residual"));
    let half = pool.len() / 2;
    Ok(Residual {
        ks: ks_two_sample(&pool.samples, &next.samples)?.statistic,
        noise_floor: ks_two_sample(&pool.samples[..half], &pool.samples[half..])?.statistic,
    })
}

/// Scale `c` with `median|c·unit| = median|target|`.
pub fn fit_scale_by_quantiles(target: &[f64], unit: &[f64]) -> Result<f64> {
    let t = median_abs(target)?;
    let u = median_abs(unit)?;
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(t / u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationOptions {
    pub replicates: usize,
    /// Generation `n` at which `D_n` stands in for `W`.
    pub generations: usize,
    pub cap: usize,
}

impl Default for FactorizationOptions {
    fn default() -> Self {
        Self { replicates: 2000, generations: 12, cap: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub theta_star: f64,
    pub generations: usize,
    pub replicates_used: usize,
    pub negative_mass: f64,
    pub reliable: bool,
    pub scale: f64,
    pub ks: f64,
    /// Complementary-CDF slope of `|Z|` over the upper tail, compared with `-ϑ`.
    pub tail: Option<SlopeFit>,
    pub notes: Vec<String>,
}

/// Upper-tail log-log slope of the complementary CDF of `|values|`.
pub fn tail_slope(values: &[f64]) -> Result<SlopeFit> {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let probs = [0.9, 0.95, 0.98, 0.99, 0.995];
    let pts: Vec<(f64, f64)> = probs.iter().map(|&q| (quantile_sorted(&abs, q), 1.0 - q)).collect();
    loglog_slope(&pts)
}

/// Compare the pool with synthetic `W^{1/ϑ}·c·Y_ϑ` samples, `W` estimated by
/// the derivative martingale at a fixed generation. Advisory only.
pub fn factorization_diagnostic(
    pool: &FixedPointPool,
    model: &WeightModel,
    profile: &SpectralProfile,
    opts: &FactorizationOptions,
    seeds: &SeedTree,
) -> Result<FactorizationReport> {
    let min = *profile.minimizer()?;
    let theta = min.theta_star;
    if theta >= 2.0 {
        return Err(Error::Precondition(format!("factorization needs theta* < 2, got {theta}")));
    }
    if opts.replicates == 0 {
        return Err(Error::Domain("replicates must be >= 1".into()));
    }
    let mut notes = vec![format!(
        "W is approximated by D_n at n = {}; the bias of this choice is not controlled",
        opts.generations
    )];
    let seeds = seeds.child("factorization");
    let w_seeds = seeds.child("w");
    let d: Vec<f64> = (0..opts.replicates as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = w_seeds.stream(i);
            discrete_derivative_martingale(model, theta, min.phi, opts.generations, &mut rng, opts.cap)
        })
        .collect();
    if d.len() < opts.replicates {
        notes.push(format!("{} replicates truncated at the particle cap", opts.replicates - d.len()));
    }
    if d.is_empty() {
        return Err(Error::BudgetInsufficient("every derivative-martingale replicate was truncated".into()));
    }
    let negative_mass = d.iter().filter(|&&x| x < 0.0).count() as f64 / d.len() as f64;
    let reliable = negative_mass <= 0.4;
    if !reliable {
        notes.push(format!("negative D_n mass {negative_mass:.3} exceeds 0.4"));
    }

    let y_seeds = seeds.child("y");
    let n = pool.len();
    let unit: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = y_seeds.stream(i);
            let w = d[rng.gen_range(0..d.len())].max(0.0);
            w.powf(1.0 / theta) * symmetric_stable(theta, &mut rng)
        })
        .collect();
    let scale = fit_scale_by_quantiles(pool.samples(), &unit)?;
    let synthetic: Vec<f64> = unit.iter().map(|x| x * scale).collect();
    let ks = ks_two_sample(pool.samples(), &synthetic)?.statistic;
    let tail = tail_slope(pool.samples()).ok();
    Ok(FactorizationReport {
        theta_star: theta,
        generations: opts.generations,
        replicates_used: d.len(),
        negative_mass,
        reliable,
        scale,
        ks,
        tail,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{find_theta_star, SpectralSource, DEFAULT_BRACKET, DEFAULT_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pus() -> WeightModel {
        WeightModel::power_uniform_split(2.0).unwrap()
    }

    #[test]
    fn zero_pool_is_invariant() {
        let pool = FixedPointPool::new(vec![0.0; 100]).unwrap();
        let next = smoothing_step(&pool, &pus(), -0.3, &SeedTree::new(1));
        assert!(next.samples().iter().all(|&x| x == 0.0));
        let (out, rep) = iterate_to_fixed_point(pool, &pus(), -0.3, 10, 0.05, &SeedTree::new(1)).unwrap();
        assert_eq!(rep.ks, vec![0.0]);
        assert!(rep.converged && !rep.collapsed);
        assert_eq!(out.len(), 100);
    }

    #[test]
    fn deterministic_pair_maps_ones_to_2a() {
        let m = WeightModel::deterministic_pair(0.3).unwrap();
        let pool = FixedPointPool::new(vec![1.0; 64]).unwrap();
        let next = smoothing_step(&pool, &m, 0.0, &SeedTree::new(2));
        assert!(next.samples().iter().all(|&x| (x - 0.6).abs() < 1e-15));
        assert_eq!(next.iteration, 1);
        assert_eq!(next.scale_tracker.len(), 2);
    }

    #[test]
    fn rejects_bad_pools() {
        assert!(FixedPointPool::new(vec![]).is_err());
        assert!(FixedPointPool::new(vec![1.0, f64::NAN]).is_err());
    }

    fn symmetric_pool(n: usize, seed: u64) -> FixedPointPool {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        FixedPointPool::new((0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn symmetry_is_preserved() {
        let f = 4.0 * 2f64.sqrt() - 6.0;
        let next = smoothing_step(&symmetric_pool(10_000, 3), &pus(), f, &SeedTree::new(3));
        let flipped: Vec<f64> = next.samples().iter().map(|x| -x).collect();
        assert!(!ks_two_sample(next.samples(), &flipped).unwrap().rejected);
    }

    #[test]
    fn step_is_homogeneous() {
        let f = 4.0 * 2f64.sqrt() - 6.0;
        let c = 3.5;
        let unit = symmetric_pool(10_000, 4);
        let scaled = FixedPointPool::new(unit.samples().iter().map(|x| c * x).collect()).unwrap();
        let a = smoothing_step(&scaled, &pus(), f, &SeedTree::new(10));
        let b: Vec<f64> = smoothing_step(&unit, &pus(), f, &SeedTree::new(11)).samples().iter().map(|x| c * x).collect();
        assert!(!ks_two_sample(a.samples(), &b).unwrap().rejected);
    }

    #[test]
    fn collapse_is_flagged() {
        // a shrinking map drives the pool towards zero
        let m = WeightModel::deterministic_pair(0.1).unwrap();
        let (_, rep) = iterate_to_fixed_point(symmetric_pool(500, 5), &m, 0.0, 50, 0.0, &SeedTree::new(5)).unwrap();
        assert!(rep.collapsed);
        assert!(!rep.converged);
    }

    #[test]
    fn stable_scale_self_fit() {
        let theta = 1.2;
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let target: Vec<f64> = (0..10_000).map(|_| 2.5 * symmetric_stable(theta, &mut r)).collect();
        let unit: Vec<f64> = (0..100_000).map(|_| symmetric_stable(theta, &mut r)).collect();
        let c = fit_scale_by_quantiles(&target, &unit).unwrap();
        let fitted: Vec<f64> = unit.iter().map(|x| c * x).collect();
        assert!(ks_two_sample(&target, &fitted).unwrap().statistic < 0.02);
        assert!((c - 2.5).abs() < 0.15);
    }

    #[test]
    fn stable_tail_slope() {
        let theta = 1.2;
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..100_000).map(|_| symmetric_stable(theta, &mut r)).collect();
        let fit = tail_slope(&v).unwrap();
        assert!((fit.slope + theta).abs() < 0.3 * theta, "{fit:?}");
    }

    #[test]
    fn zero_pool_factorization_is_trivial() {
        let m = pus();
        let prof = find_theta_star(SpectralSource::exact(&m).unwrap(), DEFAULT_BRACKET, DEFAULT_TOL).unwrap();
        let pool = FixedPointPool::new(vec![0.0; 200]).unwrap();
        let opts = FactorizationOptions { replicates: 50, generations: 4, cap: 100_000 };
        let rep = factorization_diagnostic(&pool, &m, &prof, &opts, &SeedTree::new(8)).unwrap();
        assert_eq!(rep.scale, 0.0);
        assert_eq!(rep.ks, 0.0);
    }

    #[test]
    fn factorization_refuses_large_theta() {
        let m = WeightModel::deterministic_pair(0.5).unwrap();
        let prof = find_theta_star(SpectralSource::exact(&m).unwrap(), DEFAULT_BRACKET, DEFAULT_TOL).unwrap();
        let pool = FixedPointPool::new(vec![1.0; 10]).unwrap();
        assert!(factorization_diagnostic(&pool, &m, &prof, &Default::default(), &SeedTree::new(1)).is_err());
    }
}
