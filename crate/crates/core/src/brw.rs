//! Continuous-time branching random walk.
//!
//! Particles live unit-mean exponential lifetimes; at death a particle is
//! replaced by children displaced by `-log A_j` for each positive sampled
//! weight. The tree is expanded generation by generation: whether a particle
//! is alive at `t` depends only on its birth and death times, so order within
//! a generation is irrelevant.

use rand::distributions::{Distribution, Open01};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::rng::{SeedTree, Stream};
use crate::solver::SampleSet;
use crate::spectral::SpectralProfile;
use crate::stats::{compensated_sum, mean_se, Estimate};
use crate::weights::WeightModel;

/// Default particle budget per replicate.
pub const DEFAULT_CAP: usize = 10_000_000;

/// One individual of the tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Particle {
    /// Generation `|u|`.
    pub depth: u32,
    /// `S(u) = -Σ log A` along the ancestral line.
    pub position: f64,
    pub birth: f64,
    pub death: f64,
}

/// The alive set at one observation time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationSnapshot {
    pub t: f64,
    pub particles: Vec<Particle>,
    /// Set when the particle budget ran out; `particles` is then partial.
    pub truncated: bool,
    pub particles_processed: usize,
}

impl PopulationSnapshot {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.position)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    depth: u32,
    position: f64,
    birth: f64,
}

/// Reusable buffers for repeated simulations on one worker.
#[derive(Debug, Default)]
pub struct Workspace {
    frontier: Vec<Node>,
    next: Vec<Node>,
    logs: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Expand the tree from a single ancestor at `(position, birth)` up to the
/// last of the ascending `times`, reporting every particle alive at `times[k]`
/// through `alive(k, particle)`. Returns `(processed, truncated)`.
fn grow<R, F>(
    model: &WeightModel,
    origin: (f64, f64),
    times: &[f64],
    rng: &mut R,
    cap: usize,
    ws: &mut Workspace,
    mut alive: F,
) -> (usize, bool)
where
    R: Rng + ?Sized,
    F: FnMut(usize, Particle),
{
    let t_max = *times.last().expect("at least one observation time");
    ws.frontier.clear();
    ws.next.clear();
    ws.frontier.push(Node { depth: 0, position: origin.0, birth: origin.1 });
    let mut processed = 0usize;
    while !ws.frontier.is_empty() {
        for i in 0..ws.frontier.len() {
            if processed >= cap {
                return (processed, true);
            }
            processed += 1;
            let node = ws.frontier[i];
            let life: f64 = Exp1.sample(rng);
            let death = node.birth + life;
            let first = times.partition_point(|&t| t < node.birth);
            for (k, &t) in times.iter().enumerate().skip(first) {
                if t >= death {
                    break;
                }
                alive(
                    k,
                    Particle { depth: node.depth, position: node.position, birth: node.birth, death },
                );
            }
            if death <= t_max {
                ws.logs.clear();
                model.sample_log_weights_into(rng, &mut ws.logs);
                for &l in &ws.logs {
                    ws.next.push(Node { depth: node.depth + 1, position: node.position - l, birth: death });
                }
            }
        }
        std::mem::swap(&mut ws.frontier, &mut ws.next);
        ws.next.clear();
    }
    (processed, false)
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("observation time t = {t} must be finite and >= 0")))
    }
}

fn check_cap(cap: usize) -> Result<()> {
    if cap == 0 {
        return Err(Error::Domain("particle cap must be >= 1".into()));
    }
    Ok(())
}

/// Simulate the alive set `I_t` from one ancestor at position 0 born at 0.
pub fn simulate_population<R: Rng + ?Sized>(
    model: &WeightModel,
    t: f64,
    rng: &mut R,
    cap: usize,
) -> Result<PopulationSnapshot> {
    let mut ws = Workspace::new();
    let mut snaps = simulate_population_at(model, &[t], rng, cap, &mut ws)?;
    Ok(snaps.pop().expect("one snapshot"))
}

/// Alive sets of one tree at several ascending times.
pub fn simulate_population_at<R: Rng + ?Sized>(
    model: &WeightModel,
    times: &[f64],
    rng: &mut R,
    cap: usize,
    ws: &mut Workspace,
) -> Result<Vec<PopulationSnapshot>> {
    check_cap(cap)?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Domain("observation times must be ascending".into()));
        }
    }
    for &t in times {
        check_time(t)?;
    }
    let mut snaps: Vec<PopulationSnapshot> = times
        .iter()
        .map(|&t| PopulationSnapshot { t, ..Default::default() })
        .collect();
    let (processed, truncated) = grow(model, (0.0, 0.0), times, rng, cap, ws, |k, p| {
        snaps[k].particles.push(p)
    });
    for s in &mut snaps {
        s.truncated = truncated;
        s.particles_processed = processed;
    }
    Ok(snaps)
}

/// `U_t = Σ_{u∈I_t} e^{-S(u)} X_u` with fresh i.i.d. `X_u ~ μ₀`.
pub fn compute_ut<R: Rng + ?Sized>(snapshot: &PopulationSnapshot, law: &InitialLaw, rng: &mut R) -> Result<f64> {
    if snapshot.truncated {
        return Err(Error::Precondition(
            "refusing to form U_t from a truncated population".into(),
        ));
    }
    Ok(weighted_sum(snapshot.positions(), law, rng))
}

fn weighted_sum<R: Rng + ?Sized, I: Iterator<Item = f64>>(positions: I, law: &InitialLaw, rng: &mut R) -> f64 {
    compensated_sum(positions.map(|s| (-s).exp() * law.sample(rng)))
}

/// Monte Carlo check of `E[Σ_{u∈I_t} e^{-θS(u)}] = e^{tΦ(θ)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManyToOneReport {
    pub t: f64,
    pub theta: f64,
    pub estimate: Estimate,
    pub expected: f64,
    pub z: f64,
    pub truncated_replicates: usize,
    /// False when more than 1% of replicates were truncated.
    pub valid: bool,
}

pub fn many_to_one_check(
    model: &WeightModel,
    profile: &SpectralProfile,
    t: f64,
    theta: f64,
    replicates: usize,
    seeds: &SeedTree,
    cap: usize,
) -> Result<ManyToOneReport> {
    check_time(t)?;
    check_cap(cap)?;
    if replicates < 100 {
        return Err(Error::Domain(format!("need at least 100 replicates, got {replicates}")));
    }
    let seeds = seeds.child("many-to-one");
    let sums: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map_init(Workspace::new, |ws, i| {
            let mut rng = seeds.stream(i);
            let mut acc = Vec::new();
            let (_, truncated) = grow(model, (0.0, 0.0), &[t], &mut rng, cap, ws, |_, p| {
                acc.push((-theta * p.position).exp())
            });
            (!truncated).then(|| compensated_sum(acc))
        })
        .collect();
    let truncated_replicates = sums.iter().filter(|s| s.is_none()).count();
    let values: Vec<f64> = sums.into_iter().flatten().collect();
    let estimate = mean_se(&values);
    let expected = crate::spectral::m_t_theta(profile, t, theta)?;
    Ok(ManyToOneReport {
        t,
        theta,
        estimate,
        expected,
        z: estimate.z_score(expected),
        truncated_replicates,
        valid: truncated_replicates * 100 <= replicates,
    })
}

fn suggested_max_t(model: &WeightModel, cap: usize) -> Option<f64> {
    let growth = model.analytic_phi(0.0)?;
    (growth > 0.0).then(|| ((cap as f64) / 10.0).ln() / growth)
}

fn one_replicate(
    model: &WeightModel,
    law: &InitialLaw,
    t: f64,
    rng: &mut Stream,
    cap: usize,
    ws: &mut Workspace,
    positions: &mut Vec<f64>,
) -> Option<f64> {
    positions.clear();
    let (_, truncated) = grow(model, (0.0, 0.0), &[t], rng, cap, ws, |_, p| positions.push(p.position));
    (!truncated).then(|| weighted_sum(positions.iter().copied(), law, rng))
}

fn collect_replicates(
    model: &WeightModel,
    t: f64,
    cap: usize,
    results: Vec<Option<f64>>,
) -> Result<Vec<f64>> {
    if let Some(i) = results.iter().position(|r| r.is_none()) {
        return Err(Error::Truncated {
            replicate: i as u64,
            cap,
            t,
            suggested_max_t: suggested_max_t(model, cap),
        });
    }
    Ok(results.into_iter().flatten().collect())
}

/// `n_samples` independent replicates of `U_t`, one fresh population each.
/// Replicate `i` uses stream `i` under `seeds`.
pub fn sample_mu_t(
    model: &WeightModel,
    law: &InitialLaw,
    t: f64,
    n_samples: usize,
    seeds: &SeedTree,
    cap: usize,
) -> Result<SampleSet> {
    check_time(t)?;
    check_cap(cap)?;
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be >= 1".into()));
    }
    let results: Vec<Option<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map_init(
            || (Workspace::new(), Vec::new()),
            |(ws, pos), i| one_replicate(model, law, t, &mut seeds.stream(i), cap, ws, pos),
        )
        .collect();
    let values = collect_replicates(model, t, cap, results)?;
    Ok(SampleSet::new(values, t, seeds.master()))
}

/// `U_{t+s}` sampled through the branching relation
/// `U_{t+s} = Σ_{u∈I_t} e^{-S(u)} U_{s,u}` with independent copies `U_{s,u}`.
pub fn sample_mu_t_composed(
    model: &WeightModel,
    law: &InitialLaw,
    t: f64,
    s: f64,
    n_samples: usize,
    seeds: &SeedTree,
    cap: usize,
) -> Result<SampleSet> {
    check_time(t)?;
    check_time(s)?;
    check_cap(cap)?;
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be >= 1".into()));
    }
    let results: Vec<Option<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map_init(
            || (Workspace::new(), Workspace::new(), Vec::new(), Vec::new()),
            |(outer_ws, inner_ws, outer, inner), i| {
                let mut rng = seeds.stream(i);
                outer.clear();
                let (_, truncated) = grow(model, (0.0, 0.0), &[t], &mut rng, cap, outer_ws, |_, p| {
                    outer.push(p.position)
                });
                if truncated {
                    return None;
                }
                let mut terms = Vec::with_capacity(outer.len());
                for &pos in outer.iter() {
                    let u_s = one_replicate(model, law, s, &mut rng, cap, inner_ws, inner)?;
                    terms.push((-pos).exp() * u_s);
                }
                Some(compensated_sum(terms))
            },
        )
        .collect();
    let values = collect_replicates(model, t + s, cap, results)?;
    Ok(SampleSet::new(values, t + s, seeds.master()))
}

/// Skeleton statistics at `t = nδ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonRow {
    pub n: usize,
    /// Additive martingale `W_n = Σ e^{-V(u)}`.
    pub additive: Estimate,
    /// Derivative sum `D_n = Σ V(u) e^{-V(u)}`.
    pub derivative: Estimate,
    /// `Σ V(u)² e^{-V(u)}`.
    pub second: Estimate,
    /// `min_u V(u) - (3/2) log n` over replicates with a non-empty population.
    pub recentred_min: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonReport {
    pub delta: f64,
    pub theta_star: f64,
    /// Closed-form `E[Σ_{u∈I_δ} V(u)² e^{-V(u)}]`.
    pub sigma2: f64,
    pub rows: Vec<SkeletonRow>,
    pub truncated_replicates: usize,
    pub valid: bool,
}

/// Martingale diagnostics of the skeleton walk
/// `V(u) = ϑS(u) + nδΦ(ϑ)` for `u ∈ I_{nδ}`, `n = 1..=n_max`.
pub fn skeleton_diagnostics(
    model: &WeightModel,
    profile: &SpectralProfile,
    delta: f64,
    n_max: usize,
    replicates: usize,
    seeds: &SeedTree,
    cap: usize,
) -> Result<SkeletonReport> {
    let min = *profile.minimizer()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta = {delta} must be > 0")));
    }
    if n_max == 0 || replicates == 0 {
        return Err(Error::Domain("n_max and replicates must be >= 1".into()));
    }
    check_cap(cap)?;
    let theta = min.theta_star;
    let times: Vec<f64> = (1..=n_max).map(|n| n as f64 * delta).collect();
    let seeds = seeds.child("skeleton");
    // per replicate: per n (W, D, Q, min V)
    let per_rep: Vec<Option<Vec<[f64; 4]>>> = (0..replicates as u64)
        .into_par_iter()
        .map_init(Workspace::new, |ws, i| {
            let mut rng = seeds.stream(i);
            let mut terms: Vec<[Vec<f64>; 3]> = vec![Default::default(); n_max];
            let mut mins = vec![f64::INFINITY; n_max];
            let (_, truncated) = grow(model, (0.0, 0.0), &times, &mut rng, cap, ws, |k, p| {
                let v = theta * p.position + times[k] * min.phi;
                let e = (-v).exp();
                terms[k][0].push(e);
                terms[k][1].push(v * e);
                terms[k][2].push(v * v * e);
                mins[k] = mins[k].min(v);
            });
            if truncated {
                return None;
            }
            Some(
                terms
                    .into_iter()
                    .zip(mins)
                    .map(|([w, d, q], m)| [compensated_sum(w), compensated_sum(d), compensated_sum(q), m])
                    .collect(),
            )
        })
        .collect();
    let truncated_replicates = per_rep.iter().filter(|r| r.is_none()).count();
    let ok: Vec<Vec<[f64; 4]>> = per_rep.into_iter().flatten().collect();
    let rows = (0..n_max)
        .map(|k| {
            let col = |j: usize| -> Vec<f64> { ok.iter().map(|r| r[k][j]).collect() };
            let shift = 1.5 * ((k + 1) as f64).ln();
            let mins: Vec<f64> = col(3).into_iter().filter(|m| m.is_finite()).map(|m| m - shift).collect();
            SkeletonRow {
                n: k + 1,
                additive: mean_se(&col(0)),
                derivative: mean_se(&col(1)),
                second: mean_se(&col(2)),
                recentred_min: mean_se(&mins),
            }
        })
        .collect();
    Ok(SkeletonReport {
        delta,
        theta_star: theta,
        sigma2: profile.sigma2(delta)?,
        rows,
        truncated_replicates,
        valid: truncated_replicates * 100 <= replicates,
    })
}

/// Derivative martingale `D_n = Σ_{|u|=n} V(u) e^{-V(u)}` of the discrete
/// walk with first-generation displacements `-log(U^{Φ(ϑ)} A_j^ϑ)`, which
/// drives the fixed-point weights `U^{F(ϑ)} A_j`. Returns `None` on
/// truncation.
pub fn discrete_derivative_martingale<R: Rng + ?Sized>(
    model: &WeightModel,
    theta: f64,
    phi_theta: f64,
    generations: usize,
    rng: &mut R,
    cap: usize,
) -> Option<f64> {
    let mut current = vec![0.0f64];
    let mut next = Vec::new();
    let mut logs = Vec::new();
    let mut processed = 0usize;
    for _ in 0..generations {
        next.clear();
        for &v in &current {
            processed += 1;
            if processed > cap {
                return None;
            }
            let u: f64 = Open01.sample(rng);
            let shift = -phi_theta * u.ln();
            logs.clear();
            model.sample_log_weights_into(rng, &mut logs);
            next.extend(logs.iter().map(|&l| v + shift - theta * l));
        }
        std::mem::swap(&mut current, &mut next);
        if current.is_empty() {
            break;
        }
    }
    Some(compensated_sum(current.iter().map(|&v| v * (-v).exp())))
}
