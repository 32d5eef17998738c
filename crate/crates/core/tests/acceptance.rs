//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the run.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kinetic_brw::brw::{many_to_one_check, sample_mu_t, sample_mu_t_composed, skeleton_diagnostics, DEFAULT_CAP};
use kinetic_brw::fixed_point::{fixed_point_residual, FixedPointPool};
use kinetic_brw::initial::InitialLaw;
use kinetic_brw::rng::SeedTree;
use kinetic_brw::solver::{exponent_contrast, scaling_study, StudyOptions};
use kinetic_brw::spectral::{
    find_theta_star, phi, Evaluation, SpectralProfile, SpectralSource, DEFAULT_BRACKET, DEFAULT_TOL,
};
use kinetic_brw::stats::{check_moment_subadditivity, ks_two_sample, mean_se};
use kinetic_brw::weights::WeightModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;
const KNOWN_RED: &[usize] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn pus() -> WeightModel {
    WeightModel::power_uniform_split(2.0).unwrap()
}

fn dp() -> WeightModel {
    WeightModel::deterministic_pair(0.5).unwrap()
}

fn exact_profile(m: &WeightModel) -> SpectralProfile {
    find_theta_star(SpectralSource::exact(m).unwrap(), DEFAULT_BRACKET, DEFAULT_TOL).unwrap()
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} [{:.1}s, limit {}s]", o.detail, took.as_secs_f64(), limit.as_secs());
    o.pass &= took <= limit;
    o
}

fn c1() -> Outcome {
    let m = pus();
    let theta_star = (1.0 + 2f64.sqrt()) / 2.0;
    let mut worst = 0.0f64;
    let mut worst_z = 0.0f64;
    for (i, theta) in [0.0, 0.5, 1.0, theta_star, 2.0].into_iter().enumerate() {
        let want = 2.0 / (2.0 * theta + 1.0) - 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + i as u64);
        let exact = phi(&m, theta, Evaluation::Auto, &mut rng).unwrap();
        worst = worst.max((exact.value - want).abs());
        let mc = phi(&m, theta, Evaluation::MonteCarlo { draws: 100_000 }, &mut rng).unwrap();
        let z = if mc.se > 0.0 { (mc.value - want).abs() / mc.se } else { (mc.value - want).abs() / 1e-12 };
        worst_z = worst_z.max(z);
    }
    Outcome {
        pass: worst <= 1e-12 && worst_z <= 4.0,
        detail: format!("max analytic error {worst:.1e}, max MC z {worst_z:.2}"),
    }
}

/// Root of `(1 + x) e^{-x} = 1/2` by plain bisection.
fn bisection_x_star() -> f64 {
    let g = |x: f64| (1.0 + x) * (-x).exp() - 0.5;
    let (mut lo, mut hi) = (0.5, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c2() -> Outcome {
    let p = exact_profile(&pus());
    let m = p.minimizer().unwrap();
    let e1 = (m.theta_star - (1.0 + 2f64.sqrt()) / 2.0).abs();
    let e2 = (m.f - (4.0 * 2f64.sqrt() - 6.0)).abs();
    let d = exact_profile(&dp());
    let e3 = (d.theta_star().unwrap() - bisection_x_star() / 2f64.ln()).abs();
    Outcome {
        pass: e1 <= 1e-8 && e2 <= 1e-8 && e3 <= 1e-8,
        detail: format!("|dtheta| {e1:.1e}, |dF| {e2:.1e}, deterministic pair |dtheta| {e3:.1e}"),
    }
}

fn c3() -> Outcome {
    let seeds = SeedTree::new(SEED).child("c3");
    let mut worst = 0.0f64;
    let mut valid = true;
    for m in [pus(), dp()] {
        let p = exact_profile(&m);
        for (i, theta) in [0.0, 1.0, p.theta_star().unwrap()].into_iter().enumerate() {
            let r = many_to_one_check(&m, &p, 2.0, theta, 10_000, &seeds.child(m.name()).child_index(i as u64), DEFAULT_CAP)
                .unwrap();
            worst = worst.max(r.z);
            valid &= r.valid;
        }
    }
    Outcome { pass: worst <= 4.0 && valid, detail: format!("max z {worst:.2} over 6 checks") }
}

fn c4() -> Outcome {
    let seeds = SeedTree::new(SEED).child("c4");
    let law = InitialLaw::point_mass(1.0);
    let mut worst = 0.0f64;
    for (i, t) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let set = sample_mu_t(&dp(), &law, t, 10_000, &seeds.child_index(i as u64), DEFAULT_CAP).unwrap();
        worst = worst.max(mean_se(set.values()).z_score(1.0));
    }
    Outcome { pass: worst <= 4.0, detail: format!("max z {worst:.2} at t in {{1, 2, 4}}") }
}

fn c5() -> Outcome {
    let m = pus();
    let p = exact_profile(&m);
    let rep = skeleton_diagnostics(&m, &p, 1.0, 5, 10_000, &SeedTree::new(SEED).child("c5"), DEFAULT_CAP).unwrap();
    let z_w1 = rep.rows[0].additive.z_score(1.0);
    let z_d1 = rep.rows[0].derivative.z_score(0.0);
    let z_wn = rep.rows.iter().map(|r| r.additive.z_score(1.0)).fold(0.0, f64::max);
    Outcome {
        pass: z_w1 <= 4.0 && z_d1 <= 4.0 && z_wn <= 4.0 && rep.valid,
        detail: format!("z(W1) {z_w1:.2}, z(D1) {z_d1:.2}, max z(Wn, n<=5) {z_wn:.2}"),
    }
}

fn c6() -> Outcome {
    let seeds = SeedTree::new(SEED).child("c6");
    let law = InitialLaw::centered_uniform(1.0);
    let direct = sample_mu_t(&pus(), &law, 2.0, 10_000, &seeds.child("direct"), DEFAULT_CAP).unwrap();
    let composed = sample_mu_t_composed(&pus(), &law, 1.0, 1.0, 10_000, &seeds.child("composed"), DEFAULT_CAP).unwrap();
    let ks = ks_two_sample(direct.values(), composed.values()).unwrap();
    Outcome {
        pass: !ks.rejected,
        detail: format!("KS {:.4} vs 1% critical {:.4}", ks.statistic, ks.critical_1pct),
    }
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_RED.contains(&n) { " (known red)" } else { "" };
        println!("criterion {n:>2}: {tag}{note} - {}", o.detail);
        results.push((n, o));
    };
    report(1, timed(Duration::from_secs(10), c1));
    report(2, timed(Duration::from_secs(5), c2));
    report(3, timed(Duration::from_secs(120), c3));
    report(4, timed(Duration::from_secs(60), c4));
    report(5, timed(Duration::from_secs(120), c5));
    report(6, timed(Duration::from_secs(120), c6));

    let m = pus();
    let profile = exact_profile(&m);
    let theta_star = profile.theta_star().unwrap();
    let start = Instant::now();
    let opts = StudyOptions { t_grid: (1..=12).map(f64::from).collect(), n_samples: 10_000, ..Default::default() };
    let study = scaling_study(&m, &InitialLaw::centered_uniform(1.0), &profile, &opts, &SeedTree::new(SEED).child("c7"))
        .unwrap();
    let took = start.elapsed();
    let ks: Vec<String> = study.rows.iter().filter_map(|r| r.ks_prev).map(|k| format!("{k:.3}")).collect();
    let v = study.verdict;
    report(
        7,
        Outcome {
            pass: v.converged && v.non_degenerate && took <= Duration::from_secs(1800),
            detail: format!(
                "consecutive KS [{}], final {:.4} < 0.05, trending down {}, IQR {:.3} vs initial {:.3} [{:.1}s, limit 1800s]",
                ks.join(", "),
                v.final_ks,
                v.trending_down,
                v.iqr,
                v.initial_iqr,
                took.as_secs_f64()
            ),
        },
    );

    let contrast = exponent_contrast(&study, 1.0 / (2.0 * theta_star), 5).unwrap();
    let target = -1.0 / theta_star;
    report(
        8,
        Outcome {
            pass: (contrast.fit.slope - target).abs() <= 0.3 * target.abs(),
            detail: format!(
                "boundary-exponent slope {:.3} vs -1/theta* = {target:.3} (+/-30%); correct-exponent medians still drift by t^{:.3}",
                contrast.fit.slope,
                contrast.fit.slope - contrast.expected_slope
            ),
        },
    );

    report(
        9,
        timed(Duration::from_secs(60), || {
            let terminal = study.scaled.last().unwrap().values().to_vec();
            let pool = FixedPointPool::new(terminal).unwrap();
            let f = profile.minimizer().unwrap().f;
            let r = fixed_point_residual(&pool, &m, f, &SeedTree::new(SEED).child("c9")).unwrap();
            Outcome {
                pass: r.ks < 0.05 && pool.len() == 10_000,
                detail: format!("KS(pool, T(pool)) {:.4}, split-half noise floor {:.4}", r.ks, r.noise_floor),
            }
        }),
    );

    report(
        10,
        timed(Duration::from_secs(60), || {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            let mut violations = 0;
            let mut worst = 0.0f64;
            for gamma in [0.5, 1.0, 1.5, 2.0] {
                let r = check_moment_subadditivity(gamma, 1000, &mut rng).unwrap();
                violations += r.violations;
                worst = worst.max(r.max_ratio);
            }
            Outcome { pass: violations == 0, detail: format!("{violations} violations, max ratio {worst:.3} (bound 2)") }
        }),
    );

    report(11, determinism());

    let unexpected: Vec<usize> = results.iter().filter(|(n, o)| !o.pass && !KNOWN_RED.contains(n)).map(|(n, _)| *n).collect();
    let passing = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passing}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

const DETERMINISM_CONFIG: &str = r#"{
  "model": {"kind": "power_uniform_split", "a": 2.0},
  "initial": {"kind": "centered_uniform", "half_width": 1.0},
  "seed": 99,
  "budgets": {"samples": 300, "bootstrap": 20},
  "spectral": {"thetas": [0.5, 1.0, 1.5]},
  "simulate": {"t": 2.0},
  "scaling_study": {"t_grid": [1, 2, 3], "contrast_last": 3},
  "fixed_point": {"pool_size": 500, "iters": 3, "factorization": true,
                  "factorization_replicates": 100, "factorization_generations": 4},
  "check_assumptions": {"draws": 5000, "index_grid": [0.5, 1.0, 1.5]},
  "martingales": {"replicates": 200, "n_max": 3}
}"#;

const SUBCOMMANDS: &[&str] =
    &["spectral", "theta", "simulate", "scaling-study", "fixed-point", "check-assumptions", "martingales"];

fn run_cli(sub: &str, config: &Path, out: &Path, threads: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_kinetic-brw"))
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for sub in SUBCOMMANDS {
        let runs: Vec<_> = [1usize, 1, 3]
            .iter()
            .enumerate()
            .map(|(i, &threads)| {
                let out = dir.path().join(format!("{sub}-{i}"));
                (run_cli(sub, &config, &out, threads), csv_files(&out))
            })
            .collect();
        if runs.iter().any(|(ok, files)| !ok || files.is_empty()) {
            mismatches.push(format!("{sub}: run failed"));
            continue;
        }
        compared += runs[0].1.len();
        if runs[1].1 != runs[0].1 || runs[2].1 != runs[0].1 {
            mismatches.push(sub.to_string());
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{compared} CSV files byte-identical across repeat and --threads 1/3 runs of 7 subcommands")
        } else {
            format!("differences in {mismatches:?}")
        },
    }
}
