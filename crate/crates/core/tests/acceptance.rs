//! Acceptance suite. Each test prints one `PASS`/`FAIL` line (visible with
//! `--nocapture`) and fails when its criterion or runtime budget is missed.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_8, PI};
use std::process::Command;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::Rng;
use spinlab::cli::{execute, Cli};
use spinlab::engine::{fresh_sample_chsh, herbert_scan, run_experiment, shared_sample_chsh, ChshDirections, HerbertVerdict};
use spinlab::geometry::{angle_between, sample_uniform_sphere, Direction, SmearingKind};
use spinlab::models::{bell_sign_model, contextual_sampler, factorized_model, Model};
use spinlab::quantum::{
    joint_detection_density, singlet_correlation, smeared_correlation, smeared_correlation_mc, AnalyzerSpec,
    SettingPair,
};
use spinlab::rng::substream;

fn verdict(id: u32, title: &str, passed: bool, detail: &str, started: Instant, budget_secs: u64) {
    let elapsed = started.elapsed();
    let in_budget = elapsed < Duration::from_secs(budget_secs);
    let ok = passed && in_budget;
    println!(
        "{} AC{id:>2} {title}: {detail} [{:.2} s / {budget_secs} s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(passed, "criterion {id} failed: {detail}");
    assert!(in_budget, "criterion {id} exceeded its runtime budget: {elapsed:?}");
}

#[test]
fn ac01_quantum_oracle_exactness() {
    let t = Instant::now();
    let a = Direction::Z;
    let mut worst_e = 0.0f64;
    let mut worst_p = 0.0f64;
    for k in 0..19 {
        let theta = PI * k as f64 / 18.0;
        let b = Direction::planar(theta);
        let e = singlet_correlation(&a, &b).unwrap();
        let p = joint_detection_density(&a, &b).unwrap();
        worst_e = worst_e.max((e + theta.cos()).abs());
        worst_p = worst_p.max((p - (1.0 + e) / 4.0).abs());
    }
    let detail = format!("max |E + cos θ| = {worst_e:.1e}, max |p - (1+E)/4| = {worst_p:.1e}");
    verdict(1, "singlet oracle on 19-point grid", worst_e <= 1e-12 && worst_p <= 1e-12, &detail, t, 1);
}

#[test]
fn ac02_chsh_quantum_value() {
    let t = Instant::now();
    let cli = Cli::parse_from([
        "spinlab", "chsh", "--model", "qm-contextual", "--mode", "fresh", "--pairs", "1000000", "--runs", "10",
        "--seed", "20240602", "--format", "json",
    ]);
    let out = execute(&cli).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.data).unwrap();
    let s = v["chsh"]["s"].as_f64().unwrap();
    let se = v["chsh"]["stderr_s"].as_f64().unwrap();
    let target = 2.0 * 2f64.sqrt();
    let z = (s - target) / se;
    let detail = format!("S = {s:.5} ± {se:.5}, 2√2 = {target:.5}, z = {z:+.2}");
    verdict(2, "contextual CHSH reaches 2√2", z.abs() <= 4.0, &detail, t, 60);
}

fn random_directions<R: Rng>(rng: &mut R) -> ChshDirections {
    ChshDirections {
        a: sample_uniform_sphere(rng),
        a_prime: sample_uniform_sphere(rng),
        b: sample_uniform_sphere(rng),
        b_prime: sample_uniform_sphere(rng),
    }
}

#[test]
fn ac03_lhv_bound_expectation() {
    let t = Instant::now();
    let mut rng = substream(303, 0);
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for tuple in 0..20u64 {
        let settings = random_directions(&mut rng).setting_pairs();
        let factorized = factorized_model(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)).unwrap();
        let models = [Model::BellSign(bell_sign_model()), Model::Factorized(factorized)];
        for (m, model) in models.iter().enumerate() {
            let r = fresh_sample_chsh(model, &settings, 10_000, 100, 3_000 + 2 * tuple + m as u64, 0).unwrap();
            // margin in standard errors above the bound; ≤ 4 passes
            let margin = if r.stderr_s > 0.0 { (r.s - 2.0) / r.stderr_s } else if r.s <= 2.0 { f64::NEG_INFINITY } else { f64::INFINITY };
            worst = worst.max(margin);
            cases += 1;
        }
    }
    let detail = format!("{cases} fresh-mode cases, largest (S - 2)/stderr = {worst:+.2}");
    verdict(3, "LHV fresh-mode S ≤ 2 + 4σ", worst <= 4.0, &detail, t, 60);
}

#[test]
fn ac04_lhv_bound_pointwise() {
    let t = Instant::now();
    let mut meta = substream(404, 0);
    let model = bell_sign_model();
    let mut exceptions = 0;
    let mut max_s = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let seed: u64 = meta.gen();
        let pairs = meta.gen_range(1..=100);
        let dirs = random_directions(&mut meta);
        let r = shared_sample_chsh(&model, &dirs, pairs, &mut substream(seed, 0)).unwrap();
        let s = r.per_run_s[0];
        max_s = max_s.max(s);
        if s > 2.0 + 1e-12 {
            exceptions += 1;
        }
    }
    let detail = format!("1000 shared-sample runs, max S = {max_s:.12}, exceptions = {exceptions}");
    verdict(4, "shared-sample S ≤ 2 pointwise", exceptions == 0, &detail, t, 30);
}

#[test]
fn ac05_finite_sample_fragility() {
    let t = Instant::now();
    let settings = ChshDirections::standard().setting_pairs();
    let r = fresh_sample_chsh(&Model::BellSign(bell_sign_model()), &settings, 20, 1000, 505, 0).unwrap();
    let above = r.per_run_s.iter().filter(|&&s| s > 2.0).count();
    let max = r.per_run_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let detail = format!("{above}/1000 runs with S_run > 2 (max {max:.3})");
    verdict(5, "fresh N = 20 runs exceed 2", above > 0, &detail, t, 10);
}

#[test]
fn ac06_smearing_shrink_factor() {
    let t = Instant::now();
    let mut closed_ok = true;
    let mut worst_z = 0.0f64;
    for (k, big_theta) in [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4, PI].into_iter().enumerate() {
        let side = |d| AnalyzerSpec::new(d, SmearingKind::UniformCap, 0.5, 1.0).unwrap();
        let pair = SettingPair::new(side(Direction::Z), side(Direction::planar(big_theta)));
        let closed = smeared_correlation(&pair);
        closed_ok &= (closed + 0.5625 * big_theta.cos()).abs() <= 1e-12;
        let mc = smeared_correlation_mc(&pair, 1_000_000, &mut substream(606, k as u64)).unwrap();
        worst_z = worst_z.max((mc.value - closed).abs() / mc.stderr);
    }
    let detail = format!("closed form exact: {closed_ok}, worst MC deviation {worst_z:.2}σ");
    verdict(6, "smeared E = -0.5625 cos Θ", closed_ok && worst_z <= 4.0, &detail, t, 30);
}

#[test]
fn ac07_bell_sign_closed_form() {
    let t = Instant::now();
    let model = bell_sign_model();
    let mut worst_z = 0.0f64;
    let mut exact_ok = true;
    for k in 0..9u64 {
        let b = Direction::planar(PI * k as f64 / 8.0);
        let theta = angle_between(&Direction::Z, &b).unwrap();
        let want = -(1.0 - 2.0 * theta / PI);
        let r = run_experiment(&model, &SettingPair::sharp(Direction::Z, b), 1_000_000, &mut substream(707, k)).unwrap();
        let diff = (r.conditional.value - want).abs();
        if r.conditional.stderr > 0.0 {
            worst_z = worst_z.max(diff / r.conditional.stderr);
        } else {
            exact_ok &= diff <= 1e-12;
        }
    }
    let detail = format!("worst deviation {worst_z:.2}σ on 9 angles, zero-variance endpoints exact: {exact_ok}");
    verdict(7, "bell-sign E = -(1 - 2θ/π)", worst_z <= 4.0 && exact_ok, &detail, t, 60);
}

#[test]
fn ac08_herbert_test() {
    let t = Instant::now();
    let thetas = [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8];
    let level = 0.9999;
    let qm = herbert_scan(&Model::QmContextual(contextual_sampler()), &thetas, 1_000_000, 808, 0, level).unwrap();
    let lhv = herbert_scan(&Model::BellSign(bell_sign_model()), &thetas, 1_000_000, 809, 0, level).unwrap();
    let d = |x: f64| (x / 2.0).sin().powi(2);
    let qm_in_ci = qm
        .iter()
        .all(|r| r.d_theta_ci.contains(d(r.theta)) && r.d_2theta_ci.contains(d(2.0 * r.theta)));
    let qm_flags = qm.iter().all(|r| r.verdict == HerbertVerdict::Violated && !r.satisfied);
    let lhv_equal = lhv.iter().all(|r| {
        r.verdict == HerbertVerdict::Saturated
            && r.d_theta_ci.contains(r.theta / PI)
            && r.d_2theta_ci.contains(2.0 * r.theta / PI)
    });
    let excess: Vec<String> = qm.iter().map(|r| format!("{:+.4}", r.excess)).collect();
    let detail = format!(
        "QM within 99.99% CI: {qm_in_ci}, QM violated at all θ: {qm_flags} (excess {}), bell-sign equal: {lhv_equal}",
        excess.join(" ")
    );
    verdict(8, "Herbert d(2θ) vs 2d(θ)", qm_in_ci && qm_flags && lhv_equal, &detail, t, 60);
}

#[test]
fn ac09_efficiency_invariance() {
    let t = Instant::now();
    let pair = |eta: f64| {
        let side = |d| AnalyzerSpec::sharp(d).with_efficiency(eta).unwrap();
        SettingPair::new(side(Direction::Z), side(Direction::planar(FRAC_PI_3)))
    };
    let model = contextual_sampler();
    let low = run_experiment(&model, &pair(0.6), 1_000_000, &mut substream(909, 0)).unwrap();
    let full = run_experiment(&model, &pair(1.0), 1_000_000, &mut substream(909, 1)).unwrap();
    let (c6, c1) = (low.conditional, full.conditional);
    let z_cond = (c6.value - c1.value) / c6.stderr.hypot(c1.stderr);
    let (u6, u1) = (low.unconditional, full.unconditional);
    let eta2 = 0.36;
    let z_uncond = (u6.value - eta2 * u1.value) / u6.stderr.hypot(eta2 * u1.stderr);
    let detail = format!(
        "conditional {:+.5} vs {:+.5} (z {z_cond:+.2}); unconditional {:+.5} vs η²·{:+.5} (z {z_uncond:+.2})",
        c6.value, c1.value, u6.value, u1.value
    );
    verdict(9, "efficiency invariance", z_cond.abs() <= 4.0 && z_uncond.abs() <= 4.0, &detail, t, 60);
}

#[test]
fn ac10_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("experiment.json");
    std::fs::write(
        &cfg,
        r#"{
  "model": "qm-contextual",
  "analyzers": {
    "A":  {"orientation": {"theta": "0deg"}, "epsilon": 0.2, "eta": 0.9},
    "A'": {"orientation": {"theta": "90deg"}, "epsilon": 0.2, "eta": 0.9},
    "B":  {"orientation": {"theta": "45deg"}, "epsilon": 0.3, "eta": 0.8},
    "B'": {"orientation": {"theta": "135deg"}, "epsilon": 0.3, "eta": 0.8}
  },
  "settings": [["A", "B"], ["A", "B'"], ["A'", "B'"], ["A'", "B"]],
  "pairs": 20000,
  "runs": 24,
  "seed": 1010,
  "herbert": {"thetas": ["pi/8", "pi/4", "3pi/8", "pi/2"]},
  "scan": {"start": 0, "stop": "pi", "steps": 19}
}"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let mut identical = true;
    let mut checked = Vec::new();
    for (command, model) in [
        ("predict", "qm-contextual"),
        ("chsh", "qm-contextual"),
        ("chsh", "bell-sign"),
        ("herbert", "qm-contextual"),
        ("scan", "bell-sign"),
    ] {
        let mut outputs = Vec::new();
        for workers in ["1", "4"] {
            for attempt in 0..2 {
                let out = dir.path().join(format!("{command}-{model}-{workers}-{attempt}.csv"));
                let status = Command::new(env!("CARGO_BIN_EXE_spinlab"))
                    .args([command, "--config", cfg, "--model", model, "--workers", workers, "--out"])
                    .arg(&out)
                    .output()
                    .unwrap()
                    .status;
                assert!(status.success(), "{command} {model} failed");
                outputs.push(std::fs::read(&out).unwrap());
            }
        }
        identical &= outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
        checked.push(format!("{command}/{model}"));
    }
    let detail = format!("{} identical across workers 1,4 × 2 runs: {identical}", checked.join(", "));
    verdict(10, "byte-identical CSV", identical, &detail, t, 30);
}
