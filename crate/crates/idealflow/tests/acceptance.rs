//! End-to-end acceptance gate.  Each test prints exactly one PASS/FAIL line
//! for its criterion; tolerances are part of the library's external contract.

use rayon::prelude::*;

use idealflow::curve::{random_closed_state, reconstruct, CurvatureState, ParametricCurve};
use idealflow::diagnostics::{fit_decay_rate, identity_suite, kosc_bound_check};
use idealflow::energy::{euler_lagrange, first_variation_fd_oracle, weak_gradient_check};
use idealflow::flow::{
    critical_point_search, evolve, linear_rates, linearized_spectrum_numeric, mu, FlowConfig,
};
use idealflow::Field;

const TAU: f64 = std::f64::consts::TAU;

fn report(number: usize, name: &str, passed: bool, detail: &str) {
    println!(
        "{} criterion {number} ({name}): {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {number} ({name}) failed: {detail}");
}

fn mix_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(index as u64)
}

#[test]
fn criterion_01_circles_are_stationary() {
    let mut worst = 0.0f64;
    for m in [1usize, 2, 3] {
        for omega in [1i32, -1, 2, -2, 3] {
            let circle = CurvatureState::<f64>::circle(omega, 255);
            let km = euler_lagrange(&circle.curvature(), m);
            worst = worst.max(km.max_abs());
        }
    }
    report(
        1,
        "rigidity forward",
        worst <= 1e-8,
        &format!("max ‖K_m‖_∞ over circles = {worst:.3e} (bound 1e-8)"),
    );
}

#[test]
fn criterion_02_rigidity_search() {
    let combos = [(1usize, 1i32), (1, 2), (2, 1), (2, 2)];
    let outcomes: Vec<(usize, usize, usize)> = combos
        .par_iter()
        .map(|&(m, omega)| {
            let results: Vec<Option<bool>> = (0..100usize)
                .into_par_iter()
                .map(|i| {
                    let kosc = 0.5 * (i as f64 + 1.0) / 100.0;
                    let seed = mix_seed(2024 + m as u64 + 10 * omega as u64, i);
                    let state = match random_closed_state::<f64>(omega, kosc, 3.0, seed, 63) {
                        Ok(state) => state,
                        Err(_) => return None,
                    };
                    match critical_point_search(m, omega, &state) {
                        Ok((_, is_circle)) => Some(is_circle),
                        Err(_) => None,
                    }
                })
                .collect();
            let converged = results.iter().filter(|r| r.is_some()).count();
            let circles = results.iter().filter(|r| **r == Some(true)).count();
            (converged, circles, m * 10 + omega.unsigned_abs() as usize)
        })
        .collect();
    let total_converged: usize = outcomes.iter().map(|o| o.0).sum();
    let total_circles: usize = outcomes.iter().map(|o| o.1).sum();
    report(
        2,
        "rigidity search",
        total_circles == total_converged && total_converged > 0,
        &format!(
            "{total_circles}/{total_converged} converged searches ended at circles (400 seeds, kosc ≤ 0.5)"
        ),
    );
}

#[test]
fn criterion_03_first_variation() {
    let results: Vec<f64> = (0..50usize)
        .into_par_iter()
        .map(|i| {
            let m = 1 + i % 2;
            let state =
                random_closed_state::<f64>(1, 0.25, 3.0, mix_seed(303, i), 127).unwrap();
            let rc = reconstruct(&state).unwrap();
            let curve = ParametricCurve::from_reconstructed(&rc);
            let phi = Field::cosine(2 + i % 3, 0.8, 127).add(&Field::sine(3 + i % 4, -0.5, 127));
            let coarse = first_variation_fd_oracle(&curve, &phi, m, 1e-5).unwrap();
            let fine = first_variation_fd_oracle(&curve, &phi, m, 5e-6).unwrap();
            let fd = (4.0 * fine - coarse) / 3.0;
            let pairing = euler_lagrange(&rc.curvature, m).product(&phi).integrate();
            (fd + pairing).abs() / (1.0 + pairing.abs())
        })
        .collect();
    let worst = results.iter().cloned().fold(0.0f64, f64::max);
    report(
        3,
        "first variation",
        worst <= 1e-5,
        &format!("max |FD + ∫K_mφ|/(1+|∫K_mφ|) over 50 pairs = {worst:.3e} (bound 1e-5)"),
    );
}

#[test]
fn criterion_04_exact_identities() {
    let checks = identity_suite(&[1, 2], &[1, 2], 20, 404).unwrap();
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    report(
        4,
        "exact identities",
        failed.is_empty() && !checks.is_empty(),
        &format!("{} identity checks, failures: {failed:?}", checks.len()),
    );
}

#[test]
fn criterion_05_weak_gradient_inequality() {
    let worst = (0..1000usize)
        .into_par_iter()
        .map(|i| {
            let omega = 1 + (i % 2) as i32;
            let level = 0.4 * 10f64.powf(-3.0 * ((i / 2) % 11) as f64 / 10.0);
            let state =
                random_closed_state::<f64>(omega, level, 3.0, mix_seed(505, i), 127).unwrap();
            let k = state.curvature();
            let length = 0.5 + 1.5 * ((i % 9) as f64 / 8.0);
            let mut sample_worst = 0.0f64;
            for m in [1usize, 2] {
                let check = weak_gradient_check(&k, m, length);
                if !check.degenerate {
                    sample_worst = sample_worst.max(check.ratio);
                }
            }
            sample_worst
        })
        .reduce(|| 0.0f64, f64::max);
    report(
        5,
        "weak gradient inequality",
        worst <= 1.0,
        &format!("max ratio over 1000 curves, m ∈ {{1,2}} = {worst:.6} (bound 1)"),
    );
}

#[test]
fn criterion_06_dissipation_law() {
    let mut cfg = FlowConfig::<f64>::new(1, 1);
    cfg.n_modes = 127;
    // keep λ·dt small through the stiff transient so the centered difference
    // below can resolve dE/dτ to the stated tolerance
    cfg.max_lambda_dt = Some(0.025);
    let initial = random_closed_state::<f64>(1, 0.1, 3.0, 606, cfg.n_modes).unwrap();
    let traj = evolve(&initial, &cfg).unwrap();
    let r: Vec<_> = traj.records.iter().map(|rec| rec.2).collect();
    assert!(r.len() > 100);

    // normalised law on centered differences over the (nonuniform) records
    let mut ok = 0usize;
    let mut total = 0usize;
    for w in r.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let h0 = b.tau - a.tau;
        let h1 = c.tau - b.tau;
        if h0 <= 0.0 || h1 <= 0.0 {
            continue;
        }
        let de = (h0 * h0 * c.energy - h1 * h1 * a.energy
            + (h1 * h1 - h0 * h0) * b.energy)
            / (h0 * h1 * (h0 + h1));
        let residual = (de + b.grad_norm_sq + 3.0 * b.lambda * b.energy).abs();
        total += 1;
        if residual <= 1e-3 * (1.0 + b.grad_norm_sq) {
            ok += 1;
        }
    }
    let fraction = ok as f64 / total as f64;

    // unnormalised energy non-increasing
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for rec in &r {
        let e_phys = rec.energy * rec.length.powi(-3);
        if e_phys > prev * (1.0 + 1e-9) + 1e-12 {
            monotone = false;
        }
        prev = e_phys;
    }
    report(
        6,
        "dissipation law",
        fraction >= 0.99 && monotone,
        &format!(
            "energy-law residual within tolerance at {:.2}% of {} records; unnormalised E_m non-increasing: {monotone}",
            100.0 * fraction,
            total
        ),
    );
}

#[test]
fn criterion_07_linearised_spectrum() {
    let mut worst = 0.0f64;
    let mut resonant_ok = true;
    for m in [1usize, 2] {
        for omega in [1i32, 2] {
            let numeric = linearized_spectrum_numeric::<f64>(m, omega, 8).unwrap();
            let exact = linear_rates::<f64>(m, omega, 8);
            let (lambda_min, _) = mu::<f64>(m, omega);
            for (n, rate) in numeric {
                if n == omega.unsigned_abs() as usize {
                    resonant_ok &= rate.abs() <= 1e-3 * lambda_min;
                } else {
                    worst = worst.max((rate + exact[n]).abs() / exact[n]);
                }
            }
        }
    }
    report(
        7,
        "linearised spectrum",
        worst <= 1e-3 && resonant_ok,
        &format!("max relative rate error = {worst:.3e} (bound 1e-3); resonant modes null: {resonant_ok}"),
    );
}

#[test]
fn criterion_08_kosc_decay_rate() {
    let mut cfg = FlowConfig::<f64>::new(1, 1);
    cfg.n_modes = 127;
    let initial = random_closed_state::<f64>(1, 1e-4, 3.0, 808, cfg.n_modes).unwrap();
    let traj = evolve(&initial, &cfg).unwrap();
    let series: Vec<(f64, f64)> = traj.records.iter().map(|r| (r.2.tau, r.2.kosc)).collect();
    let (rate, r_sq) = fit_decay_rate(&series, 0.25).unwrap();
    let expected = 72.0 * TAU.powi(6);
    let rel = (rate - expected).abs() / expected;
    report(
        8,
        "kosc decay rate",
        rel <= 0.05 && r_sq >= 0.999,
        &format!("fitted rate {rate:.6e} vs 2μ = {expected:.6e} (rel {rel:.2e}), r² = {r_sq:.6}"),
    );
}

fn converged_run(omega: i32) -> idealflow::flow::Trajectory<f64> {
    let mut cfg = FlowConfig::<f64>::new(1, omega);
    cfg.n_modes = 127;
    cfg.kosc_floor = 1e-18;
    cfg.t_end = cfg.t_end * 2.0;
    let initial = random_closed_state::<f64>(omega, 0.1, 3.0, 909 + omega as u64, cfg.n_modes)
        .unwrap();
    evolve(&initial, &cfg).unwrap()
}

#[test]
fn criterion_09_and_10_convergence_and_length_bound() {
    let mut detail = String::new();
    let mut ok9 = true;
    let mut ok10 = true;
    for omega in [1i32, 2] {
        let traj = converged_run(omega);
        let (_, fs, rec) = traj.records.last().unwrap();
        let kappa = TAU * omega as f64;
        let k_dev = fs.state.curvature().add_constant(-kappa).max_abs();
        let length_ratio = fs.length();
        let this_ok = traj.converged
            && rec.kosc <= 1e-10
            && k_dev <= 1e-8
            && rec.resonant_norm <= 1e-10
            && length_ratio.is_finite()
            && length_ratio > 0.0;
        ok9 &= this_ok;
        let bound = kosc_bound_check(&traj, 1.0);
        ok10 &= bound.passed;
        detail.push_str(&format!(
            "ω={omega}: kosc {:.1e}, |k−2πω|_∞ {:.1e}, resonant {:.1e}, L_∞/L_0 {:.4}, bound margin {:.1e}; ",
            rec.kosc, k_dev, rec.resonant_norm, length_ratio, bound.measured
        ));
    }
    report(9, "convergence to circle", ok9, &detail);
    report(10, "bounded-length bound", ok10, &detail);
}

#[test]
fn criterion_11_resonant_slaving() {
    let mut points = Vec::new();
    // one seed for every level: the slaving prefactor is direction-dependent,
    // so varying the draw would contaminate the slope fit
    for &e in &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let state = random_closed_state::<f64>(1, e, 3.0, 1111, 127).unwrap();
        points.push((f64::ln(state.kosc()), f64::ln(state.resonant_mode_norm())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    report(
        11,
        "resonant slaving",
        slope >= 0.95,
        &format!("log–log slope of resonant_norm vs kosc = {slope:.3} (bound 0.95)"),
    );
}

#[test]
fn criterion_12_determinism() {
    let bin = env!("CARGO_BIN_EXE_idealflow");
    let dir = std::env::temp_dir().join(format!("idealflow-acceptance-{}", std::process::id()));
    let run = |out: &str| {
        let out_dir = dir.join(out);
        let status = std::process::Command::new(bin)
            .args(["verify", "all", "--serial", "--seed", "42", "--out"])
            .arg(&out_dir)
            .stdout(std::process::Stdio::null())
            .status()
            .expect("spawn idealflow");
        (status, out_dir)
    };
    let (status_a, dir_a) = run("a");
    let (status_b, dir_b) = run("b");
    // manifests carry wall-clock timestamps; the computational outputs are
    // the determinism contract
    let mut identical = status_a.success() && status_b.success();
    for name in ["report.json", "spectrum.csv"] {
        let a = std::fs::read(dir_a.join(name)).unwrap_or_default();
        let b = std::fs::read(dir_b.join(name)).unwrap_or_default();
        identical &= !a.is_empty() && a == b;
    }
    let _ = std::fs::remove_dir_all(&dir);
    report(
        12,
        "determinism",
        identical,
        "verify all --serial --seed 42 twice: outputs byte-identical",
    );
}
