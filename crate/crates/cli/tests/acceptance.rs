//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::TAU;
use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cbw_cli::scenario::parse_override;
use cbw_cli::{resolve, run, Kind, Scenario};
use cbw_core::chain::{
    apply_block, build_cbw_chain, calibrated_geometry, cbw_closed_form, full_period_grid,
    output_intensities, projection_probabilities, sweep_fringe, Arm, CouplingGeometry,
};
use cbw_core::metrology::{
    fisher_information, pbw_contaminated, pbw_probabilities,
    resource_comparison, FringeSignalModel,
};
use cbw_core::su2::{bs_matrix, phase_matrix, Matrix2C, PhaseConvention};
use cbw_core::time_domain::{visibility, visibility_with, Extrema};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn geometry() -> CouplingGeometry {
    calibrated_geometry().expect("calibration")
}

fn scenario(kind: Kind, dir: &Path, sets: &[&str]) -> Scenario {
    let mut overrides: Vec<_> = sets.iter().map(|s| parse_override(s).unwrap()).collect();
    overrides.push(("output_dir".into(), toml::Value::String(dir.to_string_lossy().into_owned())));
    resolve("", &overrides, Some(kind)).expect("scenario resolves")
}

fn run_json(kind: Kind, dir: &Path, sets: &[&str], file: &str) -> Value {
    run(&scenario(kind, dir, sets)).expect("scenario runs");
    serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |m, v| m.max(v.abs()))
}

fn two_mzi_anchors() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let left = tmp.path().join("left");
    let right = tmp.path().join("right");
    run(&scenario(Kind::Sweep, &left, &["preset=\"fig2-left\""])).unwrap();
    run(&scenario(Kind::Sweep, &right, &["preset=\"fig2-right\""])).unwrap();
    let cbw = read_csv(&left.join("fringe.csv"));
    let identity = read_csv(&right.join("fringe.csv"));
    let e_cbw = max_abs(cbw.iter().map(|r| r[1] - 0.5 * (1.0 + (2.0 * r[0]).cos())));
    let e_id = max_abs(identity.iter().flat_map(|r| [r[1], r[2] - 1.0]));
    let pass = cbw.len() == 1024 && identity.len() == 1024 && e_cbw < 1e-10 && e_id < 1e-10;
    outcome(pass, format!("psi=0 max err {e_cbw:.1e}, psi=pi max err {e_id:.1e} (tol 1e-10, 1024 points)"))
}

fn superresolution() -> Outcome {
    let grid = full_period_grid(1024);
    let mut worst = 0.0f64;
    let mut worst_bins = 0.0f64;
    for n in 1..=8 {
        let scan = sweep_fringe(&build_cbw_chain(n, 0.0, 0.0, geometry()).unwrap(), &grid).unwrap();
        for (k, &phi) in grid.iter().enumerate() {
            let (i3, i4) = cbw_closed_form(n, phi);
            worst = worst.max((scan.i3[k] - i3).abs()).max((scan.i4[k] - i4).abs());
        }
        // One bin on a 2π span corresponds to one unit of 2π/period.
        let bins = scan.period().map_or(f64::INFINITY, |p| (TAU / p - n as f64).abs());
        worst_bins = worst_bins.max(bins);
    }
    outcome(
        worst < 1e-10 && worst_bins <= 1.0,
        format!("N=1..8 max err {worst:.1e} (tol 1e-10), period off by {worst_bins:.1e} bins (tol 1)"),
    )
}

fn segments(summary: &Value) -> Vec<Value> {
    summary["segments"].as_array().unwrap().clone()
}

fn time_domain_frequencies() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let s = run_json(Kind::Time, tmp.path(), &["preset=\"fig3a\""], "summary.json");
    let segs = segments(&s);
    let expected = [2.0, 1.0, 2.0];
    let mut got = Vec::new();
    let mut pass = segs.len() == 3;
    for (seg, want) in segs.iter().zip(expected) {
        let hz = seg["dominant_hz"].as_f64().unwrap_or(f64::NAN);
        let res = seg["resolution_hz"].as_f64().unwrap_or(0.0);
        let span = seg["t_end"].as_f64().unwrap() - seg["t_start"].as_f64().unwrap();
        pass &= (hz - want).abs() <= res && (span - 4.0).abs() < 1e-9;
        got.push(format!("{hz:.3}"));
    }
    outcome(pass, format!("segment frequencies [{}] Hz, expected [2, 1, 2] within one bin of 4 s windows", got.join(", ")))
}

fn mode_toggling() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let psi = run_json(Kind::Time, &tmp.path().join("psi"), &["preset=\"fig3b-psi\""], "summary.json");
    let sign = run_json(Kind::Time, &tmp.path().join("sign"), &["preset=\"fig3b\""], "summary.json");
    let i0 = psi["i0"].as_f64().unwrap();
    let segs = segments(&psi);
    let frozen_var = segs[1]["i4_variance"].as_f64().unwrap();
    let restored = segs[2]["dominant_hz"].as_f64().unwrap();
    let res = segs[2]["resolution_hz"].as_f64().unwrap();
    let sign_segs = segments(&sign);
    let sign_var = sign_segs[0]["i4_variance"].as_f64().unwrap();
    let sign_restored = sign_segs[1]["dominant_hz"].as_f64().unwrap();
    let pass = segs.len() == 3
        && frozen_var < 1e-10 * i0 * i0
        && (restored - 2.0).abs() <= res
        && sign_var < 1e-10 * i0 * i0
        && (sign_restored - 2.0).abs() <= sign_segs[1]["resolution_hz"].as_f64().unwrap();
    outcome(
        pass,
        format!(
            "psi=pi i4 variance {frozen_var:.1e}, restored {restored:.3} Hz; sign toggle variance {sign_var:.1e}, restored {sign_restored:.3} Hz"
        ),
    )
}

fn fisher_and_crlb() -> Outcome {
    let worst_fd = Cell::new(0.0f64);
    let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
    let strategy = (0.1f64..5.0, -1.0f64..1.0, -3.0f64..3.0, 1usize..8, -3.0f64..3.0);
    runner
        .run(&strategy, |(mu, b, phi0, n, phi)| {
            let m = FringeSignalModel::new(mu, 1.0, b, phi0, n, 0.1).unwrap();
            let h = 1e-6;
            let d = (m.mean(phi + h) - m.mean(phi - h)) / (2.0 * h);
            let an = m.mean_derivative(phi);
            if an.abs() > 1e-2 {
                let fd_info = 1000.0 * d * d / 0.01;
                let err = ((d - an) / an).abs().max(((fd_info - fisher_information(&m, phi, 1000)) / fd_info).abs());
                worst_fd.set(worst_fd.get().max(err));
            }
            Ok(())
        })
        .unwrap();
    let worst_fd = worst_fd.get();
    let tmp = tempfile::tempdir().unwrap();
    let r = run_json(
        Kind::Fisher,
        tmp.path(),
        &["mu=1.0", "a=1.0", "b=1.0", "sigma=0.1", "N=2", "M=1000", "trials=500", "seed=20260415"],
        "fisher.json",
    );
    let ratio = r["ratio"].as_f64().unwrap();
    let std_ratio = r["std_ratio_vs_n1"].as_f64().unwrap();
    let pass = worst_fd < 1e-6 && (0.9..=1.1).contains(&ratio) && (std_ratio - 0.5).abs() <= 0.05;
    outcome(
        pass,
        format!("FD rel err {worst_fd:.1e} (tol 1e-6); std/CRLB {ratio:.4} in [0.9, 1.1]; std(N=2)/std(N=1) {std_ratio:.4} (0.5 +/- 10%)"),
    )
}

fn harmonic_purity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut worst = f64::INFINITY;
    for n in 1..=8 {
        let s = run_json(Kind::Harmonics, &tmp.path().join(n.to_string()), &[&format!("N={n}")], "summary.json");
        worst = worst.min(s["purity"].as_f64().unwrap_or(0.0));
    }
    let mix = run_json(Kind::ComparePbw, &tmp.path().join("pbw"), &["N=2", "weights=[0.3, 0.7]"], "summary.json");
    let got = mix["purity_pbw_mixed"].as_f64().unwrap();
    let oracle = 0.49 / (0.09 + 0.49);
    let pass = worst > 1.0 - 1e-10 && (got - oracle).abs() < 1e-10;
    outcome(
        pass,
        format!("min CBW purity {worst:.12} (> 1 - 1e-10); mixture purity {got:.12} vs {oracle:.12}"),
    )
}

fn resource_accounting() -> Outcome {
    let model = FringeSignalModel::new(1.0, 1.0, 1.0, 0.0, 1, 0.1).unwrap();
    let mut worst = 0.0f64;
    for n in 1..=16 {
        let r = resource_comparison(n, &model, 1000).unwrap();
        let naive_over_normalized = r.per_chain_bound / r.resource_normalized_bound;
        worst = worst.max((naive_over_normalized - 1.0 / (n as f64).sqrt()).abs());
    }
    outcome(worst < 1e-14, format!("max |naive/normalized - 1/sqrt(N)| = {worst:.1e} over N=1..16"))
}

fn visibility_checks() -> Outcome {
    let grid = full_period_grid(1024);
    let ideal = sweep_fringe(&build_cbw_chain(2, 0.0, 0.0, geometry()).unwrap(), &grid).unwrap();
    let v_ideal = visibility_with(&ideal.i3, Extrema::Exact).unwrap();
    let v_ideal_robust = visibility(&ideal.i3).unwrap();
    let mut spec = build_cbw_chain(2, 0.0, 0.0, geometry()).unwrap();
    spec.blocks[0].arm_transmissions = (1.0, 0.5);
    let imbalanced = sweep_fringe(&spec, &grid).unwrap();
    let v_imb = visibility_with(&imbalanced.i3, Extrema::Exact).unwrap();
    let oracle = 2.0 * 0.5 / (1.0 + 0.25);
    let tmp = tempfile::tempdir().unwrap();
    let s = run_json(Kind::Time, tmp.path(), &["preset=\"fig3d\""], "summary.json");
    let v_preset = s["visibility_i3"].as_f64().unwrap();
    let pass = (v_ideal - 1.0).abs() < 1e-9 && (v_imb - oracle).abs() < 1e-9 && (0.55..=0.65).contains(&v_preset);
    outcome(
        pass,
        format!(
            "ideal V {v_ideal:.12} (robust 2%: {v_ideal_robust:.6}); t=0.5 V {v_imb:.12} vs 0.8; imperfection preset V {v_preset:.4} in [0.55, 0.65]"
        ),
    )
}

const SUITE_CASES: u32 = 10_000;

fn suite<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> bool) -> u32 {
    let mut runner = TestRunner::new(Config { cases: SUITE_CASES, failure_persistence: None, ..Config::default() });
    let mut failures = 0;
    for _ in 0..SUITE_CASES {
        let value = strategy.new_tree(&mut runner).unwrap().current();
        if !test(value) {
            failures += 1;
        }
    }
    failures
}

fn invariant_suites() -> Outcome {
    let any_geometry = {
        let all = CouplingGeometry::all();
        (0..all.len()).prop_map(move |k| all[k])
    };
    let unitarity = suite(
        prop::collection::vec((any::<bool>(), -10.0f64..10.0), 1..=64),
        |elements| {
            let mut u = Matrix2C::identity();
            for (is_bs, phi) in elements {
                let m = if is_bs { bs_matrix() } else { phase_matrix(phi, PhaseConvention::Symmetric).unwrap() };
                u = m.dot(&u);
            }
            u.is_unitary(1e-12) && (u.det().norm() - 1.0).abs() < 1e-12
        },
    );
    let energy = suite((1usize..=8, -10.0f64..10.0, -10.0f64..10.0, any_geometry), |(n, phi, psi, g)| {
        let (i3, i4) = output_intensities(&build_cbw_chain(n, phi, psi, g).unwrap()).unwrap();
        (i3 + i4 - 1.0).abs() < 1e-12
    });
    let global_phase = suite((1usize..=8, -10.0f64..10.0, -10.0f64..10.0, 0.0f64..1.0), |(n, phi, psi, t)| {
        let mut spec = build_cbw_chain(n, phi, psi, geometry()).unwrap();
        spec.blocks[0].arm_transmissions = (1.0, t);
        let (a3, a4) = output_intensities(&spec).unwrap();
        spec.conv = PhaseConvention::UpperArm;
        let (b3, b4) = output_intensities(&spec).unwrap();
        (a3 - b3).abs() < 1e-12 && (a4 - b4).abs() < 1e-12
    });
    let probabilities = suite((1usize..=16, -100.0f64..100.0, 0.0f64..1.0), |(n, phi, w)| {
        let (p0, p1) = projection_probabilities(n, phi);
        let (q0, q1) = pbw_probabilities(n, phi).unwrap();
        let (r0, r1) = pbw_contaminated(2, &[w, 1.0 - w], phi).unwrap();
        p0 + p1 == 1.0 && q0 + q1 == 1.0 && r0 + r1 == 1.0
    });
    let monotone = suite(
        (1usize..=8, -10.0f64..10.0, -10.0f64..10.0, 0usize..15, any::<bool>(), 0usize..15, 0.0f64..1.0),
        |(n, phi, psi, i, upper, j, t)| {
            let spec = build_cbw_chain(n, phi, psi, geometry()).unwrap();
            let len = spec.blocks.len();
            let arm = if upper { Arm::Upper } else { Arm::Lower };
            let blocked = apply_block(&spec, i % len, arm).unwrap();
            let (b3, b4) = output_intensities(&blocked).unwrap();
            let mut lossy = blocked.clone();
            lossy.blocks[j % len].arm_transmissions.1 = t;
            let (l3, l4) = output_intensities(&lossy).unwrap();
            b3 >= 0.0 && b4 >= 0.0 && b3 + b4 <= 1.0 + 1e-12 && l3 + l4 <= 1.0 + 1e-12
        },
    );
    let failures = [unitarity, energy, global_phase, probabilities, monotone];
    outcome(
        failures.iter().all(|&f| f == 0),
        format!(
            "failures per {SUITE_CASES} cases: unitarity {unitarity}, energy {energy}, global phase {global_phase}, P0+P1 {probabilities}, loss bound {monotone}"
        ),
    )
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Outcome, Duration);
    let checks: [Check; 9] = [
        ("two-MZI anchors", two_mzi_anchors, Duration::from_secs(1)),
        ("superresolution scaling", superresolution, Duration::from_secs(5)),
        ("time-domain frequencies", time_domain_frequencies, Duration::from_secs(5)),
        ("mode toggling", mode_toggling, Duration::from_secs(5)),
        ("Fisher information and CRLB", fisher_and_crlb, Duration::from_secs(60)),
        ("harmonic purity", harmonic_purity, Duration::from_secs(5)),
        ("resource accounting", resource_accounting, Duration::from_secs(1)),
        ("visibility", visibility_checks, Duration::from_secs(5)),
        ("invariant suites", invariant_suites, Duration::from_secs(30)),
    ];
    // Calibration is shared by every check; keep it out of the per-check timings.
    let _ = calibrated_geometry();
    let mut failed = 0;
    for (k, (name, check, budget)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {}: {name}: {} ({:.2} s, budget {} s{})",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" },
        );
    }
    println!("acceptance: {} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
