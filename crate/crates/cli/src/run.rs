//! Executes a resolved scenario and writes its artifacts plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use cbw_core::chain::{
    build_cbw_chain, calibrate_convention, calibrated_geometry, full_period_grid, sweep_fringe,
    FringeScan,
};
use cbw_core::metrology::{
    crlb, fisher_information, harmonic_spectrum, monte_carlo_crlb_check, pbw_contaminated,
    pbw_probabilities, resource_comparison, FringeSignalModel, WorkingPoint,
};
use cbw_core::time_domain::{
    dominant_frequency, imperfect_chain, simulate_trace, visibility, visibility_with, Extrema,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::scenario::{Kind, Scenario};

/// Tolerance for energy conservation in loss-free sweeps.
const ENERGY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    /// Contents of the scenario's summary JSON.
    pub summary: Value,
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|source| CliError::Output { path, source })?;
        self.artifacts.push(Artifact {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("JSON values serialise");
        bytes.push(b'\n');
        self.write(name, bytes)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Runs `scenario`, writing into `scenario.output_dir`.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    scenario.validate()?;
    let mut out = Writer::new(&scenario.output_dir)?;
    let summary = match scenario.kind {
        Kind::Sweep => run_sweep(scenario, &mut out)?,
        Kind::Time => run_time(scenario, &mut out)?,
        Kind::Fisher => run_fisher(scenario, &mut out)?,
        Kind::Harmonics => run_harmonics(scenario, &mut out)?,
        Kind::Calibrate => run_calibrate(&mut out)?,
        Kind::ComparePbw => run_compare_pbw(scenario, &mut out)?,
    };
    let manifest = json!({
        "tool": "cbw",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": cbw_core::VERSION,
        "kind": scenario.kind.as_str(),
        "seed": scenario.seed,
        "scenario": scenario,
        "artifacts": out.artifacts,
    });
    let artifacts = out.artifacts.clone();
    out.write_json("manifest.json", &manifest)?;
    Ok(RunOutcome { output_dir: scenario.output_dir.clone(), artifacts, summary })
}

fn geometry() -> Result<cbw_core::chain::CouplingGeometry, CliError> {
    calibrated_geometry().map_err(|e| CliError::Invariant(e.to_string()))
}

fn scan(scenario: &Scenario) -> Result<FringeScan, CliError> {
    let template = imperfect_chain(scenario.n, scenario.psi, &scenario.imperfections(), geometry()?)?;
    let scan = sweep_fringe(&template, &full_period_grid(scenario.grid_points))?;
    if template.is_lossless() {
        let worst = scan
            .i3
            .iter()
            .zip(&scan.i4)
            .map(|(a, b)| (a + b - scan.i0).abs())
            .fold(0.0, f64::max);
        if worst > ENERGY_TOL {
            return Err(CliError::Invariant(format!(
                "loss-free chain lost energy: max |I3 + I4 - I0| = {worst:e}"
            )));
        }
    }
    Ok(scan)
}

fn run_sweep(scenario: &Scenario, out: &mut Writer) -> Result<Value, CliError> {
    let scan = scan(scenario)?;
    out.write("fringe.csv", csv_bytes(|w| scan.write_csv(w)))?;
    let purity = harmonic_spectrum(&scan)?.purity(scenario.n).ok();
    let summary = json!({
        "N": scenario.n,
        "psi": scenario.psi,
        "grid_points": scan.len(),
        "period": scan.period(),
        "purity": purity,
        "visibility_i3": visibility(&scan.i3).ok(),
        "visibility_i3_exact": visibility_with(&scan.i3, Extrema::Exact).ok(),
        "max_i3": scan.i3.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "max_abs_i4_minus_i0": scan.i4.iter().map(|v| (v - scan.i0).abs()).fold(0.0, f64::max),
        "geometry": scan.geometry,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn run_time(scenario: &Scenario, out: &mut Writer) -> Result<Value, CliError> {
    let cfg = scenario.aom_config()?;
    let schedule = scenario.schedule()?;
    let trace = simulate_trace(
        &cfg,
        &schedule,
        &scenario.imperfections(),
        scenario.duration,
        scenario.sample_rate,
        geometry()?,
    )?;
    out.write("trace.csv", csv_bytes(|w| trace.write_csv(w)))?;
    let dt = 1.0 / trace.sample_rate;
    let segments: Vec<Value> = trace
        .segments()
        .into_iter()
        .map(|(id, range)| {
            let t0 = trace.t[range.start];
            let t1 = trace.t[range.end - 1] + dt;
            let i4 = &trace.i4[range.clone()];
            let mean = i4.iter().sum::<f64>() / i4.len() as f64;
            let var = i4.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / i4.len() as f64;
            let mut seg = json!({
                "segment_id": id,
                "t_start": t0,
                "t_end": t1,
                "i4_variance": var,
                "visibility_i3": visibility(&trace.i3[range]).ok(),
            });
            match dominant_frequency(&trace, (t0, t1)) {
                Ok(f) => {
                    seg["dominant_hz"] = json!(f.hz);
                    seg["resolution_hz"] = json!(f.resolution);
                    seg["no_peak"] = json!(f.no_peak);
                }
                Err(e) => seg["frequency_error"] = json!(e.to_string()),
            }
            seg
        })
        .collect();
    let summary = json!({
        "N": scenario.n,
        "samples": trace.len(),
        "sample_rate": trace.sample_rate,
        "i0": trace.i0,
        "offsets_hz": cfg.offsets(),
        "visibility_i3": visibility(&trace.i3).ok(),
        "visibility_i4": visibility(&trace.i4).ok(),
        "segments": segments,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn run_fisher(scenario: &Scenario, out: &mut Writer) -> Result<Value, CliError> {
    let model = FringeSignalModel::new(scenario.mu, scenario.a, scenario.b, scenario.phi0, scenario.n, scenario.sigma)?;
    let phi = scenario.phi.unwrap_or_else(|| model.quadrature_phase());
    let report = monte_carlo_crlb_check(&model, phi, scenario.m, scenario.trials, scenario.seed)?;
    let h = 1e-6;
    let slope = (model.mean(phi + h) - model.mean(phi - h)) / (2.0 * h);
    let fd_fisher = scenario.m as f64 * slope * slope / (model.sigma * model.sigma);
    let analytic = fisher_information(&model, phi, scenario.m);
    let mut value = serde_json::to_value(report).expect("report serialises");
    value["fisher_fd"] = json!(fd_fisher);
    value["fisher_fd_rel_error"] = json!(if analytic > 0.0 { ((analytic - fd_fisher) / analytic).abs() } else { 0.0 });
    value["crlb_optimal"] = json!(crlb(&model, scenario.m, WorkingPoint::Optimal).ok());
    value["resource_comparison"] = json!(resource_comparison(scenario.n, &model, scenario.m).ok());
    if scenario.n > 1 {
        let single = model.with_n_fold(1);
        let base = monte_carlo_crlb_check(&single, single.quadrature_phase(), scenario.m, scenario.trials, scenario.seed)?;
        value["baseline_n1"] = json!(base);
        value["std_ratio_vs_n1"] = json!(report.empirical_std / base.empirical_std);
    }
    out.write_json("fisher.json", &value)?;
    Ok(value)
}

fn run_harmonics(scenario: &Scenario, out: &mut Writer) -> Result<Value, CliError> {
    let scan = scan(scenario)?;
    let spectrum = harmonic_spectrum(&scan)?;
    out.write("harmonics.csv", csv_bytes(|w| spectrum.write_csv(w)))?;
    let summary = json!({
        "N": scenario.n,
        "psi": scenario.psi,
        "purity": spectrum.purity(scenario.n).ok(),
        "signal_power": spectrum.signal_power,
        "ac_power": spectrum.ac_power(),
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn run_calibrate(out: &mut Writer) -> Result<Value, CliError> {
    let cal = calibrate_convention().map_err(|e| CliError::Invariant(e.to_string()))?;
    let value = serde_json::to_value(&cal).expect("calibration serialises");
    out.write_json("calibration.json", &value)?;
    Ok(value)
}

fn run_compare_pbw(scenario: &Scenario, out: &mut Writer) -> Result<Value, CliError> {
    let n = scenario.n;
    let weights = scenario.pbw_weights();
    let grid = full_period_grid(scenario.grid_points);
    let cbw = sweep_fringe(&build_cbw_chain(n, 0.0, scenario.psi, geometry()?)?, &grid)?;
    let mut pure = Vec::with_capacity(grid.len());
    let mut mixed = Vec::with_capacity(grid.len());
    for &phi in &grid {
        pure.push(pbw_probabilities(n, phi)?.0);
        mixed.push(pbw_contaminated(n, &weights, phi)?.0);
    }
    let mut csv = b"phi,cbw_i3,pbw_p0,pbw_mixed_p0\n".to_vec();
    for k in 0..grid.len() {
        csv.extend(format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", grid[k], cbw.i3[k], pure[k], mixed[k]).bytes());
    }
    out.write("compare_pbw.csv", csv)?;
    let mixed_scan = FringeScan::from_samples(grid.clone(), mixed.clone(), mixed.iter().map(|p| 1.0 - p).collect(), n)?;
    let analytic = weights[n - 1].powi(2) / weights.iter().map(|w| w * w).sum::<f64>();
    let summary = json!({
        "N": n,
        "weights": weights,
        "purity_cbw": harmonic_spectrum(&cbw)?.purity(n).ok(),
        "purity_pbw_mixed": harmonic_spectrum(&mixed_scan)?.purity(n).ok(),
        "purity_pbw_mixed_analytic": analytic,
        "max_abs_cbw_minus_pbw": cbw.i3.iter().zip(&pure).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}
