//! Phase estimation on N-fold fringes.
//!
//! The detected signal is `x_k = μ(a + b·cos(Nφ + φ0)) + n_k` with Gaussian
//! noise `n_k ~ N(0, σ²)`. Everything here treats `(μ, a, b, φ0, N, σ)` as
//! known and `φ` as the single unknown.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{self, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::FringeScan;
use crate::error::{CbwError, Result};
use crate::rng::substream;
use crate::spectrum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeSignalModel {
    /// Mean detected intensity.
    pub mu: f64,
    /// DC offset.
    pub a: f64,
    /// Visibility, in `[-1, 1]`.
    pub b: f64,
    pub phi0: f64,
    pub n_fold: usize,
    /// Noise standard deviation, same units as `mu`.
    pub sigma: f64,
}

impl FringeSignalModel {
    pub fn new(mu: f64, a: f64, b: f64, phi0: f64, n_fold: usize, sigma: f64) -> Result<Self> {
        let m = Self { mu, a, b, phi0, n_fold, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.a, self.b, self.phi0, self.sigma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CbwError::domain("signal model parameters must be finite"));
        }
        if self.mu <= 0.0 {
            return Err(CbwError::domain(format!("mu must be positive, got {}", self.mu)));
        }
        if self.sigma <= 0.0 {
            return Err(CbwError::domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(-1.0..=1.0).contains(&self.b) {
            return Err(CbwError::domain(format!("visibility b must lie in [-1, 1], got {}", self.b)));
        }
        if self.n_fold < 1 {
            return Err(CbwError::domain("n_fold must be at least 1"));
        }
        Ok(())
    }

    pub fn with_n_fold(&self, n_fold: usize) -> Self {
        Self { n_fold, ..*self }
    }

    fn n(&self) -> f64 {
        self.n_fold as f64
    }

    pub fn mean(&self, phi: f64) -> f64 {
        self.mu * (self.a + self.b * (self.n() * phi + self.phi0).cos())
    }

    /// `∂mean/∂φ = −bμN·sin(Nφ + φ0)`.
    pub fn mean_derivative(&self, phi: f64) -> f64 {
        -self.b * self.mu * self.n() * (self.n() * phi + self.phi0).sin()
    }

    fn mean_second_derivative(&self, phi: f64) -> f64 {
        -self.b * self.mu * self.n() * self.n() * (self.n() * phi + self.phi0).cos()
    }

    pub fn fringe_period(&self) -> f64 {
        TAU / self.n()
    }

    /// A phase where `Nφ + φ0 = π/2`, the point of maximal slope.
    pub fn quadrature_phase(&self) -> f64 {
        (FRAC_PI_2 - self.phi0) / self.n()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub model: FringeSignalModel,
    pub phi_true: f64,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn draw_samples<R: Rng>(model: &FringeSignalModel, phi: f64, m: usize, rng: &mut R) -> Vec<f64> {
    let mean = model.mean(phi);
    let noise = Normal::new(0.0, model.sigma).expect("sigma validated positive");
    (0..m).map(|_| mean + noise.sample(rng)).collect()
}

/// `M` Gaussian draws around the model mean at `φ`.
pub fn sample_signal(model: &FringeSignalModel, phi: f64, m: usize, seed: u64) -> Result<SampleSet> {
    model.validate()?;
    if m < 1 {
        return Err(CbwError::domain("sample count M must be at least 1"));
    }
    let mut rng = substream(seed, "samples", 0);
    Ok(SampleSet {
        values: draw_samples(model, phi, m, &mut rng),
        model: *model,
        phi_true: phi,
        seed,
    })
}

/// `I(φ) = (b²μ²N²/σ²)·M·sin²(Nφ + φ0)`.
pub fn fisher_information(model: &FringeSignalModel, phi: f64, m: usize) -> f64 {
    let slope = model.mean_derivative(phi);
    m as f64 * slope * slope / (model.sigma * model.sigma)
}

/// Where the bound is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkingPoint {
    Optimal,
    At(f64),
}

/// Cramér-Rao bound on the phase standard deviation.
///
/// At the optimal working point this is `σ/(μ|b|N√M)`; elsewhere `1/√I(φ)`.
pub fn crlb(model: &FringeSignalModel, m: usize, point: WorkingPoint) -> Result<f64> {
    model.validate()?;
    if m < 1 {
        return Err(CbwError::domain("sample count M must be at least 1"));
    }
    match point {
        WorkingPoint::Optimal => {
            if model.b == 0.0 {
                return Err(CbwError::UnboundedCrlb { phi: model.quadrature_phase() });
            }
            Ok(model.sigma / (model.mu * model.b.abs() * model.n() * (m as f64).sqrt()))
        }
        WorkingPoint::At(phi) => {
            let info = fisher_information(model, phi, m);
            if info > 0.0 {
                Ok(1.0 / info.sqrt())
            } else {
                Err(CbwError::UnboundedCrlb { phi })
            }
        }
    }
}

/// The two ways of counting resources for an N-MZI chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceComparison {
    pub n_fold: usize,
    pub m: usize,
    /// `σ/(μ|b|N√M)`: N counted once, as the phase multiplier.
    pub per_chain_bound: f64,
    /// `σ/(μ|b|√N·√M)`: N² counted as i.i.d. resources.
    pub resource_normalized_bound: f64,
    /// `per_chain_bound / resource_normalized_bound = 1/√N`.
    pub ratio: f64,
    /// False: with resources counted as N², the chain sits at the shot-noise scaling.
    pub beats_shot_noise_limit: bool,
}

pub fn resource_comparison(n: usize, model: &FringeSignalModel, m: usize) -> Result<ResourceComparison> {
    if n < 1 {
        return Err(CbwError::domain("N must be at least 1"));
    }
    let per_chain_bound = crlb(&model.with_n_fold(n), m, WorkingPoint::Optimal)?;
    let base = crlb(&model.with_n_fold(1), m, WorkingPoint::Optimal)?;
    let resource_normalized_bound = base / (n as f64).sqrt();
    Ok(ResourceComparison {
        n_fold: n,
        m,
        per_chain_bound,
        resource_normalized_bound,
        ratio: per_chain_bound / resource_normalized_bound,
        beats_shot_noise_limit: false,
    })
}

/// Number of coarse grid points before local refinement.
pub const MLE_COARSE_POINTS: usize = 128;
const MLE_TOL: f64 = 1e-10;

/// Gaussian maximum-likelihood estimate of φ inside `search`.
///
/// With known σ the likelihood depends on the data only through the sample
/// mean, so this minimises `(x̄ − mean(φ))²`: a coarse grid, then a
/// safeguarded Newton iteration on the derivative inside the bracket around
/// the best grid point.
pub fn mle_estimate(samples: &SampleSet, model: &FringeSignalModel, search: (f64, f64)) -> Result<f64> {
    model.validate()?;
    if samples.is_empty() {
        return Err(CbwError::domain("sample set is empty"));
    }
    if model.b == 0.0 {
        return Err(CbwError::Unidentifiable);
    }
    let (lo, hi) = search;
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(CbwError::domain("search interval must be finite with lo < hi"));
    }
    let period = model.fringe_period();
    if hi - lo >= period {
        return Err(CbwError::AmbiguousInterval { width: hi - lo, period });
    }
    let xbar = samples.mean();
    let cost = |phi: f64| {
        let r = xbar - model.mean(phi);
        r * r
    };
    // Half-derivatives of the cost: g = −(x̄ − m)m', g' = m'² − (x̄ − m)m''.
    let grad = |phi: f64| -(xbar - model.mean(phi)) * model.mean_derivative(phi);
    let hess = |phi: f64| {
        let d = model.mean_derivative(phi);
        d * d - (xbar - model.mean(phi)) * model.mean_second_derivative(phi)
    };

    let step = (hi - lo) / (MLE_COARSE_POINTS - 1) as f64;
    let grid = |k: usize| if k == MLE_COARSE_POINTS - 1 { hi } else { lo + step * k as f64 };
    let best = (0..MLE_COARSE_POINTS)
        .min_by(|&i, &j| cost(grid(i)).total_cmp(&cost(grid(j))))
        .expect("grid is non-empty");

    let mut a = grid(best.saturating_sub(1));
    let mut b = grid((best + 1).min(MLE_COARSE_POINTS - 1));
    let (ga, gb) = (grad(a), grad(b));
    if ga.signum() == gb.signum() && ga != 0.0 {
        // No stationary point in the bracket: the minimum sits on an end.
        return Ok(if cost(a) <= cost(b) { a } else { b });
    }
    if ga > 0.0 {
        std::mem::swap(&mut a, &mut b);
    }
    // Invariant: grad(a) <= 0 <= grad(b).
    let mut x = grid(best);
    for _ in 0..200 {
        let g = grad(x);
        if g == 0.0 {
            return Ok(x);
        }
        if g < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let h = hess(x);
        let newton = if h > 0.0 { x - g / h } else { f64::NAN };
        let inside = newton.is_finite() && (newton - a) * (newton - b) < 0.0;
        let next = if inside { newton } else { 0.5 * (a + b) };
        if (next - x).abs() < MLE_TOL {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub model: FringeSignalModel,
    pub phi_true: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub trials: usize,
    pub fisher: f64,
    pub crlb: f64,
    pub empirical_std: f64,
    pub empirical_bias: f64,
    pub ratio: f64,
    pub seed: u64,
}

impl MonteCarloReport {
    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::other)
    }
}

/// Search window of ±0.45 of a fringe half-period around `phi_true`.
pub fn default_search(model: &FringeSignalModel, phi_true: f64) -> (f64, f64) {
    let half = 0.45 * model.fringe_period() / 2.0;
    (phi_true - half, phi_true + half)
}

/// Repeated sample/estimate cycles at a quadrature point; each trial draws
/// from its own substream so the result is independent of scheduling.
pub fn monte_carlo_crlb_check(
    model: &FringeSignalModel,
    phi_true: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    model.validate()?;
    if m < 1 {
        return Err(CbwError::domain("sample count M must be at least 1"));
    }
    if trials < 2 {
        return Err(CbwError::domain("at least two trials are needed for a spread estimate"));
    }
    let offset = model.n() * phi_true + model.phi0 - FRAC_PI_2;
    let wrapped = offset - (offset / std::f64::consts::PI).round() * std::f64::consts::PI;
    if wrapped.abs() > 0.1 {
        log::warn!("phi_true is {wrapped:.3} rad away from quadrature; CRLB comparison is not at the optimum");
    }
    let search = default_search(model, phi_true);
    let estimates: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, "mc-trial", trial);
            let values = draw_samples(model, phi_true, m, &mut rng);
            let set = SampleSet { values, model: *model, phi_true, seed };
            mle_estimate(&set, model, search)
        })
        .collect::<Result<_>>()?;
    let mean = estimates.iter().sum::<f64>() / trials as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let empirical_std = var.sqrt();
    let bound = crlb(model, m, WorkingPoint::At(phi_true))?;
    Ok(MonteCarloReport {
        model: *model,
        phi_true,
        m,
        trials,
        fisher: fisher_information(model, phi_true, m),
        crlb: bound,
        empirical_std,
        empirical_bias: mean - phi_true,
        ratio: empirical_std / bound,
        seed,
    })
}

/// One-sided Fourier decomposition of `i3` over a full `[0, 2π)` scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpectrum {
    /// `c_m = (1/n)·Σ x_k e^{−imφ_k}` for `m = 0..=n/2`.
    pub coefficients: Vec<Complex64>,
    /// Share of the mean-square signal carried by harmonic `m`
    /// (`|c_m|²`, doubled for `0 < m < n/2`).
    pub power: Vec<f64>,
    /// Mean-square signal `(1/n)·Σ x_k²`.
    pub signal_power: f64,
}

impl HarmonicSpectrum {
    pub fn ac_power(&self) -> f64 {
        self.power.iter().skip(1).sum()
    }

    /// `P_N / Σ_{m≥1} P_m`.
    pub fn purity(&self, n: usize) -> Result<f64> {
        let ac = self.ac_power();
        if ac <= 1e-24 * self.signal_power.max(f64::MIN_POSITIVE) || ac == 0.0 {
            return Err(CbwError::ZeroAcPower);
        }
        Ok(self.power.get(n).copied().unwrap_or(0.0) / ac)
    }

    /// CSV with header `m,re,im,power`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "m,re,im,power")?;
        for (m, (c, p)) in self.coefficients.iter().zip(&self.power).enumerate() {
            writeln!(w, "{m},{:.16e},{:.16e},{:.16e}", c.re, c.im, p)?;
        }
        Ok(())
    }
}

pub fn harmonic_spectrum(scan: &FringeScan) -> Result<HarmonicSpectrum> {
    let n = scan.len();
    if n < 2 {
        return Err(CbwError::domain("harmonic analysis needs at least two samples"));
    }
    let step = TAU / n as f64;
    let tol = 1e-9 * step;
    let uniform = scan
        .phi
        .iter()
        .enumerate()
        .all(|(k, p)| (p - step * k as f64).abs() <= tol.max(1e-12));
    if !uniform {
        return Err(CbwError::domain(
            "harmonic analysis needs a uniform grid covering exactly [0, 2π)",
        ));
    }
    let raw = spectrum::dft(&scan.i3);
    let half = n / 2;
    let scale = 1.0 / n as f64;
    let coefficients: Vec<Complex64> = raw[..=half].iter().map(|z| z * scale).collect();
    let power = coefficients
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let p = c.norm_sqr();
            if m == 0 || (n.is_multiple_of(2) && m == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let signal_power = scan.i3.iter().map(|x| x * x).sum::<f64>() * scale;
    Ok(HarmonicSpectrum { coefficients, power, signal_power })
}

/// Ideal N00N fringes `((1 + cos Nφ)/2, (1 − cos Nφ)/2)`.
pub fn pbw_probabilities(n: usize, phi: f64) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(CbwError::domain("N must be at least 1"));
    }
    let p0 = 0.5 * (1.0 + (n as f64 * phi).cos());
    Ok((p0, 1.0 - p0))
}

/// Mixture `P0 = Σ_m w_m (1 + cos mφ)/2` over harmonics `m = 1..=N`.
pub fn pbw_contaminated(n: usize, weights: &[f64], phi: f64) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(CbwError::domain("N must be at least 1"));
    }
    if weights.len() != n {
        return Err(CbwError::domain(format!(
            "expected {n} harmonic weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(CbwError::domain("harmonic weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(CbwError::domain(format!("harmonic weights must sum to 1, got {total}")));
    }
    let p0: f64 = weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * 0.5 * (1.0 + ((k + 1) as f64 * phi).cos()))
        .sum();
    Ok((p0, 1.0 - p0))
}
