//! FFT peak picking shared by fringe-period and modulation-frequency extraction.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    /// Periodic Hann, `0.5 − 0.5·cos(2πk/n)`.
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Location and strength of the strongest non-DC spectral line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakEstimate {
    /// Fractional bin index after parabolic interpolation.
    pub bin: f64,
    /// `|X_k|²` at the integer peak bin of the mean-removed signal.
    pub peak_power: f64,
    /// `|X_0|²` of the windowed signal before mean removal.
    pub dc_power: f64,
}

/// Complex DFT `X_k = Σ x_j e^{−2πijk/n}` (unnormalised).
pub fn dft(signal: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    let fft = FftPlanner::new().plan_fft_forward(buf.len());
    fft.process(&mut buf);
    buf
}

/// Strongest line in bins `1..=n/2` of the mean-removed, windowed signal.
///
/// Returns `None` for fewer than four samples.
pub fn dominant_peak(signal: &[f64], window: Window) -> Option<PeakEstimate> {
    let n = signal.len();
    if n < 4 {
        return None;
    }
    let w = window.weights(n);
    let mean = signal.iter().sum::<f64>() / n as f64;
    let dc: f64 = signal.iter().zip(&w).map(|(x, w)| x * w).sum();
    let centered: Vec<f64> = signal.iter().zip(&w).map(|(x, w)| (x - mean) * w).collect();
    let spec = dft(&centered);
    let half = n / 2;
    let power: Vec<f64> = spec[..=half].iter().map(|z| z.norm_sqr()).collect();

    let mut k = 1;
    for j in 2..=half {
        if power[j] > power[k] {
            k = j;
        }
    }
    let mut bin = k as f64;
    if k > 1 && k < half {
        let (a, b, c) = (power[k - 1].sqrt(), power[k].sqrt(), power[k + 1].sqrt());
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            let delta = 0.5 * (a - c) / denom;
            if delta.abs() <= 0.5 {
                bin += delta;
            }
        }
    }
    Some(PeakEstimate {
        bin,
        peak_power: power[k],
        dc_power: dc * dc,
    })
}
