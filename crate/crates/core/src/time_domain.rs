//! AOM-driven time traces.
//!
//! Each control MZI carries an acousto-optic modulator in both arms. Only the
//! offset `Δf = f_upper − f_lower` matters, so control phases grow linearly in
//! time, `φ_j(t) = 2πΔf_j·t + φ_j(0)`. A schedule of events blocks arms,
//! changes the dummy phase or retunes a modulator while the trace runs.

use std::f64::consts::TAU;
use std::io::{self, Write};
use std::ops::Range;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chain::{build_cbw_chain, output_intensities, Arm, ChainSpec, CouplingGeometry};
use crate::error::{CbwError, Result};
use crate::rng::substream;
use crate::spectrum::{self, Window};

/// AOM carrier frequency, common to every arm.
pub const CARRIER_HZ: f64 = 80_000_000.0;
pub const DEFAULT_DURATION_S: f64 = 12.0;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
pub const DEFAULT_OFFSET_HZ: f64 = 1.0;
/// Minimum ratio of sample rate to the fastest possible modulation.
pub const OVERSAMPLING: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AomChannel {
    pub f_upper: f64,
    pub f_lower: f64,
    /// `φ_j(0)` in radians.
    pub initial_phase: f64,
}

impl AomChannel {
    pub fn offset(&self) -> f64 {
        self.f_upper - self.f_lower
    }
}

/// Modulator settings for the control MZIs, in chain order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AomConfig {
    pub channels: Vec<AomChannel>,
    /// Initial `ψ` of every dummy MZI.
    pub dummy_phase: f64,
}

impl AomConfig {
    /// Lower arms at the carrier, upper arms at `carrier ± Δf`, alternating
    /// in sign along the chain.
    pub fn alternating(n: usize, offset_hz: f64) -> Self {
        let channels = (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                AomChannel {
                    f_upper: CARRIER_HZ + sign * offset_hz,
                    f_lower: CARRIER_HZ,
                    initial_phase: 0.0,
                }
            })
            .collect();
        Self { channels, dummy_phase: 0.0 }
    }

    pub fn from_frequencies(f_upper: &[f64], f_lower: &[f64]) -> Result<Self> {
        if f_upper.len() != f_lower.len() {
            return Err(CbwError::domain(format!(
                "{} upper and {} lower frequencies given",
                f_upper.len(),
                f_lower.len()
            )));
        }
        let channels = f_upper
            .iter()
            .zip(f_lower)
            .map(|(&f_upper, &f_lower)| AomChannel { f_upper, f_lower, initial_phase: 0.0 })
            .collect();
        let cfg = Self { channels, dummy_phase: 0.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_controls(&self) -> usize {
        self.channels.len()
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.channels.iter().map(AomChannel::offset).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(CbwError::domain("AOM configuration needs at least one control MZI"));
        }
        let finite = self
            .channels
            .iter()
            .all(|c| c.f_upper.is_finite() && c.f_lower.is_finite() && c.initial_phase.is_finite());
        if !finite || !self.dummy_phase.is_finite() {
            return Err(CbwError::domain("AOM frequencies and phases must be finite"));
        }
        Ok(())
    }
}

/// Control phases at time `t ≥ 0`.
pub fn phases_at(t: f64, cfg: &AomConfig) -> Vec<f64> {
    cfg.channels
        .iter()
        .map(|c| TAU * c.offset() * t + c.initial_phase)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EventAction {
    /// `block` indexes the full chain, dummies included.
    BlockArm { block: usize, arm: Arm },
    UnblockArm { block: usize, arm: Arm },
    SetDummyPhase { psi: f64 },
    /// `mzi` indexes the control MZIs only.
    SetUpperFrequency { mzi: usize, hz: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
}

/// Events with strictly increasing times.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    events: Vec<Event>,
}

impl EventSchedule {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for e in &events {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(CbwError::domain(format!("event time {} must be finite and >= 0", e.time)));
            }
            match e.action {
                EventAction::SetDummyPhase { psi } if !psi.is_finite() => {
                    return Err(CbwError::domain("dummy phase must be finite"));
                }
                EventAction::SetUpperFrequency { hz, .. } if !hz.is_finite() => {
                    return Err(CbwError::domain("AOM frequency must be finite"));
                }
                _ => {}
            }
        }
        if let Some(w) = events.windows(2).find(|w| w[1].time <= w[0].time) {
            return Err(CbwError::domain(format!(
                "event times must be strictly increasing ({} then {})",
                w[0].time, w[1].time
            )));
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks block and MZI indices against a chain of `n_controls` control MZIs.
    pub fn validate_for(&self, n_controls: usize) -> Result<()> {
        let n_blocks = chain_length(n_controls);
        for e in &self.events {
            match e.action {
                EventAction::BlockArm { block, .. } | EventAction::UnblockArm { block, .. } => {
                    if block >= n_blocks {
                        return Err(CbwError::domain(format!(
                            "event at t = {} references block {block}, chain has {n_blocks} blocks",
                            e.time
                        )));
                    }
                }
                EventAction::SetUpperFrequency { mzi, .. } => {
                    if mzi >= n_controls {
                        return Err(CbwError::domain(format!(
                            "event at t = {} references control MZI {mzi}, chain has {n_controls}",
                            e.time
                        )));
                    }
                }
                EventAction::SetDummyPhase { .. } => {}
            }
        }
        Ok(())
    }
}

fn chain_length(n_controls: usize) -> usize {
    (2 * n_controls).saturating_sub(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImperfectionModel {
    /// Amplitude transmissions per chain block; empty means all ideal.
    pub arm_transmissions: Vec<(f64, f64)>,
    /// Beam-splitter power reflectivity minus 1/2, in `[-0.5, 0.5]`.
    pub bs_reflectivity_deviation: f64,
    /// Standard deviation of per-sample Gaussian phase increments, radians.
    pub phase_jitter_sigma: f64,
    pub rng_seed: u64,
}

impl Default for ImperfectionModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ImperfectionModel {
    pub fn ideal() -> Self {
        Self {
            arm_transmissions: Vec::new(),
            bs_reflectivity_deviation: 0.0,
            phase_jitter_sigma: 0.0,
            rng_seed: 0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.arm_transmissions.iter().all(|&t| t == (1.0, 1.0))
            && self.bs_reflectivity_deviation == 0.0
            && self.phase_jitter_sigma == 0.0
    }

    pub fn validate(&self, n_blocks: usize) -> Result<()> {
        if !self.arm_transmissions.is_empty() && self.arm_transmissions.len() != n_blocks {
            return Err(CbwError::domain(format!(
                "arm_transmissions has {} entries, chain has {n_blocks} blocks",
                self.arm_transmissions.len()
            )));
        }
        let in_range = |t: f64| (0.0..=1.0).contains(&t);
        if self.arm_transmissions.iter().any(|&(u, l)| !in_range(u) || !in_range(l)) {
            return Err(CbwError::domain("arm transmissions must lie in [0, 1]"));
        }
        if !(-0.5..=0.5).contains(&self.bs_reflectivity_deviation) {
            return Err(CbwError::domain("bs_reflectivity_deviation must lie in [-0.5, 0.5]"));
        }
        if !(self.phase_jitter_sigma >= 0.0 && self.phase_jitter_sigma.is_finite()) {
            return Err(CbwError::domain("phase_jitter_sigma must be finite and >= 0"));
        }
        Ok(())
    }

    /// Mixing-angle deviation for splitters with reflectivity `1/2 + δ`.
    pub fn bs_angle_deviation(&self) -> f64 {
        if self.bs_reflectivity_deviation == 0.0 {
            return 0.0;
        }
        (0.5 + self.bs_reflectivity_deviation).sqrt().asin() - std::f64::consts::FRAC_PI_4
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub t: Vec<f64>,
    pub i3: Vec<f64>,
    pub i4: Vec<f64>,
    /// Number of events applied before each sample.
    pub segment_id: Vec<usize>,
    pub sample_rate: f64,
    pub i0: f64,
}

impl TimeTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Contiguous runs of equal `segment_id`.
    pub fn segments(&self) -> Vec<(usize, Range<usize>)> {
        let mut out: Vec<(usize, Range<usize>)> = Vec::new();
        for (k, &id) in self.segment_id.iter().enumerate() {
            match out.last_mut() {
                Some((last, range)) if *last == id => range.end = k + 1,
                _ => out.push((id, k..k + 1)),
            }
        }
        out
    }

    /// Sample indices with `t0 <= t < t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Range<usize> {
        let start = self.t.partition_point(|&t| t < t0);
        let end = self.t.partition_point(|&t| t < t1);
        start..end.max(start)
    }

    /// CSV with header `t,i3,i4,segment_id`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,i3,i4,segment_id")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{}",
                self.t[k], self.i3[k], self.i4[k], self.segment_id[k]
            )?;
        }
        Ok(())
    }
}

/// Highest modulation frequency the configuration can reach over the schedule.
pub fn expected_modulation_bound(cfg: &AomConfig, schedule: &EventSchedule) -> f64 {
    let mut offsets = cfg.offsets();
    let mut bound: f64 = offsets.iter().map(|f| f.abs()).sum();
    for e in schedule.events() {
        if let EventAction::SetUpperFrequency { mzi, hz } = e.action {
            if let Some(o) = offsets.get_mut(mzi) {
                *o = hz - cfg.channels[mzi].f_lower;
            }
            bound = bound.max(offsets.iter().map(|f| f.abs()).sum());
        }
    }
    bound
}

/// Chain template carrying the imperfections, with zero control phases.
pub fn imperfect_chain(
    n_controls: usize,
    psi: f64,
    imperfections: &ImperfectionModel,
    geometry: CouplingGeometry,
) -> Result<ChainSpec> {
    let mut spec = build_cbw_chain(n_controls, 0.0, psi, geometry)?;
    imperfections.validate(spec.blocks.len())?;
    for (block, &t) in spec.blocks.iter_mut().zip(&imperfections.arm_transmissions) {
        block.arm_transmissions = t;
    }
    spec.bs_deviation = imperfections.bs_angle_deviation();
    Ok(spec)
}

struct PhaseTrack {
    t_ref: f64,
    phase_ref: f64,
    offset: f64,
}

impl PhaseTrack {
    fn at(&self, t: f64) -> f64 {
        if self.t_ref == 0.0 {
            TAU * self.offset * t + self.phase_ref
        } else {
            TAU * self.offset * (t - self.t_ref) + self.phase_ref
        }
    }

    /// Changes frequency at `t` without a phase jump.
    fn retune(&mut self, t: f64, offset: f64) {
        self.phase_ref = self.at(t);
        self.t_ref = t;
        self.offset = offset;
    }
}

/// Samples the output ports at `t_k = k / sample_rate` for `k < duration·sample_rate`.
///
/// Events at `t_e` take effect from the first sample with `t_k >= t_e`.
/// Phase jitter is a Gaussian random walk added to each control phase, drawn
/// from one substream per control MZI.
pub fn simulate_trace(
    cfg: &AomConfig,
    schedule: &EventSchedule,
    imperfections: &ImperfectionModel,
    duration: f64,
    sample_rate: f64,
    geometry: CouplingGeometry,
) -> Result<TimeTrace> {
    cfg.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(CbwError::domain(format!("duration must be positive, got {duration}")));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(CbwError::domain(format!("sample_rate must be positive, got {sample_rate}")));
    }
    let n_controls = cfg.n_controls();
    schedule.validate_for(n_controls)?;
    let bound = expected_modulation_bound(cfg, schedule);
    if sample_rate < OVERSAMPLING * bound {
        return Err(CbwError::domain(format!(
            "sample_rate {sample_rate} Hz is below {OVERSAMPLING}x the fastest modulation ({bound} Hz)"
        )));
    }
    let mut spec = imperfect_chain(n_controls, cfg.dummy_phase, imperfections, geometry)?;
    let n_samples = (duration * sample_rate).round() as usize;
    if n_samples == 0 {
        return Err(CbwError::domain("duration is shorter than one sample"));
    }

    let mut tracks: Vec<PhaseTrack> = cfg
        .channels
        .iter()
        .map(|c| PhaseTrack { t_ref: 0.0, phase_ref: c.initial_phase, offset: c.offset() })
        .collect();
    let sigma = imperfections.phase_jitter_sigma;
    let mut jitter = vec![0.0; n_controls];
    let mut streams: Vec<_> = (0..n_controls as u64)
        .map(|j| substream(imperfections.rng_seed, "phase-jitter", j))
        .collect();
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"));

    let events = schedule.events();
    let mut next_event = 0;
    let mut trace = TimeTrace {
        t: Vec::with_capacity(n_samples),
        i3: Vec::with_capacity(n_samples),
        i4: Vec::with_capacity(n_samples),
        segment_id: Vec::with_capacity(n_samples),
        sample_rate,
        i0: spec.input_intensity(),
    };
    let mut phases = vec![0.0; n_controls];
    for k in 0..n_samples {
        let t = k as f64 / sample_rate;
        while next_event < events.len() && events[next_event].time <= t {
            let e = events[next_event];
            match e.action {
                EventAction::BlockArm { block, arm } => {
                    spec = crate::chain::apply_block(&spec, block, arm)?;
                }
                EventAction::UnblockArm { block, arm } => {
                    spec = crate::chain::remove_block(&spec, block, arm)?;
                }
                EventAction::SetDummyPhase { psi } => spec = spec.with_dummy_phase(psi),
                EventAction::SetUpperFrequency { mzi, hz } => {
                    let offset = hz - cfg.channels[mzi].f_lower;
                    tracks[mzi].retune(e.time, offset);
                }
            }
            next_event += 1;
        }
        if let Some(normal) = &normal {
            if k > 0 {
                for (j, rng) in streams.iter_mut().enumerate() {
                    jitter[j] += normal.sample(rng);
                }
            }
        }
        for (j, track) in tracks.iter().enumerate() {
            phases[j] = track.at(t) + jitter[j];
        }
        let (i3, i4) = output_intensities(&spec.with_control_phases(&phases)?)?;
        trace.t.push(t);
        trace.i3.push(i3);
        trace.i4.push(i4);
        trace.segment_id.push(next_event);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    I3,
    I4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    /// Peak frequency, 0 when `no_peak` is set.
    pub hz: f64,
    /// FFT bin width over the analysed window.
    pub resolution: f64,
    pub no_peak: bool,
}

/// Relative floor below which a spectral line counts as absent.
pub const NO_PEAK_RATIO: f64 = 1e-6;

/// Hann-windowed FFT peak of `i3` over `t0 <= t < t1`.
pub fn dominant_frequency(trace: &TimeTrace, window: (f64, f64)) -> Result<FrequencyEstimate> {
    dominant_frequency_of(trace, Channel::I3, window)
}

pub fn dominant_frequency_of(
    trace: &TimeTrace,
    channel: Channel,
    (t0, t1): (f64, f64),
) -> Result<FrequencyEstimate> {
    if t0.partial_cmp(&t1) != Some(std::cmp::Ordering::Less) {
        return Err(CbwError::domain(format!("analysis window [{t0}, {t1}) is empty")));
    }
    let range = trace.window(t0, t1);
    let values = match channel {
        Channel::I3 => &trace.i3[range],
        Channel::I4 => &trace.i4[range],
    };
    let n = values.len();
    if n < 8 {
        return Err(CbwError::domain(format!(
            "analysis window [{t0}, {t1}) holds {n} samples, need at least 8"
        )));
    }
    let resolution = trace.sample_rate / n as f64;
    let peak = spectrum::dominant_peak(values, Window::Hann).expect("n >= 8");
    let floor = 1e-24 * (n as f64 * trace.i0).powi(2);
    if peak.peak_power <= NO_PEAK_RATIO * peak.dc_power || peak.peak_power <= floor {
        return Ok(FrequencyEstimate { hz: 0.0, resolution, no_peak: true });
    }
    let hz = peak.bin * resolution;
    let span = n as f64 / trace.sample_rate;
    if hz * span < 2.0 {
        return Err(CbwError::domain(format!(
            "window of {span} s holds fewer than two periods of the {hz:.3} Hz modulation"
        )));
    }
    Ok(FrequencyEstimate { hz, resolution, no_peak: false })
}

/// How `Imax` and `Imin` are taken from the samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrema {
    /// Plain maximum and minimum.
    Exact,
    /// Means of the top and bottom fraction of sorted samples (at least one each).
    Robust(f64),
}

pub const ROBUST_FRACTION: f64 = 0.02;

/// `(Imax − Imin)/(Imax + Imin)` with robust extrema.
pub fn visibility(values: &[f64]) -> Result<f64> {
    visibility_with(values, Extrema::Robust(ROBUST_FRACTION))
}

pub fn visibility_with(values: &[f64], extrema: Extrema) -> Result<f64> {
    if values.is_empty() {
        return Err(CbwError::domain("visibility of an empty array"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CbwError::domain("intensities must be finite and non-negative"));
    }
    let (hi, lo) = match extrema {
        Extrema::Exact => (
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            values.iter().copied().fold(f64::INFINITY, f64::min),
        ),
        Extrema::Robust(fraction) => {
            if !(fraction > 0.0 && fraction <= 0.5) {
                return Err(CbwError::domain("robust fraction must lie in (0, 0.5]"));
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let k = ((fraction * sorted.len() as f64).ceil() as usize).max(1);
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            (mean(&sorted[sorted.len() - k..]), mean(&sorted[..k]))
        }
    };
    if hi + lo <= 0.0 {
        return Err(CbwError::domain("visibility of an all-zero signal"));
    }
    Ok(((hi - lo) / (hi + lo)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{calibrated_geometry, sweep_fringe};
    use std::f64::consts::PI;

    fn geometry() -> CouplingGeometry {
        calibrated_geometry().unwrap()
    }

    fn ideal_trace(n: usize, schedule: &EventSchedule) -> TimeTrace {
        simulate_trace(
            &AomConfig::alternating(n, DEFAULT_OFFSET_HZ),
            schedule,
            &ImperfectionModel::ideal(),
            DEFAULT_DURATION_S,
            DEFAULT_SAMPLE_RATE_HZ,
            geometry(),
        )
        .unwrap()
    }

    fn event(time: f64, action: EventAction) -> Event {
        Event { time, action }
    }

    #[test]
    fn phase_law_examples() {
        let cfg = AomConfig::alternating(1, 1.0);
        assert!((phases_at(0.25, &cfg)[0] - PI / 2.0).abs() < 1e-15);
        let cfg = AomConfig::from_frequencies(&[80_000_001.0, 79_999_999.0], &[80_000_000.0; 2]).unwrap();
        for t in [0.0, 0.3, 1.7, 11.9] {
            let p = phases_at(t, &cfg);
            assert_eq!(p, vec![TAU * t, -TAU * t]);
        }
        let still = AomConfig::from_frequencies(&[CARRIER_HZ], &[CARRIER_HZ]).unwrap();
        assert_eq!(phases_at(5.0, &still), vec![0.0]);
    }

    #[test]
    fn schedule_validation() {
        let a = EventAction::SetDummyPhase { psi: PI };
        assert!(EventSchedule::new(vec![event(1.0, a), event(1.0, a)]).is_err());
        assert!(EventSchedule::new(vec![event(2.0, a), event(1.0, a)]).is_err());
        assert!(EventSchedule::new(vec![event(-1.0, a)]).is_err());
        let bad_block = EventSchedule::new(vec![event(1.0, EventAction::BlockArm { block: 3, arm: Arm::Upper })]).unwrap();
        assert!(bad_block.validate_for(2).is_err());
        assert!(bad_block.validate_for(3).is_ok());
        let bad_mzi = EventSchedule::new(vec![event(1.0, EventAction::SetUpperFrequency { mzi: 2, hz: 1.0 })]).unwrap();
        assert!(simulate_trace(
            &AomConfig::alternating(2, 1.0),
            &bad_mzi,
            &ImperfectionModel::ideal(),
            1.0,
            100.0,
            geometry()
        )
        .is_err());
    }

    #[test]
    fn undersampling_is_rejected() {
        let err = simulate_trace(
            &AomConfig::alternating(3, 1.0),
            &EventSchedule::empty(),
            &ImperfectionModel::ideal(),
            12.0,
            59.0,
            geometry(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn frequency_multiplication() {
        for n in 1..=3 {
            let trace = ideal_trace(n, &EventSchedule::empty());
            let est = dominant_frequency(&trace, (0.0, 12.0)).unwrap();
            assert!(!est.no_peak);
            assert!((est.hz - n as f64).abs() <= est.resolution, "N = {n}: {}", est.hz);
        }
    }

    #[test]
    fn ideal_trace_matches_sweep() {
        for n in 1..=4 {
            let trace = ideal_trace(n, &EventSchedule::empty());
            let grid: Vec<f64> = trace.t.iter().map(|t| TAU * t).collect();
            let template = build_cbw_chain(n, 0.0, 0.0, geometry()).unwrap();
            let scan = sweep_fringe(&template, &grid).unwrap();
            for k in 0..trace.len() {
                assert!((trace.i3[k] - scan.i3[k]).abs() < 1e-12);
                assert!((trace.i4[k] - scan.i4[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dummy_block_halves_frequency() {
        let schedule = EventSchedule::new(vec![
            event(4.0, EventAction::BlockArm { block: 1, arm: Arm::Upper }),
            event(8.0, EventAction::UnblockArm { block: 1, arm: Arm::Upper }),
        ])
        .unwrap();
        let trace = ideal_trace(2, &schedule);
        let inside = dominant_frequency(&trace, (4.0, 8.0)).unwrap();
        assert!((inside.hz - 1.0).abs() <= inside.resolution, "{}", inside.hz);
        for w in [(0.0, 4.0), (8.0, 12.0)] {
            let outside = dominant_frequency(&trace, w).unwrap();
            assert!((outside.hz - 2.0).abs() <= outside.resolution, "{}", outside.hz);
        }
        let ids: Vec<usize> = trace.segments().iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(trace.segments()[1].1, 400..800);
    }

    #[test]
    fn dummy_phase_toggle_freezes_and_restores() {
        let schedule = EventSchedule::new(vec![
            event(4.0, EventAction::SetDummyPhase { psi: PI }),
            event(8.0, EventAction::SetDummyPhase { psi: 0.0 }),
        ])
        .unwrap();
        let trace = ideal_trace(2, &schedule);
        let r = trace.window(4.0, 8.0);
        let seg = &trace.i4[r.clone()];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let var = seg.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / seg.len() as f64;
        assert!(var < 1e-10 * trace.i0 * trace.i0);
        assert!(dominant_frequency(&trace, (4.0, 8.0)).unwrap().no_peak);
        let after = dominant_frequency(&trace, (8.0, 12.0)).unwrap();
        assert!((after.hz - 2.0).abs() <= after.resolution);
    }

    #[test]
    fn sign_toggle_freezes_and_is_phase_continuous() {
        let schedule = EventSchedule::new(vec![event(
            4.0,
            EventAction::SetUpperFrequency { mzi: 1, hz: CARRIER_HZ + 1.0 },
        )])
        .unwrap();
        let trace = ideal_trace(2, &schedule);
        let frozen = &trace.i4[trace.window(4.0, 12.0)];
        assert!(frozen.iter().all(|x| (x - frozen[0]).abs() < 1e-10));
        let est = dominant_frequency_of(&trace, Channel::I4, (4.0, 12.0)).unwrap();
        assert!(est.no_peak);
    }

    #[test]
    fn zero_offset_on_second_mzi_leaves_single_fringe() {
        let schedule = EventSchedule::new(vec![event(
            4.0,
            EventAction::SetUpperFrequency { mzi: 1, hz: CARRIER_HZ },
        )])
        .unwrap();
        let trace = ideal_trace(2, &schedule);
        let est = dominant_frequency(&trace, (4.0, 12.0)).unwrap();
        assert!((est.hz - 1.0).abs() <= est.resolution);
    }

    #[test]
    fn retune_keeps_phase_continuous() {
        let mut track = PhaseTrack { t_ref: 0.0, phase_ref: 0.3, offset: 1.0 };
        let before = track.at(2.5);
        track.retune(2.5, -3.0);
        assert!((track.at(2.5) - before).abs() < 1e-12);
        assert!((track.at(3.0) - (before - 3.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_with_jitter() {
        let imp = ImperfectionModel { phase_jitter_sigma: 0.05, rng_seed: 42, ..ImperfectionModel::ideal() };
        let run = |imp: &ImperfectionModel| {
            simulate_trace(&AomConfig::alternating(2, 1.0), &EventSchedule::empty(), imp, 12.0, 100.0, geometry())
                .unwrap()
        };
        let a = run(&imp);
        assert_eq!(a, run(&imp));
        let other = ImperfectionModel { rng_seed: 43, ..imp.clone() };
        assert_ne!(a.i3, run(&other).i3);
        let zero = ImperfectionModel { rng_seed: 43, ..ImperfectionModel::ideal() };
        assert_eq!(run(&zero), ideal_trace(2, &EventSchedule::empty()));
    }

    #[test]
    fn intensities_stay_in_range() {
        let imp = ImperfectionModel {
            arm_transmissions: vec![(0.9, 0.6), (1.0, 0.8), (0.7, 1.0)],
            bs_reflectivity_deviation: 0.05,
            phase_jitter_sigma: 0.1,
            rng_seed: 7,
        };
        let trace = simulate_trace(&AomConfig::alternating(2, 1.0), &EventSchedule::empty(), &imp, 12.0, 100.0, geometry())
            .unwrap();
        for k in 0..trace.len() {
            assert!(trace.i3[k] >= 0.0 && trace.i4[k] >= 0.0);
            assert!(trace.i3[k] + trace.i4[k] <= trace.i0 + 1e-12);
        }
    }

    #[test]
    fn imperfection_validation() {
        let mut imp = ImperfectionModel::ideal();
        imp.arm_transmissions = vec![(1.0, 1.0)];
        assert!(imp.validate(3).is_err());
        imp.arm_transmissions = vec![(1.0, 1.2); 3];
        assert!(imp.validate(3).is_err());
        let imp = ImperfectionModel { bs_reflectivity_deviation: 0.7, ..ImperfectionModel::ideal() };
        assert!(imp.validate(3).is_err());
        let imp = ImperfectionModel { phase_jitter_sigma: -1.0, ..ImperfectionModel::ideal() };
        assert!(imp.validate(3).is_err());
        assert_eq!(ImperfectionModel::ideal().bs_angle_deviation(), 0.0);
    }

    #[test]
    fn short_window_is_rejected() {
        let trace = ideal_trace(1, &EventSchedule::empty());
        assert!(dominant_frequency(&trace, (0.0, 0.05)).is_err());
        assert!(dominant_frequency(&trace, (0.0, 1.5)).is_err());
        assert!(dominant_frequency(&trace, (3.0, 3.0)).is_err());
    }

    #[test]
    fn visibility_cases() {
        let grid: Vec<f64> = (0..400).map(|k| TAU * k as f64 / 400.0).collect();
        let fringe: Vec<f64> = grid.iter().map(|p| 0.5 * (1.0 + (2.0 * p).cos())).collect();
        assert!((visibility_with(&fringe, Extrema::Exact).unwrap() - 1.0).abs() < 1e-9);
        let robust = visibility(&fringe).unwrap();
        assert!(robust < 1.0 && robust > 0.99);
        assert!(visibility(&[0.0; 10]).is_err());
        assert!(visibility(&[]).is_err());
        assert!(visibility(&[1.0, -0.1]).is_err());
        assert_eq!(visibility(&[0.4; 10]).unwrap(), 0.0);
        // Two-amplitude interference |1 + t e^{iφ}|² has V = 2t/(1+t²).
        let t = 0.5;
        let two: Vec<f64> = grid.iter().map(|p| 1.0 + t * t + 2.0 * t * p.cos()).collect();
        assert!((visibility_with(&two, Extrema::Exact).unwrap() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let trace = ideal_trace(1, &EventSchedule::empty());
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,i3,i4,segment_id"));
        assert_eq!(lines.count(), trace.len());
    }
}
