//! Coupled-MZI chains: wiring, propagation and fringe scans.
//!
//! A chain is an ordered list of control MZIs (phase ±φ) separated by dummy
//! MZIs (phase ψ). How the blocks are wired together is described by a
//! [`CouplingGeometry`]; the geometry that reproduces the two-MZI anchors
//! (CBW fringes at ψ = 0, identity at ψ = π) is found by enumeration in
//! [`calibrate_convention`] rather than assumed.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CbwError, Result};
use crate::spectrum::{self, Window};
use crate::su2::{
    bs_matrix_with_deviation, phase_matrix, real_bs_matrix, FieldState, Matrix2C, PhaseConvention,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStyle {
    Straight,
    /// Output paths swap before entering the next element.
    Crossed,
}

/// How the builder assigns signs to the control phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    /// `+φ, −φ, +φ, …`
    Alternating,
    Uniform,
}

impl SignPattern {
    pub fn sign(self, control_index: usize) -> f64 {
        match self {
            SignPattern::Alternating if control_index % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }
}

/// Splitter convention used inside dummy MZIs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyBasis {
    /// `B·Z(ψ)·B` with the same symmetric splitters as the control MZIs.
    Literal,
    /// `H·Z(ψ)·H` with real-convention splitters, equal to `exp(iψσx/2)`.
    Logical,
}

/// Physical wiring of a chain.
///
/// Field order defines the lexicographic order used to break ties during
/// calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CouplingGeometry {
    pub sign_pattern: SignPattern,
    /// Link after every control MZI.
    pub control_link: LinkStyle,
    /// Link after every dummy MZI.
    pub dummy_link: LinkStyle,
    /// Odd-indexed control MZIs are mirrored, i.e. conjugated by σx.
    pub mirror_alternate: bool,
    pub dummy_basis: DummyBasis,
}

impl CouplingGeometry {
    /// Every geometry in the finite search space, in lexicographic order.
    pub fn all() -> Vec<CouplingGeometry> {
        let links = [LinkStyle::Straight, LinkStyle::Crossed];
        let mut out = Vec::with_capacity(32);
        for sign_pattern in [SignPattern::Alternating, SignPattern::Uniform] {
            for control_link in links {
                for dummy_link in links {
                    for mirror_alternate in [false, true] {
                        for dummy_basis in [DummyBasis::Literal, DummyBasis::Logical] {
                            out.push(CouplingGeometry {
                                sign_pattern,
                                control_link,
                                dummy_link,
                                mirror_alternate,
                                dummy_basis,
                            });
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Control,
    Dummy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmMask {
    pub upper: bool,
    pub lower: bool,
}

impl ArmMask {
    pub fn is_empty(&self) -> bool {
        !self.upper && !self.lower
    }

    pub fn contains(&self, arm: Arm) -> bool {
        match arm {
            Arm::Upper => self.upper,
            Arm::Lower => self.lower,
        }
    }

    fn set(&mut self, arm: Arm, value: bool) {
        match arm {
            Arm::Upper => self.upper = value,
            Arm::Lower => self.lower = value,
        }
    }
}

/// One MZI in the chain.
///
/// For control MZIs the arm transmissions and blocks act on the two internal
/// arms, where the phase shifters sit. For dummy MZIs they act on the two
/// input paths coming from the preceding control MZI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziBlock {
    pub kind: BlockKind,
    pub phase: f64,
    /// Amplitude transmissions `(t_u, t_l)`, each in `[0, 1]`.
    pub arm_transmissions: (f64, f64),
    pub blocked: ArmMask,
}

impl MziBlock {
    pub fn control(phase: f64) -> Self {
        Self {
            kind: BlockKind::Control,
            phase,
            arm_transmissions: (1.0, 1.0),
            blocked: ArmMask::default(),
        }
    }

    pub fn dummy(psi: f64) -> Self {
        Self {
            kind: BlockKind::Dummy,
            ..Self::control(psi)
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.blocked.is_empty() && self.arm_transmissions == (1.0, 1.0)
    }

    fn arm_matrix(&self) -> Matrix2C {
        let (tu, tl) = self.arm_transmissions;
        let tu = if self.blocked.upper { 0.0 } else { tu };
        let tl = if self.blocked.lower { 0.0 } else { tl };
        Matrix2C::real_diag(tu, tl)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub blocks: Vec<MziBlock>,
    pub geometry: CouplingGeometry,
    pub conv: PhaseConvention,
    pub input: FieldState,
    /// Mixing-angle deviation applied to every beam splitter, in radians.
    pub bs_deviation: f64,
}

impl ChainSpec {
    pub fn empty(geometry: CouplingGeometry) -> Self {
        Self {
            blocks: Vec::new(),
            geometry,
            conv: PhaseConvention::Symmetric,
            input: FieldState::default(),
            bs_deviation: 0.0,
        }
    }

    pub fn n_controls(&self) -> usize {
        self.blocks.iter().filter(|b| b.kind == BlockKind::Control).count()
    }

    pub fn input_intensity(&self) -> f64 {
        self.input.intensity()
    }

    pub fn is_lossless(&self) -> bool {
        self.blocks.iter().all(MziBlock::is_lossless)
    }

    /// First dummy phase, or 0 for chains without a dummy.
    pub fn dummy_phase(&self) -> f64 {
        self.blocks
            .iter()
            .find(|b| b.kind == BlockKind::Dummy)
            .map_or(0.0, |b| b.phase)
    }

    /// Re-evaluates every control phase as `sign(k)·φ` under the geometry's
    /// sign pattern.
    pub fn at_phase(&self, phi: f64) -> ChainSpec {
        let pattern = self.geometry.sign_pattern;
        let mut out = self.clone();
        for (k, b) in out.blocks.iter_mut().filter(|b| b.kind == BlockKind::Control).enumerate() {
            b.phase = pattern.sign(k) * phi;
        }
        out
    }

    /// Sets the control phases explicitly, in chain order.
    pub fn with_control_phases(&self, phases: &[f64]) -> Result<ChainSpec> {
        if phases.len() != self.n_controls() {
            return Err(CbwError::domain(format!(
                "expected {} control phases, got {}",
                self.n_controls(),
                phases.len()
            )));
        }
        let mut out = self.clone();
        for (b, p) in out
            .blocks
            .iter_mut()
            .filter(|b| b.kind == BlockKind::Control)
            .zip(phases)
        {
            b.phase = *p;
        }
        Ok(out)
    }

    pub fn with_dummy_phase(&self, psi: f64) -> ChainSpec {
        let mut out = self.clone();
        for b in out.blocks.iter_mut().filter(|b| b.kind == BlockKind::Dummy) {
            b.phase = psi;
        }
        out
    }

    /// Transfer matrix of block `index` including its outgoing link.
    pub fn element_matrix(&self, index: usize) -> Result<Matrix2C> {
        let block = self
            .blocks
            .get(index)
            .ok_or_else(|| CbwError::domain(format!("block index {index} out of range")))?;
        let g = &self.geometry;
        let x = Matrix2C::sigma_x();
        let z = phase_matrix(block.phase, self.conv)?;
        let m = match block.kind {
            BlockKind::Control => {
                let ordinal = self.blocks[..index]
                    .iter()
                    .filter(|b| b.kind == BlockKind::Control)
                    .count();
                let b = bs_matrix_with_deviation(self.bs_deviation);
                let mut m = b.dot(&block.arm_matrix()).dot(&z).dot(&b);
                if g.mirror_alternate && ordinal % 2 == 1 {
                    m = x.dot(&m).dot(&x);
                }
                if g.control_link == LinkStyle::Crossed {
                    m = x.dot(&m);
                }
                m
            }
            BlockKind::Dummy => {
                let s = match g.dummy_basis {
                    DummyBasis::Literal => bs_matrix_with_deviation(self.bs_deviation),
                    DummyBasis::Logical => real_bs_matrix(self.bs_deviation),
                };
                let mut m = s.dot(&z).dot(&s).dot(&block.arm_matrix());
                if g.dummy_link == LinkStyle::Crossed {
                    m = x.dot(&m);
                }
                m
            }
        };
        Ok(m)
    }
}

pub fn build_cbw_chain(n: usize, phi: f64, psi: f64, geometry: CouplingGeometry) -> Result<ChainSpec> {
    if n < 1 {
        return Err(CbwError::domain("chain needs at least one control MZI (N >= 1)"));
    }
    if !phi.is_finite() || !psi.is_finite() {
        return Err(CbwError::domain("phases must be finite"));
    }
    let mut spec = ChainSpec::empty(geometry);
    for k in 0..n {
        if k > 0 {
            spec.blocks.push(MziBlock::dummy(psi));
        }
        spec.blocks.push(MziBlock::control(geometry.sign_pattern.sign(k) * phi));
    }
    Ok(spec)
}

/// Ordered product of all element matrices; identity for an empty chain.
pub fn transfer_matrix(spec: &ChainSpec) -> Result<Matrix2C> {
    let mut u = Matrix2C::identity();
    for index in 0..spec.blocks.len() {
        u = spec.element_matrix(index)?.dot(&u);
    }
    Ok(u)
}

/// Output field; `u` feeds detector I3 and `l` feeds I4.
pub fn propagate(spec: &ChainSpec) -> Result<FieldState> {
    Ok(transfer_matrix(spec)?.apply(&spec.input))
}

/// Output intensities `(I3, I4)`.
pub fn output_intensities(spec: &ChainSpec) -> Result<(f64, f64)> {
    let out = propagate(spec)?;
    Ok((out.upper_intensity(), out.lower_intensity()))
}

pub fn apply_block(spec: &ChainSpec, block_index: usize, arm: Arm) -> Result<ChainSpec> {
    set_block(spec, block_index, arm, true)
}

pub fn remove_block(spec: &ChainSpec, block_index: usize, arm: Arm) -> Result<ChainSpec> {
    set_block(spec, block_index, arm, false)
}

fn set_block(spec: &ChainSpec, block_index: usize, arm: Arm, value: bool) -> Result<ChainSpec> {
    let mut out = spec.clone();
    let n = out.blocks.len();
    let block = out.blocks.get_mut(block_index).ok_or_else(|| {
        CbwError::domain(format!("block index {block_index} out of range for a chain of {n} blocks"))
    })?;
    block.blocked.set(arm, value);
    Ok(out)
}

/// `((I0/2)(1 + cos Nφ), (I0/2)(1 − cos Nφ))` with `I0 = 1`.
pub fn cbw_closed_form(n: usize, phi: f64) -> (f64, f64) {
    let c = (n as f64 * phi).cos();
    (0.5 * (1.0 + c), 0.5 * (1.0 - c))
}

/// `(cos²(Nφ/2), sin²(Nφ/2))`; the pair sums to exactly 1.
pub fn projection_probabilities(n: usize, phi: f64) -> (f64, f64) {
    let p1 = (0.5 * n as f64 * phi).sin().powi(2);
    (1.0 - p1, p1)
}

/// Unitary taking the calibrated wiring into the logical frame where the
/// dummy MZI is diagonal: `σx ↦ σz`, `σy ↦ −σx`.
pub fn logical_frame() -> Matrix2C {
    let h = Complex64::new(0.5, 0.0);
    let hi = Complex64::new(0.0, 0.5);
    // (I − i(σx − σy + σz)) / 2
    Matrix2C::new(h - hi, h - hi, -h - hi, h + hi)
}

/// `F·op·F†` with `F` from [`logical_frame`].
pub fn to_logical_frame(op: &Matrix2C) -> Matrix2C {
    let f = logical_frame();
    f.dot(op).dot(&f.adjoint())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub geometry: CouplingGeometry,
    /// Every geometry that satisfied both anchors, in lexicographic order.
    pub candidates: Vec<CouplingGeometry>,
}

/// Grid size and tolerance for the calibration anchors.
pub const CALIBRATION_POINTS: usize = 256;
pub const CALIBRATION_TOL: f64 = 1e-10;

fn anchor_errors(geometry: CouplingGeometry) -> Result<AnchorErrors> {
    let template = build_cbw_chain(2, 0.0, 0.0, geometry)?;
    let identity = template.with_dummy_phase(PI);
    let single = build_cbw_chain(1, 0.0, 0.0, geometry)?;
    let mut err = AnchorErrors::default();
    for k in 0..CALIBRATION_POINTS {
        let phi = TAU * k as f64 / CALIBRATION_POINTS as f64;
        let (i3, _) = output_intensities(&template.at_phase(phi))?;
        err.cbw = err.cbw.max((i3 - 0.5 * (1.0 + (2.0 * phi).cos())).abs());
        let (i3, i4) = output_intensities(&identity.at_phase(phi))?;
        err.identity = err.identity.max(i3.abs()).max((i4 - 1.0).abs());
        let (i3, _) = output_intensities(&single.at_phase(phi))?;
        err.single = err.single.max((i3 - 0.5 * (1.0 + phi.cos())).abs());
    }
    Ok(err)
}

#[derive(Clone, Copy, Debug, Default)]
struct AnchorErrors {
    cbw: f64,
    identity: f64,
    single: f64,
}

impl AnchorErrors {
    fn passes(&self) -> bool {
        self.cbw < CALIBRATION_TOL && self.identity < CALIBRATION_TOL && self.single < CALIBRATION_TOL
    }
}

/// Searches the geometry space for wirings where the two-MZI chain gives
/// `I3 = (1 + cos 2φ)/2` at ψ = 0 and `I3 = 0, I4 = I0` at ψ = π, and a lone
/// MZI gives `I3 = (1 + cos φ)/2`.
///
/// The single-MZI anchor removes wirings that match the two-MZI case only
/// because an even number of port exchanges cancel.
pub fn calibrate_convention() -> Result<Calibration> {
    let mut candidates = Vec::new();
    for g in CouplingGeometry::all() {
        if anchor_errors(g)?.passes() {
            candidates.push(g);
        }
    }
    let geometry = *candidates.first().ok_or_else(|| {
        CbwError::Calibration("no coupling geometry reproduces the calibration anchors".into())
    })?;
    if candidates.len() > 1 {
        log::warn!(
            "{} geometries satisfy the calibration anchors; using {:?} (all: {:?})",
            candidates.len(),
            geometry,
            candidates
        );
    }
    Ok(Calibration { geometry, candidates })
}

/// Calibrated geometry, computed once per process.
pub fn calibrated_geometry() -> Result<CouplingGeometry> {
    static CAL: OnceLock<Result<Calibration>> = OnceLock::new();
    CAL.get_or_init(calibrate_convention)
        .as_ref()
        .map(|c| c.geometry)
        .map_err(Clone::clone)
}

/// Sampled output intensities over a phase grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub phi: Vec<f64>,
    pub i3: Vec<f64>,
    pub i4: Vec<f64>,
    pub i0: f64,
    pub n_nominal: usize,
    pub geometry: Option<CouplingGeometry>,
    pub psi: f64,
}

impl FringeScan {
    /// Scan built from arbitrary port intensities, e.g. a reference model.
    pub fn from_samples(phi: Vec<f64>, i3: Vec<f64>, i4: Vec<f64>, n_nominal: usize) -> Result<Self> {
        validate_grid(&phi)?;
        if i3.len() != phi.len() || i4.len() != phi.len() {
            return Err(CbwError::domain("intensity arrays must match the phase grid length"));
        }
        Ok(Self {
            phi,
            i3,
            i4,
            i0: 1.0,
            n_nominal,
            geometry: None,
            psi: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Fringe period of `i3` from the FFT peak of the mean-removed scan.
    ///
    /// The grid must span an integer number of periods. Returns `None` for a
    /// flat scan.
    pub fn period(&self) -> Option<f64> {
        let n = self.len();
        if n < 4 {
            return None;
        }
        let step = (self.phi[n - 1] - self.phi[0]) / (n - 1) as f64;
        let span = step * n as f64;
        let peak = spectrum::dominant_peak(&self.i3, Window::Rectangular)?;
        let ac_floor = 1e-24 * (n as f64).powi(2) * self.i0.powi(2);
        (peak.peak_power > ac_floor).then(|| span / peak.bin)
    }

    /// Grid spacing.
    pub fn step(&self) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            (self.phi[self.len() - 1] - self.phi[0]) / (self.len() - 1) as f64
        }
    }

    /// CSV with header `phi,i3,i4`, 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi,i3,i4")?;
        for k in 0..self.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.phi[k], self.i3[k], self.i4[k])?;
        }
        Ok(())
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(CbwError::domain("phase grid is empty"));
    }
    if grid.iter().any(|p| !p.is_finite()) {
        return Err(CbwError::domain("phase grid contains non-finite values"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CbwError::domain("phase grid must be strictly increasing"));
    }
    Ok(())
}

/// `n` uniform points on `[0, 2π)`.
pub fn full_period_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Evaluates the template at every grid phase via [`ChainSpec::at_phase`].
pub fn sweep_fringe(template: &ChainSpec, grid: &[f64]) -> Result<FringeScan> {
    validate_grid(grid)?;
    let points: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&phi| output_intensities(&template.at_phase(phi)))
        .collect::<Result<_>>()?;
    let (i3, i4) = points.into_iter().unzip();
    Ok(FringeScan {
        phi: grid.to_vec(),
        i3,
        i4,
        i0: template.input_intensity(),
        n_nominal: template.n_controls(),
        geometry: Some(template.geometry),
        psi: template.dummy_phase(),
    })
}
