//! Exact 2×2 complex matrix algebra and the elementary optical operators.
//!
//! Matrices act on column vectors `(u, l)` of upper/lower path amplitudes.
//! A product `A.dot(&B)` applies `B` first, so a chain of elements is
//! composed right to left in propagation order.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CbwError, Result};

/// Complex amplitude, a pair of binary64 reals.
pub type ComplexScalar = Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense 2×2 complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix2C {
    pub m00: Complex64,
    pub m01: Complex64,
    pub m10: Complex64,
    pub m11: Complex64,
}

impl Matrix2C {
    pub const fn new(m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) -> Self {
        Self { m00, m01, m10, m11 }
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn diag(d0: Complex64, d1: Complex64) -> Self {
        Self::new(d0, ZERO, ZERO, d1)
    }

    /// Real diagonal matrix, used for arm attenuation and blocking projectors.
    pub fn real_diag(d0: f64, d1: f64) -> Self {
        Self::diag(Complex64::new(d0, 0.0), Complex64::new(d1, 0.0))
    }

    pub fn sigma_x() -> Self {
        Self::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn sigma_y() -> Self {
        Self::new(ZERO, -I, I, ZERO)
    }

    pub fn sigma_z() -> Self {
        Self::new(ONE, ZERO, ZERO, -ONE)
    }

    pub fn dot(&self, rhs: &Matrix2C) -> Matrix2C {
        Matrix2C::new(
            self.m00 * rhs.m00 + self.m01 * rhs.m10,
            self.m00 * rhs.m01 + self.m01 * rhs.m11,
            self.m10 * rhs.m00 + self.m11 * rhs.m10,
            self.m10 * rhs.m01 + self.m11 * rhs.m11,
        )
    }

    pub fn scale(&self, s: Complex64) -> Matrix2C {
        Matrix2C::new(self.m00 * s, self.m01 * s, self.m10 * s, self.m11 * s)
    }

    pub fn sub(&self, rhs: &Matrix2C) -> Matrix2C {
        Matrix2C::new(
            self.m00 - rhs.m00,
            self.m01 - rhs.m01,
            self.m10 - rhs.m10,
            self.m11 - rhs.m11,
        )
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Matrix2C {
        Matrix2C::new(self.m00.conj(), self.m10.conj(), self.m01.conj(), self.m11.conj())
    }

    pub fn det(&self) -> Complex64 {
        self.m00 * self.m11 - self.m01 * self.m10
    }

    pub fn entries(&self) -> [Complex64; 4] {
        [self.m00, self.m01, self.m10, self.m11]
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &Matrix2C) -> f64 {
        self.sub(other).max_norm()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Matrix2C) -> f64 {
        self.sub(other)
            .entries()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖A†A − I‖_max ≤ tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().dot(self).max_distance(&Matrix2C::identity())
    }

    /// Max-entry norm of the commutator `[A, B]`.
    pub fn commutator_norm(&self, other: &Matrix2C) -> f64 {
        self.dot(other).max_distance(&other.dot(self))
    }

    pub fn apply(&self, v: &FieldState) -> FieldState {
        FieldState {
            u: self.m00 * v.u + self.m01 * v.l,
            l: self.m10 * v.u + self.m11 * v.l,
        }
    }
}

impl Mul for Matrix2C {
    type Output = Matrix2C;

    fn mul(self, rhs: Matrix2C) -> Matrix2C {
        Matrix2C::dot(&self, &rhs)
    }
}

impl Mul<FieldState> for Matrix2C {
    type Output = FieldState;

    fn mul(self, rhs: FieldState) -> FieldState {
        self.apply(&rhs)
    }
}

/// Upper/lower path amplitudes, in units of √intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub u: Complex64,
    pub l: Complex64,
}

impl FieldState {
    pub fn new(u: Complex64, l: Complex64) -> Self {
        Self { u, l }
    }

    /// Light entering the upper port only, with amplitude `e0`.
    pub fn upper(e0: f64) -> Self {
        Self::new(Complex64::new(e0, 0.0), ZERO)
    }

    pub fn upper_intensity(&self) -> f64 {
        self.u.norm_sqr()
    }

    pub fn lower_intensity(&self) -> f64 {
        self.l.norm_sqr()
    }

    pub fn intensity(&self) -> f64 {
        self.u.norm_sqr() + self.l.norm_sqr()
    }
}

impl Default for FieldState {
    fn default() -> Self {
        Self::upper(1.0)
    }
}

/// Where the interferometer phase is written.
///
/// `Symmetric` splits it as `diag(e^{iφ/2}, e^{-iφ/2})`; `UpperArm` puts the
/// whole phase on the upper arm, `diag(e^{iφ}, 1)`. They differ by a global
/// phase `e^{iφ/2}` only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    #[default]
    Symmetric,
    UpperArm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Z,
}

fn check_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CbwError::domain(format!("{name} must be finite, got {value}")))
    }
}

/// The symmetric 50:50 beam splitter `B = (1/√2)[[1, i], [i, 1]]`.
pub fn bs_matrix() -> Matrix2C {
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let t = Complex64::new(0.0, FRAC_1_SQRT_2);
    Matrix2C::new(r, t, t, r)
}

/// Beam splitter with mixing angle `π/4 + deviation`:
/// `[[cos θ, i sin θ], [i sin θ, cos θ]]`. Zero deviation gives [`bs_matrix`].
pub fn bs_matrix_with_deviation(deviation: f64) -> Matrix2C {
    if deviation == 0.0 {
        return bs_matrix();
    }
    let theta = std::f64::consts::FRAC_PI_4 + deviation;
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::new(0.0, theta.sin());
    Matrix2C::new(c, s, s, c)
}

/// Real-convention beam splitter `(1/√2)[[1, 1], [1, −1]]` with the same
/// mixing-angle deviation as [`bs_matrix_with_deviation`].
pub fn real_bs_matrix(deviation: f64) -> Matrix2C {
    let theta = std::f64::consts::FRAC_PI_4 + deviation;
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::new(theta.sin(), 0.0);
    Matrix2C::new(c, s, s, -c)
}

pub fn phase_matrix(phi: f64, conv: PhaseConvention) -> Result<Matrix2C> {
    check_finite("phase", phi)?;
    Ok(match conv {
        PhaseConvention::Symmetric => Matrix2C::diag(
            Complex64::from_polar(1.0, phi / 2.0),
            Complex64::from_polar(1.0, -phi / 2.0),
        ),
        PhaseConvention::UpperArm => Matrix2C::diag(Complex64::from_polar(1.0, phi), ONE),
    })
}

/// Literal single-MZI product `B·Z(φ)·B`.
///
/// This equals `i·[[sin(φ/2), cos(φ/2)], [cos(φ/2), −sin(φ/2)]]` in the
/// symmetric convention, so at φ = 0 all light leaves through the cross port.
pub fn mzi_unitary(phi: f64, conv: PhaseConvention) -> Result<Matrix2C> {
    let b = bs_matrix();
    Ok(b.dot(&phase_matrix(phi, conv)?).dot(&b))
}

/// Closed-form `exp(iθσ/2)` for σ ∈ {σx, σz}.
pub fn su2_exp(theta: f64, axis: Axis) -> Result<Matrix2C> {
    check_finite("angle", theta)?;
    let (s, c) = (theta / 2.0).sin_cos();
    Ok(match axis {
        Axis::X => {
            let cc = Complex64::new(c, 0.0);
            let is = Complex64::new(0.0, s);
            Matrix2C::new(cc, is, is, cc)
        }
        Axis::Z => Matrix2C::diag(
            Complex64::from_polar(1.0, theta / 2.0),
            Complex64::from_polar(1.0, -theta / 2.0),
        ),
    })
}

pub fn multiply(a: &Matrix2C, b: &Matrix2C) -> Matrix2C {
    a.dot(b)
}

pub fn adjoint(a: &Matrix2C) -> Matrix2C {
    a.adjoint()
}

pub fn is_unitary(a: &Matrix2C, tol: f64) -> bool {
    a.is_unitary(tol)
}

pub fn frobenius_distance(a: &Matrix2C, b: &Matrix2C) -> f64 {
    a.frobenius_distance(b)
}
