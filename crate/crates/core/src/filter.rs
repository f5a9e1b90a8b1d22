//! Qubit state types and the coefficient functions of the filtering equations.
//!
//! A qubit state is carried as its Bloch (polarization) vector `P`, with
//! `rho = (1 + P.sigma) / 2`. All control-loop arithmetic works on real
//! 3-vectors; complex matrices only appear in [`DensityMatrix`] and
//! [`lindblad`].
//!
//! Three filters are described here:
//!
//! * diffusive (homodyne) qubit filter: `dP = drift(P, u) dt + kappa_s b(P) dW`;
//! * photon-counting qubit filter: compensated drift plus a reset to the ground
//!   state `(0, 0, -1)` at each detection, with intensity `kappa_s^2 (1 + P_z) / 2`;
//! * cavity angle model: `dTheta = 2 B dt + 2 alpha dW` on a circle of fixed radius.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default slack on `|P| <= 1` before a state is projected back onto the sphere.
pub const DEFAULT_BALL_TOLERANCE: f64 = 1e-6;

/// Tolerance used when checking Hermiticity and unit trace of density matrices.
pub const MATRIX_TOLERANCE: f64 = 1e-10;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Polarization vector of a qubit state, a point of the closed unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl BlochVector {
    pub const fn new(px: f64, py: f64, pz: f64) -> Self {
        Self { px, py, pz }
    }

    /// The ground state `(0, 0, -1)`, which is also the post-detection state.
    pub const fn ground() -> Self {
        Self::new(0.0, 0.0, -1.0)
    }

    /// The `sigma_z`-up state `(0, 0, 1)`, the control target of the qubit models.
    pub const fn excited() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn from_array(a: Vec3) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> Vec3 {
        [self.px, self.py, self.pz]
    }

    pub fn norm_sq(self) -> f64 {
        self.px * self.px + self.py * self.py + self.pz * self.pz
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.pz.is_finite()
    }

    /// Checks finiteness and `|p| <= 1 + tol`.
    pub fn validate(self, tol: f64) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::InvalidState(format!("non-finite Bloch vector {self}")));
        }
        let n = self.norm();
        if n > 1.0 + tol {
            return Err(Error::InvalidState(format!(
                "Bloch vector {self} has norm {n} outside the unit ball"
            )));
        }
        Ok(self)
    }

    /// Radially projects the vector onto the unit sphere when its norm exceeds
    /// `1 + tol`; otherwise returns it unchanged.
    pub fn project_into_ball(self, tol: f64) -> Self {
        let n = self.norm();
        if n > 1.0 + tol {
            self * (1.0 / n)
        } else {
            self
        }
    }
}

impl fmt::Display for BlochVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.px, self.py, self.pz)
    }
}

impl Add<Vec3> for BlochVector {
    type Output = BlochVector;

    fn add(self, rhs: Vec3) -> BlochVector {
        BlochVector::new(self.px + rhs[0], self.py + rhs[1], self.pz + rhs[2])
    }
}

impl Sub for BlochVector {
    type Output = Vec3;

    fn sub(self, rhs: BlochVector) -> Vec3 {
        [self.px - rhs.px, self.py - rhs.py, self.pz - rhs.pz]
    }
}

impl Mul<f64> for BlochVector {
    type Output = BlochVector;

    fn mul(self, s: f64) -> BlochVector {
        BlochVector::new(self.px * s, self.py * s, self.pz * s)
    }
}

/// A general complex 2x2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub fn zero() -> Self {
        Matrix2([[Complex64::new(0.0, 0.0); 2]; 2])
    }

    pub fn identity() -> Self {
        Self::real([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn real(m: [[f64; 2]; 2]) -> Self {
        Matrix2([
            [Complex64::new(m[0][0], 0.0), Complex64::new(m[0][1], 0.0)],
            [Complex64::new(m[1][0], 0.0), Complex64::new(m[1][1], 0.0)],
        ])
    }

    pub fn pauli_x() -> Self {
        Self::real([[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::i();
        let z = Complex64::new(0.0, 0.0);
        Matrix2([[z, -i], [i, z]])
    }

    pub fn pauli_z() -> Self {
        Self::real([[1.0, 0.0], [0.0, -1.0]])
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        self.0[r][c]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Matrix2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let m = &self.0;
        Matrix2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        *self * *other + *other * *self
    }

    /// Largest deviation from Hermiticity, `max |m_ij - conj(m_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.0;
        let off = (m[1][0] - m[0][1].conj()).norm();
        off.max(m[0][0].im.abs()).max(m[1][1].im.abs())
    }

    /// Components `Tr(sigma_k m)` for k = x, y, z (real parts).
    pub fn bloch_image(&self) -> Vec3 {
        [
            (Matrix2::pauli_x() * *self).trace().re,
            (Matrix2::pauli_y() * *self).trace().re,
            (Matrix2::pauli_z() * *self).trace().re,
        ]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;

    fn add(self, o: Matrix2) -> Matrix2 {
        let (a, b) = (&self.0, &o.0);
        Matrix2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;

    fn sub(self, o: Matrix2) -> Matrix2 {
        let (a, b) = (&self.0, &o.0);
        Matrix2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;

    fn mul(self, o: Matrix2) -> Matrix2 {
        let (a, b) = (&self.0, &o.0);
        Matrix2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// A qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix2);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and `det >= -tol`.
    pub fn new(m: Matrix2) -> Result<Self> {
        for r in 0..2 {
            for c in 0..2 {
                let z = m.0[r][c];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::InvalidState("non-finite density matrix entry".into()));
                }
            }
        }
        let defect = m.hermiticity_defect();
        if defect > MATRIX_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "density matrix is not Hermitian (defect {defect:e})"
            )));
        }
        let tr = m.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > MATRIX_TOLERANCE {
            return Err(Error::InvalidState(format!("density matrix has trace {tr}")));
        }
        let det = (m.0[0][0] * m.0[1][1] - m.0[0][1] * m.0[1][0]).re;
        if det < -MATRIX_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "density matrix is not positive semidefinite (det {det:e})"
            )));
        }
        Ok(DensityMatrix(m))
    }

    pub fn matrix(&self) -> &Matrix2 {
        &self.0
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        self.0.entry(r, c)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0 .0;
        (m[0][0] * m[1][1] - m[0][1] * m[1][0]).re
    }
}

/// The two real laser quadratures `(u+, u-) = kappa_f (Re u, Im u)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPair {
    pub u_plus: f64,
    pub u_minus: f64,
}

impl ControlPair {
    pub const fn new(u_plus: f64, u_minus: f64) -> Self {
        Self { u_plus, u_minus }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Running cost rate `u+^2 + u-^2`.
    pub fn energy(self) -> f64 {
        self.u_plus * self.u_plus + self.u_minus * self.u_minus
    }

    pub fn is_finite(self) -> bool {
        self.u_plus.is_finite() && self.u_minus.is_finite()
    }

    pub fn clamp(self, bound: f64) -> Self {
        Self::new(
            self.u_plus.clamp(-bound, bound),
            self.u_minus.clamp(-bound, bound),
        )
    }
}

/// Physical constants. Units are chosen so that `kappa_s^2 + kappa_f^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    kappa_s_sq: f64,
    kappa_f_sq: f64,
    alpha: f64,
    horizon: f64,
}

impl ModelParams {
    pub fn new(kappa_s_sq: f64, kappa_f_sq: f64, alpha: f64, horizon: f64) -> Result<Self> {
        for (name, v) in [("kappa_s_sq", kappa_s_sq), ("kappa_f_sq", kappa_f_sq)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if (kappa_s_sq + kappa_f_sq - 1.0).abs() > 1e-12 {
            return Err(Error::param(
                "kappa_f_sq",
                format!("kappa_s_sq + kappa_f_sq must equal 1, got {}", kappa_s_sq + kappa_f_sq),
            ));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param("alpha", format!("must be finite and >= 0, got {alpha}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("horizon", format!("must be finite and > 0, got {horizon}")));
        }
        Ok(Self {
            kappa_s_sq,
            kappa_f_sq,
            alpha,
            horizon,
        })
    }

    /// Builds parameters from the side-channel rate, with `kappa_f^2 = 1 - kappa_s^2`.
    pub fn with_side_rate(kappa_s_sq: f64, alpha: f64, horizon: f64) -> Result<Self> {
        Self::new(kappa_s_sq, 1.0 - kappa_s_sq, alpha, horizon)
    }

    pub fn kappa_s_sq(&self) -> f64 {
        self.kappa_s_sq
    }

    pub fn kappa_f_sq(&self) -> f64 {
        self.kappa_f_sq
    }

    pub fn kappa_s(&self) -> f64 {
        self.kappa_s_sq.sqrt()
    }

    pub fn kappa_f(&self) -> f64 {
        self.kappa_f_sq.sqrt()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Whether the laser reaches the qubit at all. With `kappa_f = 0` both
    /// quadratures `u+ = kappa_f Re u` and `u- = kappa_f Im u` vanish.
    pub fn controllable(&self) -> bool {
        self.kappa_f_sq > 0.0
    }

    pub fn with_horizon(self, horizon: f64) -> Result<Self> {
        Self::new(self.kappa_s_sq, self.kappa_f_sq, self.alpha, horizon)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = x - two_pi * ((x + PI) / two_pi).floor();
    if w >= PI {
        w -= two_pi;
    }
    if w < -PI {
        w = -PI;
    }
    w
}

/// Angle-model state: `P_x = r cos(theta)`, `P_y = r sin(theta)`, `P_z` fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleState {
    pub theta: f64,
    pub r: f64,
}

impl AngleState {
    /// Wraps `theta` into `[-pi, pi)`; `r` must lie in `[0, 1]`.
    pub fn new(theta: f64, r: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidState(format!("non-finite angle {theta}")));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidState(format!("radius {r} outside [0, 1]")));
        }
        Ok(Self {
            theta: wrap_angle(theta),
            r,
        })
    }

    /// In-plane Bloch vector `(r cos theta, r sin theta, pz)`.
    pub fn to_bloch(self, pz: f64) -> BlochVector {
        BlochVector::new(self.r * self.theta.cos(), self.r * self.theta.sin(), pz)
    }
}

/// `rho = (1 + sigma(p)) / 2`.
pub fn bloch_to_density(p: BlochVector) -> Result<DensityMatrix> {
    let p = p.validate(DEFAULT_BALL_TOLERANCE)?;
    let half = 0.5;
    let m = Matrix2([
        [
            Complex64::new(half * (1.0 + p.pz), 0.0),
            Complex64::new(half * p.px, -half * p.py),
        ],
        [
            Complex64::new(half * p.px, half * p.py),
            Complex64::new(half * (1.0 - p.pz), 0.0),
        ],
    ]);
    Ok(DensityMatrix(m))
}

/// Inverse of [`bloch_to_density`]: `p_k = Tr(sigma_k rho)`.
pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    let m = rho.matrix();
    if m.hermiticity_defect() > MATRIX_TOLERANCE {
        return Err(Error::InvalidState("density matrix is not Hermitian".into()));
    }
    if (m.trace() - Complex64::new(1.0, 0.0)).norm() > MATRIX_TOLERANCE {
        return Err(Error::InvalidState("density matrix trace differs from 1".into()));
    }
    let off = m.entry(0, 1);
    Ok(BlochVector::new(
        2.0 * off.re,
        -2.0 * off.im,
        (m.entry(0, 0) - m.entry(1, 1)).re,
    ))
}

/// The emission operator `V = [[0, 0], [1, 0]]`.
pub fn emission_operator() -> Matrix2 {
    Matrix2::real([[0.0, 0.0], [1.0, 0.0]])
}

/// Control Hamiltonian acting on the qubit, `H = -(u+ sigma_y + u- sigma_x)`.
///
/// The overall sign is the one for which `-i[H, rho]` reproduces the control
/// terms of the parameterized Bloch equations.
pub fn control_hamiltonian(u: ControlPair) -> Matrix2 {
    let c = |x: f64| Complex64::new(-x, 0.0);
    Matrix2::pauli_y().scale(c(u.u_plus)) + Matrix2::pauli_x().scale(c(u.u_minus))
}

fn dissipator(v: &Matrix2, rho: &Matrix2) -> Matrix2 {
    let vd = v.adjoint();
    *v * *rho * vd - (vd * *v).anticommutator(rho).scale(Complex64::new(0.5, 0.0))
}

/// Lindblad generator `L(rho) = -i[H, rho] + D[V_f](rho) + D[V_s](rho)` with
/// `V_f = kappa_f V`, `V_s = kappa_s V`. The output is Hermitian and traceless.
pub fn lindblad(rho: &DensityMatrix, u: ControlPair, params: &ModelParams) -> Result<Matrix2> {
    if !u.is_finite() {
        return Err(Error::param("control", "non-finite control"));
    }
    let r = rho.matrix();
    let v = emission_operator();
    let h = control_hamiltonian(u);
    let unitary = h.commutator(r).scale(Complex64::new(0.0, -1.0));
    let vf = v.scale(Complex64::new(params.kappa_f(), 0.0));
    let vs = v.scale(Complex64::new(params.kappa_s(), 0.0));
    Ok(unitary + dissipator(&vf, r) + dissipator(&vs, r))
}

/// dt-coefficient of the diffusive filter (Hamiltonian rotation plus decay).
pub fn diffusive_drift(p: BlochVector, u: ControlPair) -> Vec3 {
    let (up, um) = (u.u_plus, u.u_minus);
    [
        -0.5 * p.px - 2.0 * up * p.pz,
        -0.5 * p.py + 2.0 * um * p.pz,
        -(1.0 + p.pz) + 2.0 * up * p.px - 2.0 * um * p.py,
    ]
}

/// dW-coefficient of the diffusive filter, `kappa_s (1 + P_z - P_x^2, -P_x P_y, -P_x (1 + P_z))`.
pub fn diffusive_diffusion(p: BlochVector, params: &ModelParams) -> Vec3 {
    let k = params.kappa_s();
    [
        k * (1.0 + p.pz - p.px * p.px),
        -k * p.px * p.py,
        -k * p.px * (1.0 + p.pz),
    ]
}

/// `(grad b) b` for the diffusion vector `b`, the Milstein correction term.
pub fn diffusive_diffusion_derivative(p: BlochVector, params: &ModelParams) -> Vec3 {
    let b = diffusive_diffusion(p, params);
    let k = params.kappa_s();
    // Jacobian of b / kappa_s, row by row.
    [
        k * (-2.0 * p.px * b[0] + b[2]),
        k * (-p.py * b[0] - p.px * b[1]),
        k * (-(1.0 + p.pz) * b[0] - p.px * b[2]),
    ]
}

/// Drift of the homodyne record, `Tr(V_s rho + rho V_s^*) = kappa_s P_x`.
pub fn observation_drift(p: BlochVector, params: &ModelParams) -> f64 {
    params.kappa_s() * p.px
}

/// Full dt-coefficient of the counting filter, including the compensator of
/// the detection process.
pub fn counting_drift(p: BlochVector, u: ControlPair, params: &ModelParams) -> Vec3 {
    let d = diffusive_drift(p, u);
    let c = 0.5 * params.kappa_s_sq() * (1.0 + p.pz);
    [
        d[0] + c * p.px,
        d[1] + c * p.py,
        d[2] + c * (1.0 + p.pz),
    ]
}

/// Photon detection intensity `kappa_s^2 (1 + P_z) / 2`, never negative.
pub fn jump_intensity(p: BlochVector, params: &ModelParams) -> f64 {
    (0.5 * params.kappa_s_sq() * (1.0 + p.pz)).max(0.0)
}

/// State right after a detection, independent of the state before it.
pub fn jump_target(_p: BlochVector) -> BlochVector {
    BlochVector::ground()
}

/// `(drift, diffusion)` of `dTheta = 2 B dt + 2 alpha dW`.
pub fn angle_coefficients(_state: AngleState, b: f64, params: &ModelParams) -> (f64, f64) {
    (2.0 * b, 2.0 * params.alpha())
}
