//! Exact 2×2 complex linear algebra for the agent.
//!
//! States are written in the bare basis `{|0⟩, |1⟩}`. The agent Hamiltonian is
//! `H = (ω0/2)(|+⟩⟨+| − |−⟩⟨−|) = (ω0/2)σx` with `|±⟩ = (|0⟩ ± |1⟩)/√2`.
//! Every exponential here is the closed form `cos(θ/2)·I − i·sin(θ/2)·G`
//! for an involutory generator `G`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const UNITARY_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-10;

/// Raw 2×2 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn adjoint(&self) -> Mat2 {
        let m = &self.0;
        Mat2([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn scale(&self, k: C64) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0] * k, m[0][1] * k], [m[1][0] * k, m[1][1] * k]])
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// `M X M†`.
    pub fn conjugate(&self, x: &Mat2) -> Mat2 {
        *self * *x * self.adjoint()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    /// Entrywise distance after removing the best global phase, i.e.
    /// `min_φ max|A − e^{iφ}B|` evaluated at the phase aligning the traces of `B†A`.
    pub fn phase_insensitive_diff(&self, other: &Mat2) -> f64 {
        let overlap = (other.adjoint() * *self).trace();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        self.max_abs_diff(&other.scale(phase))
    }

    /// `M†M` deviation from the identity.
    pub fn unitarity_error(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Mat2::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        Mat2([
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

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + rhs.scale(-ONE)
    }
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            m[0][0], m[0][1], m[1][0], m[1][1]
        )
    }
}

pub const SIGMA_X: Mat2 = Mat2::new(ZERO, ONE, ONE, ZERO);
pub const SIGMA_Y: Mat2 = Mat2::new(ZERO, C64::new(0.0, -1.0), I, ZERO);
pub const SIGMA_Z: Mat2 = Mat2::new(ONE, ZERO, ZERO, C64::new(-1.0, 0.0));

const FRAC_1_SQRT_2: C64 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);

/// Change of basis between `{|0⟩,|1⟩}` and `{|+⟩,|−⟩}` (the Hadamard matrix,
/// its own inverse).
pub const PM_BASIS: Mat2 = Mat2::new(
    FRAC_1_SQRT_2,
    FRAC_1_SQRT_2,
    FRAC_1_SQRT_2,
    C64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
);

/// `exp(−i·θ·G/2)` for a generator with `G² = I`.
fn half_angle_exp(theta: f64, generator: &Mat2) -> Mat2 {
    let (s, c) = (0.5 * theta).sin_cos();
    Mat2::IDENTITY.scale(C64::new(c, 0.0)) + generator.scale(C64::new(0.0, -s))
}

/// Normalized pure state `c0|0⟩ + c1|1⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureState {
    amps: [C64; 2],
}

impl PureState {
    /// Validates normalization to [`NORM_TOL`].
    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let n = c0.norm_sqr() + c1.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(
                "state",
                format!("|c0|²+|c1|² = {n}, expected 1"),
            ));
        }
        Ok(PureState { amps: [c0, c1] })
    }

    /// Rescales `(c0, c1)` to unit norm.
    pub fn normalized(c0: C64, c1: C64) -> Result<Self> {
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("state", "zero or non-finite amplitudes"));
        }
        Ok(PureState {
            amps: [c0 / n, c1 / n],
        })
    }

    pub fn zero() -> Self {
        PureState { amps: [ONE, ZERO] }
    }

    pub fn one() -> Self {
        PureState { amps: [ZERO, ONE] }
    }

    pub fn plus() -> Self {
        PureState {
            amps: [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        }
    }

    pub fn minus() -> Self {
        PureState {
            amps: [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
        }
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps[0].conj() * other.amps[0] + self.amps[1].conj() * other.amps[1]
    }

    pub fn evolve(&self, u: &Unitary2) -> PureState {
        PureState {
            amps: u.matrix().apply(self.amps),
        }
    }

    pub fn density(&self) -> DensityMatrix {
        let [a, b] = self.amps;
        DensityMatrix {
            m: Mat2::new(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj()),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    m: Mat2,
}

impl DensityMatrix {
    pub fn new(m: Mat2) -> Result<Self> {
        let rho = DensityMatrix { m };
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix without validation.
    #[cfg(test)]
    pub(crate) fn from_raw(m: Mat2) -> Self {
        DensityMatrix { m }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_finite() {
            return Err(Error::invalid("rho", "non-finite entries"));
        }
        let herm = self.m.max_abs_diff(&self.m.adjoint());
        if herm > HERMITIAN_TOL {
            return Err(Error::invalid(
                "rho",
                format!("not Hermitian (off by {herm:e})"),
            ));
        }
        let tr = self.m.trace();
        if (tr - ONE).norm() > HERMITIAN_TOL {
            return Err(Error::invalid("rho", format!("trace {tr} != 1")));
        }
        let [lo, _] = self.eigenvalues();
        if lo < -EIGEN_TOL {
            return Err(Error::invalid("rho", format!("negative eigenvalue {lo:e}")));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    /// Ascending eigenvalues of the Hermitian part.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.m.0[0][0].re;
        let d = self.m.0[1][1].re;
        let b = 0.5 * (self.m.0[0][1] + self.m.0[1][0].conj());
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - radius, mean + radius]
    }

    /// `Tr[O ρ]`, real part (exact for Hermitian `O`).
    pub fn expectation(&self, observable: &Mat2) -> f64 {
        (*observable * self.m).trace().re
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &Unitary2) -> DensityMatrix {
        DensityMatrix {
            m: u.matrix().conjugate(&self.m),
        }
    }

    /// Entries in the `{|+⟩, |−⟩}` basis.
    pub fn in_pm_basis(&self) -> Mat2 {
        PM_BASIS.conjugate(&self.m)
    }

    /// Inverse of [`DensityMatrix::in_pm_basis`]; no validation.
    pub(crate) fn from_pm_basis(pm: Mat2) -> DensityMatrix {
        DensityMatrix {
            m: PM_BASIS.conjugate(&pm),
        }
    }
}

/// 2×2 unitary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2 {
    m: Mat2,
}

impl Unitary2 {
    pub const IDENTITY: Unitary2 = Unitary2 { m: Mat2::IDENTITY };

    pub fn new(m: Mat2) -> Result<Self> {
        let err = m.unitarity_error();
        if !(err <= UNITARY_TOL) {
            return Err(Error::invalid("unitary", format!("U†U − I = {err:e}")));
        }
        Ok(Unitary2 { m })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    pub fn adjoint(&self) -> Unitary2 {
        Unitary2 {
            m: self.m.adjoint(),
        }
    }

    pub fn unitarity_error(&self) -> f64 {
        self.m.unitarity_error()
    }

    /// Column-wise Gram–Schmidt projection back onto U(2).
    pub fn reunitarized(&self) -> Unitary2 {
        let m = &self.m.0;
        let (a, b) = (m[0][0], m[1][0]);
        let n0 = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (a, b) = (a / n0, b / n0);
        let (c, d) = (m[0][1], m[1][1]);
        let proj = a.conj() * c + b.conj() * d;
        let (c, d) = (c - proj * a, d - proj * b);
        let n1 = (c.norm_sqr() + d.norm_sqr()).sqrt();
        Unitary2 {
            m: Mat2::new(a, c / n1, b, d / n1),
        }
    }

    /// `|col⟩ = U|j⟩`.
    pub fn column(&self, j: usize) -> [C64; 2] {
        [self.m.0[0][j], self.m.0[1][j]]
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;
    fn mul(self, rhs: Unitary2) -> Unitary2 {
        Unitary2 { m: self.m * rhs.m }
    }
}

/// `exp(−iHτ)` with `H = (ω0/2)σx`.
pub fn hamiltonian_unitary(omega0: f64, tau: f64) -> Unitary2 {
    Unitary2 {
        m: half_angle_exp(omega0 * tau, &SIGMA_X),
    }
}

/// The rotation with angles `α = (α_x, α_y, α_z)` about the Pauli axes
/// conjugated by `D`:
///
/// `R = e^{−iα_y σy'/2} e^{+iα_z σz'/2} e^{−iα_x σx'/2}`, `σν' = D σν D†`.
///
/// Evaluated as `D · R(α; I) · D†`, which is the same matrix for unitary `D`
/// but does not amplify any residual non-unitarity of `D` through the
/// rotated generators.
pub fn rotation_from_angles(alpha_x: f64, alpha_y: f64, alpha_z: f64, d: &Unitary2) -> Unitary2 {
    let bare = bare_rotation(alpha_x, alpha_y, alpha_z);
    Unitary2 {
        m: d.m.conjugate(&bare),
    }
}

pub(crate) fn bare_rotation(alpha_x: f64, alpha_y: f64, alpha_z: f64) -> Mat2 {
    half_angle_exp(alpha_y, &SIGMA_Y)
        * half_angle_exp(-alpha_z, &SIGMA_Z)
        * half_angle_exp(alpha_x, &SIGMA_X)
}

/// `max(|⟨+|ψ⟩|, |⟨−|ψ⟩|)`, in `[1/√2, 1]`.
pub fn fidelity_to_eigenstates(psi: &PureState) -> f64 {
    let (up, down) = eigen_overlaps(psi);
    up.max(down)
}

/// `(|⟨+|ψ⟩|, |⟨−|ψ⟩|)`.
pub fn eigen_overlaps(psi: &PureState) -> (f64, f64) {
    let [c0, c1] = psi.amps;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (((c0 + c1) * s).norm(), ((c0 - c1) * s).norm())
}
