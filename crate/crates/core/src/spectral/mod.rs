//! Ohmic-family noise spectrum and the pole structure of the agent's
//! decoherence function.
//!
//! With `J(ω) = ηω(ω/ωc)^{s−1}e^{−ω/ωc}` the Laplace transform of `x(t)` has
//! at most one isolated pole below the continuum, the bound state, at the root
//! `Ē_b < 0` of `Y(Ē) = Ē` with `Y(Ē) = ω0 − ∫ J(ω)/(ω − Ē) dω`. Long-time
//! dynamics follow from
//!
//! `x(t) = Z e^{−iĒ_b t} + ∫₀^∞ Θ(Ē) e^{−iĒt} dĒ`.
//!
//! Energies here are in the shifted variable `Ē`; the eigenenergy of the
//! total Hamiltonian is `Ē − ω0/2`.

mod band;
mod gamma;

use serde::{Deserialize, Serialize};

pub use band::{BandSpectrum, BandTable, LongTimeSolution};
pub use gamma::gamma_fn;
pub(crate) use gamma::gamma_unchecked;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_semi_infinite, Tolerance};
use crate::quantum::C64;

/// Accuracy of the spectral integrals.
pub(crate) const QUAD_TOL: Tolerance = Tolerance {
    abs: 1e-10,
    rel: 1e-12,
    max_panels: 4000,
};

/// Tighter accuracy used while bracketing the bound-state root.
pub(crate) const ROOT_TOL: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-13,
    max_panels: 4000,
};

/// Residual target `|Y(Ē_b) − Ē_b|` in units of ω0.
pub const ROOT_RESIDUAL: f64 = 1e-10;

/// Bracket expansion stops at `Ē = −BRACKET_LIMIT·ω0`.
pub const BRACKET_LIMIT: f64 = 1e3;

/// System frequency and Ohmic-family spectral density parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub omega0: f64,
    pub eta: f64,
    pub omega_c: f64,
    pub s: f64,
}

impl NoiseSpec {
    /// Spec in units where `ω0 = 1`.
    pub fn new(eta: f64, omega_c: f64, s: f64) -> Result<Self> {
        Self::with_omega0(1.0, eta, omega_c, s)
    }

    pub fn with_omega0(omega0: f64, eta: f64, omega_c: f64, s: f64) -> Result<Self> {
        let spec = NoiseSpec {
            omega0,
            eta,
            omega_c,
            s,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `η = 0` is accepted as the decoupled limit.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        }
        positive("omega0", self.omega0)?;
        positive("omega_c", self.omega_c)?;
        positive("s", self.s)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(
                "eta",
                format!("must be finite and >= 0, got {}", self.eta),
            ));
        }
        Ok(())
    }

    /// `∫₀^∞ J(ω)/ω dω = ηωcΓ(s)`.
    pub fn coupling_integral(&self) -> f64 {
        self.eta * self.omega_c * gamma_unchecked(self.s)
    }

    /// `ω0 < ηωcΓ(s)`.
    pub fn bound_state_criterion(&self) -> bool {
        self.omega0 < self.coupling_integral()
    }

    /// `J(ω)` without domain checks; `ω ≥ 0`.
    #[inline]
    pub(crate) fn j(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let u = w / self.omega_c;
        self.eta * self.omega_c * u.powf(self.s) * (-u).exp()
    }

    /// `J'(ω)`.
    pub(crate) fn j_prime(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        self.j(w) * (self.s / w - 1.0 / self.omega_c)
    }

    /// `f(0) = ∫ J dω = ηωc²Γ(s+1)`.
    pub fn kernel_at_zero(&self) -> f64 {
        self.eta * self.omega_c * self.omega_c * gamma_unchecked(self.s + 1.0)
    }
}

/// Bound-state pole data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundState {
    /// Root `Ē_b < 0` of `Y(Ē) = Ē`, in units of ω0.
    pub energy: f64,
    /// Residue `Z ∈ (0, 1)`, the long-time plateau of `|x(t)|`.
    pub residue: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub bound: Option<BoundState>,
    /// `Y(0⁻)` evaluated by quadrature; negative iff a bound state exists.
    pub y_at_zero: f64,
}

impl SpectrumResult {
    pub fn has_bound_state(&self) -> bool {
        self.bound.is_some()
    }

    pub fn energy(&self) -> Option<f64> {
        self.bound.map(|b| b.energy)
    }

    pub fn residue(&self) -> Option<f64> {
        self.bound.map(|b| b.residue)
    }
}

/// `J(ω) = ηω(ω/ωc)^{s−1}e^{−ω/ωc}`.
pub fn spectral_density(w: f64, spec: &NoiseSpec) -> Result<f64> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::invalid(
            "omega",
            format!("must be finite and >= 0, got {w}"),
        ));
    }
    Ok(spec.j(w))
}

/// Noise correlation function `f(t) = ∫₀^∞ J(ω)e^{−iωt}dω`, evaluated in
/// closed form as `ηωc²Γ(s+1)/(1 + iωc t)^{s+1}` (principal branch).
pub fn memory_kernel(t: f64, spec: &NoiseSpec) -> Result<C64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(
            "t",
            format!("must be finite and >= 0, got {t}"),
        ));
    }
    Ok(kernel_unchecked(t, spec, spec.kernel_at_zero()))
}

#[inline]
pub(crate) fn kernel_unchecked(t: f64, spec: &NoiseSpec, f0: f64) -> C64 {
    // 1 + iωc t has argument in [0, π/2) for t ≥ 0
    let x = spec.omega_c * t;
    let modulus = x.hypot(1.0);
    let arg = x.atan();
    let p = spec.s + 1.0;
    C64::from_polar(f0 * modulus.powf(-p), -p * arg)
}

/// `Δ(E) = P∫₀^∞ J(ω)/(E − ω) dω`.
///
/// For `E ≤ 0` the integral is regular. For `E > 0` the window `[0, 2E]` is
/// handled by subtracting `J(E)`, whose principal value over a window
/// symmetric about the pole vanishes; the remainder is smooth.
pub fn level_shift(e: f64, spec: &NoiseSpec) -> Result<f64> {
    if !e.is_finite() {
        return Err(Error::invalid("E", format!("must be finite, got {e}")));
    }
    level_shift_with(e, spec, QUAD_TOL)
}

pub(crate) fn level_shift_with(e: f64, spec: &NoiseSpec, tol: Tolerance) -> Result<f64> {
    if spec.eta == 0.0 {
        return Ok(0.0);
    }
    let scale = spec.omega_c;
    if e <= 0.0 {
        let r = integrate_semi_infinite(
            |w: f64| {
                if w <= 0.0 {
                    0.0
                } else {
                    spec.j(w) / (e - w)
                }
            },
            0.0,
            scale,
            tol,
        )?;
        return Ok(r.value);
    }
    let je = spec.j(e);
    let subtracted = |w: f64| {
        let d = e - w;
        if d.abs() <= 1e-9 * e {
            -spec.j_prime(e)
        } else {
            (spec.j(w) - je) / d
        }
    };
    let lower = integrate(subtracted, 0.0, e, tol)?;
    let upper = integrate(subtracted, e, 2.0 * e, tol)?;
    let tail = integrate_semi_infinite(|w: f64| spec.j(w) / (e - w), 2.0 * e, scale, tol)?;
    Ok(lower.value + upper.value + tail.value)
}

/// `Y(E) = ω0 − ∫₀^∞ J(ω)/(ω − E) dω` on `E < 0`.
pub fn self_energy_y(e: f64, spec: &NoiseSpec) -> Result<f64> {
    if !(e < 0.0) || !e.is_finite() {
        return Err(Error::invalid(
            "E",
            format!("Y is evaluated on E < 0 only (band region otherwise), got {e}"),
        ));
    }
    Ok(spec.omega0 + level_shift_with(e, spec, QUAD_TOL)?)
}

/// `Y(0⁻) = ω0 − ∫ J(ω)/ω dω` by quadrature (closed form `ω0 − ηωcΓ(s)`).
pub fn y_at_zero(spec: &NoiseSpec) -> Result<f64> {
    Ok(spec.omega0 + level_shift_with(0.0, spec, ROOT_TOL)?)
}

/// Finds the bound-state pole, if any, by bisection on `Y(E) − E` over
/// `E < 0`, then evaluates the residue `Z = [1 + ∫J/(E_b − ω)²]^{−1}`.
pub fn solve_bound_state(spec: &NoiseSpec) -> Result<SpectrumResult> {
    spec.validate()?;
    let y0 = y_at_zero(spec)?;
    if !(y0 < 0.0) {
        return Ok(SpectrumResult {
            bound: None,
            y_at_zero: y0,
        });
    }
    let w0 = spec.omega0;
    let g = |e: f64| -> Result<f64> { Ok(w0 + level_shift_with(e, spec, ROOT_TOL)? - e) };

    // g(0⁻) = Y(0) < 0 and g → +∞ as E → −∞
    let mut hi = 0.0;
    let mut lo = -w0;
    loop {
        if g(lo)? > 0.0 {
            break;
        }
        hi = lo;
        lo *= 2.0;
        if lo < -BRACKET_LIMIT * w0 {
            return Err(Error::Numerical(format!(
                "bound-state root not bracketed above E = {}ω0 for {spec:?}",
                -BRACKET_LIMIT
            )));
        }
    }
    let mut root = 0.5 * (lo + hi);
    for _ in 0..400 {
        root = 0.5 * (lo + hi);
        let v = g(root)?;
        if v.abs() < ROOT_RESIDUAL * w0 || root == lo || root == hi {
            break;
        }
        if v > 0.0 {
            lo = root;
        } else {
            hi = root;
        }
    }
    let residue = residue_at(root, spec)?;
    Ok(SpectrumResult {
        bound: Some(BoundState {
            energy: root,
            residue,
        }),
        y_at_zero: y0,
    })
}

/// `Z(E) = [1 + ∫ J(ω)/(E − ω)² dω]^{−1}` for `E < 0`.
pub(crate) fn residue_at(e: f64, spec: &NoiseSpec) -> Result<f64> {
    let r = integrate_semi_infinite(
        |w: f64| {
            let d = e - w;
            spec.j(w) / (d * d)
        },
        0.0,
        spec.omega_c,
        QUAD_TOL,
    )?;
    Ok(1.0 / (1.0 + r.value))
}

/// `Θ(E) = J(E) / {[E − ω0 − Δ(E)]² + [πJ(E)]²}` on the continuum `E > 0`.
pub fn band_density(e: f64, spec: &NoiseSpec) -> Result<f64> {
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::invalid(
            "E",
            format!("band density needs E > 0, got {e}"),
        ));
    }
    band_density_unchecked(e, spec)
}

pub(crate) fn band_density_unchecked(e: f64, spec: &NoiseSpec) -> Result<f64> {
    if e <= 0.0 {
        return Ok(0.0);
    }
    let j = spec.j(e);
    if j == 0.0 {
        return Ok(0.0);
    }
    let detuning = e - spec.omega0 - level_shift_with(e, spec, QUAD_TOL)?;
    let width = std::f64::consts::PI * j;
    Ok(j / (detuning * detuning + width * width))
}

/// Long-time form of `x(t)`: bound-state term plus the band integral.
pub fn asymptotic_x(t: f64, spec: &NoiseSpec) -> Result<C64> {
    let sol = LongTimeSolution::new(spec)?;
    Ok(sol.eval(t))
}
