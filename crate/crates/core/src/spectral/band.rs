//! Continuum contribution `∫₀^∞ Θ(E) e^{−iEt} dE`.
//!
//! `Θ` is a (possibly very narrow) Lorentzian around each zero of
//! `E − ω0 − Δ(E)` on top of a smooth background, so the integration grid is
//! seeded with those resonances and their widths before any adaptive
//! refinement.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_semi_infinite, Tolerance};
use crate::quantum::C64;

use super::{
    band_density_unchecked, level_shift_with, solve_bound_state, BoundState, NoiseSpec, QUAD_TOL,
};

const SCAN_POINTS: usize = 400;
const WEIGHT_TOL: Tolerance = Tolerance {
    abs: 1e-10,
    rel: 1e-10,
    max_panels: 4000,
};
/// Integrated linear-interpolation error allowed per table cell.
const TABLE_CELL_TOL: f64 = 1e-9;
const TABLE_MAX_DEPTH: u32 = 48;

/// Breakpoints and cut-off of the band integral for one spec.
#[derive(Clone, Debug)]
pub struct BandSpectrum {
    spec: NoiseSpec,
    breakpoints: Vec<f64>,
    top: f64,
}

impl BandSpectrum {
    pub fn new(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        // Θ ~ J/E² above ~sωc; e^{−60} is far below every tolerance used
        let top = spec.omega_c * (spec.s + 60.0) + 2.0 * spec.omega0;
        let mut breakpoints = vec![0.0];
        if spec.eta > 0.0 {
            for (e_r, width) in resonances(spec, top)? {
                for k in [0.0, 1.0, 4.0, 16.0, 64.0, 256.0] {
                    for sign in [-1.0, 1.0] {
                        let b = e_r + sign * k * width;
                        if b > 0.0 && b < top {
                            breakpoints.push(b);
                        }
                    }
                }
            }
        }
        breakpoints.push(spec.omega0.min(top));
        breakpoints.push(top);
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1e-300));
        Ok(BandSpectrum {
            spec: *spec,
            breakpoints,
            top,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Interval boundaries in `[0, top]`, including detected resonances.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `∫₀^∞ Θ(E) dE` by adaptive quadrature between breakpoints.
    pub fn weight(&self) -> Result<f64> {
        if self.spec.eta == 0.0 {
            return Ok(0.0);
        }
        let theta = |e: f64| band_density_unchecked(e, &self.spec).unwrap_or(f64::NAN);
        let mut total = 0.0;
        for w in self.breakpoints.windows(2) {
            total += integrate(theta, w[0], w[1], WEIGHT_TOL)?.value;
        }
        total += integrate_semi_infinite(theta, self.top, self.spec.omega_c, WEIGHT_TOL)?.value;
        if !total.is_finite() {
            return Err(Error::Numerical("band weight is not finite".into()));
        }
        Ok(total)
    }

    /// Samples `Θ` on a grid refined until piecewise-linear interpolation is
    /// accurate to [`TABLE_CELL_TOL`] per cell.
    pub fn tabulate(&self) -> Result<BandTable> {
        let mut nodes = vec![(0.0, 0.0)];
        if self.spec.eta == 0.0 {
            return Ok(BandTable { nodes });
        }
        let theta = |e: f64| band_density_unchecked(e, &self.spec);
        let w0 = self.spec.omega0;
        for w in self.breakpoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            let fa = if a > 0.0 { theta(a)? } else { 0.0 };
            // nodes already holds (a, fa) from the previous interval
            debug_assert!((nodes.last().unwrap().0 - a).abs() <= 1e-12 * a.max(1.0));
            nodes.last_mut().unwrap().1 = fa;
            refine(&theta, a, fa, b, theta(b)?, w0, 0, &mut nodes)?;
        }
        Ok(BandTable { nodes })
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    theta: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    w0: f64,
    depth: u32,
    out: &mut Vec<(f64, f64)>,
) -> Result<()>
where
    F: Fn(f64) -> Result<f64>,
{
    let mid = 0.5 * (a + b);
    // cells stay narrow relative to their position so no feature is skipped
    let max_width = 0.05 * a.max(w0);
    let fm = theta(mid)?;
    let lin_err = (fm - 0.5 * (fa + fb)).abs() * (b - a);
    let done = depth >= TABLE_MAX_DEPTH
        || (lin_err <= TABLE_CELL_TOL && (b - a) <= max_width && depth >= 2);
    if done {
        out.push((mid, fm));
        out.push((b, fb));
        return Ok(());
    }
    refine(theta, a, fa, mid, fm, w0, depth + 1, out)?;
    refine(theta, mid, fm, b, fb, w0, depth + 1, out)
}

/// Zeros of `E − ω0 − Δ(E)` on `(0, top)` with their Lorentzian half-widths
/// `πJ(E_r)`.
fn resonances(spec: &NoiseSpec, top: f64) -> Result<Vec<(f64, f64)>> {
    let detuning =
        |e: f64| -> Result<f64> { Ok(e - spec.omega0 - level_shift_with(e, spec, QUAD_TOL)?) };
    let lo = 1e-6 * spec.omega0.min(spec.omega_c);
    let ratio = (top / lo).ln();
    let mut grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| lo * (ratio * k as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    // dense linear sampling around the bare frequency
    grid.extend((1..200).map(|k| spec.omega0 * k as f64 / 100.0));
    grid.sort_by(f64::total_cmp);
    let mut found = Vec::new();
    let mut prev = (grid[0], detuning(grid[0])?);
    for &e in &grid[1..] {
        let v = detuning(e)?;
        if prev.1.signum() != v.signum() {
            let (mut a, mut b) = (prev.0, e);
            let sa = prev.1.signum();
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if detuning(m)?.signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            let e_r = 0.5 * (a + b);
            let width = (std::f64::consts::PI * spec.j(e_r)).max(1e-14 * e_r);
            found.push((e_r, width));
        }
        prev = (e, v);
    }
    Ok(found)
}

/// Piecewise-linear samples of `Θ` for oscillatory (Filon-type) integration.
#[derive(Clone, Debug)]
pub struct BandTable {
    nodes: Vec<(f64, f64)>,
}

impl BandTable {
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// `∫ Θ(E) e^{−iEt} dE` with `Θ` linear on each cell and the exponential
    /// integrated exactly, so the error does not grow with `t`.
    pub fn transform(&self, t: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for w in self.nodes.windows(2) {
            let ((a, fa), (b, fb)) = (w[0], w[1]);
            let h = b - a;
            if h <= 0.0 {
                continue;
            }
            let (m0, m1) = linear_moments(t * h);
            acc += C64::from_polar(h, -a * t) * (m0 * fa + m1 * (fb - fa));
        }
        acc
    }
}

/// `(∫₀¹ e^{−iθu} du, ∫₀¹ u e^{−iθu} du)`.
fn linear_moments(theta: f64) -> (C64, C64) {
    if theta.abs() < 0.05 {
        // Taylor series in c = −iθ: Σ cᵏ/(k+1)!, Σ cᵏ/(k!(k+2))
        let c = C64::new(0.0, -theta);
        let mut m0 = C64::new(0.0, 0.0);
        let mut m1 = C64::new(0.0, 0.0);
        let mut pow = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for k in 0..12 {
            let kf = k as f64;
            m0 += pow / (fact * (kf + 1.0));
            m1 += pow / (fact * (kf + 2.0));
            pow *= c;
            fact *= kf + 1.0;
        }
        return (m0, m1);
    }
    let c = C64::new(0.0, -theta);
    let ec = c.exp();
    let m0 = (ec - 1.0) / c;
    let m1 = ec / c - (ec - 1.0) / (c * c);
    (m0, m1)
}

/// `x(t) ≈ Z e^{−iĒ_b t} + ∫₀^∞ Θ(Ē) e^{−iĒt} dĒ`.
#[derive(Clone, Debug)]
pub struct LongTimeSolution {
    pub bound: Option<BoundState>,
    pub band: BandTable,
}

impl LongTimeSolution {
    pub fn new(spec: &NoiseSpec) -> Result<Self> {
        let spectrum = solve_bound_state(spec)?;
        let band = BandSpectrum::new(spec)?.tabulate()?;
        Ok(LongTimeSolution {
            bound: spectrum.bound,
            band,
        })
    }

    pub fn eval(&self, t: f64) -> C64 {
        let pole = self
            .bound
            .map(|b| C64::from_polar(b.residue, -b.energy * t))
            .unwrap_or_default();
        pole + self.band.transform(t)
    }
}
