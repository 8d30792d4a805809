//! Reduced dynamics of the agent under amplitude-damping noise.
//!
//! The decoherence function solves
//!
//! `ẋ(t) + iω0 x(t) + ∫₀ᵗ f(t − t′) x(t′) dt′ = 0`, `x(0) = 1`,
//!
//! and fixes the exact channel: in the `{|+⟩, |−⟩}` basis
//! `ρ₊₊ → |x|²ρ₊₊`, `ρ₊₋ → xρ₊₋`, `ρ₋₋ → 1 − |x|²ρ₊₊`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::quantum::{hamiltonian_unitary, DensityMatrix, Mat2, PureState, C64};
use crate::spectral::{kernel_unchecked, level_shift, NoiseSpec};

/// Default step for experiment runs, in `1/ω0`.
pub const DEFAULT_DT: f64 = 0.01;
/// Default horizon for experiment runs, in `1/ω0`.
pub const DEFAULT_T_MAX: f64 = 220.0;
/// `|x| ≤ 1 + CONTRACTIVITY_TOL` on every solved trajectory.
pub const CONTRACTIVITY_TOL: f64 = 1e-6;
/// `apply_channel` rejects `|x| > 1 + CHANNEL_TOL`.
pub const CHANNEL_TOL: f64 = 1e-9;
/// Points at which `|x|` is below this are skipped by [`rates`].
pub const RATE_FLOOR: f64 = 1e-12;

const MOMENT_NODES: usize = 8;

/// `x(t_n)` on `t_n = n·dt`, together with `ẋ(t_n)` as given by the equation
/// of motion.
#[derive(Clone, Debug)]
pub struct XTrajectory {
    dt: f64,
    values: Vec<C64>,
    derivatives: Vec<C64>,
}

impl XTrajectory {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[C64] {
        &self.derivatives
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |n| n as f64 * self.dt)
    }

    /// Linear interpolation of `x` at `t ∈ [0, t_max]`.
    pub fn at(&self, t: f64) -> Result<C64> {
        let last = self.values.len() - 1;
        let pos = t / self.dt;
        if !(pos >= 0.0) || pos > last as f64 + 1e-9 {
            return Err(Error::invalid(
                "t",
                format!("{t} outside trajectory range [0, {}]", self.t_max()),
            ));
        }
        let i = (pos.floor() as usize).min(last);
        if i == last {
            return Ok(self.values[last]);
        }
        let frac = pos - i as f64;
        Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }

    /// Samples of the Born–Markov form `e^{−[κ + i(ω0 + Δ(ω0))]t}` with the
    /// matching derivatives.
    pub fn born_markov(spec: &NoiseSpec, t_max: f64, dt: f64) -> Result<XTrajectory> {
        check_grid(t_max, dt)?;
        let bm = BornMarkov::new(spec)?;
        let n = (t_max / dt).round() as usize;
        let values: Vec<C64> = (0..=n).map(|k| bm.x(k as f64 * dt)).collect();
        let derivatives = values.iter().map(|x| -bm.exponent() * x).collect();
        Ok(XTrajectory {
            dt,
            values,
            derivatives,
        })
    }
}

fn check_grid(t_max: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(
            "dt",
            format!("must be finite and > 0, got {dt}"),
        ));
    }
    if !(t_max >= dt && t_max.is_finite()) {
        return Err(Error::invalid(
            "t_max",
            format!("must be >= dt ({dt}), got {t_max}"),
        ));
    }
    Ok(())
}

/// Largest step accepted by [`solve_volterra`]: `min(0.05/ω0, 0.5/ωc)`.
pub fn max_step(spec: &NoiseSpec) -> f64 {
    (0.05 / spec.omega0).min(0.5 / spec.omega_c)
}

/// Step used by experiments: [`DEFAULT_DT`] unless the cutoff demands finer.
pub fn default_step(spec: &NoiseSpec) -> f64 {
    DEFAULT_DT.min(max_step(spec))
}

/// Second-order product integration of the Volterra equation for `x(t)`.
///
/// The convolution treats `x` as piecewise linear between grid points and
/// integrates the kernel against each hat function exactly (Gauss–Legendre
/// moments per cell); the outer ODE is advanced by the trapezoidal rule,
/// which for this linear equation is solved in closed form at every step.
/// Cost is `O(n²)` in the number of steps.
pub fn solve_volterra(spec: &NoiseSpec, t_max: f64, dt: f64) -> Result<XTrajectory> {
    spec.validate()?;
    check_grid(t_max, dt)?;
    let limit = max_step(spec);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "dt",
            format!("{dt} exceeds min(0.05/ω0, 0.5/ωc) = {limit}"),
        ));
    }
    let n = (t_max / dt).round() as usize;
    let (m0, m1) = kernel_moments(spec, n, dt)?;

    // convolution at step k: Σ_{i=0}^{k} c_{k,i} x_i with
    //   c_{k,k} = head, c_{k,0} = m1[k−1], c_{k,i} = lag[k−i] otherwise
    let head = m0[0] - m1[0];
    let mut lag = vec![C64::new(0.0, 0.0); n + 1];
    for k in 1..n {
        lag[k] = m0[k] - m1[k] + m1[k - 1];
    }

    let w0 = C64::new(0.0, spec.omega0);
    let a = w0 + head;
    let denom = 1.0 + 0.5 * dt * a;

    let mut x = vec![C64::new(0.0, 0.0); n + 1];
    let mut dx = vec![C64::new(0.0, 0.0); n + 1];
    x[0] = C64::new(1.0, 0.0);
    dx[0] = -w0;
    for k in 1..=n {
        // history part of the convolution at t_k (excludes the x_k term)
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 1..k {
            let (w, xi) = (lag[k - i], x[i]);
            re += w.re * xi.re - w.im * xi.im;
            im += w.re * xi.im + w.im * xi.re;
        }
        let history = C64::new(re, im) + m1[k - 1] * x[0];
        let xk = (x[k - 1] + 0.5 * dt * (dx[k - 1] - history)) / denom;
        if !(xk.re.is_finite() && xk.im.is_finite()) {
            return Err(Error::Numerical(format!(
                "x(t) became non-finite at step {k}"
            )));
        }
        if xk.norm() > 1.0 + CONTRACTIVITY_TOL {
            return Err(Error::Numerical(format!(
                "|x| = {} exceeds 1 at t = {}; step too coarse for {spec:?}",
                xk.norm(),
                k as f64 * dt
            )));
        }
        x[k] = xk;
        dx[k] = -a * xk - history;
    }
    Ok(XTrajectory {
        dt,
        values: x,
        derivatives: dx,
    })
}

/// Per-cell kernel moments `M0_m = ∫₀^h f(mh + v) dv` and
/// `M1_m = (1/h) ∫₀^h v f(mh + v) dv`, `m = 0..n−1`.
fn kernel_moments(spec: &NoiseSpec, n: usize, h: f64) -> Result<(Vec<C64>, Vec<C64>)> {
    let (nodes, weights) = gauss_legendre(MOMENT_NODES);
    let f0 = spec.kernel_at_zero();
    let pts: Vec<(f64, f64)> = nodes
        .iter()
        .zip(&weights)
        .map(|(x, w)| (0.5 * (x + 1.0) * h, 0.5 * w * h))
        .collect();
    let mut m0 = Vec::with_capacity(n.max(1));
    let mut m1 = Vec::with_capacity(n.max(1));
    for m in 0..n.max(1) {
        let base = m as f64 * h;
        let mut a = C64::new(0.0, 0.0);
        let mut b = C64::new(0.0, 0.0);
        for &(v, w) in &pts {
            let f = kernel_unchecked(base + v, spec, f0);
            a += f * w;
            b += f * (w * v / h);
        }
        if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite kernel moment at t = {base}"
            )));
        }
        m0.push(a);
        m1.push(b);
    }
    Ok((m0, m1))
}

/// Born–Markov decay constant `κ = πJ(ω0)` and shifted frequency
/// `ω0 + Δ(ω0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BornMarkov {
    pub kappa: f64,
    pub frequency: f64,
}

impl BornMarkov {
    pub fn new(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let kappa = std::f64::consts::PI * spec.j(spec.omega0);
        let frequency = spec.omega0 + level_shift(spec.omega0, spec)?;
        Ok(BornMarkov { kappa, frequency })
    }

    fn exponent(&self) -> C64 {
        C64::new(self.kappa, self.frequency)
    }

    pub fn x(&self, t: f64) -> C64 {
        (-self.exponent() * t).exp()
    }
}

/// `x_BMA(t) = e^{−[κ + i(ω0 + Δ(ω0))]t}`.
pub fn born_markov_x(t: f64, spec: &NoiseSpec) -> Result<C64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(
            "t",
            format!("must be finite and >= 0, got {t}"),
        ));
    }
    Ok(BornMarkov::new(spec)?.x(t))
}

/// Time-dependent decay rate and renormalized frequency of the exact master
/// equation.
#[derive(Clone, Debug, Default)]
pub struct Rates {
    pub t: Vec<f64>,
    pub gamma: Vec<f64>,
    pub omega: Vec<f64>,
    /// Grid indices where `|x| < RATE_FLOOR`.
    pub skipped: Vec<usize>,
}

/// `γ = −Re[ẋ/x]`, `Ω = −Im[ẋ/x]` from the stored equation-of-motion
/// derivatives.
pub fn rates(traj: &XTrajectory) -> Rates {
    let mut out = Rates::default();
    for (n, (x, dx)) in traj.values.iter().zip(&traj.derivatives).enumerate() {
        if x.norm() < RATE_FLOOR {
            out.skipped.push(n);
            continue;
        }
        let r = dx / x;
        out.t.push(n as f64 * traj.dt);
        out.gamma.push(-r.re);
        out.omega.push(-r.im);
    }
    out
}

/// Exact amplitude-damping map for a given value of `x`.
pub fn apply_channel(rho: &DensityMatrix, x: C64) -> Result<DensityMatrix> {
    let mag = x.norm();
    if !(mag <= 1.0 + CHANNEL_TOL) {
        return Err(Error::invalid(
            "x",
            format!("|x| = {mag} > 1 is unphysical"),
        ));
    }
    let pm = rho.in_pm_basis();
    let excited = x.norm_sqr() * pm.0[0][0].re;
    let coherence = x * pm.0[0][1];
    let out = Mat2::new(
        C64::new(excited, 0.0),
        coherence,
        coherence.conj(),
        C64::new(1.0 - excited, 0.0),
    );
    Ok(DensityMatrix::from_pm_basis(out))
}

/// Which dynamics act during the interaction time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "noise", rename_all = "snake_case")]
pub enum ChannelKind {
    Noiseless,
    BornMarkov(NoiseSpec),
    ExactNonMarkovian(NoiseSpec),
}

impl ChannelKind {
    pub fn noise(&self) -> Option<&NoiseSpec> {
        match self {
            ChannelKind::Noiseless => None,
            ChannelKind::BornMarkov(s) | ChannelKind::ExactNonMarkovian(s) => Some(s),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ChannelKind::Noiseless => "noiseless",
            ChannelKind::BornMarkov(_) => "bma",
            ChannelKind::ExactNonMarkovian(_) => "exact",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey([u64; 5]);

impl CacheKey {
    fn new(spec: &NoiseSpec, dt: f64) -> Self {
        CacheKey([
            spec.omega0.to_bits(),
            spec.eta.to_bits(),
            spec.omega_c.to_bits(),
            spec.s.to_bits(),
            dt.to_bits(),
        ])
    }
}

type Slot = Arc<OnceLock<std::result::Result<Arc<XTrajectory>, Error>>>;

/// Solved trajectories keyed by `(spec, dt)`. A request is served by any
/// stored horizon that covers it; each horizon is solved at most once and
/// then shared read-only.
#[derive(Default)]
pub struct TrajectoryCache {
    slots: Mutex<HashMap<CacheKey, Vec<(f64, Slot)>>>,
    t_max: Option<f64>,
}

impl TrajectoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache whose trajectories always extend to at least `t_max`.
    pub fn with_horizon(t_max: f64) -> Self {
        TrajectoryCache {
            slots: Mutex::default(),
            t_max: Some(t_max),
        }
    }

    fn horizon_for(&self, tau: f64) -> f64 {
        let base = self.t_max.unwrap_or(DEFAULT_T_MAX);
        if tau <= base {
            base
        } else {
            // grow in fixed blocks so nearby τ share a solve
            (tau / 50.0).ceil() * 50.0
        }
    }

    /// Trajectory for `spec` at [`default_step`] covering `tau`.
    pub fn get(&self, spec: &NoiseSpec, tau: f64) -> Result<Arc<XTrajectory>> {
        self.get_with_step(spec, tau, default_step(spec))
    }

    pub fn get_with_step(&self, spec: &NoiseSpec, tau: f64, dt: f64) -> Result<Arc<XTrajectory>> {
        let slot = {
            let mut slots = self.slots.lock().expect("trajectory cache poisoned");
            let entries = slots.entry(CacheKey::new(spec, dt)).or_default();
            let covering = entries
                .iter()
                .filter(|(t_max, _)| *t_max >= tau)
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match covering {
                Some((t_max, slot)) => (*t_max, slot.clone()),
                None => {
                    let t_max = self.horizon_for(tau);
                    let slot = Slot::default();
                    entries.push((t_max, slot.clone()));
                    (t_max, slot)
                }
            }
        };
        let (t_max, slot) = slot;
        slot.get_or_init(|| solve_volterra(spec, t_max, dt).map(Arc::new))
            .clone()
    }

    /// Number of stored horizons.
    pub fn len(&self) -> usize {
        self.slots
            .lock()
            .expect("trajectory cache poisoned")
            .values()
            .map(Vec::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The interaction-time map for a fixed `(kind, τ)`, resolved once.
#[derive(Clone, Copy, Debug)]
pub enum Evolution {
    Unitary(crate::quantum::Unitary2),
    Damping(C64),
}

impl Evolution {
    pub fn prepare(kind: &ChannelKind, tau: f64, cache: &TrajectoryCache) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::invalid(
                "tau",
                format!("must be finite and >= 0, got {tau}"),
            ));
        }
        Ok(match kind {
            ChannelKind::Noiseless => Evolution::Unitary(hamiltonian_unitary(1.0, tau)),
            ChannelKind::BornMarkov(spec) => Evolution::Damping(BornMarkov::new(spec)?.x(tau)),
            ChannelKind::ExactNonMarkovian(spec) => {
                Evolution::Damping(cache.get(spec, tau)?.at(tau)?)
            }
        })
    }

    pub fn apply(&self, psi: &PureState) -> Result<DensityMatrix> {
        match self {
            Evolution::Unitary(u) => Ok(psi.density().conjugate_by(u)),
            Evolution::Damping(x) => apply_channel(&psi.density(), *x),
        }
    }
}

/// `ρ(τ)` for initial state `ψ` under `kind`.
pub fn evolve(
    psi: &PureState,
    kind: &ChannelKind,
    tau: f64,
    cache: &TrajectoryCache,
) -> Result<DensityMatrix> {
    Evolution::prepare(kind, tau, cache)?.apply(psi)
}
