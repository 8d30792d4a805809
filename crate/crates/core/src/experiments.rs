//! Monte Carlo averages over episodes and the parameter sweeps built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ChannelKind, Evolution, TrajectoryCache};
use crate::error::{Error, Result};
use crate::protocol::{run_episode_with, EpisodeSeed, QrlParams};
use crate::spectral::{solve_bound_state, NoiseSpec};

/// Coupling used by the ohmicity sweep.
pub const OHMICITY_ETA: f64 = 0.01;
/// Cutoff used by the ohmicity sweep, `10³/9`.
pub const OHMICITY_OMEGA_C: f64 = 1000.0 / 9.0;
/// Minimum τ-grid density per period `2π/ω0`.
pub const MIN_POINTS_PER_PERIOD: usize = 40;
/// Longest τ window searched by the bound-state sweeps.
pub const MAX_SEARCH_SPAN: f64 = 400.0;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub params: QrlParams,
    pub n_episodes: usize,
    pub master_seed: u64,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes < 1 {
            return Err(Error::invalid("n_episodes", "must be >= 1"));
        }
        self.params.validate()
    }

    fn with_tau(&self, tau: f64) -> Self {
        MonteCarloConfig {
            params: QrlParams { tau, ..self.params },
            ..*self
        }
    }

    fn with_channel(&self, channel: ChannelKind) -> Self {
        MonteCarloConfig {
            params: QrlParams {
                channel,
                ..self.params
            },
            ..*self
        }
    }
}

/// Mean fidelity and exploration along `axis` (k, τ, ωc or s).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub axis: Vec<f64>,
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub stderr_f: Vec<f64>,
    pub n: usize,
}

impl AggregateSeries {
    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    fn push(&mut self, axis: f64, point: PointStats) {
        self.axis.push(axis);
        self.f.push(point.f);
        self.w.push(point.w);
        self.stderr_f.push(point.stderr_f);
    }
}

/// Final-iteration averages of one Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub f: f64,
    pub w: f64,
    pub stderr_f: f64,
}

/// Runs episodes `j = 1..=N` on streams `(master_seed, j)` and averages per
/// iteration. Episode results are collected in index order before summing,
/// so the output does not depend on the thread count.
pub fn monte_carlo_curves(
    cfg: &MonteCarloConfig,
    cache: &TrajectoryCache,
) -> Result<AggregateSeries> {
    cfg.validate()?;
    let evolution = Evolution::prepare(&cfg.params.channel, cfg.params.tau, cache)?;
    let k_max = cfg.params.k_max;
    let episodes: Vec<Vec<(f64, f64)>> = (1..=cfg.n_episodes as u64)
        .into_par_iter()
        .map(|j| {
            let trace = run_episode_with(
                &cfg.params,
                &evolution,
                EpisodeSeed::new(cfg.master_seed, j),
            )?;
            Ok(trace.records.iter().map(|r| (r.f, r.w)).collect())
        })
        .collect::<Result<_>>()?;

    let n = episodes.len() as f64;
    let mut sum_f = vec![0.0; k_max];
    let mut sum_w = vec![0.0; k_max];
    for ep in &episodes {
        for (k, &(f, w)) in ep.iter().enumerate() {
            sum_f[k] += f;
            sum_w[k] += w;
        }
    }
    let mean_f: Vec<f64> = sum_f.iter().map(|s| s / n).collect();
    let mut sq = vec![0.0; k_max];
    for ep in &episodes {
        for (k, &(f, _)) in ep.iter().enumerate() {
            let d = f - mean_f[k];
            sq[k] += d * d;
        }
    }
    let stderr_f = sq
        .iter()
        .map(|s| {
            if episodes.len() > 1 {
                (s / (n - 1.0) / n).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(AggregateSeries {
        axis: (1..=k_max).map(|k| k as f64).collect(),
        f: mean_f,
        w: sum_w.iter().map(|s| s / n).collect(),
        stderr_f,
        n: cfg.n_episodes,
    })
}

fn final_point(cfg: &MonteCarloConfig, cache: &TrajectoryCache) -> Result<PointStats> {
    let series = monte_carlo_curves(cfg, cache)?;
    let last = series.len() - 1;
    Ok(PointStats {
        f: series.f[last],
        w: series.w[last],
        stderr_f: series.stderr_f[last],
    })
}

/// Uniform grid on `[lo, hi]` with at least `points_per_period` points per
/// `2π` (endpoints included).
pub fn tau_grid(lo: f64, hi: f64, points_per_period: usize) -> Result<Vec<f64>> {
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(
            "tau_grid",
            format!("need 0 <= lo < hi, got [{lo}, {hi}]"),
        ));
    }
    if points_per_period < MIN_POINTS_PER_PERIOD {
        return Err(Error::invalid(
            "tau_grid",
            format!("{points_per_period} points per period is below {MIN_POINTS_PER_PERIOD}"),
        ));
    }
    let steps = ((hi - lo) / TWO_PI * points_per_period as f64)
        .ceil()
        .max(1.0) as usize;
    Ok((0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect())
}

fn check_ascending(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid(
            name,
            "grid must be finite and strictly ascending",
        ));
    }
    Ok(())
}

/// Final-k averages for each τ in `taus`.
pub fn sweep_tau(
    cfg: &MonteCarloConfig,
    taus: &[f64],
    cache: &TrajectoryCache,
) -> Result<AggregateSeries> {
    check_ascending("tau_grid", taus)?;
    cfg.validate()?;
    let mut out = AggregateSeries {
        n: cfg.n_episodes,
        ..Default::default()
    };
    for &tau in taus {
        out.push(tau, final_point(&cfg.with_tau(tau), cache)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauOptimum {
    pub tau: f64,
    pub stats: PointStats,
}

/// Best final-k fidelity over `n_candidates` uniformly spaced τ in
/// `window`, which must span at least one period. Ties keep the smallest τ.
pub fn optimize_tau(
    cfg: &MonteCarloConfig,
    window: (f64, f64),
    n_candidates: usize,
    cache: &TrajectoryCache,
) -> Result<TauOptimum> {
    let (lo, hi) = window;
    if n_candidates < 3 {
        return Err(Error::invalid(
            "n_candidates",
            format!("must be >= 3, got {n_candidates}"),
        ));
    }
    if !(lo >= 0.0 && hi.is_finite() && hi - lo >= TWO_PI * (1.0 - 1e-12)) {
        return Err(Error::invalid(
            "tau_window",
            format!("[{lo}, {hi}] must lie in [0, ∞) and span at least 2π"),
        ));
    }
    let mut best: Option<TauOptimum> = None;
    for i in 0..n_candidates {
        let tau = lo + (hi - lo) * i as f64 / (n_candidates - 1) as f64;
        let stats = final_point(&cfg.with_tau(tau), cache)?;
        if best.is_none_or(|b| stats.f > b.stats.f) {
            best = Some(TauOptimum { tau, stats });
        }
    }
    Ok(best.expect("n_candidates >= 3"))
}

/// One point of a cutoff or ohmicity sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundStateRow {
    pub axis: f64,
    pub has_bound_state: bool,
    pub e_b: Option<f64>,
    pub z: Option<f64>,
    pub tau_opt: f64,
    pub stats: PointStats,
}

/// Which noise parameter a bound-state sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SweepAxis {
    Cutoff,
    Ohmicity,
}

fn bound_state_sweep(
    cfg: &MonteCarloConfig,
    axis: SweepAxis,
    grid: &[f64],
    window: (f64, f64),
    n_candidates: usize,
    cache: &TrajectoryCache,
) -> Result<Vec<BoundStateRow>> {
    let name = match axis {
        SweepAxis::Cutoff => "omega_c_grid",
        SweepAxis::Ohmicity => "s_grid",
    };
    check_ascending(name, grid)?;
    cfg.validate()?;
    let base = *cfg
        .params
        .channel
        .noise()
        .ok_or_else(|| Error::invalid("channel", "bound-state sweeps need a noisy channel"))?;
    let mut rows = Vec::with_capacity(grid.len());
    for &v in grid {
        let spec = match axis {
            SweepAxis::Cutoff => NoiseSpec::with_omega0(base.omega0, base.eta, v, base.s),
            SweepAxis::Ohmicity => NoiseSpec::with_omega0(base.omega0, base.eta, base.omega_c, v),
        }
        .map_err(|e| match e {
            Error::InvalidParameter { reason, .. } => {
                Error::invalid(name, format!("{v}: {reason}"))
            }
            other => other,
        })?;
        let channel = match cfg.params.channel {
            ChannelKind::BornMarkov(_) => ChannelKind::BornMarkov(spec),
            _ => ChannelKind::ExactNonMarkovian(spec),
        };
        let spectrum = solve_bound_state(&spec)?;
        let search = match channel {
            ChannelKind::ExactNonMarkovian(_) => search_window(window, spectrum.energy()),
            _ => window,
        };
        let best = optimize_tau(&cfg.with_channel(channel), search, n_candidates, cache)?;
        rows.push(BoundStateRow {
            axis: v,
            has_bound_state: spectrum.has_bound_state(),
            e_b: spectrum.energy(),
            z: spectrum.residue(),
            tau_opt: best.tau,
            stats: best.stats,
        });
    }
    Ok(rows)
}

/// With a bound state at `E_b` the long-time `x(τ)` turns with period
/// `2π/|E_b|`, which can be far longer than `2π`; the search then starts at
/// the window's lower edge and covers one such period (at most
/// [`MAX_SEARCH_SPAN`]).
pub fn search_window(window: (f64, f64), bound_energy: Option<f64>) -> (f64, f64) {
    let (lo, hi) = window;
    match bound_energy {
        Some(e) if e != 0.0 => {
            let period = (TWO_PI / e.abs()).min(MAX_SEARCH_SPAN);
            (lo, lo + (hi - lo).max(period))
        }
        _ => window,
    }
}

/// For each cutoff: bound-state analysis and the τ-optimized final fidelity
/// (see [`search_window`]). `η` and `s` come from the channel in `cfg`.
pub fn sweep_cutoff(
    cfg: &MonteCarloConfig,
    omega_c_grid: &[f64],
    window: (f64, f64),
    n_candidates: usize,
    cache: &TrajectoryCache,
) -> Result<Vec<BoundStateRow>> {
    bound_state_sweep(
        cfg,
        SweepAxis::Cutoff,
        omega_c_grid,
        window,
        n_candidates,
        cache,
    )
}

/// For each ohmicity: bound-state analysis and the maximum final fidelity
/// over `window`. `η` and `ωc` come from the channel in `cfg`; the reference
/// setting is [`OHMICITY_ETA`], [`OHMICITY_OMEGA_C`].
pub fn sweep_ohmicity(
    cfg: &MonteCarloConfig,
    s_grid: &[f64],
    window: (f64, f64),
    n_candidates: usize,
    cache: &TrajectoryCache,
) -> Result<Vec<BoundStateRow>> {
    bound_state_sweep(
        cfg,
        SweepAxis::Ohmicity,
        s_grid,
        window,
        n_candidates,
        cache,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn cfg(tau: f64, k_max: usize, n: usize) -> MonteCarloConfig {
        MonteCarloConfig {
            params: QrlParams {
                r: 0.1,
                p: 1.1,
                tau,
                k_max,
                channel: ChannelKind::Noiseless,
            },
            n_episodes: n,
            master_seed: 2024,
        }
    }

    #[test]
    fn first_iteration_is_exact() {
        let cache = TrajectoryCache::new();
        let s = monte_carlo_curves(&cfg(15.65, 1, 200), &cache).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.f[0] - FRAC_1_SQRT_2).abs() < 1e-13);
        assert!(s.stderr_f[0] < 1e-13);
        assert!(s.w[0] > 0.1 - 1e-15 && s.w[0] <= 1.0);
    }

    #[test]
    fn series_invariants() {
        let cache = TrajectoryCache::new();
        let n = 300;
        let s = monte_carlo_curves(&cfg(15.65, 100, n), &cache).unwrap();
        assert_eq!(s.n, n);
        assert!(s.f.len() == s.len() && s.w.len() == s.len() && s.stderr_f.len() == s.len());
        for k in 0..s.len() {
            assert!(s.f[k] >= FRAC_1_SQRT_2 - 1e-12 && s.f[k] <= 1.0);
            assert!(s.w[k] > 0.0 && s.w[k] <= 1.0);
            assert!(s.stderr_f[k] <= 0.5 / (n as f64).sqrt());
        }
        assert!(s.w[99] < 0.05);
        assert!(s.f[99] > s.f[0] + 0.1);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cache = TrajectoryCache::new();
        let c = cfg(15.65, 60, 64);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| monte_carlo_curves(&c, &cache)).unwrap();
        let b = many.install(|| monte_carlo_curves(&c, &cache)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_period_sweep_points_are_degenerate() {
        let cache = TrajectoryCache::new();
        let s = sweep_tau(&cfg(0.0, 100, 50), &[2.0 * PI, 4.0 * PI], &cache).unwrap();
        for f in &s.f {
            assert!((f - FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        let cache = TrajectoryCache::new();
        let c = cfg(1.0, 5, 2);
        assert!(sweep_tau(&c, &[], &cache).is_err());
        assert!(sweep_tau(&c, &[2.0, 1.0], &cache).is_err());
        assert!(tau_grid(0.0, 10.0, 39).is_err());
        let g = tau_grid(0.0, 2.0 * PI, 40).unwrap();
        assert_eq!(g.len(), 41);
        assert!(optimize_tau(&c, (100.0 - PI, 100.0 + PI), 1, &cache).is_err());
        assert!(optimize_tau(&c, (99.0, 101.0), 5, &cache).is_err());
        let noisy = c.with_channel(ChannelKind::BornMarkov(
            NoiseSpec::new(0.1, 5.0, 1.0).unwrap(),
        ));
        assert!(sweep_cutoff(&noisy, &[0.0, 5.0], (100.0 - PI, 100.0 + PI), 3, &cache).is_err());
        assert!(sweep_cutoff(&c, &[5.0], (100.0 - PI, 100.0 + PI), 3, &cache).is_err());
        assert!(MonteCarloConfig { n_episodes: 0, ..c }.validate().is_err());
    }

    #[test]
    fn optimum_is_grid_maximum() {
        let cache = TrajectoryCache::new();
        let c = cfg(0.0, 40, 40);
        let window = (100.0 - PI, 100.0 + PI);
        let best = optimize_tau(&c, window, 9, &cache).unwrap();
        let taus: Vec<f64> = (0..9)
            .map(|i| window.0 + (window.1 - window.0) * i as f64 / 8.0)
            .collect();
        let sweep = sweep_tau(&c, &taus, &cache).unwrap();
        let max = sweep.f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.stats.f, max);
    }

    #[test]
    fn search_window_follows_bound_state_period() {
        let w = (100.0 - PI, 100.0 + PI);
        assert_eq!(search_window(w, None), w);
        assert_eq!(search_window(w, Some(-3.0)), w);
        let (lo, hi) = search_window(w, Some(-0.1));
        assert_eq!(lo, w.0);
        assert!((hi - lo - 20.0 * PI).abs() < 1e-12);
        let (lo, hi) = search_window(w, Some(-1e-9));
        assert!((hi - lo - MAX_SEARCH_SPAN).abs() < 1e-12);
    }

    #[test]
    fn born_markov_plateau_is_low() {
        let cache = TrajectoryCache::new();
        let spec = NoiseSpec::new(0.1, 5.0, 1.0).unwrap();
        let c = cfg(28.0, 100, 200).with_channel(ChannelKind::BornMarkov(spec));
        let s = monte_carlo_curves(&c, &cache).unwrap();
        assert!((s.f[99] - 0.8).abs() < 0.03, "{}", s.f[99]);
        assert!(s.w[99] < 0.05);
    }
}
