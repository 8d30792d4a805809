//! Run configuration, command dispatch and file output.
//!
//! A run is described by a [`RunConfig`], read from a TOML file (or from a
//! previous `manifest.json`) and then overridden by command-line flags. Every
//! output directory gets the CSVs for the selected mode and a `manifest.json`
//! that can be fed back through `--config` to reproduce them byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    default_step, solve_volterra, BornMarkov, ChannelKind, TrajectoryCache, DEFAULT_T_MAX,
};
use crate::error::Error;
use crate::experiments::{
    monte_carlo_curves, sweep_cutoff, sweep_ohmicity, sweep_tau, tau_grid, AggregateSeries,
    BoundStateRow, MonteCarloConfig,
};
use crate::protocol::QrlParams;
use crate::spectral::{band_density, solve_bound_state, NoiseSpec};

/// First line of every CSV.
pub const UNITS_COMMENT: &str = "# units: frequencies in omega0, times in 1/omega0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Spectrum,
    Xt,
    Run,
    SweepTau,
    SweepCutoff,
    SweepS,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Noiseless,
    Bma,
    Exact,
}

/// Grid used by the spectrum mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumAxis {
    OmegaC,
    S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub channel: Channel,
    pub seed: u64,
    pub out: PathBuf,
    pub n_episodes: usize,
    pub r: f64,
    pub p: f64,
    pub tau: f64,
    pub k_max: usize,
    pub eta: f64,
    pub omega_c: f64,
    pub s: f64,
    /// `[lo, hi]` of the τ sweep.
    pub tau_range: [f64; 2],
    pub points_per_period: usize,
    pub omega_c_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub spectrum_axis: SpectrumAxis,
    /// τ window searched by the cutoff and ohmicity sweeps.
    pub tau_window: [f64; 2],
    pub n_candidates: usize,
    pub t_max: f64,
    /// Solver step; the largest stable default when absent.
    pub dt: Option<f64>,
    /// Write every `xt_stride`-th sample of `x(t)`.
    pub xt_stride: usize,
    pub include_bma: bool,
    pub band_points: usize,
    pub band_e_max: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        RunConfig {
            mode: Mode::Run,
            channel: Channel::Noiseless,
            seed: 1,
            out: PathBuf::from("out"),
            n_episodes: 1000,
            r: 0.1,
            p: 1.1,
            tau: 15.65,
            k_max: 100,
            eta: 0.1,
            omega_c: 20.0,
            s: 1.0,
            tau_range: [0.0, 4.0 * pi],
            points_per_period: 40,
            omega_c_grid: vec![5.0, 7.5, 10.0, 12.5, 15.0, 20.0, 25.0, 30.0],
            s_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            spectrum_axis: SpectrumAxis::OmegaC,
            tau_window: [100.0 - pi, 100.0 + pi],
            n_candidates: 41,
            t_max: 100.0,
            dt: None,
            xt_stride: 10,
            include_bma: true,
            band_points: 200,
            band_e_max: 3.0,
        }
    }
}

/// Command-line flags; each one overrides the matching config key.
#[derive(Clone, Debug, Default, Parser)]
#[command(
    name = "nmqrl",
    version,
    about = "QRL eigensolver under non-Markovian amplitude damping",
    allow_negative_numbers = true
)]
pub struct Cli {
    /// TOML config file, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub channel: Option<Channel>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "omega-c")]
    pub omega_c: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long = "n-episodes")]
    pub n_episodes: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// 2 for configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io { .. } => 1,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => RunError::Config(e.to_string()),
            Error::Numerical(msg) => RunError::Numerical(msg),
        }
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

fn config_err(key: &str, reason: impl std::fmt::Display) -> RunError {
    RunError::Config(format!("invalid parameter `{key}`: {reason}"))
}

impl RunConfig {
    /// Reads a TOML config, or the `config` section of a JSON manifest.
    pub fn load(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            Ok(manifest.config)
        } else {
            toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn apply(&mut self, cli: &Cli) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = cli.$flag.clone() { self.$field = v; })*
            };
        }
        set!(seed => seed, out => out, mode => mode, channel => channel, eta => eta, omega_c => omega_c,
             s => s, r => r, p => p, tau => tau, kmax => k_max, n_episodes => n_episodes);
    }

    pub fn from_cli(cli: &Cli) -> RunResult<Self> {
        let mut cfg = match &cli.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(cli);
        Ok(cfg)
    }

    pub fn noise(&self) -> RunResult<NoiseSpec> {
        Ok(NoiseSpec::new(self.eta, self.omega_c, self.s)?)
    }

    pub fn channel_kind(&self) -> RunResult<ChannelKind> {
        Ok(match self.channel {
            Channel::Noiseless => ChannelKind::Noiseless,
            Channel::Bma => ChannelKind::BornMarkov(self.noise()?),
            Channel::Exact => ChannelKind::ExactNonMarkovian(self.noise()?),
        })
    }

    pub fn monte_carlo(&self) -> RunResult<MonteCarloConfig> {
        let cfg = MonteCarloConfig {
            params: QrlParams {
                r: self.r,
                p: self.p,
                tau: self.tau,
                k_max: self.k_max,
                channel: self.channel_kind()?,
            },
            n_episodes: self.n_episodes,
            master_seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn step(&self, spec: &NoiseSpec) -> f64 {
        self.dt.unwrap_or_else(|| default_step(spec))
    }

    fn window(&self) -> RunResult<(f64, f64)> {
        let [lo, hi] = self.tau_window;
        if !(lo >= 0.0 && hi - lo >= 2.0 * std::f64::consts::PI * (1.0 - 1e-12) && hi.is_finite()) {
            return Err(config_err(
                "tau_window",
                format!("[{lo}, {hi}] must span at least 2π in [0, ∞)"),
            ));
        }
        if self.n_candidates < 3 {
            return Err(config_err("n_candidates", "must be >= 3"));
        }
        Ok((lo, hi))
    }

    fn grid(&self, key: &str, grid: &[f64]) -> RunResult<()> {
        if grid.is_empty() {
            return Err(config_err(key, "grid is empty"));
        }
        if grid.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || grid.windows(2).any(|p| p[1] <= p[0])
        {
            return Err(config_err(
                key,
                "grid must be positive and strictly ascending",
            ));
        }
        Ok(())
    }

    /// Checks every key the selected mode reads, before any work starts.
    pub fn validate(&self) -> RunResult<()> {
        match self.mode {
            Mode::Spectrum => {
                match self.spectrum_axis {
                    SpectrumAxis::OmegaC => self.grid("omega_c_grid", &self.omega_c_grid)?,
                    SpectrumAxis::S => self.grid("s_grid", &self.s_grid)?,
                }
                self.noise()?;
                if !(self.band_e_max > 0.0 && self.band_e_max.is_finite()) {
                    return Err(config_err("band_e_max", "must be finite and > 0"));
                }
            }
            Mode::Xt => {
                let spec = self.noise()?;
                if self.xt_stride < 1 {
                    return Err(config_err("xt_stride", "must be >= 1"));
                }
                let dt = self.step(&spec);
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(config_err("dt", "must be finite and > 0"));
                }
                if !(self.t_max >= dt && self.t_max.is_finite()) {
                    return Err(config_err("t_max", "must be finite and >= dt"));
                }
            }
            Mode::Run => {
                self.monte_carlo()?;
            }
            Mode::SweepTau => {
                self.monte_carlo()?;
                tau_grid(self.tau_range[0], self.tau_range[1], self.points_per_period)?;
            }
            Mode::SweepCutoff | Mode::SweepS => {
                if self.channel == Channel::Noiseless {
                    return Err(config_err(
                        "channel",
                        "bound-state sweeps need `bma` or `exact`",
                    ));
                }
                self.monte_carlo()?;
                self.window()?;
                if self.mode == Mode::SweepCutoff {
                    self.grid("omega_c_grid", &self.omega_c_grid)?;
                } else {
                    self.grid("s_grid", &self.s_grid)?;
                }
            }
        }
        Ok(())
    }
}

/// Reproducibility record written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub timestamp: String,
    pub wall_clock_seconds: f64,
    pub master_seed: u64,
    /// Solver step of `x(t)`, when one was solved.
    pub dt: Option<f64>,
    pub grid: Vec<f64>,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, contents: &str) -> RunResult<()> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn aggregate_csv(series: &AggregateSeries) -> String {
    let mut out = format!("{UNITS_COMMENT}\n# N = {}\naxis,F,W,stderr_F\n", series.n);
    for i in 0..series.len() {
        writeln!(
            out,
            "{},{},{},{}",
            series.axis[i], series.f[i], series.w[i], series.stderr_f[i]
        )
        .unwrap();
    }
    out
}

pub fn bound_state_csv(rows: &[BoundStateRow], n: usize) -> String {
    let mut out =
        format!("{UNITS_COMMENT}\n# N = {n}\naxis,F,W,stderr_F,has_bound_state,E_b,Z,tau_opt\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.axis,
            row.stats.f,
            row.stats.w,
            row.stats.stderr_f,
            row.has_bound_state,
            fmt_opt(row.e_b),
            fmt_opt(row.z),
            row.tau_opt
        )
        .unwrap();
    }
    out
}

struct Produced {
    files: Vec<(&'static str, String)>,
    grid: Vec<f64>,
    dt: Option<f64>,
}

fn spectrum(cfg: &RunConfig) -> RunResult<Produced> {
    let base = cfg.noise()?;
    let grid = match cfg.spectrum_axis {
        SpectrumAxis::OmegaC => cfg.omega_c_grid.clone(),
        SpectrumAxis::S => cfg.s_grid.clone(),
    };
    let mut out = format!("{UNITS_COMMENT}\naxis,E_b,Z,has_bound_state,E,theta\n");
    for &v in &grid {
        let spec = match cfg.spectrum_axis {
            SpectrumAxis::OmegaC => NoiseSpec::new(base.eta, v, base.s),
            SpectrumAxis::S => NoiseSpec::new(base.eta, base.omega_c, v),
        }?;
        let result = solve_bound_state(&spec)?;
        let prefix = format!(
            "{},{},{},{}",
            v,
            fmt_opt(result.energy()),
            fmt_opt(result.residue()),
            result.has_bound_state()
        );
        if cfg.band_points == 0 {
            writeln!(out, "{prefix},,").unwrap();
        }
        for i in 1..=cfg.band_points {
            let e = cfg.band_e_max * i as f64 / cfg.band_points as f64;
            writeln!(out, "{prefix},{e},{}", band_density(e, &spec)?).unwrap();
        }
    }
    Ok(Produced {
        files: vec![("spectrum.csv", out)],
        grid,
        dt: None,
    })
}

fn xt(cfg: &RunConfig) -> RunResult<Produced> {
    let spec = cfg.noise()?;
    let dt = cfg.step(&spec);
    let traj = solve_volterra(&spec, cfg.t_max, dt)?;
    let bma = if cfg.include_bma {
        Some(BornMarkov::new(&spec)?)
    } else {
        None
    };
    let mut out = format!("{UNITS_COMMENT}\nt,re_x,im_x,abs_x");
    if bma.is_some() {
        out.push_str(",re_x_bma,im_x_bma,abs_x_bma");
    }
    out.push('\n');
    let mut grid = Vec::new();
    for (n, x) in traj.values().iter().enumerate().step_by(cfg.xt_stride) {
        let t = n as f64 * dt;
        grid.push(t);
        write!(out, "{t},{},{},{}", x.re, x.im, x.norm()).unwrap();
        if let Some(b) = &bma {
            let xb = b.x(t);
            write!(out, ",{},{},{}", xb.re, xb.im, xb.norm()).unwrap();
        }
        out.push('\n');
    }
    Ok(Produced {
        files: vec![("xt.csv", out)],
        grid,
        dt: Some(dt),
    })
}

fn solver_step(cfg: &RunConfig) -> RunResult<Option<f64>> {
    Ok(match cfg.channel {
        Channel::Exact => Some(cfg.step(&cfg.noise()?)),
        _ => None,
    })
}

/// Runs the selected mode and writes its outputs plus `manifest.json`.
/// Returns the manifest.
pub fn execute(cfg: &RunConfig) -> RunResult<Manifest> {
    cfg.validate()?;
    let start = Instant::now();
    let horizon = cfg.tau_window[1]
        .max(cfg.tau_range[1])
        .max(cfg.tau)
        .max(DEFAULT_T_MAX);
    let cache = TrajectoryCache::with_horizon(horizon);
    let produced = match cfg.mode {
        Mode::Spectrum => spectrum(cfg)?,
        Mode::Xt => xt(cfg)?,
        Mode::Run => {
            let series = monte_carlo_curves(&cfg.monte_carlo()?, &cache)?;
            Produced {
                grid: series.axis.clone(),
                files: vec![("curves.csv", aggregate_csv(&series))],
                dt: solver_step(cfg)?,
            }
        }
        Mode::SweepTau => {
            let taus = tau_grid(cfg.tau_range[0], cfg.tau_range[1], cfg.points_per_period)?;
            let series = sweep_tau(&cfg.monte_carlo()?, &taus, &cache)?;
            Produced {
                files: vec![("sweep_tau.csv", aggregate_csv(&series))],
                grid: taus,
                dt: solver_step(cfg)?,
            }
        }
        Mode::SweepCutoff | Mode::SweepS => {
            let mc = cfg.monte_carlo()?;
            let window = cfg.window()?;
            let (name, grid, rows) = if cfg.mode == Mode::SweepCutoff {
                let rows = sweep_cutoff(&mc, &cfg.omega_c_grid, window, cfg.n_candidates, &cache)?;
                ("sweep_cutoff.csv", cfg.omega_c_grid.clone(), rows)
            } else {
                let rows = sweep_ohmicity(&mc, &cfg.s_grid, window, cfg.n_candidates, &cache)?;
                ("sweep_s.csv", cfg.s_grid.clone(), rows)
            };
            Produced {
                files: vec![(name, bound_state_csv(&rows, cfg.n_episodes))],
                grid,
                dt: None,
            }
        }
    };

    std::fs::create_dir_all(&cfg.out).map_err(|source| RunError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    for (name, contents) in &produced.files {
        write_file(&cfg.out.join(name), contents)?;
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        master_seed: cfg.seed,
        dt: produced.dt,
        grid: produced.grid,
        outputs: produced.files.iter().map(|(n, _)| n.to_string()).collect(),
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&cfg.out.join("manifest.json"), &(json + "\n"))?;
    Ok(manifest)
}

/// Parses flags, loads and merges the config, and runs it.
pub fn run_cli(cli: &Cli) -> RunResult<Manifest> {
    execute(&RunConfig::from_cli(cli)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "mode = \"sweep-tau\"\nseed = 5\neta = 0.2\n").unwrap();
        let cli = Cli {
            config: Some(path),
            seed: Some(9),
            omega_c: Some(12.0),
            ..Default::default()
        };
        let cfg = RunConfig::from_cli(&cli).unwrap();
        assert_eq!(cfg.mode, Mode::SweepTau);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.eta, 0.2);
        assert_eq!(cfg.omega_c, 12.0);
        assert_eq!(cfg.r, RunConfig::default().r);
    }

    #[test]
    fn unknown_keys_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "omgea_c = 3.0\n").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("omgea_c"), "{err}");
    }

    #[test]
    fn validation_names_offending_key() {
        let cases: Vec<(RunConfig, &str)> = vec![
            (
                RunConfig {
                    r: 1.5,
                    ..Default::default()
                },
                "`r`",
            ),
            (
                RunConfig {
                    p: 0.5,
                    ..Default::default()
                },
                "`p`",
            ),
            (
                RunConfig {
                    k_max: 0,
                    ..Default::default()
                },
                "`k_max`",
            ),
            (
                RunConfig {
                    n_episodes: 0,
                    ..Default::default()
                },
                "`n_episodes`",
            ),
            (
                RunConfig {
                    channel: Channel::Exact,
                    eta: -1.0,
                    ..Default::default()
                },
                "`eta`",
            ),
            (
                RunConfig {
                    mode: Mode::Spectrum,
                    omega_c_grid: vec![],
                    ..Default::default()
                },
                "`omega_c_grid`",
            ),
            (
                RunConfig {
                    mode: Mode::SweepCutoff,
                    channel: Channel::Exact,
                    tau_window: [99.0, 101.0],
                    ..Default::default()
                },
                "`tau_window`",
            ),
            (
                RunConfig {
                    mode: Mode::SweepTau,
                    points_per_period: 10,
                    ..Default::default()
                },
                "`tau_grid`",
            ),
            (
                RunConfig {
                    mode: Mode::SweepS,
                    ..Default::default()
                },
                "`channel`",
            ),
        ];
        for (cfg, key) in cases {
            let err = cfg.validate().unwrap_err();
            assert_eq!(err.exit_code(), 2);
            assert!(err.to_string().contains(key), "{err} lacks {key}");
        }
    }

    #[test]
    fn csv_layout() {
        let series = AggregateSeries {
            axis: vec![1.0, 2.0],
            f: vec![0.75, 0.8],
            w: vec![1.0, 0.1],
            stderr_f: vec![0.0, 0.01],
            n: 4,
        };
        let text = aggregate_csv(&series);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], UNITS_COMMENT);
        assert_eq!(lines[2], "axis,F,W,stderr_F");
        assert_eq!(lines[3], "1,0.75,1,0");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn numerical_errors_exit_one() {
        let e: RunError = Error::Numerical("x".into()).into();
        assert_eq!(e.exit_code(), 1);
    }
}
