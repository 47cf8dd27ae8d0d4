//! Run configuration: a flat key=value text format with `#` comments, one
//! config per run. Energies and rates are in units of the hopping J and
//! times in 1/J, matching the CLI's unit convention (j defaults to 1 and is
//! only overridden for protocol variants such as the doubled-hopping holon
//! scan).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::analysis::SolverChoice;
use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::hilbert::LatticeSpec;
use crate::states::Excitation;

#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Mott,
    Doublon,
    Holon,
    Pulse,
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitKind::Mott => write!(f, "mott"),
            InitKind::Doublon => write!(f, "doublon"),
            InitKind::Holon => write!(f, "holon"),
            InitKind::Pulse => write!(f, "pulse"),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Trajectory,
    Pure,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverKind::Exact => write!(f, "exact"),
            SolverKind::Trajectory => write!(f, "trajectory"),
            SolverKind::Pure => write!(f, "pure"),
        }
    }
}

/// Everything one run needs; parsed from the flat config file.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RunConfig {
    pub sites: usize,
    pub cutoff: usize,
    pub omega_c: f64,
    pub u: f64,
    pub j: f64,
    pub gamma: f64,
    pub gamma_phi: f64,
    pub init: InitKind,
    /// Injection site; None means the central site.
    pub inject_site: Option<usize>,
    pub solver: SolverKind,
    pub t_max: f64,
    /// None means the default-step formula.
    pub dt: Option<f64>,
    pub save_stride: usize,
    pub n_traj: usize,
    pub master_seed: u64,
    pub r_values: Vec<usize>,
    pub drive_amplitude: Option<f64>,
    pub pulse_target: Option<Excitation>,
    pub save_rdm: bool,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sites = None;
        let mut cutoff = 3usize;
        let mut omega_c = 0.0;
        let mut u = 0.0;
        let mut j = 1.0;
        let mut gamma = 0.0;
        let mut gamma_phi = 0.0;
        let mut init = None;
        let mut inject_site = None;
        let mut solver = None;
        let mut t_max = None;
        let mut dt = None;
        let mut save_stride = 16usize;
        let mut n_traj = 1000usize;
        let mut master_seed = 1u64;
        let mut r_values: Vec<usize> = vec![1];
        let mut drive_amplitude = None;
        let mut pulse_target = None;
        let mut save_rdm = false;
        let mut output_dir = None;

        let mut seen: HashSet<String> = HashSet::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            if !seen.insert(key.clone()) {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
            let bad = |what: &str| Error::Config(format!("key '{key}': invalid {what} '{value}'"));
            match key.as_str() {
                "sites" | "l" => sites = Some(value.parse().map_err(|_| bad("integer"))?),
                "cutoff" => cutoff = value.parse().map_err(|_| bad("integer"))?,
                "omega_c" => omega_c = value.parse().map_err(|_| bad("number"))?,
                "u" => u = value.parse().map_err(|_| bad("number"))?,
                "j" => j = value.parse().map_err(|_| bad("number"))?,
                "gamma" => gamma = value.parse().map_err(|_| bad("number"))?,
                "gamma_phi" => gamma_phi = value.parse().map_err(|_| bad("number"))?,
                "init" => {
                    init = Some(match value {
                        "mott" => InitKind::Mott,
                        "doublon" => InitKind::Doublon,
                        "holon" => InitKind::Holon,
                        "pulse" => InitKind::Pulse,
                        _ => return Err(bad("init kind")),
                    })
                }
                "inject_site" => {
                    inject_site = match value {
                        "center" | "auto" => None,
                        _ => Some(value.parse().map_err(|_| bad("site index"))?),
                    }
                }
                "solver" => {
                    solver = Some(match value {
                        "exact" => SolverKind::Exact,
                        "trajectory" => SolverKind::Trajectory,
                        "pure" => SolverKind::Pure,
                        _ => return Err(bad("solver")),
                    })
                }
                "t_max" => t_max = Some(value.parse().map_err(|_| bad("number"))?),
                "dt" => {
                    dt = match value {
                        "auto" => None,
                        _ => Some(value.parse().map_err(|_| bad("number"))?),
                    }
                }
                "save_stride" => save_stride = value.parse().map_err(|_| bad("integer"))?,
                "n_traj" => n_traj = value.parse().map_err(|_| bad("integer"))?,
                "master_seed" => master_seed = value.parse().map_err(|_| bad("integer"))?,
                "r_values" => {
                    r_values = value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad("separation list")))
                        .collect::<Result<Vec<usize>>>()?;
                }
                "drive_amplitude" => {
                    drive_amplitude = Some(value.parse().map_err(|_| bad("number"))?)
                }
                "pulse_target" => {
                    pulse_target = Some(match value {
                        "doublon" => Excitation::Doublon,
                        "holon" => Excitation::Holon,
                        _ => return Err(bad("pulse target")),
                    })
                }
                "save_rdm" => {
                    save_rdm = match value {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        _ => return Err(bad("boolean")),
                    }
                }
                "output_dir" => output_dir = Some(PathBuf::from(value)),
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            }
        }
        let cfg = RunConfig {
            sites: sites.ok_or_else(|| Error::Config("missing key 'sites'".into()))?,
            cutoff,
            omega_c,
            u,
            j,
            gamma,
            gamma_phi,
            init: init.ok_or_else(|| Error::Config("missing key 'init'".into()))?,
            inject_site,
            solver: solver.ok_or_else(|| Error::Config("missing key 'solver'".into()))?,
            t_max: t_max.ok_or_else(|| Error::Config("missing key 't_max'".into()))?,
            dt,
            save_stride,
            n_traj,
            master_seed,
            r_values,
            drive_amplitude,
            pulse_target,
            save_rdm,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec {
            sites: self.sites,
            cutoff: self.cutoff,
            cavity_freq: self.omega_c,
            interaction: self.u,
            hopping: self.j,
            loss_rate: self.gamma,
            dephasing_rate: self.gamma_phi,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let spec = self.lattice();
        match self.dt {
            Some(dt) => TimeGrid::new(self.t_max, dt, self.save_stride),
            None => TimeGrid::with_default_dt(self.t_max, &spec, self.save_stride),
        }
    }

    pub fn injection_site(&self) -> usize {
        self.inject_site.unwrap_or(self.sites / 2)
    }

    pub fn solver_choice(&self) -> SolverChoice {
        match self.solver {
            SolverKind::Exact => SolverChoice::Exact,
            SolverKind::Pure => SolverChoice::Pure,
            SolverKind::Trajectory => SolverChoice::Trajectory {
                n_traj: self.n_traj,
                master_seed: self.master_seed,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice().validate()?;
        self.grid()?;
        if self.r_values.is_empty() {
            return Err(Error::Config("r_values must not be empty".into()));
        }
        if let Some(site) = self.inject_site {
            if site >= self.sites {
                return Err(Error::Config(format!(
                    "inject_site {site} outside 0..{}",
                    self.sites
                )));
            }
        }
        if self.init == InitKind::Pulse {
            if self.drive_amplitude.is_none() || self.pulse_target.is_none() {
                return Err(Error::Config(
                    "init = pulse requires drive_amplitude and pulse_target".into(),
                ));
            }
        }
        if self.solver == SolverKind::Trajectory && self.n_traj == 0 {
            return Err(Error::Config("n_traj must be at least 1".into()));
        }
        if self.solver == SolverKind::Pure && (self.gamma > 0.0 || self.gamma_phi > 0.0) {
            return Err(Error::Config(
                "the pure solver integrates a closed system; gamma and gamma_phi must be 0".into(),
            ));
        }
        Ok(())
    }
}
