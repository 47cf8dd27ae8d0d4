//! Command implementations behind the CLI: orchestration, CSV and JSON
//! export. All outputs are byte-reproducible for a given config: fixed float
//! formatting, fixed row order (time-major, then r), deterministic solvers,
//! and no timestamps in the files (wall time goes to stderr only).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{
    extract_speed, find_peak, propagation_experiment, reflection_guard, run_pair_traces,
    v_max_doublon, v_max_holon, NegativityTrace, PeakOutcome, ScanResult, SpeedEstimate,
};
use crate::config::{InitKind, RunConfig, SolverKind};
use crate::dynamics::{PureState, RunStats, TimeGrid};
use crate::entanglement::{
    bosonic_generator_forms, generator_basis, partial_trace_pair, tomography_reconstruct,
    PairMomentOps, StateRef, TwoSiteRDM,
};
use crate::error::{Error, Result};
use crate::hilbert::{Channel, LatticeSpec};
use crate::states::{ideal_excited_state, mott_state, prepare_via_pulse, Excitation, PreparationReport};

/// Format with 12 significant digits, C's %.12g style: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    const SIG: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    // recover the exact exponent the formatter chose
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    let _ = exp;
    if e < -4 || e >= SIG {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{e}")
    } else {
        let decimals = (SIG - 1 - e).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents)?;
    Ok(())
}

/// One summary row per pair separation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PeakRow {
    pub r: usize,
    pub pair: (usize, usize),
    pub no_peak: bool,
    /// Peak time, or the time of the window maximum when no peak exists.
    pub t_peak: f64,
    /// Peak height, or the window maximum when no peak exists.
    pub n_peak: f64,
    pub revival_flagged: bool,
    pub window: (f64, f64),
}

impl PeakRow {
    fn new(r: usize, pair: (usize, usize), outcome: &PeakOutcome) -> Self {
        match outcome {
            PeakOutcome::Peak(p) => PeakRow {
                r,
                pair,
                no_peak: false,
                t_peak: p.t_peak,
                n_peak: p.n_peak,
                revival_flagged: p.revival_flagged,
                window: p.window,
            },
            PeakOutcome::NoPeak {
                window,
                max_seen,
                t_of_max,
            } => PeakRow {
                r,
                pair,
                no_peak: true,
                t_peak: *t_of_max,
                n_peak: *max_seen,
                revival_flagged: false,
                window: *window,
            },
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct Diagnostics {
    pub solver: String,
    pub steps: usize,
    pub snapshots: usize,
    pub loss_jumps: u64,
    pub deph_jumps: u64,
}

/// Contents of summary.json (version 1; schema in docs/summary.schema.json).
#[derive(Clone, Debug, serde::Serialize)]
pub struct Summary {
    pub version: u32,
    pub config: RunConfig,
    pub grid: TimeGrid,
    pub preparation: Option<PreparationReport>,
    pub peaks: Vec<PeakRow>,
    pub speed: Option<SpeedEstimate>,
    pub diagnostics: Diagnostics,
}

pub struct SimulateOutput {
    pub negativity_csv: PathBuf,
    pub summary_json: PathBuf,
    pub rdm_json: Option<PathBuf>,
    pub summary: Summary,
}

fn protocol_of(cfg: &RunConfig) -> Excitation {
    match cfg.init {
        InitKind::Holon => Excitation::Holon,
        InitKind::Pulse => cfg.pulse_target.unwrap_or(Excitation::Doublon),
        // the doublon front bounds every speed in the problem, so it is the
        // conservative window choice for a Mott start too
        _ => Excitation::Doublon,
    }
}

fn initial_state(
    cfg: &RunConfig,
    spec: &LatticeSpec,
) -> Result<(PureState, Option<PreparationReport>)> {
    let site = cfg.injection_site();
    match cfg.init {
        InitKind::Mott => Ok((mott_state(spec)?, None)),
        InitKind::Doublon => Ok((ideal_excited_state(spec, site, Excitation::Doublon)?, None)),
        InitKind::Holon => Ok((ideal_excited_state(spec, site, Excitation::Holon)?, None)),
        InitKind::Pulse => {
            let omega = cfg
                .drive_amplitude
                .ok_or_else(|| Error::Config("pulse needs drive_amplitude".into()))?;
            let target = cfg
                .pulse_target
                .ok_or_else(|| Error::Config("pulse needs pulse_target".into()))?;
            let (psi, report) = prepare_via_pulse(spec, site, omega, target)?;
            Ok((psi, Some(report)))
        }
    }
}

fn center_pairs(cfg: &RunConfig) -> Result<Vec<(usize, usize)>> {
    let center = (cfg.sites - 1) / 2;
    cfg.r_values
        .iter()
        .map(|&r| {
            if r < 1 || r > center || center + r >= cfg.sites {
                return Err(Error::Config(format!(
                    "r = {r} puts a pair site outside the chain"
                )));
            }
            Ok((center - r, center + r))
        })
        .collect()
}

/// Run the configured experiment and write negativity.csv, summary.json and
/// (on request) rdms.json under `out_dir`.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<SimulateOutput> {
    cfg.validate()?;
    let spec = cfg.lattice();
    let grid = cfg.grid()?;
    let pairs = center_pairs(cfg)?;
    let (psi0, preparation) = initial_state(cfg, &spec)?;
    let protocol = protocol_of(cfg);
    let (series, stats, loss_jumps, deph_jumps, rdm_log) = run_pair_traces(
        &psi0,
        &spec,
        &cfg.solver_choice(),
        &pairs,
        &grid,
        cfg.save_rdm,
    )?;

    let mut traces = Vec::new();
    let mut peak_rows = Vec::new();
    let mut arrivals = Vec::new();
    for (pi, (&r, &pair)) in cfg.r_values.iter().zip(&pairs).enumerate() {
        let trace = NegativityTrace::new(r, pair, series[pi].clone())?;
        let guard = reflection_guard(&spec, protocol, r).min(trace.t_last());
        let outcome = find_peak(&trace, (0.0, guard))?;
        if let Some(p) = outcome.peak() {
            arrivals.push((r, p.t_peak));
        }
        peak_rows.push(PeakRow::new(r, pair, &outcome));
        traces.push(trace);
    }
    let speed = if arrivals.len() >= 2 {
        Some(extract_speed(
            &arrivals,
            grid.dt * grid.save_stride as f64,
        )?)
    } else {
        None
    };

    fs::create_dir_all(out_dir)?;
    let negativity_csv = out_dir.join("negativity.csv");
    write_atomic(&negativity_csv, negativity_csv_bytes(&traces)?.as_bytes())?;

    let summary = Summary {
        version: 1,
        config: cfg.clone(),
        grid: grid.clone(),
        preparation,
        peaks: peak_rows,
        speed,
        diagnostics: Diagnostics {
            solver: cfg.solver.to_string(),
            steps: stats.steps,
            snapshots: stats.snapshots,
            loss_jumps,
            deph_jumps,
        },
    };
    let summary_json = out_dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    json.push('\n');
    write_atomic(&summary_json, json.as_bytes())?;

    let rdm_json = if let Some(log) = rdm_log {
        let path = out_dir.join("rdms.json");
        let entries: Vec<serde_json::Value> = log
            .iter()
            .flat_map(|row| row.iter().map(|(t, rdm)| rdm.to_json(Some(*t))))
            .collect();
        let mut text = serde_json::to_string_pretty(&entries)
            .map_err(|e| Error::Config(format!("rdm serialization: {e}")))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Some(path)
    } else {
        None
    };

    Ok(SimulateOutput {
        negativity_csv,
        summary_json,
        rdm_json,
        summary,
    })
}

fn negativity_csv_bytes(traces: &[NegativityTrace]) -> Result<String> {
    let mut out = String::from("time,r,negativity\n");
    if traces.is_empty() {
        return Ok(out);
    }
    let n_times = traces[0].samples.len();
    for trace in traces {
        if trace.samples.len() != n_times {
            return Err(Error::InvalidState(
                "traces share one save grid by construction".into(),
            ));
        }
    }
    for ti in 0..n_times {
        for trace in traces {
            let (t, n) = trace.samples[ti];
            out.push_str(&format!(
                "{},{},{}\n",
                format_sig(t),
                trace.r,
                format_sig(n)
            ));
        }
    }
    Ok(out)
}

pub struct ScanOutput {
    pub peak_scan_csv: PathBuf,
    pub result: ScanResult,
}

/// Peak height of N_{r=1} versus dissipation rate; writes peak_scan.csv.
pub fn cmd_scan(
    cfg: &RunConfig,
    channel: Channel,
    rates: &[f64],
    out_dir: &Path,
) -> Result<ScanOutput> {
    cfg.validate()?;
    if rates.is_empty() {
        return Err(Error::Config("scan needs at least one rate".into()));
    }
    let protocol = match cfg.init {
        InitKind::Doublon => Excitation::Doublon,
        InitKind::Holon => Excitation::Holon,
        other => {
            return Err(Error::Config(format!(
                "scan protocol must be doublon or holon, not {other}"
            )))
        }
    };
    let template = cfg.lattice();
    let grid = cfg.grid()?;
    let result =
        crate::analysis::scan_dissipation(protocol, &template, channel, rates, &grid)?;
    for w in &result.warnings {
        eprintln!("[scan warning] {w}");
    }
    let mut csv = String::from("rate,channel,protocol,t_peak,n_peak,no_peak_flag\n");
    for point in &result.points {
        let row = PeakRow::new(1, (0, 0), &point.outcome);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_sig(point.rate),
            channel,
            protocol,
            format_sig(row.t_peak),
            format_sig(row.n_peak),
            u8::from(row.no_peak)
        ));
    }
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("peak_scan.csv");
    write_atomic(&path, csv.as_bytes())?;
    Ok(ScanOutput {
        peak_scan_csv: path,
        result,
    })
}

pub struct SpeedRow {
    pub u_over_j: f64,
    pub speed: Option<SpeedEstimate>,
    pub v_formula: f64,
}

pub struct SpeedOutput {
    pub speed_csv: PathBuf,
    pub rows: Vec<SpeedRow>,
}

/// Measured propagation speed and the closed-form quasiparticle speed for
/// each interaction strength; writes speed.csv.
pub fn cmd_speed(cfg: &RunConfig, u_over_j: &[f64], out_dir: &Path) -> Result<SpeedOutput> {
    cfg.validate()?;
    if u_over_j.is_empty() {
        return Err(Error::Config(
            "speed command needs at least one u_over_j value".into(),
        ));
    }
    let protocol = match cfg.init {
        InitKind::Doublon => Excitation::Doublon,
        InitKind::Holon => Excitation::Holon,
        other => {
            return Err(Error::Config(format!(
                "speed protocol must be doublon or holon, not {other}"
            )))
        }
    };
    let mut rows = Vec::new();
    for &u in u_over_j {
        let spec = LatticeSpec {
            interaction: u * cfg.j,
            ..cfg.lattice()
        };
        let grid = match cfg.dt {
            Some(dt) => TimeGrid::new(cfg.t_max, dt, cfg.save_stride)?,
            None => TimeGrid::with_default_dt(cfg.t_max, &spec, cfg.save_stride)?,
        };
        let result = propagation_experiment(
            protocol,
            &spec,
            &cfg.solver_choice(),
            &cfg.r_values,
            &grid,
            false,
        )?;
        let v_formula = match protocol {
            Excitation::Doublon => v_max_doublon(spec.interaction, spec.hopping)?,
            Excitation::Holon => v_max_holon(spec.interaction, spec.hopping)?,
        };
        rows.push(SpeedRow {
            u_over_j: u,
            speed: result.speed,
            v_formula,
        });
    }
    let mut csv = String::from("u_over_j,protocol,speed,uncertainty,v_max_formula\n");
    for row in &rows {
        let (speed, unc) = match &row.speed {
            Some(s) => (format_sig(s.speed), format_sig(s.uncertainty)),
            None => ("nan".to_string(), "nan".to_string()),
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_sig(row.u_over_j),
            protocol,
            speed,
            unc,
            format_sig(row.v_formula)
        ));
    }
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("speed.csv");
    write_atomic(&path, csv.as_bytes())?;
    Ok(SpeedOutput {
        speed_csv: path,
        rows,
    })
}

/// Outcome of the tomography self-check.
pub enum TomographyCheck {
    /// Reconstruction compared against the partial trace at every snapshot.
    Report {
        max_error: f64,
        snapshots: usize,
        pairs: Vec<(usize, usize)>,
        bosonic_forms_max_dev: f64,
    },
    /// The generator set covers cutoff 3 only.
    UnsupportedCutoff { cutoff: usize },
}

/// Compare the moment-tomography reconstruction against the direct partial
/// trace over a live run.
pub fn cmd_tomography_check(cfg: &RunConfig) -> Result<TomographyCheck> {
    cfg.validate()?;
    if cfg.cutoff != 3 {
        return Ok(TomographyCheck::UnsupportedCutoff { cutoff: cfg.cutoff });
    }
    if cfg.solver == SolverKind::Trajectory {
        return Err(Error::Config(
            "tomography check compares exact states; use the exact or pure solver".into(),
        ));
    }
    let spec = cfg.lattice();
    let grid = cfg.grid()?;
    let pairs = center_pairs(cfg)?;
    let (psi0, _) = initial_state(cfg, &spec)?;

    let ops: Vec<PairMomentOps> = pairs
        .iter()
        .map(|&(a, b)| PairMomentOps::build(&spec, a, b))
        .collect::<Result<Vec<_>>>()?;

    let mut max_error: f64 = 0.0;
    let mut snapshots = 0usize;
    let mut check_state = |state: StateRef<'_>| -> Result<()> {
        for (op, &(a, b)) in ops.iter().zip(&pairs) {
            let rebuilt = tomography_reconstruct(&op.measure(state)?);
            let direct = partial_trace_pair(state, &spec, a, b)?;
            for (x, y) in rebuilt.as_slice().iter().zip(direct.as_slice()) {
                max_error = max_error.max((x - y).norm());
            }
        }
        snapshots += 1;
        Ok(())
    };
    match cfg.solver {
        SolverKind::Exact => {
            let rho0 = crate::dynamics::DensityMatrix::from_pure(&psi0);
            crate::dynamics::evolve_master(&rho0, &spec, &grid, |_, _, rho| {
                check_state(StateRef::Dense(rho))
            })?;
        }
        SolverKind::Pure => {
            crate::dynamics::evolve_pure_chain(&psi0, &spec, &grid, |_, _, psi| {
                check_state(StateRef::Pure(psi))
            })?;
        }
        SolverKind::Trajectory => unreachable!("rejected above"),
    }

    let basis = generator_basis();
    let forms = bosonic_generator_forms();
    let mut bosonic_dev: f64 = 0.0;
    for i in 0..9 {
        for k in 0..9 {
            bosonic_dev = bosonic_dev.max((forms[i][k] - basis.matrix(i)[k]).norm());
        }
    }
    Ok(TomographyCheck::Report {
        max_error,
        snapshots,
        pairs,
        bosonic_forms_max_dev: bosonic_dev,
    })
}

/// Cross-solver consistency helper used by tests and the acceptance suite:
/// max elementwise deviation between RDMs from two solver routes.
pub fn rdm_route_deviation(
    a: &[Vec<(f64, TwoSiteRDM)>],
    b: &[Vec<(f64, TwoSiteRDM)>],
) -> f64 {
    let mut max_dev: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for ((_, x), (_, y)) in ra.iter().zip(rb) {
            for (u, v) in x.as_slice().iter().zip(y.as_slice()) {
                max_dev = max_dev.max((u - v).norm());
            }
        }
    }
    max_dev
}

pub fn run_stats_label(stats: &RunStats) -> String {
    format!("{} steps, {} snapshots", stats.steps, stats.snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(0.25), "0.25");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-0.5), "-0.5");
        assert_eq!(format_sig(0.0096), "0.0096");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(1e-7), "1e-7");
        assert_eq!(format_sig(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_sig(16.0 * 6e-4), "0.0096");
    }

    fn minimal_cfg() -> RunConfig {
        RunConfig::parse(
            "sites = 3\nu = 33.3\ninit = doublon\nsolver = exact\nt_max = 2.0\nsave_stride = 64\n",
        )
        .unwrap()
    }

    #[test]
    fn simulate_writes_expected_files() {
        let dir = tempdir().unwrap();
        let out = cmd_simulate(&minimal_cfg(), dir.path()).unwrap();
        let csv = std::fs::read_to_string(&out.negativity_csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "time,r,negativity");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,1,"));
        assert!(csv.ends_with('\n'));
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.summary_json).unwrap()).unwrap();
        assert_eq!(summary["version"], 1);
        assert_eq!(summary["config"]["sites"], 3);
        assert_eq!(summary["diagnostics"]["solver"], "exact");
        assert!(out.rdm_json.is_none());
    }

    #[test]
    fn simulate_is_byte_reproducible() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let cfg = minimal_cfg();
        cmd_simulate(&cfg, d1.path()).unwrap();
        cmd_simulate(&cfg, d2.path()).unwrap();
        for name in ["negativity.csv", "summary.json"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn simulate_can_save_rdms() {
        let dir = tempdir().unwrap();
        let mut cfg = minimal_cfg();
        cfg.save_rdm = true;
        let out = cmd_simulate(&cfg, dir.path()).unwrap();
        let path = out.rdm_json.unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let entries = parsed.as_array().unwrap();
        assert_eq!(entries.len(), out.summary.diagnostics.snapshots);
        assert_eq!(entries[0]["data"].as_array().unwrap().len(), 9);
    }

    #[test]
    fn speed_command_rejects_empty_list() {
        let dir = tempdir().unwrap();
        assert!(matches!(
            cmd_speed(&minimal_cfg(), &[], dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tomography_check_unsupported_cutoff() {
        let mut cfg = minimal_cfg();
        cfg.cutoff = 4;
        match cmd_tomography_check(&cfg).unwrap() {
            TomographyCheck::UnsupportedCutoff { cutoff } => assert_eq!(cutoff, 4),
            _ => panic!("expected unsupported"),
        }
    }

    #[test]
    fn tomography_check_small_run() {
        let cfg = RunConfig::parse(
            "sites = 3\nu = 20\ngamma = 0.1\ninit = doublon\nsolver = exact\nt_max = 0.5\nsave_stride = 50\n",
        )
        .unwrap();
        match cmd_tomography_check(&cfg).unwrap() {
            TomographyCheck::Report {
                max_error,
                snapshots,
                bosonic_forms_max_dev,
                ..
            } => {
                assert!(max_error < 1e-8, "max error {max_error}");
                assert!(snapshots > 2);
                assert!(bosonic_forms_max_dev < 1e-15);
            }
            _ => panic!("expected report"),
        }
    }
}
