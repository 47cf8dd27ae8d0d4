//! Negativity-trace analysis and the end-to-end propagation protocols:
//! first-arrival peak detection, propagation-speed fits, the closed-form
//! quasiparticle speeds, and the dissipation scans.

use rayon::prelude::*;

use crate::dynamics::{
    evolve_master, evolve_pure_chain, DensityMatrix, PureState, RunStats, TimeGrid,
};
use crate::entanglement::{negativity, partial_trace_pair, StateRef, TwoSiteRDM};
use crate::error::{Error, Result};
use crate::hilbert::{Channel, LatticeSpec};
use crate::states::{ideal_excited_state, Excitation};
use crate::trajectory::{ensemble_average, TrajectoryConfig};

/// Peaks below this are noise, not entanglement arrival.
pub const PEAK_NOISE_FLOOR: f64 = 1e-4;

/// A first-arrival peak must also reach this fraction of the window
/// maximum; wavefront tails produce sub-1e-3 negativity flickers well
/// before the front arrives, and those must not win the first-arrival
/// search.
pub const PEAK_RELATIVE_PROMINENCE: f64 = 0.05;

/// Fraction of the boundary-reflection time kept in analysis windows.
pub const REFLECTION_SAFETY: f64 = 0.9;

/// Time series N_r(t) for one site pair.
#[derive(Clone, Debug)]
pub struct NegativityTrace {
    /// Separation from the center site.
    pub r: usize,
    pub pair: (usize, usize),
    pub samples: Vec<(f64, f64)>,
}

impl NegativityTrace {
    pub fn new(r: usize, pair: (usize, usize), samples: Vec<(f64, f64)>) -> Result<Self> {
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid_arg("trace times must strictly increase"));
            }
        }
        if samples.iter().any(|&(_, n)| n < 0.0) {
            return Err(Error::invalid_arg("negativity cannot be negative"));
        }
        Ok(NegativityTrace { r, pair, samples })
    }

    pub fn t_first(&self) -> f64 {
        self.samples.first().map(|s| s.0).unwrap_or(0.0)
    }

    pub fn t_last(&self) -> f64 {
        self.samples.last().map(|s| s.0).unwrap_or(0.0)
    }
}

/// A located first-arrival peak.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PeakSummary {
    pub t_peak: f64,
    pub n_peak: f64,
    pub window: (f64, f64),
    /// Later maxima (revivals) were present and excluded.
    pub revival_flagged: bool,
}

/// Outcome of peak search; the no-peak case is physical (holon traces at
/// strong loss), not an error.
#[derive(Clone, Debug)]
pub enum PeakOutcome {
    Peak(PeakSummary),
    NoPeak {
        window: (f64, f64),
        max_seen: f64,
        t_of_max: f64,
    },
}

impl PeakOutcome {
    pub fn peak(&self) -> Option<&PeakSummary> {
        match self {
            PeakOutcome::Peak(p) => Some(p),
            PeakOutcome::NoPeak { .. } => None,
        }
    }

    /// Peak height, or the window maximum when no peak was found.
    pub fn height(&self) -> f64 {
        match self {
            PeakOutcome::Peak(p) => p.n_peak,
            PeakOutcome::NoPeak { max_seen, .. } => *max_seen,
        }
    }
}

/// First local maximum above the noise floor inside the window, refined by
/// a three-point parabola; later maxima set the revival flag instead of
/// replacing the first arrival.
pub fn find_peak(trace: &NegativityTrace, window: (f64, f64)) -> Result<PeakOutcome> {
    find_peak_with_floor(trace, window, PEAK_NOISE_FLOOR)
}

pub fn find_peak_with_floor(
    trace: &NegativityTrace,
    window: (f64, f64),
    floor: f64,
) -> Result<PeakOutcome> {
    let (t0, t1) = window;
    if t1 <= t0 {
        return Err(Error::invalid_arg("peak window must have positive width"));
    }
    let eps = 1e-12 * trace.t_last().abs().max(1.0);
    if t0 < trace.t_first() - eps || t1 > trace.t_last() + eps {
        return Err(Error::invalid_arg(format!(
            "window ({t0}, {t1}) outside sampled range ({}, {})",
            trace.t_first(),
            trace.t_last()
        )));
    }
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t0 - eps && t <= t1 + eps)
        .collect();
    if pts.len() < 3 {
        return Err(Error::invalid_arg("window contains fewer than 3 samples"));
    }
    let window_max = pts.iter().map(|&(_, n)| n).fold(0.0f64, f64::max);
    let threshold = floor.max(PEAK_RELATIVE_PROMINENCE * window_max);
    let mut first: Option<usize> = None;
    let mut revival = false;
    for i in 1..pts.len() - 1 {
        let (_, n) = pts[i];
        if n > threshold && n >= pts[i - 1].1 && n >= pts[i + 1].1 {
            match first {
                None => first = Some(i),
                Some(f) => {
                    // a plateau around the first peak is not a revival
                    if pts[i].1 != pts[f].1 || i > f + 2 {
                        revival = true;
                    }
                }
            }
        }
    }
    match first {
        Some(i) => {
            let (tm, nm) = pts[i];
            let (tl, nl) = pts[i - 1];
            let (tr, nr) = pts[i + 1];
            let denom = nl - 2.0 * nm + nr;
            let (t_peak, n_peak) = if denom.abs() < 1e-300 {
                (tm, nm)
            } else {
                let dt = 0.5 * (tr - tl);
                let shift = 0.5 * (nl - nr) / denom;
                (tm + shift * dt, nm - 0.125 * (nl - nr) * (nl - nr) / denom)
            };
            Ok(PeakOutcome::Peak(PeakSummary {
                t_peak,
                n_peak,
                window,
                revival_flagged: revival,
            }))
        }
        None => {
            let (t_of_max, max_seen) = pts
                .iter()
                .copied()
                .fold((pts[0].0, f64::NEG_INFINITY), |acc, (t, n)| {
                    if n > acc.1 {
                        (t, n)
                    } else {
                        acc
                    }
                });
            Ok(PeakOutcome::NoPeak {
                window,
                max_seen,
                t_of_max,
            })
        }
    }
}

/// Propagation speed from the front of peak arrival times.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SpeedEstimate {
    pub speed: f64,
    pub uncertainty: f64,
    pub r_values: Vec<usize>,
    pub residuals: Vec<f64>,
    pub intercept: f64,
}

/// Least-squares slope of t_peak(r); speed is its inverse. The uncertainty
/// combines the fit covariance with the half-width of the time
/// discretization.
pub fn extract_speed(peaks: &[(usize, f64)], time_resolution: f64) -> Result<SpeedEstimate> {
    let n = peaks.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "speed fit needs at least 2 peaks, got {n}"
        )));
    }
    let rf: Vec<f64> = peaks.iter().map(|&(r, _)| r as f64).collect();
    let tf: Vec<f64> = peaks.iter().map(|&(_, t)| t).collect();
    let r_mean = rf.iter().sum::<f64>() / n as f64;
    let t_mean = tf.iter().sum::<f64>() / n as f64;
    let sxx: f64 = rf.iter().map(|r| (r - r_mean) * (r - r_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "speed fit needs at least two distinct separations".into(),
        ));
    }
    let sxy: f64 = rf
        .iter()
        .zip(&tf)
        .map(|(r, t)| (r - r_mean) * (t - t_mean))
        .sum();
    let slope = sxy / sxx;
    if slope <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "non-positive arrival slope {slope}"
        )));
    }
    let intercept = t_mean - slope * r_mean;
    let residuals: Vec<f64> = rf
        .iter()
        .zip(&tf)
        .map(|(r, t)| t - (intercept + slope * r))
        .collect();
    let dof = (n as f64 - 2.0).max(1.0);
    let fit_var = residuals.iter().map(|e| e * e).sum::<f64>() / dof;
    let disc_var = 0.25 * time_resolution * time_resolution;
    let slope_sigma = ((fit_var + disc_var) / sxx).sqrt();
    let speed = 1.0 / slope;
    Ok(SpeedEstimate {
        speed,
        uncertainty: slope_sigma / (slope * slope),
        r_values: peaks.iter().map(|&(r, _)| r).collect(),
        residuals,
        intercept,
    })
}

/// Maximal doublon group velocity in the strong-coupling expansion,
/// v = 4J (1 - 4J²/U²).
pub fn v_max_doublon(interaction: f64, hopping: f64) -> Result<f64> {
    if interaction <= 0.0 {
        return Err(Error::invalid_arg(
            "speed formulas are strong-coupling expansions; U must be positive",
        ));
    }
    let x = hopping / interaction;
    Ok(4.0 * hopping * (1.0 - 4.0 * x * x))
}

/// Maximal holon group velocity, v = 2J (1 + 17J²/(2U²)).
pub fn v_max_holon(interaction: f64, hopping: f64) -> Result<f64> {
    if interaction <= 0.0 {
        return Err(Error::invalid_arg(
            "speed formulas are strong-coupling expansions; U must be positive",
        ));
    }
    let x = hopping / interaction;
    Ok(2.0 * hopping * (1.0 + 8.5 * x * x))
}

fn front_speed(spec: &LatticeSpec, protocol: Excitation) -> f64 {
    if spec.interaction > 0.0 {
        match protocol {
            Excitation::Doublon => v_max_doublon(spec.interaction, spec.hopping).unwrap(),
            Excitation::Holon => v_max_holon(spec.interaction, spec.hopping).unwrap(),
        }
    } else {
        4.0 * spec.hopping
    }
}

/// Keep only times before reflections off the open boundary can reach the
/// outer pair site again: the front travels to the edge and back, a path of
/// L - 1 - r sites.
pub fn reflection_guard(spec: &LatticeSpec, protocol: Excitation, r: usize) -> f64 {
    let v = front_speed(spec, protocol);
    REFLECTION_SAFETY * (spec.sites - 1 - r) as f64 / v
}

/// A final time comfortably past the expected r_max arrival.
pub fn recommended_t_max(spec: &LatticeSpec, protocol: Excitation, r_max: usize) -> f64 {
    (r_max as f64 + 1.5) / front_speed(spec, protocol)
}

/// Which integrator backs an experiment.
#[derive(Clone, Debug, serde::Serialize)]
pub enum SolverChoice {
    /// Dense master equation.
    Exact,
    /// Closed-system state vector (requires zero rates).
    Pure,
    /// Monte Carlo wave-function ensemble.
    Trajectory { n_traj: usize, master_seed: u64 },
}

impl SolverChoice {
    pub fn label(&self) -> &'static str {
        match self {
            SolverChoice::Exact => "exact",
            SolverChoice::Pure => "pure",
            SolverChoice::Trajectory { .. } => "trajectory",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub traces: Vec<NegativityTrace>,
    /// Peak outcome per entry of r_list.
    pub peaks: Vec<(usize, PeakOutcome)>,
    /// None when fewer than two first-arrival peaks were found (physical
    /// for strongly dissipative holon runs).
    pub speed: Option<SpeedEstimate>,
    pub stats: RunStats,
    pub loss_jumps: u64,
    pub deph_jumps: u64,
    /// Pair RDM snapshots, populated on request: rdms[pair][snapshot].
    pub rdms: Option<Vec<Vec<(f64, TwoSiteRDM)>>>,
}

/// Negativity traces for explicit pairs from an explicit initial state.
/// Used directly by the CLI for Mott and pulse-prepared initial states; the
/// doublon/holon protocol wrapper is `propagation_experiment`.
pub fn run_pair_traces(
    psi0: &PureState,
    spec: &LatticeSpec,
    solver: &SolverChoice,
    pairs: &[(usize, usize)],
    grid: &TimeGrid,
    collect_rdms: bool,
) -> Result<(Vec<Vec<(f64, f64)>>, RunStats, u64, u64, Option<Vec<Vec<(f64, TwoSiteRDM)>>>)> {
    spec.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid_arg("at least one site pair is required"));
    }
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); pairs.len()];
    let mut rdm_log: Option<Vec<Vec<(f64, TwoSiteRDM)>>> =
        collect_rdms.then(|| vec![Vec::new(); pairs.len()]);
    let mut loss_jumps = 0;
    let mut deph_jumps = 0;

    let stats = match solver {
        SolverChoice::Exact => {
            let rho0 = DensityMatrix::from_pure(psi0);
            evolve_master(&rho0, spec, grid, |_, t, rho| {
                for (pi, &(a, b)) in pairs.iter().enumerate() {
                    let rdm = partial_trace_pair(StateRef::Dense(rho), spec, a, b)?;
                    rdm.validate_with(1e-8, -1e-6)?;
                    series[pi].push((t, negativity(&rdm)));
                    if let Some(log) = rdm_log.as_mut() {
                        log[pi].push((t, rdm));
                    }
                }
                Ok(())
            })?
        }
        SolverChoice::Pure => {
            if spec.loss_rate > 0.0 || spec.dephasing_rate > 0.0 {
                return Err(Error::invalid_arg(
                    "the pure solver integrates a closed system; rates must be zero",
                ));
            }
            evolve_pure_chain(psi0, spec, grid, |_, t, psi| {
                for (pi, &(a, b)) in pairs.iter().enumerate() {
                    let rdm = partial_trace_pair(StateRef::Pure(psi), spec, a, b)?;
                    series[pi].push((t, negativity(&rdm)));
                    if let Some(log) = rdm_log.as_mut() {
                        log[pi].push((t, rdm));
                    }
                }
                Ok(())
            })?
        }
        SolverChoice::Trajectory {
            n_traj,
            master_seed,
        } => {
            let cfg = TrajectoryConfig::new(*n_traj, *master_seed, grid);
            let result = ensemble_average(psi0, spec, &cfg, pairs)?;
            loss_jumps = result.loss_jumps;
            deph_jumps = result.deph_jumps;
            for (pi, row) in result.rdms.iter().enumerate() {
                for (ti, rdm) in row.iter().enumerate() {
                    let t = result.times[ti];
                    series[pi].push((t, negativity(rdm)));
                    if let Some(log) = rdm_log.as_mut() {
                        log[pi].push((t, rdm.clone()));
                    }
                }
            }
            RunStats {
                steps: grid.n_steps(),
                snapshots: result.times.len(),
            }
        }
    };
    Ok((series, stats, loss_jumps, deph_jumps, rdm_log))
}

/// End-to-end protocol: inject at the central site, evolve, track the
/// symmetric pairs (center - r, center + r), locate first-arrival peaks
/// inside the reflection guard, and fit the propagation speed.
pub fn propagation_experiment(
    protocol: Excitation,
    spec: &LatticeSpec,
    solver: &SolverChoice,
    r_list: &[usize],
    grid: &TimeGrid,
    collect_rdms: bool,
) -> Result<ExperimentResult> {
    spec.validate()?;
    if spec.sites % 2 == 0 {
        return Err(Error::invalid_arg(
            "the propagation protocol needs an odd chain so a central site exists",
        ));
    }
    let center = (spec.sites - 1) / 2;
    if r_list.is_empty() {
        return Err(Error::invalid_arg("r_list must not be empty"));
    }
    for &r in r_list {
        if r < 1 || r > center {
            return Err(Error::invalid_arg(format!(
                "separation {r} outside 1..={center}"
            )));
        }
    }
    let psi0 = ideal_excited_state(spec, center, protocol)?;
    let pairs: Vec<(usize, usize)> = r_list.iter().map(|&r| (center - r, center + r)).collect();
    let (series, stats, loss_jumps, deph_jumps, rdms) =
        run_pair_traces(&psi0, spec, solver, &pairs, grid, collect_rdms)?;

    let mut traces = Vec::new();
    let mut peaks = Vec::new();
    let mut arrival = Vec::new();
    for (pi, &r) in r_list.iter().enumerate() {
        let trace = NegativityTrace::new(r, pairs[pi], series[pi].clone())?;
        let guard = reflection_guard(spec, protocol, r).min(trace.t_last());
        let outcome = find_peak(&trace, (0.0, guard))?;
        if let Some(p) = outcome.peak() {
            arrival.push((r, p.t_peak));
        }
        peaks.push((r, outcome));
        traces.push(trace);
    }
    let speed = if arrival.len() >= 2 {
        Some(extract_speed(
            &arrival,
            grid.dt * grid.save_stride as f64,
        )?)
    } else {
        None
    };
    Ok(ExperimentResult {
        traces,
        peaks,
        speed,
        stats,
        loss_jumps,
        deph_jumps,
        rdms,
    })
}

/// One row of a dissipation scan.
#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub rate: f64,
    pub outcome: PeakOutcome,
}

#[derive(Clone, Debug)]
pub struct ScanResult {
    pub protocol: Excitation,
    pub channel: Channel,
    pub points: Vec<ScanPoint>,
    /// Soft checks only; a non-monotone peak height is reported, not fatal.
    pub warnings: Vec<String>,
}

/// Peak height of N_{r=1} versus dissipation rate, one exact run per rate.
/// The holon rows double the hopping so both quasiparticles move at the
/// same maximal speed and the comparison isolates the dissipation channel.
pub fn scan_dissipation(
    protocol: Excitation,
    template: &LatticeSpec,
    channel: Channel,
    rates: &[f64],
    grid: &TimeGrid,
) -> Result<ScanResult> {
    if rates.is_empty() {
        return Err(Error::invalid_arg("scan needs at least one rate"));
    }
    let points: Vec<ScanPoint> = rates
        .par_iter()
        .map(|&rate| {
            if rate < 0.0 {
                return Err(Error::invalid_arg("rates must be non-negative"));
            }
            let mut spec = template.clone();
            match channel {
                Channel::Loss => {
                    spec.loss_rate = rate;
                    spec.dephasing_rate = 0.0;
                }
                Channel::Dephasing => {
                    spec.loss_rate = 0.0;
                    spec.dephasing_rate = rate;
                }
            }
            if protocol == Excitation::Holon {
                spec.hopping = 2.0 * template.hopping;
            }
            let result =
                propagation_experiment(protocol, &spec, &SolverChoice::Exact, &[1], grid, false)?;
            Ok(ScanPoint {
                rate,
                outcome: result.peaks[0].1.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    for w in points.windows(2) {
        if w[1].outcome.height() > w[0].outcome.height() + 1e-9 {
            warnings.push(format!(
                "peak height rose from rate {} to {} ({:.3e} -> {:.3e})",
                w[0].rate,
                w[1].rate,
                w[0].outcome.height(),
                w[1].outcome.height()
            ));
        }
    }
    Ok(ScanResult {
        protocol,
        channel,
        points,
        warnings,
    })
}
