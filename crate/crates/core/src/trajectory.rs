//! Monte Carlo wave-function unraveling of the master equation: drift under
//! the non-Hermitian H_eff = H - (i/2) Σ J†J, with the squared norm carrying
//! the waiting-time statistics. A uniform threshold r is drawn, the state
//! evolves until ‖ψ‖² crosses it (the crossing located by bisection inside
//! the step), a jump channel is selected with probability ∝ ⟨ψ|J†J|ψ⟩, and
//! the ensemble average of normalized pair RDMs recovers the master-equation
//! result.
//!
//! Trajectory k draws from an independent counter-based stream keyed by
//! (master_seed, k), and ensemble sums run in trajectory-index order, so the
//! full ensemble output is bitwise reproducible for any worker count.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::dynamics::{PureState, TimeGrid, RK4_STABILITY_LIMIT};
use crate::entanglement::{partial_trace_pair, StateRef, TwoSiteRDM};
use crate::error::{Error, Result};
use crate::hilbert::{Channel, LatticeSpec, SparseOperator, STATE_DIM_CAP};
use crate::kernel::ChainKernel;
use crate::kernels;

/// Ensemble and integration parameters of a trajectory run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    pub master_seed: u64,
    pub dt: f64,
    pub t_max: f64,
    pub save_stride: usize,
    /// Relative tolerance on ‖ψ‖² when bisecting the jump time.
    pub jump_tolerance: f64,
}

impl TrajectoryConfig {
    pub fn new(n_traj: usize, master_seed: u64, grid: &TimeGrid) -> Self {
        TrajectoryConfig {
            n_traj,
            master_seed,
            dt: grid.dt,
            t_max: grid.t_max,
            save_stride: grid.save_stride,
            jump_tolerance: 1e-10,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_max, self.dt, self.save_stride)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj < 1 {
            return Err(Error::invalid_arg("ensemble needs at least one trajectory"));
        }
        if !(self.jump_tolerance > 0.0) {
            return Err(Error::invalid_arg("jump tolerance must be positive"));
        }
        self.grid()?;
        Ok(())
    }
}

/// H_eff = H - (i/2) Σ_k J_k† J_k.
pub fn effective_hamiltonian(
    h: &SparseOperator,
    jumps: &[SparseOperator],
) -> Result<SparseOperator> {
    let mut acc = h.clone();
    for j in jumps {
        if j.dim() != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                got: j.dim(),
            });
        }
        let jj = j.adjoint().matmul(j)?;
        acc = acc.add(&jj.scale(C64::new(0.0, -0.5)))?;
    }
    Ok(acc)
}

/// One recorded quantum jump.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: Channel,
    pub site: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecord {
    pub jumps: Vec<JumpEvent>,
}

struct TrajectoryWorker<'a> {
    kernel: &'a ChainKernel,
    spec: &'a LatticeSpec,
    grid: TimeGrid,
    jump_tolerance: f64,
    dissipative: bool,
    // scratch
    k: Vec<C64>,
    tmp: Vec<C64>,
    acc: Vec<C64>,
    prev: Vec<C64>,
    work: Vec<C64>,
    w_loss: Vec<f64>,
    w_deph: Vec<f64>,
}

impl<'a> TrajectoryWorker<'a> {
    fn new(kernel: &'a ChainKernel, spec: &'a LatticeSpec, cfg: &TrajectoryConfig) -> Result<Self> {
        let dim = kernel.dim();
        Ok(TrajectoryWorker {
            kernel,
            spec,
            grid: cfg.grid()?,
            jump_tolerance: cfg.jump_tolerance,
            dissipative: spec.loss_rate > 0.0 || spec.dephasing_rate > 0.0,
            k: vec![C64::new(0.0, 0.0); dim],
            tmp: vec![C64::new(0.0, 0.0); dim],
            acc: vec![C64::new(0.0, 0.0); dim],
            prev: vec![C64::new(0.0, 0.0); dim],
            work: vec![C64::new(0.0, 0.0); dim],
            w_loss: vec![0.0; spec.sites],
            w_deph: vec![0.0; spec.sites],
        })
    }

    fn drift_step(&mut self, state: &mut [C64], dt: f64) {
        let kernel = self.kernel;
        let mut apply = |out: &mut [C64], input: &[C64]| kernel.apply_drift(out, input);
        kernels::rk4_step(
            &mut apply,
            state,
            dt,
            &mut self.k,
            &mut self.tmp,
            &mut self.acc,
        );
    }

    fn norm_sq(state: &[C64]) -> f64 {
        state.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Pick a jump channel ∝ ⟨ψ|J†J|ψ⟩ and apply the raw operator (rates
    /// cancel in the renormalization). Returns the channel and site.
    fn apply_jump(&mut self, psi: &mut Vec<C64>, u: f64) -> Result<(Channel, usize)> {
        self.kernel.jump_weights(
            self.spec.loss_rate,
            self.spec.dephasing_rate,
            psi,
            &mut self.w_loss,
            &mut self.w_deph,
        );
        let total: f64 = self.w_loss.iter().sum::<f64>() + self.w_deph.iter().sum::<f64>();
        if total <= 0.0 {
            return Err(Error::InvalidState(
                "norm crossed the jump threshold with no active jump channel".into(),
            ));
        }
        let mut target = u * total;
        for (site, &w) in self.w_loss.iter().enumerate() {
            if target < w {
                self.kernel.apply_annihilation(site, &mut self.work, psi);
                std::mem::swap(psi, &mut self.work);
                return Ok((Channel::Loss, site));
            }
            target -= w;
        }
        for (site, &w) in self.w_deph.iter().enumerate() {
            if target < w {
                self.kernel.apply_number_in_place(site, psi);
                return Ok((Channel::Dephasing, site));
            }
            target -= w;
        }
        // numerical corner: fall back to the last nonzero channel
        let site = (0..self.spec.sites)
            .rev()
            .find(|&s| self.w_deph[s] > 0.0 || self.w_loss[s] > 0.0)
            .unwrap();
        if self.w_deph[site] > 0.0 {
            self.kernel.apply_number_in_place(site, psi);
            Ok((Channel::Dephasing, site))
        } else {
            self.kernel.apply_annihilation(site, &mut self.work, psi);
            std::mem::swap(psi, &mut self.work);
            Ok((Channel::Loss, site))
        }
    }

    fn renormalize(psi: &mut [C64]) {
        let n = Self::norm_sq(psi).sqrt();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in psi.iter_mut() {
                *a *= inv;
            }
        }
    }

    fn run<F>(
        &mut self,
        psi0: &PureState,
        rng: &mut ChaCha12Rng,
        mut observe: F,
    ) -> Result<TrajectoryRecord>
    where
        F: FnMut(usize, f64, &PureState) -> Result<()>,
    {
        let dim = self.kernel.dim();
        let grid = self.grid.clone();
        let mut psi = psi0.amplitudes().to_vec();
        let mut record = TrajectoryRecord::default();
        let mut threshold = if self.dissipative {
            draw_unit_open(rng)
        } else {
            f64::INFINITY
        };
        let n_steps = grid.n_steps();
        let mut snapshot = PureState::zeros(dim);
        // renormalizes internally at save points, rescaling the threshold so
        // the waiting-time statistics carried by the norm are unchanged
        fn emit<F>(
            step: usize,
            time: f64,
            psi: &mut [C64],
            threshold: &mut f64,
            observe: &mut F,
            snapshot: &mut PureState,
        ) -> Result<()>
        where
            F: FnMut(usize, f64, &PureState) -> Result<()>,
        {
            let p: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
            if p > 0.0 {
                let inv = 1.0 / p.sqrt();
                for a in psi.iter_mut() {
                    *a *= inv;
                }
                *threshold /= p;
            }
            snapshot.amps.copy_from_slice(psi);
            observe(step, time, snapshot)
        }
        emit(0, 0.0, &mut psi, &mut threshold, &mut observe, &mut snapshot)?;
        for step in 1..=n_steps {
            let mut consumed = 0.0;
            loop {
                let remaining = grid.dt - consumed;
                self.prev.copy_from_slice(&psi);
                self.drift_step(&mut psi, remaining);
                if !self.dissipative || Self::norm_sq(&psi) > threshold {
                    break;
                }
                // jump inside (0, remaining]: bisect the crossing of ‖ψ‖² = r
                let mut lo = 0.0;
                let mut hi = remaining;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    self.work.copy_from_slice(&self.prev);
                    // borrow dance: drift_step needs &mut self
                    let mut work = std::mem::take(&mut self.work);
                    self.drift_step(&mut work, mid);
                    let p = Self::norm_sq(&work);
                    self.work = work;
                    if p <= threshold {
                        hi = mid;
                        if threshold - p <= self.jump_tolerance * threshold {
                            break;
                        }
                    } else {
                        lo = mid;
                    }
                }
                psi.copy_from_slice(&self.prev);
                self.drift_step(&mut psi, hi);
                consumed += hi;
                let u: f64 = rng.gen();
                let (channel, site) = self.apply_jump(&mut psi, u)?;
                Self::renormalize(&mut psi);
                record.jumps.push(JumpEvent {
                    time: grid.time_at(step - 1) + consumed,
                    channel,
                    site,
                });
                threshold = draw_unit_open(rng);
                if grid.dt - consumed <= 0.0 {
                    break;
                }
            }
            if grid.is_save_step(step) {
                emit(
                    step,
                    grid.time_at(step),
                    &mut psi,
                    &mut threshold,
                    &mut observe,
                    &mut snapshot,
                )?;
            }
        }
        Ok(record)
    }
}

fn draw_unit_open(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let v: f64 = rng.gen();
        if v > 0.0 && v < 1.0 {
            return v;
        }
    }
}

fn trajectory_rng(master_seed: u64, traj_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(traj_index);
    rng
}

fn check_trajectory_inputs(
    psi0: &PureState,
    spec: &LatticeSpec,
    cfg: &TrajectoryConfig,
) -> Result<()> {
    spec.validate()?;
    cfg.validate()?;
    let dim = spec.dim()?;
    if dim > STATE_DIM_CAP {
        return Err(Error::ResourceCap {
            what: "state vector",
            dim,
            cap_name: "state",
            cap: STATE_DIM_CAP,
        });
    }
    if psi0.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: psi0.dim(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState("initial state is not unit norm".into()));
    }
    Ok(())
}

fn drift_norm_bound(kernel: &ChainKernel, spec: &LatticeSpec) -> f64 {
    let nmax = (spec.cutoff - 1) as f64;
    kernel.hamiltonian_norm_bound()
        + 0.5 * spec.sites as f64 * (spec.loss_rate * nmax + 2.0 * spec.dephasing_rate * nmax * nmax)
}

/// Run one trajectory; the observer receives unit-norm states at save
/// points. Identical (master_seed, traj_index) inputs give bitwise-identical
/// output.
pub fn run_trajectory<F>(
    psi0: &PureState,
    spec: &LatticeSpec,
    cfg: &TrajectoryConfig,
    traj_index: u64,
    observe: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(usize, f64, &PureState) -> Result<()>,
{
    check_trajectory_inputs(psi0, spec, cfg)?;
    let kernel = ChainKernel::build(spec)?;
    let bound = drift_norm_bound(&kernel, spec);
    if cfg.dt * bound > RK4_STABILITY_LIMIT {
        return Err(Error::StepSize {
            product: cfg.dt * bound,
            limit: RK4_STABILITY_LIMIT,
        });
    }
    let mut worker = TrajectoryWorker::new(&kernel, spec, cfg)?;
    let mut rng = trajectory_rng(cfg.master_seed, traj_index);
    worker.run(psi0, &mut rng, observe)
}

/// Running ensemble sums of pair RDMs; merged in trajectory-index order.
pub struct EnsembleAccumulator {
    pairs: Vec<(usize, usize)>,
    times: Vec<f64>,
    local_dim: usize,
    /// [pair][time] flattened RDM sums.
    sums: Vec<Vec<C64>>,
    count: usize,
    loss_jumps: u64,
    deph_jumps: u64,
}

impl EnsembleAccumulator {
    pub fn new(pairs: Vec<(usize, usize)>, times: Vec<f64>, local_dim: usize) -> Self {
        let block = local_dim * local_dim * local_dim * local_dim;
        let sums = vec![vec![C64::new(0.0, 0.0); block]; pairs.len() * times.len()];
        EnsembleAccumulator {
            pairs,
            times,
            local_dim,
            sums,
            count: 0,
            loss_jumps: 0,
            deph_jumps: 0,
        }
    }

    fn slot(&self, pair_idx: usize, time_idx: usize) -> usize {
        pair_idx * self.times.len() + time_idx
    }

    fn add_rdm(&mut self, pair_idx: usize, time_idx: usize, rdm: &TwoSiteRDM) {
        let slot = self.slot(pair_idx, time_idx);
        for (s, v) in self.sums[slot].iter_mut().zip(rdm.as_slice()) {
            *s += v;
        }
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.count += other.count;
        self.loss_jumps += other.loss_jumps;
        self.deph_jumps += other.deph_jumps;
    }

    pub fn trajectories(&self) -> usize {
        self.count
    }

    /// Averaged RDMs, [pair][time].
    pub fn finalize(&self) -> Result<Vec<Vec<TwoSiteRDM>>> {
        if self.count == 0 {
            return Err(Error::InsufficientData("empty ensemble".into()));
        }
        let inv = 1.0 / self.count as f64;
        self.pairs
            .iter()
            .enumerate()
            .map(|(pi, &(a, b))| {
                (0..self.times.len())
                    .map(|ti| {
                        let data: Vec<C64> = self.sums[self.slot(pi, ti)]
                            .iter()
                            .map(|z| z * inv)
                            .collect();
                        TwoSiteRDM::new(a, b, self.local_dim, data)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Ensemble-averaged pair RDMs plus jump statistics.
pub struct EnsembleResult {
    pub pairs: Vec<(usize, usize)>,
    pub times: Vec<f64>,
    /// rdms[pair][time].
    pub rdms: Vec<Vec<TwoSiteRDM>>,
    pub trajectories: usize,
    pub loss_jumps: u64,
    pub deph_jumps: u64,
}

const BATCH: usize = 32;

/// Average normalized pair RDMs over the ensemble. Trajectories run in
/// parallel but are reduced in index order, so the result is independent of
/// the worker count.
pub fn ensemble_average(
    psi0: &PureState,
    spec: &LatticeSpec,
    cfg: &TrajectoryConfig,
    pairs: &[(usize, usize)],
) -> Result<EnsembleResult> {
    check_trajectory_inputs(psi0, spec, cfg)?;
    if pairs.is_empty() {
        return Err(Error::invalid_arg("ensemble needs at least one site pair"));
    }
    let grid = cfg.grid()?;
    let kernel = ChainKernel::build(spec)?;
    let bound = drift_norm_bound(&kernel, spec);
    if cfg.dt * bound > RK4_STABILITY_LIMIT {
        return Err(Error::StepSize {
            product: cfg.dt * bound,
            limit: RK4_STABILITY_LIMIT,
        });
    }
    let n_steps = grid.n_steps();
    let times: Vec<f64> = (0..=n_steps)
        .filter(|&s| grid.is_save_step(s))
        .map(|s| grid.time_at(s))
        .collect();

    let mut total = EnsembleAccumulator::new(pairs.to_vec(), times.clone(), spec.cutoff);
    let indices: Vec<u64> = (0..cfg.n_traj as u64).collect();
    for batch in indices.chunks(BATCH) {
        let locals: Vec<Result<EnsembleAccumulator>> = batch
            .par_iter()
            .map(|&idx| {
                let mut local =
                    EnsembleAccumulator::new(pairs.to_vec(), times.clone(), spec.cutoff);
                let mut worker = TrajectoryWorker::new(&kernel, spec, cfg)?;
                let mut rng = trajectory_rng(cfg.master_seed, idx);
                let mut save_idx = 0usize;
                let record = worker.run(psi0, &mut rng, |_, _, psi| {
                    for (pi, &(a, b)) in pairs.iter().enumerate() {
                        let rdm = partial_trace_pair(StateRef::Pure(psi), spec, a, b)?;
                        local.add_rdm(pi, save_idx, &rdm);
                    }
                    save_idx += 1;
                    Ok(())
                })?;
                local.count = 1;
                for jump in &record.jumps {
                    match jump.channel {
                        Channel::Loss => local.loss_jumps += 1,
                        Channel::Dephasing => local.deph_jumps += 1,
                    }
                }
                Ok(local)
            })
            .collect();
        for local in locals {
            total.merge(&local?);
        }
    }
    let rdms = total.finalize()?;
    // ensemble averages of unit-trace Hermitian blocks stay unit-trace and
    // Hermitian to rounding; statistical noise only affects positivity
    for row in &rdms {
        for rdm in row {
            rdm.validate_with(1e-12, -1e-6)?;
        }
    }
    Ok(EnsembleResult {
        pairs: pairs.to_vec(),
        times,
        rdms,
        trajectories: total.count,
        loss_jumps: total.loss_jumps,
        deph_jumps: total.deph_jumps,
    })
}
