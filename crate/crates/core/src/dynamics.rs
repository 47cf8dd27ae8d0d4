//! Exact integration of the Lindblad master equation for the dense density
//! matrix, and pure Schrödinger evolution for closed-system baselines.
//!
//! The integrator is fixed-step classical RK4: predictable accuracy and no
//! adaptive-step reproducibility drift. The dissipator is the standard
//! trace-preserving form dρ/dt = -i[H,ρ] + Σ_k (J_k ρ J_k† - ½{J_k†J_k, ρ}).
//!
//! Density matrices that start block-diagonal in total photon number stay so
//! under this generator (loss only moves blocks down the cascade), and the
//! solver then integrates the blocks instead of the full matrix. This is an
//! exact reformulation, cross-checked against the plain dense path in tests.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{build_hamiltonian, LatticeSpec, SparseOperator, DENSE_DIM_CAP, STATE_DIM_CAP};
use crate::kernel::ChainKernel;
use crate::kernels;
use crate::sector::{
    loss_connections, sector_dissipator_diagonal, sector_hamiltonian, SectorSpace,
};

/// Abort threshold for dt times the generator's spectral bound. The RK4
/// stability region crosses the imaginary axis at 2√2; the margin covers the
/// dissipative part.
pub const RK4_STABILITY_LIMIT: f64 = 2.5;

/// Trace drift tolerated at snapshots.
pub const TRACE_TOL: f64 = 1e-8;
/// Hermiticity drift tolerated at snapshots.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Pure-state norm drift tolerated at snapshots of closed evolution.
pub const NORM_TOL: f64 = 1e-8;
/// Density-matrix eigenvalues below this abort the run (dt too large).
pub const POSITIVITY_ABORT: f64 = -1e-6;

fn mul_neg_i(z: C64) -> C64 {
    C64::new(z.im, -z.re)
}

/// Uniform integration grid; times are in the same units as 1/energy.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub dt: f64,
    /// Steps between saved snapshots.
    pub save_stride: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, dt: f64, save_stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid_arg("dt must be positive"));
        }
        if t_max < dt || !t_max.is_finite() {
            return Err(Error::invalid_arg("t_max must be at least dt"));
        }
        if save_stride == 0 {
            return Err(Error::invalid_arg("save_stride must be at least 1"));
        }
        Ok(TimeGrid {
            t_max,
            dt,
            save_stride,
        })
    }

    /// Default step 0.02 / max(U, 4J, γ, 2Γ_d): small against every
    /// frequency in the generator.
    pub fn default_dt(spec: &LatticeSpec) -> f64 {
        let denom = spec
            .interaction
            .abs()
            .max(4.0 * spec.hopping)
            .max(spec.loss_rate)
            .max(2.0 * spec.dephasing_rate);
        if denom > 0.0 {
            0.02 / denom
        } else {
            0.02
        }
    }

    pub fn with_default_dt(t_max: f64, spec: &LatticeSpec, save_stride: usize) -> Result<Self> {
        TimeGrid::new(t_max, TimeGrid::default_dt(spec), save_stride)
    }

    pub fn n_steps(&self) -> usize {
        let ratio = self.t_max / self.dt;
        if (ratio - ratio.round()).abs() < 1e-9 {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        }
    }

    pub fn is_save_step(&self, step: usize) -> bool {
        step % self.save_stride == 0 || step == self.n_steps()
    }

    pub fn time_at(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Complex state vector over the full chain Hilbert space.
#[derive(Clone, Debug)]
pub struct PureState {
    dim: usize,
    pub(crate) amps: Vec<C64>,
}

impl PureState {
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid_arg(format!(
                "basis index {index} outside dimension {dim}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(PureState { dim, amps })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        PureState {
            dim: amps.len(),
            amps,
        }
    }

    pub(crate) fn zeros(dim: usize) -> Self {
        PureState {
            dim,
            amps: vec![C64::new(0.0, 0.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.normalize();
        out
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// ⟨ψ|A|ψ⟩.
    pub fn expectation(&self, op: &SparseOperator) -> Result<C64> {
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: op.dim(),
            });
        }
        let y = op.mul_vec(&self.amps);
        Ok(self
            .amps
            .iter()
            .zip(&y)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn to_density(&self) -> DensityMatrix {
        let dim = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); dim * dim];
        for c in 0..dim {
            let ac = self.amps[c].conj();
            if ac == C64::new(0.0, 0.0) {
                continue;
            }
            for r in 0..dim {
                data[r + c * dim] = self.amps[r] * ac;
            }
        }
        DensityMatrix { dim, data }
    }

    /// Mean total photon number Σ_i ⟨n_i⟩.
    pub fn mean_total_occupation(&self, spec: &LatticeSpec) -> f64 {
        let l = spec.sites;
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(x, a)| {
                let total: usize = (0..l).map(|s| spec.occupation(x, s)).sum();
                total as f64 * a.norm_sqr()
            })
            .sum()
    }
}

/// Dense Hermitian density matrix, column-major.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    dim: usize,
    pub(crate) data: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &PureState) -> Self {
        psi.to_density()
    }

    pub fn basis_projector(dim: usize, index: usize) -> Result<Self> {
        Ok(DensityMatrix::from_pure(&PureState::basis_state(
            dim, index,
        )?))
    }

    pub fn from_column_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(DensityMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.data[row + col * self.dim]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.data[k + k * self.dim]).sum()
    }

    /// tr(ρ²) for Hermitian ρ.
    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for c in 0..self.dim {
            for r in 0..=c {
                err = err.max((self.entry(r, c) - self.entry(c, r).conj()).norm());
            }
        }
        err
    }

    /// Smallest eigenvalue; O(dim³), intended for modest dimensions.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::DMatrix::from_fn(self.dim, self.dim, |r, c| self.entry(r, c));
        let eig = nalgebra::SymmetricEigen::new(m);
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// tr(ρ A).
    pub fn expectation(&self, op: &SparseOperator) -> Result<C64> {
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: op.dim(),
            });
        }
        Ok(op.iter().map(|(r, c, v)| v * self.entry(c, r)).sum())
    }

    /// Mean total photon number Σ_i tr(n_i ρ).
    pub fn mean_total_occupation(&self, spec: &LatticeSpec) -> f64 {
        let l = spec.sites;
        (0..self.dim)
            .map(|x| {
                let total: usize = (0..l).map(|s| spec.occupation(x, s)).sum();
                total as f64 * self.entry(x, x).re
            })
            .sum()
    }

    fn validate_initial(&self) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "initial density matrix trace {tr} is not 1"
            )));
        }
        if self.hermiticity_error() > HERMITICITY_TOL {
            return Err(Error::InvalidState(
                "initial density matrix is not Hermitian".into(),
            ));
        }
        Ok(())
    }

    fn validate_snapshot(&self, time: f64, eigen_check_dim: usize) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace drifted to {tr} at t = {time}"
            )));
        }
        if self.hermiticity_error() > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "Hermiticity lost at t = {time}"
            )));
        }
        if self.dim <= eigen_check_dim {
            let min = self.min_eigenvalue();
            if min < POSITIVITY_ABORT {
                return Err(Error::PositivityLost {
                    time,
                    eigenvalue: min,
                });
            }
        }
        Ok(())
    }
}

/// Knobs for the master-equation solver.
#[derive(Clone, Debug)]
pub struct MasterOptions {
    /// Refuse dense density matrices above this dimension.
    pub dense_cap: usize,
    /// Run the O(dim³) spectral positivity check at snapshots up to this
    /// dimension; above it, positivity is monitored through the extracted
    /// two-site blocks instead.
    pub eigen_check_dim: usize,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions {
            dense_cap: DENSE_DIM_CAP,
            eigen_check_dim: 100,
        }
    }
}

/// Step and snapshot counts of a finished run.
#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct RunStats {
    pub steps: usize,
    pub snapshots: usize,
}

/// dρ/dt for an explicit Hamiltonian and jump-operator list. General and
/// allocation-heavy; the solvers use structured fast paths that are tested
/// against this.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &SparseOperator,
    jumps: &[SparseOperator],
) -> Result<DensityMatrix> {
    let dim = rho.dim();
    if h.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h.dim(),
        });
    }
    for j in jumps {
        if j.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: j.dim(),
            });
        }
    }
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    let mut scratch = vec![C64::new(0.0, 0.0); dim * dim];

    // -i [H, ρ] = -i (Hρ - (Hρ)†) for Hermitian ρ
    kernels::spmm_left(&mut scratch, h, &rho.data);
    for c in 0..dim {
        for r in 0..dim {
            let z = scratch[r + c * dim] - scratch[c + r * dim].conj();
            out[r + c * dim] = mul_neg_i(z);
        }
    }

    for j in jumps {
        // J ρ J†
        kernels::spmm_left(&mut scratch, j, &rho.data);
        let jconj = j.conj();
        for col in 0..dim {
            let (ks, vs) = jconj.row(col);
            for (&k, &v) in ks.iter().zip(vs) {
                let src = k as usize * dim;
                let dst = col * dim;
                for r in 0..dim {
                    out[dst + r] += v * scratch[src + r];
                }
            }
        }
        // -½ {J†J, ρ}
        let m = j.adjoint().matmul(j)?;
        kernels::spmm_left(&mut scratch, &m, &rho.data);
        for c in 0..dim {
            for r in 0..dim {
                let z = scratch[r + c * dim] + scratch[c + r * dim].conj();
                out[r + c * dim] -= 0.5 * z;
            }
        }
    }
    Ok(DensityMatrix { dim, data: out })
}

/// Structured dense RHS: drift A = -iH - K/2 with diagonal K, plus the loss
/// and dephasing jump terms applied through index arithmetic.
pub(crate) struct DenseRhs {
    dim: usize,
    sites: usize,
    drift: SparseOperator,
    loss_rate: f64,
    deph_rate: f64,
    strides: Vec<usize>,
    occ: Vec<u8>,
    /// Per site: (x, √(n_x + 1)) for every x with n_x < d-1.
    loss_factors: Vec<Vec<(u32, f64)>>,
}

impl DenseRhs {
    pub fn build(spec: &LatticeSpec) -> Result<Self> {
        let dim = spec.dim()?;
        let l = spec.sites;
        let d = spec.cutoff;
        let occ = spec.occupation_table()?;
        let h = build_hamiltonian(spec)?;
        let mut k_diag = vec![C64::new(0.0, 0.0); dim];
        for x in 0..dim {
            let mut k = 0.0;
            for &n in &occ[x * l..(x + 1) * l] {
                let n = n as f64;
                k += spec.loss_rate * n + 2.0 * spec.dephasing_rate * n * n;
            }
            k_diag[x] = C64::new(-0.5 * k, 0.0);
        }
        let drift = h.scale(C64::new(0.0, -1.0)).add_diagonal(&k_diag)?;
        let mut loss_factors = Vec::new();
        if spec.loss_rate > 0.0 {
            for site in 0..l {
                let table = (0..dim)
                    .filter_map(|x| {
                        let n = occ[x * l + site] as usize;
                        (n < d - 1).then(|| (x as u32, ((n + 1) as f64).sqrt()))
                    })
                    .collect();
                loss_factors.push(table);
            }
        }
        Ok(DenseRhs {
            dim,
            sites: l,
            drift,
            loss_rate: spec.loss_rate,
            deph_rate: spec.dephasing_rate,
            strides: (0..l).map(|s| spec.stride(s)).collect(),
            occ,
            loss_factors,
        })
    }

    pub fn apply(&self, out: &mut [C64], rho: &[C64]) {
        let dim = self.dim;
        kernels::spmm_left(out, &self.drift, rho);
        kernels::hermitianize(out, dim);
        if self.loss_rate > 0.0 {
            for (site, table) in self.loss_factors.iter().enumerate() {
                let delta = self.strides[site];
                for &(y, fy) in table {
                    let y = y as usize;
                    let dst = y * dim;
                    let src = (y + delta) * dim + delta;
                    let scale = self.loss_rate * fy;
                    for &(x, fx) in table {
                        let x = x as usize;
                        out[dst + x] += scale * fx * rho[src + x];
                    }
                }
            }
        }
        if self.deph_rate > 0.0 {
            let l = self.sites;
            for y in 0..dim {
                let oy = &self.occ[y * l..(y + 1) * l];
                for x in 0..dim {
                    let ox = &self.occ[x * l..(x + 1) * l];
                    let w: u32 = ox
                        .iter()
                        .zip(oy)
                        .map(|(&a, &b)| a as u32 * b as u32)
                        .sum();
                    out[x + y * dim] += 2.0 * self.deph_rate * w as f64 * rho[x + y * dim];
                }
            }
        }
    }
}

/// One diagonal N-block of the cascade.
struct Block {
    dim: usize,
    offset: usize,
    drift: SparseOperator,
    occ: Vec<u8>,
}

pub(crate) struct BlockedRhs {
    sites: usize,
    loss_rate: f64,
    deph_rate: f64,
    /// Highest sector first; loss feeds each block from the one before it.
    blocks: Vec<Block>,
    /// feeds[k][site]: connections from blocks[k-1] into blocks[k].
    feeds: Vec<Vec<Vec<(u32, u32, f64)>>>,
    len: usize,
}

impl BlockedRhs {
    pub fn build(spec: &LatticeSpec, space: &SectorSpace, top_sector: usize) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut feeds = Vec::new();
        let mut offset = 0;
        for (k, n) in (0..=top_sector).rev().enumerate() {
            let sec = &space.sectors[n];
            let h = sector_hamiltonian(spec, space, n)?;
            let k_diag: Vec<C64> = sector_dissipator_diagonal(spec, sec)
                .iter()
                .map(|&k| C64::new(-0.5 * k, 0.0))
                .collect();
            let drift = h.scale(C64::new(0.0, -1.0)).add_diagonal(&k_diag)?;
            blocks.push(Block {
                dim: sec.dim(),
                offset,
                drift,
                occ: sec.occ.clone(),
            });
            offset += sec.dim() * sec.dim();
            if k == 0 || spec.loss_rate == 0.0 {
                feeds.push(Vec::new());
            } else {
                feeds.push(
                    (0..spec.sites)
                        .map(|site| loss_connections(spec, space, n + 1, site))
                        .collect(),
                );
            }
        }
        Ok(BlockedRhs {
            sites: spec.sites,
            loss_rate: spec.loss_rate,
            deph_rate: spec.dephasing_rate,
            blocks,
            feeds,
            len: offset,
        })
    }

    pub fn state_len(&self) -> usize {
        self.len
    }

    pub fn apply(&self, out: &mut [C64], y: &[C64]) {
        for (k, b) in self.blocks.iter().enumerate() {
            let span = b.dim * b.dim;
            let out_blk = &mut out[b.offset..b.offset + span];
            let y_blk = &y[b.offset..b.offset + span];
            kernels::spmm_left(out_blk, &b.drift, y_blk);
            kernels::hermitianize(out_blk, b.dim);
            if self.deph_rate > 0.0 {
                let l = self.sites;
                for col in 0..b.dim {
                    let oy = &b.occ[col * l..(col + 1) * l];
                    for row in 0..b.dim {
                        let ox = &b.occ[row * l..(row + 1) * l];
                        let w: u32 = ox
                            .iter()
                            .zip(oy)
                            .map(|(&a, &b)| a as u32 * b as u32)
                            .sum();
                        out_blk[row + col * b.dim] +=
                            2.0 * self.deph_rate * w as f64 * y_blk[row + col * b.dim];
                    }
                }
            }
            if k > 0 && self.loss_rate > 0.0 {
                let above = &self.blocks[k - 1];
                let y_above = &y[above.offset..above.offset + above.dim * above.dim];
                for conns in &self.feeds[k] {
                    for &(ys, yd, ay) in conns {
                        let src = ys as usize * above.dim;
                        let dst = yd as usize * b.dim;
                        let scale = self.loss_rate * ay;
                        for &(xs, xd, ax) in conns {
                            out_blk[dst + xd as usize] +=
                                scale * ax * y_above[src + xs as usize];
                        }
                    }
                }
            }
        }
    }

    /// Pack the block-diagonal part of a full density matrix.
    pub fn project(&self, rho: &DensityMatrix, space: &SectorSpace, top_sector: usize) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.len];
        for (k, n) in (0..=top_sector).rev().enumerate() {
            let sec = &space.sectors[n];
            let b = &self.blocks[k];
            for (col, &gc) in sec.states.iter().enumerate() {
                for (row, &gr) in sec.states.iter().enumerate() {
                    y[b.offset + row + col * b.dim] = rho.entry(gr as usize, gc as usize);
                }
            }
        }
        y
    }

    /// Scatter the blocks back into a full density matrix.
    pub fn assemble(
        &self,
        y: &[C64],
        space: &SectorSpace,
        top_sector: usize,
        rho: &mut DensityMatrix,
    ) {
        rho.data.fill(C64::new(0.0, 0.0));
        let dim = rho.dim;
        for (k, n) in (0..=top_sector).rev().enumerate() {
            let sec = &space.sectors[n];
            let b = &self.blocks[k];
            for (col, &gc) in sec.states.iter().enumerate() {
                for (row, &gr) in sec.states.iter().enumerate() {
                    rho.data[gr as usize + gc as usize * dim] =
                        y[b.offset + row + col * b.dim];
                }
            }
        }
    }
}

fn dissipator_norm_bound(spec: &LatticeSpec) -> f64 {
    let nmax = (spec.cutoff - 1) as f64;
    2.0 * spec.sites as f64
        * (spec.loss_rate * nmax + 2.0 * spec.dephasing_rate * nmax * nmax)
}

fn check_step_size(dt: f64, spectral_bound: f64) -> Result<()> {
    let product = dt * spectral_bound;
    if product > RK4_STABILITY_LIMIT {
        return Err(Error::StepSize {
            product,
            limit: RK4_STABILITY_LIMIT,
        });
    }
    Ok(())
}

/// Integrate the master equation, calling `observe(step, t, ρ)` at every
/// save point (including t = 0 and the final step).
pub fn evolve_master<F>(
    rho0: &DensityMatrix,
    spec: &LatticeSpec,
    grid: &TimeGrid,
    observe: F,
) -> Result<RunStats>
where
    F: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    evolve_master_opts(rho0, spec, grid, &MasterOptions::default(), observe)
}

pub fn evolve_master_opts<F>(
    rho0: &DensityMatrix,
    spec: &LatticeSpec,
    grid: &TimeGrid,
    opts: &MasterOptions,
    observe: F,
) -> Result<RunStats>
where
    F: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    evolve_master_impl(rho0, spec, grid, opts, false, observe)
}

fn evolve_master_impl<F>(
    rho0: &DensityMatrix,
    spec: &LatticeSpec,
    grid: &TimeGrid,
    opts: &MasterOptions,
    force_dense: bool,
    mut observe: F,
) -> Result<RunStats>
where
    F: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    spec.validate()?;
    let dim = spec.dim()?;
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rho0.dim(),
        });
    }
    if dim > opts.dense_cap {
        return Err(Error::ResourceCap {
            what: "density matrix",
            dim,
            cap_name: "dense solver",
            cap: opts.dense_cap,
        });
    }
    rho0.validate_initial()?;
    let h = build_hamiltonian(spec)?;
    check_step_size(grid.dt, 2.0 * h.infinity_norm() + dissipator_norm_bound(spec))?;

    let space = SectorSpace::build(spec)?;
    let n_steps = grid.n_steps();
    let mut snapshots = 0;

    if !force_dense && space.is_block_diagonal(&rho0.data) {
        // top sector: highest N with population
        let top_sector = (0..space.sectors.len())
            .rev()
            .find(|&n| {
                space.sectors[n]
                    .states
                    .iter()
                    .any(|&x| rho0.entry(x as usize, x as usize).norm() > 0.0)
            })
            .unwrap_or(0);
        let rhs = BlockedRhs::build(spec, &space, top_sector)?;
        let mut y = rhs.project(rho0, &space, top_sector);
        let len = rhs.state_len();
        let mut k = vec![C64::new(0.0, 0.0); len];
        let mut tmp = k.clone();
        let mut acc = k.clone();
        let mut full = DensityMatrix {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        };
        let mut apply = |out: &mut [C64], input: &[C64]| rhs.apply(out, input);
        rhs.assemble(&y, &space, top_sector, &mut full);
        observe(0, 0.0, &full)?;
        snapshots += 1;
        for step in 1..=n_steps {
            kernels::rk4_step(&mut apply, &mut y, grid.dt, &mut k, &mut tmp, &mut acc);
            if grid.is_save_step(step) {
                let t = grid.time_at(step);
                rhs.assemble(&y, &space, top_sector, &mut full);
                full.validate_snapshot(t, opts.eigen_check_dim)?;
                observe(step, t, &full)?;
                snapshots += 1;
            }
        }
    } else {
        let rhs = DenseRhs::build(spec)?;
        let mut rho = rho0.clone();
        let mut k = vec![C64::new(0.0, 0.0); dim * dim];
        let mut tmp = k.clone();
        let mut acc = k.clone();
        let mut apply = |out: &mut [C64], input: &[C64]| rhs.apply(out, input);
        observe(0, 0.0, &rho)?;
        snapshots += 1;
        for step in 1..=n_steps {
            kernels::rk4_step(&mut apply, &mut rho.data, grid.dt, &mut k, &mut tmp, &mut acc);
            if grid.is_save_step(step) {
                let t = grid.time_at(step);
                rho.validate_snapshot(t, opts.eigen_check_dim)?;
                observe(step, t, &rho)?;
                snapshots += 1;
            }
        }
    }
    Ok(RunStats {
        steps: n_steps,
        snapshots,
    })
}

/// Collect-all variant for small systems and tests; full-ρ history is
/// opt-in by design since snapshots are otherwise consumed on the fly.
pub fn evolve_master_collect(
    rho0: &DensityMatrix,
    spec: &LatticeSpec,
    grid: &TimeGrid,
) -> Result<Vec<(f64, DensityMatrix)>> {
    let mut out = Vec::new();
    evolve_master(rho0, spec, grid, |_, t, rho| {
        out.push((t, rho.clone()));
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
pub(crate) fn evolve_master_force_dense<F>(
    rho0: &DensityMatrix,
    spec: &LatticeSpec,
    grid: &TimeGrid,
    observe: F,
) -> Result<RunStats>
where
    F: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    evolve_master_impl(rho0, spec, grid, &MasterOptions::default(), true, observe)
}

/// Schrödinger evolution under an explicit (sparse) Hamiltonian.
pub fn evolve_pure<F>(
    psi0: &PureState,
    h: &SparseOperator,
    grid: &TimeGrid,
    mut observe: F,
) -> Result<RunStats>
where
    F: FnMut(usize, f64, &PureState) -> Result<()>,
{
    let dim = psi0.dim();
    if h.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: h.dim(),
        });
    }
    if dim > STATE_DIM_CAP {
        return Err(Error::ResourceCap {
            what: "state vector",
            dim,
            cap_name: "state",
            cap: STATE_DIM_CAP,
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState("initial state is not unit norm".into()));
    }
    check_step_size(grid.dt, h.infinity_norm())?;
    let mut psi = psi0.clone();
    let mut k = vec![C64::new(0.0, 0.0); dim];
    let mut tmp = k.clone();
    let mut acc = k.clone();
    let mut apply = |out: &mut [C64], input: &[C64]| {
        h.mul_vec_into(input, out);
        for v in out.iter_mut() {
            *v = mul_neg_i(*v);
        }
    };
    let n_steps = grid.n_steps();
    let mut snapshots = 1;
    observe(0, 0.0, &psi)?;
    for step in 1..=n_steps {
        kernels::rk4_step(&mut apply, &mut psi.amps, grid.dt, &mut k, &mut tmp, &mut acc);
        if grid.is_save_step(step) {
            let t = grid.time_at(step);
            if (psi.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidState(format!(
                    "norm drifted to {} at t = {t}",
                    psi.norm()
                )));
            }
            observe(step, t, &psi)?;
            snapshots += 1;
        }
    }
    Ok(RunStats {
        steps: n_steps,
        snapshots,
    })
}

/// Closed-system chain evolution driven by the spec (dissipation rates are
/// ignored). States confined to one photon-number sector are integrated
/// inside that sector; anything else falls back to the matrix-free
/// full-space kernel. Both routes match `evolve_pure` on the full sparse
/// Hamiltonian.
pub fn evolve_pure_chain<F>(
    psi0: &PureState,
    spec: &LatticeSpec,
    grid: &TimeGrid,
    mut observe: F,
) -> Result<RunStats>
where
    F: FnMut(usize, f64, &PureState) -> Result<()>,
{
    spec.validate()?;
    let dim = spec.dim()?;
    if psi0.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: psi0.dim(),
        });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState("initial state is not unit norm".into()));
    }
    let space = SectorSpace::build(spec)?;
    let occupied = space.occupied_sectors(&psi0.amps);
    let n_steps = grid.n_steps();
    let mut snapshots = 0;

    if occupied.len() == 1 {
        let n = occupied[0];
        let sec = &space.sectors[n];
        let hs = sector_hamiltonian(spec, &space, n)?;
        check_step_size(grid.dt, hs.infinity_norm())?;
        let sdim = sec.dim();
        let mut y: Vec<C64> = sec
            .states
            .iter()
            .map(|&x| psi0.amps[x as usize])
            .collect();
        let mut k = vec![C64::new(0.0, 0.0); sdim];
        let mut tmp = k.clone();
        let mut acc = k.clone();
        let mut apply = |out: &mut [C64], input: &[C64]| {
            hs.mul_vec_into(input, out);
            for v in out.iter_mut() {
                *v = mul_neg_i(*v);
            }
        };
        let mut full = PureState::zeros(dim);
        let emit = |step: usize,
                    t: f64,
                    y: &[C64],
                    full: &mut PureState,
                    observe: &mut F|
         -> Result<()> {
            for a in full.amps.iter_mut() {
                *a = C64::new(0.0, 0.0);
            }
            for (pos, &x) in sec.states.iter().enumerate() {
                full.amps[x as usize] = y[pos];
            }
            if (full.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidState(format!(
                    "norm drifted to {} at t = {t}",
                    full.norm()
                )));
            }
            observe(step, t, full)
        };
        emit(0, 0.0, &y, &mut full, &mut observe)?;
        snapshots += 1;
        for step in 1..=n_steps {
            kernels::rk4_step(&mut apply, &mut y, grid.dt, &mut k, &mut tmp, &mut acc);
            if grid.is_save_step(step) {
                emit(step, grid.time_at(step), &y, &mut full, &mut observe)?;
                snapshots += 1;
            }
        }
    } else {
        let closed = LatticeSpec {
            loss_rate: 0.0,
            dephasing_rate: 0.0,
            ..spec.clone()
        };
        let kernel = ChainKernel::build(&closed)?;
        check_step_size(grid.dt, kernel.hamiltonian_norm_bound())?;
        let mut psi = psi0.clone();
        let mut k = vec![C64::new(0.0, 0.0); dim];
        let mut tmp = k.clone();
        let mut acc = k.clone();
        let mut apply = |out: &mut [C64], input: &[C64]| {
            kernel.apply_hamiltonian(out, input);
            for v in out.iter_mut() {
                *v = mul_neg_i(*v);
            }
        };
        observe(0, 0.0, &psi)?;
        snapshots += 1;
        for step in 1..=n_steps {
            kernels::rk4_step(&mut apply, &mut psi.amps, grid.dt, &mut k, &mut tmp, &mut acc);
            if grid.is_save_step(step) {
                let t = grid.time_at(step);
                if (psi.norm() - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidState(format!(
                        "norm drifted to {} at t = {t}",
                        psi.norm()
                    )));
                }
                observe(step, t, &psi)?;
                snapshots += 1;
            }
        }
    }
    Ok(RunStats {
        steps: n_steps,
        snapshots,
    })
}
