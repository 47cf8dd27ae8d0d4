//! Python bindings for the core chain simulator: lattice setup, state
//! preparation, the propagation protocols, pair RDMs, negativity, and the
//! SU(3) moment tomography.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mottsim::analysis;
use mottsim::dynamics;
use mottsim::entanglement;
use mottsim::hilbert;
use mottsim::states;

fn err(e: mottsim::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_excitation(s: &str) -> PyResult<states::Excitation> {
    match s {
        "doublon" => Ok(states::Excitation::Doublon),
        "holon" => Ok(states::Excitation::Holon),
        _ => Err(PyValueError::new_err("protocol must be 'doublon' or 'holon'")),
    }
}

/// Chain geometry and physical parameters (energies in units of your
/// choosing; the CLI convention is J = 1).
#[pyclass(name = "LatticeSpec")]
#[derive(Clone)]
struct PyLatticeSpec {
    inner: hilbert::LatticeSpec,
}

#[pymethods]
impl PyLatticeSpec {
    #[new]
    #[pyo3(signature = (sites, cutoff=3, omega_c=0.0, interaction=0.0, hopping=1.0, loss_rate=0.0, dephasing_rate=0.0))]
    fn new(
        sites: usize,
        cutoff: usize,
        omega_c: f64,
        interaction: f64,
        hopping: f64,
        loss_rate: f64,
        dephasing_rate: f64,
    ) -> PyResult<Self> {
        let inner = hilbert::LatticeSpec {
            sites,
            cutoff,
            cavity_freq: omega_c,
            interaction,
            hopping,
            loss_rate,
            dephasing_rate,
        };
        inner.validate().map_err(err)?;
        Ok(PyLatticeSpec { inner })
    }

    #[getter]
    fn sites(&self) -> usize {
        self.inner.sites
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff
    }

    #[getter]
    fn interaction(&self) -> f64 {
        self.inner.interaction
    }

    #[getter]
    fn hopping(&self) -> f64 {
        self.inner.hopping
    }

    #[getter]
    fn loss_rate(&self) -> f64 {
        self.inner.loss_rate
    }

    #[getter]
    fn dephasing_rate(&self) -> f64 {
        self.inner.dephasing_rate
    }

    fn dim(&self) -> PyResult<usize> {
        self.inner.dim().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "LatticeSpec(sites={}, cutoff={}, interaction={}, hopping={}, loss_rate={}, dephasing_rate={})",
            self.inner.sites,
            self.inner.cutoff,
            self.inner.interaction,
            self.inner.hopping,
            self.inner.loss_rate,
            self.inner.dephasing_rate
        )
    }
}

/// Uniform integration grid.
#[pyclass(name = "TimeGrid")]
#[derive(Clone)]
struct PyTimeGrid {
    inner: dynamics::TimeGrid,
}

#[pymethods]
impl PyTimeGrid {
    #[new]
    fn new(t_max: f64, dt: f64, save_stride: usize) -> PyResult<Self> {
        Ok(PyTimeGrid {
            inner: dynamics::TimeGrid::new(t_max, dt, save_stride).map_err(err)?,
        })
    }

    /// Grid with the default step 0.02 / max(U, 4J, γ, 2Γ_d).
    #[staticmethod]
    fn with_default_dt(t_max: f64, spec: &PyLatticeSpec, save_stride: usize) -> PyResult<Self> {
        Ok(PyTimeGrid {
            inner: dynamics::TimeGrid::with_default_dt(t_max, &spec.inner, save_stride)
                .map_err(err)?,
        })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max
    }

    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }
}

/// State vector over the chain.
#[pyclass(name = "PureState")]
#[derive(Clone)]
struct PyPureState {
    inner: dynamics::PureState,
}

#[pymethods]
impl PyPureState {
    /// Unit-filled Mott product state |11...1⟩.
    #[staticmethod]
    fn mott(spec: &PyLatticeSpec) -> PyResult<Self> {
        Ok(PyPureState {
            inner: states::mott_state(&spec.inner).map_err(err)?,
        })
    }

    /// Mott state with one excitation injected at `site`.
    #[staticmethod]
    fn excited(spec: &PyLatticeSpec, site: usize, target: &str) -> PyResult<Self> {
        Ok(PyPureState {
            inner: states::ideal_excited_state(&spec.inner, site, parse_excitation(target)?)
                .map_err(err)?,
        })
    }

    /// Normalized state from (re, im) amplitude pairs.
    #[staticmethod]
    fn from_amplitudes(amplitudes: Vec<(f64, f64)>) -> Self {
        let amps = amplitudes
            .into_iter()
            .map(|(re, im)| num_complex::Complex64::new(re, im))
            .collect();
        PyPureState {
            inner: dynamics::PureState::from_amplitudes(amps).normalized(),
        }
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn amplitudes(&self) -> Vec<(f64, f64)> {
        self.inner.amplitudes().iter().map(|z| (z.re, z.im)).collect()
    }

    /// Reduced density matrix of the pair (a, b).
    fn pair_rdm(&self, spec: &PyLatticeSpec, a: usize, b: usize) -> PyResult<PyTwoSiteRdm> {
        let rdm = entanglement::partial_trace_pair(
            entanglement::StateRef::Pure(&self.inner),
            &spec.inner,
            a,
            b,
        )
        .map_err(err)?;
        Ok(PyTwoSiteRdm { inner: rdm })
    }

    /// All 81 pair moments ⟨Λ^(i) ⊗ Λ^(j)⟩ (cutoff 3 only).
    fn pair_moments(&self, spec: &PyLatticeSpec, a: usize, b: usize) -> PyResult<Vec<Vec<f64>>> {
        let table = entanglement::measure_moments(
            entanglement::StateRef::Pure(&self.inner),
            &spec.inner,
            a,
            b,
        )
        .map_err(err)?;
        Ok(table.values.iter().map(|row| row.to_vec()).collect())
    }
}

/// Two-site reduced density matrix (9×9 at the default cutoff).
#[pyclass(name = "TwoSiteRdm")]
#[derive(Clone)]
struct PyTwoSiteRdm {
    inner: entanglement::TwoSiteRDM,
}

#[pymethods]
impl PyTwoSiteRdm {
    #[getter]
    fn site_a(&self) -> usize {
        self.inner.site_a
    }

    #[getter]
    fn site_b(&self) -> usize {
        self.inner.site_b
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Row-major matrix as (re, im) pairs.
    fn data(&self) -> Vec<Vec<(f64, f64)>> {
        let dim = self.inner.dim();
        (0..dim)
            .map(|r| {
                (0..dim)
                    .map(|c| {
                        let z = self.inner.entry(r, c);
                        (z.re, z.im)
                    })
                    .collect()
            })
            .collect()
    }

    fn trace(&self) -> (f64, f64) {
        let z = self.inner.trace();
        (z.re, z.im)
    }

    fn negativity(&self) -> f64 {
        entanglement::negativity(&self.inner)
    }

    /// Eigenvalues in ascending order.
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigen().0
    }
}

/// Rebuild the pair state from a 9×9 moment table (the tomography route).
#[pyfunction]
fn tomography_reconstruct(
    moments: Vec<Vec<f64>>,
    site_a: usize,
    site_b: usize,
) -> PyResult<PyTwoSiteRdm> {
    if moments.len() != 9 || moments.iter().any(|row| row.len() != 9) {
        return Err(PyValueError::new_err("moments must be a 9x9 table"));
    }
    let mut values = [[0.0; 9]; 9];
    for (i, row) in moments.iter().enumerate() {
        values[i].copy_from_slice(row);
    }
    let table = entanglement::MomentTable {
        site_a,
        site_b,
        values,
    };
    Ok(PyTwoSiteRdm {
        inner: entanglement::tomography_reconstruct(&table),
    })
}

/// The nine SU(3) generators as 3×3 matrices of (re, im) pairs.
#[pyfunction]
fn generator_basis() -> Vec<Vec<Vec<(f64, f64)>>> {
    let basis = entanglement::generator_basis();
    (0..9)
        .map(|i| {
            let m = basis.matrix(i);
            (0..3)
                .map(|r| (0..3).map(|c| (m[r * 3 + c].re, m[r * 3 + c].im)).collect())
                .collect()
        })
        .collect()
}

/// Maximal doublon group velocity 4J(1 - 4J²/U²).
#[pyfunction]
fn v_max_doublon(interaction: f64, hopping: f64) -> PyResult<f64> {
    analysis::v_max_doublon(interaction, hopping).map_err(err)
}

/// Maximal holon group velocity 2J(1 + 17J²/(2U²)).
#[pyfunction]
fn v_max_holon(interaction: f64, hopping: f64) -> PyResult<f64> {
    analysis::v_max_holon(interaction, hopping).map_err(err)
}

fn parse_solver(solver: &str, n_traj: usize, master_seed: u64) -> PyResult<analysis::SolverChoice> {
    match solver {
        "exact" => Ok(analysis::SolverChoice::Exact),
        "pure" => Ok(analysis::SolverChoice::Pure),
        "trajectory" => Ok(analysis::SolverChoice::Trajectory {
            n_traj,
            master_seed,
        }),
        _ => Err(PyValueError::new_err(
            "solver must be 'exact', 'pure' or 'trajectory'",
        )),
    }
}

/// Run the central-injection protocol and return traces, peaks and the
/// fitted speed as a dict.
#[pyfunction]
#[pyo3(signature = (protocol, spec, solver, r_list, grid, n_traj=1000, master_seed=1))]
fn propagation_experiment(
    py: Python<'_>,
    protocol: &str,
    spec: &PyLatticeSpec,
    solver: &str,
    r_list: Vec<usize>,
    grid: &PyTimeGrid,
    n_traj: usize,
    master_seed: u64,
) -> PyResult<Py<PyDict>> {
    let result = analysis::propagation_experiment(
        parse_excitation(protocol)?,
        &spec.inner,
        &parse_solver(solver, n_traj, master_seed)?,
        &r_list,
        &grid.inner,
        false,
    )
    .map_err(err)?;
    let out = PyDict::new_bound(py);
    let traces = PyDict::new_bound(py);
    for trace in &result.traces {
        traces.set_item(trace.r, trace.samples.clone())?;
    }
    out.set_item("traces", traces)?;
    let peaks = PyDict::new_bound(py);
    for (r, outcome) in &result.peaks {
        let entry = PyDict::new_bound(py);
        match outcome.peak() {
            Some(p) => {
                entry.set_item("found", true)?;
                entry.set_item("t_peak", p.t_peak)?;
                entry.set_item("n_peak", p.n_peak)?;
                entry.set_item("revival_flagged", p.revival_flagged)?;
            }
            None => {
                entry.set_item("found", false)?;
                entry.set_item("max_seen", outcome.height())?;
            }
        }
        peaks.set_item(r, entry)?;
    }
    out.set_item("peaks", peaks)?;
    match &result.speed {
        Some(s) => {
            let speed = PyDict::new_bound(py);
            speed.set_item("speed", s.speed)?;
            speed.set_item("uncertainty", s.uncertainty)?;
            speed.set_item("r_values", s.r_values.clone())?;
            out.set_item("speed", speed)?;
        }
        None => out.set_item("speed", py.None())?,
    }
    out.set_item("steps", result.stats.steps)?;
    out.set_item("loss_jumps", result.loss_jumps)?;
    Ok(out.into())
}

#[pymodule]
fn mottsim_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLatticeSpec>()?;
    m.add_class::<PyTimeGrid>()?;
    m.add_class::<PyPureState>()?;
    m.add_class::<PyTwoSiteRdm>()?;
    m.add_function(wrap_pyfunction!(tomography_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(generator_basis, m)?)?;
    m.add_function(wrap_pyfunction!(v_max_doublon, m)?)?;
    m.add_function(wrap_pyfunction!(v_max_holon, m)?)?;
    m.add_function(wrap_pyfunction!(propagation_experiment, m)?)?;
    Ok(())
}
