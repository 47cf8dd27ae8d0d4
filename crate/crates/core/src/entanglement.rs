//! Two-site reduced density matrices, partial transpose, entanglement
//! negativity, and the SU(3)⊗SU(3) moment tomography that reconstructs the
//! pair state from photon-field moments up to third order.
//!
//! Pair basis convention: subsystem A is the first named site and the left
//! tensor factor, so |n_a, n_b⟩ has row index n_a·d + n_b.

use num_complex::Complex64 as C64;
use std::sync::OnceLock;

use crate::dynamics::{DensityMatrix, PureState};
use crate::error::{Error, Result};
use crate::hilbert::{embed, LatticeSpec, SparseOperator};

/// Partial-transpose eigenvalues inside (-NEGATIVITY_FLOOR, 0) are treated
/// as zero so eigensolver noise cannot masquerade as entanglement.
pub const NEGATIVITY_FLOOR: f64 = 1e-12;

/// Reduced density matrix of a site pair (d² × d², column-major).
#[derive(Clone, Debug)]
pub struct TwoSiteRDM {
    pub site_a: usize,
    pub site_b: usize,
    local_dim: usize,
    data: Vec<C64>,
}

impl TwoSiteRDM {
    pub fn new(site_a: usize, site_b: usize, local_dim: usize, data: Vec<C64>) -> Result<Self> {
        let dim = local_dim * local_dim;
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(TwoSiteRDM {
            site_a,
            site_b,
            local_dim,
            data,
        })
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// Matrix dimension d².
    pub fn dim(&self) -> usize {
        self.local_dim * self.local_dim
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.data[row + col * self.dim()]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        let dim = self.dim();
        (0..dim).map(|k| self.data[k + k * dim]).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut err: f64 = 0.0;
        for c in 0..dim {
            for r in 0..=c {
                err = err.max((self.entry(r, c) - self.entry(c, r).conj()).norm());
            }
        }
        err
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<C64> {
        let dim = self.dim();
        nalgebra::DMatrix::from_fn(dim, dim, |r, c| self.entry(r, c))
    }

    /// Eigenvalues (ascending) and matching eigenvectors in the columns;
    /// exposed so the dominant entangled component of a peak can be
    /// inspected directly.
    pub fn eigen(&self) -> (Vec<f64>, nalgebra::DMatrix<C64>) {
        let eig = nalgebra::SymmetricEigen::new(self.to_nalgebra());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let dim = self.dim();
        let vectors = nalgebra::DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0[0]
    }

    /// Hermiticity within 1e-10, unit trace within 1e-10, eigenvalues above
    /// -1e-8.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(1e-10, -1e-8)
    }

    pub fn validate_with(&self, trace_tol: f64, eigen_floor: f64) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::InvalidState(format!(
                "pair ({}, {}) RDM trace {} is not 1",
                self.site_a, self.site_b, tr
            )));
        }
        if self.hermiticity_error() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "pair ({}, {}) RDM is not Hermitian",
                self.site_a, self.site_b
            )));
        }
        let min = self.min_eigenvalue();
        if min < eigen_floor {
            return Err(Error::InvalidState(format!(
                "pair ({}, {}) RDM has eigenvalue {min:.3e}",
                self.site_a, self.site_b
            )));
        }
        Ok(())
    }

    /// Row-major complex-pair export, the interchange format for external
    /// verification.
    pub fn to_json(&self, time: Option<f64>) -> serde_json::Value {
        let dim = self.dim();
        let rows: Vec<Vec<[f64; 2]>> = (0..dim)
            .map(|r| (0..dim).map(|c| [self.entry(r, c).re, self.entry(r, c).im]).collect())
            .collect();
        let mut obj = serde_json::json!({
            "site_a": self.site_a,
            "site_b": self.site_b,
            "local_dim": self.local_dim,
            "data": rows,
        });
        if let Some(t) = time {
            obj["time"] = serde_json::json!(t);
        }
        obj
    }
}

/// A state the pair RDM can be extracted from.
#[derive(Copy, Clone)]
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Dense(&'a DensityMatrix),
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(psi: &'a PureState) -> Self {
        StateRef::Pure(psi)
    }
}

impl<'a> From<&'a DensityMatrix> for StateRef<'a> {
    fn from(rho: &'a DensityMatrix) -> Self {
        StateRef::Dense(rho)
    }
}

/// Walk every environment configuration (all sites except `skip`), calling
/// `f` with the partial basis index contributed by the environment digits.
fn for_each_env(spec: &LatticeSpec, skip: (usize, usize), mut f: impl FnMut(usize)) {
    let env_sites: Vec<usize> = (0..spec.sites)
        .filter(|&s| s != skip.0 && s != skip.1)
        .collect();
    if env_sites.is_empty() {
        f(0);
        return;
    }
    let strides: Vec<usize> = env_sites.iter().map(|&s| spec.stride(s)).collect();
    let d = spec.cutoff;
    let mut digits = vec![0usize; env_sites.len()];
    let mut base = 0usize;
    loop {
        f(base);
        let mut k = env_sites.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            digits[k] += 1;
            base += strides[k];
            if digits[k] < d {
                break;
            }
            base -= d * strides[k];
            digits[k] = 0;
        }
    }
}

fn check_pair(spec: &LatticeSpec, a: usize, b: usize) -> Result<()> {
    if a == b {
        return Err(Error::invalid_arg("pair sites must differ"));
    }
    if a >= spec.sites || b >= spec.sites {
        return Err(Error::invalid_arg(format!(
            "pair ({a}, {b}) out of range for {} sites",
            spec.sites
        )));
    }
    Ok(())
}

/// Trace out everything except sites `a` and `b`.
pub fn partial_trace_pair(
    state: StateRef<'_>,
    spec: &LatticeSpec,
    a: usize,
    b: usize,
) -> Result<TwoSiteRDM> {
    spec.validate()?;
    check_pair(spec, a, b)?;
    let full_dim = spec.dim()?;
    let d = spec.cutoff;
    let dim = d * d;
    let sa = spec.stride(a);
    let sb = spec.stride(b);
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    match state {
        StateRef::Pure(psi) => {
            if psi.dim() != full_dim {
                return Err(Error::DimensionMismatch {
                    expected: full_dim,
                    got: psi.dim(),
                });
            }
            let amps = psi.amplitudes();
            let mut v = vec![C64::new(0.0, 0.0); dim];
            for_each_env(spec, (a, b), |base| {
                for ia in 0..d {
                    for ib in 0..d {
                        v[ia * d + ib] = amps[base + ia * sa + ib * sb];
                    }
                }
                for col in 0..dim {
                    let vc = v[col].conj();
                    if vc == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let dst = col * dim;
                    for row in 0..dim {
                        out[dst + row] += v[row] * vc;
                    }
                }
            });
        }
        StateRef::Dense(rho) => {
            if rho.dim() != full_dim {
                return Err(Error::DimensionMismatch {
                    expected: full_dim,
                    got: rho.dim(),
                });
            }
            for_each_env(spec, (a, b), |base| {
                for ja in 0..d {
                    for jb in 0..d {
                        let col = ja * d + jb;
                        let gcol = base + ja * sa + jb * sb;
                        for ia in 0..d {
                            for ib in 0..d {
                                out[ia * d + ib + col * dim] +=
                                    rho.entry(base + ia * sa + ib * sb, gcol);
                            }
                        }
                    }
                }
            });
        }
    }
    TwoSiteRDM::new(a, b, d, out)
}

/// Single-site reduced density matrix (d × d, column-major).
pub fn single_site_rdm(state: StateRef<'_>, spec: &LatticeSpec, site: usize) -> Result<Vec<C64>> {
    spec.validate()?;
    if site >= spec.sites {
        return Err(Error::invalid_arg(format!(
            "site {site} out of range for {} sites",
            spec.sites
        )));
    }
    let d = spec.cutoff;
    let stride = spec.stride(site);
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    // reuse the pair walker with a phantom second site
    let other_dim = spec.dim()? / d;
    match state {
        StateRef::Pure(psi) => {
            let amps = psi.amplitudes();
            for env in 0..other_dim {
                // env enumerated by skipping the digit at `site`
                let upper = env / stride;
                let lower = env % stride;
                let base = upper * stride * d + lower;
                for col in 0..d {
                    let vc = amps[base + col * stride].conj();
                    if vc == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for row in 0..d {
                        out[row + col * d] += amps[base + row * stride] * vc;
                    }
                }
            }
        }
        StateRef::Dense(rho) => {
            for env in 0..other_dim {
                let upper = env / stride;
                let lower = env % stride;
                let base = upper * stride * d + lower;
                for col in 0..d {
                    for row in 0..d {
                        out[row + col * d] +=
                            rho.entry(base + row * stride, base + col * stride);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Which pair factor a partial transpose acts on.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Partial transpose of a pair RDM; Hermitian but in general not positive.
pub fn partial_transpose(rdm: &TwoSiteRDM, subsystem: Subsystem) -> nalgebra::DMatrix<C64> {
    let d = rdm.local_dim();
    let dim = rdm.dim();
    nalgebra::DMatrix::from_fn(dim, dim, |row, col| {
        let (ra, rb) = (row / d, row % d);
        let (ca, cb) = (col / d, col % d);
        match subsystem {
            Subsystem::A => rdm.entry(ca * d + rb, ra * d + cb),
            Subsystem::B => rdm.entry(ra * d + cb, ca * d + rb),
        }
    })
}

/// Entanglement negativity: Σ|λ| over the negative eigenvalues of the
/// partial transpose, with eigenvalues above -`floor` treated as zero.
pub fn negativity_with_floor(rdm: &TwoSiteRDM, floor: f64) -> f64 {
    let pt = partial_transpose(rdm, Subsystem::A);
    let eig = nalgebra::SymmetricEigen::new(pt);
    eig.eigenvalues
        .iter()
        .filter(|&&v| v < -floor)
        .map(|v| -v)
        .sum()
}

pub fn negativity(rdm: &TwoSiteRDM) -> f64 {
    negativity_with_floor(rdm, NEGATIVITY_FLOOR)
}

// --- SU(3) generator basis and moment tomography (cutoff 3 only) ---

/// Dense 3×3 complex matrix, row-major.
pub type Mat3 = [C64; 9];

fn mat3_zero() -> Mat3 {
    [C64::new(0.0, 0.0); 9]
}

fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = mat3_zero();
    for r in 0..3 {
        for k in 0..3 {
            let v = a[r * 3 + k];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..3 {
                out[r * 3 + c] += v * b[k * 3 + c];
            }
        }
    }
    out
}

fn mat3_addscale(acc: &mut Mat3, factor: C64, m: &Mat3) {
    for (a, v) in acc.iter_mut().zip(m) {
        *a += factor * v;
    }
}

#[cfg(test)]
fn mat3_trace_product(a: &Mat3, b: &Mat3) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..3 {
        for k in 0..3 {
            acc += a[r * 3 + k] * b[k * 3 + r];
        }
    }
    acc
}

/// The nine Hermitian generators: identity plus the eight traceless SU(3)
/// generators, pairwise trace-orthogonal.
///
/// Λ^(8) is diag(1, 1, -2)/√3; this is the unique traceless choice that is
/// orthogonal to both Λ^(0) and Λ^(3) and it equals the bosonic form
/// (bb† - b†b)/√3 on the truncated space, so the expansion below is exact.
pub struct GeneratorBasis {
    mats: [Mat3; 9],
}

impl GeneratorBasis {
    pub fn matrices(&self) -> &[Mat3; 9] {
        &self.mats
    }

    pub fn matrix(&self, i: usize) -> &Mat3 {
        &self.mats[i]
    }

    /// tr(Λ^(i)²); 3 for the identity, 2 for the rest.
    pub fn norm_sq(&self, i: usize) -> f64 {
        if i == 0 {
            3.0
        } else {
            2.0
        }
    }

    pub fn as_sparse(&self, i: usize) -> SparseOperator {
        SparseOperator::from_dense(3, &self.mats[i]).expect("3x3 generator")
    }
}

pub fn generator_basis() -> &'static GeneratorBasis {
    static BASIS: OnceLock<GeneratorBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let o = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let s3 = 1.0 / 3f64.sqrt();
        let mats: [Mat3; 9] = [
            [one, o, o, o, one, o, o, o, one],
            [o, one, o, one, o, o, o, o, o],
            [o, -i, o, i, o, o, o, o, o],
            [one, o, o, o, -one, o, o, o, o],
            [o, o, one, o, o, o, one, o, o],
            [o, o, -i, o, o, o, i, o, o],
            [o, o, o, o, o, one, o, one, o],
            [o, o, o, o, o, -i, o, i, o],
            [
                C64::new(s3, 0.0),
                o,
                o,
                o,
                C64::new(s3, 0.0),
                o,
                o,
                o,
                C64::new(-2.0 * s3, 0.0),
            ],
        ];
        GeneratorBasis { mats }
    })
}

/// The generators rebuilt from polynomials in the truncated ladder
/// operators, photon-field moments up to third order. Equal to
/// `generator_basis()` entry for entry; this is the measurability statement
/// behind the tomography.
pub fn bosonic_generator_forms() -> [Mat3; 9] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let s2 = 2f64.sqrt();
    // truncated b: ⟨n-1|b|n⟩ = √n
    let mut b = mat3_zero();
    b[0 * 3 + 1] = one;
    b[1 * 3 + 2] = C64::new(s2, 0.0);
    let mut bd = mat3_zero();
    for r in 0..3 {
        for c in 0..3 {
            bd[r * 3 + c] = b[c * 3 + r].conj();
        }
    }
    let bb = mat3_mul(&b, &b);
    let bdbd = mat3_mul(&bd, &bd);
    let b_bdbd = mat3_mul(&b, &bdbd); // b b†²
    let bb_bd = mat3_mul(&bb, &bd); // b² b†
    let bdbd_b = mat3_mul(&bdbd, &b); // b†² b
    let bd_bb = mat3_mul(&bd, &bb); // b† b²
    let bb_bdbd = mat3_mul(&bb, &bdbd); // b² b†²
    let b_bd = mat3_mul(&b, &bd);
    let bd_b = mat3_mul(&bd, &b);

    let mut out = [mat3_zero(); 9];
    out[0] = [one, o, o, o, one, o, o, o, one];
    mat3_addscale(&mut out[1], C64::new(0.5, 0.0), &b_bdbd);
    mat3_addscale(&mut out[1], C64::new(0.5, 0.0), &bb_bd);
    mat3_addscale(&mut out[2], 0.5 * i, &b_bdbd);
    mat3_addscale(&mut out[2], -0.5 * i, &bb_bd);
    mat3_addscale(&mut out[3], C64::new(0.75, 0.0), &bb_bdbd);
    mat3_addscale(&mut out[3], C64::new(-0.5, 0.0), &b_bd);
    mat3_addscale(&mut out[4], C64::new(1.0 / s2, 0.0), &bdbd);
    mat3_addscale(&mut out[4], C64::new(1.0 / s2, 0.0), &bb);
    mat3_addscale(&mut out[5], i / s2, &bdbd);
    mat3_addscale(&mut out[5], -i / s2, &bb);
    mat3_addscale(&mut out[6], C64::new(1.0 / s2, 0.0), &bdbd_b);
    mat3_addscale(&mut out[6], C64::new(1.0 / s2, 0.0), &bd_bb);
    mat3_addscale(&mut out[7], i / s2, &bdbd_b);
    mat3_addscale(&mut out[7], -i / s2, &bd_bb);
    mat3_addscale(&mut out[8], C64::new(1.0 / 3f64.sqrt(), 0.0), &b_bd);
    mat3_addscale(&mut out[8], C64::new(-1.0 / 3f64.sqrt(), 0.0), &bd_b);
    out
}

/// The 81 pair expectation values ⟨Λ^(i) ⊗ Λ^(j)⟩.
#[derive(Clone, Debug)]
pub struct MomentTable {
    pub site_a: usize,
    pub site_b: usize,
    pub values: [[f64; 9]; 9],
}

/// Precomputed embedded generator products for one site pair, so a time
/// series of moment measurements does not rebuild 81 chain operators per
/// snapshot.
pub struct PairMomentOps {
    site_a: usize,
    site_b: usize,
    ops: Vec<SparseOperator>,
}

impl PairMomentOps {
    pub fn build(spec: &LatticeSpec, a: usize, b: usize) -> Result<Self> {
        spec.validate()?;
        check_pair(spec, a, b)?;
        if spec.cutoff != 3 {
            return Err(Error::invalid_arg(
                "moment tomography requires cutoff 3 (SU(3) generator set)",
            ));
        }
        let basis = generator_basis();
        let mut ops = Vec::with_capacity(81);
        for i in 0..9 {
            let ea = embed(&basis.as_sparse(i), a, spec)?;
            for j in 0..9 {
                let eb = embed(&basis.as_sparse(j), b, spec)?;
                ops.push(ea.matmul(&eb)?);
            }
        }
        Ok(PairMomentOps {
            site_a: a,
            site_b: b,
            ops,
        })
    }

    /// Measure all 81 moments; expectation values of Hermitian observables,
    /// checked real within 1e-10.
    pub fn measure(&self, state: StateRef<'_>) -> Result<MomentTable> {
        let mut values = [[0.0; 9]; 9];
        for i in 0..9 {
            for j in 0..9 {
                let op = &self.ops[i * 9 + j];
                let z = match state {
                    StateRef::Pure(psi) => {
                        let amps = psi.amplitudes();
                        if op.dim() != amps.len() {
                            return Err(Error::DimensionMismatch {
                                expected: op.dim(),
                                got: amps.len(),
                            });
                        }
                        op.iter()
                            .map(|(r, c, v)| amps[r].conj() * v * amps[c])
                            .sum::<C64>()
                    }
                    StateRef::Dense(rho) => rho.expectation(op)?,
                };
                if z.im.abs() > 1e-10 {
                    return Err(Error::InvalidState(format!(
                        "moment ({i}, {j}) has imaginary part {:.3e}",
                        z.im
                    )));
                }
                values[i][j] = z.re;
            }
        }
        Ok(MomentTable {
            site_a: self.site_a,
            site_b: self.site_b,
            values,
        })
    }
}

/// One-shot moment measurement.
pub fn measure_moments(
    state: StateRef<'_>,
    spec: &LatticeSpec,
    a: usize,
    b: usize,
) -> Result<MomentTable> {
    PairMomentOps::build(spec, a, b)?.measure(state)
}

/// Rebuild the pair RDM from its moments:
///
///   ρ = Σ_{i,j} ⟨Λ^(i) ⊗ Λ^(j)⟩ / tr((Λ^(i) ⊗ Λ^(j))²) · Λ^(i) ⊗ Λ^(j),
///
/// exact for any state confined to the cutoff since the 81 products form a
/// trace-orthogonal basis of the Hermitian 9×9 matrices.
pub fn tomography_reconstruct(moments: &MomentTable) -> TwoSiteRDM {
    let basis = generator_basis();
    let mut data = vec![C64::new(0.0, 0.0); 81];
    for i in 0..9 {
        let mi = basis.matrix(i);
        for j in 0..9 {
            let mj = basis.matrix(j);
            let coeff = moments.values[i][j] / (basis.norm_sq(i) * basis.norm_sq(j));
            if coeff == 0.0 {
                continue;
            }
            for ra in 0..3 {
                for rb in 0..3 {
                    for ca in 0..3 {
                        for cb in 0..3 {
                            data[(ra * 3 + rb) + (ca * 3 + cb) * 9] +=
                                coeff * mi[ra * 3 + ca] * mj[rb * 3 + cb];
                        }
                    }
                }
            }
        }
    }
    TwoSiteRDM {
        site_a: moments.site_a,
        site_b: moments.site_b,
        local_dim: 3,
        data,
    }
}
