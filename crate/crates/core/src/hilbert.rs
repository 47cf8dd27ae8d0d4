//! Truncated many-body Hilbert space of the resonator chain: basis indexing,
//! local and embedded operators, the chain Hamiltonian, and jump operators.
//!
//! Basis convention (fixed; partial traces and tomography depend on it): a
//! product Fock state |n_0, n_1, ..., n_{L-1}⟩ maps to the integer index
//! Σ_i n_i d^{L-1-i}, i.e. site 0 is the leftmost site and the most
//! significant base-d digit.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest dimension for which dense density matrices are built (3^7).
pub const DENSE_DIM_CAP: usize = 2187;

/// Largest dimension for which dense state vectors are built (3^14).
pub const STATE_DIM_CAP: usize = 4_782_969;

/// Chain geometry and physical parameters.
///
/// Rates and energies are all expressed in the same unit system; the CLI
/// fixes the hopping as the unit of energy, but nothing here assumes that.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatticeSpec {
    /// Number of chain sites L.
    pub sites: usize,
    /// Local Fock-space dimension d (max photons per site + 1).
    pub cutoff: usize,
    /// Cavity mode frequency ω_c.
    pub cavity_freq: f64,
    /// On-site Kerr interaction U.
    pub interaction: f64,
    /// Nearest-neighbor hopping J.
    pub hopping: f64,
    /// Photon loss rate γ.
    pub loss_rate: f64,
    /// Pure dephasing rate Γ_d.
    pub dephasing_rate: f64,
}

impl LatticeSpec {
    /// Chain of `sites` resonators at the default cutoff of two photons per
    /// site, with unit hopping and everything else zero.
    pub fn chain(sites: usize) -> Self {
        LatticeSpec {
            sites,
            cutoff: 3,
            cavity_freq: 0.0,
            interaction: 0.0,
            hopping: 1.0,
            loss_rate: 0.0,
            dephasing_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 1 {
            return Err(Error::invalid_arg("chain must have at least one site"));
        }
        if self.cutoff < 2 {
            return Err(Error::invalid_arg("local cutoff must be at least 2"));
        }
        if self.hopping < 0.0 {
            return Err(Error::invalid_arg("hopping must be non-negative"));
        }
        if self.loss_rate < 0.0 || self.dephasing_rate < 0.0 {
            return Err(Error::invalid_arg("dissipation rates must be non-negative"));
        }
        if !(self.cavity_freq.is_finite()
            && self.interaction.is_finite()
            && self.hopping.is_finite()
            && self.loss_rate.is_finite()
            && self.dephasing_rate.is_finite())
        {
            return Err(Error::invalid_arg("parameters must be finite"));
        }
        self.dim()?;
        Ok(())
    }

    /// Full Hilbert-space dimension d^L, refusing to overflow the state cap.
    pub fn dim(&self) -> Result<usize> {
        let mut dim: usize = 1;
        for _ in 0..self.sites {
            dim = dim.checked_mul(self.cutoff).ok_or(Error::ResourceCap {
                what: "Hilbert space",
                dim: usize::MAX,
                cap_name: "state",
                cap: STATE_DIM_CAP,
            })?;
            if dim > STATE_DIM_CAP {
                return Err(Error::ResourceCap {
                    what: "Hilbert space",
                    dim,
                    cap_name: "state",
                    cap: STATE_DIM_CAP,
                });
            }
        }
        Ok(dim)
    }

    /// Index weight of `site`: d^{L-1-site}.
    pub fn stride(&self, site: usize) -> usize {
        self.cutoff.pow((self.sites - 1 - site) as u32)
    }

    /// Occupation of `site` in the basis state `index`.
    pub fn occupation(&self, index: usize, site: usize) -> usize {
        index / self.stride(site) % self.cutoff
    }

    /// Basis index of the product Fock state with the given occupations.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.sites {
            return Err(Error::DimensionMismatch {
                expected: self.sites,
                got: occupations.len(),
            });
        }
        let mut index = 0;
        for &n in occupations {
            if n >= self.cutoff {
                return Err(Error::invalid_arg(format!(
                    "occupation {n} at or above cutoff {}",
                    self.cutoff
                )));
            }
            index = index * self.cutoff + n;
        }
        Ok(index)
    }

    /// Decode a basis index into per-site occupations.
    pub fn occupations_of(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sites];
        let mut rest = index;
        for site in (0..self.sites).rev() {
            out[site] = rest % self.cutoff;
            rest /= self.cutoff;
        }
        out
    }

    /// Per-site occupation digits for every basis index, in one flat
    /// row-major table (`table[index * L + site]`). Used by the hot kernels.
    pub(crate) fn occupation_table(&self) -> Result<Vec<u8>> {
        let dim = self.dim()?;
        let l = self.sites;
        let d = self.cutoff as u8;
        let mut table = vec![0u8; dim * l];
        let mut digits = vec![0u8; l];
        for x in 0..dim {
            table[x * l..(x + 1) * l].copy_from_slice(&digits);
            // odometer increment, least-significant digit is the last site
            for site in (0..l).rev() {
                digits[site] += 1;
                if digits[site] < d {
                    break;
                }
                digits[site] = 0;
            }
        }
        Ok(table)
    }
}

/// Compressed sparse row complex matrix.
///
/// Only exact zeros are dropped: every stored value came from exact √n
/// arithmetic, so no magnitude-based filtering is applied.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<C64>,
}

impl SparseOperator {
    /// Build from (row, col, value) triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= dim || c >= dim {
                return Err(Error::invalid_arg(format!(
                    "triplet ({r}, {c}) outside dimension {dim}"
                )));
            }
        }
        let mut triplets = triplets;
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut row = 0;
        let mut it = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    it.next();
                } else {
                    break;
                }
            }
            while row < r {
                row_ptr.push(col_idx.len());
                row += 1;
            }
            if v != C64::new(0.0, 0.0) {
                col_idx.push(c as u32);
                values.push(v);
            }
        }
        while row < dim {
            row_ptr.push(col_idx.len());
            row += 1;
        }
        Ok(SparseOperator {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Internal: assemble from already row-sorted parts.
    pub(crate) fn from_parts(
        dim: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<C64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), dim + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        SparseOperator {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let row_ptr = (0..=dim).collect();
        let col_idx = (0..dim as u32).collect();
        let values = vec![C64::new(1.0, 0.0); dim];
        SparseOperator {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zero(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dim: usize, data: &[C64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        let mut triplets = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                let v = data[r * dim + c];
                if v != C64::new(0.0, 0.0) {
                    triplets.push((r, c, v));
                }
            }
        }
        SparseOperator::from_triplets(dim, triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&(col as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Iterate stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k] as usize, self.values[k]))
        })
    }

    pub(crate) fn row(&self, r: usize) -> (&[u32], &[C64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    pub fn add(&self, other: &SparseOperator) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let triplets = self.iter().chain(other.iter()).collect();
        SparseOperator::from_triplets(self.dim, triplets)
    }

    /// Add `values[i]` to each diagonal entry.
    pub fn add_diagonal(&self, diagonal: &[C64]) -> Result<Self> {
        if diagonal.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: diagonal.len(),
            });
        }
        let triplets = self
            .iter()
            .chain(diagonal.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .collect();
        SparseOperator::from_triplets(self.dim, triplets)
    }

    pub fn matmul(&self, other: &SparseOperator) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let dim = self.dim;
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); dim];
        let mut touched: Vec<u32> = Vec::new();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            let (cols_a, vals_a) = self.row(r);
            for (&ka, &va) in cols_a.iter().zip(vals_a) {
                let (cols_b, vals_b) = other.row(ka as usize);
                for (&cb, &vb) in cols_b.iter().zip(vals_b) {
                    let slot = &mut acc[cb as usize];
                    if *slot == C64::new(0.0, 0.0) {
                        touched.push(cb);
                    }
                    *slot += va * vb;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                let v = acc[c as usize];
                if v != C64::new(0.0, 0.0) {
                    col_idx.push(c);
                    values.push(v);
                }
                acc[c as usize] = C64::new(0.0, 0.0);
            }
            touched.clear();
            row_ptr.push(col_idx.len());
        }
        Ok(SparseOperator {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        SparseOperator::from_triplets(self.dim, triplets).expect("indices already validated")
    }

    /// Elementwise complex conjugate (no transpose).
    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = v.conj();
        }
        out
    }

    /// y = A x.
    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let (cols, vals) = self.row(r);
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            y[r] = acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Max row sum of absolute values; an upper bound on the spectral radius.
    pub fn infinity_norm(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).1.iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest |A - A†| entry.
    pub fn hermiticity_error(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.entry(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry of AB - BA.
    pub fn commutator_norm(&self, other: &SparseOperator) -> Result<f64> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        let mut err: f64 = 0.0;
        for (r, c, v) in ab.iter() {
            err = err.max((v - ba.entry(r, c)).norm());
        }
        for (r, c, v) in ba.iter() {
            err = err.max((v - ab.entry(r, c)).norm());
        }
        Ok(err)
    }

    pub fn to_dense(&self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim * self.dim];
        for (r, c, v) in self.iter() {
            out[r * self.dim + c] = v;
        }
        out
    }
}

/// Truncated annihilation operator: ⟨n-1| b |n⟩ = √n for n < cutoff.
pub fn local_annihilation(cutoff: usize) -> Result<SparseOperator> {
    if cutoff < 2 {
        return Err(Error::invalid_arg("cutoff must be at least 2"));
    }
    let triplets = (1..cutoff)
        .map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0)))
        .collect();
    SparseOperator::from_triplets(cutoff, triplets)
}

/// Truncated creation operator b†.
pub fn local_creation(cutoff: usize) -> Result<SparseOperator> {
    Ok(local_annihilation(cutoff)?.adjoint())
}

/// Number operator diag(0, 1, ..., cutoff-1).
pub fn local_number(cutoff: usize) -> Result<SparseOperator> {
    if cutoff < 2 {
        return Err(Error::invalid_arg("cutoff must be at least 2"));
    }
    let triplets = (1..cutoff)
        .map(|n| (n, n, C64::new(n as f64, 0.0)))
        .collect();
    SparseOperator::from_triplets(cutoff, triplets)
}

/// Lift a single-site operator to the chain: identity on every other site.
pub fn embed(site_op: &SparseOperator, site: usize, spec: &LatticeSpec) -> Result<SparseOperator> {
    spec.validate()?;
    if site >= spec.sites {
        return Err(Error::invalid_arg(format!(
            "site {site} out of range for {} sites",
            spec.sites
        )));
    }
    if site_op.dim() != spec.cutoff {
        return Err(Error::DimensionMismatch {
            expected: spec.cutoff,
            got: site_op.dim(),
        });
    }
    let dim = spec.dim()?;
    let d = spec.cutoff;
    let inner = spec.stride(site);
    let outer = dim / (d * inner);
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::with_capacity(site_op.nnz() * outer * inner);
    let mut values = Vec::with_capacity(site_op.nnz() * outer * inner);
    row_ptr.push(0);
    for o in 0..outer {
        for j in 0..d {
            let (cols, vals) = site_op.row(j);
            for inner_idx in 0..inner {
                for (&k, &v) in cols.iter().zip(vals) {
                    let col = (o * d + k as usize) * inner + inner_idx;
                    col_idx.push(col as u32);
                    values.push(v);
                }
                row_ptr.push(col_idx.len());
            }
        }
    }
    Ok(SparseOperator::from_parts(dim, row_ptr, col_idx, values))
}

/// Chain Hamiltonian
///
///   H = Σ_i [ω_c n_i + (U/2) b†_i b†_i b_i b_i] - J Σ_i (b†_i b_{i+1} + h.c.)
///
/// with open boundary conditions. Hermitian, conserves total photon number.
pub fn build_hamiltonian(spec: &LatticeSpec) -> Result<SparseOperator> {
    spec.validate()?;
    let dim = spec.dim()?;
    let l = spec.sites;
    let d = spec.cutoff;
    let sqrt: Vec<f64> = (0..=d).map(|n| (n as f64).sqrt()).collect();
    let mut digits = vec![0usize; l];

    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx: Vec<u32> = Vec::new();
    let mut values: Vec<C64> = Vec::new();
    row_ptr.push(0);
    let mut row_buf: Vec<(usize, f64)> = Vec::with_capacity(2 * l);

    for x in 0..dim {
        row_buf.clear();
        let mut diag = 0.0;
        for &n in digits.iter() {
            diag += spec.cavity_freq * n as f64
                + 0.5 * spec.interaction * (n * n.saturating_sub(1)) as f64;
        }
        if diag != 0.0 {
            row_buf.push((x, diag));
        }
        if spec.hopping != 0.0 {
            for i in 0..l - 1 {
                let (ni, nj) = (digits[i], digits[i + 1]);
                // stride(i) - stride(i+1) = (d - 1) * stride(i+1)
                let delta = (d - 1) * spec.stride(i + 1);
                if ni < d - 1 && nj > 0 {
                    // b†_i b_{i+1}
                    row_buf.push((x + delta, -spec.hopping * sqrt[ni + 1] * sqrt[nj]));
                }
                if nj < d - 1 && ni > 0 {
                    // b†_{i+1} b_i
                    row_buf.push((x - delta, -spec.hopping * sqrt[nj + 1] * sqrt[ni]));
                }
            }
        }
        row_buf.sort_unstable_by_key(|&(c, _)| c);
        for &(c, v) in &row_buf {
            col_idx.push(c as u32);
            values.push(C64::new(v, 0.0));
        }
        row_ptr.push(col_idx.len());

        for site in (0..l).rev() {
            digits[site] += 1;
            if digits[site] < d {
                break;
            }
            digits[site] = 0;
        }
    }
    Ok(SparseOperator::from_parts(dim, row_ptr, col_idx, values))
}

/// Dissipation channel of a jump operator.
#[derive(Copy, Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Channel {
    /// Photon loss, J_i = √γ b_i.
    Loss,
    /// Pure dephasing, J_i = √(2Γ_d) n_i.
    Dephasing,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Loss => write!(f, "loss"),
            Channel::Dephasing => write!(f, "dephasing"),
        }
    }
}

/// A jump operator together with the site and channel it came from.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub channel: Channel,
    pub site: usize,
    pub op: SparseOperator,
}

/// All jump operators of the chain: one loss operator per site when γ > 0
/// and one dephasing operator per site when Γ_d > 0.
pub fn build_jump_operators(spec: &LatticeSpec) -> Result<Vec<JumpOperator>> {
    spec.validate()?;
    let mut ops = Vec::new();
    if spec.loss_rate > 0.0 {
        let b = local_annihilation(spec.cutoff)?;
        let amp = C64::new(spec.loss_rate.sqrt(), 0.0);
        for site in 0..spec.sites {
            ops.push(JumpOperator {
                channel: Channel::Loss,
                site,
                op: embed(&b, site, spec)?.scale(amp),
            });
        }
    }
    if spec.dephasing_rate > 0.0 {
        let n = local_number(spec.cutoff)?;
        let amp = C64::new((2.0 * spec.dephasing_rate).sqrt(), 0.0);
        for site in 0..spec.sites {
            ops.push(JumpOperator {
                channel: Channel::Dephasing,
                site,
                op: embed(&n, site, spec)?.scale(amp),
            });
        }
    }
    Ok(ops)
}

/// Total photon number operator N = Σ_i n_i.
pub fn total_number(spec: &LatticeSpec) -> Result<SparseOperator> {
    let dim = spec.dim()?;
    let l = spec.sites;
    let mut digits = vec![0usize; l];
    let mut triplets = Vec::with_capacity(dim);
    for x in 0..dim {
        let total: usize = digits.iter().sum();
        if total > 0 {
            triplets.push((x, x, C64::new(total as f64, 0.0)));
        }
        for site in (0..l).rev() {
            digits[site] += 1;
            if digits[site] < spec.cutoff {
                break;
            }
            digits[site] = 0;
        }
    }
    SparseOperator::from_triplets(dim, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn annihilation_cutoff_3() {
        let b = local_annihilation(3).unwrap();
        assert_eq!(b.nnz(), 2);
        assert_eq!(b.entry(0, 1), c(1.0));
        assert_eq!(b.entry(1, 2), c(2f64.sqrt()));
        assert!(local_annihilation(1).is_err());
    }

    #[test]
    fn number_from_ladder() {
        let b = local_annihilation(3).unwrap();
        let n = b.adjoint().matmul(&b).unwrap();
        let want = local_number(3).unwrap();
        for (d, w) in n.to_dense().iter().zip(want.to_dense()) {
            assert!((d - w).norm() < 1e-15);
        }
    }

    #[test]
    fn truncated_commutator() {
        // bb† - b†b = diag(1, 1, -2): the truncation artifact, not the
        // canonical commutation relation.
        let b = local_annihilation(3).unwrap();
        let bb = b.matmul(&b.adjoint()).unwrap();
        let nb = b.adjoint().matmul(&b).unwrap();
        let diff = bb.add(&nb.scale(c(-1.0))).unwrap();
        assert!((diff.entry(0, 0) - c(1.0)).norm() < 1e-15);
        assert!((diff.entry(1, 1) - c(1.0)).norm() < 1e-15);
        assert!((diff.entry(2, 2) - c(-2.0)).norm() < 1e-15);
        assert_eq!(diff.nnz(), 3);
    }

    #[test]
    fn truncated_commutator_general_cutoff() {
        for d in 2..=5 {
            let b = local_annihilation(d).unwrap();
            let diff = b
                .matmul(&b.adjoint())
                .unwrap()
                .add(&b.adjoint().matmul(&b).unwrap().scale(c(-1.0)))
                .unwrap();
            for k in 0..d - 1 {
                assert!((diff.entry(k, k) - c(1.0)).norm() < 1e-14);
            }
            assert!((diff.entry(d - 1, d - 1) - c(-((d - 1) as f64))).norm() < 1e-14);
        }
    }

    #[test]
    fn embed_single_site_is_identity_embedding() {
        let spec = LatticeSpec::chain(1);
        let b = local_annihilation(3).unwrap();
        let e = embed(&b, 0, &spec).unwrap();
        assert_eq!(e.to_dense(), b.to_dense());
    }

    #[test]
    fn embed_number_eigenvalue() {
        let spec = LatticeSpec::chain(2);
        let n1 = embed(&local_number(3).unwrap(), 1, &spec).unwrap();
        let idx = spec.index_of(&[1, 2]).unwrap();
        let mut v = vec![c(0.0); 9];
        v[idx] = c(1.0);
        let w = n1.mul_vec(&v);
        assert_eq!(w[idx], c(2.0));
        assert_eq!(w.iter().filter(|z| **z != c(0.0)).count(), 1);
    }

    #[test]
    fn embed_hop_matrix_element() {
        // embed(b, 0) · embed(b†, 1) maps |2,0⟩ to √2 |1,1⟩
        let spec = LatticeSpec::chain(2);
        let b = local_annihilation(3).unwrap();
        let m = embed(&b, 0, &spec)
            .unwrap()
            .matmul(&embed(&b.adjoint(), 1, &spec).unwrap())
            .unwrap();
        let from = spec.index_of(&[2, 0]).unwrap();
        let to = spec.index_of(&[1, 1]).unwrap();
        assert!((m.entry(to, from) - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn embed_out_of_range_site() {
        let spec = LatticeSpec::chain(2);
        let b = local_annihilation(3).unwrap();
        assert!(embed(&b, 2, &spec).is_err());
    }

    #[test]
    fn embed_is_multiplicative() {
        let spec = LatticeSpec::chain(3);
        let a = local_annihilation(3).unwrap();
        let b = local_number(3).unwrap().add(&a).unwrap();
        for site in 0..3 {
            let lhs = embed(&a.matmul(&b).unwrap(), site, &spec).unwrap();
            let rhs = embed(&a, site, &spec)
                .unwrap()
                .matmul(&embed(&b, site, &spec).unwrap())
                .unwrap();
            for (r, cx, v) in lhs.iter() {
                assert!((v - rhs.entry(r, cx)).norm() < 1e-15);
            }
            assert_eq!(lhs.nnz(), rhs.nnz());
        }
    }

    #[test]
    fn distinct_sites_commute() {
        let spec = LatticeSpec::chain(3);
        let a = embed(&local_annihilation(3).unwrap(), 0, &spec).unwrap();
        let b = embed(&local_creation(3).unwrap(), 2, &spec).unwrap();
        assert_eq!(a.commutator_norm(&b).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_single_site_doublon_energy() {
        let spec = LatticeSpec {
            cavity_freq: 0.7,
            interaction: 3.1,
            hopping: 0.0,
            ..LatticeSpec::chain(1)
        };
        let h = build_hamiltonian(&spec).unwrap();
        assert!((h.entry(2, 2) - c(2.0 * 0.7 + 3.1)).norm() < 1e-15);
        assert_eq!(h.entry(1, 1), c(0.7));
        assert_eq!(h.entry(0, 0), c(0.0));
    }

    #[test]
    fn hamiltonian_hop_matrix_element() {
        let spec = LatticeSpec::chain(2);
        let h = build_hamiltonian(&spec).unwrap();
        let from = spec.index_of(&[1, 1]).unwrap();
        let to = spec.index_of(&[2, 0]).unwrap();
        assert!((h.entry(to, from) - c(-2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_matches_embedded_operator_sum() {
        // Cross-check the direct construction against an independent build
        // from embedded ladder operators.
        let spec = LatticeSpec {
            cavity_freq: 0.3,
            interaction: 2.4,
            hopping: 0.9,
            ..LatticeSpec::chain(3)
        };
        let h = build_hamiltonian(&spec).unwrap();
        let dim = spec.dim().unwrap();
        let b = local_annihilation(3).unwrap();
        let n = local_number(3).unwrap();
        let mut alt = SparseOperator::zero(dim);
        for i in 0..3 {
            let ni = embed(&n, i, &spec).unwrap();
            alt = alt.add(&ni.scale(c(spec.cavity_freq))).unwrap();
            // b†b†bb = n(n-1)
            let kerr = ni
                .matmul(&ni.add(&SparseOperator::identity(dim).scale(c(-1.0))).unwrap())
                .unwrap();
            alt = alt.add(&kerr.scale(c(0.5 * spec.interaction))).unwrap();
        }
        for i in 0..2 {
            let hop = embed(&b.adjoint(), i, &spec)
                .unwrap()
                .matmul(&embed(&b, i + 1, &spec).unwrap())
                .unwrap();
            alt = alt.add(&hop.scale(c(-spec.hopping))).unwrap();
            alt = alt.add(&hop.adjoint().scale(c(-spec.hopping))).unwrap();
        }
        for (r, cx, v) in h.iter() {
            assert!((v - alt.entry(r, cx)).norm() < 1e-14);
        }
        assert_eq!(h.nnz(), alt.nnz());
    }

    #[test]
    fn hamiltonian_hermitian_and_conserves_number() {
        let spec = LatticeSpec {
            cavity_freq: 1.3,
            interaction: 17.0,
            hopping: 1.0,
            ..LatticeSpec::chain(3)
        };
        let h = build_hamiltonian(&spec).unwrap();
        assert_eq!(h.hermiticity_error(), 0.0);
        let n = total_number(&spec).unwrap();
        assert_eq!(h.commutator_norm(&n).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_dimension_cap() {
        let spec = LatticeSpec::chain(15);
        assert!(matches!(
            build_hamiltonian(&spec),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn jump_operators_empty_without_dissipation() {
        let spec = LatticeSpec::chain(2);
        assert!(build_jump_operators(&spec).unwrap().is_empty());
    }

    #[test]
    fn jump_operators_loss() {
        let spec = LatticeSpec {
            loss_rate: 0.1,
            ..LatticeSpec::chain(2)
        };
        let ops = build_jump_operators(&spec).unwrap();
        assert_eq!(ops.len(), 2);
        for (site, j) in ops.iter().enumerate() {
            assert_eq!(j.channel, Channel::Loss);
            assert_eq!(j.site, site);
            let want = embed(&local_annihilation(3).unwrap(), site, &spec)
                .unwrap()
                .scale(c(0.1f64.sqrt()));
            assert_eq!(j.op.to_dense(), want.to_dense());
        }
    }

    #[test]
    fn jump_operators_dephasing() {
        let spec = LatticeSpec {
            dephasing_rate: 0.2,
            ..LatticeSpec::chain(1)
        };
        let ops = build_jump_operators(&spec).unwrap();
        assert_eq!(ops.len(), 1);
        assert_eq!(ops[0].channel, Channel::Dephasing);
        let amp = 0.4f64.sqrt();
        assert_eq!(ops[0].op.entry(1, 1), c(amp));
        assert!((ops[0].op.entry(2, 2) - c(2.0 * amp)).norm() < 1e-15);
        assert_eq!(ops[0].op.entry(0, 0), c(0.0));
    }

    #[test]
    fn index_round_trip() {
        let spec = LatticeSpec::chain(4);
        for x in 0..spec.dim().unwrap() {
            let occ = spec.occupations_of(x);
            assert_eq!(spec.index_of(&occ).unwrap(), x);
            for (site, &n) in occ.iter().enumerate() {
                assert_eq!(spec.occupation(x, site), n);
            }
        }
    }

    #[test]
    fn occupation_table_matches_decode() {
        let spec = LatticeSpec::chain(3);
        let table = spec.occupation_table().unwrap();
        for x in 0..spec.dim().unwrap() {
            let occ = spec.occupations_of(x);
            for site in 0..3 {
                assert_eq!(table[x * 3 + site] as usize, occ[site]);
            }
        }
    }

    #[test]
    fn big_endian_ordering() {
        // site 0 is the most significant digit
        let spec = LatticeSpec::chain(2);
        assert_eq!(spec.index_of(&[1, 0]).unwrap(), 3);
        assert_eq!(spec.index_of(&[0, 1]).unwrap(), 1);
    }
}
