//! Total-photon-number sector decomposition.
//!
//! The Hamiltonian conserves N = Σ_i n_i, dephasing jumps are diagonal, and
//! a loss jump moves the (N, N) block of ρ to (N-1, N-1). A density matrix
//! that starts block-diagonal in N therefore stays exactly block-diagonal,
//! and a closed-system state vector stays in its sector. The solvers exploit
//! this; results are identical to full-space integration and cross-checked
//! against it in tests.

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::hilbert::{LatticeSpec, SparseOperator};

/// One total-occupation sector: the global basis indices it contains
/// (ascending) and their per-site occupations.
pub(crate) struct SectorBasis {
    #[allow(dead_code)]
    pub n_total: usize,
    pub states: Vec<u32>,
    /// dim_sector × L occupation digits, row-major.
    pub occ: Vec<u8>,
}

impl SectorBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }
}

/// Full decomposition of the chain Hilbert space by total photon number.
pub(crate) struct SectorSpace {
    pub dim: usize,
    #[allow(dead_code)]
    pub sites: usize,
    /// global index → total occupation
    pub sector_of: Vec<u8>,
    /// global index → position inside its sector
    pub position: Vec<u32>,
    /// indexed by N = 0 ..= (d-1)·L
    pub sectors: Vec<SectorBasis>,
}

impl SectorSpace {
    pub fn build(spec: &LatticeSpec) -> Result<Self> {
        let dim = spec.dim()?;
        let l = spec.sites;
        let d = spec.cutoff;
        let n_max = (d - 1) * l;
        let mut sectors: Vec<SectorBasis> = (0..=n_max)
            .map(|n| SectorBasis {
                n_total: n,
                states: Vec::new(),
                occ: Vec::new(),
            })
            .collect();
        let mut sector_of = vec![0u8; dim];
        let mut position = vec![0u32; dim];
        let mut digits = vec![0u8; l];
        let mut total = 0usize;
        for x in 0..dim {
            let sec = &mut sectors[total];
            sector_of[x] = total as u8;
            position[x] = sec.states.len() as u32;
            sec.states.push(x as u32);
            sec.occ.extend_from_slice(&digits);
            for site in (0..l).rev() {
                digits[site] += 1;
                total += 1;
                if digits[site] < d as u8 {
                    break;
                }
                total -= digits[site] as usize;
                digits[site] = 0;
            }
        }
        Ok(SectorSpace {
            dim,
            sites: l,
            sector_of,
            position,
            sectors,
        })
    }

    /// True when every stored entry outside the diagonal N-blocks is exactly
    /// zero (column-major dense input).
    pub fn is_block_diagonal(&self, rho: &[C64]) -> bool {
        let dim = self.dim;
        for col in 0..dim {
            let sc = self.sector_of[col];
            for row in 0..dim {
                if self.sector_of[row] != sc && rho[row + col * dim] != C64::new(0.0, 0.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Sectors populated by a state vector (exact-zero test).
    pub fn occupied_sectors(&self, amps: &[C64]) -> Vec<usize> {
        let mut seen = vec![false; self.sectors.len()];
        for (x, a) in amps.iter().enumerate() {
            if *a != C64::new(0.0, 0.0) {
                seen[self.sector_of[x] as usize] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter_map(|(n, &s)| s.then_some(n))
            .collect()
    }
}

/// Restriction of the chain Hamiltonian to one sector, as a CSR matrix over
/// the sector's own index space.
pub(crate) fn sector_hamiltonian(
    spec: &LatticeSpec,
    space: &SectorSpace,
    n_total: usize,
) -> Result<SparseOperator> {
    let sec = &space.sectors[n_total];
    let l = spec.sites;
    let d = spec.cutoff;
    let sdim = sec.dim();
    let sqrt: Vec<f64> = (0..=d).map(|n| (n as f64).sqrt()).collect();

    let mut row_ptr = Vec::with_capacity(sdim + 1);
    let mut col_idx: Vec<u32> = Vec::new();
    let mut values: Vec<C64> = Vec::new();
    row_ptr.push(0);
    let mut row_buf: Vec<(u32, f64)> = Vec::with_capacity(2 * l);

    for pos in 0..sdim {
        row_buf.clear();
        let x = sec.states[pos] as usize;
        let occ = &sec.occ[pos * l..(pos + 1) * l];
        let mut diag = 0.0;
        for &n in occ {
            let n = n as usize;
            diag += spec.cavity_freq * n as f64
                + 0.5 * spec.interaction * (n * n.saturating_sub(1)) as f64;
        }
        if diag != 0.0 {
            row_buf.push((pos as u32, diag));
        }
        if spec.hopping != 0.0 {
            for i in 0..l - 1 {
                let (ni, nj) = (occ[i] as usize, occ[i + 1] as usize);
                let delta = (d - 1) * spec.stride(i + 1);
                if ni < d - 1 && nj > 0 {
                    row_buf.push((
                        space.position[x + delta],
                        -spec.hopping * sqrt[ni + 1] * sqrt[nj],
                    ));
                }
                if nj < d - 1 && ni > 0 {
                    row_buf.push((
                        space.position[x - delta],
                        -spec.hopping * sqrt[nj + 1] * sqrt[ni],
                    ));
                }
            }
        }
        row_buf.sort_unstable_by_key(|&(c, _)| c);
        for &(c, v) in &row_buf {
            col_idx.push(c);
            values.push(C64::new(v, 0.0));
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseOperator::from_parts(sdim, row_ptr, col_idx, values))
}

/// Per-state dissipator diagonal K(x) = γ Σ_i n_i + 2 Γ_d Σ_i n_i² over a
/// sector's occupation table.
pub(crate) fn sector_dissipator_diagonal(spec: &LatticeSpec, sec: &SectorBasis) -> Vec<f64> {
    let l = spec.sites;
    (0..sec.dim())
        .map(|pos| {
            let occ = &sec.occ[pos * l..(pos + 1) * l];
            occ.iter()
                .map(|&n| {
                    let n = n as f64;
                    spec.loss_rate * n + 2.0 * spec.dephasing_rate * n * n
                })
                .sum()
        })
        .collect()
}

/// Loss connections of site `site` from sector N+1 down to sector N:
/// (position above, position below, √n amplitude).
pub(crate) fn loss_connections(
    spec: &LatticeSpec,
    space: &SectorSpace,
    upper_n: usize,
    site: usize,
) -> Vec<(u32, u32, f64)> {
    let sec = &space.sectors[upper_n];
    let l = spec.sites;
    let stride = spec.stride(site);
    let mut out = Vec::new();
    for pos in 0..sec.dim() {
        let n = sec.occ[pos * l + site] as usize;
        if n > 0 {
            let target = sec.states[pos] as usize - stride;
            out.push((pos as u32, space.position[target], (n as f64).sqrt()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::build_hamiltonian;

    #[test]
    fn sector_sizes_sum_to_dim() {
        let spec = LatticeSpec::chain(5);
        let space = SectorSpace::build(&spec).unwrap();
        let total: usize = space.sectors.iter().map(|s| s.dim()).sum();
        assert_eq!(total, 243);
        // trinomial coefficients for (1 + x + x²)^5
        let sizes: Vec<usize> = space.sectors.iter().map(|s| s.dim()).collect();
        assert_eq!(sizes, vec![1, 5, 15, 30, 45, 51, 45, 30, 15, 5, 1]);
    }

    #[test]
    fn sector_occupations_consistent() {
        let spec = LatticeSpec::chain(4);
        let space = SectorSpace::build(&spec).unwrap();
        for sec in &space.sectors {
            for pos in 0..sec.dim() {
                let x = sec.states[pos] as usize;
                let occ = spec.occupations_of(x);
                let total: usize = occ.iter().sum();
                assert_eq!(total, sec.n_total);
                for site in 0..4 {
                    assert_eq!(sec.occ[pos * 4 + site] as usize, occ[site]);
                }
                assert_eq!(space.position[x] as usize, pos);
                assert_eq!(space.sector_of[x] as usize, sec.n_total);
            }
        }
    }

    #[test]
    fn sector_hamiltonian_matches_full() {
        let spec = LatticeSpec {
            interaction: 7.3,
            cavity_freq: 0.4,
            ..LatticeSpec::chain(4)
        };
        let space = SectorSpace::build(&spec).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        for n in 0..space.sectors.len() {
            let hs = sector_hamiltonian(&spec, &space, n).unwrap();
            let sec = &space.sectors[n];
            for (r, c, v) in hs.iter() {
                let want = h.entry(sec.states[r] as usize, sec.states[c] as usize);
                assert_eq!(v, want);
            }
            assert_eq!(
                hs.nnz(),
                h.iter()
                    .filter(|&(r, c, _)| {
                        space.sector_of[r] as usize == n && space.sector_of[c] as usize == n
                    })
                    .count()
            );
        }
    }

    #[test]
    fn loss_connections_match_annihilation() {
        let spec = LatticeSpec::chain(3);
        let space = SectorSpace::build(&spec).unwrap();
        for site in 0..3 {
            for upper in 1..space.sectors.len() {
                let conns = loss_connections(&spec, &space, upper, site);
                for (src, dst, amp) in conns {
                    let x = space.sectors[upper].states[src as usize] as usize;
                    let y = space.sectors[upper - 1].states[dst as usize] as usize;
                    let n = spec.occupation(x, site);
                    assert_eq!(spec.occupation(y, site), n - 1);
                    assert_eq!(amp, (n as f64).sqrt());
                }
            }
        }
    }
}
