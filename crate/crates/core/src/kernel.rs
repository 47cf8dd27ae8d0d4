//! Matrix-free application of the chain Hamiltonian and of the non-Hermitian
//! trajectory drift, computed from occupation digits instead of a stored
//! sparse matrix. Entry values match `build_hamiltonian` exactly; only the
//! memory footprint differs, which is what makes state vectors up to the
//! 3^14 cap workable.

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::hilbert::LatticeSpec;

pub(crate) struct ChainKernel {
    dim: usize,
    sites: usize,
    cutoff: usize,
    /// dim × L occupation digits, row-major.
    occ: Vec<u8>,
    /// Diagonal chain energy E(x).
    energy: Vec<f64>,
    /// Dissipator diagonal K(x) = γ Σ n_i + 2Γ_d Σ n_i²; zero length when
    /// the chain has no dissipation.
    dissipator: Vec<f64>,
    /// Index offset of the hop b†_i b_{i+1}.
    deltas: Vec<usize>,
    /// hop_amp[a · d + b] = -J √(a+1) √b.
    hop_amp: Vec<f64>,
}

impl ChainKernel {
    pub fn build(spec: &LatticeSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim()?;
        let l = spec.sites;
        let d = spec.cutoff;
        let occ = spec.occupation_table()?;
        let mut energy = vec![0.0; dim];
        let dissipative = spec.loss_rate > 0.0 || spec.dephasing_rate > 0.0;
        let mut dissipator = vec![0.0; if dissipative { dim } else { 0 }];
        for x in 0..dim {
            let row = &occ[x * l..(x + 1) * l];
            let mut e = 0.0;
            let mut k = 0.0;
            for &n in row {
                let n = n as usize;
                e += spec.cavity_freq * n as f64
                    + 0.5 * spec.interaction * (n * n.saturating_sub(1)) as f64;
                if dissipative {
                    k += spec.loss_rate * n as f64
                        + 2.0 * spec.dephasing_rate * (n * n) as f64;
                }
            }
            energy[x] = e;
            if dissipative {
                dissipator[x] = k;
            }
        }
        let deltas = (0..l.saturating_sub(1))
            .map(|i| (d - 1) * spec.stride(i + 1))
            .collect();
        let mut hop_amp = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                hop_amp[a * d + b] = -spec.hopping * ((a + 1) as f64).sqrt() * (b as f64).sqrt();
            }
        }
        Ok(ChainKernel {
            dim,
            sites: l,
            cutoff: d,
            occ,
            energy,
            dissipator,
            deltas,
            hop_amp,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn hop_into(&self, x: usize, row: &[u8], psi: &[C64]) -> C64 {
        let d = self.cutoff;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.sites - 1 {
            let ni = row[i] as usize;
            let nj = row[i + 1] as usize;
            let delta = self.deltas[i];
            if ni < d - 1 && nj > 0 {
                acc += self.hop_amp[ni * d + nj] * psi[x + delta];
            }
            if nj < d - 1 && ni > 0 {
                acc += self.hop_amp[nj * d + ni] * psi[x - delta];
            }
        }
        acc
    }

    /// out = H ψ.
    pub fn apply_hamiltonian(&self, out: &mut [C64], psi: &[C64]) {
        let l = self.sites;
        for x in 0..self.dim {
            let row = &self.occ[x * l..(x + 1) * l];
            out[x] = self.energy[x] * psi[x] + self.hop_into(x, row, psi);
        }
    }

    /// out = (-iH - K/2) ψ, the drift generator of the jump unraveling.
    pub fn apply_drift(&self, out: &mut [C64], psi: &[C64]) {
        let l = self.sites;
        let dissipative = !self.dissipator.is_empty();
        for x in 0..self.dim {
            let row = &self.occ[x * l..(x + 1) * l];
            let h = self.energy[x] * psi[x] + self.hop_into(x, row, psi);
            let mut v = C64::new(h.im, -h.re);
            if dissipative {
                v -= 0.5 * self.dissipator[x] * psi[x];
            }
            out[x] = v;
        }
    }

    /// Occupation of `site` in basis state `x`.
    #[allow(dead_code)]
    pub fn occupation(&self, x: usize, site: usize) -> usize {
        self.occ[x * self.sites + site] as usize
    }

    pub fn stride(&self, site: usize) -> usize {
        self.cutoff.pow((self.sites - 1 - site) as u32)
    }

    /// out = b_site ψ (raw annihilation, no rate factor).
    pub fn apply_annihilation(&self, site: usize, out: &mut [C64], psi: &[C64]) {
        let l = self.sites;
        let stride = self.stride(site);
        out.fill(C64::new(0.0, 0.0));
        for x in 0..self.dim {
            let n = self.occ[x * l + site] as usize;
            if n > 0 {
                out[x - stride] = (n as f64).sqrt() * psi[x];
            }
        }
    }

    /// ψ ← n_site ψ (raw number operator, no rate factor).
    pub fn apply_number_in_place(&self, site: usize, psi: &mut [C64]) {
        let l = self.sites;
        for (x, amp) in psi.iter_mut().enumerate() {
            *amp *= self.occ[x * l + site] as f64;
        }
    }

    /// Per-site jump weights on an (un-normalized) state:
    /// loss γ Σ n_i |ψ|² and dephasing 2Γ_d Σ n_i² |ψ|².
    pub fn jump_weights(
        &self,
        loss_rate: f64,
        deph_rate: f64,
        psi: &[C64],
        loss: &mut [f64],
        deph: &mut [f64],
    ) {
        let l = self.sites;
        loss.fill(0.0);
        deph.fill(0.0);
        for (x, amp) in psi.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for site in 0..l {
                let n = self.occ[x * l + site] as f64;
                loss[site] += n * p;
                deph[site] += n * n * p;
            }
        }
        for w in loss.iter_mut() {
            *w *= loss_rate;
        }
        for w in deph.iter_mut() {
            *w *= 2.0 * deph_rate;
        }
    }

    /// Upper bound on the spectral radius of H (max absolute row sum).
    pub fn hamiltonian_norm_bound(&self) -> f64 {
        let l = self.sites;
        let d = self.cutoff;
        let mut bound: f64 = 0.0;
        for x in 0..self.dim {
            let row = &self.occ[x * l..(x + 1) * l];
            let mut sum = self.energy[x].abs();
            for i in 0..l - 1 {
                let ni = row[i] as usize;
                let nj = row[i + 1] as usize;
                if ni < d - 1 && nj > 0 {
                    sum += self.hop_amp[ni * d + nj].abs();
                }
                if nj < d - 1 && ni > 0 {
                    sum += self.hop_amp[nj * d + ni].abs();
                }
            }
            bound = bound.max(sum);
        }
        bound
    }
}
