//! Exact evolution of diagonal-sector distributions.
//!
//! Only the diagonal of the density matrix is tracked. Off-diagonal sectors
//! relax at a finite dissipative rate and never feed back into the diagonal,
//! so the late-time dynamics is the classical master equation
//! `dP/dt = G P` with `G = gamma * sum_bonds (SWAP - 1)`, the symmetric simple
//! exclusion process at swap rate `gamma` per bond.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config_space::{Lattice, Sector, SectorDistribution};
use crate::error::{Error, Result};
use crate::krylov::{expv, KrylovOptions, KrylovStats, LinearOperator};

/// Default swap rate of the one-dimensional runs.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Matrix-free SSEP generator on one charge sector.
#[derive(Debug, Clone)]
pub struct DiagonalGenerator {
    pub lattice: Lattice,
    pub gamma: f64,
    pub sector: Sector,
    configs: Vec<u64>,
    bond_masks: Vec<(u64, usize, usize)>,
}

impl DiagonalGenerator {
    pub fn build(lattice: &Lattice, gamma: f64, charge: usize, cap: usize) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        let sector = Sector::new(lattice.n_sites(), charge, cap)?;
        let configs = sector.configurations();
        let bond_masks = lattice.bonds.iter().map(|&(i, j)| ((1u64 << i) | (1u64 << j), i, j)).collect();
        Ok(Self { lattice: lattice.clone(), gamma, sector, configs, bond_masks })
    }

    pub fn for_distribution(dist: &SectorDistribution, gamma: f64, cap: usize) -> Result<Self> {
        Self::build(&dist.lattice, gamma, dist.charge(), cap)
    }

    pub fn configs(&self) -> &[u64] {
        &self.configs
    }

    /// Rank of `bits` with the particle on `from` moved to the empty `to`.
    #[inline]
    fn moved_rank(&self, rank: usize, bits: u64, from: usize, to: usize) -> usize {
        let k = (bits & ((1u64 << from) - 1)).count_ones() as usize + 1;
        if to == from + 1 {
            rank + self.sector.binom(from, k - 1) as usize
        } else if from == to + 1 {
            rank - self.sector.binom(to, k - 1) as usize
        } else {
            self.sector.rank(bits ^ (1u64 << from) ^ (1u64 << to))
        }
    }

    /// Calls `f(neighbour_rank)` for every configuration one swap away.
    #[inline]
    pub fn for_each_neighbour(&self, rank: usize, mut f: impl FnMut(usize)) {
        let bits = self.configs[rank];
        for &(mask, i, j) in &self.bond_masks {
            let occ = bits & mask;
            if occ == 0 || occ == mask {
                continue;
            }
            let (from, to) = if bits >> i & 1 == 1 { (i, j) } else { (j, i) };
            f(self.moved_rank(rank, bits, from, to));
        }
    }

    /// Number of bonds whose swap changes the configuration.
    pub fn active_bonds(&self, rank: usize) -> usize {
        let bits = self.configs[rank];
        self.bond_masks
            .iter()
            .filter(|&&(mask, _, _)| {
                let occ = bits & mask;
                occ != 0 && occ != mask
            })
            .count()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.configs.len();
        let mut g = DMatrix::zeros(n, n);
        for r in 0..n {
            self.for_each_neighbour(r, |s| {
                g[(s, r)] += self.gamma;
                g[(r, r)] -= self.gamma;
            });
        }
        g
    }
}

impl LinearOperator for DiagonalGenerator {
    fn dim(&self) -> usize {
        self.configs.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        const CHUNK: usize = 1 << 12;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * CHUNK;
            for (o, yr) in out.iter_mut().enumerate() {
                let r = base + o;
                let mut acc = 0.0;
                let mut deg = 0usize;
                self.for_each_neighbour(r, |s| {
                    acc += x[s];
                    deg += 1;
                });
                *yr = self.gamma * (acc - deg as f64 * x[r]);
            }
        });
    }
}

/// Sum-to-one defect before renormalization, plus Krylov statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveReport {
    pub defect: f64,
    pub clipped_mass: f64,
    pub krylov: KrylovStats,
}

/// `exp(t G) P`, renormalized.
pub fn evolve(
    dist: &SectorDistribution,
    generator: &DiagonalGenerator,
    t: f64,
    opts: KrylovOptions,
) -> Result<(SectorDistribution, EvolveReport)> {
    if dist.charge() != generator.sector.charge || dist.n_sites() != generator.sector.n_sites {
        return Err(Error::InvalidInput("distribution and generator live on different sectors".into()));
    }
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let (mut p, stats) = expv(generator, t, &dist.probs, opts)?;
    let total: f64 = p.iter().sum();
    let defect = (total - 1.0).abs();
    if defect > 1e-8 {
        return Err(Error::NonConvergence(format!("probability defect {defect:.2e} after evolution")));
    }
    let mut clipped = 0.0;
    for x in p.iter_mut() {
        if *x < 0.0 {
            clipped -= *x;
            *x = 0.0;
        }
    }
    let norm: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= norm);
    let out = SectorDistribution { lattice: dist.lattice.clone(), sector: dist.sector.clone(), probs: p };
    Ok((out, EvolveReport { defect, clipped_mass: clipped, krylov: stats }))
}

/// Evolves through an increasing list of times, reusing each result.
pub fn evolve_series(
    dist: &SectorDistribution,
    generator: &DiagonalGenerator,
    times: &[f64],
    opts: KrylovOptions,
) -> Result<Vec<(SectorDistribution, EvolveReport)>> {
    let mut out = Vec::with_capacity(times.len());
    let mut current = dist.clone();
    let mut t_prev = 0.0;
    for &t in times {
        if t < t_prev {
            return Err(Error::InvalidInput("times must be nondecreasing".into()));
        }
        let (next, rep) = evolve(&current, generator, t - t_prev, opts)?;
        current = next.clone();
        out.push((next, rep));
        t_prev = t;
    }
    Ok(out)
}

/// Graph Laplacian scaled by `gamma`: the one-body SSEP density equation.
pub struct DiffusionOperator {
    neighbours: Vec<Vec<usize>>,
    gamma: f64,
}

impl DiffusionOperator {
    pub fn new(lattice: &Lattice, gamma: f64) -> Self {
        Self { neighbours: lattice.neighbours(), gamma }
    }
}

impl LinearOperator for DiffusionOperator {
    fn dim(&self) -> usize {
        self.neighbours.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, nb) in self.neighbours.iter().enumerate() {
            y[i] = self.gamma * nb.iter().map(|&j| x[j] - x[i]).sum::<f64>();
        }
    }
}

/// Mean occupations at time `t` from `d<n_i>/dt = gamma sum_j (<n_j> - <n_i>)`.
pub fn density_profile_oracle(lattice: &Lattice, gamma: f64, initial: &[f64], t: f64) -> Result<Vec<f64>> {
    if initial.len() != lattice.n_sites() {
        return Err(Error::InvalidInput("initial profile length differs from site count".into()));
    }
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let op = DiffusionOperator::new(lattice, gamma);
    let opts = KrylovOptions { tol: 1e-12, ..Default::default() };
    Ok(expv(&op, t, initial, opts)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{neel_state, DEFAULT_SECTOR_CAP};

    const CAP: usize = DEFAULT_SECTOR_CAP;

    #[test]
    fn two_site_generator() {
        let g = DiagonalGenerator::build(&Lattice::chain(2), 1.0, 1, CAP).unwrap();
        let d = g.dense();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
    }

    #[test]
    fn two_site_closed_form() {
        let l = Lattice::chain(2);
        let g = DiagonalGenerator::build(&l, 1.0, 1, CAP).unwrap();
        let neel = neel_state(&l, CAP).unwrap();
        let (p, rep) = evolve(&neel, &g, 2f64.ln() / 2.0, KrylovOptions::default()).unwrap();
        assert!((p.probs[0] - 0.75).abs() < 1e-12);
        assert!((p.probs[1] - 0.25).abs() < 1e-12);
        assert!(rep.defect < 1e-10);
        let (p0, _) = evolve(&neel, &g, 0.0, KrylovOptions::default()).unwrap();
        assert_eq!(p0.probs, neel.probs);
    }

    #[test]
    fn ring_single_particle_spectrum() {
        for l in [3usize, 5, 8] {
            let g = DiagonalGenerator::build(&Lattice::ring(l), 1.0, 1, CAP).unwrap();
            let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(g.dense()).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut want: Vec<f64> = (0..l)
                .map(|k| -2.0 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / l as f64).cos()))
                .collect();
            want.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (a, b) in ev.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generator_structure() {
        for lat in [Lattice::chain(8), Lattice::ring(8), Lattice::torus(4, 2), Lattice::ladder(2, 4)] {
            let g = DiagonalGenerator::build(&lat, 0.7, 4, CAP).unwrap();
            let d = g.dense();
            let n = d.nrows();
            for c in 0..n {
                let s: f64 = (0..n).map(|r| d[(r, c)]).sum();
                assert!(s.abs() < 1e-12);
                for r in 0..n {
                    assert_eq!(d[(r, c)], d[(c, r)]);
                    if r != c {
                        assert!(d[(r, c)] >= 0.0);
                    }
                }
            }
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut y = vec![0.0; n];
            g.apply(&x, &mut y);
            for r in 0..n {
                let want: f64 = (0..n).map(|c| d[(r, c)] * x[c]).sum();
                assert!((y[r] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relaxes_to_uniform() {
        let l = Lattice::chain(8);
        let g = DiagonalGenerator::build(&l, 1.0, 4, CAP).unwrap();
        let neel = neel_state(&l, CAP).unwrap();
        let gap = 2.0 * (1.0 - (std::f64::consts::PI / 8.0).cos());
        let (p, _) = evolve(&neel, &g, 20.0 / gap, KrylovOptions::default()).unwrap();
        let u = vec![1.0 / 70.0; 70];
        assert!(p.total_variation(&u) < 1e-8);
    }

    #[test]
    fn profile_oracle_examples() {
        let l = Lattice::chain(2);
        let p = density_profile_oracle(&l, 1.0, &[1.0, 0.0], 2f64.ln() / 2.0).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
        let l = Lattice::chain(10);
        let p = density_profile_oracle(&l, 0.3, &[0.4; 10], 7.0).unwrap();
        assert!(p.iter().all(|&x| (x - 0.4).abs() < 1e-12));
    }

    #[test]
    fn profile_oracle_matches_exact_density() {
        let l = Lattice::ladder(2, 4);
        let g = DiagonalGenerator::build(&l, 0.5, 4, CAP).unwrap();
        let neel = neel_state(&l, CAP).unwrap();
        let (p, _) = evolve(&neel, &g, 1.3, KrylovOptions::default()).unwrap();
        let oracle = density_profile_oracle(&l, 0.5, &neel.density(), 1.3).unwrap();
        for (a, b) in p.density().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
