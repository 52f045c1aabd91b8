//! Lattices, charge configurations and fixed-charge sectors.
//!
//! Configurations are `u64` bit-sets (bit `i` set means site `i` is occupied).
//! A sector of `N` sites and charge `Q0` is indexed by its combinatorial rank:
//! the `k`-th set bit at position `p` contributes `C(p, k+1)`. Rank order is
//! the numeric order of the bit-sets, so site 0 is the least significant
//! digit and enumeration is stable across runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of states in an enumerated sector.
pub const DEFAULT_SECTOR_CAP: usize = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// A hypercubic lattice with one or two axes.
///
/// Site index is `c0 + e0 * c1`. Every bond `(i, j)` points from `i` to its
/// neighbour `j` in the positive direction of `axis`, so a particle hop
/// `i -> j` counts as `+axis` for winding purposes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub extents: Vec<usize>,
    pub boundary: Vec<Boundary>,
    pub bonds: Vec<(usize, usize)>,
    pub bond_axis: Vec<usize>,
}

impl Lattice {
    pub fn new(extents: Vec<usize>, boundary: Vec<Boundary>) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 || extents.len() != boundary.len() {
            return Err(Error::InvalidInput(
                "lattice needs one or two axes with one boundary condition each".into(),
            ));
        }
        if extents.iter().any(|&e| e == 0) {
            return Err(Error::InvalidInput("lattice extents must be positive".into()));
        }
        let n: usize = extents.iter().product();
        let mut bonds = Vec::new();
        let mut bond_axis = Vec::new();
        for site in 0..n {
            let coords = coords_of(site, &extents);
            for axis in 0..extents.len() {
                let e = extents[axis];
                let c = coords[axis];
                let next = if c + 1 < e {
                    c + 1
                } else if boundary[axis] == Boundary::Periodic && e > 2 {
                    0
                } else {
                    // open edge, or a two-site periodic axis whose wrap bond
                    // duplicates the direct one
                    continue;
                };
                let mut nc = coords.clone();
                nc[axis] = next;
                bonds.push((site, index_of(&nc, &extents)));
                bond_axis.push(axis);
            }
        }
        Ok(Self { extents, boundary, bonds, bond_axis })
    }

    pub fn chain(l: usize) -> Self {
        Self::new(vec![l], vec![Boundary::Open]).expect("valid chain")
    }

    pub fn ring(l: usize) -> Self {
        Self::new(vec![l], vec![Boundary::Periodic]).expect("valid ring")
    }

    /// `lx` by `ly` torus, periodic on both axes.
    pub fn torus(lx: usize, ly: usize) -> Self {
        Self::new(vec![lx, ly], vec![Boundary::Periodic; 2]).expect("valid torus")
    }

    /// `w` legs of length `l`, open on both axes. Axis 0 runs along the legs.
    pub fn ladder(w: usize, l: usize) -> Self {
        Self::new(vec![l, w], vec![Boundary::Open; 2]).expect("valid ladder")
    }

    pub fn n_sites(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        coords_of(site, &self.extents)
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        index_of(coords, &self.extents)
    }

    /// Checkerboard parity of a site (sum of coordinates mod 2).
    pub fn parity(&self, site: usize) -> usize {
        self.coords(site).iter().sum::<usize>() % 2
    }

    pub fn is_bipartite(&self) -> bool {
        self.extents
            .iter()
            .zip(&self.boundary)
            .all(|(&e, &b)| b == Boundary::Open || e % 2 == 0 || e == 1)
    }

    /// Neighbour lists, one entry per bond endpoint.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_sites()];
        for &(i, j) in &self.bonds {
            nb[i].push(j);
            nb[j].push(i);
        }
        nb
    }
}

fn coords_of(site: usize, extents: &[usize]) -> Vec<usize> {
    let mut rem = site;
    extents
        .iter()
        .map(|&e| {
            let c = rem % e;
            rem /= e;
            c
        })
        .collect()
}

fn index_of(coords: &[usize], extents: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (c, e) in coords.iter().zip(extents) {
        idx += c * stride;
        stride *= e;
    }
    idx
}

/// Occupation bit-set of at most 64 sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChargeConfiguration(pub u64);

impl ChargeConfiguration {
    pub fn from_occupations(occ: &[u8]) -> Self {
        assert!(occ.len() <= 64, "bit-set configurations hold at most 64 sites");
        let mut bits = 0u64;
        for (i, &o) in occ.iter().enumerate() {
            if o != 0 {
                bits |= 1 << i;
            }
        }
        Self(bits)
    }

    pub fn occupations(self, n: usize) -> Vec<u8> {
        (0..n).map(|i| ((self.0 >> i) & 1) as u8).collect()
    }

    pub fn occupied(self, site: usize) -> bool {
        (self.0 >> site) & 1 == 1
    }

    pub fn charge(self) -> u32 {
        self.0.count_ones()
    }
}

/// Pascal triangle up to 64, exact in `u64`.
#[derive(Debug, Clone)]
pub struct Binomials {
    table: Vec<[u64; 65]>,
}

impl Binomials {
    pub fn new() -> Self {
        let mut table = vec![[0u64; 65]; 65];
        for n in 0..=64 {
            table[n][0] = 1;
            for k in 1..=n {
                table[n][k] = table[n - 1][k - 1].saturating_add(table[n - 1][k]);
            }
        }
        Self { table }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> u64 {
        if k > n {
            0
        } else {
            self.table[n][k]
        }
    }
}

impl Default for Binomials {
    fn default() -> Self {
        Self::new()
    }
}

/// Exact binomial coefficient as `u128`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Fixed-charge sector with combinadic ranking.
#[derive(Debug, Clone)]
pub struct Sector {
    pub n_sites: usize,
    pub charge: usize,
    binom: Binomials,
    len: usize,
}

impl Sector {
    pub fn new(n_sites: usize, charge: usize, cap: usize) -> Result<Self> {
        if n_sites > 64 {
            return Err(Error::InvalidInput(format!(
                "{n_sites} sites exceed the 64-site bit-set width"
            )));
        }
        if charge > n_sites {
            return Err(Error::InvalidInput(format!(
                "charge {charge} exceeds site count {n_sites}"
            )));
        }
        let states = binomial(n_sites, charge);
        if states > cap as u128 {
            return Err(Error::CapExceeded { states, cap });
        }
        Ok(Self { n_sites, charge, binom: Binomials::new(), len: states as usize })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn binom(&self, n: usize, k: usize) -> u64 {
        self.binom.get(n, k)
    }

    #[inline]
    pub fn rank(&self, bits: u64) -> usize {
        let mut r = 0u64;
        let mut b = bits;
        let mut k = 1;
        while b != 0 {
            let p = b.trailing_zeros() as usize;
            r += self.binom.get(p, k);
            k += 1;
            b &= b - 1;
        }
        r as usize
    }

    pub fn unrank(&self, rank: usize) -> u64 {
        let mut r = rank as u64;
        let mut bits = 0u64;
        let mut p = self.n_sites;
        for k in (1..=self.charge).rev() {
            // largest p with C(p, k) <= r
            p -= 1;
            while self.binom.get(p, k) > r {
                p -= 1;
            }
            r -= self.binom.get(p, k);
            bits |= 1 << p;
        }
        bits
    }

    /// All configurations in rank order.
    pub fn configurations(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.len);
        if self.charge == 0 {
            out.push(0);
            return out;
        }
        let mut v: u64 = (1u64 << self.charge) - 1;
        let limit = if self.n_sites == 64 { u64::MAX } else { 1u64 << self.n_sites };
        loop {
            out.push(v);
            if out.len() == self.len {
                break;
            }
            // Gosper's hack: next integer with the same popcount
            let c = v & v.wrapping_neg();
            let r = v + c;
            v = (((r ^ v) >> 2) / c) | r;
            debug_assert!(v < limit);
        }
        out
    }
}

/// `enumerate_sector` with an explicit cap.
pub fn enumerate_sector(lattice: &Lattice, charge: usize, cap: usize) -> Result<Vec<ChargeConfiguration>> {
    let sector = Sector::new(lattice.n_sites(), charge, cap)?;
    Ok(sector.configurations().into_iter().map(ChargeConfiguration).collect())
}

/// Normalized probability vector over a fixed-charge sector.
#[derive(Debug, Clone)]
pub struct SectorDistribution {
    pub lattice: Lattice,
    pub sector: Sector,
    pub probs: Vec<f64>,
}

impl SectorDistribution {
    pub fn point_mass(lattice: &Lattice, config: ChargeConfiguration, cap: usize) -> Result<Self> {
        let sector = Sector::new(lattice.n_sites(), config.charge() as usize, cap)?;
        let mut probs = vec![0.0; sector.len()];
        probs[sector.rank(config.0)] = 1.0;
        Ok(Self { lattice: lattice.clone(), sector, probs })
    }

    pub fn uniform(lattice: &Lattice, charge: usize, cap: usize) -> Result<Self> {
        let sector = Sector::new(lattice.n_sites(), charge, cap)?;
        let p = 1.0 / sector.len() as f64;
        let probs = vec![p; sector.len()];
        Ok(Self { lattice: lattice.clone(), sector, probs })
    }

    /// Wraps a probability vector; it must already sum to one within 1e-12.
    pub fn from_probs(lattice: &Lattice, charge: usize, probs: Vec<f64>, cap: usize) -> Result<Self> {
        let sector = Sector::new(lattice.n_sites(), charge, cap)?;
        if probs.len() != sector.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} probabilities, got {}",
                sector.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { lattice: lattice.clone(), sector, probs })
    }

    pub fn charge(&self) -> usize {
        self.sector.charge
    }

    pub fn n_sites(&self) -> usize {
        self.sector.n_sites
    }

    pub fn prob_of(&self, config: ChargeConfiguration) -> f64 {
        if config.charge() as usize != self.sector.charge {
            return 0.0;
        }
        self.probs[self.sector.rank(config.0)]
    }

    /// Mean occupation per site.
    pub fn density(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.n_sites()];
        for (r, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut b = self.sector.unrank(r);
            while b != 0 {
                rho[b.trailing_zeros() as usize] += p;
                b &= b - 1;
            }
        }
        rho
    }

    /// Total-variation distance to another distribution on the same sector.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub fn snapshot(&self) -> DistributionSnapshot {
        DistributionSnapshot {
            sites: self.n_sites(),
            extents: self.lattice.extents.clone(),
            boundary: self.lattice.boundary.clone(),
            bonds: self.lattice.bonds.clone(),
            sector_charge: self.charge(),
            probabilities: self.probs.clone(),
        }
    }
}

/// JSON snapshot: probabilities are listed in combinadic (numeric bit-set) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSnapshot {
    pub sites: usize,
    pub extents: Vec<usize>,
    pub boundary: Vec<Boundary>,
    pub bonds: Vec<(usize, usize)>,
    pub sector_charge: usize,
    pub probabilities: Vec<f64>,
}

impl DistributionSnapshot {
    pub fn restore(&self, cap: usize) -> Result<SectorDistribution> {
        let lattice = Lattice::new(self.extents.clone(), self.boundary.clone())?;
        SectorDistribution::from_probs(&lattice, self.sector_charge, self.probabilities.clone(), cap)
    }
}

/// Néel state: occupy all sites of even checkerboard parity.
pub fn neel_configuration(lattice: &Lattice) -> Result<ChargeConfiguration> {
    if !lattice.is_bipartite() {
        return Err(Error::NotBipartite(format!(
            "periodic axes need even extents, got {:?}",
            lattice.extents
        )));
    }
    let occ: Vec<u8> = (0..lattice.n_sites()).map(|s| (lattice.parity(s) == 0) as u8).collect();
    Ok(ChargeConfiguration::from_occupations(&occ))
}

pub fn neel_state(lattice: &Lattice, cap: usize) -> Result<SectorDistribution> {
    let c = neel_configuration(lattice)?;
    SectorDistribution::point_mass(lattice, c, cap)
}

/// Probability table over the sub-configurations of `sites`.
///
/// Entry `m` is the probability that site `sites[b]` is occupied exactly when
/// bit `b` of `m` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub sites: Vec<usize>,
    pub probs: Vec<f64>,
}

impl MarginalTable {
    pub fn entropy(&self) -> f64 {
        shannon_entropy(&self.probs)
    }
}

/// Largest subset handled by dense marginal tables.
pub const MAX_MARGINAL_SITES: usize = 24;

pub fn marginal(dist: &SectorDistribution, sites: &[usize]) -> Result<MarginalTable> {
    if sites.is_empty() {
        return Err(Error::InvalidInput("marginal needs a nonempty site subset".into()));
    }
    if sites.len() > MAX_MARGINAL_SITES {
        return Err(Error::InvalidInput(format!(
            "marginal over {} sites exceeds the {MAX_MARGINAL_SITES}-site table limit",
            sites.len()
        )));
    }
    let n = dist.n_sites();
    let mut seen = 0u64;
    for &s in sites {
        if s >= n || (seen >> s) & 1 == 1 {
            return Err(Error::InvalidInput(format!("bad or repeated site {s}")));
        }
        seen |= 1 << s;
    }
    let mut probs = vec![0.0; 1 << sites.len()];
    for (r, &p) in dist.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let bits = dist.sector.unrank(r);
        probs[extract(bits, sites)] += p;
    }
    Ok(MarginalTable { sites: sites.to_vec(), probs })
}

#[inline]
pub(crate) fn extract(bits: u64, sites: &[usize]) -> usize {
    let mut m = 0usize;
    for (b, &s) in sites.iter().enumerate() {
        m |= (((bits >> s) & 1) as usize) << b;
    }
    m
}

/// Shannon entropy in nats; entries below 1e-300 count as zero.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 1e-300).map(|&x| -x * x.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neel_examples() {
        let c = neel_configuration(&Lattice::chain(4)).unwrap();
        assert_eq!(c.occupations(4), vec![1, 0, 1, 0]);
        let c = neel_configuration(&Lattice::chain(2)).unwrap();
        assert_eq!(c.occupations(2), vec![1, 0]);
        let t = Lattice::torus(4, 4);
        let c = neel_configuration(&t).unwrap();
        assert_eq!(c.charge(), 8);
        for &(i, j) in &t.bonds {
            assert_ne!(c.occupied(i), c.occupied(j));
        }
        assert!(matches!(neel_configuration(&Lattice::ring(5)), Err(Error::NotBipartite(_))));
    }

    #[test]
    fn sector_sizes_and_order() {
        let cfg = enumerate_sector(&Lattice::chain(4), 2, DEFAULT_SECTOR_CAP).unwrap();
        assert_eq!(cfg.len(), 6);
        let cfg = enumerate_sector(&Lattice::chain(2), 1, DEFAULT_SECTOR_CAP).unwrap();
        assert_eq!(cfg[0].occupations(2), vec![1, 0]);
        assert_eq!(cfg[1].occupations(2), vec![0, 1]);
        let cfg = enumerate_sector(&Lattice::chain(20), 10, DEFAULT_SECTOR_CAP).unwrap();
        assert_eq!(cfg.len(), 184_756);
        assert!(cfg.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(
            enumerate_sector(&Lattice::chain(24), 12, DEFAULT_SECTOR_CAP),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn rank_unrank_roundtrip() {
        let s = Sector::new(14, 6, DEFAULT_SECTOR_CAP).unwrap();
        for (r, &b) in s.configurations().iter().enumerate() {
            assert_eq!(s.rank(b), r);
            assert_eq!(s.unrank(r), b);
        }
    }

    #[test]
    fn bonds_respect_boundaries() {
        assert_eq!(Lattice::chain(5).bonds.len(), 4);
        assert_eq!(Lattice::ring(5).bonds.len(), 5);
        assert_eq!(Lattice::ring(2).bonds, vec![(0, 1)]);
        assert_eq!(Lattice::torus(4, 4).bonds.len(), 32);
        assert_eq!(Lattice::ladder(2, 5).bonds.len(), 4 * 2 + 5);
        assert_eq!(Lattice::torus(3, 2).bonds.len(), 6 + 3);
    }

    #[test]
    fn marginal_examples() {
        let neel = neel_state(&Lattice::chain(4), DEFAULT_SECTOR_CAP).unwrap();
        let m = marginal(&neel, &[0]).unwrap();
        assert_eq!(m.probs, vec![0.0, 1.0]);
        let u = SectorDistribution::uniform(&Lattice::chain(2), 1, DEFAULT_SECTOR_CAP).unwrap();
        let m = marginal(&u, &[0]).unwrap();
        assert_eq!(m.probs, vec![0.5, 0.5]);
        let all: Vec<usize> = (0..4).collect();
        let m = marginal(&neel, &all).unwrap();
        assert_eq!(m.probs[0b0101], 1.0);
        assert!(marginal(&neel, &[]).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let u = SectorDistribution::uniform(&Lattice::ring(6), 3, DEFAULT_SECTOR_CAP).unwrap();
        let json = serde_json::to_string(&u.snapshot()).unwrap();
        let back: DistributionSnapshot = serde_json::from_str(&json).unwrap();
        let d = back.restore(DEFAULT_SECTOR_CAP).unwrap();
        assert_eq!(d.probs, u.probs);
        assert_eq!(d.lattice, u.lattice);
    }
}
