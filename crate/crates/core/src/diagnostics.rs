//! Rényi correlators, conditional mutual information and length fits.
//!
//! For a diagonal state `rho = sum_s P(s) |s><s|` and `O = S_i^+ S_j^-`:
//!
//! * `C2 = sum' P(s) P(s') / sum P(s)^2`
//! * `C1 = sum' sqrt(P(s) P(s'))` (the Bhattacharyya coefficient)
//!
//! where the primed sum runs over `s` with `s_i = 0, s_j = 1` and `s'` is `s`
//! with the particle moved from `j` to `i`. The symmetrized insertion
//! `S_i^+ S_j^- + S_i^- S_j^+` adds both orientations; cross terms vanish on
//! diagonal states. Entropies are in nats.

use serde::{Deserialize, Serialize};

use crate::config_space::{extract, shannon_entropy, Lattice, SectorDistribution, MAX_MARGINAL_SITES};
use crate::error::{Error, Result};

/// Which operator insertion a correlator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Insertion {
    /// `S_i^+ S_j^-` only: particle moved `j -> i`.
    Single,
    /// `S_i^+ S_j^- + S_i^- S_j^+`.
    #[default]
    Symmetrized,
}

/// Rényi index of a correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenyiIndex {
    One,
    Two,
}

impl RenyiIndex {
    pub fn as_u8(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }
}

fn check_pair(dist: &SectorDistribution, i: usize, j: usize) -> Result<()> {
    let n = dist.n_sites();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidInput(format!("need distinct sites below {n}, got ({i}, {j})")));
    }
    if dist.sector.is_empty() {
        return Err(Error::InvalidInput("empty sector".into()));
    }
    Ok(())
}

/// `sum' w(P(s), P(s'))` for the particle moved `j -> i`.
fn restricted_sum(dist: &SectorDistribution, i: usize, j: usize, w: impl Fn(f64, f64) -> f64) -> f64 {
    let sec = &dist.sector;
    let (mi, mj) = (1u64 << i, 1u64 << j);
    let mut acc = 0.0;
    for (r, &p) in dist.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let s = sec.unrank(r);
        if s & mi == 0 && s & mj != 0 {
            let q = dist.probs[sec.rank(s ^ mi ^ mj)];
            acc += w(p, q);
        }
    }
    acc
}

pub fn purity(dist: &SectorDistribution) -> f64 {
    dist.probs.iter().map(|p| p * p).sum()
}

pub fn renyi2_with(dist: &SectorDistribution, i: usize, j: usize, ins: Insertion) -> Result<f64> {
    check_pair(dist, i, j)?;
    let norm = purity(dist);
    let mut num = restricted_sum(dist, i, j, |a, b| a * b);
    if ins == Insertion::Symmetrized {
        num += restricted_sum(dist, j, i, |a, b| a * b);
    }
    Ok(num / norm)
}

pub fn renyi1_with(dist: &SectorDistribution, i: usize, j: usize, ins: Insertion) -> Result<f64> {
    check_pair(dist, i, j)?;
    let mut num = restricted_sum(dist, i, j, |a, b| (a * b).sqrt());
    if ins == Insertion::Symmetrized {
        num += restricted_sum(dist, j, i, |a, b| (a * b).sqrt());
    }
    Ok(num)
}

/// Single-term Rényi-2 correlator, particle moved `j -> i`.
pub fn renyi2(dist: &SectorDistribution, i: usize, j: usize) -> Result<f64> {
    renyi2_with(dist, i, j, Insertion::Single)
}

/// Single-term Rényi-1 correlator, particle moved `j -> i`.
pub fn renyi1(dist: &SectorDistribution, i: usize, j: usize) -> Result<f64> {
    renyi1_with(dist, i, j, Insertion::Single)
}

pub fn correlator(dist: &SectorDistribution, q: RenyiIndex, i: usize, j: usize, ins: Insertion) -> Result<f64> {
    match q {
        RenyiIndex::One => renyi1_with(dist, i, j, ins),
        RenyiIndex::Two => renyi2_with(dist, i, j, ins),
    }
}

/// `chi = (1/L^2) sum_{i != j} C(i <- j)` with `L` the extent of axis 0.
///
/// On a chain this is `N^-2` times the pair sum; on an `L x L` torus `1/N`.
pub fn renyi_susceptibility(dist: &SectorDistribution, q: RenyiIndex) -> f64 {
    let sec = &dist.sector;
    let n = dist.n_sites();
    let norm = match q {
        RenyiIndex::Two => purity(dist),
        RenyiIndex::One => 1.0,
    };
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut acc = 0.0;
    for (r, &p) in dist.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let s = sec.unrank(r);
        let mut occ = s;
        while occ != 0 {
            let j = occ.trailing_zeros();
            occ &= occ - 1;
            let mut holes = !s & full;
            while holes != 0 {
                let i = holes.trailing_zeros();
                holes &= holes - 1;
                let pq = dist.probs[sec.rank(s ^ (1u64 << i) ^ (1u64 << j))];
                acc += match q {
                    RenyiIndex::Two => p * pq,
                    RenyiIndex::One => (p * pq).sqrt(),
                };
            }
        }
    }
    let l0 = dist.lattice.extents[0] as f64;
    acc / norm / (l0 * l0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorMeta {
    pub t: f64,
    pub gamma: f64,
    pub l: usize,
    pub q: u8,
    pub orientation: Insertion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSeries {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: CorrelatorMeta,
}

/// `C(x)` averaged over all origins `i` with `i + x` on the lattice (axis 0 only
/// for 1d lattices; ring separations wrap).
pub fn correlator_series(
    dist: &SectorDistribution,
    q: RenyiIndex,
    ins: Insertion,
    separations: &[usize],
    meta: CorrelatorMeta,
) -> Result<CorrelatorSeries> {
    let lat = &dist.lattice;
    if lat.dim() != 1 {
        return Err(Error::InvalidInput("correlator series are defined on 1d lattices".into()));
    }
    let n = lat.n_sites();
    let periodic = lat.boundary[0] == crate::config_space::Boundary::Periodic;
    let mut values = Vec::with_capacity(separations.len());
    for &x in separations {
        if x == 0 || x >= n {
            return Err(Error::InvalidInput(format!("separation {x} outside 1..{n}")));
        }
        let origins: Vec<usize> = if periodic { (0..n).collect() } else { (0..n - x).collect() };
        let mut acc = 0.0;
        for &i in &origins {
            acc += correlator(dist, q, i, (i + x) % n, ins)?;
        }
        values.push(acc / origins.len() as f64);
    }
    Ok(CorrelatorSeries { x: separations.iter().map(|&x| x as f64).collect(), values, meta })
}

/// `I(A:C|B) = S_AB + S_BC - S_B - S_ABC` of the classical marginals.
pub fn cmi(dist: &SectorDistribution, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let mut all: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    let total = all.len();
    all.sort_unstable();
    all.dedup();
    if all.len() != total {
        return Err(Error::InvalidInput("A, B, C must be disjoint".into()));
    }
    if a.is_empty() || c.is_empty() {
        return Err(Error::InvalidInput("A and C must be nonempty".into()));
    }
    if all.iter().any(|&s| s >= dist.n_sites()) {
        return Err(Error::InvalidInput("site outside lattice".into()));
    }
    let covering = all.len() == dist.n_sites();
    let (na, nb, nc) = (a.len(), b.len(), c.len());
    // ordered as [B, A, C] so B occupies the low bits
    let order: Vec<usize> = b.iter().chain(a).chain(c).copied().collect();
    let s_abc;
    let table: Vec<f64>;
    if covering {
        s_abc = shannon_entropy(&dist.probs);
        let ab_bits = nb + na;
        let bc_bits = nb + nc;
        if ab_bits > MAX_MARGINAL_SITES || bc_bits > MAX_MARGINAL_SITES {
            return Err(Error::InvalidInput("marginal too large".into()));
        }
        let ab_sites: Vec<usize> = b.iter().chain(a).copied().collect();
        let bc_sites: Vec<usize> = b.iter().chain(c).copied().collect();
        let mut pab = vec![0.0; 1 << ab_bits];
        let mut pbc = vec![0.0; 1 << bc_bits];
        let mut pb = vec![0.0; 1 << nb];
        for (r, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = dist.sector.unrank(r);
            pab[extract(s, &ab_sites)] += p;
            pbc[extract(s, &bc_sites)] += p;
            pb[extract(s, b)] += p;
        }
        return Ok(shannon_entropy(&pab) + shannon_entropy(&pbc) - shannon_entropy(&pb) - s_abc);
    } else {
        if order.len() > MAX_MARGINAL_SITES {
            return Err(Error::InvalidInput("marginal too large".into()));
        }
        let mut t = vec![0.0; 1 << order.len()];
        for (r, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            t[extract(dist.sector.unrank(r), &order)] += p;
        }
        s_abc = shannon_entropy(&t);
        table = t;
    }
    let mut pab = vec![0.0; 1 << (nb + na)];
    let mut pbc = vec![0.0; 1 << (nb + nc)];
    let mut pb = vec![0.0; 1 << nb];
    let bmask = (1usize << nb) - 1;
    let amask = (1usize << na) - 1;
    for (m, &p) in table.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let bb = m & bmask;
        let aa = (m >> nb) & amask;
        let cc = m >> (nb + na);
        pab[bb | aa << nb] += p;
        pbc[bb | cc << nb] += p;
        pb[bb] += p;
    }
    Ok(shannon_entropy(&pab) + shannon_entropy(&pbc) - shannon_entropy(&pb) - s_abc)
}

/// Region layouts for CMI scans on chains and ladders (columns along axis 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmiGeometry {
    /// A, B, C tile the whole lattice; B is centered.
    Covering,
    /// A and C are single columns flanking B; the rest is traced out.
    Interior,
}

/// Site sets `(A, B, C)` for a given `R_B`.
pub fn geometry_sites(lattice: &Lattice, geom: CmiGeometry, r_b: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let l = lattice.extents[0];
    let w = if lattice.dim() == 2 { lattice.extents[1] } else { 1 };
    let column = |x: usize| -> Vec<usize> { (0..w).map(|y| x + l * y).collect() };
    let cols = |r: std::ops::Range<usize>| -> Vec<usize> { r.flat_map(column).collect() };
    match geom {
        CmiGeometry::Covering => {
            if r_b + 2 > l {
                return Err(Error::InvalidInput(format!("R_B = {r_b} leaves no room for A and C in {l} columns")));
            }
            let x0 = (l - r_b) / 2;
            Ok((cols(0..x0), cols(x0..x0 + r_b), cols(x0 + r_b..l)))
        }
        CmiGeometry::Interior => {
            if r_b + 2 > l {
                return Err(Error::InvalidInput(format!("R_B = {r_b} does not fit in {l} columns")));
            }
            let x0 = (l - r_b) / 2;
            Ok((column(x0 - 1), cols(x0..x0 + r_b), column(x0 + r_b)))
        }
    }
}

/// CMI as a function of `R_B`.
pub fn cmi_scan(dist: &SectorDistribution, geom: CmiGeometry, r_b: &[usize]) -> Result<Vec<f64>> {
    r_b.iter()
        .map(|&r| {
            let (a, b, c) = geometry_sites(&dist.lattice, geom, r)?;
            cmi(dist, &a, &b, &c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindowPolicy {
    Explicit { x_min: f64, x_max: f64 },
    /// Drop the smallest quarter of separations and values below `floor`.
    Auto { floor: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self::Auto { floor: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthFit {
    pub xi: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub r2: f64,
    pub amplitude: f64,
    pub points: usize,
    pub method: &'static str,
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (a, b, r2)
}

/// Fits `ln C = ln a - x / xi` over the window.
pub fn fit_exponential_length(x: &[f64], c: &[f64], policy: WindowPolicy) -> Result<LengthFit> {
    if x.len() != c.len() {
        return Err(Error::InvalidInput("x and C lengths differ".into()));
    }
    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(c.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let sel: Vec<(f64, f64)> = match policy {
        WindowPolicy::Explicit { x_min, x_max } => {
            let w: Vec<_> = pts.into_iter().filter(|p| p.0 >= x_min && p.0 <= x_max).collect();
            if let Some(bad) = w.iter().find(|p| !(p.1 > 1e-300)) {
                return Err(Error::FitRejected(format!("nonpositive value at x = {}", bad.0)));
            }
            w
        }
        WindowPolicy::Auto { floor } => {
            let drop = pts.len() / 4;
            pts.into_iter().skip(drop).filter(|p| p.1 > floor.max(1e-300)).collect()
        }
    };
    if sel.len() < 4 {
        return Err(Error::FitRejected(format!("{} points in window, need at least 4", sel.len())));
    }
    let xs: Vec<f64> = sel.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let (a, b, r2) = linear_fit(&xs, &ys);
    if !(b < 0.0) {
        return Err(Error::FitRejected(format!("slope {b} is not negative")));
    }
    Ok(LengthFit {
        xi: -1.0 / b,
        x_min: xs[0],
        x_max: *xs.last().unwrap(),
        r2,
        amplitude: a.exp(),
        points: xs.len(),
        method: "log-linear least squares",
    })
}

/// Stretch of `R_B` where the local log-log slope of the CMI is stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicWindow {
    pub r_min: f64,
    pub r_max: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovFit {
    pub t: f64,
    pub fit: Result<LengthFit>,
    pub algebraic: Option<AlgebraicWindow>,
}

/// Longest run of at least three local slopes within `tol` of their mean.
pub fn algebraic_window(r: &[f64], i: &[f64], tol: f64) -> Option<AlgebraicWindow> {
    let pts: Vec<(f64, f64)> = r.iter().zip(i).filter(|p| *p.1 > 1e-300 && *p.0 > 0.0).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 4 {
        return None;
    }
    let slopes: Vec<f64> = pts
        .windows(2)
        .map(|w| -(w[1].1.ln() - w[0].1.ln()) / (w[1].0.ln() - w[0].0.ln()))
        .collect();
    let mut best: Option<(usize, usize)> = None;
    for s in 0..slopes.len() {
        for e in (s + 3)..=slopes.len() {
            let run = &slopes[s..e];
            let mean = run.iter().sum::<f64>() / run.len() as f64;
            if run.iter().all(|x| (x - mean).abs() <= tol) && mean > 0.0 {
                if best.map_or(true, |(bs, be)| e - s > be - bs) {
                    best = Some((s, e));
                }
            } else {
                break;
            }
        }
    }
    best.map(|(s, e)| AlgebraicWindow {
        r_min: pts[s].0,
        r_max: pts[e].0,
        alpha: slopes[s..e].iter().sum::<f64>() / (e - s) as f64,
    })
}

/// Exponential fit of each CMI tail plus the algebraic pre-Markov window.
pub fn markov_length(scans: &[(f64, Vec<f64>, Vec<f64>)], policy: WindowPolicy) -> Vec<MarkovFit> {
    scans
        .iter()
        .map(|(t, r, i)| MarkovFit {
            t: *t,
            fit: fit_exponential_length(r, i, policy),
            algebraic: algebraic_window(r, i, 0.15),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{neel_state, DEFAULT_SECTOR_CAP};
    use crate::exact_evolver::{evolve, DiagonalGenerator};
    use crate::krylov::KrylovOptions;
    use nalgebra::{DMatrix, SymmetricEigen};

    const CAP: usize = DEFAULT_SECTOR_CAP;

    fn two_site() -> SectorDistribution {
        let l = Lattice::chain(2);
        let g = DiagonalGenerator::build(&l, 1.0, 1, CAP).unwrap();
        evolve(&neel_state(&l, CAP).unwrap(), &g, 2f64.ln() / 2.0, KrylovOptions::default()).unwrap().0
    }

    #[test]
    fn two_site_values() {
        let d = two_site();
        assert!((renyi2(&d, 0, 1).unwrap() - 0.3).abs() < 1e-10);
        assert!((renyi2(&d, 1, 0).unwrap() - 0.3).abs() < 1e-10);
        assert!((renyi1(&d, 0, 1).unwrap() - 0.1875f64.sqrt()).abs() < 1e-10);
        assert!((renyi_susceptibility(&d, RenyiIndex::Two) - 0.15).abs() < 1e-10);
    }

    #[test]
    fn point_mass_and_uniform() {
        let neel = neel_state(&Lattice::chain(6), CAP).unwrap();
        for (i, j) in [(0, 1), (2, 5), (4, 1)] {
            assert_eq!(renyi2(&neel, i, j).unwrap(), 0.0);
            assert_eq!(renyi1(&neel, i, j).unwrap(), 0.0);
        }
        assert_eq!(renyi_susceptibility(&neel, RenyiIndex::Two), 0.0);
        let u = SectorDistribution::uniform(&Lattice::chain(2), 1, CAP).unwrap();
        assert!((renyi2(&u, 0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((renyi1(&u, 0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(renyi2(&u, 0, 0).is_err());
    }

    fn matrix_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
        let e = SymmetricEigen::new(m.clone());
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    }

    #[test]
    fn fidelity_correlator_equals_c1() {
        let l = Lattice::chain(5);
        let g = DiagonalGenerator::build(&l, 0.8, 2, CAP).unwrap();
        let init = SectorDistribution::point_mass(&l, crate::config_space::ChargeConfiguration(0b00011), CAP).unwrap();
        let d = evolve(&init, &g, 0.9, KrylovOptions::default()).unwrap().0;
        let n = d.probs.len();
        let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.probs.clone()));
        for (i, j) in [(0usize, 3usize), (4, 1), (2, 3)] {
            let mut o = DMatrix::zeros(n, n);
            for r in 0..n {
                let s = d.sector.unrank(r);
                if s >> i & 1 == 0 && s >> j & 1 == 1 {
                    o[(d.sector.rank(s ^ 1 << i ^ 1 << j), r)] = 1.0;
                }
            }
            let sigma = &o * &rho * o.transpose();
            let sr = matrix_sqrt(&rho);
            let fid = matrix_sqrt(&(&sr * &sigma * &sr)).trace();
            let r1 = (&sr * &o * &sr * o.transpose()).trace();
            let c1 = renyi1(&d, i, j).unwrap();
            assert!((fid - c1).abs() < 1e-10);
            assert!((r1 - c1).abs() < 1e-12);
            let r2 = (&o * &rho * o.transpose() * &rho).trace() / (&rho * &rho).trace();
            assert!((r2 - renyi2(&d, i, j).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_translation_and_symmetry() {
        let l = Lattice::ring(8);
        let g = DiagonalGenerator::build(&l, 1.0, 4, CAP).unwrap();
        let d = evolve(&neel_state(&l, CAP).unwrap(), &g, 0.7, KrylovOptions::default()).unwrap().0;
        for q in [RenyiIndex::One, RenyiIndex::Two] {
            let c02 = correlator(&d, q, 0, 3, Insertion::Symmetrized).unwrap();
            let c24 = correlator(&d, q, 2, 5, Insertion::Symmetrized).unwrap();
            let c30 = correlator(&d, q, 3, 0, Insertion::Symmetrized).unwrap();
            assert!((c02 - c24).abs() < 1e-12);
            assert!((c02 - c30).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&c02));
        }
    }

    #[test]
    fn susceptibility_matches_pair_sum() {
        let l = Lattice::chain(6);
        let g = DiagonalGenerator::build(&l, 0.5, 3, CAP).unwrap();
        let d = evolve(&neel_state(&l, CAP).unwrap(), &g, 1.1, KrylovOptions::default()).unwrap().0;
        for q in [RenyiIndex::One, RenyiIndex::Two] {
            let mut s = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    if i != j {
                        s += correlator(&d, q, i, j, Insertion::Single).unwrap();
                    }
                }
            }
            assert!((renyi_susceptibility(&d, q) - s / 36.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cmi_examples() {
        let u = SectorDistribution::uniform(&Lattice::chain(3), 1, CAP).unwrap();
        let i = cmi(&u, &[0], &[1], &[2]).unwrap();
        // brute force: configurations 100, 010, 001 each with weight 1/3
        let h = |p: &[f64]| -> f64 { p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum() };
        let s_ab = h(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let s_bc = s_ab;
        let s_b = h(&[2.0 / 3.0, 1.0 / 3.0]);
        let s_abc = 3f64.ln();
        assert!((i - (s_ab + s_bc - s_b - s_abc)).abs() < 1e-12);
        assert!((i - (2.0 / 3.0) * 2f64.ln()).abs() < 1e-12);
        let neel = neel_state(&Lattice::chain(8), CAP).unwrap();
        assert!(cmi(&neel, &[0, 1], &[2, 3], &[4, 5]).unwrap().abs() < 1e-12);
        assert!(cmi(&neel, &[0], &[0], &[2]).is_err());
    }

    #[test]
    fn covering_and_interior_paths_agree_with_marginals() {
        let l = Lattice::chain(8);
        let g = DiagonalGenerator::build(&l, 1.0, 4, CAP).unwrap();
        let d = evolve(&neel_state(&l, CAP).unwrap(), &g, 0.6, KrylovOptions::default()).unwrap().0;
        let (a, b, c) = geometry_sites(&l, CmiGeometry::Covering, 2).unwrap();
        assert_eq!(a.len() + b.len() + c.len(), 8);
        let via_cover = cmi(&d, &a, &b, &c).unwrap();
        let ent = |s: &[usize]| crate::config_space::marginal(&d, s).unwrap().entropy();
        let ab: Vec<usize> = a.iter().chain(&b).copied().collect();
        let bc: Vec<usize> = b.iter().chain(&c).copied().collect();
        let all: Vec<usize> = (0..8).collect();
        let direct = ent(&ab) + ent(&bc) - ent(&b) - ent(&all);
        assert!((via_cover - direct).abs() < 1e-12);
        assert!(via_cover > -1e-10);
        let (a, b, c) = geometry_sites(&l, CmiGeometry::Interior, 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (1, 3, 1));
        assert!(cmi(&d, &a, &b, &c).unwrap() > -1e-10);
    }

    #[test]
    fn exponential_fits() {
        let x: Vec<f64> = (1..=20).map(|v| v as f64).collect();
        let c: Vec<f64> = x.iter().map(|v| (-v / 5.0).exp()).collect();
        let f = fit_exponential_length(&x, &c, WindowPolicy::default()).unwrap();
        assert!((f.xi - 5.0).abs() < 1e-9);
        let noisy: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(k, v)| 0.3 * (-v / 7.0).exp() + 1e-6 * ((k * 7919 % 13) as f64 / 6.0 - 1.0))
            .collect();
        let f = fit_exponential_length(&x, &noisy, WindowPolicy::default()).unwrap();
        assert!((f.xi / 7.0 - 1.0).abs() < 0.01);
        let zeros = vec![0.0; 20];
        assert!(fit_exponential_length(&x, &zeros, WindowPolicy::default()).is_err());
        let rising: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!(fit_exponential_length(&x, &rising, WindowPolicy::default()).is_err());
    }

    #[test]
    fn algebraic_window_detects_power_law() {
        let r: Vec<f64> = (1..=12).map(|v| v as f64).collect();
        let i: Vec<f64> = r.iter().map(|v| v.powf(-1.3)).collect();
        let w = algebraic_window(&r, &i, 0.05).unwrap();
        assert!((w.alpha - 1.3).abs() < 1e-9);
        let fits = markov_length(&[(1.0, r.clone(), vec![0.0; 12])], WindowPolicy::default());
        assert!(fits[0].fit.is_err());
    }
}
