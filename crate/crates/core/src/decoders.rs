//! Charge decoders: infer the charge of the left half from a window of the right half.
//!
//! Positions are 1-based on a chain of `2L` sites (site index = position - 1).
//! The Néel start occupies the odd positions, region A is `1..=L` and the
//! window B is `L+1..=L+R_B`. Worldlines never cross, so the leftmost
//! particle in B started at `x1 = 2 N_A + 1`.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{Lattice, SectorDistribution};
use crate::error::{Error, Result};
use crate::ssep_sampler::{derive_seed, rng_from, Engine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingInstance {
    /// Half length: the chain has `2L` sites and `L` particles.
    pub l: usize,
    pub gamma: f64,
    pub t: f64,
    /// Occupations of positions `L+1 ..= L+R_B`.
    pub observed: Vec<u8>,
    pub n_a_true: usize,
}

impl DecodingInstance {
    pub fn r_b(&self) -> usize {
        self.observed.len()
    }

    /// Occupied positions in B, ascending.
    pub fn positions(&self) -> Vec<i64> {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == 1)
            .map(|(k, _)| (self.l + 1 + k) as i64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Com,
    Mwpm,
    Height,
    Optimal,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Com => "com",
            Self::Mwpm => "mwpm",
            Self::Height => "height",
            Self::Optimal => "optimal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "com" => Ok(Self::Com),
            "mwpm" => Ok(Self::Mwpm),
            "height" => Ok(Self::Height),
            "optimal" => Ok(Self::Optimal),
            _ => Err(Error::InvalidInput(format!("unknown decoder '{s}'"))),
        }
    }
}

/// Number of positive odd integers strictly below `x1`.
fn odd_count_below(x1: i64) -> usize {
    if x1 <= 1 {
        0
    } else {
        ((x1 - 1) / 2) as usize
    }
}

/// Centre-of-mass decoder; `None` when B is empty.
pub fn decode_com(inst: &DecodingInstance) -> Option<usize> {
    let y = inst.positions();
    let nb = y.len() as i64;
    if nb == 0 {
        return None;
    }
    let ybar = y.iter().sum::<i64>() as f64 / nb as f64;
    let p = (nb % 2) as f64;
    let xstar = p + 2.0 * ((ybar - p) / 2.0).round();
    let x1 = xstar as i64 - (nb - 1);
    Some(odd_count_below(x1))
}

fn mwpm_cost(z: &[i64], x1: i64) -> i64 {
    z.iter().map(|&v| (v - x1).abs()).sum()
}

/// Odd `x1` window searched by the matching decoder.
pub fn mwpm_window(inst: &DecodingInstance) -> (i64, i64) {
    let nb = inst.positions().len() as f64;
    let drift = (6.0 * (inst.gamma * inst.t * nb).sqrt()).ceil() as i64;
    (1 - 2 * drift, 2 * inst.l as i64)
}

fn odd_in(lo: i64, hi: i64) -> impl Iterator<Item = i64> {
    let start = if lo.rem_euclid(2) == 1 { lo } else { lo + 1 };
    (start..=hi).step_by(2)
}

/// All odd minimizers of `sum_i |y_i - (x1 + 2(i-1))|` inside the window.
pub fn mwpm_minimizers(inst: &DecodingInstance) -> Vec<i64> {
    let y = inst.positions();
    let (wlo, whi) = mwpm_window(inst);
    if y.is_empty() {
        return odd_in(wlo, whi).collect();
    }
    let mut z: Vec<i64> = y.iter().enumerate().map(|(i, &v)| v - 2 * i as i64).collect();
    z.sort_unstable();
    let n = z.len();
    let (lo, hi) = if n % 2 == 1 { (z[n / 2], z[n / 2]) } else { (z[n / 2 - 1], z[n / 2]) };
    // cost is convex in x1 and flat on [lo, hi]
    let mut cands: Vec<i64> = odd_in(lo, hi).collect();
    if cands.is_empty() {
        cands = vec![lo - 1, hi + 1];
    }
    cands.retain(|&x| x >= wlo && x <= whi);
    if cands.is_empty() {
        let edge = if hi < wlo { odd_in(wlo, whi).next().unwrap() } else { odd_in(wlo, whi).last().unwrap() };
        return vec![edge];
    }
    let best = cands.iter().map(|&x| mwpm_cost(&z, x)).min().unwrap();
    cands.into_iter().filter(|&x| mwpm_cost(&z, x) == best).collect()
}

/// Exhaustive scan of the window, for testing.
pub fn mwpm_minimizers_brute(inst: &DecodingInstance) -> Vec<i64> {
    let y = inst.positions();
    let z: Vec<i64> = y.iter().enumerate().map(|(i, &v)| v - 2 * i as i64).collect();
    let (wlo, whi) = mwpm_window(inst);
    let costs: Vec<(i64, i64)> = odd_in(wlo, whi).map(|x| (x, mwpm_cost(&z, x))).collect();
    let best = costs.iter().map(|c| c.1).min().unwrap();
    costs.into_iter().filter(|c| c.1 == best).map(|c| c.0).collect()
}

/// Inferred `N_A` for each tied minimizer.
pub fn mwpm_candidates(inst: &DecodingInstance) -> Vec<usize> {
    mwpm_minimizers(inst).into_iter().map(odd_count_below).collect()
}

/// Matching decoder with uniform random tie-breaking.
pub fn decode_mwpm(inst: &DecodingInstance, rng: &mut impl Rng) -> (usize, usize) {
    let c = mwpm_candidates(inst);
    let k = if c.len() == 1 { 0 } else { rng.random_range(0..c.len()) };
    (c[k], c.len())
}

/// Offset `h(L)` chosen by the height decoder.
pub fn height_offset(inst: &DecodingInstance) -> i64 {
    let mut h = 0i64;
    let mut sum = 0i64;
    for &o in &inst.observed {
        h += 2 * o as i64 - 1;
        sum += h;
    }
    let r = inst.r_b().max(1) as f64;
    let target = 0.5 - sum as f64 / r;
    let parity = (inst.l % 2) as i64;
    let below = {
        let f = target.floor() as i64;
        if f.rem_euclid(2) == parity {
            f
        } else {
            f - 1
        }
    };
    let above = below + 2;
    let (db, da) = ((target - below as f64).abs(), (above as f64 - target).abs());
    if db < da || (db == da && below.abs() <= above.abs()) {
        below
    } else {
        above
    }
}

/// Exhaustive offset scan, for testing.
pub fn height_offset_brute(inst: &DecodingInstance) -> i64 {
    let l = inst.l as i64;
    let rel: Vec<i64> = inst
        .observed
        .iter()
        .scan(0i64, |h, &o| {
            *h += 2 * o as i64 - 1;
            Some(*h)
        })
        .collect();
    let r = rel.len().max(1) as f64;
    let mut best = (f64::INFINITY, i64::MAX);
    for h in (-l..=l).filter(|h| (h - l).rem_euclid(2) == 0) {
        let avg = rel.iter().map(|v| (v + h) as f64).sum::<f64>() / r;
        let d = (avg - 0.5).abs();
        if d < best.0 - 1e-12 || ((d - best.0).abs() <= 1e-12 && h.abs() < best.1.abs()) {
            best = (d, h);
        }
    }
    best.1
}

/// Height decoder: `N_A = (h(L) + L) / 2`.
pub fn decode_height(inst: &DecodingInstance) -> usize {
    let h = height_offset(inst);
    ((h + inst.l as i64) / 2).clamp(0, inst.l as i64) as usize
}

/// `P(N_A, s_B)` for one window, from an exact chain distribution.
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    pub l: usize,
    pub r_b: usize,
    pub joint: HashMap<u64, Vec<f64>>,
}

impl PosteriorTable {
    /// Compresses A to its total charge and keeps B resolved.
    pub fn from_distribution(dist: &SectorDistribution, r_b: usize) -> Result<Self> {
        let n = dist.n_sites();
        if dist.lattice.dim() != 1 || n % 2 != 0 || dist.charge() != n / 2 {
            return Err(Error::InvalidInput("optimal decoding needs a half-filled chain of 2L sites".into()));
        }
        let l = n / 2;
        if r_b > l {
            return Err(Error::InvalidInput(format!("R_B = {r_b} exceeds L = {l}")));
        }
        let mask_a = (1u64 << l) - 1;
        let mask_b = ((1u64 << r_b) - 1) << l;
        let mut joint: HashMap<u64, Vec<f64>> = HashMap::new();
        for (r, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = dist.sector.unrank(r);
            let key = (s & mask_b) >> l;
            let na = (s & mask_a).count_ones() as usize;
            joint.entry(key).or_insert_with(|| vec![0.0; l + 1])[na] += p;
        }
        Ok(Self { l, r_b, joint })
    }

    fn key(observed: &[u8]) -> u64 {
        observed.iter().enumerate().fold(0u64, |k, (i, &o)| k | (o as u64) << i)
    }

    /// Argmax of `P(N_A | s_B)` with smallest-index tie-break, and its posterior mass.
    pub fn decode(&self, observed: &[u8]) -> Result<(usize, f64)> {
        let row = self
            .joint
            .get(&Self::key(observed))
            .ok_or_else(|| Error::InvalidInput("window configuration has zero probability".into()))?;
        let z: f64 = row.iter().sum();
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        Ok((best, row[best] / z))
    }

    /// Average Bayes success `sum_{s_B} max_N P(N, s_B)`.
    pub fn bayes_success(&self) -> f64 {
        self.joint.values().map(|row| row.iter().cloned().fold(0.0, f64::max)).sum()
    }
}

pub fn decode_optimal(inst: &DecodingInstance, table: &PosteriorTable) -> Result<(usize, f64)> {
    if table.r_b != inst.r_b() || table.l != inst.l {
        return Err(Error::InvalidInput("posterior table does not match the instance geometry".into()));
    }
    table.decode(&inst.observed)
}

/// Success probability of a heuristic on one instance (tie-averaged for matching).
pub fn heuristic_success(kind: DecoderKind, inst: &DecodingInstance) -> f64 {
    match kind {
        DecoderKind::Com => (decode_com(inst) == Some(inst.n_a_true)) as u8 as f64,
        DecoderKind::Height => (decode_height(inst) == inst.n_a_true) as u8 as f64,
        DecoderKind::Mwpm => {
            let c = mwpm_candidates(inst);
            c.iter().filter(|&&n| n == inst.n_a_true).count() as f64 / c.len() as f64
        }
        DecoderKind::Optimal => panic!("optimal decoder needs a posterior table"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderReport {
    pub decoder: DecoderKind,
    pub t: f64,
    pub r_b: usize,
    pub trials: usize,
    pub successes: usize,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Trials in which the matching decoder broke a tie.
    pub ties: usize,
}

/// Wilson score interval at `z` standard deviations.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let d = 1.0 + z * z / n;
    let c = (p + z * z / (2.0 * n)) / d;
    let h = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / d;
    ((c - h).max(0.0), (c + h).min(1.0))
}

impl DecoderReport {
    pub fn new(decoder: DecoderKind, t: f64, r_b: usize, trials: usize, successes: usize, ties: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, trials, 1.96);
        Self { decoder, t, r_b, trials, successes, p: successes as f64 / trials.max(1) as f64, ci_lo, ci_hi, ties }
    }

    pub fn stderr(&self) -> f64 {
        (self.p * (1.0 - self.p) / self.trials.max(1) as f64).sqrt()
    }
}

/// Simulated segment around the cut, with the cut bond tagged as axis 1.
struct Segment {
    first_pos: usize,
    bonds: Vec<(usize, usize)>,
    axis: Vec<usize>,
    initial: Vec<u8>,
}

/// Light-cone margin: sites further than this from the window cannot affect it
/// within time `t` except with probability far below `1e-12`.
pub fn segment_margin(gamma: f64, t: f64) -> usize {
    (12.0 * (gamma * t).sqrt()).ceil() as usize + 20
}

impl Segment {
    fn new(l: usize, r_max: usize, margin: usize) -> Self {
        let first_pos = (l + 1).saturating_sub(margin).max(1);
        let last_pos = (l + r_max + margin).min(2 * l);
        let n = last_pos - first_pos + 1;
        let bonds: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let cut = l - first_pos; // bond between positions L and L+1
        let axis = (0..n - 1).map(|b| usize::from(b == cut)).collect();
        let initial = (0..n).map(|i| ((first_pos + i) % 2) as u8).collect();
        Self { first_pos, bonds, axis, initial }
    }
}

/// Monte Carlo success curves of the heuristic decoders from the Néel start.
///
/// Only a segment of `R_max + 2 * margin` sites around the cut is simulated;
/// the true `N_A` follows from the net particle current through the cut bond.
pub fn benchmark(
    decoders: &[DecoderKind],
    l: usize,
    gamma: f64,
    times: &[f64],
    r_b: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<DecoderReport>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if decoders.contains(&DecoderKind::Optimal) {
        return Err(Error::InvalidInput("the optimal decoder runs on exact instances; use exact_comparison".into()));
    }
    if l % 2 != 0 {
        return Err(Error::InvalidInput("L must be even so the window starts on an occupied Néel site".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidInput("times must be nonnegative and nondecreasing".into()));
    }
    let r_max = *r_b.iter().max().unwrap_or(&1);
    if r_max > l {
        return Err(Error::InvalidInput("R_B must not exceed L".into()));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let seg = Segment::new(l, r_max, segment_margin(gamma, t_max));
    let nd = decoders.len();
    let (nt, nr) = (times.len(), r_b.len());
    let blocks = 64.min(trials);
    // counts[t][r][d] = (successes, ties)
    let partial: Vec<Vec<Vec<Vec<(usize, usize)>>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut counts = vec![vec![vec![(0usize, 0usize); nd]; nr]; nt];
            let count = trials / blocks + usize::from(b < trials % blocks);
            for k in 0..count {
                let stream = derive_seed(seed, (b * 1_000_003 + k) as u64);
                let mut eng = Engine::from_bonds(&seg.bonds, &seg.axis, 2, gamma, &seg.initial, rng_from(stream));
                let mut tie_rng: ChaCha8Rng = rng_from(derive_seed(stream, 0x7135));
                for (ti, &t) in times.iter().enumerate() {
                    eng.advance_to(t, |_| {});
                    let n_a = (l / 2) as i64 - eng.n_plus[1] as i64 + eng.n_minus[1] as i64;
                    let off = l + 1 - seg.first_pos;
                    for (ri, &r) in r_b.iter().enumerate() {
                        let inst = DecodingInstance {
                            l,
                            gamma,
                            t,
                            observed: eng.occ[off..off + r].to_vec(),
                            n_a_true: n_a as usize,
                        };
                        for (di, &d) in decoders.iter().enumerate() {
                            let (ok, tie) = match d {
                                DecoderKind::Com => (decode_com(&inst) == Some(inst.n_a_true), false),
                                DecoderKind::Height => (decode_height(&inst) == inst.n_a_true, false),
                                DecoderKind::Mwpm => {
                                    let (n, c) = decode_mwpm(&inst, &mut tie_rng);
                                    (n == inst.n_a_true, c > 1)
                                }
                                DecoderKind::Optimal => unreachable!(),
                            };
                            let e = &mut counts[ti][ri][di];
                            e.0 += ok as usize;
                            e.1 += tie as usize;
                        }
                    }
                }
            }
            counts
        })
        .collect();
    let mut out = Vec::with_capacity(nd * nt * nr);
    for (di, &d) in decoders.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate() {
            for (ri, &r) in r_b.iter().enumerate() {
                let (s, ties) = partial.iter().fold((0, 0), |acc, p| (acc.0 + p[ti][ri][di].0, acc.1 + p[ti][ri][di].1));
                out.push(DecoderReport::new(d, t, r, trials, s, ties));
            }
        }
    }
    Ok(out)
}

/// All four decoders on one exact small chain at one `(t, R_B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactComparison {
    pub t: f64,
    pub r_b: usize,
    /// Exact success probabilities, ordered com, mwpm, height, optimal.
    pub exact: [f64; 4],
    /// Sampled reports on shared trials drawn from the exact distribution.
    pub sampled: Vec<DecoderReport>,
    /// Standard error of the paired difference optimal minus each heuristic.
    pub paired_stderr: [f64; 3],
}

fn instance_from_bits(s: u64, l: usize, gamma: f64, t: f64, r_b: usize) -> DecodingInstance {
    let observed = (0..r_b).map(|k| ((s >> (l + k)) & 1) as u8).collect();
    let n_a_true = (s & ((1u64 << l) - 1)).count_ones() as usize;
    DecodingInstance { l, gamma, t, observed, n_a_true }
}

/// Exact and sampled decoder success on an evolved distribution.
pub fn exact_comparison(dist: &SectorDistribution, gamma: f64, t: f64, r_b: usize, trials: usize, seed: u64) -> Result<ExactComparison> {
    let table = PosteriorTable::from_distribution(dist, r_b)?;
    let l = table.l;
    let heur = [DecoderKind::Com, DecoderKind::Mwpm, DecoderKind::Height];
    let mut exact = [0.0; 4];
    for (r, &p) in dist.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let inst = instance_from_bits(dist.sector.unrank(r), l, gamma, t, r_b);
        for (k, &d) in heur.iter().enumerate() {
            exact[k] += p * heuristic_success(d, &inst);
        }
    }
    exact[3] = table.bayes_success();
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for &p in &dist.probs {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = rng_from(seed);
    let mut succ = [0usize; 4];
    let mut ties = 0usize;
    let mut diffs: [Vec<f64>; 3] = Default::default();
    for _ in 0..trials {
        let u: f64 = rng.random::<f64>() * acc;
        let r = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let inst = instance_from_bits(dist.sector.unrank(r), l, gamma, t, r_b);
        let ok_com = decode_com(&inst) == Some(inst.n_a_true);
        let (n_m, c) = decode_mwpm(&inst, &mut rng);
        ties += (c > 1) as usize;
        let ok_mwpm = n_m == inst.n_a_true;
        let ok_h = decode_height(&inst) == inst.n_a_true;
        let ok_opt = table.decode(&inst.observed)?.0 == inst.n_a_true;
        for (k, ok) in [ok_com, ok_mwpm, ok_h, ok_opt].into_iter().enumerate() {
            succ[k] += ok as usize;
        }
        for (k, ok) in [ok_com, ok_mwpm, ok_h].into_iter().enumerate() {
            diffs[k].push(ok_opt as u8 as f64 - ok as u8 as f64);
        }
    }
    let kinds = [DecoderKind::Com, DecoderKind::Mwpm, DecoderKind::Height, DecoderKind::Optimal];
    let sampled = kinds
        .iter()
        .enumerate()
        .map(|(k, &d)| DecoderReport::new(d, t, r_b, trials, succ[k], if d == DecoderKind::Mwpm { ties } else { 0 }))
        .collect();
    let paired_stderr = [0, 1, 2].map(|k| crate::ssep_sampler::mean_se(&diffs[k]).1);
    Ok(ExactComparison { t, r_b, exact, sampled, paired_stderr })
}

/// The decoding chain: `2L` open sites.
pub fn decoding_lattice(l: usize) -> Lattice {
    Lattice::chain(2 * l)
}
