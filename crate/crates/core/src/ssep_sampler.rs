//! Continuous-time Monte Carlo of the SSEP.
//!
//! Every bond carries a Poisson clock of rate `gamma`; when it rings the two
//! occupations are swapped. A ring on a bond whose ends agree is a no-op and
//! is logged with direction 0. Real hops update directed counters per axis,
//! from which winding numbers `W = (N+ - N-) / L` follow on periodic axes.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{Boundary, ChargeConfiguration, Lattice, Sector, DEFAULT_SECTOR_CAP};
use crate::diagnostics::RenyiIndex;
use crate::error::{Error, Result};
use crate::exact_evolver::DiagonalGenerator;
use crate::krylov::{expv, KrylovOptions, LinearOperator};

/// SplitMix64 step, used to derive independent stream seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Clock {
    time: f64,
    bond: u32,
}

impl Eq for Clock {}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on time, ties by bond index
        other.time.total_cmp(&self.time).then_with(|| other.bond.cmp(&self.bond))
    }
}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One clock ring. `dir` is `+1` for a hop along the bond's positive
/// direction, `-1` against it, `0` for a no-op swap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub time: f64,
    pub bond: u32,
    pub dir: i8,
}

/// Resumable Gillespie engine with one Poisson clock per bond.
pub struct Engine<'a> {
    bonds: &'a [(usize, usize)],
    bond_axis: &'a [usize],
    pub occ: Vec<u8>,
    pub time: f64,
    pub n_plus: Vec<u64>,
    pub n_minus: Vec<u64>,
    heap: BinaryHeap<Clock>,
    wait: Exp<f64>,
    rng: ChaCha8Rng,
}

impl<'a> Engine<'a> {
    pub fn new(lattice: &'a Lattice, gamma: f64, initial: &[u8], rng: ChaCha8Rng) -> Self {
        Self::from_bonds(&lattice.bonds, &lattice.bond_axis, lattice.dim(), gamma, initial, rng)
    }

    pub fn from_bonds(
        bonds: &'a [(usize, usize)],
        bond_axis: &'a [usize],
        axes: usize,
        gamma: f64,
        initial: &[u8],
        mut rng: ChaCha8Rng,
    ) -> Self {
        assert!(gamma > 0.0, "gamma must be positive");
        let wait = Exp::new(gamma).expect("positive rate");
        let mut heap = BinaryHeap::with_capacity(bonds.len());
        for b in 0..bonds.len() {
            heap.push(Clock { time: wait.sample(&mut rng), bond: b as u32 });
        }
        Self {
            bonds,
            bond_axis,
            occ: initial.to_vec(),
            time: 0.0,
            n_plus: vec![0; axes],
            n_minus: vec![0; axes],
            heap,
            wait,
            rng,
        }
    }

    /// Runs all clock rings up to `t_end`, reporting each to `sink`.
    pub fn advance_to(&mut self, t_end: f64, mut sink: impl FnMut(SwapEvent)) {
        loop {
            let top = match self.heap.peek() {
                Some(c) if c.time <= t_end => *c,
                _ => break,
            };
            self.heap.pop();
            let (i, j) = self.bonds[top.bond as usize];
            let (a, b) = (self.occ[i], self.occ[j]);
            let dir = if a == b {
                0
            } else {
                self.occ[i] = b;
                self.occ[j] = a;
                let axis = self.bond_axis[top.bond as usize];
                if a == 1 {
                    self.n_plus[axis] += 1;
                    1
                } else {
                    self.n_minus[axis] += 1;
                    -1
                }
            };
            sink(SwapEvent { time: top.time, bond: top.bond, dir });
            let next = top.time + self.wait.sample(&mut self.rng);
            self.heap.push(Clock { time: next, bond: top.bond });
        }
        self.time = t_end.max(self.time);
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub initial: Vec<u8>,
    pub duration: f64,
    pub events: Vec<SwapEvent>,
    #[serde(rename = "final")]
    pub final_config: Vec<u8>,
    pub n_plus: Vec<u64>,
    pub n_minus: Vec<u64>,
}

impl TrajectoryRecord {
    /// Replays the event list from the initial configuration.
    pub fn replay(&self, lattice: &Lattice) -> Vec<u8> {
        let mut occ = self.initial.clone();
        for e in &self.events {
            let (i, j) = lattice.bonds[e.bond as usize];
            occ.swap(i, j);
        }
        occ
    }

    /// `W_mu = (N+ - N-) / L_mu` on periodic axes, `None` elsewhere.
    pub fn winding(&self, lattice: &Lattice) -> Vec<Option<f64>> {
        winding_numbers(lattice, &self.n_plus, &self.n_minus)
    }
}

pub fn winding_numbers(lattice: &Lattice, n_plus: &[u64], n_minus: &[u64]) -> Vec<Option<f64>> {
    (0..lattice.dim())
        .map(|a| {
            (lattice.boundary[a] == Boundary::Periodic)
                .then(|| (n_plus[a] as f64 - n_minus[a] as f64) / lattice.extents[a] as f64)
        })
        .collect()
}

pub fn sample_trajectory(lattice: &Lattice, gamma: f64, initial: &[u8], t: f64, seed: u64) -> Result<TrajectoryRecord> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("T must be >= 0, got {t}")));
    }
    check_initial(lattice, initial)?;
    let mut eng = Engine::new(lattice, gamma, initial, rng_from(seed));
    let mut events = Vec::new();
    eng.advance_to(t, |e| events.push(e));
    Ok(TrajectoryRecord {
        initial: initial.to_vec(),
        duration: t,
        events,
        final_config: eng.occ.clone(),
        n_plus: eng.n_plus.clone(),
        n_minus: eng.n_minus.clone(),
    })
}

fn check_initial(lattice: &Lattice, initial: &[u8]) -> Result<()> {
    if initial.len() != lattice.n_sites() || initial.iter().any(|&o| o > 1) {
        return Err(Error::InvalidInput("initial configuration must be 0/1 per site".into()));
    }
    Ok(())
}

/// Number of sample blocks used to shard Monte Carlo work.
const BLOCKS: usize = 64;

fn block_sizes(samples: usize) -> Vec<usize> {
    let nb = BLOCKS.min(samples.max(1));
    (0..nb).map(|b| samples / nb + usize::from(b < samples % nb)).collect()
}

/// Mean occupation per site and time with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEstimate {
    pub times: Vec<f64>,
    pub samples: usize,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

pub fn sample_profiles(
    lattice: &Lattice,
    gamma: f64,
    initial: &[u8],
    times: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ProfileEstimate> {
    check_initial(lattice, initial)?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidInput("times must be nonnegative and nondecreasing".into()));
    }
    let n = lattice.n_sites();
    let sizes = block_sizes(samples);
    let partial: Vec<Vec<Vec<u64>>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &count)| {
            let mut counts = vec![vec![0u64; n]; times.len()];
            for k in 0..count {
                let mut eng = Engine::new(lattice, gamma, initial, rng_from(derive_seed(seed, (b * 1_000_003 + k) as u64)));
                for (ti, &t) in times.iter().enumerate() {
                    eng.advance_to(t, |_| {});
                    for (c, &o) in counts[ti].iter_mut().zip(&eng.occ) {
                        *c += o as u64;
                    }
                }
            }
            counts
        })
        .collect();
    let mut mean = vec![vec![0.0; n]; times.len()];
    let mut stderr = vec![vec![0.0; n]; times.len()];
    for ti in 0..times.len() {
        for i in 0..n {
            let c: u64 = partial.iter().map(|p| p[ti][i]).sum();
            let m = c as f64 / samples as f64;
            mean[ti][i] = m;
            stderr[ti][i] = (m * (1.0 - m) / samples.max(2) as f64).sqrt();
        }
    }
    Ok(ProfileEstimate { times: times.to_vec(), samples, mean, stderr })
}

/// Winding fluctuations of accepted trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindingStatistics {
    pub samples: usize,
    pub attempts: u64,
    pub acceptance: f64,
    /// Per periodic axis.
    pub mean_w: Vec<f64>,
    pub mean_w2: Vec<f64>,
    /// Axis-averaged `<W^2>` (Rényi-2) or outcome-averaged `Var(W)` (disorder).
    pub rho: f64,
    pub rho_stderr: f64,
    pub all_integer: bool,
}

fn periodic_axes(lattice: &Lattice) -> Result<Vec<usize>> {
    let axes: Vec<usize> = (0..lattice.dim()).filter(|&a| lattice.boundary[a] == Boundary::Periodic).collect();
    if axes.is_empty() {
        return Err(Error::InvalidInput("winding needs at least one periodic axis".into()));
    }
    Ok(axes)
}

pub const DEFAULT_ACCEPTANCE_FLOOR: f64 = 1e-4;

struct Conditioned {
    windings: Vec<Vec<f64>>,
    attempts: u64,
    all_integer: bool,
}

/// Rejection-samples `want` trajectories of duration `t` from `start` ending in `target`.
fn conditioned_windings(
    lattice: &Lattice,
    gamma: f64,
    start: &[u8],
    target: &[u8],
    t: f64,
    want: usize,
    floor: f64,
    rng: &mut ChaCha8Rng,
    axes: &[usize],
) -> Result<Conditioned> {
    let budget = ((want as f64 / floor).ceil() as u64).max(want as u64);
    let mut out = Conditioned { windings: Vec::with_capacity(want), attempts: 0, all_integer: true };
    while out.windings.len() < want {
        if out.attempts >= budget {
            return Err(Error::AcceptanceFloor { rate: out.windings.len() as f64 / out.attempts as f64, floor });
        }
        out.attempts += 1;
        let sub = ChaCha8Rng::seed_from_u64(rng.random());
        let mut eng = Engine::new(lattice, gamma, start, sub);
        eng.advance_to(t, |_| {});
        if eng.occ != target {
            continue;
        }
        let w: Vec<f64> = axes
            .iter()
            .map(|&a| {
                let net = eng.n_plus[a] as i64 - eng.n_minus[a] as i64;
                if net % lattice.extents[a] as i64 != 0 && start == target {
                    out.all_integer = false;
                }
                net as f64 / lattice.extents[a] as f64
            })
            .collect();
        out.windings.push(w);
    }
    Ok(out)
}

/// Rényi-2 winding fluctuation with both temporal boundaries fixed to `s0`.
pub fn renyi2_winding(
    lattice: &Lattice,
    gamma: f64,
    s0: &[u8],
    duration: f64,
    samples: usize,
    seed: u64,
    floor: f64,
) -> Result<WindingStatistics> {
    check_initial(lattice, s0)?;
    let axes = periodic_axes(lattice)?;
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be positive".into()));
    }
    let sizes = block_sizes(samples);
    let blocks: Vec<Result<Conditioned>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &count)| {
            let mut rng = rng_from(derive_seed(seed, b as u64));
            conditioned_windings(lattice, gamma, s0, s0, duration, count, floor, &mut rng, &axes)
        })
        .collect();
    let mut ws = Vec::with_capacity(samples);
    let mut attempts = 0;
    let mut all_integer = true;
    for b in blocks {
        let b = b?;
        attempts += b.attempts;
        all_integer &= b.all_integer;
        ws.extend(b.windings);
    }
    let na = axes.len();
    let n = ws.len() as f64;
    let mean_w: Vec<f64> = (0..na).map(|a| ws.iter().map(|w| w[a]).sum::<f64>() / n).collect();
    let mean_w2: Vec<f64> = (0..na).map(|a| ws.iter().map(|w| w[a] * w[a]).sum::<f64>() / n).collect();
    let per: Vec<f64> = ws.iter().map(|w| w.iter().map(|x| x * x).sum::<f64>() / na as f64).collect();
    let (rho, rho_stderr) = mean_se(&per);
    Ok(WindingStatistics {
        samples: ws.len(),
        attempts,
        acceptance: ws.len() as f64 / attempts as f64,
        mean_w,
        mean_w2,
        rho,
        rho_stderr,
        all_integer,
    })
}

pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::INFINITY);
    }
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Outcome-averaged winding variance.
///
/// Each outer trajectory draws a final configuration `s` and is itself one
/// conditioned sample; `inner - 1` more are rejection-sampled from `s0` with
/// final state `s`. The per-`s` unbiased variance is averaged over outcomes.
pub fn disorder_averaged_winding(
    lattice: &Lattice,
    gamma: f64,
    s0: &[u8],
    t: f64,
    outer: usize,
    inner: usize,
    seed: u64,
    floor: f64,
) -> Result<WindingStatistics> {
    check_initial(lattice, s0)?;
    let axes = periodic_axes(lattice)?;
    if outer == 0 || inner < 2 {
        return Err(Error::InvalidInput("need outer >= 1 and inner >= 2".into()));
    }
    let na = axes.len();
    let results: Vec<Result<(Vec<f64>, Vec<f64>, f64, u64)>> = (0..outer)
        .into_par_iter()
        .map(|o| {
            let mut rng = rng_from(derive_seed(seed, o as u64));
            let sub = ChaCha8Rng::seed_from_u64(rng.random());
            let mut eng = Engine::new(lattice, gamma, s0, sub);
            eng.advance_to(t, |_| {});
            let target = eng.occ.clone();
            let first: Vec<f64> = axes
                .iter()
                .map(|&a| (eng.n_plus[a] as f64 - eng.n_minus[a] as f64) / lattice.extents[a] as f64)
                .collect();
            let mut cond = conditioned_windings(lattice, gamma, s0, &target, t, inner - 1, floor, &mut rng, &axes)?;
            cond.windings.push(first);
            let k = cond.windings.len() as f64;
            let mut mw = vec![0.0; na];
            let mut var = vec![0.0; na];
            for a in 0..na {
                let m = cond.windings.iter().map(|w| w[a]).sum::<f64>() / k;
                mw[a] = m;
                var[a] = cond.windings.iter().map(|w| (w[a] - m).powi(2)).sum::<f64>() / (k - 1.0);
            }
            let avg = var.iter().sum::<f64>() / na as f64;
            Ok((mw, var, avg, cond.attempts + 1))
        })
        .collect();
    let mut per = Vec::with_capacity(outer);
    let mut mean_w = vec![0.0; na];
    let mut mean_var = vec![0.0; na];
    let mut attempts = 0;
    for r in results {
        let (mw, var, avg, att) = r?;
        for a in 0..na {
            mean_w[a] += mw[a] / outer as f64;
            mean_var[a] += var[a] / outer as f64;
        }
        per.push(avg);
        attempts += att;
    }
    let (rho, rho_stderr) = mean_se(&per);
    let accepted = outer * inner;
    Ok(WindingStatistics {
        samples: accepted,
        attempts,
        acceptance: accepted as f64 / attempts as f64,
        mean_w,
        mean_w2: mean_var,
        rho,
        rho_stderr: if outer > 1 { rho_stderr } else { f64::INFINITY },
        all_integer: true,
    })
}

/// Ratio estimate with delta-method standard error over batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn ratio_of_batches(num: &[f64], den: &[f64]) -> Estimate {
    let k = num.len() as f64;
    let mn = num.iter().sum::<f64>() / k;
    let md = den.iter().sum::<f64>() / k;
    let r = mn / md;
    let var = num.iter().zip(den).map(|(a, b)| (a - r * b).powi(2)).sum::<f64>() / (k - 1.0);
    Estimate { value: r, stderr: (var / k).sqrt() / md }
}

/// Final configurations of independent trajectories, grouped into batches.
fn sample_finals(lattice: &Lattice, gamma: f64, s0: &[u8], t: f64, samples: usize, seed: u64, batches: usize) -> Vec<HashMap<Vec<u8>, u64>> {
    let per = samples / batches;
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
            for k in 0..per {
                let mut eng = Engine::new(lattice, gamma, s0, rng_from(derive_seed(seed, (b * 1_000_003 + k) as u64)));
                eng.advance_to(t, |_| {});
                *counts.entry(eng.occ).or_insert(0) += 1;
            }
            counts
        })
        .collect()
}

const COLLISION_BATCHES: usize = 20;

/// Pair-collision estimate of the single-term `C2(i <- j)`.
///
/// Within each batch of `M` finals, `sum_s n_s (n_s - 1) / (M (M - 1))` estimates
/// `sum P^2` and `sum_s n_s n_{s'} / (M (M - 1))` estimates `sum' P(s) P(s')`.
pub fn renyi2_collision(
    lattice: &Lattice,
    gamma: f64,
    s0: &[u8],
    t: f64,
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_initial(lattice, s0)?;
    if i == j || i >= lattice.n_sites() || j >= lattice.n_sites() {
        return Err(Error::InvalidInput("need two distinct sites".into()));
    }
    if samples < 4 * COLLISION_BATCHES {
        return Err(Error::InvalidInput(format!("need at least {} samples", 4 * COLLISION_BATCHES)));
    }
    let finals = sample_finals(lattice, gamma, s0, t, samples, seed, COLLISION_BATCHES);
    let mut num = Vec::new();
    let mut den = Vec::new();
    for counts in &finals {
        let m: u64 = counts.values().sum();
        let pairs = (m * (m - 1)) as f64;
        let mut d = 0.0;
        let mut nu = 0.0;
        for (s, &c) in counts {
            d += (c * (c - 1)) as f64;
            if s[i] == 0 && s[j] == 1 {
                let mut moved = s.clone();
                moved[i] = 1;
                moved[j] = 0;
                nu += (c * counts.get(&moved).copied().unwrap_or(0)) as f64;
            }
        }
        num.push(nu / pairs);
        den.push(d / pairs);
    }
    if den.iter().sum::<f64>() == 0.0 {
        return Err(Error::Numerical("no collisions observed; increase samples".into()));
    }
    Ok(ratio_of_batches(&num, &den))
}

/// Rényi susceptibility: exact on enumerable sectors, collision estimate otherwise.
pub fn renyi_susceptibility_estimate(
    lattice: &Lattice,
    gamma: f64,
    s0: &[u8],
    t: f64,
    q: RenyiIndex,
    samples: usize,
    seed: u64,
    max_rel_stderr: f64,
) -> Result<Estimate> {
    check_initial(lattice, s0)?;
    let charge: usize = s0.iter().map(|&o| o as usize).sum();
    match Sector::new(lattice.n_sites(), charge, DEFAULT_SECTOR_CAP) {
        Ok(_) => {
            let gen = DiagonalGenerator::build(lattice, gamma, charge, DEFAULT_SECTOR_CAP)?;
            let init = crate::config_space::SectorDistribution::point_mass(
                lattice,
                ChargeConfiguration::from_occupations(s0),
                DEFAULT_SECTOR_CAP,
            )?;
            let (d, _) = crate::exact_evolver::evolve(&init, &gen, t, KrylovOptions::default())?;
            Ok(Estimate { value: crate::diagnostics::renyi_susceptibility(&d, q), stderr: 0.0 })
        }
        Err(Error::CapExceeded { .. }) | Err(Error::InvalidInput(_)) => {
            if q == RenyiIndex::One {
                return Err(Error::InvalidInput(
                    "the Rényi-1 susceptibility needs conditional probabilities and is only offered on enumerable sectors".into(),
                ));
            }
            if samples < 4 * COLLISION_BATCHES {
                return Err(Error::InvalidInput(format!("need at least {} samples", 4 * COLLISION_BATCHES)));
            }
            let finals = sample_finals(lattice, gamma, s0, t, samples, seed, COLLISION_BATCHES);
            let n = lattice.n_sites();
            let mut num = Vec::new();
            let mut den = Vec::new();
            for counts in &finals {
                let m: u64 = counts.values().sum();
                let pairs = (m * (m - 1)) as f64;
                let mut d = 0.0;
                let mut nu = 0.0;
                for (s, &c) in counts {
                    d += (c * (c - 1)) as f64;
                    let mut moved = s.clone();
                    for jj in (0..n).filter(|&k| s[k] == 1) {
                        for ii in (0..n).filter(|&k| s[k] == 0) {
                            moved[ii] = 1;
                            moved[jj] = 0;
                            nu += (c * counts.get(&moved).copied().unwrap_or(0)) as f64;
                            moved[ii] = 0;
                            moved[jj] = 1;
                        }
                    }
                }
                num.push(nu / pairs);
                den.push(d / pairs);
            }
            if den.iter().sum::<f64>() == 0.0 {
                return Err(Error::Numerical("no collisions observed; increase samples".into()));
            }
            let l0 = lattice.extents[0] as f64;
            let mut e = ratio_of_batches(&num, &den);
            e.value /= l0 * l0;
            e.stderr /= l0 * l0;
            if e.stderr > max_rel_stderr * e.value.abs() {
                return Err(Error::Numerical(format!(
                    "collision estimate relative error {:.3} above bound {max_rel_stderr}",
                    e.stderr / e.value.abs()
                )));
            }
            Ok(e)
        }
        Err(e) => Err(e),
    }
}

/// Generator on (configuration, net flux along one axis), flux truncated at `f_max`.
struct FluxOperator<'a> {
    gen: &'a DiagonalGenerator,
    axis: usize,
    width: usize,
    f_max: i64,
}

impl LinearOperator for FluxOperator<'_> {
    fn dim(&self) -> usize {
        self.gen.configs().len() * self.width
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.width;
        let g = self.gen.gamma;
        y.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut deg = 0usize;
            self.gen.for_each_move(r, |s, axis, forward| {
                deg += 1;
                let d: i64 = if axis != self.axis {
                    0
                } else if forward {
                    1
                } else {
                    -1
                };
                for (fi, o) in out.iter_mut().enumerate() {
                    let f = fi as i64 - self.f_max + d;
                    if f.abs() <= self.f_max {
                        *o += g * x[s * w + (f + self.f_max) as usize];
                    }
                }
            });
            for (fi, o) in out.iter_mut().enumerate() {
                *o -= g * deg as f64 * x[r * w + fi];
            }
        });
    }
}

/// Exact joint law of the final configuration and the net flux along `axis`.
#[derive(Debug, Clone)]
pub struct ExactWinding {
    pub sector: Sector,
    pub f_max: i64,
    pub extent: usize,
    /// `joint[rank][f + f_max]`
    pub joint: Vec<Vec<f64>>,
    pub leak: f64,
}

impl ExactWinding {
    pub fn compute(lattice: &Lattice, gamma: f64, s0: &[u8], t: f64, axis: usize, f_max: i64) -> Result<Self> {
        check_initial(lattice, s0)?;
        if axis >= lattice.dim() || lattice.boundary[axis] != Boundary::Periodic {
            return Err(Error::InvalidInput("flux axis must be periodic".into()));
        }
        let charge = s0.iter().map(|&o| o as usize).sum();
        let gen = DiagonalGenerator::build(lattice, gamma, charge, DEFAULT_SECTOR_CAP)?;
        let width = (2 * f_max + 1) as usize;
        let op = FluxOperator { gen: &gen, axis, width, f_max };
        let mut v = vec![0.0; op.dim()];
        let r0 = gen.sector.rank(ChargeConfiguration::from_occupations(s0).0);
        v[r0 * width + f_max as usize] = 1.0;
        let (p, _) = expv(&op, t, &v, KrylovOptions { tol: 1e-12, ..Default::default() })?;
        let joint: Vec<Vec<f64>> = p.chunks(width).map(|c| c.iter().map(|x| x.max(0.0)).collect()).collect();
        let leak = 1.0 - joint.iter().flatten().sum::<f64>();
        Ok(Self { sector: gen.sector.clone(), f_max, extent: lattice.extents[axis], joint, leak })
    }

    /// `P(final = s)`.
    pub fn final_prob(&self, rank: usize) -> f64 {
        self.joint[rank].iter().sum()
    }

    /// `(<W>, <W^2>)` conditioned on the final configuration.
    pub fn conditional_moments(&self, rank: usize) -> (f64, f64) {
        let z = self.final_prob(rank);
        let l = self.extent as f64;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (fi, &p) in self.joint[rank].iter().enumerate() {
            let w = (fi as i64 - self.f_max) as f64 / l;
            m1 += p * w;
            m2 += p * w * w;
        }
        (m1 / z, m2 / z)
    }

    /// Outcome-averaged conditional variance of `W`.
    pub fn disorder_variance(&self) -> f64 {
        (0..self.joint.len())
            .map(|r| {
                let z = self.final_prob(r);
                if z <= 0.0 {
                    return 0.0;
                }
                let (m1, m2) = self.conditional_moments(r);
                z * (m2 - m1 * m1)
            })
            .sum()
    }
}

impl DiagonalGenerator {
    /// Calls `f(neighbour_rank, axis, forward)` for every real hop out of `rank`.
    pub fn for_each_move(&self, rank: usize, mut f: impl FnMut(usize, usize, bool)) {
        let bits = self.configs()[rank];
        for (b, &(i, j)) in self.lattice.bonds.iter().enumerate() {
            let (oi, oj) = (bits >> i & 1, bits >> j & 1);
            if oi == oj {
                continue;
            }
            let next = bits ^ (1u64 << i) ^ (1u64 << j);
            f(self.sector.rank(next), self.lattice.bond_axis[b], oi == 1);
        }
    }
}

/// Draws a uniformly random configuration with `charge` particles.
pub fn random_configuration(n: usize, charge: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut occ = vec![0u8; n];
    occ.iter_mut().take(charge).for_each(|o| *o = 1);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        occ.swap(i, j);
    }
    occ
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::neel_configuration;

    #[test]
    fn zero_duration() {
        let l = Lattice::chain(6);
        let init = vec![1, 0, 1, 0, 1, 0];
        let r = sample_trajectory(&l, 1.0, &init, 0.0, 3).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.final_config, init);
    }

    #[test]
    fn replay_and_determinism() {
        let l = Lattice::torus(4, 4);
        let init = neel_configuration(&l).unwrap().occupations(16);
        let a = sample_trajectory(&l, 0.7, &init, 3.0, 11).unwrap();
        let b = sample_trajectory(&l, 0.7, &init, 3.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replay(&l), a.final_config);
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.events.iter().all(|e| e.time <= 3.0));
        let hops: u64 = a.n_plus.iter().chain(&a.n_minus).sum();
        assert_eq!(hops as usize, a.events.iter().filter(|e| e.dir != 0).count());
    }

    #[test]
    fn two_site_frequency() {
        let l = Lattice::chain(2);
        let t = 2f64.ln() / 2.0;
        let est = sample_profiles(&l, 1.0, &[1, 0], &[t], 40_000, 5).unwrap();
        let p = est.mean[0][0];
        let se = (0.75f64 * 0.25 / 40_000.0).sqrt();
        assert!((p - 0.75).abs() < 3.0 * se, "p = {p}");
    }

    #[test]
    fn renyi2_winding_at_zero_time() {
        let l = Lattice::torus(4, 4);
        let s0 = neel_configuration(&l).unwrap().occupations(16);
        let w = renyi2_winding(&l, 1.0, &s0, 0.0, 50, 1, DEFAULT_ACCEPTANCE_FLOOR).unwrap();
        assert_eq!(w.rho, 0.0);
        assert_eq!(w.acceptance, 1.0);
        let d = disorder_averaged_winding(&l, 1.0, &s0, 0.0, 10, 3, 2, DEFAULT_ACCEPTANCE_FLOOR).unwrap();
        assert_eq!(d.rho, 0.0);
    }

    #[test]
    fn acceptance_floor_error() {
        let l = Lattice::torus(4, 4);
        let s0 = neel_configuration(&l).unwrap().occupations(16);
        let r = renyi2_winding(&l, 1.0, &s0, 50.0, 20, 1, 0.2);
        assert!(matches!(r, Err(Error::AcceptanceFloor { .. })));
    }

    #[test]
    fn flux_oracle_marginal_matches_generator() {
        let l = Lattice::torus(4, 2);
        let s0 = neel_configuration(&l).unwrap().occupations(8);
        let ex = ExactWinding::compute(&l, 1.0, &s0, 0.8, 0, 24).unwrap();
        assert!(ex.leak.abs() < 1e-9, "leak {}", ex.leak);
        let gen = DiagonalGenerator::build(&l, 1.0, 4, DEFAULT_SECTOR_CAP).unwrap();
        let init = crate::config_space::neel_state(&l, DEFAULT_SECTOR_CAP).unwrap();
        let (d, _) = crate::exact_evolver::evolve(&init, &gen, 0.8, KrylovOptions::default()).unwrap();
        for r in 0..d.probs.len() {
            assert!((ex.final_prob(r) - d.probs[r]).abs() < 1e-9);
        }
    }

    #[test]
    fn collision_estimator_two_sites() {
        let l = Lattice::chain(2);
        let e = renyi2_collision(&l, 1.0, &[1, 0], 2f64.ln() / 2.0, 0, 1, 20_000, 9).unwrap();
        assert!((e.value - 0.3).abs() < 4.0 * e.stderr, "{e:?}");
    }
}
