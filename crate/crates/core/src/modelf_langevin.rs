//! Lattice Model F: a phase `φ_j` and a conserved density `n_j` per site with
//! free energy `F = (K/2) Σ n² − J Σ_bonds cos(φ_i − φ_j)`.
//!
//! Euler-Maruyama update per step `Δt`:
//! ```text
//! φ_j += Δt [ K n_j − βγ_φ ∂F/∂φ_j ] + sqrt(2γ_φ Δt) g_j
//! n_j += Δt [ −∂F/∂φ_j + βγ_n K (∇²n)_j ] − Σ_bonds∋j ± sqrt(2γ_n Δt) g_b
//! ```
//! Every density change is a bond flux, so `Σ n_j` is conserved up to round-off.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config_space::Lattice;
use crate::error::{Error, Result};
use crate::ssep_sampler::{derive_seed, mean_se, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFParams {
    pub j: f64,
    pub k: f64,
    pub beta: f64,
    pub gamma_phi: f64,
    pub gamma_n: f64,
    pub dt: f64,
}

impl ModelFParams {
    /// Largest step allowed for a lattice of dimension `dim`.
    pub fn max_dt(&self, dim: usize) -> f64 {
        let phase = self.beta * self.gamma_phi * self.j * 4.0 * dim as f64;
        let dens = 4.0 * dim as f64 * self.beta * self.gamma_n * self.k;
        let rate = phase.max(dens);
        if rate == 0.0 {
            f64::INFINITY
        } else {
            0.1 / rate
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let vals = [self.j, self.k, self.beta, self.gamma_phi, self.gamma_n];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidInput("Model F parameters must be finite and non-negative, Δt > 0".into()));
        }
        if self.dt > self.max_dt(dim) {
            return Err(Error::InvalidInput(format!("Δt = {} exceeds the stability bound {}", self.dt, self.max_dt(dim))));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModelFState {
    pub lattice: Lattice,
    pub params: ModelFParams,
    pub phi: Vec<f64>,
    pub n: Vec<f64>,
    pub time: f64,
    /// Wrap phases into `[0, 2π)` after every step.
    pub wrapped: bool,
    rng: ChaCha8Rng,
    flux: Vec<f64>,
}

impl ModelFState {
    pub fn new(lattice: Lattice, params: ModelFParams, phi: Vec<f64>, n: Vec<f64>, seed: u64) -> Result<Self> {
        let sites = lattice.n_sites();
        if phi.len() != sites || n.len() != sites {
            return Err(Error::InvalidInput("field lengths must match the lattice".into()));
        }
        if lattice.boundary.iter().any(|b| *b != crate::config_space::Boundary::Periodic) {
            return Err(Error::InvalidInput("Model F runs on periodic lattices".into()));
        }
        params.validate(lattice.dim())?;
        let flux = vec![0.0; lattice.bonds.len()];
        Ok(Self { lattice, params, phi, n, time: 0.0, wrapped: false, rng: rng_from(seed), flux })
    }

    /// Zero fields.
    pub fn at_rest(lattice: Lattice, params: ModelFParams, seed: u64) -> Result<Self> {
        let s = lattice.n_sites();
        Self::new(lattice, params, vec![0.0; s], vec![0.0; s], seed)
    }

    pub fn free_energy(&self) -> f64 {
        let p = &self.params;
        let kin: f64 = self.n.iter().map(|x| x * x).sum::<f64>() * 0.5 * p.k;
        let pot: f64 = self.lattice.bonds.iter().map(|&(a, b)| (self.phi[a] - self.phi[b]).cos()).sum();
        kin - p.j * pot
    }

    pub fn total_density(&self) -> f64 {
        self.n.iter().sum()
    }

    pub fn step(&mut self) -> Result<()> {
        let p = self.params;
        let dt = p.dt;
        let sites = self.n.len();
        let mut dphi = vec![0.0; sites];
        let noise_n = (2.0 * p.gamma_n * dt).sqrt();
        for (b, &(i, j)) in self.lattice.bonds.iter().enumerate() {
            let s = (self.phi[i] - self.phi[j]).sin();
            // ∂F/∂φ_i gets +J s, ∂F/∂φ_j gets −J s
            dphi[i] -= p.beta * p.gamma_phi * p.j * s;
            dphi[j] += p.beta * p.gamma_phi * p.j * s;
            // mass moved from i to j along the bond
            let g: f64 = self.rng.sample(StandardNormal);
            self.flux[b] = dt * (p.j * s + p.beta * p.gamma_n * p.k * (self.n[i] - self.n[j])) + noise_n * g;
        }
        let noise_phi = (2.0 * p.gamma_phi * dt).sqrt();
        for s in 0..sites {
            let g: f64 = if p.gamma_phi > 0.0 { self.rng.sample(StandardNormal) } else { 0.0 };
            self.phi[s] += dt * (p.k * self.n[s] + dphi[s]) + noise_phi * g;
            if self.wrapped {
                self.phi[s] = self.phi[s].rem_euclid(2.0 * PI);
            }
        }
        for (b, &(i, j)) in self.lattice.bonds.iter().enumerate() {
            self.n[i] -= self.flux[b];
            self.n[j] += self.flux[b];
        }
        self.time += dt;
        if self.phi.iter().chain(&self.n).any(|v| !v.is_finite() || v.abs() > 1e12) {
            return Err(Error::Numerical(format!(
                "Model F fields diverged at t = {:.4} (Δt = {dt}); reduce the timestep",
                self.time
            )));
        }
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Mean of `cos(φ_i − φ_j)` over bonds.
    pub fn bond_order(&self) -> f64 {
        let b = &self.lattice.bonds;
        b.iter().map(|&(i, j)| (self.phi[i] - self.phi[j]).cos()).sum::<f64>() / b.len() as f64
    }

    /// `Σ (n_j − n̄)² / (L − 1)`; unbiased for `1/(βK)` despite the conserved total.
    pub fn density_variance(&self) -> f64 {
        let l = self.n.len() as f64;
        let m = self.total_density() / l;
        self.n.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (l - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: usize,
    pub burn_in: f64,
    pub interval: f64,
    pub snapshots: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub mean: f64,
    pub stderr: f64,
    pub reference: f64,
}

impl Moment {
    pub fn z(&self) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == self.reference { 0.0 } else { f64::INFINITY }
        } else {
            (self.mean - self.reference) / self.stderr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    /// Per-site density variance against `1/(βK)`.
    pub var_n: Moment,
    /// Bond-averaged `cos Δφ` against quadrature (only for rings with at most 4 sites; NaN otherwise).
    pub cos_dphi: Moment,
    /// Largest `|Σn(t) − Σn(0)|` seen across members.
    pub max_charge_drift: f64,
    /// First-half vs second-half snapshot means differ by more than 4σ.
    pub drift_flag: bool,
}

/// Samples an ensemble of independent trajectories started at rest and
/// compares equal-time moments with the Gibbs measure `e^{−βF}`.
pub fn steady_state_checks(lattice: &Lattice, params: ModelFParams, spec: EnsembleSpec) -> Result<SteadyStateReport> {
    if spec.members < 2 || spec.snapshots == 0 {
        return Err(Error::InvalidInput("need >= 2 members and >= 1 snapshot".into()));
    }
    let burn = (spec.burn_in / params.dt).round() as usize;
    let every = ((spec.interval / params.dt).round() as usize).max(1);
    let runs: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = (0..spec.members)
        .into_par_iter()
        .map(|m| {
            let mut st = ModelFState::at_rest(lattice.clone(), params, derive_seed(spec.seed, m as u64))?;
            let q0 = st.total_density();
            st.run(burn)?;
            let (mut vs, mut cs) = (Vec::new(), Vec::new());
            for _ in 0..spec.snapshots {
                st.run(every)?;
                vs.push(st.density_variance());
                cs.push(st.bond_order());
            }
            Ok((vs, cs, (st.total_density() - q0).abs()))
        })
        .collect();
    let mut var_member = Vec::new();
    let mut cos_member = Vec::new();
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let mut drift = 0.0f64;
    for r in runs {
        let (vs, cs, d) = r?;
        drift = drift.max(d);
        var_member.push(vs.iter().sum::<f64>() / vs.len() as f64);
        cos_member.push(cs.iter().sum::<f64>() / cs.len() as f64);
        let h = vs.len() / 2;
        if h > 0 {
            first.push(vs[..h].iter().sum::<f64>() / h as f64);
            second.push(vs[h..].iter().sum::<f64>() / (vs.len() - h) as f64);
        }
    }
    let (vm, vse) = mean_se(&var_member);
    let (cm, cse) = mean_se(&cos_member);
    let drift_flag = if first.len() > 1 {
        let diffs: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a - b).collect();
        let (dm, dse) = mean_se(&diffs);
        dse > 0.0 && (dm / dse).abs() > 4.0
    } else {
        false
    };
    let cos_ref = if lattice.dim() == 1 && lattice.n_sites() <= 4 {
        ring_quadrature(lattice.n_sites(), params.beta * params.j, 64)?
    } else if params.j == 0.0 {
        0.0
    } else {
        f64::NAN
    };
    Ok(SteadyStateReport {
        var_n: Moment { mean: vm, stderr: vse, reference: 1.0 / (params.beta * params.k) },
        cos_dphi: Moment { mean: cm, stderr: cse, reference: cos_ref },
        max_charge_drift: drift,
        drift_flag,
    })
}

/// `⟨cos(φ_0 − φ_1)⟩` on a ring of `sites ≤ 4` under `e^{βJ Σ cos Δφ}`, by the
/// periodic trapezoid rule with `grid` points per angle and `φ_0 = 0`.
pub fn ring_quadrature(sites: usize, beta_j: f64, grid: usize) -> Result<f64> {
    if !(2..=4).contains(&sites) || grid < 4 {
        return Err(Error::InvalidInput("quadrature supports rings of 2 to 4 sites".into()));
    }
    let h = 2.0 * PI / grid as f64;
    let free = sites - 1;
    let total = grid.pow(free as u32);
    let (mut z, mut num) = (0.0, 0.0);
    let mut phi = vec![0.0; sites];
    for idx in 0..total {
        let mut r = idx;
        for f in 1..sites {
            phi[f] = (r % grid) as f64 * h;
            r /= grid;
        }
        let bonds: Vec<f64> = if sites == 2 {
            vec![(phi[0] - phi[1]).cos(), (phi[1] - phi[0]).cos()]
        } else {
            (0..sites).map(|s| (phi[s] - phi[(s + 1) % sites]).cos()).collect()
        };
        let w = (beta_j * bonds.iter().sum::<f64>()).exp();
        z += w;
        num += w * bonds.iter().sum::<f64>() / bonds.len() as f64;
    }
    Ok(num / z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoldstoneCheck {
    pub k: f64,
    pub omega_peak: f64,
    pub omega_expected: f64,
}

impl GoldstoneCheck {
    pub fn relative_error(&self) -> f64 {
        (self.omega_peak / self.omega_expected - 1.0).abs()
    }
}

/// Peak of the power spectrum of `Σ_j φ_j cos(k j)` on a ring, for
/// `k = 2π mode / L`, against `2 sqrt(JK) sin(k/2)`.
pub fn goldstone_dispersion(
    l: usize,
    params: ModelFParams,
    mode: usize,
    burn_in: f64,
    duration: f64,
    members: usize,
    seed: u64,
) -> Result<GoldstoneCheck> {
    if mode == 0 || 2 * mode > l {
        return Err(Error::InvalidInput("mode must be in 1..=L/2".into()));
    }
    let k = 2.0 * PI * mode as f64 / l as f64;
    let expected = 2.0 * (params.j * params.k).sqrt() * (k / 2.0).sin();
    let every = ((0.05 / expected) / params.dt).floor().max(1.0) as usize;
    let sample_dt = every as f64 * params.dt;
    let samples = (duration / sample_dt) as usize;
    let omegas: Vec<f64> = (1..=600).map(|i| 3.0 * expected * i as f64 / 600.0).collect();
    let spectra: Vec<Result<Vec<f64>>> = (0..members)
        .into_par_iter()
        .map(|m| {
            let mut st = ModelFState::at_rest(Lattice::ring(l), params, derive_seed(seed, m as u64))?;
            st.run((burn_in / params.dt) as usize)?;
            let mut xs = Vec::with_capacity(samples);
            for _ in 0..samples {
                st.run(every)?;
                let (mut c, mut s) = (0.0, 0.0);
                for (j, p) in st.phi.iter().enumerate() {
                    c += p * (k * j as f64).cos();
                    s += p * (k * j as f64).sin();
                }
                xs.push((c, s));
            }
            Ok(omegas
                .iter()
                .map(|&w| {
                    let (mut re_c, mut im_c, mut re_s, mut im_s) = (0.0, 0.0, 0.0, 0.0);
                    for (i, &(c, s)) in xs.iter().enumerate() {
                        let a = w * i as f64 * sample_dt;
                        re_c += c * a.cos();
                        im_c += c * a.sin();
                        re_s += s * a.cos();
                        im_s += s * a.sin();
                    }
                    re_c * re_c + im_c * im_c + re_s * re_s + im_s * im_s
                })
                .collect())
        })
        .collect();
    let mut power = vec![0.0; omegas.len()];
    for s in spectra {
        for (p, v) in power.iter_mut().zip(s?) {
            *p += v;
        }
    }
    let i = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
    let mut peak = omegas[i];
    if i > 0 && i + 1 < power.len() {
        let (a, b, c) = (power[i - 1], power[i], power[i + 1]);
        let denom = a - 2.0 * b + c;
        if denom != 0.0 {
            peak += 0.5 * (a - c) / denom * (omegas[1] - omegas[0]);
        }
    }
    Ok(GoldstoneCheck { k, omega_peak: peak, omega_expected: expected })
}

/// Power-law exponent of the 2d off-diagonal correlator, `1/(2πβJ)`.
pub fn odlro_exponent(beta: f64, j: f64) -> f64 {
    1.0 / (2.0 * PI * beta * j)
}
