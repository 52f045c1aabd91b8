//! Gaussian fluctuating hydrodynamics on a ring.
//!
//! The structure factor `S_t(k) = e^{-2Dk^2 t} S_0(k) + (γ_n / 2D)(1 - e^{-2Dk^2 t})`
//! is summed over quantized momenta `k_n = 2πn / (La)`. The `k = 0` mode carries
//! the conserved charge and is always dropped, which is the same as working at
//! fixed total charge. The covariance is circulant and is stored by its first row.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::diagnostics::linear_fit;
use crate::error::{Error, Result};

/// Initial structure factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialSpectrum {
    Zero,
    /// `S_0(k_n)` for `n = 0..L`.
    Spectrum(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianField {
    pub l: usize,
    pub a: f64,
    pub d: f64,
    pub gamma_n: f64,
    pub t: f64,
    pub mean: Vec<f64>,
    /// `S(x_i - x_j) = row[(i - j) mod L]`.
    pub row: Vec<f64>,
    /// `S_t(k_n)`; entry 0 is the dropped charge mode.
    pub spectrum: Vec<f64>,
}

/// Momentum of mode `n`, folded into `(-π/a, π/a]`.
pub fn momentum(n: usize, l: usize, a: f64) -> f64 {
    let m = if n > l / 2 { n as f64 - l as f64 } else { n as f64 };
    2.0 * PI * m / (l as f64 * a)
}

/// Inverse transform of a spectrum without its zero mode.
fn circulant_row(spec: &[f64], a: f64) -> Vec<f64> {
    let l = spec.len();
    let table: Vec<f64> = (0..l).map(|m| (2.0 * PI * m as f64 / l as f64).cos()).collect();
    (0..l)
        .map(|x| {
            let mut s = 0.0;
            for (n, &v) in spec.iter().enumerate().skip(1) {
                s += v * table[(n * x) % l];
            }
            s / (l as f64 * a)
        })
        .collect()
}

/// Structure factor at one momentum.
pub fn structure_factor(k: f64, d: f64, gamma_n: f64, t: f64, s0: f64) -> f64 {
    let e = (-2.0 * d * k * k * t).exp();
    e * s0 - gamma_n / (2.0 * d) * (-2.0 * d * k * k * t).exp_m1()
}

/// Covariance of the hydrodynamic field at time `t`.
pub fn covariance(l: usize, a: f64, d: f64, gamma_n: f64, t: f64, s0: &InitialSpectrum) -> Result<GaussianField> {
    if !(t >= 0.0) || !(d > 0.0) || !(gamma_n > 0.0) || !(a > 0.0) || l < 2 {
        return Err(Error::InvalidInput("need t >= 0, D > 0, γ_n > 0, a > 0, L >= 2".into()));
    }
    let init = match s0 {
        InitialSpectrum::Zero => vec![0.0; l],
        InitialSpectrum::Spectrum(v) if v.len() == l => v.clone(),
        InitialSpectrum::Spectrum(v) => {
            return Err(Error::InvalidInput(format!("initial spectrum has {} modes, expected {l}", v.len())))
        }
    };
    let spectrum: Vec<f64> = (0..l).map(|n| structure_factor(momentum(n, l, a), d, gamma_n, t, init[n])).collect();
    let row = circulant_row(&spectrum, a);
    Ok(GaussianField { l, a, d, gamma_n, t, mean: vec![0.0; l], row, spectrum })
}

/// Field with an arbitrary spectrum, e.g. the tridiagonal surrogate `c(2 - 2 cos k)`.
pub fn field_from_spectrum(l: usize, a: f64, spectrum: Vec<f64>) -> GaussianField {
    let row = circulant_row(&spectrum, a);
    GaussianField { l, a, d: f64::NAN, gamma_n: f64::NAN, t: f64::NAN, mean: vec![0.0; l], row, spectrum }
}

/// Surrogate spectrum `c(2 - 2 cos k)`.
pub fn fisher_surrogate(l: usize, c: f64) -> GaussianField {
    let spec = (0..l).map(|n| c * (2.0 - 2.0 * momentum(n, l, 1.0).cos())).collect();
    field_from_spectrum(l, 1.0, spec)
}

impl GaussianField {
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.row[(i + self.l - j % self.l) % self.l]
    }

    pub fn submatrix(&self, sites: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(sites.len(), sites.len(), |i, j| self.cov(sites[i], sites[j]))
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.l).collect();
        self.submatrix(&all)
    }

    /// First row of the pseudo-inverse (zero mode dropped).
    pub fn precision_row(&self) -> Vec<f64> {
        let inv: Vec<f64> = self.spectrum.iter().map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 }).collect();
        circulant_row(&inv, 1.0 / self.a)
    }
}

/// Submatrix regularization for log-determinants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// Drop only the global charge mode (always done when building the field).
    ZeroMode,
    /// Also add `eps * I`; `None` uses `1e-12 * trace / L` of the full covariance.
    Ridge(Option<f64>),
}

impl Default for Regularization {
    fn default() -> Self {
        Self::ZeroMode
    }
}

pub fn log_det_pd(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let ch = Cholesky::new(m.clone()).ok_or_else(|| Error::Numerical("submatrix is not positive definite".into()))?;
    Ok(2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// `H = ½ log det(2πe S)`.
pub fn differential_entropy(m: &DMatrix<f64>) -> Result<f64> {
    Ok(0.5 * (m.nrows() as f64 * (2.0 * PI * std::f64::consts::E).ln() + log_det_pd(m)?))
}

fn regularized(field: &GaussianField, sites: &[usize], reg: Regularization) -> DMatrix<f64> {
    let mut m = field.submatrix(sites);
    if let Regularization::Ridge(eps) = reg {
        let eps = eps.unwrap_or(1e-12 * field.row[0]);
        for i in 0..m.nrows() {
            m[(i, i)] += eps;
        }
    }
    m
}

/// `I(A:C|B) = ½ log(|S^AB| |S^BC| / (|S^ABC| |S^B|))`.
pub fn gaussian_cmi(field: &GaussianField, a: &[usize], b: &[usize], c: &[usize], reg: Regularization) -> Result<f64> {
    let mut seen = vec![false; field.l];
    for &s in a.iter().chain(b).chain(c) {
        if s >= field.l || std::mem::replace(&mut seen[s], true) {
            return Err(Error::InvalidInput(format!("site {s} out of range or repeated")));
        }
    }
    let cat = |xs: &[&[usize]]| xs.concat();
    let ld = |s: &[usize]| log_det_pd(&regularized(field, s, reg));
    Ok(0.5 * (ld(&cat(&[a, b]))? + ld(&cat(&[b, c]))? - ld(&cat(&[a, b, c]))? - ld(b)?))
}

/// Single-site A and C around a block of `r_b` sites starting at site 1.
pub fn single_site_cmi(field: &GaussianField, r_b: usize, reg: Regularization) -> Result<f64> {
    if r_b + 2 >= field.l {
        return Err(Error::InvalidInput("A ∪ B ∪ C must be a proper subset of the ring".into()));
    }
    let b: Vec<usize> = (1..=r_b).collect();
    gaussian_cmi(field, &[0], &b, &[r_b + 1], reg)
}

/// Determinant of the `n × n` tridiagonal matrix with 2 on the diagonal and -1 off it.
pub fn tridiagonal_determinant(n: usize) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0);
    if n == 0 {
        return 1.0;
    }
    for _ in 1..n {
        let next = 2.0 * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Entropy of `R_B` sites of the tridiagonal surrogate with unit lattice cell.
pub fn tridiagonal_fisher_entropy(r_b: usize, c: f64) -> Result<f64> {
    if r_b == 0 || !(c > 0.0) {
        return Err(Error::InvalidInput("need R_B >= 1 and c > 0".into()));
    }
    let r = r_b as f64;
    Ok(0.5 * r * (2.0 * PI * std::f64::consts::E * c).ln() + 0.5 * (r + 1.0).ln())
}

/// `log(R_B+2) - ½ log(R_B+1) - ½ log(R_B+3)`.
pub fn fisher_cmi_closed_form(r_b: usize) -> f64 {
    let r = r_b as f64;
    (r + 2.0).ln() - 0.5 * (r + 1.0).ln() - 0.5 * (r + 3.0).ln()
}

/// Conditional Gaussian of the remaining sites given fixed values on `sites`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedGaussian {
    pub sites: Vec<usize>,
    pub values: Vec<f64>,
    pub free: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Conditions the field after giving the charge mode variance `zero_mode`
/// so that the conditional covariance is invertible.
pub fn condition(field: &GaussianField, sites: &[usize], values: &[f64], zero_mode: f64) -> Result<ConditionedGaussian> {
    if sites.len() != values.len() || sites.is_empty() {
        return Err(Error::InvalidInput("one value per conditioned site".into()));
    }
    let mut s = field.covariance_matrix();
    s.add_scalar_mut(zero_mode / field.l as f64);
    let free: Vec<usize> = (0..field.l).filter(|i| !sites.contains(i)).collect();
    let s11 = DMatrix::from_fn(free.len(), free.len(), |i, j| s[(free[i], free[j])]);
    let s12 = DMatrix::from_fn(free.len(), sites.len(), |i, j| s[(free[i], sites[j])]);
    let s22 = DMatrix::from_fn(sites.len(), sites.len(), |i, j| s[(sites[i], sites[j])]);
    let ch = Cholesky::new(s22).ok_or_else(|| Error::Numerical("conditioned block is singular".into()))?;
    let q = DVector::from_iterator(sites.len(), sites.iter().zip(values).map(|(&i, &v)| v - field.mean[i]));
    let mu1 = DVector::from_iterator(free.len(), free.iter().map(|&i| field.mean[i]));
    let mean = mu1 + &s12 * ch.solve(&q);
    let cov = &s11 - &s12 * ch.solve(&s12.transpose());
    Ok(ConditionedGaussian { sites: sites.to_vec(), values: values.to_vec(), free, mean, cov })
}

/// Bhattacharyya distance between two Gaussians.
pub fn bhattacharyya_gaussian(m1: &DVector<f64>, s1: &DMatrix<f64>, m2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let sbar = (s1 + s2) * 0.5;
    let ch = Cholesky::new(sbar.clone()).ok_or_else(|| Error::Numerical("singular conditional covariance".into()))?;
    let dm = m1 - m2;
    let quad = dm.dot(&ch.solve(&dm)) / 8.0;
    Ok(quad + 0.5 * (log_det_pd(&sbar)? - 0.5 * (log_det_pd(s1)? + log_det_pd(s2)?)))
}

fn check_r(field: &GaussianField, r: usize) -> Result<()> {
    if r == 0 || r >= field.l {
        return Err(Error::InvalidInput(format!("separation r = {r} must satisfy 0 < r < L")));
    }
    Ok(())
}

/// Distance between the states conditioned on `(n_0, n_r) = (q, -q)` and `(-q, q)`,
/// by full conditioning of the `L`-site covariance.
pub fn bhattacharyya_distance_full(field: &GaussianField, r: usize, q: f64) -> Result<f64> {
    check_r(field, r)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let zm = field.row[0] * field.l as f64;
    let plus = condition(field, &[0, r], &[q, -q], zm)?;
    let minus = condition(field, &[0, r], &[-q, q], zm)?;
    bhattacharyya_gaussian(&plus.mean, &plus.cov, &minus.mean, &minus.cov)
}

/// Precomputed rows for fast distance scans.
pub struct BhattacharyyaScan {
    s: Vec<f64>,
    p: Vec<f64>,
}

impl BhattacharyyaScan {
    pub fn new(field: &GaussianField) -> Self {
        Self { s: field.row.clone(), p: field.precision_row() }
    }

    /// `q^2 [(p_0 - p_r) - 1 / (s_0 - s_r)]`, the Schur-complement form of
    /// `½ μᵀ S_c⁻¹ μ` for a translation-invariant field.
    pub fn distance(&self, r: usize, q: f64) -> Result<f64> {
        if r == 0 || r >= self.s.len() {
            return Err(Error::InvalidInput(format!("separation r = {r} must satisfy 0 < r < L")));
        }
        let ds = self.s[0] - self.s[r];
        if !(ds > 0.0) {
            return Err(Error::Numerical("singular conditional covariance".into()));
        }
        Ok(q * q * ((self.p[0] - self.p[r]) - 1.0 / ds))
    }
}

pub fn bhattacharyya_distance(field: &GaussianField, r: usize, q: f64) -> Result<f64> {
    check_r(field, r)?;
    BhattacharyyaScan::new(field).distance(r, q)
}

/// Fit of `y = A x (1 - x)`: returns `A` and the RMS residual relative to the peak.
pub fn fit_quadratic_shape(x: &[f64], y: &[f64]) -> (f64, f64) {
    let g: Vec<f64> = x.iter().map(|v| v * (1.0 - v)).collect();
    let amp = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / g.iter().map(|a| a * a).sum::<f64>();
    let rms = (g.iter().zip(y).map(|(a, b)| (amp * a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    (amp, rms / (amp * 0.25).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScalingFit {
    /// 1d: `C ~ exp(-r / ξ)`.
    DecayLength(f64),
    /// 2d: `C ~ r^{-η}`.
    Exponent(f64),
    /// 3d: large-`r` value of `C`.
    Plateau(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenyiScaling {
    pub dim: usize,
    pub r: Vec<f64>,
    pub log_c: Vec<f64>,
    pub fit: ScalingFit,
}

/// `J_0(x)` from `(1/π) ∫_0^π cos(x sin θ) dθ`; the midpoint rule is spectrally accurate here.
fn bessel_j0(x: f64) -> f64 {
    let m = (x.abs() as usize) + 40;
    let h = PI / m as f64;
    (0..m).map(|i| (x * ((i as f64 + 0.5) * h).sin()).cos()).sum::<f64>() / m as f64
}

fn radial_integrand(dim: usize, k: f64, r: f64, dt2: f64) -> f64 {
    if k == 0.0 {
        return if dim == 1 { -r * r / (2.0 * dt2 * PI) } else { 0.0 };
    }
    let g = -1.0 / (-dt2 * k * k).exp_m1();
    match dim {
        1 => ((k * r).cos() - 1.0) * g / PI,
        2 => k * (bessel_j0(k * r) - 1.0) * g / (2.0 * PI),
        _ => {
            let x = k * r;
            let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
            k * k * (sinc - 1.0) * g / (2.0 * PI * PI)
        }
    }
}

fn simpson(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = PI / n as f64;
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

/// `ln C^(Q)(r)` relative to `r = 0`, from the momentum integral over `|k| ≤ π`.
pub fn renyi_scaling(dim: usize, q: f64, big_q: f64, d: f64, gamma_n: f64, t: f64, r: &[f64], tol: f64) -> Result<RenyiScaling> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidInput("dimension must be 1, 2 or 3".into()));
    }
    if !(t > 0.0) || r.len() < 2 || r.iter().any(|&v| !(v >= 1.0)) {
        return Err(Error::InvalidInput("need t > 0 and at least two separations r >= 1".into()));
    }
    let kappa = q * q * big_q * big_q * d / (2.0 * gamma_n);
    let dt2 = 2.0 * d * t;
    let mut log_c = Vec::with_capacity(r.len());
    for &rv in r {
        let mut n = 2 * ((8.0 * rv) as usize + 64);
        let mut prev = simpson(n, |k| radial_integrand(dim, k, rv, dt2));
        loop {
            n *= 4;
            let cur = simpson(n, |k| radial_integrand(dim, k, rv, dt2));
            if (cur - prev).abs() <= tol * cur.abs().max(1e-300) {
                log_c.push(kappa * cur);
                break;
            }
            if n > 1 << 22 {
                return Err(Error::NonConvergence(format!("momentum integral at r = {rv} not converged")));
            }
            prev = cur;
        }
    }
    let half = r.len() / 2;
    let fit = match dim {
        1 => {
            let (_, b, _) = linear_fit(&r[half..], &log_c[half..]);
            ScalingFit::DecayLength(-1.0 / b)
        }
        2 => {
            let lr: Vec<f64> = r[half..].iter().map(|v| v.ln()).collect();
            let (_, b, _) = linear_fit(&lr, &log_c[half..]);
            ScalingFit::Exponent(-b)
        }
        _ => ScalingFit::Plateau(log_c.last().unwrap().exp()),
    };
    Ok(RenyiScaling { dim, r: r.to_vec(), log_c, fit })
}
