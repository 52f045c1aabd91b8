//! Decohered rotor model: Villain closed forms and the replica BKT flow.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::diagnostics::linear_fit;
use crate::error::{Error, Result};

/// Jacobi theta functions at zero argument and purely imaginary modular
/// parameter `iτ`, i.e. nome `q = e^{-πτ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEvaluator {
    pub tau: f64,
    /// Number of series terms kept (per side) in the last evaluation route.
    pub terms: usize,
}

/// `Σ_{n≥1} sign^n e^{-π τ (n + shift)^2}` until terms fall below `1e-18` of the leading one.
fn tail(tau: f64, shift: f64, alternating: bool) -> (f64, usize) {
    let mut s = 0.0;
    let mut n = 0usize;
    loop {
        let x = n as f64 + shift;
        let term = (-PI * tau * x * x).exp();
        let signed = if alternating && n % 2 == 1 { -term } else { term };
        if n > 0 || shift != 0.0 {
            s += signed;
        }
        n += 1;
        if term < 1e-18 * s.abs().max(1e-300) || n > 100_000 {
            return (s, n);
        }
    }
}

impl ThetaEvaluator {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("theta needs τ > 0, got {tau}")));
        }
        Ok(Self { tau, terms: 0 })
    }

    /// `ln θ3(0, iτ)`; uses the modular dual `θ3(iτ) = τ^{-1/2} θ3(i/τ)` when `τ < 1`.
    pub fn ln_theta3(&mut self) -> f64 {
        let (t, pre) = if self.tau >= 1.0 { (self.tau, 0.0) } else { (1.0 / self.tau, -0.5 * self.tau.ln()) };
        let (s, n) = tail(t, 0.0, false);
        self.terms = n;
        pre + (2.0 * s).ln_1p()
    }

    /// `ln θ2(0, iτ)`; dual is `θ2(iτ) = τ^{-1/2} θ4(i/τ)`.
    pub fn ln_theta2(&mut self) -> f64 {
        if self.tau >= 1.0 {
            let (s, n) = tail(self.tau, 0.5, false);
            self.terms = n;
            // s = Σ_{n≥0} e^{-πτ(n+½)^2}; θ2 = 2 s
            (2.0 * s).ln()
        } else {
            let t = 1.0 / self.tau;
            let (s, n) = tail(t, 0.0, true);
            self.terms = n;
            -0.5 * self.tau.ln() + (2.0 * s).ln_1p()
        }
    }

    pub fn theta3(&mut self) -> f64 {
        self.ln_theta3().exp()
    }

    pub fn theta2(&mut self) -> f64 {
        self.ln_theta2().exp()
    }

    /// `-ln(θ2 / θ3)`, accurate when the ratio is close to 1.
    pub fn neg_ln_ratio(&mut self) -> f64 {
        if self.tau >= 1.0 {
            return self.ln_theta3() - self.ln_theta2();
        }
        // the τ^{-1/2} prefactors cancel
        let t = 1.0 / self.tau;
        let (s3, n3) = tail(t, 0.0, false);
        let (s4, n4) = tail(t, 0.0, true);
        self.terms = n3.max(n4);
        (2.0 * s3).ln_1p() - (2.0 * s4).ln_1p()
    }
}

/// Triple-product forms, for testing the series.
pub fn theta_products(tau: f64) -> (f64, f64) {
    let q = (-PI * tau).exp();
    let (mut t2, mut t3) = (2.0 * q.powf(0.25), 1.0);
    let mut m = 1;
    loop {
        let q2m = q.powi(2 * m);
        t3 *= (1.0 - q2m) * (1.0 + q.powi(2 * m - 1)).powi(2);
        t2 *= (1.0 - q2m) * (1.0 + q2m).powi(2);
        if q.powi(2 * m - 1) < 1e-18 {
            return (t2, t3);
        }
        m += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorLengths {
    pub xi2: f64,
    pub xi1_spinwave: f64,
    pub xi1_exact: f64,
}

/// 1d correlation lengths; the exact Villain result is
/// `1/ξ = -ln(θ2/θ3)(i/(2π t̃)) + 1/(8 t̃)`.
pub fn rotor1d_lengths(t: f64) -> Result<RotorLengths> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("t̃ must be positive".into()));
    }
    let mut th = ThetaEvaluator::new(1.0 / (2.0 * PI * t))?;
    let screening = th.neg_ln_ratio();
    Ok(RotorLengths { xi2: 4.0 * t, xi1_spinwave: 8.0 * t, xi1_exact: 1.0 / (screening + 1.0 / (8.0 * t)) })
}

/// Scaling dimension of `C^(Q)` in 2d: `Q / (8π t̃)`.
pub fn rotor2d_exponents(t: f64, q: f64) -> Result<f64> {
    if !(t > 0.0) || q < 1.0 {
        return Err(Error::InvalidInput("need t̃ > 0 and Q >= 1".into()));
    }
    Ok(q / (8.0 * PI * t))
}

/// `(ρ_s^(2), ρ̄_s) = (2 t̃, t̃)`.
pub fn stiffness_constants(t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("t̃ must be positive".into()));
    }
    Ok((2.0 * t, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmiGeometry {
    /// A and C reach the chain ends.
    EdgeCovering,
    /// A, B, C inside a longer chain.
    Interior { r_a: usize, r_c: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorCmi {
    pub value: f64,
    /// `2 e^{-(R_B+1)/(4t)}` for the edge geometry, `1/R_B^2` for the interior one.
    pub asymptote: f64,
}

/// `ln Σ_m (λ_m / θ3)^n` with `λ_m = e^{-m²/4t} θ_{3,2}(i/(π t))` for even/odd `m`.
fn ln_eigen_sum(n: f64, t: f64, ratio: f64) -> f64 {
    let lr = ratio.ln();
    let mut terms = vec![0.0];
    let mut m = 1i64;
    loop {
        let mf = m as f64;
        let e = -n * mf * mf / (4.0 * t) + if m % 2 == 1 { n * lr } else { 0.0 };
        terms.push(e + 2f64.ln());
        if e < -45.0 {
            break;
        }
        m += 1;
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Rényi-2 CMI of the Villain chain from transfer-matrix eigenvalue sums.
pub fn renyi2_cmi_rotor(r_b: usize, t: f64, geometry: CmiGeometry) -> Result<RotorCmi> {
    if r_b == 0 || !(t > 0.0) {
        return Err(Error::InvalidInput("need R_B >= 1 and t > 0".into()));
    }
    let n = r_b as f64 + 1.0;
    let mut th = ThetaEvaluator::new(1.0 / (PI * t))?;
    let ln_ratio = -th.neg_ln_ratio();
    match geometry {
        CmiGeometry::EdgeCovering => {
            let tau = n / (PI * t);
            let (mut a, mut b) = (ThetaEvaluator::new(tau)?, ThetaEvaluator::new(tau)?);
            let l3 = a.ln_theta3();
            let l2 = b.ln_theta2() + n * ln_ratio;
            let hi = l3.max(l2);
            let value = hi + ((l3 - hi).exp() + (l2 - hi).exp()).ln();
            Ok(RotorCmi { value, asymptote: 2.0 * (-n / (4.0 * t)).exp() })
        }
        CmiGeometry::Interior { r_a, r_c } => {
            let ratio = ln_ratio.exp();
            let z = |len: usize| ln_eigen_sum(len as f64 + 1.0, t, ratio);
            let value = z(r_a + r_b + r_c) + z(r_b) - z(r_a + r_b) - z(r_b + r_c);
            Ok(RotorCmi { value, asymptote: 1.0 / (r_b as f64).powi(2) })
        }
    }
}

/// Coulomb-gas energy of point charges; `None` when the configuration is not neutral.
pub fn rotor_probability_energy(charges: &[(Vec<f64>, f64)], t: f64, dim: usize) -> Result<Option<f64>> {
    if !(t > 0.0) || !(dim == 1 || dim == 2) {
        return Err(Error::InvalidInput("need t̃ > 0 and d in {1, 2}".into()));
    }
    let total: f64 = charges.iter().map(|c| c.1).sum();
    if total.abs() > 1e-12 {
        return Ok(None);
    }
    let mut e = 0.0;
    for j in 0..charges.len() {
        for k in j + 1..charges.len() {
            let r = charges[j].0.iter().zip(&charges[k].0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let kernel = if dim == 1 { r } else { r.ln() / PI };
            e += charges[j].1 * charges[k].1 * kernel;
        }
    }
    Ok(Some(-e / (2.0 * t)))
}

/// `A = (Q - 2) sqrt(2/Q)`.
pub fn replica_coefficient(q: f64) -> f64 {
    (q - 2.0) * (2.0 / q).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgState {
    pub y: f64,
    pub s: f64,
    pub a: f64,
}

impl RgState {
    /// `(dy, ds)` per unit `ln l`.
    pub fn rate(&self) -> (f64, f64) {
        (-self.s * self.y + self.a * self.y * self.y, -self.y * self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgOptions {
    pub span: f64,
    pub threshold: f64,
    pub rtol: f64,
    pub atol: f64,
    pub record: bool,
}

impl Default for RgOptions {
    fn default() -> Self {
        Self { span: 1e12, threshold: 1.0, rtol: 1e-10, atol: 1e-18, record: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgTrajectory {
    pub ln_l: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// Scale at which `y` reached the threshold; `None` on the ordered side.
    pub l_star: Option<f64>,
}

fn rhs(a: f64, v: [f64; 2]) -> [f64; 2] {
    let (y, s) = (v[0], v[1]);
    [-s * y + a * y * y, -y * y]
}

/// Dormand-Prince 5(4) integration of the flow until `y` reaches the threshold,
/// `y` collapses on the ordered side, or the span is exhausted.
pub fn rg_flow(init: RgState, opts: RgOptions) -> Result<RgTrajectory> {
    if init.y < 0.0 {
        return Err(Error::InvalidInput("fugacity must be >= 0".into()));
    }
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let _ = C;
    let a = init.a;
    let mut v = [init.y, init.s];
    let mut l = 0.0;
    let mut traj = RgTrajectory { ln_l: vec![0.0], y: vec![v[0]], s: vec![v[1]], l_star: None };
    if v[0] == 0.0 {
        // line of fixed points
        if opts.record {
            traj.ln_l.push(opts.span);
            traj.y.push(0.0);
            traj.s.push(v[1]);
        }
        return Ok(traj);
    }
    let scale0 = v[0].abs().max(v[1].abs());
    let mut h = 1e-3 / scale0.max(1e-300);
    let mut steps = 0usize;
    while l < opts.span {
        steps += 1;
        if steps > 5_000_000 {
            return Err(Error::NonConvergence("RG integration exceeded the step budget".into()));
        }
        h = h.min(opts.span - l);
        let mut k = [[0.0; 2]; 7];
        k[0] = rhs(a, v);
        for i in 1..7 {
            let mut w = v;
            for j in 0..i {
                w[0] += h * A[i][j] * k[j][0];
                w[1] += h * A[i][j] * k[j][1];
            }
            k[i] = rhs(a, w);
        }
        let mut v5 = v;
        let mut err = 0.0f64;
        for c in 0..2 {
            let d5: f64 = (0..7).map(|i| B5[i] * k[i][c]).sum();
            let d4: f64 = (0..7).map(|i| B4[i] * k[i][c]).sum();
            v5[c] += h * d5;
            let sc = opts.atol + opts.rtol * v[c].abs().max(v5[c].abs());
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if err <= 1.0 {
            let prev = v;
            l += h;
            v = v5;
            if opts.record {
                traj.ln_l.push(l);
                traj.y.push(v[0]);
                traj.s.push(v[1]);
            }
            if v[0] >= opts.threshold {
                // linear interpolation of the crossing inside the step
                let f = (opts.threshold - prev[0]) / (v[0] - prev[0]);
                traj.l_star = Some(l - h + f * h);
                return Ok(traj);
            }
            if v[1] > 0.0 && v[0] < 1e-6 * init.y && rhs(a, v)[0] < 0.0 {
                return Ok(traj);
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok(traj)
}

fn reaches(y0: f64, s0: f64, a: f64, opts: RgOptions) -> Result<bool> {
    let o = RgOptions { record: false, ..opts };
    Ok(rg_flow(RgState { y: y0, s: s0, a }, o)?.l_star.is_some())
}

/// Separatrix value of `s` at fixed `y0`, by bisection.
pub fn separatrix(y0: f64, a: f64, opts: RgOptions) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    if !reaches(y0, lo, a, opts)? || reaches(y0, hi, a, opts)? {
        return Err(Error::NonConvergence("separatrix not bracketed in s ∈ [-1, 1]".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if reaches(y0, mid, a, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub a: f64,
    pub p: f64,
    pub r2: f64,
    pub separatrix_s: f64,
    pub deltas: Vec<f64>,
    pub ln_xi: Vec<f64>,
}

/// `p` from `ln ln ξ = const - p ln δ`, with `ln ξ = ln l*` and `δ` the detuning
/// of the initial stiffness below the separatrix at `y0`.
pub fn rg_exponent(a: f64, y0: f64, deltas: &[f64], opts: RgOptions) -> Result<ExponentFit> {
    if deltas.len() < 2 {
        return Err(Error::InvalidInput("need at least two detunings".into()));
    }
    let sc = separatrix(y0, a, opts)?;
    let mut ln_xi = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let o = RgOptions { record: false, ..opts };
        let tr = rg_flow(RgState { y: y0, s: sc - d, a }, o)?;
        let l = tr
            .l_star
            .ok_or_else(|| Error::NonConvergence(format!("ordered side: δ = {d} did not reach the threshold")))?;
        ln_xi.push(l);
    }
    let x: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let yv: Vec<f64> = ln_xi.iter().map(|l| l.ln()).collect();
    let (_, slope, r2) = linear_fit(&x, &yv);
    Ok(ExponentFit { a, p: -slope, r2, separatrix_s: sc, deltas: deltas.to_vec(), ln_xi })
}

/// Geometric detuning grid used by default.
pub fn default_detunings() -> Vec<f64> {
    (0..10).map(|k| 1e-10 * 10f64.powf(k as f64 * 4.0 / 9.0)).collect()
}

/// `(s, y, ds, dy)` on a grid, for quiver plots.
pub fn rg_flow_field(a: f64, s: &[f64], y: &[f64]) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(s.len() * y.len());
    for &sv in s {
        for &yv in y {
            let (dy, ds) = RgState { y: yv, s: sv, a }.rate();
            out.push([sv, yv, ds, dy]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_series_match_products() {
        for &tau in &[0.05, 0.3, 0.9, 1.0, 2.5, 7.0] {
            let (p2, p3) = theta_products(tau);
            let mut th = ThetaEvaluator::new(tau).unwrap();
            assert!((th.theta3() - p3).abs() < 1e-12 * p3, "τ={tau}");
            assert!((th.theta2() - p2).abs() < 1e-12 * p2.max(1e-300), "τ={tau}");
        }
    }

    #[test]
    fn theta_sums_identities() {
        // Σ e^{-k²/(2t)} = θ3(i/(2π t))
        let t = 0.7;
        let direct3: f64 = (-40..=40).map(|k: i32| (-(k * k) as f64 / (2.0 * t)).exp()).sum();
        let direct2: f64 = (-40..=40).map(|k: i32| (-((k as f64 + 0.5).powi(2)) / (2.0 * t)).exp()).sum();
        let mut th = ThetaEvaluator::new(1.0 / (2.0 * PI * t)).unwrap();
        assert!((th.theta3() - direct3).abs() < 1e-13);
        assert!((th.theta2() - direct2).abs() < 1e-13);
    }

    #[test]
    fn one_d_lengths() {
        let l = rotor1d_lengths(1.0).unwrap();
        assert_eq!((l.xi2, l.xi1_spinwave), (4.0, 8.0));
        let mut th = ThetaEvaluator::new(1.0 / PI).unwrap();
        let ratio = (-th.neg_ln_ratio()).exp();
        assert!((ratio - (1.0 - 4.0 * (-PI * PI).exp())).abs() < 1e-6);
        let h = rotor1d_lengths(0.5).unwrap();
        assert!((h.xi1_exact / 4.0 - 1.0).abs() < 1e-3);
        let mut prev = 0.0;
        for k in 1..40 {
            let t = 0.05 * k as f64;
            let x = rotor1d_lengths(t).unwrap();
            let inv = ThetaEvaluator::new(1.0 / (2.0 * PI * t)).unwrap().neg_ln_ratio();
            assert!(inv > 0.0, "t={t} inv={inv}");
            if t > 0.5 {
                assert!(inv <= 4.0 * (-2.0 * PI * PI * t).exp() * 1.01);
            }
            assert!(x.xi1_exact / t >= prev - 1e-12);
            prev = x.xi1_exact / t;
        }
        assert!((rotor1d_lengths(50.0).unwrap().xi1_exact / rotor1d_lengths(50.0).unwrap().xi2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_d_exponents_and_stiffness() {
        assert!((rotor2d_exponents(1.0 / PI, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((rotor2d_exponents(1.0 / PI, 1.0).unwrap() - 0.125).abs() < 1e-15);
        for t in [0.1, 0.5, 3.0] {
            assert!((rotor2d_exponents(t, 2.0).unwrap() - 2.0 * rotor2d_exponents(t, 1.0).unwrap()).abs() < 1e-15);
        }
        let (r2, rb) = stiffness_constants(1.0 / PI).unwrap();
        assert_eq!((r2, rb), (2.0 / PI, 1.0 / PI));
        assert_eq!(stiffness_constants(1.0).unwrap(), (2.0, 1.0));
    }

    #[test]
    fn edge_cmi_asymptote_and_monotonicity() {
        let t = 2.0;
        let c = renyi2_cmi_rotor(23, t, CmiGeometry::EdgeCovering).unwrap();
        assert!((c.value / c.asymptote - 1.0).abs() < 0.05, "{c:?}");
        let mut prev = f64::INFINITY;
        for r in 1..60 {
            let v = renyi2_cmi_rotor(r, t, CmiGeometry::EdgeCovering).unwrap().value;
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        // t → ∞: both theta sums tend to sqrt(π t / (R_B + 1))
        let (r, big) = (3usize, 1e6);
        let v = renyi2_cmi_rotor(r, big, CmiGeometry::EdgeCovering).unwrap().value;
        let want = (2.0 * (PI * big / (r as f64 + 1.0)).sqrt()).ln();
        assert!((v - want).abs() < 1e-3, "{v} {want}");
    }

    #[test]
    fn edge_cmi_matches_direct_sums() {
        let (r, t) = (4usize, 1.5);
        let n = r as f64 + 1.0;
        let l = |m: i64| -> f64 { (-(m * m) as f64 / (4.0 * t)).exp() };
        let th3: f64 = (-60..=60).map(|k: i64| (-(k * k) as f64 / t).exp()).sum();
        let th2: f64 = (-60..=60).map(|k: i64| (-((k as f64 + 0.5).powi(2)) / t).exp()).sum();
        let ratio: f64 = (-60..=60i64).map(|m| l(m).powf(n) * if m % 2 != 0 { (th2 / th3).powf(n) } else { 1.0 }).sum();
        let v = renyi2_cmi_rotor(r, t, CmiGeometry::EdgeCovering).unwrap().value;
        assert!((v - ratio.ln()).abs() < 1e-12);
    }

    #[test]
    fn interior_cmi_power_law() {
        let t = 1e6;
        let g = CmiGeometry::Interior { r_a: 1, r_c: 1 };
        let v: Vec<f64> = [10usize, 20, 40].iter().map(|&r| renyi2_cmi_rotor(r, t, g).unwrap().value).collect();
        for (k, &r) in [10.0f64, 20.0, 40.0].iter().enumerate() {
            let want = 0.5 * ((r + 2.0).powi(2) / ((r + 3.0) * (r + 1.0))).ln();
            assert!((v[k] / want - 1.0).abs() < 0.02, "{} {want}", v[k]);
        }
        assert!((v[1] / v[2] - 4.0).abs() < 0.5);
    }

    #[test]
    fn coulomb_energies() {
        let t = 0.8;
        let dip = vec![(vec![0.0], 1.0), (vec![5.0], -1.0)];
        assert!((rotor_probability_energy(&dip, t, 1).unwrap().unwrap() - 5.0 / (2.0 * t)).abs() < 1e-14);
        let half = vec![(vec![0.0], 0.5), (vec![5.0], -0.5)];
        assert!((rotor_probability_energy(&half, t, 1).unwrap().unwrap() - 5.0 / (8.0 * t)).abs() < 1e-14);
        assert_eq!(rotor_probability_energy(&[], t, 1).unwrap(), Some(0.0));
        assert_eq!(rotor_probability_energy(&[(vec![0.0], 1.0)], t, 1).unwrap(), None);
        let four: Vec<(Vec<f64>, f64)> = vec![(vec![0.0], 1.0), (vec![2.0], -2.0), (vec![3.0], 1.0), (vec![7.0], 0.0)];
        let mut brute = 0.0f64;
        for j in 0..4 {
            for k in 0..4 {
                if j < k {
                    brute += four[j].1 * four[k].1 * (four[j].0[0] - four[k].0[0]).abs();
                }
            }
        }
        assert!((rotor_probability_energy(&four, t, 1).unwrap().unwrap() + brute / (2.0 * t)).abs() < 1e-14);
        let d2 = vec![(vec![0.0, 0.0], 1.0), (vec![3.0, 4.0], -1.0)];
        let e = rotor_probability_energy(&d2, t, 2).unwrap().unwrap();
        assert!((e - 5f64.ln() / (2.0 * PI * t)).abs() < 1e-14);
    }

    #[test]
    fn rg_fixed_line_and_invariant() {
        let tr = rg_flow(RgState { y: 0.0, s: 0.3, a: 0.0 }, RgOptions::default()).unwrap();
        assert!(tr.y.iter().all(|&y| y == 0.0) && tr.s.iter().all(|&s| s == 0.3));
        let tr = rg_flow(RgState { y: 0.05, s: 0.02, a: 0.0 }, RgOptions::default()).unwrap();
        assert!(tr.l_star.is_some());
        let inv0 = 0.05f64.powi(2) - 0.02f64.powi(2);
        for (y, s) in tr.y.iter().zip(&tr.s) {
            assert!((y * y - s * s - inv0).abs() < 1e-6);
        }
        assert_eq!(replica_coefficient(2.0), 0.0);
        assert!((replica_coefficient(1.0) + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bkt_exponent_is_one_half() {
        let opts = RgOptions::default();
        let sc = separatrix(1e-3, 0.0, opts).unwrap();
        assert!((sc - 1e-3).abs() < 1e-9, "{sc}");
        let fit = rg_exponent(0.0, 1e-3, &default_detunings(), opts).unwrap();
        assert!((fit.p - 0.5).abs() < 0.03, "{fit:?}");
    }
}
