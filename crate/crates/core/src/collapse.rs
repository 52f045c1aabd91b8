//! Data-collapse scoring for families of curves indexed by a scale parameter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssep_sampler::rng_from;

/// One curve `y(x)` measured at scale parameter `param` (usually time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub param: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(param: f64, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { param, x, y }
    }

    /// `(x / param^x_exp, y * param^y_exp)`, sorted by the new abscissa.
    pub fn rescaled(&self, x_exp: f64, y_exp: f64) -> Series {
        let sx = self.param.powf(x_exp);
        let sy = self.param.powf(y_exp);
        let mut pts: Vec<(f64, f64)> = self.x.iter().zip(&self.y).map(|(&x, &y)| (x / sx, y * sy)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Series { param: self.param, x: pts.iter().map(|p| p.0).collect(), y: pts.iter().map(|p| p.1).collect() }
    }

    /// Linear interpolation; `x` must lie inside the support.
    pub fn interpolate(&self, x: f64) -> f64 {
        let k = self.x.partition_point(|&v| v < x);
        if k == 0 {
            return self.y[0];
        }
        if k >= self.x.len() {
            return self.y[self.x.len() - 1];
        }
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        if x1 == x0 {
            return self.y[k];
        }
        let w = (x - x0) / (x1 - x0);
        self.y[k - 1] * (1.0 - w) + self.y[k] * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseOptions {
    pub grid_points: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self { grid_points: 200, bootstrap: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseScore {
    pub x_exponent: f64,
    pub y_exponent: f64,
    pub score: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub support: (f64, f64),
}

fn support(curves: &[Series]) -> Result<(f64, f64)> {
    let lo = curves.iter().map(|c| c.x[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves.iter().map(|c| *c.x.last().unwrap()).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("no overlap after rescaling: [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

/// Score over the grid rows listed in `rows` (repeats allowed).
fn score_on(vals: &[Vec<f64>], rows: &[usize]) -> f64 {
    let n = vals.len();
    let m = rows.len() as f64;
    let mut dist = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = rows.iter().map(|&k| (vals[i][k] - vals[j][k]).powi(2)).sum::<f64>() / m;
            dist += d2.sqrt();
            pairs += 1;
        }
    }
    let scale = (rows.iter().map(|&k| (vals.iter().map(|v| v[k]).sum::<f64>() / n as f64).powi(2)).sum::<f64>() / m).sqrt();
    if scale == 0.0 {
        return if dist == 0.0 { 0.0 } else { f64::INFINITY };
    }
    dist / pairs as f64 / scale
}

fn check(series: &[Series]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("collapse needs at least two series".into()));
    }
    for s in series {
        if s.x.len() != s.y.len() || s.x.len() < 2 {
            return Err(Error::InvalidInput("each series needs >= 2 points with matching x and y".into()));
        }
        if s.param <= 0.0 {
            return Err(Error::InvalidInput("series parameter must be positive".into()));
        }
    }
    Ok(())
}

/// Mean pairwise RMS distance between rescaled curves on their common
/// support, divided by the RMS of the mean curve.
pub fn collapse_score(series: &[Series], x_exp: f64, y_exp: f64, opts: CollapseOptions) -> Result<CollapseScore> {
    check(series)?;
    let grid = opts.grid_points.max(2);
    let curves: Vec<Series> = series.iter().map(|s| s.rescaled(x_exp, y_exp)).collect();
    let (lo, hi) = support(&curves)?;
    let xs: Vec<f64> = (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect();
    let vals: Vec<Vec<f64>> = curves.iter().map(|c| xs.iter().map(|&x| c.interpolate(x)).collect()).collect();
    let all: Vec<usize> = (0..grid).collect();
    let score = score_on(&vals, &all);
    let mut rng = rng_from(opts.seed);
    let mut boot: Vec<f64> = (0..opts.bootstrap)
        .map(|_| {
            let rows: Vec<usize> = (0..grid).map(|_| rng.random_range(0..grid)).collect();
            score_on(&vals, &rows)
        })
        .collect();
    let (ci_lo, ci_hi) = if boot.is_empty() {
        (score, score)
    } else {
        boot.sort_by(f64::total_cmp);
        let q = |p: f64| boot[((boot.len() - 1) as f64 * p).round() as usize];
        (q(0.025), q(0.975))
    };
    Ok(CollapseScore { x_exponent: x_exp, y_exponent: y_exp, score, ci_lo, ci_hi, support: (lo, hi) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(f: impl Fn(f64, f64) -> f64, ts: &[f64], xs: impl Fn(f64) -> Vec<f64>) -> Vec<Series> {
        ts.iter()
            .map(|&t| {
                let x = xs(t);
                let y = x.iter().map(|&v| f(v, t)).collect();
                Series::new(t, x, y)
            })
            .collect()
    }

    #[test]
    fn identical_curves_score_zero() {
        let s = family(|x, _| (-x).exp(), &[1.0, 2.0, 3.0], |_| (0..30).map(|k| k as f64 * 0.1).collect());
        let c = collapse_score(&s, 0.0, 0.0, CollapseOptions::default()).unwrap();
        assert_eq!(c.score, 0.0);
        assert_eq!((c.ci_lo, c.ci_hi), (0.0, 0.0));
    }

    #[test]
    fn ballistic_family_collapses_under_x_over_t() {
        let s = family(|x, t| (-x / t).exp(), &[5.0, 10.0], |t| (1..=(4.0 * t) as usize).map(|k| k as f64).collect());
        let base = collapse_score(&s, 0.0, 0.0, CollapseOptions::default()).unwrap();
        let good = collapse_score(&s, 1.0, 0.0, CollapseOptions::default()).unwrap();
        assert!(good.score * 5.0 < base.score, "{good:?} {base:?}");
        assert!(good.score >= 0.0);
    }

    #[test]
    fn y_rescaling() {
        let s = family(|x, t| (-x * x / t).exp() / t, &[1.0, 4.0], |_| (0..40).map(|k| k as f64 * 0.05).collect());
        let c = collapse_score(&s, 0.5, 1.0, CollapseOptions::default()).unwrap();
        assert!(c.score < 1e-2, "{c:?}");
    }

    #[test]
    fn disjoint_support_is_an_error() {
        let a = Series::new(1.0, vec![0.0, 1.0], vec![1.0, 1.0]);
        let b = Series::new(2.0, vec![2.0, 3.0], vec![1.0, 1.0]);
        assert!(collapse_score(&[a.clone(), b], 0.0, 0.0, CollapseOptions::default()).is_err());
        assert!(collapse_score(&[a], 0.0, 0.0, CollapseOptions::default()).is_err());
    }
}
