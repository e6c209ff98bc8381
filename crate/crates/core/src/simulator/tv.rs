use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::erf;
use crate::rng::stream;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_LEG: u64 = 0xB0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvEstimate {
    /// `erf(|Δμ|/(2√2σ))` on the projection along the mean gap.
    pub gaussian: f64,
    /// Largest gap between the two projected empirical CDFs.
    pub ks: f64,
    /// 95% percentile bootstrap interval for `gaussian`.
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// 95% percentile bootstrap interval for `ks`.
    pub ks_ci_lo: f64,
    pub ks_ci_hi: f64,
    pub mean_gap: f64,
    pub sigma: f64,
}

struct Point {
    gaussian: f64,
    ks: f64,
    mean_gap: f64,
    sigma: f64,
}

fn mean_vec(s: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for v in s {
        for (a, b) in m.iter_mut().zip(v.iter()) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= s.len() as f64);
    m
}

fn point(a: &[&[f64]], b: &[&[f64]], dim: usize) -> Result<Point> {
    let ma = mean_vec(a, dim);
    let mb = mean_vec(b, dim);
    let mut dir: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm > 0.0 {
        dir.iter_mut().for_each(|d| *d /= norm);
    } else {
        dir = vec![0.0; dim];
        dir[0] = 1.0;
    }
    let proj = |s: &[&[f64]]| -> Vec<f64> { s.iter().map(|v| v.iter().zip(&dir).map(|(x, d)| x * d).sum()).collect() };
    let pa = proj(a);
    let pb = proj(b);
    let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
    let (mua, mub) = (mean(&pa), mean(&pb));
    let ss = |p: &[f64], mu: f64| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>();
    let dof = (pa.len() + pb.len()).saturating_sub(2).max(1) as f64;
    let sigma = ((ss(&pa, mua) + ss(&pb, mub)) / dof).sqrt();
    if !(sigma >= 1e-12) {
        return Err(Error::DegenerateVariance(sigma));
    }
    let gap = (mua - mub).abs();
    Ok(Point { gaussian: erf(gap / (2.0 * std::f64::consts::SQRT_2 * sigma)), ks: ks_statistic(pa, pb), mean_gap: gap, sigma })
}

/// `sup_x |F_a(x) − F_b(x)|` over all thresholds.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

fn percentile_interval(mut v: Vec<f64>) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    (at(0.025), at(0.975))
}

/// Total-variation estimate between two clouds of first-eigenspace vectors.
/// Bootstrap resampling is driven by `seed`.
pub fn estimate_tv(samples_a: &[Vec<f64>], samples_b: &[Vec<f64>], seed: u64) -> Result<TvEstimate> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let dim = samples_a[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter("zero-dimensional samples".into()));
    }
    if let Some(v) = samples_a.iter().chain(samples_b).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    let a: Vec<&[f64]> = samples_a.iter().map(Vec::as_slice).collect();
    let b: Vec<&[f64]> = samples_b.iter().map(Vec::as_slice).collect();
    let p = point(&a, &b, dim)?;
    let mut rng = stream(seed, BOOTSTRAP_LEG, 0);
    let mut gs = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut ks = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let ra: Vec<&[f64]> = (0..a.len()).map(|_| a[rng.gen_range(0..a.len())]).collect();
        let rb: Vec<&[f64]> = (0..b.len()).map(|_| b[rng.gen_range(0..b.len())]).collect();
        if let Ok(q) = point(&ra, &rb, dim) {
            gs.push(q.gaussian);
            ks.push(q.ks);
        }
    }
    let (ci_lo, ci_hi) = percentile_interval(gs);
    let (ks_ci_lo, ks_ci_hi) = percentile_interval(ks);
    Ok(TvEstimate { gaussian: p.gaussian, ks: p.ks, ci_lo, ci_hi, ks_ci_lo, ks_ci_hi, mean_gap: p.mean_gap, sigma: p.sigma })
}
