//! Analytic cutoff prediction: eigenprojections, extremal starts, the
//! variance curve `Ξ_j`, the cutoff clock and the erf profile.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Family, GraphWithBoundary};
use crate::spectral::{energy_forms, SpectralDecomposition};

/// Eigenvalues below this are refused as divisors.
pub const NEAR_ZERO_EIGENVALUE: f64 = 1e-10;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// `Π(j, ρ) = (√(2j)/π) ρ^{1−1/j} sin(π ρ^{1/j})`.
pub fn pi_function(j: usize, rho: f64) -> f64 {
    let jf = j as f64;
    let r = rho.powf(1.0 / jf);
    (2.0 * jf).sqrt() / std::f64::consts::PI * rho.powf(1.0 - 1.0 / jf) * (std::f64::consts::PI * r).sin()
}

/// Root of `Π(j1,·) − Π(j2,·)` in `[lo, hi]` by bisection to 1e−15.
pub fn pi_crossing(j1: usize, j2: usize, lo: f64, hi: f64) -> Result<f64> {
    let d = |r: f64| pi_function(j1, r) - pi_function(j2, r);
    let (mut a, mut b) = (lo, hi);
    let sa = d(a).signum();
    if sa == d(b).signum() {
        return Err(Error::InvalidParameter(format!("no sign change of Π({j1})−Π({j2}) on [{lo}, {hi}]")));
    }
    while b - a > 1e-15 {
        let m = 0.5 * (a + b);
        if d(m).signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenprojection {
    /// `|c_j|` for each mode of the `λ_1` cluster.
    pub magnitudes: Vec<f64>,
    /// `√(Σ c_j²)`, independent of the basis chosen inside the cluster.
    pub norm: f64,
}

/// Projections of `η₀ − ρ_ss` onto the `λ_1` eigenspace. `eta0` may be a
/// configuration or a synthetic real vector.
pub fn eigenprojection(spectral: &SpectralDecomposition, rho_ss: &[f64], eta0: &[f64]) -> Result<Eigenprojection> {
    if eta0.len() != spectral.len() || rho_ss.len() != spectral.len() {
        return Err(Error::DimensionMismatch { expected: spectral.len(), got: eta0.len() });
    }
    let dev: Vec<f64> = eta0.iter().zip(rho_ss).map(|(e, r)| e - r).collect();
    let c = spectral.coefficients(&dev);
    let magnitudes: Vec<f64> = c[spectral.first_cluster()].iter().map(|v| v.abs()).collect();
    let norm = magnitudes.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(Eigenprojection { magnitudes, norm })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtremalMode {
    /// Closed models: particle density.
    Density(f64),
    AllOnes,
    AllZeros,
    /// Whichever of all-ones / all-zeros projects more strongly.
    Auto,
}

pub fn config_to_f64(eta: &[u8]) -> Vec<f64> {
    eta.iter().map(|&b| b as f64).collect()
}

/// Initial configuration with (near) maximal first-eigenspace projection.
///
/// * 1D segments and cycles: a contiguous block of `⌊ρn⌋+1` sites, placed
///   where the projection norm is largest (first such window on ties).
/// * Boxes and tori in `D ≥ 2`: the rectangle with `j* = argmax Π(j,ρ)`
///   thin axes, sides rounded to the lattice, then axis 0 of the rectangle
///   rebalanced to hold exactly `⌊ρ|V|⌋` particles. On mixed cubes the
///   thin axes are the non-periodic ones.
/// * Anything else: the `⌊ρ|V|⌋` largest entries of `ψ_1`.
pub fn extremal_config(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, rho_ss: &[f64], mode: ExtremalMode) -> Result<Vec<u8>> {
    let nv = graph.num_vertices();
    let rho = match mode {
        ExtremalMode::AllOnes => return Ok(vec![1; nv]),
        ExtremalMode::AllZeros => return Ok(vec![0; nv]),
        ExtremalMode::Auto => {
            let ones = eigenprojection(spectral, rho_ss, &vec![1.0; nv])?.norm;
            let zeros = eigenprojection(spectral, rho_ss, &vec![0.0; nv])?.norm;
            return Ok(vec![u8::from(ones >= zeros); nv]);
        }
        ExtremalMode::Density(r) => r,
    };
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("density {rho} outside (0,1)")));
    }
    let params = graph.params();
    let lattice = matches!(graph.family(), Family::Lattice | Family::Torus | Family::MixedCube);
    match (lattice, params.dim, params.n) {
        (true, 1, Some(n)) => Ok(best_window(graph, spectral, rho_ss, (rho * n as f64).floor() as usize + 1)),
        (true, d, Some(n)) if d >= 2 => Ok(extremal_rectangle(graph, n, rho)),
        _ => {
            let k = ((rho * nv as f64).floor() as usize).max(1);
            let psi = spectral.psi(1);
            let mut order: Vec<usize> = (0..nv).collect();
            order.sort_by(|&a, &b| psi[b].total_cmp(&psi[a]).then(a.cmp(&b)));
            let mut eta = vec![0u8; nv];
            for &v in &order[..k.min(nv)] {
                eta[v] = 1;
            }
            Ok(eta)
        }
    }
}

fn best_window(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, rho_ss: &[f64], k: usize) -> Vec<u8> {
    let nv = graph.num_vertices();
    let k = k.min(nv);
    let cyclic = graph.family() == Family::Torus;
    let starts = if cyclic { nv } else { nv - k + 1 };
    let mut best = (f64::NEG_INFINITY, 0usize);
    for s in 0..starts {
        let mut eta = vec![0.0; nv];
        for i in 0..k {
            eta[(s + i) % nv] = 1.0;
        }
        let p = eigenprojection(spectral, rho_ss, &eta).map(|e| e.norm).unwrap_or(0.0);
        if p > best.0 + 1e-12 {
            best = (p, s);
        }
    }
    let mut eta = vec![0u8; nv];
    for i in 0..k {
        eta[(best.1 + i) % nv] = 1;
    }
    eta
}

fn extremal_rectangle(graph: &GraphWithBoundary, n: usize, rho: f64) -> Vec<u8> {
    let params = graph.params();
    let dim = params.dim;
    let periodic: Vec<bool> = (0..dim).map(|d| matches!(params.faces[2 * d], crate::graph::FaceSpec::Periodic)).collect();
    let extent: Vec<usize> = periodic.iter().map(|&p| if p { n } else { n + 1 }).collect();
    let nv: usize = extent.iter().product();
    let candidates: Vec<usize> =
        if periodic.iter().all(|&p| p) { (0..dim).collect() } else { (0..dim).filter(|&d| !periodic[d]).collect() };
    let mut jstar = 1;
    for j in 2..=candidates.len() {
        if pi_function(j, rho) > pi_function(jstar, rho) + 1e-15 {
            jstar = j;
        }
    }
    let thin = &candidates[..jstar];
    let frac = rho.powf(1.0 / jstar as f64);
    let mut side = extent.clone();
    for &d in thin {
        side[d] = ((frac * extent[d] as f64).round() as usize).clamp(1, extent[d]);
    }
    let k = ((rho * nv as f64).floor() as usize).max(1);
    let a0 = thin[0];
    let cross: usize = (0..dim).filter(|&d| d != a0).map(|d| side[d]).product();
    side[a0] = k.div_ceil(cross).clamp(1, extent[a0]);

    // Fill the box layer by layer along a0, lexicographically inside a layer.
    let mut order: Vec<usize> = vec![a0];
    order.extend((0..dim).filter(|&d| d != a0));
    let mut stride = vec![1usize; dim];
    for d in (0..dim.saturating_sub(1)).rev() {
        stride[d] = stride[d + 1] * extent[d + 1];
    }
    let mut eta = vec![0u8; nv];
    let mut c = vec![0usize; dim];
    let mut placed = 0;
    'fill: loop {
        if placed == k {
            break;
        }
        let v: usize = (0..dim).map(|d| c[d] * stride[d]).sum();
        eta[v] = 1;
        placed += 1;
        // Odometer over `order`, least significant last.
        for &d in order.iter().rev() {
            c[d] += 1;
            if c[d] < side[d] {
                continue 'fill;
            }
            c[d] = 0;
        }
        break;
    }
    eta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiValue {
    pub total: f64,
    pub bulk: f64,
    pub boundary: f64,
}

/// `Ξ_j(t) = e^{2t}[Σ_x ρ(1−ρ)Γ(ψ_j)(x)/λ_j + ½|∂V|⁻¹ Σ_a (ρ̄−ρ)(1−2ρ) β ψ_j(a)²/λ_j]`
/// at finite size, split into its bulk and boundary sums.
pub fn xi(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, rho_ss: &[f64], j: usize, t: f64) -> Result<XiValue> {
    if j == 0 || j > spectral.num_modes() {
        return Err(Error::InvalidParameter(format!("mode {j} out of range")));
    }
    let lambda = spectral.lambda(j);
    if lambda < NEAR_ZERO_EIGENVALUE {
        return Err(Error::NearZeroEigenvalue { lambda });
    }
    let psi = spectral.psi(j);
    let forms = energy_forms(graph, psi, None)?;
    let bulk0: f64 = rho_ss.iter().zip(&forms.gamma).map(|(r, g)| r * (1.0 - r) * g).sum::<f64>() / lambda;
    let mut boundary0 = 0.0;
    if graph.has_reservoirs() {
        let beta = graph.beta();
        let bar = graph.rho_bar();
        for (k, &a) in graph.boundary().iter().enumerate() {
            boundary0 += (bar[k] - rho_ss[a]) * (1.0 - 2.0 * rho_ss[a]) * beta[k] * psi[a] * psi[a];
        }
        boundary0 *= 0.5 / graph.boundary().len() as f64 / lambda;
    }
    let g = (2.0 * t).exp();
    Ok(XiValue { total: g * (bulk0 + boundary0), bulk: g * bulk0, boundary: g * boundary0 })
}

/// `erf(c / (2√(2Ξ₁(t))))`.
pub fn limit_profile(c_star_norm: f64, xi1: impl Fn(f64) -> f64, t: f64) -> Result<f64> {
    let v = xi1(t);
    if !(v > 0.0) {
        return Err(Error::NonpositiveVariance(v));
    }
    Ok(erf(c_star_norm / (2.0 * (2.0 * v).sqrt())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSchedule {
    /// `T(t_N + t/λ_1)` in microscopic time.
    pub physical_time: f64,
    /// `T/λ_1`.
    pub window: f64,
    /// `t_N = log|V|/(2λ_1)`, macroscopic.
    pub t_n: f64,
}

pub fn cutoff_schedule(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, t: f64) -> Result<CutoffSchedule> {
    let l1 = spectral.lambda1();
    if l1 < NEAR_ZERO_EIGENVALUE {
        return Err(Error::NearZeroEigenvalue { lambda: l1 });
    }
    let tn = (graph.num_vertices() as f64).ln() / (2.0 * l1);
    let ts = graph.time_scale();
    Ok(CutoffSchedule { physical_time: ts * (tn + t / l1), window: ts / l1, t_n: tn })
}

/// `lim_k 5^k φ^{∘k}(2)` for `φ(t) = (5 − √(25−4t))/2`, iterated in the
/// cancellation-free form `2t/(5 + √(25−4t))`. Returns the limit and the
/// number of iterations until successive terms differ by < 1e−12.
pub fn sg_decimation_limit() -> (f64, usize) {
    let phi = |t: f64| 2.0 * t / (5.0 + (25.0 - 4.0 * t).sqrt());
    let mut x = 2.0;
    let mut scale = 1.0;
    let mut prev = x;
    for k in 1..200 {
        x = phi(x);
        scale *= 5.0;
        let s = scale * x;
        if (s - prev).abs() < 1e-12 {
            return (s, k);
        }
        prev = s;
    }
    (prev, 200)
}

/// `(3/2)·lim_k 5^k φ^{∘k}(2)`.
pub fn sg_lambda1_oracle() -> f64 {
    1.5 * sg_decimation_limit().0
}

/// Everything needed to draw the predicted profile for one initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePrediction {
    pub initial: Vec<u8>,
    /// `|c_j|` over the `λ_1` cluster, after aligning `ψ_1` with `γ₀`.
    pub c_star: Vec<f64>,
    pub c_star_norm: f64,
    pub xi1_bulk0: f64,
    pub xi1_boundary0: f64,
    pub lambda1: f64,
    pub t_n: f64,
    pub time_scale: f64,
}

impl ProfilePrediction {
    pub fn new(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, rho_ss: &[f64], initial: Vec<u8>) -> Result<Self> {
        let eta = config_to_f64(&initial);
        let dev: Vec<f64> = eta.iter().zip(rho_ss).map(|(e, r)| e - r).collect();
        let aligned = spectral.aligned_to(&dev);
        let proj = eigenprojection(&aligned, rho_ss, &eta)?;
        let x = xi(graph, &aligned, rho_ss, 1, 0.0)?;
        let sched = cutoff_schedule(graph, &aligned, 0.0)?;
        Ok(Self {
            initial,
            c_star: proj.magnitudes,
            c_star_norm: proj.norm,
            xi1_bulk0: x.bulk,
            xi1_boundary0: x.boundary,
            lambda1: aligned.lambda1(),
            t_n: sched.t_n,
            time_scale: graph.time_scale(),
        })
    }

    pub fn xi1(&self, t: f64) -> f64 {
        (2.0 * t).exp() * (self.xi1_bulk0 + self.xi1_boundary0)
    }

    pub fn physical_time(&self, t: f64) -> f64 {
        self.time_scale * (self.t_n + t / self.lambda1)
    }

    /// Macroscopic time `t_N + t/λ_1`.
    pub fn macroscopic_time(&self, t: f64) -> f64 {
        self.t_n + t / self.lambda1
    }

    pub fn profile(&self, t: f64) -> Result<f64> {
        limit_profile(self.c_star_norm, |s| self.xi1(s), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, build_segment, build_torus, FaceSpec};
    use crate::spectral::{assemble_laplacian, eigendecompose};
    use crate::stationary::solve_stationary_density;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn pi_values() {
        assert!((pi_function(1, 0.5) - SQRT_2 / PI).abs() < 1e-15);
        let r = pi_crossing(1, 2, 0.2, 0.3).unwrap();
        assert!((r - 0.25).abs() < 1e-9);
        for j in 1..5 {
            for k in 1..100 {
                assert!(pi_function(j, k as f64 / 100.0) > 0.0);
            }
        }
    }

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-14, "{}", erf(1.0));
        assert!((erf(1.0 / PI) - 0.347_403_595_868_883_8).abs() < 1e-14);
    }

    #[test]
    fn profile_limits_and_monotonicity() {
        let xi1 = |t: f64| (2.0 * t).exp() * 0.25;
        assert_eq!(limit_profile(0.0, xi1, 0.3).unwrap(), 0.0);
        assert!(limit_profile(0.45, xi1, -20.0).unwrap() > 1.0 - 1e-12);
        assert!(limit_profile(0.45, xi1, 20.0).unwrap() < 1e-8);
        let c = SQRT_2 / PI;
        assert!((limit_profile(c, xi1, 0.0).unwrap() - erf(1.0 / PI)).abs() < 1e-15);
        assert!(limit_profile(1.0, |_| 0.0, 0.0).is_err());
    }

    #[test]
    fn decimation_iteration() {
        let phi = |t: f64| 2.0 * t / (5.0 + (25.0 - 4.0 * t).sqrt());
        assert_eq!(phi(0.0), 0.0);
        let (l, k) = sg_decimation_limit();
        assert!(k <= 30, "{k} iterations");
        assert!((l - 2.242_133_185_2).abs() < 1e-9, "{l}");
        assert!((sg_lambda1_oracle() - 1.5 * l).abs() < 1e-15);
    }

    #[test]
    fn xi_constant_density() {
        let g = build_torus(1, 16).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let rho = vec![0.5; 16];
        for t in [-1.0, 0.0, 0.7] {
            let x = xi(&g, &sp, &rho, 1, t).unwrap();
            assert!((x.total - (2.0 * t).exp() * 0.25).abs() < 1e-12);
            assert_eq!(x.boundary, 0.0);
        }
        let closed = build_segment(8, FaceSpec::Closed, FaceSpec::Closed).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&closed)).unwrap();
        assert_eq!(sp.index_of(1), 1);
        let eq = FaceSpec::open(0.3, 0.7, 0.0);
        let g = build_segment(20, eq, eq).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
        let x = xi(&g, &sp, &rho, 1, 0.0).unwrap();
        assert!((x.total - 0.21).abs() < 1e-10 && x.boundary.abs() < 1e-12);
    }

    #[test]
    fn torus_arc_projection() {
        let n = 64;
        let g = build_torus(1, n).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let k = n / 2 + 1;
        let rho = vec![k as f64 / n as f64; n];
        let eta = extremal_config(&g, &sp, &rho, ExtremalMode::Density(0.5)).unwrap();
        assert_eq!(eta.iter().map(|&b| b as usize).sum::<usize>(), k);
        let c = eigenprojection(&sp, &rho, &config_to_f64(&eta)).unwrap();
        assert!((c.norm - SQRT_2 / PI).abs() < 0.02);
        let nf = n as f64;
        let exact = SQRT_2 / nf * (PI * k as f64 / nf).sin() / (PI / nf).sin();
        assert!((c.norm - exact).abs() < 1e-10);
    }

    #[test]
    fn rectangles_in_two_dimensions() {
        let g = build_torus(2, 20).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let rho = vec![0.1; 400];
        let sq = extremal_config(&g, &sp, &rho, ExtremalMode::Density(0.1)).unwrap();
        let rows: Vec<usize> = (0..20).filter(|&i| (0..20).any(|j| sq[i * 20 + j] == 1)).collect();
        let cols: Vec<usize> = (0..20).filter(|&j| (0..20).any(|i| sq[i * 20 + j] == 1)).collect();
        assert_eq!(sq.iter().map(|&b| b as usize).sum::<usize>(), 40);
        assert!(rows.len() == 7 && cols.len() == 6, "{} x {}", rows.len(), cols.len());
        let slab = extremal_config(&g, &sp, &vec![0.4; 400], ExtremalMode::Density(0.4)).unwrap();
        let rows: Vec<usize> = (0..20).filter(|&i| (0..20).any(|j| slab[i * 20 + j] == 1)).collect();
        assert_eq!(rows, (0..8).collect::<Vec<_>>());
        assert!((0..8).all(|i| (0..20).all(|j| slab[i * 20 + j] == 1)));
    }

    #[test]
    fn reservoir_modes() {
        let open = FaceSpec::open(0.2, 0.8, 0.0);
        let g = build_lattice(1, 16, &[open, open]).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
        assert_eq!(extremal_config(&g, &sp, &rho, ExtremalMode::Auto).unwrap(), vec![1; 17]);
        assert_eq!(extremal_config(&g, &sp, &rho, ExtremalMode::AllZeros).unwrap(), vec![0; 17]);
        let c = eigenprojection(&sp, &rho, &[1.0; 17]).unwrap();
        let direct: f64 = rho.iter().zip(sp.psi(1)).map(|(r, p)| (1.0 - r) * p).sum::<f64>() / 17.0;
        assert!((c.norm - direct.abs()).abs() < 1e-14);
        assert!(extremal_config(&g, &sp, &rho, ExtremalMode::Density(1.2)).is_err());
    }

    #[test]
    fn schedule_at_zero() {
        let g = build_torus(1, 64).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let s = cutoff_schedule(&g, &sp, 0.0).unwrap();
        assert_eq!(s.physical_time, g.time_scale() * s.t_n);
        let lead = 64.0 * 64.0 * 64f64.ln() / (2.0 * 4.0 * PI * PI);
        assert!((s.physical_time / lead - 1.0).abs() < 0.15);
    }
}
