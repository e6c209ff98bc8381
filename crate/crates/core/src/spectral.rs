//! The exclusion Laplacian with boundary killing and its spectrum.
//!
//! `Δ f(x) = T Σ_{y∼x} (f(y) − f(x)) − T r_Σ(x) f(x) 1{x ∈ ∂V}` acting on
//! `L²(m)` with the uniform probability measure `m`. Eigenvectors are
//! normalised in that inner product, so `ψ = √|V| · v` for a Euclidean unit
//! vector `v`.
//!
//! Mode indexing follows the usual convention for these models: `j = 1` is
//! the lowest nonzero eigenvalue. Without reservoirs that skips the constant
//! mode at array position 0; with reservoirs every mode counts.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::GraphWithBoundary;
use crate::linalg::{jacobi_eigen, DenseMatrix, JACOBI_MAX_SWEEPS};

pub const MAX_DENSE_VERTICES: usize = 5000;

/// Eigenvalues closer than `CLUSTER_TOL·(1+λ)` are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Matrix of `−Δ` together with the weights of `m`.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    pub matrix: DenseMatrix,
    pub weights: Vec<f64>,
    pub time_scale: f64,
    pub has_reservoirs: bool,
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `⟨f, g⟩_m`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f.iter().zip(g)).map(|(w, (a, b))| w * a * b).sum()
    }

    /// `−Δ f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.matvec(f)
    }
}

pub fn assemble_laplacian(g: &GraphWithBoundary) -> LaplacianMatrix {
    let nv = g.num_vertices();
    let t = g.time_scale();
    let mut m = DenseMatrix::zeros(nv);
    for &(u, v) in g.edges() {
        m.add(u, v, -t);
        m.add(v, u, -t);
        m.add(u, u, t);
        m.add(v, v, t);
    }
    for (a, r) in g.r_sigma().iter().enumerate() {
        if *r != 0.0 {
            m.add(a, a, t * r);
        }
    }
    LaplacianMatrix { matrix: m, weights: vec![1.0 / nv as f64; nv], time_scale: t, has_reservoirs: g.has_reservoirs() }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    offset: usize,
    multiplicity: usize,
    sweeps: usize,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// All eigenvalues, nondecreasing, array-indexed from 0.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector at array position `k`.
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.eigenvectors[k]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Array position of mode `j ≥ 1`.
    pub fn index_of(&self, j: usize) -> usize {
        assert!(j >= 1, "modes are numbered from 1");
        self.offset + j - 1
    }

    /// `λ_j`, `j ≥ 1`.
    pub fn lambda(&self, j: usize) -> f64 {
        self.eigenvalues[self.index_of(j)]
    }

    /// `ψ_j`, `j ≥ 1`.
    pub fn psi(&self, j: usize) -> &[f64] {
        &self.eigenvectors[self.index_of(j)]
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda(1)
    }

    /// Multiplicity `M` of `λ_1`.
    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    /// Array positions of the `λ_1` cluster.
    pub fn first_cluster(&self) -> Range<usize> {
        self.offset..self.offset + self.multiplicity
    }

    /// Number of modes addressable by `j ≥ 1`.
    pub fn num_modes(&self) -> usize {
        self.len() - self.offset
    }

    /// Fourier coefficients `⟨f, ψ_k⟩_m` for every array position `k`.
    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        let w = 1.0 / f.len() as f64;
        self.eigenvectors.iter().map(|psi| w * psi.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    /// Re-bases the `λ_1` cluster so that `ψ_1` points along the projection
    /// of `f` onto it. The other cluster vectors are completed by
    /// Gram–Schmidt in their original order. Returns `self` unchanged when
    /// the projection vanishes.
    pub fn aligned_to(&self, f: &[f64]) -> SpectralDecomposition {
        let cluster = self.first_cluster();
        let coeff: Vec<f64> = self.coefficients(f)[cluster.clone()].to_vec();
        let norm = coeff.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut out = self.clone();
        if norm < 1e-14 || cluster.len() < 2 {
            return out;
        }
        let nv = f.len();
        let mut lead = vec![0.0; nv];
        for (c, k) in coeff.iter().zip(cluster.clone()) {
            for (l, p) in lead.iter_mut().zip(&self.eigenvectors[k]) {
                *l += c / norm * p;
            }
        }
        let mut basis = vec![lead];
        for k in cluster.clone() {
            if basis.len() == cluster.len() {
                break;
            }
            let mut v = self.eigenvectors[k].clone();
            for b in &basis {
                let d = m_inner(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
            let n = m_inner(&v, &v).sqrt();
            if n > 0.5 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        let worst = self.residuals[cluster.clone()].iter().copied().fold(0.0, f64::max);
        for (b, k) in basis.into_iter().zip(cluster) {
            out.eigenvectors[k] = b;
            out.residuals[k] = worst;
        }
        out
    }
}

fn m_inner(f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64
}

/// Full spectrum of `−Δ` by cyclic Jacobi.
pub fn eigendecompose(lap: &LaplacianMatrix) -> Result<SpectralDecomposition> {
    let nv = lap.dim();
    if nv > MAX_DENSE_VERTICES {
        return Err(Error::SizeGuard { what: "dense eigensolve", size: nv, limit: MAX_DENSE_VERTICES });
    }
    let out = jacobi_eigen(&lap.matrix, JACOBI_MAX_SWEEPS)?;
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_by(|&a, &b| out.values[a].total_cmp(&out.values[b]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&k| out.values[k]).collect();
    let mut vectors: Vec<Vec<f64>> = order.iter().map(|&k| out.vectors.column(k)).collect();

    // Re-orthonormalise inside every cluster, then scale to L²(m).
    let mut start = 0;
    while start < nv {
        let mut end = start + 1;
        while end < nv && values[end] - values[end - 1] < CLUSTER_TOL * (1.0 + values[end - 1].abs()) {
            end += 1;
        }
        for k in start..end {
            let (done, rest) = vectors.split_at_mut(k);
            let v = &mut rest[0];
            for b in &done[start..k] {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
        }
        start = end;
    }
    let scale = (nv as f64).sqrt();
    for v in &mut vectors {
        v.iter_mut().for_each(|x| *x *= scale);
        fix_sign(v);
    }
    let residuals = values
        .iter()
        .zip(&vectors)
        .map(|(l, v)| {
            let av = lap.apply(v);
            av.iter().zip(v).fold(0.0f64, |m, (a, x)| m.max((a - l * x).abs()))
        })
        .collect();

    let offset = usize::from(!lap.has_reservoirs && nv > 1);
    let l1 = values.get(offset).copied().unwrap_or(0.0);
    let multiplicity = values[offset.min(nv - 1)..].iter().take_while(|&&l| l - l1 < CLUSTER_TOL * (1.0 + l1.abs())).count();
    Ok(SpectralDecomposition { eigenvalues: values, eigenvectors: vectors, residuals, offset, multiplicity, sweeps: out.sweeps })
}

/// `Σψ ≥ 0`; when the sum vanishes, the first clearly nonzero entry is positive.
fn fix_sign(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let mass: f64 = v.iter().map(|x| x.abs()).sum();
    let flip = if sum.abs() > 1e-9 * mass {
        sum < 0.0
    } else {
        let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        v.iter().find(|x| x.abs() > 1e-8 * big).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dirichlet forms, energy measure and normal derivative of a vertex function.
#[derive(Debug, Clone, PartialEq)]
pub struct FormBundle {
    /// `E(f, g)`.
    pub energy: f64,
    /// Bulk part of `E(f, g)`.
    pub energy_bulk: f64,
    /// `Γ(f)(x)`: bulk plus boundary contributions.
    pub gamma: Vec<f64>,
    pub gamma_bulk: Vec<f64>,
    pub gamma_boundary: Vec<f64>,
    /// `∂⊥f(a)` per boundary slot.
    pub normal_derivative: Vec<f64>,
}

pub fn energy_forms(graph: &GraphWithBoundary, f: &[f64], g: Option<&[f64]>) -> Result<FormBundle> {
    let nv = graph.num_vertices();
    if f.len() != nv {
        return Err(Error::DimensionMismatch { expected: nv, got: f.len() });
    }
    let g = g.unwrap_or(f);
    if g.len() != nv {
        return Err(Error::DimensionMismatch { expected: nv, got: g.len() });
    }
    let t = graph.time_scale();
    let nvf = nv as f64;
    let nb = graph.boundary().len();
    let mut energy_bulk = 0.0;
    for &(x, y) in graph.edges() {
        energy_bulk += (f[x] - f[y]) * (g[x] - g[y]);
    }
    energy_bulk *= t / nvf;
    let r = graph.r_sigma();
    let energy = energy_bulk + graph.boundary().iter().map(|&a| t / nvf * r[a] * f[a] * g[a]).sum::<f64>();

    let mut gamma_bulk = vec![0.0; nv];
    for (x, gb) in gamma_bulk.iter_mut().enumerate() {
        let s: f64 = graph.neighbors(x).iter().map(|&y| (f[x] - f[y]).powi(2)).sum();
        *gb = 0.5 * t / nvf * s;
    }
    let mut gamma_boundary = vec![0.0; nv];
    let beta = graph.beta();
    for (k, &a) in graph.boundary().iter().enumerate() {
        gamma_boundary[a] = beta[k] * f[a] * f[a] / nb as f64;
    }
    let gamma = gamma_bulk.iter().zip(&gamma_boundary).map(|(a, b)| a + b).collect();
    let ratio = nb as f64 / nvf;
    let normal_derivative =
        graph.boundary().iter().map(|&a| t * ratio * graph.neighbors(a).iter().map(|&y| f[a] - f[y]).sum::<f64>()).collect();
    Ok(FormBundle { energy, energy_bulk, gamma, gamma_bulk, gamma_boundary, normal_derivative })
}

/// A root `(ω, θ)` of the segment boundary equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentEigenSolution {
    pub omega: f64,
    pub theta: f64,
    pub lambda: f64,
    /// Scaled residual of the right-end equation (the left one holds by construction).
    pub residual: f64,
}

/// Lowest `count` positive roots of
/// `tan θ = R(ω; β₀)` and `tan(ω+θ) = −R(ω; β₁)` with
/// `R(ω; β) = (2n² sin²(ω/2n) − (n+1)β/2) / (n² sin(ω/n))`.
///
/// θ is eliminated through `θ = arctan R(ω; β₀)`. Between consecutive
/// poles of `tan(ω+θ(ω))` the right-end residual runs from −∞ to +∞, so
/// each such interval is bisected to 1e−12 in ω.
pub fn segment_eigen_oracle(n: usize, beta0: f64, beta1: f64, count: usize) -> Result<Vec<SegmentEigenSolution>> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!("segment oracle needs n >= 4, got {n}")));
    }
    if !(beta0 >= 0.0 && beta1 >= 0.0) {
        return Err(Error::InvalidParameter("negative beta".into()));
    }
    let nf = n as f64;
    let r = |w: f64, b: f64| (2.0 * nf * nf * (w / (2.0 * nf)).sin().powi(2) - 0.5 * (nf + 1.0) * b) / (nf * nf * (w / nf).sin());
    let theta = |w: f64| r(w, beta0).atan();
    let phase = |w: f64| w + theta(w);
    let g = |w: f64| phase(w).tan() + r(w, beta1);

    let top = nf * std::f64::consts::PI;
    let eps = 1e-9;
    let hi_end = top - 1e-9;
    let pi = std::f64::consts::PI;
    let mut k = ((phase(eps) - pi / 2.0) / pi).floor() + 1.0;
    let mut lo = eps;
    let mut out = Vec::new();
    let mut index = 0;
    while out.len() < count {
        // Next pole: phase(ω) = π/2 + kπ, bracketed by a forward scan.
        let target = pi / 2.0 + k * pi;
        let step = pi / 16.0;
        let mut a = lo;
        let mut b = lo;
        let mut pole = None;
        while b < hi_end {
            b = (a + step).min(hi_end);
            if phase(b) >= target {
                let (mut x, mut y) = (a, b);
                while y - x > 1e-13 {
                    let m = 0.5 * (x + y);
                    if phase(m) >= target {
                        y = m;
                    } else {
                        x = m;
                    }
                }
                pole = Some(0.5 * (x + y));
                break;
            }
            a = b;
        }
        let hi = pole.unwrap_or(hi_end);
        let sign_lo = if index == 0 || lo == eps { g(eps.max(lo)).signum() } else { -1.0 };
        let sign_hi = if pole.is_some() { 1.0 } else { g(hi).signum() };
        if sign_lo == sign_hi {
            if index == 0 && beta0 == 0.0 && beta1 == 0.0 {
                // The constant mode ω = 0 is the only root below the first pole.
            } else {
                return Err(Error::RootNotBracketed { index, lo, hi });
            }
        } else {
            let (mut x, mut y) = (lo, hi);
            while y - x > 1e-12 {
                let m = 0.5 * (x + y);
                if g(m).signum() == sign_lo {
                    x = m;
                } else {
                    y = m;
                }
            }
            let w = 0.5 * (x + y);
            let th = theta(w);
            let num = 2.0 * nf * nf * (w / (2.0 * nf)).sin().powi(2) - 0.5 * (nf + 1.0) * beta1;
            let den = nf * nf * (w / nf).sin();
            let residual = ((w + th).sin() * den + (w + th).cos() * num).abs() / (den.abs() + num.abs());
            out.push(SegmentEigenSolution { omega: w, theta: th, lambda: 4.0 * nf * nf * (w / (2.0 * nf)).sin().powi(2), residual });
        }
        if pole.is_none() {
            if out.len() < count {
                return Err(Error::RootNotBracketed { index: index + 1, lo: hi, hi: top });
            }
            break;
        }
        lo = hi;
        k += 1.0;
        index += 1;
    }
    Ok(out)
}
