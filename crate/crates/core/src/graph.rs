//! Graph families with boundary reservoirs.
//!
//! A [`GraphWithBoundary`] stores the raw reservoir rates `r₊`, `r₋` per
//! boundary vertex. The scaled rate `β(a) = T·(|∂V|/|V|)·(r₊+r₋)` and the
//! reservoir density `ρ̄(a) = r₊/(r₊+r₋)` are always recomputed from them.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GRAPH_FORMAT: &str = "cutoff-graph/1";
pub const MAX_SIERPINSKI_LEVEL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lattice,
    Torus,
    MixedCube,
    Sierpinski,
}

/// Reservoir attached to an open face: rates `c₊·s^(−θ)` and `c₋·s^(−θ)`
/// where `s` is the family's scale parameter (`n` for lattices, `2^level`
/// for the gasket).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub c_plus: f64,
    pub c_minus: f64,
    pub theta: f64,
}

impl Reservoir {
    pub fn new(c_plus: f64, c_minus: f64, theta: f64) -> Self {
        Self { c_plus, c_minus, theta }
    }

    /// Unscaled reservoir with total rate `r_sigma` and density `rho_bar`.
    /// When `r_sigma·(1−rho_bar)` would exceed 1, the ejection rate is
    /// pinned at 1 and the density is not honoured (large-β runs only need
    /// the total).
    pub fn with_total_rate(r_sigma: f64, rho_bar: f64) -> Self {
        let minus = r_sigma * (1.0 - rho_bar);
        if minus <= 1.0 {
            Self::new(r_sigma * rho_bar, minus, 0.0)
        } else {
            Self::new(r_sigma - 1.0, 1.0, 0.0)
        }
    }

    pub fn rates(&self, scale: f64) -> (f64, f64) {
        let f = scale.powf(-self.theta);
        (self.c_plus * f, self.c_minus * f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaceSpec {
    Open(Reservoir),
    Closed,
    Periodic,
}

impl FaceSpec {
    pub fn open(c_plus: f64, c_minus: f64, theta: f64) -> Self {
        FaceSpec::Open(Reservoir::new(c_plus, c_minus, theta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub dim: usize,
    pub n: Option<usize>,
    pub level: Option<usize>,
    pub faces: Vec<FaceSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub plus: f64,
    pub minus: f64,
}

/// Immutable graph with boundary reservoirs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphWithBoundary {
    family: Family,
    params: GraphParams,
    coords: Vec<Vec<f64>>,
    edges: Vec<(usize, usize)>,
    time_scale: f64,
    boundary: Vec<usize>,
    rates: Vec<RatePair>,
    slot: Vec<Option<usize>>,
    adj_ptr: Vec<usize>,
    adj: Vec<usize>,
    inc: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub vertices: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub boundary_vertices: usize,
    pub boundary_fraction: f64,
    pub beta_range: Option<(f64, f64)>,
    pub rho_bar_range: Option<(f64, f64)>,
}

impl GraphWithBoundary {
    /// Assembles a graph from raw parts. Edges are canonicalised to
    /// `(min, max)` and sorted; `reservoirs` lists `(vertex, r₊, r₋)`.
    pub fn from_parts(
        family: Family,
        params: GraphParams,
        coords: Vec<Vec<f64>>,
        edges: Vec<(usize, usize)>,
        reservoirs: Vec<(usize, f64, f64)>,
        time_scale: f64,
    ) -> Result<Self> {
        let nv = coords.len();
        if nv == 0 {
            return Err(Error::InvalidParameter("graph has no vertices".into()));
        }
        if !(time_scale > 0.0 && time_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("time scale {time_scale}")));
        }
        let mut edges: Vec<(usize, usize)> = edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidParameter(format!("duplicate edge {:?}", w[0])));
            }
        }
        for &(u, v) in &edges {
            if v >= nv {
                return Err(Error::InvalidParameter(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop at {u}")));
            }
        }
        let mut merged: BTreeMap<usize, RatePair> = BTreeMap::new();
        for (a, p, m) in reservoirs {
            if a >= nv {
                return Err(Error::InvalidParameter(format!("boundary vertex {a} out of range")));
            }
            let e = merged.entry(a).or_insert(RatePair { plus: 0.0, minus: 0.0 });
            e.plus += p;
            e.minus += m;
        }
        let boundary: Vec<usize> = merged.keys().copied().collect();
        let rates: Vec<RatePair> = merged.values().copied().collect();
        let mut slot = vec![None; nv];
        for (k, &a) in boundary.iter().enumerate() {
            slot[a] = Some(k);
        }

        let mut deg = vec![0usize; nv];
        for &(u, v) in &edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut adj_ptr = vec![0usize; nv + 1];
        for i in 0..nv {
            adj_ptr[i + 1] = adj_ptr[i] + deg[i];
        }
        let mut fill = adj_ptr.clone();
        let mut adj = vec![0usize; adj_ptr[nv]];
        let mut inc = vec![0usize; adj_ptr[nv]];
        for (e, &(u, v)) in edges.iter().enumerate() {
            adj[fill[u]] = v;
            inc[fill[u]] = e;
            fill[u] += 1;
            adj[fill[v]] = u;
            inc[fill[v]] = e;
            fill[v] += 1;
        }
        Ok(Self { family, params, coords, edges, time_scale, boundary, rates, slot, adj_ptr, adj, inc })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    /// `T_N`.
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.adj_ptr[v]..self.adj_ptr[v + 1]]
    }

    /// Indices into [`edges`](Self::edges) of the edges touching `v`, aligned with `neighbors(v)`.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.inc[self.adj_ptr[v]..self.adj_ptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_ptr[v + 1] - self.adj_ptr[v]
    }

    pub fn are_adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).contains(&v)
    }

    /// Sorted boundary vertex indices.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn has_reservoirs(&self) -> bool {
        !self.boundary.is_empty()
    }

    /// Position of `v` in [`boundary`](Self::boundary), if any.
    pub fn boundary_slot(&self, v: usize) -> Option<usize> {
        self.slot[v]
    }

    pub fn rates(&self) -> &[RatePair] {
        &self.rates
    }

    /// `r_Σ` at every vertex, zero in the interior.
    pub fn r_sigma(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.num_vertices()];
        for (k, &a) in self.boundary.iter().enumerate() {
            r[a] = self.rates[k].plus + self.rates[k].minus;
        }
        r
    }

    /// `β(a)` per boundary slot.
    pub fn beta(&self) -> Vec<f64> {
        let ratio = self.boundary.len() as f64 / self.num_vertices() as f64;
        self.rates.iter().map(|r| self.time_scale * ratio * (r.plus + r.minus)).collect()
    }

    /// `ρ̄(a)` per boundary slot.
    pub fn rho_bar(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.plus / (r.plus + r.minus)).collect()
    }

    /// Same graph with vertex `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let nv = self.num_vertices();
        if perm.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, got: perm.len() });
        }
        let mut coords = vec![Vec::new(); nv];
        for (v, c) in self.coords.iter().enumerate() {
            coords[perm[v]] = c.clone();
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let res = self.boundary.iter().zip(&self.rates).map(|(&a, r)| (perm[a], r.plus, r.minus)).collect();
        Self::from_parts(self.family, self.params.clone(), coords, edges, res, self.time_scale)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            format: GRAPH_FORMAT.to_string(),
            family: self.family,
            params: self.params.clone(),
            time_scale: self.time_scale,
            vertices: self.coords.clone(),
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
            boundary: self.boundary.clone(),
            rates: self.boundary.iter().copied().zip(self.rates.iter().copied()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph serialisation cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != GRAPH_FORMAT {
            return Err(Error::Format(format!("unsupported format tag {:?}", file.format)));
        }
        let mut res = Vec::with_capacity(file.rates.len());
        for &a in &file.boundary {
            let r = file.rates.get(&a).ok_or_else(|| Error::Format(format!("boundary vertex {a} has no rates")))?;
            res.push((a, r.plus, r.minus));
        }
        if file.rates.len() != file.boundary.len() {
            return Err(Error::Format("rates listed for non-boundary vertices".into()));
        }
        let edges = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = Self::from_parts(file.family, file.params, file.vertices, edges, res, file.time_scale)?;
        validate(&g)?;
        Ok(g)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    family: Family,
    params: GraphParams,
    time_scale: f64,
    vertices: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    boundary: Vec<usize>,
    rates: BTreeMap<usize, RatePair>,
}

/// Checks connectivity and reservoir rates; reports the derived ranges.
pub fn validate(g: &GraphWithBoundary) -> Result<Diagnostics> {
    let nv = g.num_vertices();
    let mut comp = vec![usize::MAX; nv];
    let mut components = 0;
    for s in 0..nv {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = components;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &w in g.neighbors(u) {
                if comp[w] == usize::MAX {
                    comp[w] = components;
                    q.push_back(w);
                }
            }
        }
        components += 1;
    }
    if components > 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    for (k, r) in g.rates.iter().enumerate() {
        let a = g.boundary[k];
        if !(r.plus > 0.0 && r.plus.is_finite()) {
            return Err(Error::RateOutOfRange { vertex: a, detail: format!("r+ = {}", r.plus) });
        }
        if !(r.minus > 0.0 && r.minus <= 1.0) {
            return Err(Error::RateOutOfRange { vertex: a, detail: format!("r- = {} not in (0,1]", r.minus) });
        }
    }
    let range = |v: Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))))
        }
    };
    let rho_bar_range = range(g.rho_bar());
    if let Some((lo, hi)) = rho_bar_range {
        if !(lo > 0.0 && hi < 1.0) {
            return Err(Error::RateOutOfRange { vertex: g.boundary[0], detail: format!("rho_bar range [{lo}, {hi}]") });
        }
    }
    Ok(Diagnostics {
        vertices: nv,
        edges: g.num_edges(),
        max_degree: (0..nv).map(|v| g.degree(v)).max().unwrap_or(0),
        boundary_vertices: g.boundary.len(),
        boundary_fraction: g.boundary.len() as f64 / nv as f64,
        beta_range: range(g.beta()),
        rho_bar_range,
    })
}

/// `{0, 1/n, …, 1}^dim` with nearest-neighbour edges and per-face boundary
/// conditions. `faces[2d]` is the face `x_d = 0`, `faces[2d+1]` is `x_d = 1`.
/// A vertex lying on several open faces receives the mean of their rates.
pub fn build_lattice(dim: usize, n: usize, faces: &[FaceSpec]) -> Result<GraphWithBoundary> {
    if dim == 0 || dim > 6 {
        return Err(Error::InvalidParameter(format!("dim = {dim} outside 1..=6")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} < 2")));
    }
    if faces.len() != 2 * dim {
        return Err(Error::InvalidParameter(format!("{} face specs for dim {dim}", faces.len())));
    }
    let mut periodic = vec![false; dim];
    for d in 0..dim {
        let (lo, hi) = (faces[2 * d], faces[2 * d + 1]);
        match (lo, hi) {
            (FaceSpec::Periodic, FaceSpec::Periodic) => periodic[d] = true,
            (FaceSpec::Periodic, _) | (_, FaceSpec::Periodic) => return Err(Error::PeriodicPairing { axis: d }),
            _ => {}
        }
    }
    if periodic.iter().any(|&p| p) && n < 3 {
        return Err(Error::InvalidParameter(format!("periodic axis needs n >= 3, got {n}")));
    }
    let extent: Vec<usize> = periodic.iter().map(|&p| if p { n } else { n + 1 }).collect();
    let nv: usize = extent.iter().product();
    if nv > 1_000_000 {
        return Err(Error::SizeGuard { what: "lattice vertices", size: nv, limit: 1_000_000 });
    }
    let mut stride = vec![1usize; dim];
    for d in (0..dim.saturating_sub(1)).rev() {
        stride[d] = stride[d + 1] * extent[d + 1];
    }
    let scale = n as f64;
    let mut coords = Vec::with_capacity(nv);
    let mut edges = Vec::new();
    let mut reservoirs = Vec::new();
    let mut c = vec![0usize; dim];
    for v in 0..nv {
        let mut rem = v;
        for d in 0..dim {
            c[d] = rem / stride[d];
            rem %= stride[d];
        }
        coords.push(c.iter().map(|&x| x as f64 / scale).collect());
        for d in 0..dim {
            if c[d] + 1 < extent[d] {
                edges.push((v, v + stride[d]));
            } else if periodic[d] {
                edges.push((v, v - c[d] * stride[d]));
            }
        }
        let mut open = Vec::new();
        for d in (0..dim).filter(|&d| !periodic[d]) {
            for (side, at) in [(0, 0), (1, extent[d] - 1)] {
                if c[d] == at {
                    if let FaceSpec::Open(r) = faces[2 * d + side] {
                        open.push(r.rates(scale));
                    }
                }
            }
        }
        if !open.is_empty() {
            let k = open.len() as f64;
            let p = open.iter().map(|r| r.0).sum::<f64>() / k;
            let m = open.iter().map(|r| r.1).sum::<f64>() / k;
            reservoirs.push((v, p, m));
        }
    }
    let family = if periodic.iter().all(|&p| p) {
        Family::Torus
    } else if periodic.iter().any(|&p| p) {
        Family::MixedCube
    } else {
        Family::Lattice
    };
    let params = GraphParams { dim, n: Some(n), level: None, faces: faces.to_vec() };
    let g = GraphWithBoundary::from_parts(family, params, coords, edges, reservoirs, scale * scale)?;
    validate(&g)?;
    Ok(g)
}

/// Discrete torus `(Z/nZ)^dim`.
pub fn build_torus(dim: usize, n: usize) -> Result<GraphWithBoundary> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("torus needs n >= 3, got {n}")));
    }
    build_lattice(dim, n, &vec![FaceSpec::Periodic; 2 * dim])
}

/// 1D segment `{0, 1/n, …, 1}` with the given end conditions.
pub fn build_segment(n: usize, left: FaceSpec, right: FaceSpec) -> Result<GraphWithBoundary> {
    build_lattice(1, n, &[left, right])
}

/// Segment whose open ends have boundary strength `β` in the two-end
/// convention `β = T(2/|V|) r_Σ`, i.e. `r_Σ = β(n+1)/(2n²)`, and reservoir
/// density 1/2. `β = 0` closes that end.
pub fn build_segment_with_beta(n: usize, beta0: f64, beta1: f64) -> Result<GraphWithBoundary> {
    let nf = n as f64;
    let face = |b: f64| -> Result<FaceSpec> {
        if b == 0.0 {
            Ok(FaceSpec::Closed)
        } else if b > 0.0 {
            Ok(FaceSpec::Open(Reservoir::with_total_rate(b * (nf + 1.0) / (2.0 * nf * nf), 0.5)))
        } else {
            Err(Error::InvalidParameter(format!("negative boundary strength {b}")))
        }
    };
    build_segment(n, face(beta0)?, face(beta1)?)
}

/// Level-`level` Sierpinski gasket graph. `corners` gives the conditions at
/// the three corners `(0,0)`, `(1,0)`, `(1/2,√3/2)`; rates scale with
/// `s = 2^level`. Periodic corner specs are rejected.
pub fn build_sierpinski(level: usize, corners: &[FaceSpec]) -> Result<GraphWithBoundary> {
    if level == 0 || level > MAX_SIERPINSKI_LEVEL {
        return Err(Error::InvalidParameter(format!("level {level} outside 1..={MAX_SIERPINSKI_LEVEL}")));
    }
    if corners.len() != 3 {
        return Err(Error::InvalidParameter(format!("{} corner specs, expected 3", corners.len())));
    }
    if corners.iter().any(|c| matches!(c, FaceSpec::Periodic)) {
        return Err(Error::InvalidParameter("gasket corners cannot be periodic".into()));
    }
    // Points are integer pairs (a, b) standing for a·e₁ + b·e₂ with
    // e₁ = (1,0)/2^L and e₂ = (1/2, √3/2)/2^L, so junction merging is exact.
    let side = 1i64 << level;
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut points: Vec<(i64, i64)> = Vec::new();
    let mut edges = Vec::new();
    let top = [(0, 0), (side, 0), (0, side)];
    let mut stack = vec![(top, 0usize)];
    // Depth-first in address order: child i of a cell shares corner i.
    while let Some((cell, depth)) = stack.pop() {
        if depth == level {
            let mut ids = [0usize; 3];
            for (k, p) in cell.iter().enumerate() {
                ids[k] = *index.entry(*p).or_insert_with(|| {
                    points.push(*p);
                    points.len() - 1
                });
            }
            edges.push((ids[0], ids[1]));
            edges.push((ids[0], ids[2]));
            edges.push((ids[1], ids[2]));
            continue;
        }
        let mid = |p: (i64, i64), q: (i64, i64)| ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
        for i in (0..3).rev() {
            let child = [mid(cell[i], cell[0]), mid(cell[i], cell[1]), mid(cell[i], cell[2])];
            stack.push((child, depth + 1));
        }
    }
    let s = side as f64;
    let h = 3f64.sqrt() / 2.0;
    let coords = points.iter().map(|&(a, b)| vec![(a as f64 + b as f64 / 2.0) / s, b as f64 * h / s]).collect();
    let mut reservoirs = Vec::new();
    for (k, spec) in corners.iter().enumerate() {
        if let FaceSpec::Open(r) = spec {
            let (p, m) = r.rates(s);
            reservoirs.push((index[&top[k]], p, m));
        }
    }
    let params = GraphParams { dim: 2, n: None, level: Some(level), faces: corners.to_vec() };
    let g = GraphWithBoundary::from_parts(Family::Sierpinski, params, coords, edges, reservoirs, 5f64.powi(level as i32))?;
    validate(&g)?;
    Ok(g)
}
