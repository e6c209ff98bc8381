//! Exact continuous-time simulation of the exclusion process with boundary
//! reservoirs, with the cutoff observables tracked along each trajectory.
//!
//! Time inside this module is macroscopic: the generator is `T·L`, so an
//! edge fires at rate `T` and a boundary vertex `a` receives birth and death
//! attempts at rates `T·r₊(a)` and `T·r₋(a)`.

mod engine;
mod experiment;
mod tv;

pub use engine::{EventKernel, Move};
pub use experiment::{run_experiment, ExperimentReport, ReportRow};
pub use tv::{estimate_tv, TvEstimate, BOOTSTRAP_RESAMPLES};

use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{hex_digest, GraphWithBoundary};
use crate::profile::cutoff_schedule;
use crate::rng::{stream, Stream};
use crate::spectral::SpectralDecomposition;

/// Exact recomputation of the running sums after this many effective moves.
const RESYNC_EVERY: u64 = 4096;

/// How the stationary law is sampled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StationarySampler {
    /// Closed model: uniform over configurations with `particles` particles.
    Hypergeometric { particles: usize },
    /// Equal reservoir densities: independent Bernoulli per vertex.
    Bernoulli { rho: Vec<f64> },
    /// Nonequilibrium: run the dynamics for `burn_in` macroscopic time from
    /// a Bernoulli start at the mean reservoir density.
    BurnIn { start_density: f64, burn_in: f64 },
}

impl StationarySampler {
    /// Picks the sampler for `graph`. The burn-in defaults to `10·t_N`.
    pub fn for_graph(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, rho_ss: &[f64]) -> Result<Self> {
        if rho_ss.len() != graph.num_vertices() {
            return Err(Error::DimensionMismatch { expected: graph.num_vertices(), got: rho_ss.len() });
        }
        if !graph.has_reservoirs() {
            let total: f64 = rho_ss.iter().sum();
            return Ok(Self::Hypergeometric { particles: (total + 1e-9).floor() as usize });
        }
        let bar = graph.rho_bar();
        let (lo, hi) = bar.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        if hi - lo < 1e-12 {
            return Ok(Self::Bernoulli { rho: rho_ss.to_vec() });
        }
        let start_density = bar.iter().sum::<f64>() / bar.len() as f64;
        let burn_in = 10.0 * cutoff_schedule(graph, spectral, 0.0)?.t_n;
        Ok(Self::BurnIn { start_density, burn_in })
    }

    pub fn burn_in(&self) -> f64 {
        match self {
            Self::BurnIn { burn_in, .. } => *burn_in,
            _ => 0.0,
        }
    }

    pub fn sample(&self, graph: &GraphWithBoundary, rng: &mut Stream) -> Vec<u8> {
        let nv = graph.num_vertices();
        match self {
            Self::Hypergeometric { particles } => {
                let mut eta = vec![0u8; nv];
                for v in sample_indices(rng, nv, (*particles).min(nv)).iter() {
                    eta[v] = 1;
                }
                eta
            }
            Self::Bernoulli { rho } => rho.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect(),
            Self::BurnIn { start_density, burn_in } => {
                let mut eta: Vec<u8> = (0..nv).map(|_| u8::from(rng.gen::<f64>() < *start_density)).collect();
                let kernel = EventKernel::new(graph);
                let mut t = 0.0;
                loop {
                    let (dt, _) = kernel.next(&mut eta, rng);
                    t += dt;
                    if t > *burn_in {
                        break;
                    }
                }
                eta
            }
        }
    }
}

/// One draw from the stationary law of `graph`, from its own stream.
pub fn sample_stationary(graph: &GraphWithBoundary, spectral: &SpectralDecomposition, rho_ss: &[f64], seed: u64) -> Result<Vec<u8>> {
    let sampler = StationarySampler::for_graph(graph, spectral, rho_ss)?;
    Ok(sampler.sample(graph, &mut stream(seed, 0, 0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialCondition {
    Configuration(Vec<u8>),
    ProductBernoulli(f64),
    Stationary(StationarySampler),
}

#[derive(Debug, Clone)]
pub struct SimConfig<'g> {
    pub graph: &'g GraphWithBoundary,
    pub initial: InitialCondition,
    /// Macroscopic horizon; must cover every sample time.
    pub horizon: f64,
    pub seed: u64,
    /// Separates independent ensembles that share a seed.
    pub leg: u64,
    pub replicas: usize,
    /// Integrate `∫η_s(x) ds` per vertex (costs O(|V|) per replica).
    pub track_occupation: bool,
}

/// Sample times for the cutoff observables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSchedule {
    /// Mode indices `j ≥ 1`.
    pub modes: Vec<usize>,
    /// Recentred profile times `t_k`.
    pub profile_times: Vec<f64>,
    /// Macroscopic times `max(0, t_N + t_k/λ_1)`.
    pub sample_times: Vec<f64>,
    /// True where `t_N + t_k/λ_1 < 0` and the sample was moved to time 0.
    pub clamped: Vec<bool>,
}

impl ObservableSchedule {
    pub fn from_profile_times(spectral: &SpectralDecomposition, modes: Vec<usize>, profile_times: &[f64]) -> Result<Self> {
        let l1 = spectral.lambda1();
        let tn = (spectral.len() as f64).ln() / (2.0 * l1);
        let raw: Vec<f64> = profile_times.iter().map(|t| tn + t / l1).collect();
        Self::build(spectral, modes, profile_times.to_vec(), raw)
    }

    /// Samples at macroscopic times directly.
    pub fn from_macroscopic_times(spectral: &SpectralDecomposition, modes: Vec<usize>, times: &[f64]) -> Result<Self> {
        if let Some(&t) = times.iter().find(|&&t| t < 0.0) {
            return Err(Error::ScheduleBeforeZero(t));
        }
        let l1 = spectral.lambda1();
        let tn = (spectral.len() as f64).ln() / (2.0 * l1);
        let profile = times.iter().map(|s| l1 * (s - tn)).collect();
        Self::build(spectral, modes, profile, times.to_vec())
    }

    fn build(spectral: &SpectralDecomposition, modes: Vec<usize>, profile_times: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        if let Some(&j) = modes.iter().find(|&&j| j == 0 || j > spectral.num_modes()) {
            return Err(Error::InvalidParameter(format!("mode {j} out of range")));
        }
        if raw.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("sample times must be nondecreasing".into()));
        }
        let clamped = raw.iter().map(|&s| s < 0.0).collect();
        let sample_times = raw.iter().map(|&s| s.max(0.0)).collect();
        Ok(Self { modes, profile_times, sample_times, clamped })
    }

    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }
}

/// One trajectory's observables. Per-sample arrays are indexed
/// `k * modes + m` for sample `k` and mode position `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRecord {
    /// `X_s(ψ_j) = e^{λ_1 s} |V|⁻¹ Σ_x (η_s(x) − ρ_ss(x)) ψ_j(x)` at the sample times.
    pub z: Vec<f64>,
    /// `X_0(ψ_j)` per mode.
    pub x0: Vec<f64>,
    pub qv_bulk: Vec<f64>,
    pub qv_boundary: Vec<f64>,
    /// Accumulated with the summed integrand; equals bulk + boundary up to rounding.
    pub qv_total: Vec<f64>,
    /// Largest `|ΔΣ(η−ρ)ψ_j| / (2‖ψ_j‖_∞)` over all moves, per mode.
    pub max_jump_ratio: Vec<f64>,
    pub events: u64,
    pub effective_events: u64,
    pub particles_min: usize,
    pub particles_max: usize,
    pub final_config: Vec<u8>,
    /// `∫_0^horizon η_s(x) ds`, when tracked.
    pub occupation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaEnsemble {
    pub schedule: ObservableSchedule,
    pub seed: u64,
    pub leg: u64,
    pub horizon: f64,
    pub records: Vec<ReplicaRecord>,
    pub wall_time_secs: f64,
}

impl ReplicaEnsemble {
    /// Canonical little-endian encoding of everything except wall time.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let f = |out: &mut Vec<u8>, xs: &[f64]| {
            out.extend((xs.len() as u64).to_le_bytes());
            for x in xs {
                out.extend(x.to_bits().to_le_bytes());
            }
        };
        out.extend(self.seed.to_le_bytes());
        out.extend(self.leg.to_le_bytes());
        out.extend(self.horizon.to_bits().to_le_bytes());
        for &j in &self.schedule.modes {
            out.extend((j as u64).to_le_bytes());
        }
        f(&mut out, &self.schedule.sample_times);
        for r in &self.records {
            f(&mut out, &r.z);
            f(&mut out, &r.x0);
            f(&mut out, &r.qv_bulk);
            f(&mut out, &r.qv_boundary);
            f(&mut out, &r.qv_total);
            f(&mut out, &r.max_jump_ratio);
            f(&mut out, &r.occupation);
            out.extend(r.events.to_le_bytes());
            out.extend(r.effective_events.to_le_bytes());
            out.extend((r.particles_min as u64).to_le_bytes());
            out.extend((r.particles_max as u64).to_le_bytes());
            out.extend(&r.final_config);
        }
        out
    }

    pub fn digest(&self) -> String {
        hex_digest(&self.to_bytes())
    }

    pub fn num_modes(&self) -> usize {
        self.schedule.modes.len()
    }

    /// `Z` vectors over the modes at sample `k`, one per replica.
    pub fn z_vectors(&self, k: usize) -> Vec<Vec<f64>> {
        let m = self.num_modes();
        self.records.iter().map(|r| r.z[k * m..(k + 1) * m].to_vec()).collect()
    }

    /// Replica means of the bulk, boundary and total QV at sample `k`, mode position `m`.
    pub fn mean_qv(&self, k: usize, m: usize) -> (f64, f64, f64) {
        let idx = k * self.num_modes() + m;
        let n = self.records.len() as f64;
        let s = self
            .records
            .iter()
            .fold((0.0, 0.0, 0.0), |acc, r| (acc.0 + r.qv_bulk[idx], acc.1 + r.qv_boundary[idx], acc.2 + r.qv_total[idx]));
        (s.0 / n, s.1 / n, s.2 / n)
    }
}

/// `X` at profile time `t`: `e^{λ_1(t_N + t/λ_1)} |V|⁻¹ Σ_x (η(x) − ρ_ss(x)) ψ_j(x)`,
/// and 0 for `t < −½ log|V|`.
pub fn observe_z(eta: &[f64], spectral: &SpectralDecomposition, rho_ss: &[f64], j: usize, t_profile: f64) -> f64 {
    let nv = spectral.len() as f64;
    if t_profile < -0.5 * nv.ln() {
        return 0.0;
    }
    let psi = spectral.psi(j);
    let sum: f64 = eta.iter().zip(rho_ss).zip(psi).map(|((e, r), p)| (e - r) * p).sum();
    nv.sqrt() * t_profile.exp() * sum / nv
}

struct ModeData {
    lambda: f64,
    psi: Vec<f64>,
    edge_w: Vec<f64>,
    bnd_w: Vec<f64>,
    sup: f64,
}

struct Tracker<'a> {
    graph: &'a GraphWithBoundary,
    rho_ss: &'a [f64],
    modes: &'a [ModeData],
    lambda1: f64,
    prefactor: f64,
    sums: Vec<f64>,
    s_bulk: Vec<f64>,
    s_bnd: Vec<f64>,
    q_bulk: Vec<f64>,
    q_bnd: Vec<f64>,
    q_tot: Vec<f64>,
    last: f64,
}

impl<'a> Tracker<'a> {
    fn new(graph: &'a GraphWithBoundary, rho_ss: &'a [f64], modes: &'a [ModeData], lambda1: f64, eta: &[u8]) -> Self {
        let nv = graph.num_vertices() as f64;
        let m = modes.len();
        let mut t = Self {
            graph,
            rho_ss,
            modes,
            lambda1,
            prefactor: graph.time_scale() / (nv * nv),
            sums: vec![0.0; m],
            s_bulk: vec![0.0; m],
            s_bnd: vec![0.0; m],
            q_bulk: vec![0.0; m],
            q_bnd: vec![0.0; m],
            q_tot: vec![0.0; m],
            last: 0.0,
        };
        t.resync(eta);
        t
    }

    fn boundary_intensity(&self, slot: usize, occupied: bool) -> f64 {
        let r = self.graph.rates()[slot];
        if occupied {
            r.minus
        } else {
            r.plus
        }
    }

    fn resync(&mut self, eta: &[u8]) {
        for (m, md) in self.modes.iter().enumerate() {
            self.sums[m] = eta.iter().zip(self.rho_ss).zip(&md.psi).map(|((&e, r), p)| (e as f64 - r) * p).sum();
            self.s_bulk[m] = self.graph.edges().iter().zip(&md.edge_w).filter(|((x, y), _)| eta[*x] != eta[*y]).map(|(_, w)| w).sum();
            self.s_bnd[m] =
                self.graph.boundary().iter().enumerate().map(|(k, &a)| self.boundary_intensity(k, eta[a] == 1) * md.bnd_w[k]).sum();
        }
    }

    /// Integrates the QV up to `s` with the current integrands.
    fn advance(&mut self, s: f64) {
        let dt = s - self.last;
        if dt <= 0.0 {
            return;
        }
        let grow = (2.0 * self.lambda1 * s).exp();
        for (m, md) in self.modes.iter().enumerate() {
            let decay = (-2.0 * (md.lambda - self.lambda1) * dt).exp();
            let kernel = self.prefactor * grow * -(-2.0 * md.lambda * dt).exp_m1() / (2.0 * md.lambda);
            self.q_bulk[m] = decay * self.q_bulk[m] + kernel * self.s_bulk[m];
            self.q_bnd[m] = decay * self.q_bnd[m] + kernel * self.s_bnd[m];
            self.q_tot[m] = decay * self.q_tot[m] + kernel * (self.s_bulk[m] + self.s_bnd[m]);
        }
        self.last = s;
    }

    /// Applies an effective move and updates the sums and QV integrands in
    /// place. `jumps` receives the change of `Σ(η−ρ)ψ_j` per mode.
    fn apply(&mut self, kernel: &EventKernel, eta: &mut [u8], mv: Move, jumps: &mut [f64]) {
        let nm = self.modes.len();
        let mut bulk = vec![0.0; nm];
        let mut bnd = vec![0.0; nm];
        for v in touched(mv) {
            self.edge_terms(eta, v, -1.0, &mut bulk);
            self.boundary_terms(eta, v, -1.0, &mut bnd);
        }
        kernel.apply(eta, mv);
        for v in touched(mv) {
            self.edge_terms(eta, v, 1.0, &mut bulk);
            self.boundary_terms(eta, v, 1.0, &mut bnd);
        }
        for (m, md) in self.modes.iter().enumerate() {
            self.s_bulk[m] += bulk[m];
            self.s_bnd[m] += bnd[m];
            jumps[m] = match mv {
                Move::Swap(x, y) => {
                    // The particle left the vertex that is now empty.
                    let (from, to) = if eta[x] == 0 { (x, y) } else { (y, x) };
                    md.psi[to] - md.psi[from]
                }
                Move::Birth(a) => md.psi[a],
                Move::Death(a) => -md.psi[a],
                Move::Idle => 0.0,
            };
            self.sums[m] += jumps[m];
        }
    }

    fn boundary_terms(&self, eta: &[u8], v: usize, sign: f64, out: &mut [f64]) {
        if let Some(slot) = self.graph.boundary_slot(v) {
            let r = self.boundary_intensity(slot, eta[v] == 1);
            for (m, md) in self.modes.iter().enumerate() {
                out[m] += sign * r * md.bnd_w[slot];
            }
        }
    }

    fn edge_terms(&self, eta: &[u8], v: usize, sign: f64, out: &mut [f64]) {
        for &e in self.graph.incident_edges(v) {
            let (x, y) = self.graph.edges()[e];
            if eta[x] != eta[y] {
                for (m, md) in self.modes.iter().enumerate() {
                    out[m] += sign * md.edge_w[e];
                }
            }
        }
    }
}

fn touched(mv: Move) -> impl Iterator<Item = usize> {
    let (a, b) = match mv {
        Move::Swap(x, y) => (Some(x), Some(y)),
        Move::Birth(a) | Move::Death(a) => (Some(a), None),
        Move::Idle => (None, None),
    };
    a.into_iter().chain(b)
}

/// Runs `config.replicas` independent trajectories in parallel and
/// collects them in replica order.
pub fn simulate(
    config: &SimConfig<'_>,
    schedule: &ObservableSchedule,
    spectral: &SpectralDecomposition,
    rho_ss: &[f64],
) -> Result<ReplicaEnsemble> {
    let graph = config.graph;
    let nv = graph.num_vertices();
    if spectral.len() != nv || rho_ss.len() != nv {
        return Err(Error::DimensionMismatch { expected: nv, got: spectral.len().min(rho_ss.len()) });
    }
    if !(config.horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {} must be positive", config.horizon)));
    }
    if let Some(&s) = schedule.sample_times.last() {
        if s > config.horizon {
            return Err(Error::InvalidParameter(format!("sample time {s} beyond horizon {}", config.horizon)));
        }
    }
    if let InitialCondition::Configuration(eta) = &config.initial {
        if eta.len() != nv || eta.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("initial configuration must be a 0/1 vector over V".into()));
        }
    }
    if let InitialCondition::ProductBernoulli(p) = config.initial {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("Bernoulli density {p} outside [0,1]")));
        }
    }
    let modes: Vec<ModeData> = schedule
        .modes
        .iter()
        .map(|&j| {
            let psi = spectral.psi(j).to_vec();
            let edge_w = graph.edges().iter().map(|&(x, y)| (psi[x] - psi[y]).powi(2)).collect();
            let bnd_w = graph.boundary().iter().map(|&a| psi[a] * psi[a]).collect();
            let sup = psi.iter().fold(0.0f64, |a, p| a.max(p.abs()));
            ModeData { lambda: spectral.lambda(j), psi, edge_w, bnd_w, sup }
        })
        .collect();
    if let Some(md) = modes.iter().find(|md| md.lambda <= 0.0) {
        return Err(Error::NearZeroEigenvalue { lambda: md.lambda });
    }
    let kernel = EventKernel::new(graph);
    let start = Instant::now();
    let records: Vec<ReplicaRecord> = (0..config.replicas)
        .into_par_iter()
        .map(|r| run_replica(config, schedule, &kernel, &modes, spectral.lambda1(), rho_ss, r as u64))
        .collect();
    Ok(ReplicaEnsemble {
        schedule: schedule.clone(),
        seed: config.seed,
        leg: config.leg,
        horizon: config.horizon,
        records,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn run_replica(
    config: &SimConfig<'_>,
    schedule: &ObservableSchedule,
    kernel: &EventKernel,
    modes: &[ModeData],
    lambda1: f64,
    rho_ss: &[f64],
    replica: u64,
) -> ReplicaRecord {
    let graph = config.graph;
    let nv = graph.num_vertices();
    let nm = modes.len();
    let mut rng = stream(config.seed, config.leg, replica);
    let mut eta = match &config.initial {
        InitialCondition::Configuration(eta) => eta.clone(),
        InitialCondition::ProductBernoulli(p) => (0..nv).map(|_| u8::from(rng.gen::<f64>() < *p)).collect(),
        InitialCondition::Stationary(s) => s.sample(graph, &mut rng),
    };
    let mut tr = Tracker::new(graph, rho_ss, modes, lambda1, &eta);
    let norm = 1.0 / nv as f64;
    let x0: Vec<f64> = tr.sums.iter().map(|s| s * norm).collect();
    let ns = schedule.len();
    let mut rec = ReplicaRecord {
        z: vec![0.0; ns * nm],
        x0,
        qv_bulk: vec![0.0; ns * nm],
        qv_boundary: vec![0.0; ns * nm],
        qv_total: vec![0.0; ns * nm],
        max_jump_ratio: vec![0.0; nm],
        events: 0,
        effective_events: 0,
        particles_min: 0,
        particles_max: 0,
        final_config: Vec::new(),
        occupation: if config.track_occupation { vec![0.0; nv] } else { Vec::new() },
    };
    let mut particles: usize = eta.iter().map(|&b| b as usize).sum();
    rec.particles_min = particles;
    rec.particles_max = particles;
    let mut since_flip = vec![0.0f64; if config.track_occupation { nv } else { 0 }];
    let mut jumps = vec![0.0; nm];
    let mut k = 0;
    let mut t = 0.0;
    let record_until = |tr: &mut Tracker, rec: &mut ReplicaRecord, eta: &[u8], k: &mut usize, upto: f64| {
        while *k < ns && schedule.sample_times[*k] <= upto {
            let s = schedule.sample_times[*k];
            tr.resync(eta);
            tr.advance(s);
            let g = (lambda1 * s).exp() * norm;
            for m in 0..nm {
                let i = *k * nm + m;
                rec.z[i] = g * tr.sums[m];
                rec.qv_bulk[i] = tr.q_bulk[m];
                rec.qv_boundary[i] = tr.q_bnd[m];
                rec.qv_total[i] = tr.q_tot[m];
            }
            *k += 1;
        }
    };
    loop {
        let (dt, mv) = kernel.draw(&eta, &mut rng);
        let t_next = t + dt;
        record_until(&mut tr, &mut rec, &eta, &mut k, t_next.min(config.horizon));
        if t_next > config.horizon {
            break;
        }
        t = t_next;
        rec.events += 1;
        if mv == Move::Idle {
            continue;
        }
        rec.effective_events += 1;
        tr.advance(t);
        if config.track_occupation {
            for v in touched(mv) {
                rec.occupation[v] += eta[v] as f64 * (t - since_flip[v]);
                since_flip[v] = t;
            }
        }
        tr.apply(kernel, &mut eta, mv, &mut jumps);
        for (m, md) in modes.iter().enumerate() {
            let ratio = jumps[m].abs() / (2.0 * md.sup);
            if ratio > rec.max_jump_ratio[m] {
                rec.max_jump_ratio[m] = ratio;
            }
        }
        if let Move::Birth(_) | Move::Death(_) = mv {
            particles = if matches!(mv, Move::Birth(_)) { particles + 1 } else { particles - 1 };
            rec.particles_min = rec.particles_min.min(particles);
            rec.particles_max = rec.particles_max.max(particles);
        }
        if rec.effective_events.is_multiple_of(RESYNC_EVERY) {
            tr.resync(&eta);
        }
    }
    if config.track_occupation {
        for v in 0..nv {
            rec.occupation[v] += eta[v] as f64 * (config.horizon - since_flip[v]);
        }
    }
    rec.final_config = eta;
    rec
}
