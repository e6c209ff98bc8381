use serde::Serialize;

use super::{estimate_tv, simulate, InitialCondition, ObservableSchedule, ReplicaEnsemble, SimConfig, StationarySampler};
use crate::error::{Error, Result};
use crate::graph::GraphWithBoundary;
use crate::profile::{config_to_f64, ProfilePrediction};
use crate::spectral::SpectralDecomposition;

pub const REPORT_HEADER: [&str; 13] = [
    "t",
    "predicted_tv",
    "empirical_tv",
    "ci_lo",
    "ci_hi",
    "mean_qv_bulk",
    "mean_qv_boundary",
    "predicted_xi",
    "replicas",
    "seed",
    "ks_tv",
    "mean_qv_total",
    "clamped",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub t: f64,
    pub predicted_tv: f64,
    pub empirical_tv: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Replica means of the `ψ_1` QV for the extremal leg.
    pub mean_qv_bulk: f64,
    pub mean_qv_boundary: f64,
    pub predicted_xi: f64,
    pub replicas: usize,
    pub seed: u64,
    pub ks_tv: f64,
    pub mean_qv_total: f64,
    /// The sample time fell before time 0 and was taken at time 0.
    pub clamped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Started from the prediction's initial configuration.
    pub extremal: ReplicaEnsemble,
    /// Started from the stationary law.
    pub stationary: ReplicaEnsemble,
    pub stationary_sampler: StationarySampler,
    pub graph_digest: String,
}

impl ExperimentReport {
    /// Floats use Rust's shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let fields = [
                format!("{:?}", r.t),
                format!("{:?}", r.predicted_tv),
                format!("{:?}", r.empirical_tv),
                format!("{:?}", r.ci_lo),
                format!("{:?}", r.ci_hi),
                format!("{:?}", r.mean_qv_bulk),
                format!("{:?}", r.mean_qv_boundary),
                format!("{:?}", r.predicted_xi),
                r.replicas.to_string(),
                r.seed.to_string(),
                format!("{:?}", r.ks_tv),
                format!("{:?}", r.mean_qv_total),
                r.clamped.to_string(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Simulates both legs over `t_grid` and compares the empirical TV with the
/// predicted profile. The first eigenspace is aligned with `γ₀` first, so
/// `Z(ψ_1)` carries the whole initial deviation.
pub fn run_experiment(
    graph: &GraphWithBoundary,
    spectral: &SpectralDecomposition,
    rho_ss: &[f64],
    prediction: &ProfilePrediction,
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least two replicas per leg".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    let eta0 = config_to_f64(&prediction.initial);
    let dev: Vec<f64> = eta0.iter().zip(rho_ss).map(|(e, r)| e - r).collect();
    let aligned = spectral.aligned_to(&dev);
    let modes: Vec<usize> = (1..=aligned.multiplicity()).collect();
    let schedule = ObservableSchedule::from_profile_times(&aligned, modes, t_grid)?;
    let horizon = schedule.sample_times.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let sampler = if graph.has_reservoirs() {
        StationarySampler::for_graph(graph, &aligned, rho_ss)?
    } else {
        StationarySampler::Hypergeometric { particles: prediction.initial.iter().map(|&b| b as usize).sum() }
    };
    let leg = |leg: u64, initial: InitialCondition| SimConfig { graph, initial, horizon, seed, leg, replicas, track_occupation: false };
    let extremal = simulate(&leg(1, InitialCondition::Configuration(prediction.initial.clone())), &schedule, &aligned, rho_ss)?;
    let stationary = simulate(&leg(2, InitialCondition::Stationary(sampler.clone())), &schedule, &aligned, rho_ss)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (k, &t) in t_grid.iter().enumerate() {
        let tv = estimate_tv(&extremal.z_vectors(k), &stationary.z_vectors(k), seed.wrapping_add(k as u64))?;
        let (qb, qd, qt) = extremal.mean_qv(k, 0);
        rows.push(ReportRow {
            t,
            predicted_tv: prediction.profile(t)?,
            empirical_tv: tv.gaussian,
            ci_lo: tv.ci_lo,
            ci_hi: tv.ci_hi,
            mean_qv_bulk: qb,
            mean_qv_boundary: qd,
            predicted_xi: prediction.xi1(t),
            replicas,
            seed,
            ks_tv: tv.ks,
            mean_qv_total: qt,
            clamped: schedule.clamped[k],
        });
    }
    Ok(ExperimentReport { rows, extremal, stationary, stationary_sampler: sampler, graph_digest: graph.digest() })
}
