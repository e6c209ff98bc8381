//! Cutoff profiles of symmetric exclusion processes with boundary reservoirs.
//!
//! The crate covers the whole pipeline: graph families ([`graph`]), the
//! Laplacian spectrum ([`spectral`]), stationary densities and two-point
//! correlations ([`stationary`]), the analytic erf profile ([`profile`]) and
//! exact event-driven simulation with empirical total-variation estimates
//! ([`simulator`]).

pub mod error;
pub mod graph;
pub mod linalg;
pub mod profile;
pub mod rng;
pub mod simulator;
pub mod spectral;
pub mod stationary;

pub use error::{Error, Result};
pub use graph::{
    build_lattice, build_segment, build_segment_with_beta, build_sierpinski, build_torus, validate, Diagnostics, FaceSpec, Family,
    GraphWithBoundary, Reservoir,
};
pub use profile::{
    cutoff_schedule, eigenprojection, extremal_config, limit_profile, pi_function, sg_lambda1_oracle, xi, CutoffSchedule, Eigenprojection,
    ExtremalMode, ProfilePrediction, XiValue,
};
pub use simulator::{
    estimate_tv, observe_z, run_experiment, sample_stationary, simulate, ExperimentReport, InitialCondition, ObservableSchedule,
    ReplicaEnsemble, ReplicaRecord, SimConfig, StationarySampler, TvEstimate,
};
pub use spectral::{
    assemble_laplacian, eigendecompose, energy_forms, segment_eigen_oracle, FormBundle, LaplacianMatrix, SegmentEigenSolution,
    SpectralDecomposition,
};
pub use stationary::{
    dynamic_correlation, gamma_path, mean_exit_times, solve_stationary_density, stationary_correlation, CorrelationMatrix, GammaPath,
    StationarySolution,
};
