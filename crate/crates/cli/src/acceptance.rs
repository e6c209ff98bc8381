//! Acceptance suite shared by `cutoff verify` and the `acceptance` test target.

use std::io::Write;
use std::time::Instant;

use cutoff_core::profile::{config_to_f64, pi_crossing};
use cutoff_core::stationary::{max_exit_time, uncorrelated, CorrelationFlow};
use cutoff_core::*;

use crate::args::Tier;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!("{} [{:>2}] {} ({:.2} s): {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.title, self.seconds, self.detail)
    }
}

type Check = std::result::Result<(bool, String), String>;

/// Id, title, check and runtime budget in seconds.
type Criterion = (usize, &'static str, fn() -> Check, f64);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn spectrum(g: &GraphWithBoundary) -> Result<SpectralDecomposition> {
    eigendecompose(&assemble_laplacian(g))
}

fn c1() -> Check {
    let mut worst: f64 = 0.0;
    for n in [8usize, 16, 32, 64] {
        let sp = spectrum(&build_torus(1, n).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let nf = n as f64;
        let exact = 2.0 * nf * nf * (1.0 - (2.0 * std::f64::consts::PI / nf).cos());
        worst = worst.max(rel(sp.lambda1(), exact));
    }
    Ok((worst <= 1e-10, format!("max rel err {worst:.2e} (tol 1e-10)")))
}

fn c2() -> Check {
    let betas = [0.0, 1.0, 1e6];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in [8usize, 32, 128] {
        for &b0 in &betas {
            for &b1 in &betas {
                let sp = spectrum(&build_segment_with_beta(n, b0, b1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
                let roots = segment_eigen_oracle(n, b0, b1, 5).map_err(|e| e.to_string())?;
                if roots.len() < 5 {
                    return Ok((false, format!("oracle found {} roots for n={n} β=({b0},{b1})", roots.len())));
                }
                for (j, r) in roots.iter().enumerate() {
                    worst = worst.max(rel(sp.lambda(j + 1), r.lambda));
                }
                cases += 1;
            }
        }
    }
    Ok((worst <= 1e-6, format!("{cases} cases, max rel err {worst:.2e} (tol 1e-6)")))
}

fn c3() -> Check {
    let pi = std::f64::consts::PI;
    let both = spectrum(&build_segment_with_beta(128, 1e6, 1e6).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let one = spectrum(&build_segment_with_beta(128, 1e6, 0.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let torus = spectrum(&build_torus(1, 128).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let errs = [rel(both.lambda1(), pi * pi), rel(one.lambda1(), pi * pi / 4.0), rel(torus.lambda1(), 4.0 * pi * pi)];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok((
        worst <= 0.03,
        format!(
            "λ1 = {:.4} / {:.4} / {:.4}, rel err {:.2e} / {:.2e} / {:.2e} (tol 3%)",
            both.lambda1(),
            one.lambda1(),
            torus.lambda1(),
            errs[0],
            errs[1],
            errs[2]
        ),
    ))
}

fn c4() -> Check {
    let root = pi_crossing(1, 2, 0.2, 0.3).map_err(|e| e.to_string())?;
    let err = (root - 0.25).abs();
    Ok((err <= 1e-9, format!("root {root:.15}, |err| {err:.2e} (tol 1e-9)")))
}

/// Linear profile `A·(k/n) + B` with `c = 2n/(n+1)` and per-slot `β`.
fn linear_profile_oracle(n: usize, beta: [f64; 2], bar: [f64; 2]) -> (f64, f64) {
    let c = 2.0 * n as f64 / (n as f64 + 1.0);
    let a = (bar[1] - bar[0]) / (1.0 + c * (beta[0] + beta[1]) / (beta[0] * beta[1]));
    (a, bar[0] + c * a / beta[0])
}

fn c5() -> Check {
    let n = 64;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for theta in [0.0, 1.0, 2.0] {
        let g = build_segment(n, FaceSpec::open(0.3, 0.6, theta), FaceSpec::open(0.7, 0.2, theta)).map_err(|e| e.to_string())?;
        let sol = solve_stationary_density(&g, None).map_err(|e| e.to_string())?;
        let (beta, bar) = (g.beta(), g.rho_bar());
        let (a, b) = linear_profile_oracle(n, [beta[0], beta[1]], [bar[0], bar[1]]);
        for (k, r) in sol.rho_ss.iter().enumerate() {
            worst = worst.max((r - (a * k as f64 / n as f64 + b)).abs());
        }
        notes.push(format!("θ={theta}: β={:.3e} {:?}", beta[0], sol.regimes[0]));
    }
    Ok((worst <= 1e-10, format!("{}; max |err| {worst:.2e} (tol 1e-10)", notes.join(", "))))
}

fn c6() -> Check {
    let mut bounds = Vec::new();
    let mut l1s = Vec::new();
    let mut max_off = f64::NEG_INFINITY;
    let mut max_dyn = f64::NEG_INFINITY;
    for n in [8usize, 16, 32] {
        let g = build_segment(n, FaceSpec::open(0.2, 0.8, 0.0), FaceSpec::open(0.8, 0.2, 0.0)).map_err(|e| e.to_string())?;
        let rho = solve_stationary_density(&g, None).map_err(|e| e.to_string())?.rho_ss;
        let phi = stationary_correlation(&g, &rho).map_err(|e| e.to_string())?;
        max_off = max_off.max(phi.max_off_diagonal());
        l1s.push(phi.l1_off_diagonal());
        let e_bulk = energy_forms(&g, &rho, None).map_err(|e| e.to_string())?.energy_bulk;
        bounds.push(2.0 * e_bulk * max_exit_time(&g).map_err(|e| e.to_string())?);

        let sp = spectrum(&g).map_err(|e| e.to_string())?;
        let ones = vec![1.0; g.num_vertices()];
        let gamma = gamma_path(&sp, &rho, &ones).map_err(|e| e.to_string())?;
        let mut flow = CorrelationFlow::new(&g, &uncorrelated(&ones), &gamma, &rho).map_err(|e| e.to_string())?;
        for t in [0.1, 1.0, 10.0] {
            flow.advance_to(t);
            max_dyn = max_dyn.max(flow.current().max_off_diagonal());
        }
    }
    let common = bounds.iter().cloned().fold(0.0, f64::max);
    let within = l1s.iter().zip(&bounds).all(|(l, b)| l <= b) && l1s.iter().all(|&l| l <= common);
    let passed = max_off <= 1e-12 && within && max_dyn <= 1e-10;
    Ok((
        passed,
        format!(
            "max off-diag {max_off:.2e}, (1/|V|)Σ|φ| = {:.3e}/{:.3e}/{:.3e} vs bound {common:.3e}, dynamic max off-diag {max_dyn:.2e}",
            l1s[0], l1s[1], l1s[2]
        ),
    ))
}

fn c7() -> Check {
    let level = 5;
    let nv = (3 * 3usize.pow(level as u32) + 3) / 2;
    let scale = 5f64.powi(level as i32);
    let beta = 1e6;
    let corner = FaceSpec::Open(Reservoir::with_total_rate(beta * nv as f64 / (3.0 * scale), 0.5));
    let g = build_sierpinski(level, &[corner, corner, corner]).map_err(|e| e.to_string())?;
    let sp = spectrum(&g).map_err(|e| e.to_string())?;
    let target = sg_lambda1_oracle();
    let err = rel(sp.lambda1(), target);
    Ok((
        err <= 0.02,
        format!("λ1 = {:.6}, target {:.6}, rel err {:.2e} (tol 2%), ratio {:.4}", sp.lambda1(), target, err, sp.lambda1() / target),
    ))
}

/// The closed torus of size 32 at half filling, started from the extremal arc.
struct TorusRun {
    graph: GraphWithBoundary,
    spectral: SpectralDecomposition,
    rho_ss: Vec<f64>,
    initial: Vec<u8>,
}

const QV_TIMES: [f64; 3] = [-1.0, 0.0, 1.0];
const QV_REPLICAS: usize = 10_000;
const QV_SEED: u64 = 20_240_601;
const PROFILE_REPLICAS: usize = 20_000;
const PROFILE_SEED: u64 = 31_337;

impl TorusRun {
    fn new() -> Result<Self> {
        let graph = build_torus(1, 32)?;
        let sp = spectrum(&graph)?;
        let initial = extremal_config(&graph, &sp, &[0.5; 32], ExtremalMode::Density(0.5))?;
        let k = initial.iter().map(|&b| b as usize).sum::<usize>();
        let rho_ss = solve_stationary_density(&graph, Some(k as f64 / 32.0))?.rho_ss;
        let dev: Vec<f64> = config_to_f64(&initial).iter().zip(&rho_ss).map(|(e, r)| e - r).collect();
        let spectral = sp.aligned_to(&dev);
        Ok(Self { graph, spectral, rho_ss, initial })
    }

    fn qv_ensemble(&self) -> Result<ReplicaEnsemble> {
        let modes: Vec<usize> = (1..=self.spectral.multiplicity()).collect();
        let schedule = ObservableSchedule::from_profile_times(&self.spectral, modes, &QV_TIMES)?;
        let horizon = *schedule.sample_times.last().unwrap();
        let config = SimConfig {
            graph: &self.graph,
            initial: InitialCondition::Configuration(self.initial.clone()),
            horizon,
            seed: QV_SEED,
            leg: 1,
            replicas: QV_REPLICAS,
            track_occupation: false,
        };
        simulate(&config, &schedule, &self.spectral, &self.rho_ss)
    }
}

fn c8(ens: &ReplicaEnsemble) -> Check {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, &t) in QV_TIMES.iter().enumerate() {
        let target = (2.0 * t).exp() / 4.0;
        let mean = ens.mean_qv(k, 0).2;
        let err = rel(mean, target);
        worst = worst.max(err);
        parts.push(format!("t={t}: {mean:.5} vs {target:.5} ({:.1}%)", 100.0 * err));
    }
    Ok((worst <= 0.10, format!("{} (tol 10%)", parts.join(", "))))
}

/// Martingale means over every sample time and mode, and the jump bound
/// over every trajectory handed in.
fn c10(qv: &ReplicaEnsemble, all: &[&ReplicaEnsemble]) -> Check {
    let modes = qv.num_modes();
    let r = qv.records.len() as f64;
    let mut worst_sigma: f64 = 0.0;
    for k in 0..qv.schedule.len() {
        for m in 0..modes {
            let d: Vec<f64> = qv.records.iter().map(|rec| rec.z[k * modes + m] - rec.x0[m]).collect();
            let mean = d.iter().sum::<f64>() / r;
            let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
            worst_sigma = worst_sigma.max(mean.abs() / (sd / r.sqrt()));
        }
    }
    let mut worst_jump: f64 = 0.0;
    let mut trajectories = 0;
    for ens in all {
        trajectories += ens.records.len();
        for rec in &ens.records {
            worst_jump = rec.max_jump_ratio.iter().cloned().fold(worst_jump, f64::max);
        }
    }
    Ok((
        worst_sigma <= 3.0 && worst_jump <= 1.0 + 1e-12,
        format!("max |mean|/se {worst_sigma:.2} (tol 3), max jump / bound {worst_jump:.6} over {trajectories} trajectories"),
    ))
}

fn c9(run: &TorusRun) -> std::result::Result<(bool, String, ExperimentReport), String> {
    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let prediction = ProfilePrediction::new(&run.graph, &run.spectral, &run.rho_ss, run.initial.clone()).map_err(|e| e.to_string())?;
    let report = run_experiment(&run.graph, &run.spectral, &run.rho_ss, &prediction, &grid, PROFILE_REPLICAS, PROFILE_SEED)
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for row in &report.rows {
        let target = cutoff_core::profile::erf((-row.t).exp() / std::f64::consts::PI);
        worst = worst.max((row.empirical_tv - target).abs());
        parts.push(format!("{:.4}/{:.4}", row.empirical_tv, target));
    }
    let monotone = report.rows.windows(2).all(|w| w[1].empirical_tv < w[0].empirical_tv);
    let detail = format!("empirical/target {} ; max |err| {worst:.4} (tol 0.08), monotone {monotone}", parts.join(" "));
    Ok((worst <= 0.08 && monotone, detail, report))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn outcome(id: usize, title: &'static str, check: Check, seconds: f64, budget: f64) -> Outcome {
    let (passed, mut detail) = match check {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_budget = seconds < budget;
    if !in_budget {
        detail.push_str(&format!("; over the {budget} s budget"));
    }
    Outcome { id, title, passed: passed && in_budget, detail, seconds }
}

/// Runs the tier, writing one line per criterion as it finishes.
pub fn run_tier(tier: Tier, out: &mut dyn Write) -> Vec<Outcome> {
    let mut outcomes = Vec::new();
    let mut emit = |o: Outcome, outcomes: &mut Vec<Outcome>| {
        let _ = writeln!(out, "{}", o.line());
        let _ = out.flush();
        outcomes.push(o);
    };
    let deterministic: [Criterion; 7] = [
        (1, "torus eigenvalue exactness", c1, 5.0),
        (2, "segment oracle agreement", c2, 30.0),
        (3, "boundary-regime limits", c3, 10.0),
        (4, "Π crossing", c4, 1.0),
        (5, "nonequilibrium 1D stationary density", c5, 1.0),
        (6, "correlation invariants", c6, 60.0),
        (7, "Sierpinski λ1", c7, 60.0),
    ];
    for (id, title, f, budget) in deterministic {
        let (check, secs) = timed(f);
        emit(outcome(id, title, check, secs, budget), &mut outcomes);
    }
    if tier == Tier::Quick {
        return outcomes;
    }

    let run = match TorusRun::new() {
        Ok(r) => r,
        Err(e) => {
            for (id, title) in
                [(8, "QV convergence"), (9, "limit-profile reproduction"), (10, "martingale and jump bound"), (11, "determinism")]
            {
                emit(outcome(id, title, Err(e.to_string()), 0.0, f64::INFINITY), &mut outcomes);
            }
            return outcomes;
        }
    };
    let (qv, qv_secs) = timed(|| run.qv_ensemble());
    let qv = match qv {
        Ok(ens) => {
            emit(outcome(8, "QV convergence", c8(&ens), qv_secs, 600.0), &mut outcomes);
            Some(ens)
        }
        Err(e) => {
            emit(outcome(8, "QV convergence", Err(e.to_string()), qv_secs, 600.0), &mut outcomes);
            None
        }
    };

    let (profile, secs) = timed(|| c9(&run));
    let report = match profile {
        Ok((passed, detail, report)) => {
            emit(outcome(9, "limit-profile reproduction", Ok((passed, detail)), secs, 1800.0), &mut outcomes);
            Some(report)
        }
        Err(e) => {
            emit(outcome(9, "limit-profile reproduction", Err(e), secs, 1800.0), &mut outcomes);
            None
        }
    };

    let (check, secs) = timed(|| match &qv {
        Some(ens) => {
            let mut all = vec![ens];
            if let Some(r) = &report {
                all.push(&r.extremal);
                all.push(&r.stationary);
            }
            c10(ens, &all)
        }
        None => Err("criterion 8 produced no ensemble".into()),
    });
    emit(outcome(10, "martingale and jump bound", check, secs, f64::INFINITY), &mut outcomes);

    let (check, secs) = timed(|| -> Check {
        let first = qv.as_ref().ok_or("criterion 8 produced no ensemble")?;
        let again = run.qv_ensemble().map_err(|e| e.to_string())?;
        let same = first.to_bytes() == again.to_bytes();
        Ok((same, format!("digest {} vs {}", &first.digest()[..16], &again.digest()[..16])))
    });
    emit(outcome(11, "determinism", check, secs, 600.0), &mut outcomes);
    outcomes
}
