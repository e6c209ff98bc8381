use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cutoff_core::graph::hex_digest;
use cutoff_core::profile::ProfilePrediction;
use cutoff_core::stationary::stationary_correlation;
use cutoff_core::{
    assemble_laplacian, build_lattice, build_sierpinski, build_torus, eigendecompose, extremal_config, run_experiment,
    solve_stationary_density, ExtremalMode, FaceSpec, GraphWithBoundary, Reservoir, SpectralDecomposition,
};
use serde::Serialize;
use serde_json::json;

use crate::acceptance;
use crate::args::{parse_grid, Cli, Command, FamilyArg, GraphArgs, PredictionArgs, StartArg};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs the parser could not catch (exit 2).
    Usage(String),
    /// Computation or I/O failure (exit 1).
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<cutoff_core::Error> for CliError {
    fn from(e: cutoff_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub library_version: &'static str,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub graph_digest: String,
    pub outputs: Vec<OutputRecord>,
    pub details: serde_json::Value,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

struct Run {
    command: &'static str,
    config_digest: String,
    started: f64,
    outputs: Vec<OutputRecord>,
}

impl Run {
    fn new(cli: &Cli) -> Result<Self> {
        let command = match cli.command {
            Command::Spectrum(_) => "spectrum",
            Command::Stationary(_) => "stationary",
            Command::Profile(_) => "profile",
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
        };
        let config = serde_json::to_vec(&cli.command).map_err(|e| CliError::Failure(e.to_string()))?;
        Ok(Self { command, config_digest: hex_digest(&config), started: unix_now(), outputs: Vec::new() })
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        fs::write(path, contents)?;
        self.outputs.push(OutputRecord { path: path.display().to_string(), sha256: hex_digest(contents.as_bytes()) });
        Ok(())
    }

    /// Writes `<primary>.manifest.json` listing every output and its digest.
    fn finish(self, primary: &Path, graph: &GraphWithBoundary, seed: Option<u64>, details: serde_json::Value) -> Result<()> {
        let m = RunManifest {
            command: self.command.to_string(),
            config_digest: self.config_digest,
            library_version: env!("CARGO_PKG_VERSION"),
            seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            graph_digest: graph.digest(),
            outputs: self.outputs,
            details,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Failure(e.to_string()))?;
        fs::write(manifest_path(primary), text + "\n")?;
        Ok(())
    }
}

fn parse_rates(s: &str) -> Result<Vec<Reservoir>> {
    s.split(',')
        .map(|entry| {
            let parts: Vec<&str> = entry.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::Usage(format!("rate entry {entry:?} is not c+:c-:theta")));
            }
            let v: Vec<f64> = parts
                .iter()
                .map(|p| p.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("bad rate {p:?}: {e}"))))
                .collect::<Result<_>>()?;
            Ok(Reservoir::new(v[0], v[1], v[2]))
        })
        .collect()
}

fn parse_faces(spec: Option<&str>, count: usize, default: &str, rates: &[Reservoir]) -> Result<Vec<FaceSpec>> {
    let kinds: Vec<String> = match spec {
        Some(s) => s.split(',').map(|k| k.trim().to_ascii_lowercase()).collect(),
        None => vec![default.to_string(); count],
    };
    if kinds.len() != count {
        return Err(CliError::Usage(format!("{} face kinds given, expected {count}", kinds.len())));
    }
    let open = kinds.iter().filter(|k| *k == "open").count();
    if open > 0 && rates.len() != 1 && rates.len() != open {
        return Err(CliError::Usage(format!("{} rate entries for {open} open faces", rates.len())));
    }
    let mut next = 0;
    kinds
        .iter()
        .map(|k| match k.as_str() {
            "open" => {
                let r = rates[if rates.len() == 1 { 0 } else { next }];
                next += 1;
                Ok(FaceSpec::Open(r))
            }
            "closed" => Ok(FaceSpec::Closed),
            "periodic" => Ok(FaceSpec::Periodic),
            other => Err(CliError::Usage(format!("unknown face kind {other:?}"))),
        })
        .collect()
}

pub fn build_graph(a: &GraphArgs) -> Result<GraphWithBoundary> {
    if let Some(path) = &a.graph {
        let text = fs::read_to_string(path)?;
        return Ok(GraphWithBoundary::from_json(&text)?);
    }
    let family = a.family.ok_or_else(|| CliError::Usage("--family or --graph is required".into()))?;
    let rates = parse_rates(&a.rates)?;
    let need_n = || a.n.ok_or_else(|| CliError::Usage("--n is required for this family".into()));
    let g = match family {
        FamilyArg::Torus => {
            if a.faces.is_some() {
                return Err(CliError::Usage("a torus is periodic on every face; drop --faces".into()));
            }
            build_torus(a.dim, need_n()?)?
        }
        FamilyArg::Segment => {
            if a.dim != 1 {
                return Err(CliError::Usage("a segment has --dim 1".into()));
            }
            build_lattice(1, need_n()?, &parse_faces(a.faces.as_deref(), 2, "open", &rates)?)?
        }
        FamilyArg::Lattice => build_lattice(a.dim, need_n()?, &parse_faces(a.faces.as_deref(), 2 * a.dim, "open", &rates)?)?,
        FamilyArg::MixedCube => {
            let faces = a.faces.as_deref().ok_or_else(|| CliError::Usage("--faces is required for mixed-cube".into()))?;
            build_lattice(a.dim, need_n()?, &parse_faces(Some(faces), 2 * a.dim, "open", &rates)?)?
        }
        FamilyArg::Sierpinski => {
            let level = a.level.ok_or_else(|| CliError::Usage("--level is required for sierpinski".into()))?;
            build_sierpinski(level, &parse_faces(a.faces.as_deref(), 3, "open", &rates)?)?
        }
    };
    Ok(g)
}

fn csv_header(out: &mut String, cols: &[&str]) {
    out.push_str(&cols.join(","));
    out.push('\n');
}

fn csv_row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Spectrum, stationary density and extremal prediction for the profile
/// and simulate commands.
pub struct Prepared {
    pub spectral: SpectralDecomposition,
    pub rho_ss: Vec<f64>,
    pub prediction: ProfilePrediction,
}

pub fn prepare(graph: &GraphWithBoundary, p: &PredictionArgs) -> Result<Prepared> {
    let spectral = eigendecompose(&assemble_laplacian(graph))?;
    let nv = graph.num_vertices();
    let (rho_ss, initial) = if graph.has_reservoirs() {
        let rho_ss = solve_stationary_density(graph, None)?.rho_ss;
        let mode = match p.start {
            StartArg::Auto => ExtremalMode::Auto,
            StartArg::Ones => ExtremalMode::AllOnes,
            StartArg::Zeros => ExtremalMode::AllZeros,
        };
        let initial = extremal_config(graph, &spectral, &rho_ss, mode)?;
        (rho_ss, initial)
    } else {
        if !(p.rho > 0.0 && p.rho < 1.0) {
            return Err(CliError::Usage(format!("--rho {} outside (0,1)", p.rho)));
        }
        let initial = extremal_config(graph, &spectral, &vec![p.rho; nv], ExtremalMode::Density(p.rho))?;
        let k: usize = initial.iter().map(|&b| b as usize).sum();
        (solve_stationary_density(graph, Some(k as f64 / nv as f64))?.rho_ss, initial)
    };
    let prediction = ProfilePrediction::new(graph, &spectral, &rho_ss, initial)?;
    Ok(Prepared { spectral, rho_ss, prediction })
}

/// Runs a parsed command. Returns the process exit status.
pub fn run(cli: &Cli) -> Result<i32> {
    let mut run = Run::new(cli)?;
    match &cli.command {
        Command::Spectrum(a) => {
            let g = build_graph(&a.graph)?;
            let sp = eigendecompose(&assemble_laplacian(&g))?;
            let mut out = String::new();
            csv_header(&mut out, &["j", "lambda", "residual"]);
            for k in 0..sp.len() {
                let j = k as i64 - sp.index_of(1) as i64 + 1;
                csv_row(&mut out, &[j.to_string(), num(sp.eigenvalues()[k]), num(sp.residuals()[k])]);
            }
            run.write(&a.out, &out)?;
            println!("lambda_1 = {} (multiplicity {}), {} modes", num(sp.lambda1()), sp.multiplicity(), sp.len());
            run.finish(
                &a.out,
                &g,
                None,
                json!({ "lambda1": sp.lambda1(), "multiplicity": sp.multiplicity(), "jacobi_sweeps": sp.sweeps() }),
            )?;
        }
        Command::Stationary(a) => {
            let g = build_graph(&a.graph)?;
            let closed =
                if g.has_reservoirs() { None } else { Some(a.rho.ok_or_else(|| CliError::Usage("closed models need --rho".into()))?) };
            let sol = solve_stationary_density(&g, closed)?;
            let dim = g.coords().first().map_or(0, |c| c.len());
            let mut out = String::new();
            let mut cols = vec!["vertex".to_string()];
            cols.extend((0..dim).map(|d| format!("x{d}")));
            cols.push("rho_ss".into());
            csv_header(&mut out, &cols.iter().map(String::as_str).collect::<Vec<_>>());
            for (v, r) in sol.rho_ss.iter().enumerate() {
                let mut f = vec![v.to_string()];
                f.extend(g.coords()[v].iter().map(|&c| num(c)));
                f.push(num(*r));
                csv_row(&mut out, &f);
            }
            run.write(&a.out, &out)?;
            let mut details = json!({ "residual": sol.residual, "regimes": format!("{:?}", sol.regimes) });
            if let Some(path) = &a.correlations {
                if !g.has_reservoirs() {
                    return Err(CliError::Usage("--correlations needs a model with reservoirs".into()));
                }
                let phi = stationary_correlation(&g, &sol.rho_ss)?;
                let mut out = String::new();
                csv_header(&mut out, &["x", "y", "phi"]);
                for x in 0..g.num_vertices() {
                    for y in x..g.num_vertices() {
                        csv_row(&mut out, &[x.to_string(), y.to_string(), num(phi.get(x, y))]);
                    }
                }
                run.write(path, &out)?;
                details["max_off_diagonal"] = json!(phi.max_off_diagonal());
                details["l1_off_diagonal"] = json!(phi.l1_off_diagonal());
            }
            run.finish(&a.out, &g, None, details)?;
        }
        Command::Profile(a) => {
            let g = build_graph(&a.graph)?;
            let grid = parse_grid(&a.prediction.t).map_err(CliError::Usage)?;
            let p = prepare(&g, &a.prediction)?;
            let pr = &p.prediction;
            let mut out = String::new();
            csv_header(&mut out, &["t", "predicted_tv", "xi_bulk", "xi_boundary", "xi", "physical_time"]);
            for &t in &grid {
                let e = (2.0 * t).exp();
                csv_row(
                    &mut out,
                    &[
                        num(t),
                        num(pr.profile(t)?),
                        num(e * pr.xi1_bulk0),
                        num(e * pr.xi1_boundary0),
                        num(pr.xi1(t)),
                        num(pr.physical_time(t)),
                    ],
                );
            }
            run.write(&a.out, &out)?;
            run.finish(
                &a.out,
                &g,
                None,
                json!({
                    "c_star": pr.c_star,
                    "c_star_norm": pr.c_star_norm,
                    "lambda1": pr.lambda1,
                    "t_n": pr.t_n,
                    "time_scale": pr.time_scale,
                    "particles": pr.initial.iter().map(|&b| b as usize).sum::<usize>(),
                }),
            )?;
        }
        Command::Simulate(a) => {
            let g = build_graph(&a.graph)?;
            let grid = parse_grid(&a.prediction.t).map_err(CliError::Usage)?;
            let p = prepare(&g, &a.prediction)?;
            let report = run_experiment(&g, &p.spectral, &p.rho_ss, &p.prediction, &grid, a.replicas, a.seed)?;
            run.write(&a.out, &report.to_csv())?;
            let mut table = String::new();
            for r in &report.rows {
                let _ = writeln!(
                    table,
                    "t = {:>6}  predicted {:.4}  empirical {:.4}  [{:.4}, {:.4}]",
                    r.t, r.predicted_tv, r.empirical_tv, r.ci_lo, r.ci_hi
                );
            }
            print!("{table}");
            run.finish(
                &a.out,
                &g,
                Some(a.seed),
                json!({
                    "replicas_per_leg": a.replicas,
                    "extremal_digest": report.extremal.digest(),
                    "stationary_digest": report.stationary.digest(),
                    "extremal_wall_secs": report.extremal.wall_time_secs,
                    "stationary_wall_secs": report.stationary.wall_time_secs,
                    "burn_in": report.stationary_sampler.burn_in(),
                }),
            )?;
        }
        Command::Verify(a) => {
            let outcomes = acceptance::run_tier(a.tier, &mut std::io::stdout());
            return Ok(if outcomes.iter().all(|o| o.passed) { 0 } else { 1 });
        }
    }
    Ok(0)
}
