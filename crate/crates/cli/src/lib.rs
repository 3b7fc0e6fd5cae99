//! Command implementations behind the `hlbkit` binary.
//!
//! Every command is a pure function of its arguments that returns the bytes
//! to emit, so outputs can be compared across runs.

pub mod lemmas;

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hlbkit::hlb::classify;
use hlbkit::integrator::{simulate_at, SimPolicy, Side, Tolerances};
use hlbkit::numerics::geomspace;
use hlbkit::poincare::{sweep_diagram, write_diagram_csv, CycleOptions, ReturnOptions, SweepOptions};
use hlbkit::pwsmodel::{load_model, PWSystem};
use hlbkit::scaling::{fit_scaling, write_scaling_csv, ScalingOptions};
use hlbkit::zoo::zoo_build;

/// Top-level arguments.
#[derive(Debug, Parser)]
#[command(name = "hlbkit", version, about = "Classify and verify Hopf-like bifurcations in planar piecewise-smooth systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Integration and root-finding tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Exit side when a start lies in a repelling sliding region.
    #[arg(long = "policy-exit", global = true, value_enum, default_value_t = ExitSide::Right)]
    pub policy_exit: ExitSide,
    /// Event budget per simulation or return.
    #[arg(long = "events-max", global = true)]
    pub events_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExitSide {
    Left,
    Right,
}

/// Switching rule for catalogue entries that offer both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismChoice {
    Hysteretic,
    Delayed,
}

/// Model selection.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// `zoo:NAME` or a JSON model file.
    pub target: Option<String>,
    /// JSON model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Catalogue entry name.
    #[arg(long)]
    pub zoo: Option<String>,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "param", value_name = "K=V")]
    pub params: Vec<String>,
    /// Switching rule for `relay_observer` and `forced_osc`.
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismChoice>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one orbit and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Classify the bifurcation at `--mu` and write an HLB report.
    Classify(ClassifyArgs),
    /// Equilibria and cycles over a parameter grid, as CSV.
    Diagram(DiagramArgs),
    /// Fit amplitude and period exponents.
    Scaling(ScalingArgs),
    /// Run the return-map convergence checks.
    VerifyLemmas,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameter value; the model default when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub y0: f64,
    #[arg(long = "t-max", default_value_t = 20.0)]
    pub t_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Candidate bifurcation value; the model default when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone, Args)]
pub struct DiagramArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid `lo:hi:n`.
    #[arg(long = "mu-grid", allow_hyphen_values = true)]
    pub mu_grid: String,
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    pub spacing: Spacing,
    /// Radius bracket `lo:hi` of the cycle search.
    #[arg(long, default_value = "1e-4:1")]
    pub bracket: String,
}

#[derive(Debug, Clone, Args)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Range `lo..hi` of `|mu - mu0|`, sampled with 8 geometric points.
    #[arg(long)]
    pub mu: Option<String>,
    /// Geometric grid `lo:hi:n` of `|mu - mu0|`.
    #[arg(long = "mu-grid")]
    pub mu_grid: Option<String>,
    /// Radius bracket `lo:hi` of the cycle search.
    #[arg(long, default_value = "1e-7:1")]
    pub bracket: String,
    /// Scale the bracket by `|mu - mu0|` at each grid point.
    #[arg(long)]
    pub relative_bracket: bool,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    /// Primary output, written to `--out` or standard output.
    pub primary: Vec<u8>,
    /// Extra files next to `--out`, as `(extension, bytes)`.
    pub sidecars: Vec<(&'static str, Vec<u8>)>,
    /// False when a requested check failed.
    pub ok: bool,
}

impl Output {
    fn new(primary: Vec<u8>) -> Self {
        Self { primary, sidecars: vec![], ok: true }
    }
}

/// Resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tol: f64,
    pub policy: SimPolicy,
}

impl RunConfig {
    pub fn from_common(c: &CommonArgs) -> Result<Self> {
        if !(c.tol > 0.0 && c.tol.is_finite()) {
            bail!("--tol must be positive, got {}", c.tol);
        }
        let mut policy = SimPolicy { tol: Tolerances::with_tol(c.tol), ..SimPolicy::default() };
        policy.repelling_exit = match c.policy_exit {
            ExitSide::Left => Side::Left,
            ExitSide::Right => Side::Right,
        };
        if let Some(n) = c.events_max {
            policy.events_max = n;
        }
        Ok(Self { tol: c.tol, policy })
    }

    fn return_options(&self) -> ReturnOptions {
        ReturnOptions { max_events: self.policy.events_max.min(ReturnOptions::default().max_events), policy: self.policy, ..ReturnOptions::default() }
    }
}

fn parse_params(kv: &[String]) -> Result<BTreeMap<String, f64>> {
    kv.iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--param expects key=value, got `{s}`"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("--param {k}: `{v}` is not a number"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Build the system selected by `m`.
pub fn load_system(m: &ModelArgs) -> Result<PWSystem> {
    let mut params = parse_params(&m.params)?;
    let mut zoo = m.zoo.clone();
    let mut file = m.model.clone();
    match m.target.as_deref() {
        Some(t) if t.starts_with("zoo:") => zoo = Some(t["zoo:".len()..].to_string()),
        Some(t) => file = Some(PathBuf::from(t)),
        None => {}
    }
    if let Some(mech) = m.mechanism {
        params.insert("delayed".into(), if mech == MechanismChoice::Delayed { 1.0 } else { 0.0 });
    }
    let sys = match (zoo, file) {
        (Some(_), Some(_)) => bail!("give either a zoo name or a model file, not both"),
        (Some(z), None) => zoo_build(&z, &params)?,
        (None, Some(f)) => {
            let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
            let mut doc: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
            if !params.is_empty() {
                let obj = doc.as_object_mut().ok_or_else(|| anyhow!("model document must be a JSON object"))?;
                let p = obj.entry("params").or_insert_with(|| serde_json::json!({}));
                let p = p.as_object_mut().ok_or_else(|| anyhow!("`params` must be an object"))?;
                for (k, v) in &params {
                    p.insert(k.clone(), serde_json::json!(v));
                }
            }
            load_model(&doc.to_string())?
        }
        (None, None) => bail!("no model: pass zoo:NAME, --zoo NAME or a model file"),
    };
    if let Some(mech) = m.mechanism {
        let want = if mech == MechanismChoice::Delayed { "delayed" } else { "hysteretic" };
        if sys.mechanism.tag() != want {
            bail!("--mechanism {want} does not apply to `{}` ({})", sys.name, sys.mechanism.tag());
        }
    }
    Ok(sys)
}

fn parse_pair(s: &str, sep: &str, what: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(sep).ok_or_else(|| anyhow!("{what} expects lo{sep}hi, got `{s}`"))?;
    let a: f64 = a.trim().parse().with_context(|| format!("{what}: bad lower end `{a}`"))?;
    let b: f64 = b.trim().parse().with_context(|| format!("{what}: bad upper end `{b}`"))?;
    Ok((a, b))
}

/// Parse `lo:hi:n`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("--mu-grid expects lo:hi:n, got `{s}`");
    }
    let lo: f64 = parts[0].trim().parse().with_context(|| format!("--mu-grid: bad lo `{}`", parts[0]))?;
    let hi: f64 = parts[1].trim().parse().with_context(|| format!("--mu-grid: bad hi `{}`", parts[1]))?;
    let n: usize = parts[2].trim().parse().with_context(|| format!("--mu-grid: bad n `{}`", parts[2]))?;
    Ok((lo, hi, n))
}

fn with_schema_line(schema: &str, body: Vec<u8>) -> Vec<u8> {
    let mut out = format!("# schema: {schema}\n").into_bytes();
    out.extend(body);
    out
}

fn json(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// Trajectory CSV.
pub fn cmd_simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<Output> {
    let sys = load_system(&a.model)?;
    if !(a.t_max >= 0.0) {
        bail!("--t-max must be non-negative, got {}", a.t_max);
    }
    let mu = a.mu.unwrap_or(sys.mu);
    let traj = simulate_at(&sys, mu, (a.x0, a.y0), a.t_max, &cfg.policy)?;
    let mut buf = vec![];
    traj.write_csv(&mut buf)?;
    Ok(Output::new(with_schema_line("hlb-trajectory/1", buf)))
}

/// HLB report JSON.
pub fn cmd_classify(_cfg: &RunConfig, a: &ClassifyArgs) -> Result<Output> {
    let sys = load_system(&a.model)?;
    let report = classify(&sys, a.mu.unwrap_or(sys.mu))?;
    Ok(Output::new(json(&report)?))
}

/// Bifurcation diagram CSV.
pub fn cmd_diagram(cfg: &RunConfig, a: &DiagramArgs) -> Result<Output> {
    let sys = load_system(&a.model)?;
    let (lo, hi, n) = parse_grid(&a.mu_grid)?;
    let grid = match a.spacing {
        Spacing::Linear => match n {
            0 => vec![],
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        },
        Spacing::Geometric => {
            if !(lo * hi > 0.0) {
                bail!("geometric --mu-grid needs lo and hi of one sign, got {lo}:{hi}");
            }
            geomspace(lo.abs(), hi.abs(), n).into_iter().map(|m| m * lo.signum()).collect()
        }
    };
    let opts = SweepOptions {
        bracket: parse_pair(&a.bracket, ":", "--bracket")?,
        tol: cfg.tol,
        cycle: CycleOptions { ret: cfg.return_options(), ..CycleOptions::default() },
        ..SweepOptions::default()
    };
    let pts = sweep_diagram(&sys, &grid, &opts);
    let mut buf = vec![];
    write_diagram_csv(&pts, &mut buf)?;
    Ok(Output::new(with_schema_line("hlb-diagram/1", buf)))
}

/// Scaling-fit JSON with a per-point CSV sidecar.
pub fn cmd_scaling(cfg: &RunConfig, a: &ScalingArgs) -> Result<Output> {
    let sys = load_system(&a.model)?;
    let (lo, hi, n) = match (&a.mu, &a.mu_grid) {
        (Some(_), Some(_)) => bail!("give either --mu lo..hi or --mu-grid lo:hi:n"),
        (Some(r), None) => {
            let (lo, hi) = parse_pair(r, "..", "--mu")?;
            (lo, hi, 8)
        }
        (None, Some(g)) => parse_grid(g)?,
        (None, None) => (1e-4, 1e-2, 8),
    };
    let report = classify(&sys, sys.mu)?;
    let opts = ScalingOptions {
        bracket: parse_pair(&a.bracket, ":", "--bracket")?,
        relative: a.relative_bracket,
        tol: cfg.tol,
        cycle: CycleOptions { scan_points: 64, ret: cfg.return_options(), ..CycleOptions::default() },
    };
    let fit = fit_scaling(&sys, &report, lo, hi, n, &opts)?;
    let mut csv = vec![];
    write_scaling_csv(&fit, &mut csv)?;
    let mut out = Output::new(json(&fit)?);
    out.sidecars.push(("csv", with_schema_line("hlb-scaling-points/1", csv)));
    Ok(out)
}

/// Lemma table; `ok` only when every check passes.
pub fn cmd_verify_lemmas(_cfg: &RunConfig) -> Result<Output> {
    let table = lemmas::verify_lemmas()?;
    let mut out = Output::new(table.render().into_bytes());
    out.ok = table.all_pass();
    out.sidecars.push(("json", json(&table)?));
    Ok(out)
}

/// Dispatch a parsed command line.
pub fn run(cli: &Cli) -> Result<Output> {
    let cfg = RunConfig::from_common(&cli.common)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cfg, a),
        Command::Classify(a) => cmd_classify(&cfg, a),
        Command::Diagram(a) => cmd_diagram(&cfg, a),
        Command::Scaling(a) => cmd_scaling(&cfg, a),
        Command::VerifyLemmas => cmd_verify_lemmas(&cfg),
    }
}
