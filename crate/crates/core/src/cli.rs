//! Command-line driver. Every subcommand writes a JSON report carrying the
//! version, the parsed arguments, the seed, wall-clock time and the
//! tolerances in force; tabular results can be emitted as CSV instead.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geom::{parse_point, to_vec, Point};
use crate::hausdorff::{
    directed_distance, modified_hausdorff_with, relative_directed_with, relative_hausdorff_with, DistanceOptions, SetHandle, Shape,
};
use crate::io::{read_measure, write_measure};
use crate::kpcone::{fit_cone_based, fit_cone_free, ConeFitConfig, KpCone};
use crate::measure::{default_radius_mesh, default_tau_grid, doubling_deviation, ExactUniformMass};
use crate::moments::{compute_moments, cone_from_summary};
use crate::parametrize::{
    build_data, lower_lipschitz_margin, sample_base_points, whitney_moduli, ExponentConfig, ParamConfig, ParamRecord, PhiPoint,
};
use crate::planes::{fit_plane, PlaneFitConfig};
use crate::rates::{rate_experiment, RateConfig, RateMode};
use crate::report::ReportBuilder;
use crate::synth::{SceneKind, SceneSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A point given as `a,b,c,d`.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct Coords(pub Point);

impl FromStr for Coords {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_point(s).map(Coords).map_err(|e| e.to_string())
    }
}

impl From<Coords> for Vec<f64> {
    fn from(c: Coords) -> Self {
        to_vec(&c.0)
    }
}

#[derive(Parser, Debug, Serialize)]
#[command(name = "kpgeom", version = crate::report::VERSION, about = "Flatness, cone recovery and parametrization experiments in R^4")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Sample a plane, a KP cone or a perturbed cone into a measure file.
    Gen(GenArgs),
    /// Hausdorff-type distance between two sets.
    Dist(DistArgs),
    /// Best plane through x in B(x, r).
    FitPlane(FitPlaneArgs),
    /// Best KP cone in B(x, r), based at x or free.
    FitCone(FitConeArgs),
    /// Second moments of the measure at (x, r).
    Moments(MomentsArgs),
    /// Doubling deviation of ball-mass ratios at x.
    Doubling(DoublingArgs),
    /// Cone-projection parametrization and its Whitney moduli.
    Param(ParamArgs),
    /// Log-log rate recovery on Hölder-perturbed cones.
    Rates(RatesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Plane,
    Cone,
    PerturbedCone,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Measure file to write (.json, else CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Samples lie in B(base, extent).
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long)]
    pub base: Option<Coords>,
    /// Cone axis or plane normal (default e4).
    #[arg(long)]
    pub axis: Option<Coords>,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 3)]
    pub modes: usize,
    #[arg(long, default_value_t = 0.25)]
    pub amplitude: f64,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    /// d(A, B), unclipped.
    Directed,
    /// d^{x,r}(A, B)
    RelativeDirected,
    /// D^{x,r}(A, B)
    Relative,
    /// D̃^{x,r}(A, B)
    Modified,
}

#[derive(Args, Debug, Serialize)]
pub struct ResolutionArgs {
    /// Mesh resolution of analytic sups, relative to r.
    #[arg(long, default_value_t = 1.0 / 200.0)]
    pub resolution: f64,
    /// Evaluation budget of each analytic sup.
    #[arg(long, default_value_t = 40_000)]
    pub budget: usize,
}

impl ResolutionArgs {
    fn options(&self) -> Result<DistanceOptions> {
        if !(self.resolution > 0.0 && self.resolution < 1.0) || self.budget == 0 {
            return Err(Error::Invalid("resolution must lie in (0, 1) and budget be positive".into()));
        }
        Ok(DistanceOptions { resolution: self.resolution, budget: self.budget })
    }
}

#[derive(Args, Debug, Serialize)]
pub struct DistArgs {
    /// Measure file, shape descriptor file, or inline shape JSON.
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, value_enum, default_value_t = DistKind::Relative)]
    pub kind: DistKind,
    #[arg(long)]
    pub x: Option<Coords>,
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct FitPlaneArgs {
    /// Measure file or shape.
    #[arg(long = "in")]
    pub input: String,
    #[arg(long)]
    pub x: Coords,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub multistart: usize,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeMode {
    /// Cones based at x.
    Based,
    /// Cones containing x.
    Free,
}

#[derive(Args, Debug, Serialize)]
pub struct FitConeArgs {
    #[arg(long = "in")]
    pub input: String,
    #[arg(long)]
    pub x: Coords,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ConeMode::Based)]
    pub mode: ConeMode,
    #[arg(long, default_value_t = 16)]
    pub multistart: usize,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct MomentsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub x: Coords,
    #[arg(long)]
    pub r: f64,
    /// Also recover the cone when λ₄ − λ₃ exceeds this gap.
    #[arg(long)]
    pub gap_min: Option<f64>,
    /// Exponent γ₀ of the scale r^{1+γ₀} attached to the recovered cone.
    #[arg(long, default_value_t = 0.125)]
    pub gamma0: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DoublingArgs {
    /// Measure file; omit with --exact.
    #[arg(long = "in", required_unless_present = "exact")]
    pub input: Option<PathBuf>,
    /// Use the closed-form 3-uniform ball mass.
    #[arg(long, conflicts_with = "input")]
    pub exact: bool,
    #[arg(long)]
    pub x: Coords,
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ParamArgs {
    /// Measure file or shape for Σ.
    #[arg(long = "in")]
    pub input: String,
    #[arg(long)]
    pub seed: u64,
    /// Base of the model cone.
    #[arg(long, default_value = "0,0,0,0")]
    pub base: Coords,
    #[arg(long, default_value = "0,0,0,1")]
    pub axis: Coords,
    /// Number of base points a.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Smallest |a| of the base points.
    #[arg(long, default_value_t = 0.05)]
    pub r_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Ray tube radius (default: 3× the cloud spacing).
    #[arg(long)]
    pub tube: Option<f64>,
    #[arg(long, default_value_t = 16.0)]
    pub a_const: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Modulated Hölder perturbation.
    Perturbed,
    /// Constant modulation g ≡ 1.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateModeArg {
    Analytic,
    Sampled,
}

#[derive(Args, Debug, Serialize)]
pub struct RatesArgs {
    #[arg(long, value_enum, default_value_t = Scenario::Perturbed)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 7)]
    pub levels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r_max: f64,
    #[arg(long, value_enum, default_value_t = RateModeArg::Analytic)]
    pub mode: RateModeArg,
    /// Required in sampled mode; selects the modulation otherwise (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    #[command(flatten)]
    pub resolution: ResolutionArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Messages go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Invalid(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let f = cli.format;
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Dist(a) => dist(cli, a, f),
        Command::FitPlane(a) => fit_plane_cmd(cli, a, f),
        Command::FitCone(a) => fit_cone_cmd(cli, a, f),
        Command::Moments(a) => moments(cli, a, f),
        Command::Doubling(a) => doubling(cli, a, f),
        Command::Param(a) => param(cli, a, f),
        Command::Rates(a) => rates(cli, a, f),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes())?;
            s.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    emit(out, &s)
}

fn no_csv(f: Format, cmd: &str) -> Result<()> {
    if f == Format::Csv {
        return Err(Error::Invalid(format!("{cmd} has no tabular output; use --format json")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(v)
}

/// A measure file, a shape descriptor file, or inline shape JSON.
fn load_set(spec: &str) -> Result<SetHandle> {
    let t = spec.trim_start();
    if t.starts_with('{') {
        return Ok(SetHandle::Shape(Shape::from_json(t)?));
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let text = fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        if v.get("type").is_some() {
            return Ok(SetHandle::Shape(Shape::from_json(&text)?));
        }
    }
    let mu = read_measure(path)?;
    if mu.support().is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(mu.support_set())
}

fn gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    no_csv(cli.format, "gen")?;
    let spec = SceneSpec {
        kind: match a.kind {
            GenKind::Plane => SceneKind::Plane,
            GenKind::Cone => SceneKind::Cone,
            GenKind::PerturbedCone => SceneKind::PerturbedCone,
        },
        extent: a.extent,
        n: a.n,
        seed: a.seed,
        base: a.base.map(Vec::from),
        axis: a.axis.map(Vec::from),
        beta: a.beta,
        eps: a.eps,
        modes: a.modes,
        amplitude: a.amplitude,
    };
    let rb = ReportBuilder::new("gen", cli, Some(a.seed));
    let scene = spec.generate()?;
    write_measure(&scene.measure, &a.out)?;
    let rep = rb.finish(json!({
        "out": a.out,
        "rows": scene.measure.len(),
        "total_mass": scene.measure.total_mass(),
        "scene": spec,
        "truth": scene.truth,
    }));
    emit_json(a.report.as_deref(), &rep)
}

fn dist(cli: &Cli, a: &DistArgs, f: Format) -> Result<()> {
    no_csv(f, "dist")?;
    let opts = a.resolution.options()?;
    let (sa, sb) = (load_set(&a.a)?, load_set(&a.b)?);
    let rb = ReportBuilder::new("dist", cli, None).tolerance("resolution", opts.resolution).tolerance("budget", opts.budget as f64);
    let ball = || -> Result<(Point, f64)> {
        match (a.x, a.r) {
            (Some(x), Some(r)) => Ok((x.0, positive("r", r)?)),
            _ => Err(Error::Invalid(format!("--kind {:?} needs --x and --r", a.kind))),
        }
    };
    let est = match a.kind {
        DistKind::Directed => directed_distance(&sa, &sb)?,
        DistKind::RelativeDirected => {
            let (x, r) = ball()?;
            relative_directed_with(&x, r, &sa, &sb, &opts)?
        }
        DistKind::Relative => {
            let (x, r) = ball()?;
            relative_hausdorff_with(&x, r, &sa, &sb, &opts)?
        }
        DistKind::Modified => {
            let (x, r) = ball()?;
            modified_hausdorff_with(&x, r, &sa, &sb, &opts)?
        }
    };
    emit_json(a.out.as_deref(), &rb.finish(json!({ "value": est.value, "error": est.error })))
}

fn fit_plane_cmd(cli: &Cli, a: &FitPlaneArgs, f: Format) -> Result<()> {
    no_csv(f, "fit-plane")?;
    let r = positive("r", a.r)?;
    let sigma = load_set(&a.input)?;
    let cfg = PlaneFitConfig { multistart: a.multistart, seed: a.seed, distance: a.resolution.options()?, ..PlaneFitConfig::default() };
    let rb = ReportBuilder::new("fit-plane", cli, Some(a.seed))
        .tolerance("angular_tol", cfg.tol)
        .tolerance("resolution", cfg.distance.resolution);
    let fit = fit_plane(&sigma, &a.x.0, r, &cfg)?;
    emit_json(a.out.as_deref(), &rb.finish(json!({ "fit": fit.to_json(&a.x.0, r), "trace": fit.trace })))
}

fn fit_cone_cmd(cli: &Cli, a: &FitConeArgs, f: Format) -> Result<()> {
    no_csv(f, "fit-cone")?;
    let r = positive("r", a.r)?;
    let sigma = load_set(&a.input)?;
    let cfg = ConeFitConfig { multistart: a.multistart, seed: a.seed, distance: a.resolution.options()?, ..ConeFitConfig::default() };
    let rb = ReportBuilder::new("fit-cone", cli, Some(a.seed)).tolerance("tol", cfg.tol).tolerance("resolution", cfg.distance.resolution);
    let fit = match a.mode {
        ConeMode::Based => fit_cone_based(&sigma, &a.x.0, r, &cfg)?,
        ConeMode::Free => fit_cone_free(&sigma, &a.x.0, r, &cfg)?,
    };
    let res = json!({
        "cone": fit.cone,
        "theta": fit.value.value,
        "theta_error": fit.value.error,
        "x": Vec::from(a.x),
        "r": r,
        "trace": fit.trace,
    });
    emit_json(a.out.as_deref(), &rb.finish(res))
}

fn moments(cli: &Cli, a: &MomentsArgs, f: Format) -> Result<()> {
    no_csv(f, "moments")?;
    let r = positive("r", a.r)?;
    let mu = read_measure(&a.input)?;
    let mut rb = ReportBuilder::new("moments", cli, None);
    let ms = compute_moments(&mu, &a.x.0, r)?;
    let mut res = json!({ "moments": ms.to_json() });
    if let Some(g) = a.gap_min {
        rb = rb.tolerance("gap_min", g);
        let c = cone_from_summary(ms, a.gamma0, g)?;
        res["cone"] = json!({
            "cone": c.cone,
            "gap": c.gap,
            "spectrum_deviation": c.spectrum_deviation,
            "scale": c.scale,
        });
    }
    emit_json(a.out.as_deref(), &rb.finish(res))
}

fn doubling(cli: &Cli, a: &DoublingArgs, f: Format) -> Result<()> {
    let r = positive("r", a.r)?;
    let mesh = default_radius_mesh(r);
    let grid = default_tau_grid();
    let rep = match &a.input {
        Some(p) => doubling_deviation(&read_measure(p)?, &a.x.0, r, &mesh, &grid)?,
        None => doubling_deviation(&ExactUniformMass { dimension: 3 }, &a.x.0, r, &mesh, &grid)?,
    };
    if f == Format::Csv {
        let mut s = String::from("r_prime,tau,ratio,deviation\n");
        for w in &rep.table {
            s.push_str(&format!("{},{},{},{}\n", w.r_prime, w.tau, w.ratio, w.deviation));
        }
        return emit(a.out.as_deref(), &s);
    }
    emit_json(a.out.as_deref(), &ReportBuilder::new("doubling", cli, None).finish(rep))
}

fn param(cli: &Cli, a: &ParamArgs, f: Format) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Invalid("--n must be positive".into()));
    }
    let r_min = positive("r-min", a.r_min)?;
    if !(r_min < a.r0) {
        return Err(Error::Invalid("need r-min < r0".into()));
    }
    let sigma = load_set(&a.input)?;
    let cone = KpCone::new(a.base.0, a.axis.0)?;
    let cfg = ParamConfig {
        a_const: a.a_const,
        delta: a.delta,
        r0: a.r0,
        tube: a.tube,
        seed: a.seed,
        exponents: ExponentConfig::from_alpha(a.alpha, a.beta)?,
        ..ParamConfig::default()
    };
    let tube = cfg.tube_for(&sigma);
    let rb = ReportBuilder::new("param", cli, Some(a.seed)).tolerance("tube", tube);
    let pts = sample_base_points(&cone, r_min, a.r0, a.n, a.seed);
    let run = build_data(&sigma, &cone, &pts, &cfg);
    let moduli = whitney_moduli(&run.data, &cfg);
    if f == Format::Csv {
        return emit(a.out.as_deref(), &moduli?.to_csv());
    }
    let regular: Vec<PhiPoint> = run
        .data
        .iter()
        .filter(|d| !d.apex)
        .map(|d| PhiPoint { a: d.a, point: d.phi, t: 0.0, residual: d.residual, tube, apex: false })
        .collect();
    // the apex branch has no π round trip; ray misses count against it
    let within = regular.iter().filter(|p| p.residual <= tube).count();
    let apex = run.data.len() - regular.len();
    let res = json!({
        "tube": tube,
        "attempted": pts.len(),
        "apex": apex,
        "round_trip_fraction": within as f64 / (pts.len() - apex).max(1) as f64,
        "lower_lipschitz_margin": lower_lipschitz_margin(&regular),
        "records": run.data.iter().map(ParamRecord::from).collect::<Vec<_>>(),
        "failures": run.failures.iter().map(|(p, e)| json!({ "a": to_vec(p), "error": e })).collect::<Vec<_>>(),
        "moduli": match &moduli {
            Ok(m) => serde_json::to_value(m)?,
            Err(e) => json!({ "error": e.to_string() }),
        },
    });
    emit_json(a.out.as_deref(), &rb.finish(res))
}

fn rates(cli: &Cli, a: &RatesArgs, f: Format) -> Result<()> {
    let mode = match a.mode {
        RateModeArg::Analytic => RateMode::Analytic,
        RateModeArg::Sampled => RateMode::Sampled,
    };
    if mode == RateMode::Sampled && a.seed.is_none() {
        return Err(Error::Invalid("sampled rates need an explicit --seed".into()));
    }
    let cfg = RateConfig {
        beta: a.beta,
        eps: a.eps,
        r_max: a.r_max,
        levels: a.levels,
        modes: match a.scenario {
            Scenario::Perturbed => RateConfig::default().modes,
            Scenario::Constant => 0,
        },
        mode,
        samples: a.samples,
        seed: a.seed.unwrap_or(0),
        distance: a.resolution.options()?,
        tolerance: a.tolerance,
        ..RateConfig::default()
    };
    let rb =
        ReportBuilder::new("rates", cli, Some(cfg.seed)).tolerance("slope", cfg.tolerance).tolerance("resolution", cfg.distance.resolution);
    let rep = rate_experiment(&cfg)?;
    if f == Format::Csv {
        return emit(a.out.as_deref(), &rep.to_csv());
    }
    emit_json(a.out.as_deref(), &rb.finish(rep))
}
