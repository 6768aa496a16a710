use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use loewner::driving::{DrivingConfig, DrivingSpec};
use loewner::export::{self, Metadata};
use loewner::hull_trace::{self, CellSampling};
use loewner::imaginary_dual::{self as imag, Gap};
use loewner::ode_engine::IntegratorConfig;
use loewner::real_line::{self as real, FrameMap, ScanConfig};
use loewner::sharp::Branch;
use loewner::signal::Signal;
use loewner::weierstrass_suite::{self as wf, WeierstrassParams};
use loewner::{acceptance, Error};

#[derive(Parser)]
#[command(name = "loewner", version, about = "Numerical experiments with the chordal Loewner equation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Driving function as inline JSON or a path to a JSON file.
    #[arg(long, global = true)]
    driving: Option<String>,
    /// Experiment config file (JSON, unknown keys rejected).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long = "T", global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Frame-time horizon for self-similar runs.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relative and absolute integrator tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, conflicts_with = "desk_scale")]
    paper_scale: bool,
    #[arg(long, global = true)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Trace by composition of cell maps.
    Trace {
        #[arg(long, value_enum, default_value = "right")]
        sampling: Sampling,
    },
    /// Initial values captured exactly at T.
    CaptureScan {
        /// Grid as `lo:hi:n`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Real-line equation tools.
    RealEq {
        #[command(subcommand)]
        mode: RealMode,
    },
    /// Imaginary-axis equation tools.
    ImagEq {
        #[command(subcommand)]
        mode: ImagMode,
    },
    /// Images of both sides of the trace under g_T.
    Welding {
        /// Number of evenly spaced times in [0, T).
        #[arg(long, default_value_t = 20)]
        rows: usize,
    },
    /// Weierstrass driving checks.
    Weierstrass {
        #[command(subcommand)]
        mode: WeierstrassMode,
    },
    /// Runs the acceptance suite.
    Verify {
        /// Run a single criterion.
        #[arg(long)]
        only: Option<usize>,
    },
    /// Frame driving and solution of the oscillating captured example.
    Figure {
        #[arg(long, default_value_t = 1.5)]
        a: f64,
        #[arg(long, default_value_t = 12)]
        k_last: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    Right,
    Midpoint,
}

#[derive(Subcommand)]
enum RealMode {
    /// Solve the real equation from x0 up to T.
    Solve {
        #[arg(long)]
        x0: f64,
    },
    /// Solve in the self-similar frame at T.
    Frame {
        #[arg(long)]
        x0: f64,
        /// Side of λ(T) the frame looks at (1 or −1).
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        direction: f64,
    },
    /// Tail transform of an exponential mixture `a:k,a:k,…`.
    T {
        #[arg(long)]
        phi: String,
        #[arg(long, default_value = "0:10:20")]
        grid: String,
    },
    /// Inverse transform applied to an exponential mixture.
    F {
        #[arg(long)]
        phi: String,
        #[arg(long, default_value = "0:10:20")]
        grid: String,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
    },
    /// Escape test on the frame driving over [t1, t2].
    GTest {
        #[arg(long, default_value_t = 0.0)]
        t1: f64,
        #[arg(long)]
        t2: f64,
    },
    /// Oscillating captured example.
    SharpExample {
        #[arg(long)]
        a: f64,
        #[arg(long, value_enum)]
        branch: Option<BranchArg>,
        #[arg(long, default_value_t = 40)]
        k_last: usize,
        #[arg(long, default_value_t = 32)]
        per_arc: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Low,
    High,
}

#[derive(Subcommand)]
enum ImagMode {
    /// Imaginary equation with the driving as the real gap θ(t).
    Solve {
        #[arg(long)]
        y0: f64,
    },
    /// Height form with constant η.
    Height {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        y0: f64,
    },
    /// Difference form with constant η.
    Difference {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        w0: f64,
    },
    /// Vanishing classification for the gap C√(T − t).
    Transition {
        #[arg(long = "C")]
        c: f64,
    },
    /// Lower bound function ∫₀ˢ (1 − 4/η²) for constant η.
    L {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        s: f64,
    },
}

#[derive(Subcommand)]
enum WeierstrassMode {
    /// Hölder-1/2 estimate against C(b).
    Norm(WeierstrassArgs),
    /// Increments at t_m = 2π/b^{m−1} against the oscillation constant.
    Oscillation(WeierstrassArgs),
    /// Hypotheses, simplicity and welding ratios.
    Pipeline(WeierstrassArgs),
    /// Norm and oscillation checks over a parameter grid.
    Sweep,
}

#[derive(Args)]
struct WeierstrassArgs {
    #[arg(long)]
    b: f64,
    #[arg(long = "N")]
    n: u32,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    command: Option<String>,
    driving: Option<DrivingConfig>,
    #[serde(default)]
    numeric: Option<IntegratorConfig>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(serde::Serialize)]
struct PathRow {
    t: f64,
    value: f64,
}

/// Failure with its exit code: 1 for failed checks, 2 for bad input.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(ref io) if io.kind() == std::io::ErrorKind::BrokenPipe => 0,
            Error::Csv(ref c) if matches!(c.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe) => 0,
            Error::Domain(_) | Error::Config(_) | Error::Json(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn check_failed(msg: impl Into<String>) -> Failure {
    Failure { code: 1, message: msg.into() }
}

type Outcome = std::result::Result<(), Failure>;

struct Ctx {
    global: Global,
    file: ExperimentConfig,
    numeric: IntegratorConfig,
    command: &'static str,
}

impl Ctx {
    fn paper(&self) -> bool {
        self.global.paper_scale
    }

    fn out(&self) -> Option<&Path> {
        self.global.out.as_deref().or(self.file.output_dir.as_deref())
    }

    fn driving_config(&self) -> std::result::Result<Option<DrivingConfig>, Failure> {
        let mut cfg = match &self.global.driving {
            Some(text) => {
                let body = if text.trim_start().starts_with('{') {
                    text.clone()
                } else {
                    fs::read_to_string(text).map_err(|e| usage(format!("--driving {text}: {e}")))?
                };
                Some(serde_json::from_str::<DrivingConfig>(&body).map_err(|e| usage(format!("--driving: {e}")))?)
            }
            None => self.file.driving.clone(),
        };
        if let Some(c) = cfg.as_mut() {
            if let Some(seed) = self.global.seed.or(self.file.seed) {
                if c.family == "brownian" {
                    c.seed = Some(seed);
                }
            }
        }
        Ok(cfg)
    }

    fn driving(&self) -> std::result::Result<DrivingSpec, Failure> {
        let cfg = self.driving_config()?.ok_or_else(|| usage("this command needs --driving"))?;
        Ok(cfg.build()?)
    }

    fn t_end(&self, spec: &DrivingSpec) -> f64 {
        self.global.t_end.unwrap_or(spec.domain_end())
    }

    fn horizon(&self, default: f64) -> f64 {
        self.global.horizon.unwrap_or(default)
    }

    fn meta(&self, spec: Option<&DrivingSpec>) -> Metadata {
        let mut m = Metadata::new(self.command, spec, self.numeric);
        m.dt = self.global.dt;
        m.seed = self.global.seed.or(self.file.seed);
        m
    }

    /// Writes a table to `<out>/<name>.csv` with its sidecar, or to stdout.
    fn table<S: serde::Serialize>(
        &self,
        name: &str,
        rows: impl IntoIterator<Item = S>,
        meta: &Metadata,
    ) -> Outcome {
        match self.out() {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| usage(format!("--out {}: {e}", dir.display())))?;
                export::write_table(&dir.join(format!("{name}.csv")), rows, meta)?;
            }
            None => {
                let mut w = csv::Writer::from_writer(std::io::stdout().lock());
                for r in rows {
                    w.serialize(r).map_err(Error::from)?;
                }
                w.flush().map_err(Error::from)?;
            }
        }
        Ok(())
    }

    /// Prints a JSON report and, with an output directory, saves it too.
    fn report<S: serde::Serialize>(&self, name: &str, value: &S) -> Outcome {
        let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        if let Some(dir) = self.out() {
            fs::create_dir_all(dir).map_err(|e| usage(format!("--out {}: {e}", dir.display())))?;
            export::write_json(&dir.join(format!("{name}.json")), value)?;
        }
        let mut so = std::io::stdout().lock();
        writeln!(so, "{text}").map_err(Error::from)?;
        Ok(())
    }
}

fn parse_grid(text: &str) -> std::result::Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("grid `{text}` is not lo:hi:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(bad());
    }
    Ok((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
}

fn parse_mixture(text: &str) -> std::result::Result<Signal, Failure> {
    let terms: Vec<(f64, f64)> = text
        .split(',')
        .map(|t| {
            let (a, k) = t.split_once(':').ok_or_else(|| usage(format!("term `{t}` is not a:k")))?;
            let a: f64 = a.trim().parse().map_err(|_| usage(format!("bad weight in `{t}`")))?;
            let k: f64 = k.trim().parse().map_err(|_| usage(format!("bad rate in `{t}`")))?;
            Ok((a, k))
        })
        .collect::<std::result::Result<_, Failure>>()?;
    Ok(Signal::new(move |s| terms.iter().map(|(a, k)| a * (-k * s).exp()).sum()))
}

fn run(cli: Cli) -> Outcome {
    let file = match &cli.global.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("--config {}: {e}", p.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| usage(format!("--config {}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let command = match &cli.command {
        Command::Trace { .. } => "trace",
        Command::CaptureScan { .. } => "capture-scan",
        Command::RealEq { .. } => "real-eq",
        Command::ImagEq { .. } => "imag-eq",
        Command::Welding { .. } => "welding",
        Command::Weierstrass { .. } => "weierstrass",
        Command::Verify { .. } => "verify",
        Command::Figure { .. } => "figure",
    };
    if let Some(c) = &file.command {
        if c != command {
            return Err(usage(format!("config is for `{c}`, not `{command}`")));
        }
    }
    let mut numeric = file.numeric.unwrap_or_default();
    if let Some(tol) = cli.global.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(usage("--tol must be positive"));
        }
        numeric.rel_tol = tol;
        numeric.abs_tol = tol;
    }
    numeric.validate()?;
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| usage(format!("--jobs: {e}")))?;
    }
    let ctx = Ctx { global: cli.global, file, numeric, command };
    log::debug!("running {command}");
    match cli.command {
        Command::Trace { sampling } => trace(&ctx, sampling),
        Command::CaptureScan { grid } => capture_scan(&ctx, grid),
        Command::RealEq { mode } => real_eq(&ctx, mode),
        Command::ImagEq { mode } => imag_eq(&ctx, mode),
        Command::Welding { rows } => welding(&ctx, rows),
        Command::Weierstrass { mode } => weierstrass(&ctx, mode),
        Command::Verify { only } => verify(only),
        Command::Figure { a, k_last } => figure(&ctx, a, k_last),
    }
}

fn trace(ctx: &Ctx, sampling: Sampling) -> Outcome {
    let spec = ctx.driving()?;
    let te = ctx.t_end(&spec);
    let dt = ctx.global.dt.unwrap_or(1e-3);
    let sampling = match sampling {
        Sampling::Right => CellSampling::Right,
        Sampling::Midpoint => CellSampling::Midpoint,
    };
    let curve = hull_trace::trace_with(&spec, te, dt, sampling)?;
    if !curve.nudged.is_empty() {
        log::info!("{} points crossed a branch cut and were nudged", curve.nudged.len());
    }
    let mut meta = ctx.meta(Some(&spec));
    meta.dt = Some(dt);
    meta.params = json!({ "T": te, "sampling": sampling, "nudged": curve.nudged });
    ctx.table("trace", export::trace_rows(&curve), &meta)
}

fn capture_scan(ctx: &Ctx, grid: Option<String>) -> Outcome {
    let spec = ctx.driving()?;
    let te = ctx.t_end(&spec);
    let grid = match grid {
        Some(g) => parse_grid(&g)?,
        None => {
            let l = spec.at(0.0);
            let w = 4.0 * te.sqrt() + (spec.at(te) - l).abs();
            let n = if ctx.paper() { 800 } else { 80 };
            (0..=n).map(|i| l - w + 2.0 * w * i as f64 / n as f64).collect()
        }
    };
    let sc = ScanConfig {
        s_horizon: ctx.horizon(ScanConfig::default().s_horizon),
        integrator: ctx.numeric,
        ..ScanConfig::default()
    };
    let r = real::capture_scan(&spec, te, &grid, &sc)?;
    let mut meta = ctx.meta(Some(&spec));
    meta.params = json!({ "T": te, "upper": r.upper, "lower": r.lower, "undecided": r.undecided, "cell": r.cell });
    log::info!("captured above: {:?}, below: {:?}", r.upper, r.lower);
    ctx.table("capture_scan", &r.reports, &meta)
}

fn real_eq(ctx: &Ctx, mode: RealMode) -> Outcome {
    match mode {
        RealMode::Solve { x0 } => {
            let spec = ctx.driving()?;
            let te = ctx.t_end(&spec);
            let (path, rep) = real::solve_rle(&spec, x0, te, &ctx.numeric)?;
            let mut meta = ctx.meta(Some(&spec));
            meta.params = serde_json::to_value(rep).map_err(Error::from)?;
            let rows = path.times.iter().zip(&path.values).map(|(&t, v)| PathRow { t, value: v[0] });
            ctx.table("real_solve", rows, &meta)
        }
        RealMode::Frame { x0, direction } => {
            let spec = ctx.driving()?;
            let te = ctx.t_end(&spec);
            let frame = FrameMap::for_driving(&spec, te, direction)?;
            let xi = real::to_holder_frame(&spec, &frame);
            let (path, outcome) = real::solve_frame_rle(&xi, x0, ctx.horizon(30.0), &ctx.numeric)?;
            let mut meta = ctx.meta(Some(&spec));
            meta.params = json!({ "outcome": format!("{outcome:?}"), "x0": x0, "direction": direction });
            log::info!("frame outcome: {outcome:?}");
            #[derive(serde::Serialize)]
            struct Row {
                s: f64,
                x: f64,
                xi: f64,
            }
            let rows = path.times.iter().zip(&path.values).map(|(&s, v)| Row { s, x: v[0], xi: xi.eval(s) });
            ctx.table("real_frame", rows, &meta)
        }
        RealMode::T { phi, grid } => {
            let t = real::operator_t(&parse_mixture(&phi)?, &parse_grid(&grid)?)?;
            ctx.report("operator_t", &t)
        }
        RealMode::F { phi, grid, h } => {
            let g = parse_grid(&grid)?;
            let v = real::operator_f(&parse_mixture(&phi)?, &g, h)?;
            ctx.report("operator_f", &json!({ "s": g, "values": v }))
        }
        RealMode::GTest { t1, t2 } => {
            let spec = ctx.driving()?;
            let te = ctx.t_end(&spec);
            let frame = FrameMap::for_driving(&spec, te, 1.0)?;
            let xi = real::to_holder_frame(&spec, &frame);
            let r = real::g_test(&xi, t1, t2)?;
            ctx.report("g_test", &r)
        }
        RealMode::SharpExample { a, branch, k_last, per_arc } => {
            let branch = branch.map(|b| match b {
                BranchArg::Low => Branch::Low,
                BranchArg::High => Branch::High,
            });
            let r = real::sharp_example(a, branch, k_last, per_arc)?;
            let mut meta = ctx.meta(None);
            meta.params = json!({
                "a": a, "branch": r.branch, "k_last": k_last,
                "running_min": r.running_min, "running_max": r.running_max,
                "lower_limit": r.lower_limit, "upper_limit": r.upper_limit,
            });
            #[derive(serde::Serialize)]
            struct Row {
                s: f64,
                x: f64,
                xi: f64,
            }
            let rows = (0..r.s.len()).map(|i| Row { s: r.s[i], x: r.x[i], xi: r.xi[i] });
            ctx.table("sharp_example", rows, &meta)
        }
    }
}

fn imag_eq(ctx: &Ctx, mode: ImagMode) -> Outcome {
    match mode {
        ImagMode::Solve { y0 } => {
            let spec = ctx.driving()?;
            let te = ctx.t_end(&spec);
            let sp = spec.clone();
            let gap = Gap::General(Signal::new(move |t| sp.at(t)));
            let (path, cl) = imag::solve_ile(&gap, y0, te, &ctx.numeric)?;
            let mut meta = ctx.meta(Some(&spec));
            meta.params = serde_json::to_value(cl).map_err(Error::from)?;
            let rows = path.times.iter().zip(&path.values).map(|(&t, v)| PathRow { t, value: v[0] });
            ctx.report("imag_solve_status", &cl)?;
            if ctx.out().is_some() {
                ctx.table("imag_solve", rows, &meta)?;
            }
            Ok(())
        }
        ImagMode::Height { eta, y0 } => {
            let (_, cl) = imag::solve_frame_height(&Signal::constant(eta), y0, ctx.horizon(imag::DEFAULT_S_HORIZON), &ctx.numeric)?;
            ctx.report("height", &cl)
        }
        ImagMode::Difference { eta, w0 } => {
            let (_, cl) =
                imag::solve_frame_difference(&Signal::constant(eta), w0, ctx.horizon(imag::DEFAULT_S_HORIZON), &ctx.numeric)?;
            ctx.report("difference", &cl)
        }
        ImagMode::Transition { c } => {
            let te = ctx.global.t_end.unwrap_or(1.0);
            let r = imag::transition_classify(c, te, &ctx.numeric)?;
            let status = match r.label {
                imag::TransitionLabel::Vanishing => "vanishing",
                imag::TransitionLabel::NotVanishing => "not_vanishing",
                imag::TransitionLabel::BoundaryNotVanishing => "boundary_not_vanishing",
            };
            ctx.report("transition", &json!({ "status": status, "report": r }))
        }
        ImagMode::L { eta, s } => {
            let lb = imag::lower_bound_function(&Signal::constant(eta), s)?;
            ctx.report("lower_bound", &lb)
        }
    }
}

fn welding(ctx: &Ctx, rows: usize) -> Outcome {
    if rows == 0 {
        return Err(usage("--rows must be at least 1"));
    }
    let spec = ctx.driving()?;
    let te = ctx.t_end(&spec);
    let dt = ctx.global.dt.unwrap_or(1e-3);
    let s: Vec<f64> = (0..rows).map(|k| te * k as f64 / rows as f64).collect();
    let w = hull_trace::welding(&spec, te, &s, dt, &ctx.numeric)?;
    let mut meta = ctx.meta(Some(&spec));
    meta.dt = Some(dt);
    meta.params = json!({ "T": te, "lambda_T": w.lambda_t, "delta": w.delta, "ratio2": w.ratio2 });
    ctx.table("welding", export::welding_rows(&w), &meta)
}

fn weierstrass(ctx: &Ctx, mode: WeierstrassMode) -> Outcome {
    let te = ctx.global.t_end.unwrap_or(1.0);
    match mode {
        WeierstrassMode::Norm(a) => {
            let p = WeierstrassParams::new(a.b, a.n, a.c)?;
            let per = if ctx.paper() { 2000 } else { 400 };
            let r = wf::holder_norm_check(&p, &wf::holder_grid(p.b, p.n.min(4), per))?;
            ctx.report("holder_norm", &r)?;
            if r.passed { Ok(()) } else { Err(check_failed(format!("norm bound violated at {:?}", r.witness))) }
        }
        WeierstrassMode::Oscillation(a) => {
            let p = WeierstrassParams::new(a.b, a.n, a.c)?;
            let ms: Vec<u32> = (2..=8).collect();
            let r = wf::oscillation_check(&p, te, &ms)?;
            ctx.report("oscillation", &r)?;
            if r.passed { Ok(()) } else { Err(check_failed(format!("oscillation margin {:.3e}", r.margin))) }
        }
        WeierstrassMode::Pipeline(a) => {
            let p = WeierstrassParams::new(a.b, a.n, a.c)?;
            let dt = ctx.global.dt.unwrap_or(2e-3);
            let v = wf::quasislit_pipeline(&p, te, dt, &ctx.numeric)?;
            if let (Some(dir), Some(w)) = (ctx.out(), v.welding.as_ref()) {
                fs::create_dir_all(dir).map_err(|e| usage(format!("--out {}: {e}", dir.display())))?;
                let spec = p.driving(te)?;
                let mut meta = ctx.meta(Some(&spec));
                meta.dt = Some(dt);
                export::write_table(&dir.join("pipeline_welding.csv"), export::welding_rows(w), &meta)?;
            }
            ctx.report("pipeline", &json!({ "passed": v.passed(), "verdict": v }))
        }
        WeierstrassMode::Sweep => {
            let (bs, ns, cs): (Vec<f64>, Vec<u32>, Vec<f64>) = if ctx.paper() {
                (vec![9.0, 16.0, 25.0, 49.0, 100.0], vec![1, 2, 4, 8, 12], vec![0.05, 0.1, 0.5, 1.0, 2.0])
            } else {
                (vec![9.0, 16.0, 25.0, 100.0], vec![1, 2, 4, 8], vec![0.1, 1.0])
            };
            let ms: Vec<u32> = (2..=8).collect();
            let rows = wf::sweep(&bs, &ns, &cs, te, &ms)?;
            let mut meta = ctx.meta(None);
            meta.params = json!({ "T": te, "m": ms, "thresholds": bs.iter().map(|&b| (b, wf::amplitude_threshold(b))).collect::<Vec<_>>() });
            ctx.table("weierstrass_sweep", &rows, &meta)?;
            let failed = rows.iter().filter(|r| r.check != "hypothesis" && r.verdict != "pass").count();
            if failed == 0 { Ok(()) } else { Err(check_failed(format!("{failed} sweep checks failed"))) }
        }
    }
}

fn verify(only: Option<usize>) -> Outcome {
    let results = match only {
        Some(id) => vec![acceptance::run_one(id)
            .ok_or_else(|| usage(format!("criterion {id} outside 1..={}", acceptance::criterion_count())))?],
        None => acceptance::run_all(),
    };
    let mut so = std::io::stdout().lock();
    for r in &results {
        writeln!(so, "{r}").map_err(Error::from)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(check_failed(format!("{failed} of {} criteria failed", results.len())))
    }
}

fn figure(ctx: &Ctx, a: f64, k_last: usize) -> Outcome {
    let r = real::sharp_example(a, None, k_last, 64)?;
    let mut meta = ctx.meta(None);
    let upper = r.upper_limit;
    meta.params = json!({ "a": a, "k_last": k_last, "branch": r.branch, "reference_lines": [0.0, a, upper] });
    #[derive(serde::Serialize)]
    struct Row {
        s: f64,
        xi: f64,
        x: f64,
        zero: f64,
        lower: f64,
        upper: f64,
    }
    let rows = (0..r.s.len()).map(|i| Row { s: r.s[i], xi: r.xi[i], x: r.x[i], zero: 0.0, lower: a, upper });
    ctx.table("figure", rows, &meta)
}

fn main() -> ExitCode {
    let env = env_logger::Env::new().filter_or("LOEWNER_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
