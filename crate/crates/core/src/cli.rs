//! The `pmd` command-line front end.
//!
//! Every run writes a manifest (command, arguments, seed, version, wall
//! clock). Failures print one JSON object to stderr and exit with the code of
//! the error's module (see [`Error::exit_code`]).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use serde::Serialize;
use serde_json::json;

use crate::clt::{clt_sweep, clt_tv, loglog_slope};
use crate::cover::{lower_bound_family, proper_cover, verify_moment_separation, CoverParams, DEFAULT_STATE_CAP};
use crate::error::{Error, Result};
use crate::fourier::DftHypothesis;
use crate::games::{nash_eptas_detailed, threat_points, AnonymousGame};
use crate::learner::{evaluate, learn_detailed, LearnerParams, PmdSource, SampleSource, VecSource};
use crate::model::{exact_pmf, Pmd};
use crate::rng::stream_rng;
use crate::sampler::{draw_many, CdfOracle};

#[derive(Debug, Parser, Serialize)]
#[command(name = "pmd", version, about = "Poisson multinomial distributions: oracles, learning, sampling, covers, games and CLT checks")]
pub struct Cli {
    /// Master seed; every random stream is derived from it by name.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default 1, which makes outputs reproducible byte for byte).
    #[arg(long, global = true, env = "PMD_TOOLKIT_THREADS")]
    pub threads: Option<usize>,
    /// Manifest path; defaults to `<out>.manifest.json`, or stderr without `--out`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Learn a DFT hypothesis from samples (a JSON-lines file or draws from a PMD file).
    Learn(LearnArgs),
    /// Draw from a hypothesis with the CDF-inversion sampler.
    Sample(SampleArgs),
    /// Evaluate a hypothesis at one point.
    Eval(EvalArgs),
    /// Proper cover of all (n, k)-PMDs.
    Cover(CoverArgs),
    /// Build the lower-bound family and optionally verify moment separation.
    LbFamily(LbFamilyArgs),
    /// Well-supported approximate Nash equilibrium of an anonymous game.
    Nash(GameArgs),
    /// Approximate threat points of an anonymous game.
    Threat(GameArgs),
    /// Total variation between a PMD and its matched discrete Gaussian.
    Clt(CltArgs),
    /// Exact PMF of a PMD, as "x1 ... xk prob" lines.
    Oracle(OracleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    /// Samples, one JSON integer array per line.
    #[arg(long, conflicts_with = "pmd", required_unless_present = "pmd")]
    pub input: Option<PathBuf>,
    /// Draw the samples from this PMD instead.
    #[arg(long)]
    pub pmd: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epsilon: f64,
    /// Constant in the lattice and support sizes.
    #[arg(long = "C", default_value_t = 2.0)]
    pub c: f64,
    #[arg(long)]
    pub m0: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Accuracy that sets the number of random bits per draw.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    /// Point as whitespace- or comma-separated integers, e.g. "3 4 3".
    #[arg(long)]
    pub x: String,
}

/// Cover tolerances; unset values use the default formulas.
#[derive(Debug, Args, Serialize)]
pub struct CoverTuning {
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub k2: Option<u32>,
    /// Constant in the default formulas.
    #[arg(long = "cover-c", default_value_t = 1.0)]
    pub c: f64,
    /// Cap on distinct data states per DP level.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    pub cap: usize,
}

impl CoverTuning {
    fn params(&self, epsilon: f64) -> CoverParams {
        CoverParams {
            epsilon,
            c: self.c,
            delta1: self.delta1,
            delta2: self.delta2,
            gamma: self.gamma,
            k2: self.k2,
            cap: self.cap,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CoverArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub epsilon: f64,
    /// CRV probabilities are multiples of 1 / ceil(1 / step); default epsilon / n.
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[command(flatten)]
    pub tuning: CoverTuning,
    /// One PMD JSON per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct LbFamilyArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub a: u32,
    #[arg(long)]
    pub t: u32,
    /// Rational, e.g. 1/10.
    #[arg(long)]
    pub eps: String,
    /// Rational, e.g. 1/10.
    #[arg(long)]
    pub c: String,
    /// Find a separating moment for every pair of members.
    #[arg(long)]
    pub verify: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GameArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[command(flatten)]
    pub tuning: CoverTuning,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CltArgs {
    #[arg(long)]
    pub pmd: PathBuf,
    /// Component counts; the PMD's components are cycled to each length.
    #[arg(long, value_delimiter = ',')]
    pub n_sweep: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub pmd: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Learn(_) => "learn",
            Command::Sample(_) => "sample",
            Command::Eval(_) => "eval",
            Command::Cover(_) => "cover",
            Command::LbFamily(_) => "lb-family",
            Command::Nash(_) => "nash",
            Command::Threat(_) => "threat",
            Command::Clt(_) => "clt",
            Command::Oracle(_) => "oracle",
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            Command::Learn(a) => a.out.as_deref(),
            Command::Sample(a) => a.out.as_deref(),
            Command::Eval(_) => None,
            Command::Cover(a) => a.out.as_deref(),
            Command::LbFamily(a) => a.out.as_deref(),
            Command::Nash(a) | Command::Threat(a) => a.out.as_deref(),
            Command::Clt(a) => a.out.as_deref(),
            Command::Oracle(a) => a.out.as_deref(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_ratio(s: &str) -> Result<BigRational> {
    s.trim().parse::<BigRational>().map_err(|_| Error::Parse(format!("{s:?} is not a rational p/q")))
}

fn parse_point(s: &str) -> Result<Vec<i64>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i64>().map_err(|_| Error::Parse(format!("bad coordinate {t:?}"))))
        .collect()
}

fn read_samples(path: &Path) -> Result<Vec<Vec<i64>>> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Vec<i64>>(l).map_err(Error::from))
        .collect()
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Learn(a) => {
            let mut params = LearnerParams::new(a.epsilon);
            params.c = a.c;
            params.m0 = a.m0;
            params.m = a.m;
            params.seed = cli.seed;
            let report = match (&a.input, &a.pmd) {
                (Some(path), _) => {
                    let samples = read_samples(path)?;
                    let k = a.k.or_else(|| samples.first().map(Vec::len)).ok_or(Error::EmptySampleSet)?;
                    let mut src = VecSource::new(samples);
                    learn_detailed(&mut src as &mut dyn SampleSource, k, &params)?
                }
                (None, Some(path)) => {
                    let pmd = Pmd::from_json(&read(path)?)?;
                    let mut src = PmdSource::new(&pmd, cli.seed);
                    learn_detailed(&mut src as &mut dyn SampleSource, pmd.k(), &params)?
                }
                (None, None) => return Err(Error::InvalidParameter("need --input or --pmd".into())),
            };
            log::info!("learned with C = {}, m0 = {}, m = {}", report.c_used, report.m0, report.m);
            emit(a.out.as_deref(), &(report.hypothesis.to_json() + "\n"))
        }
        Command::Sample(a) => {
            let hyp = DftHypothesis::from_json(&read(&a.hyp)?)?;
            let oracle = CdfOracle::new(&hyp, a.epsilon)?;
            let mut rng = stream_rng(cli.seed, "cli/sample");
            let mut text = String::new();
            for x in draw_many(&oracle, &mut rng, a.count) {
                text.push_str(&serde_json::to_string(&x)?);
                text.push('\n');
            }
            emit(a.out.as_deref(), &text)
        }
        Command::Eval(a) => {
            let hyp = DftHypothesis::from_json(&read(&a.hyp)?)?;
            let x = parse_point(&a.x)?;
            if x.len() != hyp.k() {
                return Err(Error::DimensionMismatch { expected: hyp.k(), found: x.len() });
            }
            emit(None, &format!("{:.16e}\n", evaluate(&hyp, &x)))
        }
        Command::Cover(a) => {
            let cover = proper_cover(a.n, a.k, a.grid_step, &a.tuning.params(a.epsilon))?;
            let text: String = cover.iter().map(|p| p.to_json() + "\n").collect();
            log::info!("cover has {} elements", cover.len());
            emit(a.out.as_deref(), &text)
        }
        Command::LbFamily(a) => {
            let family = lower_bound_family(a.k, a.a, a.t, parse_ratio(&a.eps)?, parse_ratio(&a.c)?)?;
            let mut report = json!({ "family": family, "members": family.size() });
            if a.verify {
                let members = family.functions();
                let mut pairs = Vec::new();
                for i in 0..members.len() {
                    for j in i + 1..members.len() {
                        let (m, diff) = verify_moment_separation(&family, &members[i], &members[j])?;
                        pairs.push(json!({ "f": i, "g": j, "moment": m.as_slice(), "difference": diff.to_string() }));
                    }
                }
                report["verified_pairs"] = json!(pairs.len());
                report["pairs"] = json!(pairs);
            }
            emit(a.out.as_deref(), &pretty(&report))
        }
        Command::Nash(a) => {
            let game = AnonymousGame::from_json(&read(&a.game)?)?;
            let r = nash_eptas_detailed(&game, a.epsilon, &a.tuning.params(a.epsilon / 5.0))?;
            emit(a.out.as_deref(), &pretty(&r))
        }
        Command::Threat(a) => {
            let game = AnonymousGame::from_json(&read(&a.game)?)?;
            let t = threat_points(&game, a.epsilon, &a.tuning.params(a.epsilon))?;
            emit(a.out.as_deref(), &pretty(&t))
        }
        Command::Clt(a) => {
            let pmd = Pmd::from_json(&read(&a.pmd)?)?;
            let report = if a.n_sweep.is_empty() {
                let (tv, sigma) = clt_tv(&pmd)?;
                json!({ "points": [{ "n": pmd.n(), "sigma": sigma, "tv": tv }] })
            } else {
                let points = clt_sweep(pmd.components(), &a.n_sweep)?;
                let slope = (points.len() >= 2).then(|| loglog_slope(&points));
                json!({ "points": points, "loglog_slope": slope })
            };
            emit(a.out.as_deref(), &pretty(&report))
        }
        Command::Oracle(a) => {
            let pmd = Pmd::from_json(&read(&a.pmd)?)?;
            let mut buf = Vec::new();
            exact_pmf(&pmd)?.write_dump(&mut buf)?;
            emit(a.out.as_deref(), &String::from_utf8(buf).expect("ascii dump"))
        }
    }
}

fn write_manifest(cli: &Cli, args: &[String], started: SystemTime, elapsed: f64, status: &str) -> Result<()> {
    let manifest = json!({
        "command": cli.command.name(),
        "args": args,
        "config": cli,
        "seed": cli.seed,
        "threads": cli.threads.unwrap_or(1),
        "versions": { "pmd-toolkit": env!("CARGO_PKG_VERSION") },
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_clock_seconds": elapsed,
        "status": status,
    });
    let path = cli.manifest.clone().or_else(|| {
        cli.command.out().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    });
    match path {
        Some(p) => fs::write(&p, pretty(&manifest)).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            eprintln!("manifest: {manifest}");
            Ok(())
        }
    }
}

fn error_json(e: &Error) -> String {
    json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() }).to_string()
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.unwrap_or(1).max(1);
    // The global pool can only be set once per process; later calls reuse it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let started = SystemTime::now();
    let clock = Instant::now();
    let result = execute(&cli);
    let status = if result.is_ok() { "ok" } else { "error" };
    let result = result.and_then(|_| write_manifest(&cli, &args, started, clock.elapsed().as_secs_f64(), status));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
