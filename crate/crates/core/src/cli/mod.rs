//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 resource cap.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::environment::{denjoy_koksma_certificate, total_variation, uniform_grid, Environment};
use crate::error::Error;
use crate::exact_dp::{
    distribution_at, mixing_distance, mu_profile_via_dp, renewal_residuals,
    squared_distribution_at, srlp_check, SquaredKernel,
};
use crate::martingale::{build_martingale, return_bounds};
use crate::measure::Harmonic;
use crate::monte_carlo::{
    brownian_from, condition16_from, moments_from, simulate, MeanEstimate, Proportion, SimConfig,
};
use crate::occupation::{
    geometric_parameter, invariant_density_residual, nu_measures, quasi_invariance_diagnostic,
    stationary_estimate, visit_counts,
};
use crate::rotation::convergents;
use crate::verify::run_suite;

use config::{
    AlphaSpec, ChainArg, ConfigFile, EnvironmentSpec, ExperimentConfig, KernelArg, Params,
    SCHEMA_VERSION,
};
use output::{csv, json as json_artifact, num, write_all, Artifact};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// Cap on `paths × horizon` for one simulation.
pub const MAX_MC_STEPS: u64 = 100_000_000_000;
/// Cap on stored path summaries (`paths × checkpoints`).
pub const MAX_MC_SUMMARIES: u64 = 50_000_000;
/// Cap on window sizes and grids.
pub const MAX_WINDOW: u64 = 10_000_000;

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "qpwalk",
    version,
    about = "Random walks in quasi-periodic environments"
)]
struct Cli {
    /// JSON file with any subset of seed, environment and params
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for Monte Carlo runs
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct EnvArgs {
    /// Environment JSON file
    #[arg(long = "env", value_name = "PATH")]
    env_file: Option<PathBuf>,
    /// golden, silver, liouville-demo, or a float in (0, 1)
    #[arg(long)]
    alpha: Option<String>,
    /// Cosine coefficients a_1, a_2, …
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    cos: Option<Vec<f64>>,
    /// Sine coefficients b_1, b_2, …
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sin: Option<Vec<f64>>,
    /// Constant added to the log-odds
    #[arg(long, allow_negative_numbers = true)]
    drift: Option<f64>,
}

macro_rules! param_args {
    ($name:ident { $($(#[$m:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Clone, Default, Args)]
        struct $name {
            #[command(flatten)]
            env: EnvArgs,
            $( $(#[$m])* #[arg(long)] $field: Option<$ty>, )*
        }

        impl $name {
            fn params(&self) -> Params {
                #[allow(unused_mut)]
                let mut p = Params::default();
                $( p.$field = self.$field.clone().map(Into::into); )*
                p
            }
        }
    };
}

param_args!(CfArgs {
    /// Number of partial quotients [default: 8]
    depth: usize,
});
param_args!(EnvCmdArgs {
    /// Grid size [default: 1024]
    grid: usize,
    /// Largest close return time certified [default: 10000]
    q_max: u64,
});
param_args!(ScaleArgs {
    /// Base point [default: 0]
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Half-width N [default: 100]
    window: u64,
});
param_args!(MuArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Half-width [default: 10]
    window: u64,
    /// Also sum the taboo series up to this many steps
    horizon: u64,
});
param_args!(NuArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Orbit length [default: 55]
    q: u64,
});
param_args!(StationaryArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Orbit length [default: 55]
    q: u64,
    /// Test functions, e.g. cos1,sin2 [default: cos1,sin1,cos2,sin2]
    #[arg(value_delimiter = ',')]
    harmonics: Vec<String>,
});
param_args!(DpArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Time [default: 100]
    n: u64,
    /// Absorbing site
    #[arg(allow_negative_numbers = true)]
    taboo: i64,
    /// [default: walk]
    #[arg(value_enum)]
    chain: ChainArg,
});
param_args!(SrlpArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Time [default: 2000]
    n: u64,
    /// Sites compared [default: 5]
    window: u64,
});
param_args!(RenewalArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Largest time [default: 200]
    n: u64,
    /// Target sites [default: -2,-1,0,1,2]
    #[arg(value_delimiter = ',', allow_hyphen_values = true)]
    sites: Vec<i64>,
    /// [default: two-step]
    #[arg(value_enum)]
    kernel: KernelArg,
});
param_args!(MixArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Second base point [default: 0.37]
    #[arg(allow_negative_numbers = true)]
    x2: f64,
    /// Time [default: 2000]
    n: u64,
    /// [default: cos1]
    #[arg(value_delimiter = ',')]
    harmonics: Vec<String>,
});
param_args!(McArgs {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Number of paths [default: 10000]
    paths: u64,
    /// Horizon [default: 1000]
    n: u64,
    /// [default: n/8, n/4, n/2, n]
    #[arg(value_delimiter = ',')]
    checkpoints: Vec<u64>,
    /// Drawdown levels in units of √n [default: 0.5,1,2]
    #[arg(value_delimiter = ',')]
    deltas: Vec<f64>,
    /// [default: cos1]
    #[arg(value_delimiter = ',')]
    harmonics: Vec<String>,
});
param_args!(Cond16Args {
    #[arg(allow_negative_numbers = true)]
    x: f64,
    /// Number of paths [default: 10000]
    paths: u64,
    /// Horizon [default: 1000]
    n: u64,
    /// [default: n/8, n/4, n/2, n]
    #[arg(value_delimiter = ',')]
    checkpoints: Vec<u64>,
});
param_args!(VerifyArgs {});

#[derive(Debug, Subcommand)]
enum Command {
    /// Partial quotients and convergents
    Cf(CfArgs),
    /// Jump probabilities, variation and Denjoy–Koksma certificate
    Env(EnvCmdArgs),
    /// Scale function M on [−N, N]
    Scale(ScaleArgs),
    /// Expected visits before returning to 0
    Mu(MuArgs),
    /// Parity-split visit measures on the circle
    Nu(NuArgs),
    /// Stationary-measure estimate and harmonic integrals
    Stationary(StationaryArgs),
    /// Exact law at time n
    Dp(DpArgs),
    /// Strong ratio limit deviations
    Srlp(SrlpArgs),
    /// Renewal identity residuals for the lazy chain
    Renewal(RenewalArgs),
    /// Exact mixing gaps between two base points
    Mix(MixArgs),
    /// Monte Carlo moments, extremes and drawdowns
    Mc(McArgs),
    /// Frequencies of sitting at the running maximum / minimum
    Cond16(Cond16Args),
    /// Run the invariant suite
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Cf(_) => "cf",
            Command::Env(_) => "env",
            Command::Scale(_) => "scale",
            Command::Mu(_) => "mu",
            Command::Nu(_) => "nu",
            Command::Stationary(_) => "stationary",
            Command::Dp(_) => "dp",
            Command::Srlp(_) => "srlp",
            Command::Renewal(_) => "renewal",
            Command::Mix(_) => "mix",
            Command::Mc(_) => "mc",
            Command::Cond16(_) => "cond16",
            Command::Verify(_) => "verify",
        }
    }

    fn args(&self) -> (&EnvArgs, Params) {
        match self {
            Command::Cf(a) => (&a.env, a.params()),
            Command::Env(a) => (&a.env, a.params()),
            Command::Scale(a) => (&a.env, a.params()),
            Command::Mu(a) => (&a.env, a.params()),
            Command::Nu(a) => (&a.env, a.params()),
            Command::Stationary(a) => (&a.env, a.params()),
            Command::Dp(a) => (&a.env, a.params()),
            Command::Srlp(a) => (&a.env, a.params()),
            Command::Renewal(a) => (&a.env, a.params()),
            Command::Mix(a) => (&a.env, a.params()),
            Command::Mc(a) => (&a.env, a.params()),
            Command::Cond16(a) => (&a.env, a.params()),
            Command::Verify(a) => (&a.env, a.params()),
        }
    }
}

/// Failure of a run, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::HorizonExceeded { .. }
            | Error::ResourceCap(_)
            | Error::PrecisionHorizon { .. }
            | Error::IntegerOverflow { .. }
            | Error::ProductOverflow { .. } => EXIT_RESOURCE,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type RunResult<T> = std::result::Result<T, Failure>;

/// Artifacts plus console lines from one command.
struct Outcome {
    artifacts: Vec<Artifact>,
    lines: Vec<String>,
    verified: bool,
}

impl Outcome {
    fn new(artifacts: Vec<Artifact>, lines: Vec<String>) -> Self {
        Outcome {
            artifacts,
            lines,
            verified: true,
        }
    }
}

fn with_vec<T>(v: Option<Vec<T>>) -> Option<Vec<T>> {
    v.filter(|v| !v.is_empty())
}

/// Combines the config file, environment file and flags into one config.
fn resolve(cli: &Cli) -> RunResult<ExperimentConfig> {
    let name = cli.command.name();
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(cmd) = &file.command {
        if cmd != name {
            return Err(Error::Config(format!("config is for `{cmd}`, not `{name}`")).into());
        }
    }
    let (env_args, mut cli_params) = cli.command.args();
    cli_params.sites = with_vec(cli_params.sites);
    cli_params.harmonics = with_vec(cli_params.harmonics);
    cli_params.checkpoints = with_vec(cli_params.checkpoints);
    cli_params.deltas = with_vec(cli_params.deltas);

    let mut environment = match &env_args.env_file {
        Some(path) => EnvironmentSpec::load(path)?,
        None => file.environment.clone().unwrap_or_default(),
    };
    if let Some(a) = &env_args.alpha {
        environment.alpha = AlphaSpec::parse(a)?;
    }
    if let Some(c) = &env_args.cos {
        environment.cos = c.clone();
    }
    if let Some(s) = &env_args.sin {
        environment.sin = s.clone();
    }
    if let Some(d) = env_args.drift {
        environment.drift = d;
    }

    let mut params = file.params.clone();
    params.merge(&cli_params);
    fill_defaults(name, &mut params);
    Ok(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        command: name.to_string(),
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        environment,
        params,
    })
}

fn fill_defaults(command: &str, p: &mut Params) {
    let harmonics = |v: &[&str]| Some(v.iter().map(|s| s.to_string()).collect());
    macro_rules! default {
        ($($f:ident = $v:expr),*) => {{ $( if p.$f.is_none() { p.$f = $v; } )* }};
    }
    match command {
        "cf" => default!(depth = Some(8)),
        "env" => default!(grid = Some(1024), q_max = Some(10_000)),
        "scale" => default!(x = Some(0.0), window = Some(100)),
        "mu" => default!(x = Some(0.0), window = Some(10)),
        "nu" => default!(x = Some(0.0), q = Some(55)),
        "stationary" => default!(
            x = Some(0.0),
            q = Some(55),
            harmonics = harmonics(&["cos1", "sin1", "cos2", "sin2"])
        ),
        "dp" => default!(x = Some(0.0), n = Some(100), chain = Some(ChainArg::Walk)),
        "srlp" => default!(x = Some(0.0), n = Some(2_000), window = Some(5)),
        "renewal" => default!(
            x = Some(0.0),
            n = Some(200),
            sites = Some(vec![-2, -1, 0, 1, 2]),
            kernel = Some(KernelArg::TwoStep)
        ),
        "mix" => default!(
            x = Some(0.0),
            x2 = Some(0.37),
            n = Some(2_000),
            harmonics = harmonics(&["cos1"])
        ),
        "mc" | "cond16" => {
            default!(x = Some(0.0), paths = Some(10_000), n = Some(1_000));
            if p.checkpoints.is_none() {
                let n = p.n.unwrap();
                let mut cps: Vec<u64> = [8, 4, 2, 1]
                    .iter()
                    .map(|d| n / d)
                    .filter(|&c| c > 0)
                    .collect();
                cps.dedup();
                p.checkpoints = Some(cps);
            }
            if command == "mc" {
                default!(
                    deltas = Some(vec![0.5, 1.0, 2.0]),
                    harmonics = harmonics(&["cos1"])
                );
            }
        }
        _ => {}
    }
}

fn cap(value: u64, limit: u64, what: &str) -> RunResult<()> {
    if value > limit {
        return Err(Error::ResourceCap(format!("{what} = {value} exceeds {limit}")).into());
    }
    Ok(())
}

fn parse_harmonics(list: &[String]) -> RunResult<Vec<Harmonic>> {
    Ok(list
        .iter()
        .map(|s| s.parse::<Harmonic>())
        .collect::<Result<_, _>>()?)
}

fn kernel_of(k: KernelArg) -> SquaredKernel {
    match k {
        KernelArg::TwoStep => SquaredKernel::TwoStep,
        KernelArg::Frozen => SquaredKernel::Frozen,
    }
}

fn execute(cfg: &ExperimentConfig) -> RunResult<Outcome> {
    let env = cfg.environment.build()?;
    let p = &cfg.params;
    match cfg.command.as_str() {
        "cf" => cmd_cf(cfg, &env, p.depth.unwrap()),
        "env" => cmd_env(cfg, &env, p.grid.unwrap(), p.q_max.unwrap()),
        "scale" => cmd_scale(cfg, &env, p.x.unwrap(), p.window.unwrap()),
        "mu" => cmd_mu(cfg, &env, p.x.unwrap(), p.window.unwrap(), p.horizon),
        "nu" => cmd_nu(cfg, &env, p.x.unwrap(), p.q.unwrap()),
        "stationary" => cmd_stationary(
            cfg,
            &env,
            p.x.unwrap(),
            p.q.unwrap(),
            p.harmonics.as_ref().unwrap(),
        ),
        "dp" => cmd_dp(
            cfg,
            &env,
            p.x.unwrap(),
            p.n.unwrap(),
            p.taboo,
            p.chain.unwrap(),
        ),
        "srlp" => cmd_srlp(cfg, &env, p.x.unwrap(), p.n.unwrap(), p.window.unwrap()),
        "renewal" => cmd_renewal(
            cfg,
            &env,
            p.x.unwrap(),
            p.n.unwrap(),
            p.sites.as_ref().unwrap(),
            p.kernel.unwrap(),
        ),
        "mix" => cmd_mix(
            cfg,
            &env,
            p.x.unwrap(),
            p.x2.unwrap(),
            p.n.unwrap(),
            p.harmonics.as_ref().unwrap(),
        ),
        "mc" => cmd_mc(cfg, &env),
        "cond16" => cmd_cond16(cfg, &env),
        "verify" => cmd_verify(cfg, &env),
        other => Err(Error::Config(format!("unknown command `{other}`")).into()),
    }
}

fn cmd_cf(cfg: &ExperimentConfig, env: &Environment, depth: usize) -> RunResult<Outcome> {
    cap(depth as u64, 10_000, "depth")?;
    let pq = env.frequency().partial_quotients(depth)?;
    let cs = convergents(&pq)?;
    let rows = pq
        .quotients
        .iter()
        .zip(&cs)
        .enumerate()
        .map(|(k, (a, c))| {
            vec![
                (k + 1).to_string(),
                a.to_string(),
                c.p.to_string(),
                c.q.to_string(),
                num(c.err),
            ]
        })
        .collect();
    let lines = vec![format!("alpha = {}", num(env.alpha()))];
    Ok(Outcome::new(
        vec![csv(
            cfg,
            "cf.csv",
            &["k", "a_k", "p_k", "q_k", "err_k"],
            rows,
        )],
        lines,
    ))
}

fn cmd_env(
    cfg: &ExperimentConfig,
    env: &Environment,
    grid: usize,
    q_max: u64,
) -> RunResult<Outcome> {
    cap(grid as u64, MAX_WINDOW, "grid")?;
    cap(q_max, 1_000_000, "q_max")?;
    if grid == 0 || q_max == 0 {
        return Err(Error::Config("grid and q_max must be positive".into()).into());
    }
    let xs = uniform_grid(grid);
    let rows = xs
        .iter()
        .map(|&x| {
            vec![
                num(x),
                num(env.eval_f(x)),
                num(env.eval_p(x)),
                num(env.eval_q(x)),
            ]
        })
        .collect();
    let variation = total_variation(env.f());
    let mut certificates = Vec::new();
    let mut violations = 0;
    for q in env.frequency().close_return_times(q_max)? {
        let rep = denjoy_koksma_certificate(env, &xs, q)?;
        violations += rep.violations.len();
        certificates.push(json!({
            "q": q,
            "max_abs_birkhoff_sum": rep.max_abs_sum,
            "violations": rep.violations,
        }));
    }
    let summary = json!({
        "alpha": env.alpha(),
        "degree": env.f().degree(),
        "drift": env.drift(),
        "symmetric": env.is_symmetric(),
        "total_variation": variation,
        "lipschitz_bound": env.f().lipschitz_bound(),
        "pmin": env.pmin(),
        "pmax": env.pmax(),
        "ellipticity": env.ellipticity(),
        "grid": grid,
        "denjoy_koksma": certificates,
    });
    let lines = vec![
        format!("total variation {}", num(variation)),
        format!("p in [{}, {}]", num(env.pmin()), num(env.pmax())),
        format!("Denjoy-Koksma violations over close returns <= {q_max}: {violations}"),
    ];
    Ok(Outcome::new(
        vec![
            csv(cfg, "env.csv", &["x", "f", "p", "q"], rows),
            json_artifact(cfg, "env.json", summary),
        ],
        lines,
    ))
}

fn cmd_scale(cfg: &ExperimentConfig, env: &Environment, x: f64, window: u64) -> RunResult<Outcome> {
    cap(window, MAX_WINDOW, "window")?;
    let table = build_martingale(env, x, window as usize)?;
    let rows = table
        .values()
        .map(|(k, m)| vec![k.to_string(), num(m)])
        .collect();
    let bounds = return_bounds(&table)?;
    let lines = vec![
        format!("identity residual {}", num(table.identity_residual(env))),
        format!(
            "return bounds: before +N {}, before -N {}",
            num(bounds.upper_barrier),
            num(bounds.lower_barrier)
        ),
    ];
    Ok(Outcome::new(
        vec![csv(cfg, "scale.csv", &["k", "m"], rows)],
        lines,
    ))
}

fn cmd_mu(
    cfg: &ExperimentConfig,
    env: &Environment,
    x: f64,
    window: u64,
    horizon: Option<u64>,
) -> RunResult<Outcome> {
    cap(window, MAX_WINDOW, "window")?;
    let profile = visit_counts(env, x, window as usize)?;
    let table = build_martingale(env, x, window as usize)?;
    let dp = match horizon {
        Some(k) => {
            cap(window, k, "window beyond horizon")?;
            Some(mu_profile_via_dp(env, x, window, k)?)
        }
        None => None,
    };
    let mut rows = Vec::new();
    for (a, mu) in profile.iter() {
        let r = if a == 0 {
            String::new()
        } else {
            num(geometric_parameter(env, x, a, &table)?)
        };
        let mut row = vec![a.to_string(), num(mu), r];
        if let Some(dp) = &dp {
            row.push(match dp.iter().find(|(s, _)| *s == a) {
                Some((_, v)) => num(*v),
                None => String::new(),
            });
        }
        rows.push(row);
    }
    let mut columns = vec!["a", "mu", "r"];
    if dp.is_some() {
        columns.push("mu_dp");
    }
    let lines = vec![format!(
        "invariant-density residual {}",
        num(invariant_density_residual(&profile, env))
    )];
    Ok(Outcome::new(
        vec![csv(cfg, "mu.csv", &columns, rows)],
        lines,
    ))
}

fn cmd_nu(cfg: &ExperimentConfig, env: &Environment, x: f64, q: u64) -> RunResult<Outcome> {
    cap(q, MAX_WINDOW, "q")?;
    let nu = nu_measures(env, x, q)?;
    let mut rows = Vec::new();
    for (parity, m) in [("odd", &nu.odd), ("even", &nu.even)] {
        for a in m.atoms() {
            rows.push(vec![num(a.position), num(a.weight), parity.to_string()]);
        }
    }
    let lines = vec![format!(
        "mass odd {}, even {}",
        num(nu.mass_odd),
        num(nu.mass_even)
    )];
    Ok(Outcome::new(
        vec![csv(cfg, "nu.csv", &["position", "weight", "parity"], rows)],
        lines,
    ))
}

fn cmd_stationary(
    cfg: &ExperimentConfig,
    env: &Environment,
    x: f64,
    q: u64,
    harmonics: &[String],
) -> RunResult<Outcome> {
    cap(q, MAX_WINDOW, "q")?;
    let hs = parse_harmonics(harmonics)?;
    let est = stationary_estimate(env, x, q)?;
    let atoms = est
        .measure
        .atoms()
        .iter()
        .map(|a| vec![num(a.position), num(a.weight)])
        .collect();
    let rows = quasi_invariance_diagnostic(&est.measure, env, &hs)?
        .into_iter()
        .map(|r| {
            vec![
                r.harmonic.to_string(),
                num(r.direct),
                num(r.transported),
                num(r.discrepancy),
            ]
        })
        .collect();
    let mut lines = vec![format!(
        "mass odd {}, even {}",
        num(est.mass_odd),
        num(est.mass_even)
    )];
    if est.below_mass_threshold {
        lines.push("warning: parity mass at or below threshold; estimate immature".into());
    }
    Ok(Outcome::new(
        vec![
            csv(cfg, "stationary_atoms.csv", &["position", "weight"], atoms),
            csv(
                cfg,
                "stationary.csv",
                &["harmonic", "integral", "transported", "discrepancy"],
                rows,
            ),
        ],
        lines,
    ))
}

fn cmd_dp(
    cfg: &ExperimentConfig,
    env: &Environment,
    x: f64,
    n: u64,
    taboo: Option<i64>,
    chain: ChainArg,
) -> RunResult<Outcome> {
    let dist = match chain {
        ChainArg::Walk => distribution_at(env, x, n, taboo)?,
        ChainArg::TwoStep => squared_distribution_at(env, x, n, taboo, SquaredKernel::TwoStep)?,
        ChainArg::Frozen => squared_distribution_at(env, x, n, taboo, SquaredKernel::Frozen)?,
    };
    let rows = dist
        .iter()
        .filter(|&(_, m)| m > 0.0)
        .map(|(k, m)| vec![k.to_string(), num(m)])
        .collect();
    let lines = vec![format!(
        "lattice mass {}, absorbed {}, trimmed {}",
        num(dist.lattice_mass()),
        num(dist.absorbed()),
        num(dist.trimmed())
    )];
    Ok(Outcome::new(
        vec![csv(cfg, "dp.csv", &["site", "mass"], rows)],
        lines,
    ))
}

fn cmd_srlp(
    cfg: &ExperimentConfig,
    env: &Environment,
    x: f64,
    n: u64,
    window: u64,
) -> RunResult<Outcome> {
    let rep = srlp_check(env, x, n, window)?;
    let mut rows = Vec::new();
    for (i, &a) in rep.sites.iter().enumerate() {
        for (j, &b) in rep.sites.iter().enumerate() {
            rows.push(vec![
                a.to_string(),
                b.to_string(),
                num(rep.deviations[i][j]),
            ]);
        }
    }
    let lines = vec![format!(
        "max deviation {}, median {}",
        num(rep.max_deviation),
        num(rep.median_deviation())
    )];
    Ok(Outcome::new(
        vec![csv(cfg, "srlp.csv", &["a", "b", "deviation"], rows)],
        lines,
    ))
}

fn cmd_renewal(
    cfg: &ExperimentConfig,
    env: &Environment,
    x: f64,
    n: u64,
    sites: &[i64],
    kernel: KernelArg,
) -> RunResult<Outcome> {
    cap(n * sites.len() as u64, MAX_WINDOW, "n × sites")?;
    let rows = renewal_residuals(env, x, sites, n, kernel_of(kernel))?;
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let rows = rows
        .into_iter()
        .map(|r| {
            vec![
                r.site.to_string(),
                r.n.to_string(),
                num(r.direct),
                num(r.convolution),
                num(r.residual),
            ]
        })
        .collect();
    Ok(Outcome::new(
        vec![csv(
            cfg,
            "renewal.csv",
            &["site", "n", "direct", "convolution", "residual"],
            rows,
        )],
        vec![format!("max residual {}", num(worst))],
    ))
}

fn cmd_mix(
    cfg: &ExperimentConfig,
    env: &Environment,
    x1: f64,
    x2: f64,
    n: u64,
    harmonics: &[String],
) -> RunResult<Outcome> {
    let hs = parse_harmonics(harmonics)?;
    let rep = mixing_distance(env, x1, x2, n, &hs)?;
    let rows = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                n.to_string(),
                r.harmonic.to_string(),
                num(r.first),
                num(r.second),
                num(r.stationary),
                num(r.gap),
                num(r.first_to_stationary),
                num(r.second_to_stationary),
            ]
        })
        .collect();
    Ok(Outcome::new(
        vec![csv(
            cfg,
            "mix.csv",
            &[
                "n",
                "harmonic",
                "first",
                "second",
                "stationary",
                "gap",
                "first_to_stationary",
                "second_to_stationary",
            ],
            rows,
        )],
        vec![format!(
            "max gap {} (stationary estimate at q = {})",
            num(rep.max_gap()),
            rep.q
        )],
    ))
}

fn sim_config(cfg: &ExperimentConfig) -> RunResult<SimConfig> {
    let p = &cfg.params;
    let (paths, n) = (p.paths.unwrap(), p.n.unwrap());
    let cps = p.checkpoints.clone().unwrap();
    cap(paths.saturating_mul(n), MAX_MC_STEPS, "paths × horizon")?;
    cap(
        paths.saturating_mul(cps.len() as u64),
        MAX_MC_SUMMARIES,
        "paths × checkpoints",
    )?;
    Ok(SimConfig::new(cfg.seed, paths, n, cps)?)
}

fn proportion_row(checkpoint: u64, name: &str, p: &Proportion) -> Vec<String> {
    vec![
        checkpoint.to_string(),
        name.to_string(),
        num(p.estimate),
        num(p.lo),
        num(p.hi),
    ]
}

fn mean_row(checkpoint: u64, name: &str, m: &MeanEstimate) -> Vec<String> {
    let (lo, hi) = m.ci();
    vec![
        checkpoint.to_string(),
        name.to_string(),
        num(m.mean),
        num(lo),
        num(hi),
    ]
}

const MC_COLUMNS: [&str; 5] = ["checkpoint", "statistic", "estimate", "ci_lo", "ci_hi"];

fn cmd_mc(cfg: &ExperimentConfig, env: &Environment) -> RunResult<Outcome> {
    let sim_cfg = sim_config(cfg)?;
    let p = &cfg.params;
    let x = p.x.unwrap();
    let hs = parse_harmonics(p.harmonics.as_ref().unwrap())?;
    let deltas = p.deltas.clone().unwrap();
    let sim = simulate(env, x, &sim_cfg)?;
    let brownian = brownian_from(&sim, &deltas)?;
    let alpha = env.alpha();
    let mut rows = Vec::new();
    for ((c, moments), extremes) in moments_from(&sim)
        .iter()
        .enumerate()
        .zip(condition16_from(&sim))
    {
        let cp = moments.checkpoint;
        rows.push(mean_row(cp, "mean_site", &moments.site));
        rows.push(vec![
            cp.to_string(),
            "variance_per_step".into(),
            num(moments.variance_per_step),
            String::new(),
            String::new(),
        ]);
        rows.push(proportion_row(cp, "at_max", &extremes.p_max));
        rows.push(proportion_row(cp, "at_min", &extremes.p_min));
        for h in &hs {
            let values: Vec<f64> = sim
                .at(c)
                .map(|s| h.eval(x + s.site as f64 * alpha))
                .collect();
            rows.push(mean_row(
                cp,
                &format!("mean_{h}"),
                &MeanEstimate::from_samples(&values),
            ));
        }
    }
    let m = sim.paths.len() as u64;
    for r in &brownian.rows {
        let hits = (r.empirical * m as f64).round() as u64;
        rows.push(proportion_row(
            brownian.n,
            &format!("drawdown_le_{}", num(r.delta)),
            &Proportion::wilson(hits, m),
        ));
        rows.push(vec![
            brownian.n.to_string(),
            format!("gaussian_le_{}", num(r.delta)),
            num(r.gaussian),
            String::new(),
            String::new(),
        ]);
    }
    let lines = vec![
        format!("seed {}", cfg.seed),
        format!(
            "{} paths to n = {}, sigma_hat = {}",
            m,
            sim_cfg.horizon,
            num(brownian.sigma)
        ),
    ];
    Ok(Outcome::new(
        vec![csv(cfg, "mc.csv", &MC_COLUMNS, rows)],
        lines,
    ))
}

fn cmd_cond16(cfg: &ExperimentConfig, env: &Environment) -> RunResult<Outcome> {
    let sim_cfg = sim_config(cfg)?;
    let sim = simulate(env, cfg.params.x.unwrap(), &sim_cfg)?;
    let mut rows = Vec::new();
    let mut lines = vec![format!("seed {}", cfg.seed)];
    for r in condition16_from(&sim) {
        rows.push(proportion_row(r.checkpoint, "p_max", &r.p_max));
        rows.push(proportion_row(r.checkpoint, "p_min", &r.p_min));
        lines.push(format!(
            "n = {}: p_max {} [{}, {}], p_min {} [{}, {}]",
            r.checkpoint,
            num(r.p_max.estimate),
            num(r.p_max.lo),
            num(r.p_max.hi),
            num(r.p_min.estimate),
            num(r.p_min.lo),
            num(r.p_min.hi)
        ));
    }
    Ok(Outcome::new(
        vec![csv(cfg, "cond16.csv", &MC_COLUMNS, rows)],
        lines,
    ))
}

fn cmd_verify(cfg: &ExperimentConfig, env: &Environment) -> RunResult<Outcome> {
    let report = run_suite(env, cfg.seed);
    let lines = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} {}::{} value={} threshold={} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.module,
                c.name,
                num(c.value),
                num(c.threshold),
                c.detail
            )
        })
        .collect();
    let verified = report.passed();
    let artifact = json_artifact(
        cfg,
        "verify.json",
        serde_json::to_value(&report).expect("report serializes"),
    );
    Ok(Outcome {
        artifacts: vec![artifact],
        lines,
        verified,
    })
}

fn run_parsed(cli: &Cli) -> RunResult<(Vec<PathBuf>, Vec<String>, bool)> {
    let cfg = resolve(cli)?;
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure {
            code: EXIT_RESOURCE,
            message: format!("cannot start worker pool: {e}"),
        })?;
    let outcome = pool.install(|| execute(&cfg))?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let written = write_all(&dir, &outcome.artifacts).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("cannot write to {}: {e}", dir.display()),
    })?;
    Ok((written, outcome.lines, outcome.verified))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run_parsed(&cli) {
        Ok((written, lines, verified)) => {
            for l in lines {
                println!("{l}");
            }
            for w in written {
                println!("wrote {}", display_path(&w));
            }
            if verified {
                EXIT_OK
            } else {
                eprintln!("error: verification failed");
                EXIT_VERIFY
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn display_path(p: &Path) -> String {
    p.display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved(args: &[&str]) -> ExperimentConfig {
        resolve(&Cli::try_parse_from(args).unwrap()).unwrap()
    }

    #[test]
    fn defaults_and_flags() {
        let cfg = resolved(&[
            "qpwalk", "dp", "--n", "7", "--taboo", "-2", "--alpha", "silver",
        ]);
        assert_eq!(cfg.params.n, Some(7));
        assert_eq!(cfg.params.taboo, Some(-2));
        assert_eq!(cfg.params.chain, Some(ChainArg::Walk));
        assert!(matches!(cfg.environment.alpha, AlphaSpec::Float(_)));
        assert_eq!(cfg.seed, DEFAULT_SEED);
        let cfg = resolved(&[
            "qpwalk",
            "mc",
            "--n",
            "80",
            "--seed",
            "9",
            "--cos",
            "-0.5,-0.25",
        ]);
        assert_eq!(cfg.params.checkpoints, Some(vec![10, 20, 40, 80]));
        assert_eq!(cfg.environment.cos, vec![-0.5, -0.25]);
        assert_eq!(cfg.seed, 9);
        let cfg = resolved(&["qpwalk", "renewal", "--sites", "-1,2"]);
        assert_eq!(cfg.params.sites, Some(vec![-1, 2]));
    }

    #[test]
    fn irrelevant_flags_rejected() {
        assert!(Cli::try_parse_from(["qpwalk", "cf", "--paths", "3"]).is_err());
        assert!(Cli::try_parse_from(["qpwalk", "nope"]).is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(
            Failure::from(Error::ResourceCap("x".into())).code,
            EXIT_RESOURCE
        );
        assert_eq!(
            Failure::from(Error::HorizonExceeded {
                requested: 2,
                horizon: 1
            })
            .code,
            EXIT_RESOURCE
        );
        assert_eq!(Failure::from(Error::Config("x".into())).code, EXIT_USAGE);
    }
}
