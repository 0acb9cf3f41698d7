//! `rwpe`: reproducible experiment runs on periodic environments.
//!
//! Every subcommand reads one environment file, performs one analysis or
//! simulation, and writes one report to stdout. The full configuration is
//! echoed into the report so a run can be reproduced from its own output.
//! Errors go to stderr as `error[CODE]: message` with exit status 2;
//! `theorem-check` exits 1 when the sign test fails.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rwpe::asymptotics::{AsymptoticsError, AsymptoticSummary};
use rwpe::environment::{
    make_counterexample, parse_environment_with, serialize_environment, Environment,
    EnvironmentError, ParseOptions,
};
use rwpe::induced_chain::{ChainError, InducedChain};
use rwpe::nalgebra::{DMatrix, DVector};
use rwpe::reversibility::{
    approximate_appropriate_direction, average_negative_gradient, check_reversible, potential,
    ReversibilityError, CYCLE_TOLERANCE,
};
use rwpe::simulator::{
    estimate_covariance, estimate_drift, exit_probability_1d_exact, exit_probability_1d_mc,
    hitting_probability, SimulatorError, DEFAULT_MAX_STEPS, GENERATOR_NAME,
};

#[derive(Parser)]
#[command(
    name = "rwpe",
    version,
    about = "Exact and Monte Carlo asymptotics for random walks in periodic environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an environment file and report what holds
    Validate(ValidateArgs),
    /// Exact drift, diffusion matrix, stationary law, and period
    Analyze(AnalyzeArgs),
    /// Kolmogorov cycle criterion on the plaquettes of the torus
    CheckReversible(CheckArgs),
    /// Potential on the closed cell and the average negative gradient
    Potential(PotentialArgs),
    /// Monte Carlo drift, optionally with the rescaled covariance
    Simulate(SimulateArgs),
    /// Slab-exit experiment along the rationalized gradient direction
    Hitting(HittingArgs),
    /// Interval exit probability: product formula against Monte Carlo
    Gamble(GambleArgs),
    /// Sign test of <g, nu> > 0 for a reversible environment
    TheoremCheck(TheoremArgs),
    /// Write the near-orthogonal planar example to a file
    Counterexample(CounterexampleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Plain lines for reading
    Human,
    /// One JSON document per run
    Structured,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Human => "human",
            Format::Structured => "structured",
        }
    }
}

#[derive(Args)]
struct EnvInput {
    /// Environment file (JSON: dims plus per-site jump laws)
    #[arg(long, value_name = "PATH")]
    env: PathBuf,
    /// Divide each site's probabilities by their sum instead of enforcing
    /// the sum tolerance
    #[arg(long)]
    renormalize: bool,
}

impl EnvInput {
    fn load(&self) -> Result<Environment, CliError> {
        let text = fs::read_to_string(&self.env).map_err(|e| CliError::io(&self.env, e))?;
        let opts = ParseOptions {
            renormalize: self.renormalize,
            ..ParseOptions::default()
        };
        Ok(parse_environment_with(&text, &opts)?)
    }

    fn echo(&self, format: Format) -> Value {
        json!({
            "env": self.env.display().to_string(),
            "renormalize": self.renormalize,
            "format": format.name(),
        })
    }
}

#[derive(Args)]
struct OutputOpts {
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
    /// Also print the transition matrix P and the fundamental matrix Z
    #[arg(long)]
    matrices: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Args)]
struct PotentialArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
    /// Also rationalize g into an integer direction with this denominator
    /// bound
    #[arg(long, value_name = "N")]
    max_denominator: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
    /// Base seed; replica r draws from stream r of this seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Steps per replica
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    #[arg(long, default_value_t = 100)]
    replicas: u64,
    /// Also estimate the covariance of X_n / sqrt(n) (needs >= 100 replicas)
    #[arg(long)]
    covariance: bool,
}

#[derive(Args)]
struct HittingArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    replicas: u64,
    /// Slab multiplier: the exit threshold is k <g1, g1>
    #[arg(long, default_value_t = 5)]
    k: i64,
    /// Denominator bound for the rational direction approximation
    #[arg(long, default_value_t = 1_000)]
    max_denominator: u64,
    /// Censor replicas still inside the slab after this many steps
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
}

#[derive(Args)]
struct GambleArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    replicas: u64,
    /// Absorb the walk at -K and +K
    #[arg(long, default_value_t = 5)]
    k: i64,
    /// Starting point, strictly between -K and K
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    start: i64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
}

#[derive(Args)]
struct TheoremArgs {
    #[command(flatten)]
    input: EnvInput,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Args)]
struct CounterexampleArgs {
    /// Conductance ratio K > 1 between the two vertical edges
    #[arg(long)]
    ratio: f64,
    /// Tilt parameter, in (0, 1/(K+1))
    #[arg(long)]
    epsilon: f64,
    /// Where to write the environment file
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    output: OutputOpts,
}

struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: "E_IO",
            message: format!("{}: {err}", path.display()),
        }
    }
}

macro_rules! error_from {
    ($ty:ty) => {
        impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                Self {
                    code: err.code(),
                    message: err.to_string(),
                }
            }
        }
    };
}

error_from!(EnvironmentError);
error_from!(ChainError);
error_from!(AsymptoticsError);
error_from!(ReversibilityError);
error_from!(SimulatorError);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            eprint!("error[E_USAGE]: {err}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {}", err.code, err.message);
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Validate(args) => run_validate(args),
        Command::Analyze(args) => run_analyze(args),
        Command::CheckReversible(args) => run_check_reversible(args),
        Command::Potential(args) => run_potential(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Hitting(args) => run_hitting(args),
        Command::Gamble(args) => run_gamble(args),
        Command::TheoremCheck(args) => run_theorem_check(args),
        Command::Counterexample(args) => run_counterexample(args),
    }
}

fn vec_value(v: &DVector<f64>) -> Value {
    Value::from(v.iter().cloned().collect::<Vec<f64>>())
}

fn mat_value(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    Value::from(rows)
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_mat(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let parts: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
            format!("[{}]", parts.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn angle_degrees(g: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    (g.dot(nu) / (g.norm() * nu.norm()))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

fn emit(doc: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(doc).expect("report serializes")
    );
}

fn print_config(config: &Value) {
    println!(
        "config: {}",
        serde_json::to_string(config).expect("config serializes")
    );
}

fn run_validate(args: ValidateArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let report = env.validate();
    let config = args.input.echo(format);
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "validate",
            "config": config,
            "dims": env.dims().extents(),
            "n_sites": env.n_sites(),
            "report": serde_json::to_value(&report).expect("report serializes"),
            "valid": report.is_valid(),
        })),
        Format::Human => {
            print_config(&config);
            println!(
                "dims = {:?}, sites = {}, d = {}",
                env.dims().extents(),
                env.n_sites(),
                env.d()
            );
            println!("finite support: {}", report.finite_support);
            println!("nearest neighbour: {}", report.nearest_neighbour);
            println!(
                "unit steps strictly positive: {}",
                report.unit_steps_strictly_positive
            );
            if report.sum_defects.is_empty() {
                println!("sum defects: none (tolerance {:e})", report.tolerance);
            } else {
                for defect in &report.sum_defects {
                    println!("sum defect at {:?}: sum = {}", defect.site, defect.sum);
                }
            }
            println!("valid: {}", report.is_valid());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_analyze(args: AnalyzeArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let chain = InducedChain::from_env(&env)?;
    let summary = AsymptoticSummary::compute(&env, &chain)?;
    let pi = chain.stationary();
    let mut config = args.input.echo(format);
    config["matrices"] = Value::from(args.matrices);
    match format {
        Format::Structured => {
            let mut doc = json!({
                "subcommand": "analyze",
                "config": config,
                "dims": env.dims().extents(),
                "period": chain.period(),
                "aperiodic_warning": summary.aperiodic_warning,
                "nu": vec_value(&summary.nu),
                "sigma": mat_value(&summary.sigma),
                "pi": Value::from(pi.iter().cloned().collect::<Vec<f64>>()),
            });
            if args.matrices {
                doc["p"] = mat_value(chain.transition_matrix());
                doc["z"] = mat_value(&summary.z);
            }
            emit(&doc);
        }
        Format::Human => {
            print_config(&config);
            println!(
                "dims = {:?}, sites = {}, period = {}",
                env.dims().extents(),
                env.n_sites(),
                chain.period()
            );
            if summary.aperiodic_warning {
                println!(
                    "warning: induced chain has period {}; stationary formulas remain valid",
                    chain.period()
                );
            }
            println!("nu = {}", fmt_vec(&summary.nu));
            println!("sigma = {}", fmt_mat(&summary.sigma));
            println!("pi = {}", fmt_vec(pi));
            if args.matrices {
                println!("p = {}", fmt_mat(chain.transition_matrix()));
                println!("z = {}", fmt_mat(&summary.z));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_check_reversible(args: CheckArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let check = check_reversible(&env)?;
    let config = args.input.echo(format);
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "check-reversible",
            "config": config,
            "reversible": check.reversible,
            "max_cycle_defect": check.max_cycle_defect,
            "tolerance": check.tolerance,
        })),
        Format::Human => {
            print_config(&config);
            println!("reversible: {}", check.reversible);
            println!(
                "max cycle defect = {:e} (tolerance {:e})",
                check.max_cycle_defect, check.tolerance
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_potential(args: PotentialArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let field = potential(&env)?;
    let direction = match args.max_denominator {
        Some(bound) => Some(approximate_appropriate_direction(
            field.g.as_slice(),
            bound,
            env.dims(),
        )?),
        None => None,
    };
    let mut config = args.input.echo(format);
    config["max_denominator"] = match args.max_denominator {
        Some(bound) => Value::from(bound),
        None => Value::Null,
    };
    match format {
        Format::Structured => {
            let u: Vec<Value> = field
                .u
                .iter()
                .map(|(coord, value)| json!({ "coord": coord, "u": value }))
                .collect();
            emit(&json!({
                "subcommand": "potential",
                "config": config,
                "reversible": true,
                "max_cycle_defect": field.max_cycle_defect,
                "g": vec_value(&field.g),
                "u": u,
                "direction": direction
                    .map(|dir| serde_json::to_value(&dir).expect("direction serializes"))
                    .unwrap_or(Value::Null),
            }));
        }
        Format::Human => {
            print_config(&config);
            println!(
                "reversible: true (max cycle defect {:e})",
                field.max_cycle_defect
            );
            println!("g = {}", fmt_vec(&field.g));
            println!("u on the closed cell (u(0) = 0):");
            for (coord, value) in &field.u {
                println!("  {coord:?}  {value}");
            }
            if let Some(dir) = direction {
                let rationals: Vec<String> =
                    dir.g_rational.iter().map(|r| r.to_string()).collect();
                println!(
                    "direction: g_rational = [{}], g1 = {:?}, angle error = {:e} rad",
                    rationals.join(", "),
                    dir.g1,
                    dir.angle_error
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let stats = if args.covariance {
        estimate_covariance(&env, args.steps, args.replicas, args.seed)?
    } else {
        estimate_drift(&env, args.steps, args.replicas, args.seed)?
    };
    let mut config = args.input.echo(format);
    config["seed"] = Value::from(args.seed);
    config["steps"] = Value::from(args.steps);
    config["replicas"] = Value::from(args.replicas);
    config["covariance"] = Value::from(args.covariance);
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "simulate",
            "config": config,
            "stats": serde_json::to_value(&stats).expect("stats serialize"),
        })),
        Format::Human => {
            print_config(&config);
            println!(
                "generator = {}, seed = {}, replicas = {}, steps = {}",
                stats.generator, stats.seed, stats.replicas, stats.n_steps
            );
            for i in 0..stats.nu_hat.len() {
                println!(
                    "nu_hat[{i}] = {} +- {}",
                    stats.nu_hat[i], stats.nu_stderr[i]
                );
            }
            if let Some(sigma) = &stats.sigma_hat {
                for (i, row) in sigma.iter().enumerate() {
                    println!("sigma_hat[{i}] = {row:?}");
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_hitting(args: HittingArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let g = average_negative_gradient(&env)?;
    let direction = approximate_appropriate_direction(g.as_slice(), args.max_denominator, env.dims())?;
    let estimate = hitting_probability(
        &env,
        &direction.g1,
        args.k,
        args.replicas,
        args.seed,
        args.max_steps,
    )?;
    let mut config = args.input.echo(format);
    config["seed"] = Value::from(args.seed);
    config["replicas"] = Value::from(args.replicas);
    config["k"] = Value::from(args.k);
    config["max_denominator"] = Value::from(args.max_denominator);
    config["max_steps"] = Value::from(args.max_steps);
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "hitting",
            "config": config,
            "generator": GENERATOR_NAME,
            "g": vec_value(&g),
            "direction": serde_json::to_value(&direction).expect("direction serializes"),
            "estimate": serde_json::to_value(&estimate).expect("estimate serializes"),
        })),
        Format::Human => {
            print_config(&config);
            println!("g = {}", fmt_vec(&g));
            println!(
                "g1 = {:?} (angle error {:e} rad)",
                direction.g1, direction.angle_error
            );
            println!("threshold = {} (k = {})", estimate.threshold, args.k);
            println!(
                "p_negative = {} +- {} (negative {}, positive {}, censored {})",
                estimate.p_negative,
                estimate.stderr,
                estimate.n_negative,
                estimate.n_positive,
                estimate.n_censored
            );
            println!("generator = {GENERATOR_NAME}, seed = {}", args.seed);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gamble(args: GambleArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let exact = exit_probability_1d_exact(&env, args.k, args.start)?;
    let mc = exit_probability_1d_mc(
        &env,
        args.k,
        args.start,
        args.replicas,
        args.seed,
        args.max_steps,
    )?;
    let gap = (mc.p_upper - exact).abs();
    let gap_in_stderr = gap / mc.stderr;
    let mut config = args.input.echo(format);
    config["seed"] = Value::from(args.seed);
    config["replicas"] = Value::from(args.replicas);
    config["k"] = Value::from(args.k);
    config["start"] = Value::from(args.start);
    config["max_steps"] = Value::from(args.max_steps);
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "gamble",
            "config": config,
            "generator": GENERATOR_NAME,
            "exact_p_upper": exact,
            "estimate": serde_json::to_value(&mc).expect("estimate serializes"),
            "abs_difference": gap,
            "difference_in_stderr": gap_in_stderr,
        })),
        Format::Human => {
            print_config(&config);
            println!("exact P(hit +{} before -{}) = {exact}", args.k, args.k);
            println!(
                "monte carlo = {} +- {} (upper {}, lower {}, censored {})",
                mc.p_upper, mc.stderr, mc.n_upper, mc.n_lower, mc.n_censored
            );
            println!("|difference| = {gap:e} ({gap_in_stderr:.2} stderr)");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_theorem_check(args: TheoremArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = args.input.load()?;
    let check = check_reversible(&env)?;
    if !check.reversible {
        return Err(CliError {
            code: "E_NOT_REVERSIBLE",
            message: format!(
                "max cycle defect {:e} exceeds tolerance {CYCLE_TOLERANCE:e}; the hypothesis fails",
                check.max_cycle_defect
            ),
        });
    }
    let g = average_negative_gradient(&env)?;
    let config = args.input.echo(format);

    // same zero test as the direction approximation: sup-norm at 1e-12
    if g.amax() <= 1e-12 {
        match format {
            Format::Structured => emit(&json!({
                "subcommand": "theorem-check",
                "config": config,
                "reversible": true,
                "max_cycle_defect": check.max_cycle_defect,
                "g": vec_value(&g),
                "vacuous": true,
                "holds": true,
            })),
            Format::Human => {
                print_config(&config);
                println!("gradient zero; theorem vacuous");
            }
        }
        return Ok(ExitCode::SUCCESS);
    }

    let chain = InducedChain::from_env(&env)?;
    let nu = rwpe::asymptotics::drift(&env, &chain)?;
    let dot = g.dot(&nu);
    let angle = angle_degrees(&g, &nu);
    let holds = dot > 0.0;
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "theorem-check",
            "config": config,
            "reversible": true,
            "max_cycle_defect": check.max_cycle_defect,
            "g": vec_value(&g),
            "nu": vec_value(&nu),
            "dot": dot,
            "angle_degrees": angle,
            "vacuous": false,
            "holds": holds,
        })),
        Format::Human => {
            print_config(&config);
            println!(
                "reversible: true (max cycle defect {:e})",
                check.max_cycle_defect
            );
            println!("g = {}", fmt_vec(&g));
            println!("nu = {}", fmt_vec(&nu));
            println!("<g, nu> = {dot}");
            println!("angle(g, nu) = {angle:.6} degrees");
            println!(
                "{}",
                if holds {
                    "theorem holds: <g, nu> > 0"
                } else {
                    "sign test FAILED: <g, nu> <= 0"
                }
            );
        }
    }
    Ok(if holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run_counterexample(args: CounterexampleArgs) -> Result<ExitCode, CliError> {
    let format = args.output.format;
    let env = make_counterexample(args.ratio, args.epsilon)?;
    fs::write(&args.out, serialize_environment(&env)).map_err(|e| CliError::io(&args.out, e))?;
    let chain = InducedChain::from_env(&env)?;
    let nu = rwpe::asymptotics::drift(&env, &chain)?;
    let g = average_negative_gradient(&env)?;
    let dot = g.dot(&nu);
    let angle = angle_degrees(&g, &nu);
    let config = json!({
        "ratio": args.ratio,
        "epsilon": args.epsilon,
        "out": args.out.display().to_string(),
        "format": format.name(),
    });
    match format {
        Format::Structured => emit(&json!({
            "subcommand": "counterexample",
            "config": config,
            "path": args.out.display().to_string(),
            "g": vec_value(&g),
            "nu": vec_value(&nu),
            "dot": dot,
            "angle_degrees": angle,
        })),
        Format::Human => {
            print_config(&config);
            println!("wrote environment to {}", args.out.display());
            println!("g = {}", fmt_vec(&g));
            println!("nu = {}", fmt_vec(&nu));
            println!("<g, nu> = {dot}");
            println!("angle(g, nu) = {angle:.6} degrees");
        }
    }
    Ok(ExitCode::SUCCESS)
}
