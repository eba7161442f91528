use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use stackgrid::analytic::{
    check_perfect_se, check_prediction, perfect_se, prediction_cost, prediction_nash,
    prediction_price_rule, prediction_tilde, renewable_only_se, table2_sweep, ConditionReport,
    PredictionSetting, Table2Params,
};
use stackgrid::followers::{verify_strict_ne, ResponseMode, StrictNeConfig};
use stackgrid::gamecore::{tilde_transform, Diagnostics, ReportFlags};
use stackgrid::leader::{price_search, PriceInit, PriceSearchConfig};
use stackgrid::synth::{synth_scenario, table2_scenario_for, SynthKind, TABLE2, TABLE2_SLOTS};
use stackgrid::{EquilibriumReport, FlexUserSet, GameError, IterationFailure, Method, Scenario};

use crate::error::{CliError, CliResult, EXIT_CONDITION, EXIT_OK};
use crate::files::{load_scenario, load_users, scenario_csv, write_atomic, Loaded};
use crate::report::{verify, InputRef, Inputs, Parameters, ReportFile, TOOL, VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "stackgrid",
    version,
    about = "Stackelberg pricing equilibria for flexible demand"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the closed-form feasibility conditions.
    Check(CheckArgs),
    /// Compute a Stackelberg equilibrium and write a report.
    Solve(SolveArgs),
    /// Equilibrium and leader cost under a forecast of the mean residual load.
    Predict(PredictArgs),
    /// Forecast cost for several slot counts.
    Table2(Table2Args),
    /// Write a seeded synthetic scenario.
    Synth(SynthArgs),
    /// Recompute a report from its embedded inputs.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Scenario CSV (`t,w,r`).
    pub scenario: PathBuf,
    /// Users CSV (`i,g,nu_max`).
    pub users: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Also check the condition for a forecast `b` of mean(r - w).
    #[arg(long, allow_hyphen_values = true)]
    pub prediction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMode {
    Auto,
    Analytic,
    Numeric,
}

impl SolveMode {
    fn name(self) -> &'static str {
        match self {
            SolveMode::Auto => "auto",
            SolveMode::Analytic => "analytic",
            SolveMode::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, value_enum, default_value_t = SolveMode::Auto)]
    pub mode: SolveMode,
    /// Price-search tolerance on aggregate demand [default: 1e-3 g_N / T].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial price-search step [default: eps].
    #[arg(long)]
    pub eps_step: Option<f64>,
    /// Start the price search from random sequences.
    #[arg(long)]
    pub random_init: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer price-search iterations.
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Report JSON; a plotting CSV is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Forecast `b` of mean(r - w).
    #[arg(long, allow_hyphen_values = true)]
    pub prediction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Table2Args {
    /// Slot counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = TABLE2_SLOTS.to_vec())]
    pub slots: Vec<usize>,
    #[arg(long, default_value_t = TABLE2.daily_w_total)]
    pub w_total: f64,
    #[arg(long, default_value_t = TABLE2.daily_r_total)]
    pub r_total: f64,
    #[arg(long, default_value_t = TABLE2.predicted_w)]
    pub w_forecast: f64,
    #[arg(long, default_value_t = TABLE2.predicted_r)]
    pub r_forecast: f64,
    #[arg(long, default_value_t = TABLE2.g_n)]
    pub gn: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Sinusoid,
    TwoPeak,
}

impl From<Kind> for SynthKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Sinusoid => SynthKind::Sinusoid,
            Kind::TwoPeak => SynthKind::TwoPeak,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Kind::TwoPeak)]
    pub kind: Kind,
    #[arg(long, default_value_t = 24)]
    pub slots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = TABLE2.daily_w_total)]
    pub w_total: f64,
    #[arg(long, default_value_t = TABLE2.daily_r_total)]
    pub r_total: f64,
    /// Scenario CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub report: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Check(a) => check(&a),
        Command::Solve(a) => solve(&a),
        Command::Predict(a) => predict(&a),
        Command::Table2(a) => table2(&a),
        Command::Synth(a) => synth(&a),
        Command::Verify(a) => verify_cmd(&a),
    }
}

fn load(inputs: &InputArgs) -> CliResult<(Loaded<Scenario>, Loaded<FlexUserSet>)> {
    let scenario = load_scenario(&inputs.scenario)?;
    let users = load_users(&inputs.users, scenario.value.slots())?;
    Ok((scenario, users))
}

fn slot_list(slots: &[usize]) -> String {
    let parts: Vec<String> = slots.iter().map(usize::to_string).collect();
    parts.join(",")
}

fn render_condition(out: &mut String, name: &str, c: &ConditionReport) {
    let verdict = if c.satisfied { "holds" } else { "violated" };
    let _ = writeln!(out, "{name}: {verdict} (bound {:.6e})", c.bound);
    let min_lower = c
        .lower_margins
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let min_upper = c
        .upper_margins
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let _ = writeln!(out, "  min lower margin {min_lower:.6e}");
    let _ = writeln!(out, "  min upper margin {min_upper:.6e}");
    if !c.violated_slots.is_empty() {
        let _ = writeln!(out, "  violated slots {}", slot_list(&c.violated_slots));
    }
    if !c.binding_slots.is_empty() {
        let _ = writeln!(out, "  binding slots {}", slot_list(&c.binding_slots));
    }
}

pub fn check(args: &CheckArgs) -> CliResult<i32> {
    let (scenario, users) = load(&args.inputs)?;
    let (s, u) = (&scenario.value, &users.value);
    let mut out = String::new();
    let perfect = check_perfect_se(s, u);
    render_condition(&mut out, "perfect-SE condition", &perfect);
    let renewable = match renewable_only_se(s, u) {
        Ok(_) => "holds".to_string(),
        Err(e) => format!("does not hold ({e})"),
    };
    let _ = writeln!(out, "renewable-only equilibrium: {renewable}");
    let mut ok = perfect.satisfied;
    if let Some(b) = args.prediction {
        let setting = PredictionSetting::new(b);
        let denominator = setting.denominator(s, u);
        if denominator > 0.0 {
            let c = check_prediction(s, u, setting);
            render_condition(&mut out, "prediction condition", &c);
            ok &= c.satisfied;
        } else {
            let _ = writeln!(
                out,
                "prediction condition: undefined, g_N + T delta = {denominator:.6e} is not positive"
            );
            ok = false;
        }
    }
    print!("{out}");
    Ok(if ok { EXIT_OK } else { EXIT_CONDITION })
}

fn inputs(scenario: &Loaded<Scenario>, users: &Loaded<FlexUserSet>) -> Inputs {
    Inputs {
        scenario_file: InputRef {
            path: scenario.path.clone(),
            sha256: scenario.sha256.clone(),
        },
        users_file: InputRef {
            path: users.path.clone(),
            sha256: users.sha256.clone(),
        },
        scenario: scenario.value.clone(),
        users: users.value.clone(),
    }
}

fn write_report(report: &ReportFile, out: Option<&Path>) -> CliResult<()> {
    if let Some(path) = out {
        let csv = report.write(path)?;
        println!("report {}", path.display());
        println!("series {}", csv.display());
    }
    Ok(())
}

fn dump_failure(failure: &IterationFailure, out: Option<&Path>) -> CliResult<()> {
    let trace = match failure {
        IterationFailure::PriceSearch { trace, .. } => serde_json::to_string_pretty(trace),
        IterationFailure::BestResponse { trace, .. } => serde_json::to_string_pretty(trace),
    }
    .map_err(|e| CliError::Solver(format!("cannot serialise trace: {e}")))?;
    match out {
        Some(path) => {
            let path = path.with_extension("trace.json");
            write_atomic(&path, trace.as_bytes())?;
            eprintln!("trace written to {}", path.display());
        }
        None => eprintln!("{trace}"),
    }
    Ok(())
}

pub fn solve(args: &SolveArgs) -> CliResult<i32> {
    let (scenario, users) = load(&args.inputs)?;
    let (s, u) = (&scenario.value, &users.value);
    let condition = check_perfect_se(s, u);
    let analytic = match args.mode {
        SolveMode::Analytic => true,
        SolveMode::Numeric => false,
        SolveMode::Auto => condition.satisfied,
    };
    let eps = args
        .eps
        .unwrap_or_else(|| PriceSearchConfig::default_tol(u, s.slots()));
    let mut parameters = Parameters {
        mode: Some(args.mode.name().into()),
        ..Parameters::default()
    };

    let (rule, equilibrium, target, trace) = if analytic {
        let se = perfect_se(s, u)?;
        (se.rule, se.report, None, None)
    } else {
        let mut config = PriceSearchConfig::new(eps);
        config.step = args.eps_step;
        config.max_outer = args.max_iter;
        if args.random_init {
            config.init = PriceInit::Random { seed: args.seed };
        }
        parameters.eps = Some(eps);
        parameters.eps_step = Some(args.eps_step.unwrap_or(eps));
        parameters.max_iter = Some(args.max_iter);
        parameters.random_init = Some(args.random_init);
        parameters.seed = Some(args.seed);
        let outcome = match price_search(s, u, &config) {
            Ok(o) => o,
            Err(GameError::MaxIterExceeded(failure)) => {
                dump_failure(&failure, args.out.as_deref())?;
                return Err(CliError::Solver(format!(
                    "price search stopped after {} iterations with error {:e} (tolerance {eps:e})",
                    failure.iterations(),
                    failure.final_residual()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        (
            outcome.rule,
            outcome.report,
            Some(outcome.target),
            Some(outcome.trace),
        )
    };

    let tilde = tilde_transform(s, &rule)?;
    let method = match equilibrium.flags.method {
        Method::Analytic => "analytic",
        Method::Numeric => "numeric",
    };
    println!("method {method}");
    println!("leader_cost {:e}", equilibrium.leader_cost);
    println!("iterations {}", equilibrium.diagnostics.iterations);
    if let Some(t) = &target {
        println!("target_cost {:e}", t.cost);
        println!("final_error {:e}", equilibrium.diagnostics.final_residual);
    }
    println!("strict_ne {}", equilibrium.flags.strict_ne_checked);

    let report = ReportFile {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: "solve".into(),
        inputs: inputs(&scenario, &users),
        parameters,
        rule,
        w_tilde: tilde.w().to_vec(),
        r_tilde: tilde.r().to_vec(),
        condition,
        equilibrium,
        target,
        trace,
        prediction: None,
    };
    write_report(&report, args.out.as_deref())?;
    Ok(EXIT_OK)
}

pub fn predict(args: &PredictArgs) -> CliResult<i32> {
    let (scenario, users) = load(&args.inputs)?;
    let (s, u) = (&scenario.value, &users.value);
    let setting = PredictionSetting::new(args.prediction);
    let denominator = setting.denominator(s, u);
    println!("delta {:e}", setting.delta(s));
    println!("denominator {denominator:e}");
    if !(denominator > 0.0) {
        eprintln!("refusing to evaluate: g_N + T delta = {denominator:e} is not positive");
        return Ok(EXIT_CONDITION);
    }
    let condition = check_prediction(s, u, setting);
    if !condition.satisfied {
        let mut out = String::new();
        render_condition(&mut out, "prediction condition", &condition);
        eprint!("{out}");
        return Ok(EXIT_CONDITION);
    }
    let cost = prediction_cost(s, u, setting)?;
    let demand = prediction_nash(s, u, setting)?;
    let rule = prediction_price_rule(s, u, setting)?;
    let (w_tilde, r_tilde) = prediction_tilde(s, u, setting);
    let tilde = tilde_transform(s, &rule)?;
    let strict = verify_strict_ne(
        &demand,
        &tilde,
        u,
        &StrictNeConfig {
            mode: ResponseMode::Box,
            ..StrictNeConfig::default()
        },
    );
    let equilibrium = EquilibriumReport::assemble(
        s,
        &rule,
        demand,
        ReportFlags {
            condition_satisfied: check_perfect_se(s, u).satisfied,
            strict_ne_checked: strict.passed,
            method: Method::Analytic,
        },
        Diagnostics::default(),
    )?;
    println!("prefactor {}", cost.prefactor);
    println!("net_variance {:e}", cost.net_variance);
    println!("leader_cost_formula {:e}", cost.formula);
    println!("leader_cost_simulated {:e}", cost.simulated);
    println!("strict_ne {}", strict.passed);

    let report = ReportFile {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: "predict".into(),
        inputs: inputs(&scenario, &users),
        parameters: Parameters {
            prediction: Some(args.prediction),
            ..Parameters::default()
        },
        rule,
        w_tilde,
        r_tilde,
        condition,
        equilibrium,
        target: None,
        trace: None,
        prediction: Some(cost),
    };
    write_report(&report, args.out.as_deref())?;
    Ok(EXIT_OK)
}

pub fn table2(args: &Table2Args) -> CliResult<i32> {
    if args.slots.is_empty() {
        return Err(CliError::Input(
            "--slots needs at least one slot count".into(),
        ));
    }
    if let Some(bad) = args.slots.iter().find(|&&t| t < 2) {
        return Err(CliError::Input(format!("slot count {bad} is below 2")));
    }
    let params = Table2Params {
        daily_w_total: args.w_total,
        daily_r_total: args.r_total,
        predicted_w: args.w_forecast,
        predicted_r: args.r_forecast,
        g_n: args.gn,
    };
    let seed = args.seed;
    let rows = table2_sweep(
        &params,
        |t| table2_scenario_for(&params, t, seed),
        &args.slots,
    )?;

    let mut csv = String::from("T,delta,var,cost,ratio\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.slots, row.delta, row.net_variance, row.cost, row.ratio
        );
    }
    let mut table = String::new();
    let _ = writeln!(table, "T delta = {}", params.t_delta());
    let _ = writeln!(
        table,
        "{:>6} {:>12} {:>12} {:>12} {:>10}",
        "T", "delta", "Var(w-r)", "cost", "ratio"
    );
    for row in &rows {
        let _ = writeln!(
            table,
            "{:>6} {:>12.6} {:>12.6} {:>12.6} {:>10.6}",
            row.slots, row.delta, row.net_variance, row.cost, row.ratio
        );
    }
    print!("{table}");
    if let Some(path) = &args.out {
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(EXIT_OK)
}

pub fn synth(args: &SynthArgs) -> CliResult<i32> {
    let scenario = synth_scenario(
        args.kind.into(),
        args.slots,
        args.seed,
        args.w_total,
        args.r_total,
    )
    .map_err(|e| CliError::Input(e.to_string()))?;
    let kind = match args.kind {
        Kind::Sinusoid => "sinusoid",
        Kind::TwoPeak => "two-peak",
    };
    let text = scenario_csv(
        &scenario,
        &[
            ("kind", kind.into()),
            ("seed", args.seed.to_string()),
            ("slot_hours", scenario.slot_hours().to_string()),
            ("w_total", args.w_total.to_string()),
            ("r_total", args.r_total.to_string()),
        ],
    );
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn verify_cmd(args: &VerifyArgs) -> CliResult<i32> {
    let report = ReportFile::from_path(&args.report)?;
    let v = verify(&report)?;
    for path in &v.stale_inputs {
        eprintln!(
            "warning: {} changed since the report was written",
            path.display()
        );
    }
    println!("leader_cost {:e}", v.leader_cost);
    println!("max_price_error {:e}", v.max_price_error);
    println!("max_user_cost_error {:e}", v.max_user_cost_error);
    println!(
        "max_stationarity {:e} (limit {:e})",
        v.max_stationarity, v.stationarity_limit
    );
    println!("verified");
    Ok(EXIT_OK)
}
