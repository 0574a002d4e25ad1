use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use seqcal_core::error_model::{fit_error_model, ErrorModel};
use seqcal_core::formats::{
    self, kind, ControlRow, CvRecord, ErrorModelRecord, EstimateRow, GridRow, Header, LookRow, ScenarioRow,
};
use seqcal_core::likelihood::{GridSpec, OutcomeId};
use seqcal_core::maxsprt::{compute_calibrated_cv, compute_cv, BiasDraw, LookSchedule, MonteCarloConfig};
use seqcal_core::simharness::{
    confounding_demo, paper_scenarios, run_scenario, ConfoundingModel, Design, ErrorRateReport, Scale,
    SimulationScenario,
};
use seqcal_core::surveillance::{
    run_surveillance, type1_report, AnalysisMode, Calibration, CvPolicy, ProfileKind, SurveillanceConfig,
};
use seqcal_core::Error;

#[derive(Parser)]
#[command(name = "seqcal", version, about = "Sequential safety surveillance with empirical calibration")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Human-readable summary.
    Text,
    /// The documented comma-separated schema.
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum BiasDrawArg {
    PerReplicate,
    PerLook,
}

impl From<BiasDrawArg> for BiasDraw {
    fn from(b: BiasDrawArg) -> Self {
        match b {
            BiasDrawArg::PerReplicate => BiasDraw::PerReplicate,
            BiasDrawArg::PerLook => BiasDraw::PerLook,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Grid,
    Normal,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Stdout format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,

    /// Also write the machine-readable table to this file.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct McArgs {
    /// Monte Carlo replicates per critical value (at least 1000).
    #[arg(long)]
    replicates: Option<usize>,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// How the calibrated null draws the bias term within a replicate.
    #[arg(long, value_enum, default_value = "per-replicate")]
    bias_draw: BiasDrawArg,
}

impl McArgs {
    fn config(&self, default_replicates: usize) -> MonteCarloConfig {
        MonteCarloConfig::new(self.replicates.unwrap_or(default_replicates), self.seed)
            .with_bias_draw(self.bias_draw.into())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the systematic-error distribution to negative-control estimates.
    FitNull {
        /// Columns: outcome_id, log_rr, se_log_rr.
        #[arg(long)]
        estimates: PathBuf,
        /// Optional tabulated likelihoods: outcome_id, log_rr_grid_point, log_likelihood.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Critical value for a look schedule, optionally calibrated.
    ComputeCv {
        /// TOML with model, t, e_t, p (binomial), alpha.
        #[arg(long)]
        schedule: PathBuf,
        /// Output of `fit-null`.
        #[arg(long)]
        error_model: Option<PathBuf>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run surveillance over a looks file.
    Run {
        #[arg(long)]
        schedule: PathBuf,
        /// Columns: outcome_id, look, cumulative_observed[, cumulative_total].
        #[arg(long)]
        looks: PathBuf,
        /// Column: outcome_id.
        #[arg(long)]
        controls: Option<PathBuf>,
        /// Use this error model at every look instead of refitting.
        #[arg(long)]
        error_model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "grid")]
        profile: ProfileArg,
        /// Write the per-mode type 1 summary here.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Synthetic error-rate experiments.
    Simulate {
        /// Scenario name or `all`.
        #[arg(default_value = "all")]
        scenario: String,
        /// List the scenarios and exit.
        #[arg(long)]
        list: bool,
        /// Full scale: 100 repeats with 10^6 replicates (default 20 with 10^4).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Override every scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "per-replicate")]
        bias_draw: BiasDrawArg,
        /// Run the confounding demonstration instead.
        #[arg(long)]
        confounding: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
}

/// Input problems exit 2, numerical failures exit 3.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path, kind: &str) -> CliResult<Vec<T>> {
    let text = read_text(path)?;
    formats::read_table_str(&text, kind)
        .map(|(_, rows)| rows)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn read_schedule(path: &Path) -> CliResult<LookSchedule> {
    formats::parse_schedule(&read_text(path)?).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn read_error_model(path: &Path) -> CliResult<ErrorModel> {
    let rows: Vec<ErrorModelRecord> = read_rows(path, kind::ERROR_MODEL)?;
    match rows.as_slice() {
        [one] => {
            let model = ErrorModel::from(*one);
            model.validate().map_err(|e| input_error(format!("{}: {e}", path.display())))?;
            Ok(model)
        }
        _ => Err(input_error(format!("{}: expected exactly one error-model record", path.display()))),
    }
}

fn emit<T: serde::Serialize>(out: &OutputArgs, header: &Header, rows: &[T], text: impl FnOnce() -> String) -> CliResult<()> {
    if let Some(path) = &out.output {
        let file = File::create(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        formats::write_table(BufWriter::new(file), header, rows)?;
    }
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match out.format {
        Format::Csv => formats::write_table(&mut lock, header, rows)?,
        Format::Text => write!(lock, "{}", text())?,
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn fit_null(estimates: &Path, grid: Option<&Path>, out: &OutputArgs) -> CliResult<()> {
    let rows: Vec<EstimateRow> = read_rows(estimates, kind::ESTIMATES)?;
    let grid_rows: Vec<GridRow> = match grid {
        Some(p) => read_rows(p, kind::GRID)?,
        None => Vec::new(),
    };
    let profiles = formats::profiles_from_rows(&rows, &grid_rows)?;
    let model = fit_error_model(&profiles)?;
    if !model.converged {
        log::warn!("error model optimizer did not converge");
    }
    let record = ErrorModelRecord::from(model);
    emit(out, &Header::new(kind::ERROR_MODEL), &[record], || {
        format!(
            "mean = {:.6}\nsd = {:.6}\nn_controls = {}\nconverged = {}\n",
            record.mean, record.sd, record.n_controls, record.converged
        )
    })
}

fn compute_cv_cmd(schedule: &Path, error_model: Option<&Path>, mc: &McArgs, out: &OutputArgs) -> CliResult<()> {
    let schedule = read_schedule(schedule)?;
    let model = error_model.map(read_error_model).transpose()?;
    let config = mc.config(1_000_000);
    let result = match &model {
        Some(m) => compute_calibrated_cv(&schedule, std::slice::from_ref(m), &config)?,
        None => compute_cv(&schedule, &config)?,
    };
    let record = CvRecord::new(&result, &schedule, config.replicates, config.base_seed, model.as_ref());
    let header = Header::new(kind::CRITICAL_VALUE)
        .with("seed", config.base_seed)
        .with("replicates", config.replicates);
    emit(out, &header, std::slice::from_ref(&record), || {
        let mut s = format!(
            "cv = {:.6}\nattained_alpha = {:.6}\nalpha = {}\nreplicates = {}\nseed = {}\n",
            record.cv, record.attained_alpha, record.alpha, record.replicates, record.seed
        );
        if let Some(m) = &model {
            s.push_str(&format!("calibrated with mean = {:.6}, sd = {:.6}\n", m.mean, m.sd));
        }
        s
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cmd(
    schedule_path: &Path,
    looks_path: &Path,
    controls_path: Option<&Path>,
    error_model: Option<&Path>,
    profile: ProfileArg,
    summary: Option<&Path>,
    mc: &McArgs,
    out: &OutputArgs,
) -> CliResult<()> {
    let schedule = read_schedule(schedule_path)?;
    let look_rows: Vec<LookRow> = read_rows(looks_path, kind::LOOKS)?;
    let controls: BTreeSet<OutcomeId> = match controls_path {
        Some(p) => read_rows::<ControlRow>(p, kind::CONTROLS)?
            .into_iter()
            .map(|r| r.outcome_id)
            .collect(),
        None => BTreeSet::new(),
    };
    let known: BTreeSet<&OutcomeId> = look_rows.iter().map(|r| &r.outcome_id).collect();
    let missing: Vec<String> = controls
        .iter()
        .filter(|c| !known.contains(c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(input_error(format!(
            "negative controls absent from the looks file: {}",
            missing.join(", ")
        )));
    }
    let looks = formats::looks_from_rows(&look_rows, &schedule, &controls)?;

    let mut config = SurveillanceConfig::new(schedule, mc.config(100_000));
    config.profile = match profile {
        ProfileArg::Grid => ProfileKind::Grid(GridSpec::default()),
        ProfileArg::Normal => ProfileKind::NormalApprox,
    };
    config.cv_policy = CvPolicy::Always;
    if let Some(p) = error_model {
        config.calibration = Calibration::Fixed(read_error_model(p)?);
    }
    let replicates = config.mc.replicates;
    let result = run_surveillance(config, controls, looks)?;
    for d in result.diagnostics.iter().filter(|d| d.fallback) {
        log::warn!(
            "look {}: only {} informative controls, reused the previous error model",
            d.look,
            d.informative_controls
        );
    }
    let rows = formats::result_rows(&result);
    let report = type1_report(&result);
    let type1 = formats::type1_rows(&report);
    let header = |k: &str| Header::new(k).with("seed", mc.seed).with("replicates", replicates);
    if let Some(path) = summary {
        let file = File::create(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        formats::write_table(BufWriter::new(file), &header(kind::TYPE1), &type1)?;
    }
    emit(out, &header(kind::RESULTS), &rows, || {
        let mut s = String::new();
        for r in result.outcomes.values() {
            let first = |m: AnalysisMode| r.first_signal_look.get(m).map_or("-".to_string(), |t| t.to_string());
            let last = r.looks.last();
            s.push_str(&format!(
                "{}{}  llr={} p={} p_cal={}  first signal: unc/look={} unc/maxsprt={} cal/look={} cal/maxsprt={}\n",
                r.outcome_id,
                if r.is_negative_control { " (control)" } else { "" },
                fmt_opt(last.and_then(|l| l.llr)),
                fmt_opt(last.and_then(|l| l.p_uncalibrated)),
                fmt_opt(last.and_then(|l| l.p_calibrated)),
                first(AnalysisMode::UncalibratedPerLook),
                first(AnalysisMode::UncalibratedMaxSprt),
                first(AnalysisMode::CalibratedPerLook),
                first(AnalysisMode::CalibratedMaxSprt),
            ));
        }
        s.push_str(&format!("\ntype 1 over {} negative controls:\n", report.controls));
        for row in &type1 {
            s.push_str(&format!("  {:24} {}/{}  {}\n", row.mode.as_str(), row.signaled, row.controls, fmt_opt(row.rate)));
        }
        s
    })
}

fn scenario_rows(scenarios: &[SimulationScenario]) -> Vec<ScenarioRow> {
    scenarios
        .iter()
        .map(|s| ScenarioRow {
            name: s.name.clone(),
            design: match s.design {
                Design::HistoricalComparator => "historical-comparator".into(),
                Design::Sccs => "sccs".into(),
            },
            sample_size: s.sample_size,
            error_mean: s.true_error_mean,
            error_sd: s.true_error_sd,
            outcomes: s.n_outcomes(),
            looks: s.looks,
        })
        .collect()
}

fn summarize(report: &ErrorRateReport, name: &str) -> String {
    let mut s = format!("{name}\n");
    let effects: BTreeSet<u64> = report.rows.iter().map(|r| r.effect_size.to_bits()).collect();
    for mode in AnalysisMode::ALL {
        s.push_str(&format!("  {:24}", mode.as_str()));
        for e in &effects {
            let e = f64::from_bits(*e);
            let label = if e == 1.0 { "type1".to_string() } else { format!("type2@{e}") };
            s.push_str(&format!(" {label}={}", fmt_opt(report.mean(mode, e))));
        }
        s.push('\n');
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    scenario: &str,
    list: bool,
    full: bool,
    repeats: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    bias_draw: BiasDrawArg,
    confounding: bool,
    out: &OutputArgs,
) -> CliResult<()> {
    let scale = if full { Scale::Full } else { Scale::Desk };
    if confounding {
        let sizes = [10_000, 100_000, 1_000_000];
        let reps = repeats.unwrap_or(1);
        let seed = seed.unwrap_or(1);
        let mut rows = confounding_demo(&sizes, reps, ConfoundingModel::weak(), seed)?;
        let mut header = Header::new(kind::CONFOUNDING).with("seed", seed).with("repeats", reps);
        header = header.with("model", "weak");
        rows.extend(confounding_demo(&sizes, reps, ConfoundingModel::unconfounded(), seed)?);
        return emit(out, &header, &rows, || {
            let mut s = String::from("first block: weak confounding; second block: none\n");
            for r in &rows {
                s.push_str(&format!(
                    "n = {:>9}  RR = {:.4}  95% CI [{:.4}, {:.4}]\n",
                    r.sample_size, r.relative_risk, r.ci_lower, r.ci_upper
                ));
            }
            s
        });
    }

    let all = paper_scenarios();
    if list {
        let rows = scenario_rows(&all);
        return emit(out, &Header::new(kind::SCENARIOS), &rows, || {
            rows.iter().map(|r| format!("{}\n", r.name)).collect()
        });
    }
    let chosen: Vec<SimulationScenario> = if scenario == "all" {
        all
    } else {
        let found: Vec<_> = all.into_iter().filter(|s| s.name == scenario).collect();
        if found.is_empty() {
            return Err(input_error(format!("unknown scenario `{scenario}` (see `simulate --list`)")));
        }
        found
    };
    let chosen: Vec<SimulationScenario> = chosen
        .into_iter()
        .map(|s| {
            let mut s = s.with_scale(scale);
            if let Some(r) = repeats {
                s.repeats = r;
            }
            if let Some(r) = replicates {
                s.replicates = r;
            }
            if let Some(seed) = seed {
                s.base_seed = seed;
            }
            s.bias_draw = bias_draw.into();
            s
        })
        .collect();

    let mut rows = Vec::new();
    let mut text = String::new();
    for s in &chosen {
        log::info!("running {} ({} repeats, {} replicates)", s.name, s.repeats, s.replicates);
        let report = run_scenario(s)?;
        text.push_str(&summarize(&report, &s.name));
        rows.extend(report.rows);
    }
    let seeds: Vec<String> = chosen.iter().map(|s| s.base_seed.to_string()).collect();
    let header = Header::new(kind::ERROR_RATES)
        .with("seed", seeds.join(","))
        .with("replicates", chosen[0].replicates)
        .with("repeats", chosen[0].repeats);
    emit(out, &header, &rows, || text)
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input_error("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| input_error(e.to_string()))?;
    }
    match cli.command {
        Command::FitNull { estimates, grid, out } => fit_null(&estimates, grid.as_deref(), &out),
        Command::ComputeCv {
            schedule,
            error_model,
            mc,
            out,
        } => compute_cv_cmd(&schedule, error_model.as_deref(), &mc, &out),
        Command::Run {
            schedule,
            looks,
            controls,
            error_model,
            profile,
            summary,
            mc,
            out,
        } => run_cmd(
            &schedule,
            &looks,
            controls.as_deref(),
            error_model.as_deref(),
            profile,
            summary.as_deref(),
            &mc,
            &out,
        ),
        Command::Simulate {
            scenario,
            list,
            full,
            repeats,
            replicates,
            seed,
            bias_draw,
            confounding,
            out,
        } => simulate_cmd(&scenario, list, full, repeats, replicates, seed, bias_draw, confounding, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
