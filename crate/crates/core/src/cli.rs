//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 usage, 2 input error, 3 internal invariant
//! violation; `run` additionally returns 4 when the program hard-faults and
//! 5 when it exhausts its budget. Failures print a human-readable message
//! followed by one JSON line on stderr.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::asm::{self, SymbolTable};
use crate::campaign::{Campaign, CampaignReport, Target};
use crate::failsafe::{Scenario, ScenarioId, ScenarioInputs, ScenarioManifest, SHIPPED_MANIFEST};
use crate::faults::{parse_models, FaultModel};
use crate::glitch::{run_glitch_campaign, GlitchConfig, GlitchReport, GlitchTarget};
use crate::isa::{self, MemoryImage, MemoryLayout, Termination};
use crate::report::{InputHasher, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;
pub const EXIT_HARDFAULT: i32 = 4;
pub const EXIT_HANG: i32 = 5;

pub const OUT_ENV: &str = "FISIM_OUT";
const DEFAULT_OUT: &str = "fisim-out";
const DEFAULT_RUN_BUDGET: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "fisim", version, about = "Fault-injection simulator for the MiniISA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a source file into a flat binary and a symbol file.
    Assemble {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        symbols: Option<PathBuf>,
    },
    /// Disassemble a flat binary.
    Disasm {
        input: PathBuf,
        #[arg(long)]
        symbols: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a flat binary fault-free.
    Run(RunArgs),
    /// Exhaustive single-fault campaign over a scenario window.
    Campaign(CampaignArgs),
    /// Emulated glitch sweep over offsets and widths.
    Glitch(GlitchArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub input: PathBuf,
    /// Symbol file; defaults to the input path with a `.sym` extension.
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// Entry label or address.
    #[arg(long, default_value = "0")]
    pub entry: String,
    #[arg(long, default_value_t = DEFAULT_RUN_BUDGET)]
    pub budget: u64,
    /// Write the per-cycle trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also print the four output words at this address.
    #[arg(long)]
    pub output_base: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: String,
    /// Scenario manifest; the shipped one is used when absent.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Cycle budget of faulted runs; defaults to 16x the fault-free length.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// `all` or a comma-separated list such as `instr_skip,reg_clear`.
    #[arg(long, default_value = "all")]
    pub models: String,
    #[arg(long)]
    pub start_symbol: Option<String>,
    #[arg(long)]
    pub halt_symbol: Option<String>,
}

#[derive(Debug, Args)]
pub struct GlitchArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// Offsets in glitch-clock cycles: `a..b` (inclusive) and/or a list.
    #[arg(long)]
    pub offsets: String,
    /// Widths in glitch-clock cycles, same syntax as offsets.
    #[arg(long)]
    pub widths: String,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    /// Glitch configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fault models of the exhaustive campaign used for the correlation table.
    #[arg(long, default_value = "all")]
    pub models: String,
    #[arg(long)]
    pub start_symbol: Option<String>,
    #[arg(long)]
    pub halt_symbol: Option<String>,
}

/// A failed command.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn input(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_INPUT,
            kind: "input",
            message: message.to_string(),
        }
    }

    fn internal(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            kind: "internal",
            message: message.to_string(),
        }
    }

    fn usage(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.to_string(),
        }
    }

    pub fn json_line(&self) -> String {
        serde_json::json!({"error": {"kind": self.kind, "code": self.code, "message": self.message}}).to_string()
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Parses a number in decimal or `0x` hex.
pub fn parse_number(text: &str) -> Option<u64> {
    let t = text.trim().replace('_', "");
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => t.parse().ok(),
    }
}

/// Parses `a..b` (inclusive), `a..=b` and comma lists, e.g. `0..3,8`.
/// Duplicates are dropped and the result is sorted.
pub fn parse_list(text: &str) -> Result<Vec<u32>, String> {
    let mut out = BTreeSet::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            parse_number(s)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| format!("bad number `{s}` in `{text}`"))
        };
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.insert(num(part)?);
        }
    }
    if out.is_empty() {
        return Err(format!("empty list `{text}`"));
    }
    Ok(out.into_iter().collect())
}

fn default_symbols_path(input: &Path) -> PathBuf {
    input.with_extension("sym")
}

fn load_symbols(path: Option<&Path>, input: &Path, required: bool) -> CliResult<SymbolTable> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => {
            let p = default_symbols_path(input);
            if !p.exists() && !required {
                return Ok(SymbolTable::new());
            }
            p
        }
    };
    SymbolTable::parse_symbol_file(&read_text(&path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn cmd_assemble(input: &Path, output: &Path, symbols: Option<&Path>) -> CliResult<()> {
    let source = read_text(input)?;
    let (image, table) = asm::assemble(&source).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
    write_file(output, image.to_flat())?;
    let sym_path = symbols.map_or_else(|| default_symbols_path(output), Path::to_path_buf);
    write_file(&sym_path, table.to_symbol_file())?;
    println!(
        "assembled {} code words, {} data words, {} symbols",
        image.code.len() / 4,
        image.data.len() / 4,
        table.len()
    );
    Ok(())
}

fn load_image(input: &Path) -> CliResult<MemoryImage> {
    let bytes = read_bytes(input)?;
    MemoryImage::from_flat(&bytes, &MemoryLayout::default())
        .map_err(|e| CliError::input(format!("{}: {e}", input.display())))
}

fn cmd_disasm(input: &Path, symbols: Option<&Path>, output: Option<&Path>) -> CliResult<()> {
    let image = load_image(input)?;
    let table = load_symbols(symbols, input, symbols.is_some())?;
    let text = asm::disassemble(&image, &table);
    match output {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: &RunArgs) -> CliResult<i32> {
    let image = load_image(&args.input)?;
    let numeric = |s: &str| parse_number(s).and_then(|v| u32::try_from(v).ok());
    let needs_symbols = numeric(&args.entry).is_none();
    let table = load_symbols(args.symbols.as_deref(), &args.input, needs_symbols)?;
    let resolve = |s: &str| {
        numeric(s)
            .or_else(|| table.get(s))
            .ok_or_else(|| CliError::input(format!("unknown symbol `{s}`")))
    };
    let entry = resolve(&args.entry)?;
    if args.budget == 0 {
        return Err(CliError::usage("--budget must be > 0"));
    }
    let result = isa::run(
        &image,
        MemoryLayout::default(),
        entry,
        args.budget,
        args.trace.is_some(),
    )
    .map_err(CliError::input)?;
    if let (Some(path), Some(trace)) = (&args.trace, &result.trace) {
        let mut buf = Vec::new();
        isa::write_trace_csv(&mut buf, trace).map_err(CliError::internal)?;
        write_file(path, buf)?;
    }
    println!("termination: {}", result.termination);
    println!("cycles: {}", result.state.cycle());
    if let Some(t) = result.trigger {
        println!("trigger: {t}");
    }
    let regs: Vec<String> = result
        .state
        .registers()
        .iter()
        .enumerate()
        .map(|(i, r)| format!("R{i}=0x{r:08X}"))
        .collect();
    println!("registers: {}", regs.join(" "));
    if let Some(base) = &args.output_base {
        let base = resolve(base)?;
        match crate::failsafe::decode_action_options(&result.state, base) {
            Ok(out) => println!("output: {out}"),
            Err(cause) => println!("output: unreadable ({cause})"),
        }
    }
    Ok(match result.termination {
        Termination::Halted => EXIT_OK,
        Termination::HardFault(_) => EXIT_HARDFAULT,
        Termination::Hang => EXIT_HANG,
    })
}

struct LoadedScenario {
    scenario: Scenario,
    manifest_text: String,
}

fn load_scenario(args: &ScenarioArgs) -> CliResult<LoadedScenario> {
    let id: ScenarioId = args.scenario.parse().map_err(CliError::input)?;
    let (manifest, manifest_text) = match &args.scenarios {
        Some(path) => (
            ScenarioManifest::from_file(path).map_err(CliError::input)?,
            read_text(path)?,
        ),
        None => (ScenarioManifest::shipped(), SHIPPED_MANIFEST.to_string()),
    };
    let scenario = manifest.load(id).map_err(CliError::input)?;
    Ok(LoadedScenario {
        scenario,
        manifest_text,
    })
}

fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be > 0"));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(CliError::internal)
}

fn parse_model_set(text: &str) -> CliResult<BTreeSet<FaultModel>> {
    parse_models(text).map_err(CliError::usage)
}

fn model_list(models: &BTreeSet<FaultModel>) -> String {
    models.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
}

/// Hash parts shared by campaign and glitch runs.
fn scenario_hasher(
    loaded: &LoadedScenario,
    image: &MemoryImage,
    inputs: &ScenarioInputs,
    window: (&str, &str),
    models: &BTreeSet<FaultModel>,
    budget: Option<u64>,
) -> InputHasher {
    let inputs: Vec<String> = inputs.values().iter().map(|(n, v)| format!("{n}={v}")).collect();
    InputHasher::new()
        .part("scenarios", loaded.manifest_text.as_bytes())
        .part("scenario", loaded.scenario.id().as_str().as_bytes())
        .part("source", loaded.scenario.source.as_bytes())
        .part("image", &image.to_flat())
        .part("inputs", inputs.join(",").as_bytes())
        .part("start_symbol", window.0.as_bytes())
        .part("halt_symbol", window.1.as_bytes())
        .part("models", model_list(models).as_bytes())
        .part("budget", budget.map(|b| b.to_string()).unwrap_or_default().as_bytes())
}

fn run_campaign(
    loaded: &LoadedScenario,
    start: &str,
    halt: &str,
    models: &BTreeSet<FaultModel>,
    budget: Option<u64>,
) -> CliResult<(Target, CampaignReport)> {
    let target = Target::golden(&loaded.scenario).map_err(CliError::input)?;
    let campaign = Campaign::between(target.clone(), start, halt, budget).map_err(CliError::input)?;
    if campaign.golden != loaded.scenario.golden_output() {
        return Err(CliError::internal(format!(
            "fault-free output {} differs from the reference oracle {}",
            campaign.golden,
            loaded.scenario.golden_output()
        )));
    }
    let report = campaign
        .run_exhaustive(loaded.scenario.id().as_str(), models, true)
        .map_err(CliError::input)?;
    if report.total() != report.expected_total() || report.counts.total() != report.total() {
        return Err(CliError::internal("category counts do not partition the fault space"));
    }
    Ok((target, report))
}

fn window_symbols<'a>(
    scenario: &'a Scenario,
    start: &'a Option<String>,
    halt: &'a Option<String>,
) -> (&'a str, &'a str) {
    (
        start.as_deref().unwrap_or(&scenario.spec.start_symbol),
        halt.as_deref().unwrap_or(&scenario.spec.halt_symbol),
    )
}

fn out_dir_label(out: &Path) -> String {
    out.display().to_string()
}

pub const CAMPAIGN_FILES: [&str; 3] = [
    "campaign_summary.json",
    "campaign_records.csv",
    "campaign_histogram.csv",
];
pub const GLITCH_FILES: [&str; 4] = [
    "glitch_summary.json",
    "glitch_cells.csv",
    "glitch_actions.csv",
    "glitch_correlation.csv",
];

fn cmd_campaign(args: &CampaignArgs) -> CliResult<()> {
    let loaded = load_scenario(&args.common)?;
    let models = parse_model_set(&args.models)?;
    let (start, halt) = window_symbols(&loaded.scenario, &args.start_symbol, &args.halt_symbol);
    let pool = thread_pool(args.common.threads)?;
    let (target, report) = pool.install(|| run_campaign(&loaded, start, halt, &models, args.common.budget))?;
    let inputs = ScenarioInputs::golden(loaded.scenario.id());
    let hash = scenario_hasher(
        &loaded,
        &target.image,
        &inputs,
        (start, halt),
        &models,
        args.common.budget,
    )
    .finish();
    let manifest = RunManifest::new(
        "campaign",
        loaded.scenario.id().as_str(),
        &out_dir_label(&args.common.out),
        hash,
    );
    let out = &args.common.out;
    write_file(&out.join(CAMPAIGN_FILES[0]), report.summary_json(&manifest))?;
    write_file(&out.join(CAMPAIGN_FILES[1]), report.records_csv(&manifest))?;
    write_file(&out.join(CAMPAIGN_FILES[2]), report.histogram_csv(&manifest))?;
    println!(
        "{}: window {}..{} ({} cycles), {} faults, {} successful, {} resets",
        report.scenario,
        report.window.start,
        report.window.halt,
        report.window.length(),
        report.total(),
        report.counts.successes(),
        report.counts.get(crate::campaign::Category::Reset)
    );
    Ok(())
}

fn cmd_glitch(args: &GlitchArgs) -> CliResult<()> {
    let loaded = load_scenario(&args.common)?;
    let offsets = parse_list(&args.offsets).map_err(CliError::usage)?;
    let widths = parse_list(&args.widths).map_err(CliError::usage)?;
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be >= 1"));
    }
    let (config, config_text) = match &args.config {
        Some(path) => (
            GlitchConfig::from_file(path).map_err(CliError::input)?,
            read_text(path)?,
        ),
        None => (GlitchConfig::default(), String::new()),
    };
    let config = GlitchConfig {
        seed: args.seed,
        ..config
    };
    let models = parse_model_set(&args.models)?;
    let (start, halt) = window_symbols(&loaded.scenario, &args.start_symbol, &args.halt_symbol);
    let pool = thread_pool(args.common.threads)?;
    let (target, campaign, report): (Target, CampaignReport, GlitchReport) = pool.install(|| {
        let (target, campaign) = run_campaign(&loaded, start, halt, &models, args.common.budget)?;
        let glitch_target = GlitchTarget::new(target.clone(), args.common.budget).map_err(CliError::input)?;
        let report = run_glitch_campaign(
            loaded.scenario.id().as_str(),
            &glitch_target,
            &config,
            &offsets,
            &widths,
            args.trials,
            args.seed,
        )
        .map_err(CliError::input)?;
        Ok::<_, CliError>((target, campaign, report))
    })?;
    let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    let inputs = ScenarioInputs::golden(loaded.scenario.id());
    let hash = scenario_hasher(
        &loaded,
        &target.image,
        &inputs,
        (start, halt),
        &models,
        args.common.budget,
    )
    .part("config", config_text.as_bytes())
    .part("effective_config", config.to_toml().as_bytes())
    .part("offsets", list(&offsets).as_bytes())
    .part("widths", list(&widths).as_bytes())
    .part("trials", args.trials.to_string().as_bytes())
    .part("seed", args.seed.to_string().as_bytes())
    .finish();
    let mut manifest = RunManifest::new(
        "glitch",
        loaded.scenario.id().as_str(),
        &out_dir_label(&args.common.out),
        hash,
    );
    manifest.seed = Some(args.seed);
    manifest.config = args.config.as_ref().map(|p| p.display().to_string());
    let out = &args.common.out;
    write_file(&out.join(GLITCH_FILES[0]), report.summary_json(&manifest))?;
    write_file(&out.join(GLITCH_FILES[1]), report.cells_csv(&manifest))?;
    write_file(&out.join(GLITCH_FILES[2]), report.actions_csv(&manifest))?;
    write_file(&out.join(GLITCH_FILES[3]), report.correlation_csv(&campaign, &manifest))?;
    let successes: u64 = report.cells.iter().map(|c| c.counts.successes()).sum();
    println!(
        "{}: {} cells x {} trials, {} successful runs",
        report.scenario,
        report.cells.len(),
        report.trials,
        successes
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Assemble { input, output, symbols } => {
            cmd_assemble(input, output, symbols.as_deref()).map(|_| EXIT_OK)
        }
        Command::Disasm { input, symbols, output } => {
            cmd_disasm(input, symbols.as_deref(), output.as_deref()).map(|_| EXIT_OK)
        }
        Command::Run(args) => cmd_run(args),
        Command::Campaign(args) => cmd_campaign(args).map(|_| EXIT_OK),
        Command::Glitch(args) => cmd_glitch(args).map(|_| EXIT_OK),
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::usage(e.kind());
            eprintln!("{}", err.json_line());
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message);
            eprintln!("{}", err.json_line());
            err.code
        }
    }
}
