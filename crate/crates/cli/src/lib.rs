//! The `idbg` command-line tool.
//!
//! Every command is a plain function writing to caller-supplied streams and
//! returning an exit status: 0 on success, 1 for invalid values or malformed
//! input, 2 for I/O failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use idbg_core::{
    load_context, merge_logs, save_context, CallSiteFrame, ContextFileError, DebugLog, Level,
    MonitorContext, Registry, Semantics, StatsRegistry,
};

pub mod demo;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// A failed command: the message for standard error and its exit status.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => m,
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "idbg", version, about = "Inspect and tune monitor contexts, debug logs and statistics")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create, tune and inspect context files
    #[command(subcommand)]
    Ctx(CtxCommand),
    /// Filter and merge debug logs
    #[command(subcommand)]
    Log(LogCommand),
    /// Statistics snapshots
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Demonstrations
    #[command(subcommand)]
    Demo(DemoCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SemanticsChoice {
    Default,
    Wide,
}

#[derive(Debug, Subcommand)]
enum CtxCommand {
    /// Write a fresh context file
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "default")]
        semantics: SemanticsChoice,
        /// Output channel the context is bound to
        #[arg(long, default_value = "console")]
        channel: String,
    },
    /// Apply one tuning change to a context file
    Set(SetArgs),
    /// Print a context file's settings
    Show { path: PathBuf },
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("change").required(true).multiple(false)))]
struct SetArgs {
    path: PathBuf,
    #[arg(long, group = "change", allow_negative_numbers = true)]
    threshold: Option<i32>,
    #[arg(long, group = "change", value_name = "CATEGORY")]
    enable_cat: Option<String>,
    #[arg(long, group = "change", value_name = "CATEGORY")]
    disable_cat: Option<String>,
    /// Add a category as NAME=LEVEL
    #[arg(long, group = "change", value_name = "NAME=LEVEL")]
    add_cat: Option<String>,
    #[arg(long, group = "change", value_name = "CLASS")]
    include_class: Option<String>,
    #[arg(long, group = "change", value_name = "CLASS")]
    exclude_class: Option<String>,
    /// Monitor every class, including ones not yet seen
    #[arg(long, group = "change")]
    all_classes: bool,
    /// Monitor no class
    #[arg(long, group = "change")]
    no_classes: bool,
    #[arg(long, group = "change")]
    enable: bool,
    #[arg(long, group = "change")]
    disable: bool,
}

#[derive(Debug, Subcommand)]
enum LogCommand {
    /// Print the events of a log that pass a context's filters
    Filter {
        logfile: PathBuf,
        #[arg(long)]
        context: PathBuf,
    },
    /// Merge two logs by timestamp
    Merge {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Print a report for every statistic in a snapshot
    Report { statsfile: PathBuf },
}

#[derive(Debug, Subcommand)]
enum DemoCommand {
    /// Two nodes, one remote call, one curried stack dump
    Curry,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "idbg: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Ctx(CtxCommand::Init {
            out: path,
            semantics,
            channel,
        }) => ctx_init(&path, semantics, &channel),
        Command::Ctx(CtxCommand::Set(args)) => ctx_set(args),
        Command::Ctx(CtxCommand::Show { path }) => ctx_show(&path, out),
        Command::Log(LogCommand::Filter { logfile, context }) => log_filter(&logfile, &context, out),
        Command::Log(LogCommand::Merge { a, b, out: path }) => log_merge(&a, &b, &path),
        Command::Stats(StatsCommand::Report { statsfile }) => stats_report(&statsfile, out),
        Command::Demo(DemoCommand::Curry) => demo::run_curry_demo(out),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write output: {e}")))
}

fn load_ctx(path: &Path) -> Result<MonitorContext, CliError> {
    load_context(&read(path)?).map_err(|e| match e {
        ContextFileError::Format(f) => CliError::Invalid(format!("{}: {f}", path.display())),
        ContextFileError::Invalid(i) => CliError::Invalid(format!("{}: {i}", path.display())),
    })
}

fn load_log(path: &Path) -> Result<DebugLog, CliError> {
    DebugLog::import(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn ctx_init(path: &Path, semantics: SemanticsChoice, channel: &str) -> CliResult {
    let semantics = match semantics {
        SemanticsChoice::Default => Semantics::standard(),
        SemanticsChoice::Wide => Semantics::wide(),
    };
    let ctx = MonitorContext::new(semantics, channel).map_err(|e| CliError::Invalid(e.to_string()))?;
    write_file(path, save_context(&ctx).as_bytes())
}

fn ctx_set(args: SetArgs) -> CliResult {
    let ctx = load_ctx(&args.path)?;
    let invalid = |e: idbg_core::ContextError| CliError::Invalid(e.to_string());
    if let Some(t) = args.threshold {
        ctx.set_threshold(Level(t)).map_err(invalid)?;
    } else if let Some(c) = &args.enable_cat {
        ctx.enable_category(c).map_err(invalid)?;
    } else if let Some(c) = &args.disable_cat {
        ctx.disable_category(c).map_err(invalid)?;
    } else if let Some(spec) = &args.add_cat {
        let (name, level) = spec
            .split_once('=')
            .and_then(|(n, l)| Some((n, l.trim().parse::<i32>().ok()?)))
            .ok_or_else(|| CliError::Invalid(format!("expected NAME=LEVEL, got `{spec}`")))?;
        ctx.add_category(name, Level(level)).map_err(invalid)?;
    } else if let Some(c) = &args.include_class {
        ctx.class_filter_add(c);
    } else if let Some(c) = &args.exclude_class {
        ctx.class_filter_remove(c);
    } else if args.all_classes {
        ctx.class_filter_add_all();
    } else if args.no_classes {
        ctx.class_filter_remove_all();
    } else if args.enable {
        ctx.set_enabled(true);
    } else if args.disable {
        ctx.set_enabled(false);
    }
    write_file(&args.path, save_context(&ctx).as_bytes())
}

fn ctx_show(path: &Path, out: &mut dyn Write) -> CliResult {
    let ctx = load_ctx(path)?;
    let st = ctx.snapshot();
    let s = ctx.semantics();
    let mut text = String::new();
    text.push_str(&format!("channel: {}\n", ctx.channel_id()));
    text.push_str(&format!("enabled: {}\n", st.enabled));
    text.push_str(&format!(
        "levels: {}..{} ({})\n",
        s.min_level(),
        s.max_level(),
        s.locale()
    ));
    text.push_str(&format!("threshold: {} {}\n", st.threshold, s.level_label(st.threshold)));
    for (name, on) in &st.category_states {
        let level = st.category_level(s, name).map(|l| l.value()).unwrap_or_default();
        text.push_str(&format!(
            "category: {name} level {level} {}\n",
            if *on { "on" } else { "off" }
        ));
    }
    let filter = st.class_filter;
    let names: Vec<&str> = filter.names().iter().map(String::as_str).collect();
    let mode = match filter.mode() {
        idbg_core::FilterMode::IncludeListed => "only",
        idbg_core::FilterMode::ExcludeListed => "all except",
    };
    text.push_str(&format!("classes: {mode} [{}]\n", names.join(", ")));
    emit(out, &text)
}

fn log_filter(logfile: &Path, context: &Path, out: &mut dyn Write) -> CliResult {
    let ctx = load_ctx(context)?;
    let log = load_log(logfile)?;
    let registry = Registry::new(ctx);
    registry.set_global_enable(true);
    let no_groups: [&str; 0] = [];
    let mut text = String::new();
    for e in &log.events {
        let site: &CallSiteFrame = &e.call_site;
        if registry.should_emit(&e.thread_id, &no_groups, site, &e.category, e.level) {
            text.push_str(&idbg_core::format_event(e));
            text.push('\n');
        }
    }
    emit(out, &text)
}

fn log_merge(a: &Path, b: &Path, out: &Path) -> CliResult {
    let merged = merge_logs(&load_log(a)?, &load_log(b)?);
    write_file(out, &merged.export())
}

fn stats_report(path: &Path, out: &mut dyn Write) -> CliResult {
    let stats = StatsRegistry::load(&read(path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    emit(out, &stats.report_all())
}
