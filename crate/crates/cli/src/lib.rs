//! Command-line front end for the `abwv` library.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, bad
//! config files, invalid parameters), 3 for numeric or estimation failures.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use abwv::model::Technique;
use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Format, Settings, KEYS};
use output::{Envelope, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<abwv::Error> for CliError {
    fn from(e: abwv::Error) -> Self {
        if e.is_configuration() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

pub const SUBCOMMANDS: &[(&str, &str)] = &[
    (
        "fisher",
        "Fisher information and Cramér–Rao bound per technique",
    ),
    ("simulate", "Repeated Monte Carlo trials"),
    ("sweep", "Averaging sweep or linear-response sweep"),
    (
        "compare",
        "ABWV, WVA and standard technique on a shared budget",
    ),
    (
        "optics",
        "Parameter mapping, bounds and photon budget of the plate experiment",
    ),
    ("waveform", "Synthesize and analyze one detector trace"),
];

fn common_args(mut cmd: Command) -> Command {
    cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("`key = value` settings file; flags take precedence"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("PATH")
                .help("output file; stdout when absent"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("worker threads; results do not depend on it"),
        );
    for k in KEYS {
        let unit = k.unit.map(|u| format!(" [{u}]")).unwrap_or_default();
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name.replace('_', "-"))
                .value_name("VALUE")
                .action(ArgAction::Set)
                .allow_hyphen_values(true)
                .help(format!("{}{unit} (default: {})", k.help, k.default)),
        );
    }
    cmd
}

pub fn cli() -> Command {
    let mut cmd = Command::new("abwv")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Almost-balanced weak-value parameter estimation")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(common_args(Command::new(*name).about(*about)));
    }
    cmd
}

fn flag_values(m: &ArgMatches) -> Vec<(&'static str, String)> {
    KEYS.iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name, v.clone())))
        .collect()
}

fn fresh_seed() -> u64 {
    use std::collections::hash_map::RandomState;
    use std::hash::{BuildHasher, Hasher};
    let mut h = RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0),
    );
    h.finish()
}

fn pick_format(settings: &Settings, out: Option<&Path>) -> Format {
    match settings.format {
        Format::Auto => match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        },
        f => f,
    }
}

/// Writes through a sibling temporary file so a failed run never leaves a
/// partial output behind.
fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".partial-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = std::fs::write(&tmp, bytes).and_then(|()| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn execute(name: &str, m: &ArgMatches) -> Result<(), CliError> {
    let file = m.get_one::<String>("config").map(PathBuf::from);
    let out = m.get_one::<String>("out").map(PathBuf::from);
    let mut settings = config::resolve(file.as_deref(), &flag_values(m))?;
    let randomized = matches!(name, "simulate" | "sweep" | "compare" | "waveform");
    if randomized && settings.seed.is_none() {
        settings.seed = Some(fresh_seed());
    }
    if name == "compare" {
        for t in [Technique::Abwv, Technique::Wva, Technique::Standard] {
            if !settings.techniques.contains(&t) {
                settings.techniques.push(t);
            }
        }
    }

    let run = || commands::dispatch(name, &settings);
    let report: Report = match m.get_one::<usize>("threads") {
        Some(&n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let bytes = match pick_format(&settings, out.as_deref()) {
        Format::Csv => output::to_csv(&report.table)?,
        _ => output::to_json(&Envelope {
            command: name,
            seed: if randomized { settings.seed } else { None },
            config: settings.resolved(),
            report: &report,
        }),
    };
    match out {
        Some(path) => write_atomically(&path, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Config(format!("stdout: {e}"))),
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let Some((name, sub)) = matches.subcommand() else {
        return 2;
    };
    match execute(name, sub) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("abwv {name}: {e}");
            e.exit_code()
        }
    }
}
