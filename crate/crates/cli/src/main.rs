//! `pamlab <command> [--key value ...]`: every command writes one CSV or JSON
//! file plus `<file>.manifest.json`; `pamlab replay <manifest>` re-runs one.
//!
//! Exit codes: 0 success, 2 a verification failed, 1 usage or input errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use pamlab::experiments::commands::{resolve, COMMANDS};
use pamlab::experiments::config::Params;
use pamlab::experiments::manifest::{replay, ExperimentManifest};
use pamlab::experiments::run;

const THREADS_ENV: &str = "PAMLAB_THREADS";

fn cli() -> Command {
    let mut root = Command::new("pamlab")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Poisson potentials with inverse-square poles: sampling, spectra, Feynman-Kac")
        .subcommand_required(true)
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help(format!("worker threads (default: ${THREADS_ENV}, else all cores)")),
        );
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name)
            .about(spec.about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("flat key = value file"))
            .arg(Arg::new("out").long("out").value_name("PATH").help(format!("output file (default {}.{})", spec.name, spec.format)));
        for k in spec.keys {
            let help = match k.default {
                None => format!("{} [required]", k.help),
                Some("") => k.help.to_string(),
                Some(d) => format!("{} [default: {d}]", k.help),
            };
            sub = sub.arg(Arg::new(k.name).long(k.name).value_name("VALUE").allow_hyphen_values(true).help(help));
        }
        root = root.subcommand(sub);
    }
    root.subcommand(
        Command::new("replay")
            .about("re-run a manifest and compare output digests")
            .arg(Arg::new("manifest").required(true))
            .arg(Arg::new("work-dir").long("work-dir").value_name("DIR").help("where embedded inputs are written")),
    )
}

fn threads(m: &ArgMatches) -> Result<usize, String> {
    if let Some(&n) = m.get_one::<usize>("threads") {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| format!("{THREADS_ENV}='{s}' is not a thread count")),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn command(name: &str, m: &ArgMatches) -> ExitCode {
    let spec = COMMANDS.iter().find(|c| c.name == name).expect("registered");
    let file = match m.get_one::<String>("config") {
        Some(path) => match std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|t| Params::parse(&t).map_err(|e| e.to_string())) {
            Ok(p) => Some(p),
            Err(e) => {
                eprintln!("error: config {path}: {e}");
                return ExitCode::from(1);
            }
        },
        None => None,
    };
    let mut flags = Params::new();
    for k in spec.keys {
        if let Some(v) = m.get_one::<String>(k.name) {
            flags.set(k.name, v.clone());
        }
    }
    let params = match resolve(name, file.as_ref(), &flags) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = m.get_one::<String>("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(format!("{name}.{}", spec.format)));
    match run(name, &params, &out) {
        Ok(r) => {
            println!("{}: {}", name, r.outcome.summary);
            println!("wrote {} and {}", r.output.display(), r.manifest_file.display());
            if r.outcome.verified == Some(false) {
                eprintln!("verification failed; see {}", r.output.display());
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn replay_cmd(m: &ArgMatches) -> ExitCode {
    let path = PathBuf::from(m.get_one::<String>("manifest").expect("required"));
    let work = m.get_one::<String>("work-dir").map(PathBuf::from).unwrap_or_else(|| {
        let mut p = path.clone().into_os_string();
        p.push(".replay");
        p.into()
    });
    let res = ExperimentManifest::read(&path).and_then(|man| replay(&man, &work));
    match res {
        Ok(r) if r.identical => {
            println!("{}: identical ({})", r.command, r.actual);
            ExitCode::SUCCESS
        }
        Ok(r) => {
            println!("{}: differs (expected {}, got {})", r.command, r.expected, r.actual);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let m = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match threads(&m) {
        Ok(n) => pamlab::parallel::set_threads(n),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match m.subcommand() {
        Some(("replay", sub)) => replay_cmd(sub),
        Some((name, sub)) => command(name, sub),
        None => unreachable!("subcommand_required"),
    }
}
