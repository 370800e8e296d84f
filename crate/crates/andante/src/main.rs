use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use andante::bench::{default_cells, run_bench, suite, table, write_csv, SUITES};
use andante::corpus::{differential, load_dir, DiffOptions};
use andante::run::{run_source, Answers, Mode, RunConfig, RunError};
use andante::trace::write_trace;

#[derive(Parser)]
#[command(
    name = "andante",
    version,
    about = "Independent and-parallel Prolog engine"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a query against a program.
    Run {
        file: PathBuf,
        #[arg(short, long)]
        query: String,
        #[arg(long, value_enum, default_value = "parback")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        agents: usize,
        #[arg(long, default_value = "all")]
        answers: Answers,
        #[arg(long)]
        json: bool,
        /// Write scheduler events to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "on")]
        det_opt: Switch,
        #[arg(long, value_enum, default_value = "on")]
        speculative: Switch,
        #[arg(long, value_enum, default_value = "off")]
        ghost_retention: Switch,
        /// First-answer priority in the scheduler.
        #[arg(long, value_enum, default_value = "on")]
        priority: Switch,
        /// Milliseconds per unit of pause/1.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        #[arg(long)]
        debug_independence: bool,
        /// Give up after this many seconds.
        #[arg(long)]
        timeout: Option<f64>,
    },
    /// Time a benchmark suite in several engine configurations.
    Bench {
        suite: String,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Stop each run after this many seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
    },
    /// Compare parallel and sequential answers over a directory of programs.
    Diff { corpus: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.cmd {
        Cmd::Run {
            file,
            query,
            mode,
            agents,
            answers,
            json,
            trace,
            seed,
            det_opt,
            speculative,
            ghost_retention,
            priority,
            time_scale,
            debug_independence,
            timeout,
        } => {
            if agents == 0 {
                eprintln!("--agents must be at least 1");
                return ExitCode::from(2);
            }
            let src = match std::fs::read_to_string(&file) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return ExitCode::from(2);
                }
            };
            let cfg = RunConfig {
                mode,
                agents,
                answers,
                det_opt: det_opt.on(),
                speculative: speculative.on(),
                ghost_retention: ghost_retention.on(),
                priority: priority.on(),
                debug_independence,
                trace: trace.is_some(),
                seed,
                time_scale,
                deadline: timeout.map(std::time::Duration::from_secs_f64),
                ..RunConfig::new(&query)
            };
            let out = match run_source(&src, &cfg) {
                Ok(o) => o,
                Err(RunError::Read(e)) => {
                    eprintln!("{}: {e}", file.display());
                    return ExitCode::from(2);
                }
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(path) = trace {
                if let Err(e) = std::fs::write(&path, write_trace(&out.trace)) {
                    eprintln!("{}: {e}", path.display());
                }
            }
            let r = &out.report;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(r).expect("report serializes")
                );
            } else {
                for a in &r.answers {
                    println!("{a}");
                }
                if r.answers.is_empty() {
                    println!("no");
                }
                eprintln!(
                    "% {} answers, {:.3} ms, {} steps, {} memoized, {} relocations, {} suspensions",
                    r.answers.len(),
                    r.wall_ms,
                    r.steps,
                    r.memo_stored,
                    r.relocations,
                    r.suspensions
                );
                if let Some(e) = &r.error {
                    eprintln!("error: {e}");
                }
            }
            match &out.engine_error {
                Some(e) if e.is_invariant_violation() => ExitCode::from(3),
                Some(_) => ExitCode::from(1),
                None if r.answers.is_empty() => ExitCode::from(1),
                None => ExitCode::SUCCESS,
            }
        }
        Cmd::Bench {
            suite: name,
            runs,
            csv,
            timeout,
        } => {
            let Some(benches) = suite(&name) else {
                eprintln!("unknown suite {name}; known: {}", SUITES.join(", "));
                return ExitCode::from(2);
            };
            let mut rows = Vec::new();
            for b in &benches {
                let limit = Some(std::time::Duration::from_secs_f64(timeout));
                match run_bench(b, runs, &default_cells(), limit) {
                    Ok(r) => rows.extend(r),
                    Err(e) => {
                        eprintln!("{}: {e}", b.name);
                        return ExitCode::from(2);
                    }
                }
            }
            print!("{}", table(&rows));
            if let Some(path) = csv {
                let res = std::fs::File::create(&path)
                    .map_err(csv::Error::from)
                    .and_then(|f| write_csv(f, &rows));
                if let Err(e) = res {
                    eprintln!("{}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            ExitCode::SUCCESS
        }
        Cmd::Diff { corpus } => {
            let entries = match load_dir(&corpus) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("{}: {e}", corpus.display());
                    return ExitCode::from(2);
                }
            };
            let samples = differential(&entries, &DiffOptions::default());
            let bad: Vec<_> = samples.iter().filter(|s| !s.problems.is_empty()).collect();
            for s in &bad {
                eprintln!(
                    "FAIL {} `{}` {} agents={} seed={}: {}",
                    s.program,
                    s.query,
                    if s.recompute { "recompute" } else { "parback" },
                    s.agents,
                    s.seed,
                    s.problems.join("; ")
                );
            }
            println!(
                "{} programs, {} samples, {} failed",
                entries.len(),
                samples.len(),
                bad.len()
            );
            if bad.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
    }
}
