//! The `plumb` command line.
//!
//! Exit codes: 0 success, 1 negative verdict or inapplicable move, 2 usage
//! or malformed input, 3 I/O failure. Results go to stdout as JSON,
//! diagnostics to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::datagen::{build_dataset, Counts, DatasetSummary, GenParams};
use crate::graph::PlumbingGraph;
use crate::moves::{apply_move, MoveApplication, MoveKind};
use crate::oracle::{bounded_search, check_certificate, Certificate, Half, ReplayFailure, SearchBudget};

#[derive(Debug, Parser)]
#[command(name = "plumb", version, about = "Plumbing graph calculus toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a JSON Lines dataset of labelled graph pairs.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        equiv_frac: f64,
        #[arg(long)]
        tweak_frac: f64,
        #[arg(long)]
        seed: u64,
        /// Random moves applied to each graph.
        #[arg(long, default_value_t = 60)]
        nmax: usize,
        #[arg(long, default_value_t = 25)]
        max_vertices: usize,
    },
    /// Search for a move sequence between two graphs.
    Check {
        /// JSON file with two graphs: `[g1, g2]`, `{"graph1": .., "graph2": ..}`
        /// or two concatenated graph objects.
        #[arg(long)]
        pair: PathBuf,
        #[arg(long)]
        max_states: usize,
        #[arg(long)]
        max_depth: usize,
        /// Seconds.
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
        /// Kinds whose inverse moves the search may use.
        #[arg(long, value_delimiter = ',', default_value = "R1,R3")]
        inverse_kinds: Vec<String>,
    },
    /// Replay a certificate.
    Verify {
        #[arg(long)]
        cert: PathBuf,
    },
    /// Apply a list of moves to a graph and print the result.
    Apply {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        moves: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Negative(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Negative(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Negative(m) | Failure::Usage(m) | Failure::Io(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = io::stdout().lock();
    let result = match cli.command {
        Command::Gen { out, count, equiv_frac, tweak_frac, seed, nmax, max_vertices } => {
            cmd_gen(&mut stdout, &out, count, equiv_frac, tweak_frac, seed, nmax, max_vertices)
        }
        Command::Check { pair, max_states, max_depth, time_limit, inverse_kinds } => {
            cmd_check(&mut stdout, &pair, max_states, max_depth, time_limit, &inverse_kinds)
        }
        Command::Verify { cert } => cmd_verify(&mut stdout, &cert),
        Command::Apply { graph, moves } => cmd_apply(&mut stdout, &graph, &moves),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("plumb: {}", f.message());
            f.code()
        }
    }
}

fn emit<W: Write, T: Serialize>(out: &mut W, value: &T) -> Outcome {
    serde_json::to_writer(&mut *out, value)
        .map_err(|e| Failure::Io(e.to_string()))
        .and_then(|()| writeln!(out).map_err(|e| Failure::Io(e.to_string())))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Usage(format!("malformed {what}: {e}")))
}

fn valid(graph: PlumbingGraph, what: &str) -> Result<PlumbingGraph, Failure> {
    graph.ensure_valid().map_err(|e| Failure::Usage(format!("{what}: {e}")))?;
    Ok(graph)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen<W: Write>(
    out: &mut W,
    path: &Path,
    count: usize,
    equiv_frac: f64,
    tweak_frac: f64,
    seed: u64,
    nmax: usize,
    max_vertices: usize,
) -> Outcome {
    let counts = Counts::from_fractions(count, equiv_frac, tweak_frac).map_err(Failure::Usage)?;
    let params = GenParams { vertex_range: (1, max_vertices), n_max: nmax, master_seed: seed, ..GenParams::default() };
    params.check().map_err(Failure::Usage)?;
    let file = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let started = Instant::now();
    let summary = with_thread_cap(|| build_dataset(counts, &params, file))
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        summary: &'a DatasetSummary,
        out: String,
        seconds: f64,
    }
    emit(out, &Report { summary: &summary, out: path.display().to_string(), seconds: started.elapsed().as_secs_f64() })
}

/// Runs `f` on a pool capped at `PLUMB_THREADS` threads when that is set.
fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("PLUMB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Reads two graphs from a pair file.
fn parse_pair(text: &str) -> Result<(PlumbingGraph, PlumbingGraph), Failure> {
    let malformed = |e: String| Failure::Usage(format!("malformed pair file: {e}"));
    let values: Vec<Value> = serde_json::Deserializer::from_str(text)
        .into_iter::<Value>()
        .collect::<Result<_, _>>()
        .map_err(|e| malformed(e.to_string()))?;
    let (a, b) = match values.as_slice() {
        [Value::Array(items)] if items.len() == 2 => (items[0].clone(), items[1].clone()),
        [Value::Object(map)] if map.contains_key("graph1") && map.contains_key("graph2") => {
            (map["graph1"].clone(), map["graph2"].clone())
        }
        [a, b] => (a.clone(), b.clone()),
        _ => return Err(malformed("expected two graphs".into())),
    };
    let graph = |v: Value, name: &str| -> Result<PlumbingGraph, Failure> {
        let g = serde_json::from_value(v).map_err(|e| malformed(format!("{name}: {e}")))?;
        valid(g, name)
    };
    Ok((graph(a, "graph1")?, graph(b, "graph2")?))
}

fn cmd_check<W: Write>(
    out: &mut W,
    pair: &Path,
    max_states: usize,
    max_depth: usize,
    time_limit: f64,
    inverse_kinds: &[String],
) -> Outcome {
    if max_states == 0 || max_depth == 0 || !(time_limit.is_finite() && time_limit > 0.0) {
        return Err(Failure::Usage("budget values must be positive".into()));
    }
    let mut kinds = Vec::new();
    for name in inverse_kinds.iter().filter(|s| !s.trim().is_empty()) {
        match MoveKind::parse(name) {
            Some(k) if k.has_inverse() => kinds.push(k),
            Some(k) => return Err(Failure::Usage(format!("{k} has no inverse"))),
            None => return Err(Failure::Usage(format!("unknown move kind {name:?}"))),
        }
    }
    let (g1, g2) = parse_pair(&read(pair)?)?;
    let budget = SearchBudget { max_states, max_depth, time_limit: Duration::from_secs_f64(time_limit) };
    let verdict = bounded_search(&g1, &g2, budget, &kinds).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(out, &verdict)?;
    if verdict.is_equivalent() {
        Ok(())
    } else {
        Err(Failure::Negative("no move sequence found within budget".into()))
    }
}

fn cmd_verify<W: Write>(out: &mut W, cert: &Path) -> Outcome {
    let cert: Certificate = parse(&read(cert)?, "certificate")?;
    valid(cert.start.clone(), "start graph")?;
    valid(cert.end.clone(), "end graph")?;
    match check_certificate(&cert) {
        Ok(()) => emit(out, &json!({ "valid": true, "moves": cert.len() })),
        Err(failure) => {
            let (half, step) = match &failure {
                ReplayFailure::Step { half, step, .. } => (Some(*half), Some(*step)),
                _ => (None, None),
            };
            emit(
                out,
                &json!({ "valid": false, "failed_step": step, "half": half.map(|h| h == Half::EndMoves).map(|end| if end { "end_moves" } else { "moves" }), "reason": failure.to_string() }),
            )?;
            Err(Failure::Negative(failure.to_string()))
        }
    }
}

fn cmd_apply<W: Write>(out: &mut W, graph: &Path, moves: &Path) -> Outcome {
    let g: PlumbingGraph = parse(&read(graph)?, "graph")?;
    let mut g = valid(g, "graph")?;
    let moves: Vec<MoveApplication> = parse(&read(moves)?, "move list")?;
    for (step, m) in moves.iter().enumerate() {
        g = apply_move(&g, m).map_err(|e| Failure::Negative(format!("step {step}: {e}")))?;
    }
    emit(out, &g)
}
