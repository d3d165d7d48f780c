//! Command implementations behind the `walkref` binary. Every command
//! renders its whole output to a string so runs are byte-comparable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;
use walkref::gnn::{check_label_independence, hot_one_encode, layer_forward, synthesize_layer, GnnError};
use walkref::io::{load_graph, IoError};
use walkref::mpnn::{countable_simulator, run_mpnn, MpnnError};
use walkref::refinement::{compare_graphs, run_to_stable, RefineError, Verdict};
use walkref::verify::{run_verify, Mutant, VerifyError, VerifyOptions, VerifyReport};
use walkref::{readout_multiset, LabelledGraph, Procedure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Mpnn(#[from] MpnnError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    /// A check the library guarantees did not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Usage(_) | CliError::Verify(_) => EXIT_INPUT,
            CliError::Refine(RefineError::WalkTooShort(_) | RefineError::Graph(_)) => EXIT_INPUT,
            // Resource caps are properties of the input size.
            CliError::Mpnn(MpnnError::FeatureTooLarge { .. } | MpnnError::DimensionCap { .. }) => EXIT_INPUT,
            CliError::Gnn(GnnError::ThresholdTooLarge { .. }) => EXIT_INPUT,
            _ => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcArg {
    Wl2,
    Walk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "walkref", version, about = "2-WL and ℓ-walk refinement, MPNN and GNN simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Refinement procedure.
    #[arg(long = "proc", value_enum, default_value = "wl2", global = true)]
    pub procedure: ProcArg,
    /// Walk length for `--proc walk` and the MPNN simulator.
    #[arg(long, default_value_t = 2, global = true)]
    pub ell: usize,
    /// Round budget; defaults to n² + 1.
    #[arg(long, global = true)]
    pub max_rounds: Option<usize>,
    /// Emit the per-round trace as JSON lines instead of a summary.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Include the full label matrix in trace records.
    #[arg(long, global = true, requires = "trace")]
    pub matrix: bool,
    /// Output format; `compare` defaults to json, everything else to text.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Seed offset for randomized suites.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine one graph to stabilization.
    Refine { graph: PathBuf },
    /// Decide whether the procedure distinguishes two graphs.
    Compare { first: PathBuf, second: PathBuf },
    /// Run the exact countable ℓ-walk MPNN and compare with W[ℓ] per round.
    MpnnSim { graph: PathBuf },
    /// Run the synthesized GNN layers and compare with WL2 per round.
    GnnSim { graph: PathBuf },
    /// Run the invariant check suites.
    Verify {
        /// Comma-separated suite names.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        #[arg(long, hide = true, value_enum)]
        mutant: Option<MutantArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutantArg {
    WalkLengthOffByOne,
}

/// Rendered command result.
#[derive(Debug)]
pub struct Output {
    pub stdout: String,
    pub exit: i32,
}

impl RunArgs {
    pub fn procedure(&self) -> Result<Procedure, CliError> {
        match self.procedure {
            ProcArg::Wl2 => Ok(Procedure::Wl2),
            ProcArg::Walk => Ok(Procedure::walk(self.ell).map_err(|e| CliError::Usage(e.to_string()))?),
        }
    }

    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

fn load(path: &Path) -> Result<LabelledGraph, CliError> {
    Ok(load_graph(path)?.normalize())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
pub struct RoundSummary {
    pub t: usize,
    pub class_count: usize,
    pub fingerprint: String,
}

#[derive(Debug, Serialize)]
pub struct RefineReport {
    pub procedure: String,
    pub n: usize,
    pub stable_round: usize,
    pub class_count: usize,
    pub fingerprint: String,
    pub rounds: Vec<RoundSummary>,
}

pub fn cmd_refine(args: &RunArgs, path: &Path) -> Result<Output, CliError> {
    let g = load(path)?;
    let procedure = args.procedure()?;
    let trace = run_to_stable(&g, procedure, args.max_rounds)?;
    if args.trace {
        return Ok(Output { stdout: trace.to_jsonl(args.matrix), exit: EXIT_OK });
    }
    let report = RefineReport {
        procedure: procedure.name(),
        n: g.n(),
        stable_round: trace.stable_round,
        class_count: trace.stable().class_count(),
        fingerprint: readout_multiset(trace.stable()).digest(),
        rounds: trace
            .records(false)
            .into_iter()
            .map(|r| RoundSummary { t: r.t, class_count: r.class_count, fingerprint: r.fingerprint })
            .collect(),
    };
    let stdout = match args.format_or(Format::Text) {
        Format::Json => to_json(&report),
        Format::Text => {
            let mut s = format!("procedure {} on {} vertices\n", report.procedure, report.n);
            for r in &report.rounds {
                let _ = writeln!(s, "round {}: {} classes", r.t, r.class_count);
            }
            let _ = writeln!(s, "stable at round {}, {} classes", report.stable_round, report.class_count);
            let _ = writeln!(s, "fingerprint {}", report.fingerprint);
            s
        }
    };
    Ok(Output { stdout, exit: EXIT_OK })
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub procedure: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

pub fn cmd_compare(args: &RunArgs, first: &Path, second: &Path) -> Result<Output, CliError> {
    let g1 = load(first)?;
    let g2 = load(second)?;
    let procedure = args.procedure()?;
    let verdict = compare_graphs(&g1, &g2, procedure, args.max_rounds)?;
    let report = CompareReport { procedure: procedure.name(), verdict };
    let stdout = match args.format_or(Format::Json) {
        Format::Json => to_json(&report),
        Format::Text => match &report.verdict {
            Verdict::Distinguished { round, reason } => {
                format!("{}: distinguished at round {round} ({reason})\n", report.procedure)
            }
            Verdict::Indistinguishable { stable_rounds: [r1, r2] } => {
                format!("{}: indistinguishable (stable at rounds {r1}, {r2})\n", report.procedure)
            }
        },
    };
    Ok(Output { stdout, exit: EXIT_OK })
}

#[derive(Debug, Serialize)]
pub struct SimRound {
    pub t: usize,
    pub reference_classes: usize,
    pub simulated_classes: usize,
    pub equivalent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_independent: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bits: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct SimReport {
    pub simulator: String,
    pub reference: String,
    pub n: usize,
    pub passed: bool,
    pub rounds: Vec<SimRound>,
}

fn render_sim(report: &SimReport, format: Format) -> Output {
    let stdout = match format {
        Format::Json => to_json(report),
        Format::Text => {
            let mut s = format!("{} vs {} on {} vertices\n", report.simulator, report.reference, report.n);
            for r in &report.rounds {
                let _ = write!(
                    s,
                    "round {}: {} reference classes, {} simulated classes, {}",
                    r.t,
                    r.reference_classes,
                    r.simulated_classes,
                    if r.equivalent { "equivalent" } else { "DIFFERENT" }
                );
                if let Some(ind) = r.label_independent {
                    let _ = write!(s, ", labels {}", if ind { "independent" } else { "DEPENDENT" });
                }
                if let Some(bits) = r.max_bits {
                    let _ = write!(s, ", {bits} bits");
                }
                s.push('\n');
            }
            let _ = writeln!(s, "{}", if report.passed { "pass" } else { "FAIL" });
            s
        }
    };
    Output { stdout, exit: if report.passed { EXIT_OK } else { EXIT_INTERNAL } }
}

pub fn cmd_mpnn_sim(args: &RunArgs, path: &Path) -> Result<Output, CliError> {
    let g = load(path)?;
    let procedure = Procedure::walk(args.ell).map_err(|e| CliError::Usage(e.to_string()))?;
    let trace = run_to_stable(&g, procedure, args.max_rounds)?;
    let l = g.labelling();
    let sim = countable_simulator(g.n(), args.ell)?;
    let features = run_mpnn(&sim, sim.lift(&l), trace.rounds.len() - 1)?;
    let rounds: Vec<SimRound> = features
        .iter()
        .enumerate()
        .map(|(t, fm)| {
            let part = fm.partition();
            SimRound {
                t,
                reference_classes: trace.at(t).class_count(),
                simulated_classes: part.class_count(),
                equivalent: part.equivalent(trace.at(t)).unwrap_or(false),
                label_independent: None,
                max_bits: None,
            }
        })
        .collect();
    let naturals = features.iter().all(|fm| fm.cells.iter().all(|&id| sim.is_natural(id)));
    if !naturals {
        return Err(CliError::Invariant("a simulated feature is not a natural number".into()));
    }
    let report = SimReport {
        simulator: format!("countable-mpnn{}", args.ell),
        reference: procedure.name(),
        n: g.n(),
        passed: rounds.iter().all(|r| r.equivalent),
        rounds,
    };
    Ok(render_sim(&report, args.format_or(Format::Text)))
}

pub fn cmd_gnn_sim(args: &RunArgs, path: &Path) -> Result<Output, CliError> {
    let g = load(path)?;
    let trace = run_to_stable(&g, Procedure::Wl2, args.max_rounds)?;
    let mut a = hot_one_encode(&g.labelling());
    let mut rounds = Vec::new();
    for t in 0..trace.rounds.len() {
        if t > 0 {
            let w = synthesize_layer(&a)?;
            a = layer_forward(&a, &w)?;
        }
        let part = a.partition()?;
        rounds.push(SimRound {
            t,
            reference_classes: trace.at(t).class_count(),
            simulated_classes: part.class_count(),
            equivalent: part.equivalent(trace.at(t)).unwrap_or(false),
            label_independent: Some(check_label_independence(&a)),
            max_bits: Some(a.max_bits()),
        });
    }
    let report = SimReport {
        simulator: "gnn".into(),
        reference: Procedure::Wl2.name(),
        n: g.n(),
        passed: rounds.iter().all(|r| r.equivalent && r.label_independent == Some(true)),
        rounds,
    };
    Ok(render_sim(&report, args.format_or(Format::Text)))
}

pub fn cmd_verify(args: &RunArgs, only: Option<Vec<String>>, mutant: Option<MutantArg>) -> Result<Output, CliError> {
    let opts = VerifyOptions {
        only,
        seed: args.seed,
        mutant: mutant.map(|MutantArg::WalkLengthOffByOne| Mutant::WalkLengthOffByOne),
    };
    let report = run_verify(&opts)?;
    let stdout = match args.format_or(Format::Text) {
        Format::Json => to_json(&report),
        Format::Text => render_verify_text(&report),
    };
    Ok(Output { stdout, exit: if report.passed { EXIT_OK } else { EXIT_INTERNAL } })
}

fn render_verify_text(report: &VerifyReport) -> String {
    let mut s = String::new();
    for suite in &report.suites {
        let status = if suite.passed { "pass" } else { "FAIL" };
        let _ = writeln!(s, "{status} {} ({} checks)", suite.suite, suite.checks);
        if let Some(ce) = &suite.counterexample {
            let _ = writeln!(s, "  counterexample {}: {}", ce.case, ce.detail);
            if let Some(g) = &ce.graph {
                let _ = writeln!(s, "  graph {}", serde_json::to_string(g).expect("plain data"));
            }
        }
    }
    let _ = writeln!(s, "{}", if report.passed { "all suites passed" } else { "some suites failed" });
    s
}

/// Applies `WALKREF_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("WALKREF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("WALKREF_THREADS must be a positive integer, got {value:?}")))?;
    // A pool that already exists (e.g. in tests) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    configure_threads()?;
    let args = &cli.run;
    match cli.command {
        Command::Refine { graph } => cmd_refine(args, &graph),
        Command::Compare { first, second } => cmd_compare(args, &first, &second),
        Command::MpnnSim { graph } => cmd_mpnn_sim(args, &graph),
        Command::GnnSim { graph } => cmd_gnn_sim(args, &graph),
        Command::Verify { only, mutant } => cmd_verify(args, only, mutant),
    }
}
