use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::{Report, Status};

/// Exit code for command-line usage errors (BSD `EX_USAGE`).
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "freelab", version, about = "Computations in Lipschitz-free spaces over finite metric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Seed for every randomized procedure.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Report format; tabular commands offer CSV.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or validate metric spaces.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Free-space norm of a finite measure, primal and dual.
    Norm(NormArgs),
    /// Retraction systems: build, validate, Lipschitz profile, chains.
    #[command(subcommand)]
    System(SystemCmd),
    /// Basis constants, unconditional constants and conditionality witnesses.
    #[command(subcommand)]
    Basis(BasisCmd),
    /// Lower-bound searches over retraction systems on circles.
    #[command(subcommand)]
    Search(SearchCmd),
    /// Extensional projections on circle unions.
    #[command(subcommand)]
    Extensional(ExtCmd),
    /// Canned experiment suites.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand, Debug)]
pub enum SpaceCmd {
    /// Centred circle C_n^0.
    Circle {
        #[arg(long)]
        n: usize,
    },
    /// Union of circles C_4, ..., C_{4^k}.
    Union {
        #[arg(long)]
        k: usize,
    },
    /// Euclidean lattice {0..m}^dim (floating point).
    Grid {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Check every metric axiom of a space file.
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct SpaceArg {
    /// Space file (JSON).
    #[arg(long)]
    pub space: PathBuf,
}

#[derive(Args, Debug)]
pub struct NormArgs {
    #[command(flatten)]
    pub space: SpaceArg,
    /// Measure as `label:coeff,...`, e.g. `x1:1,x2:1,x3:-2`.
    #[arg(long, conflicts_with = "measure_file")]
    pub measure: Option<String>,
    /// Measure as CSV `label,coeff` lines.
    #[arg(long)]
    pub measure_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SystemArgs {
    #[command(flatten)]
    pub space: SpaceArg,
    /// System file (JSON `{order, parent}`).
    #[arg(long)]
    pub system: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum SystemCmd {
    /// Build the retraction table of a system.
    Build(SystemArgs),
    /// Check the retraction axioms, from a system file or a raw table.
    Validate {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long, required_unless_present = "table", conflicts_with = "table")]
        system: Option<PathBuf>,
        /// Raw table `{order: [labels], phi: [[labels]]}` with `phi[i][x] = φ_i(x)`.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Lipschitz constant of every retraction.
    Lip(SystemArgs),
    /// Chain from the base (or `--from`) to a point.
    Chain {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        point: String,
        #[arg(long)]
        from: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum BasisCmd {
    /// Basis constant and every projection norm.
    Const(SystemArgs),
    /// Unconditional constant: exact over all signs or a sampled lower bound.
    Uncond {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, conflicts_with = "samples")]
        exhaustive: bool,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Aligned-chains conditionality witness.
    Witness {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value = "1")]
        alpha: String,
        #[arg(long, default_value = "1")]
        beta: String,
        /// Final point of the first chain; with `--y`. Defaults to the deepest divergent pair.
        #[arg(long, requires = "y")]
        x: Option<String>,
        #[arg(long, requires = "x")]
        y: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    #[arg(long)]
    pub budget_nodes: Option<u64>,
    /// Wall-clock budget; FREELAB_BUDGET_SECS applies when this is absent.
    #[arg(long)]
    pub budget_secs: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum SearchCmd {
    /// Certify that every system on C_n^0 has some Lip φ_i at least the target.
    Circle {
        #[arg(long)]
        n: usize,
        /// `auto` for (√(8n+1) − 1)/8, or a positive rational `p/q`.
        #[arg(long, default_value = "auto")]
        target: String,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Continue from a frontier checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Where to write the frontier if the budget runs out.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Search for a counterexample without trying the heuristics first.
        #[arg(long)]
        no_heuristics: bool,
        /// Keep this many pruned nodes and re-check them independently.
        #[arg(long, default_value_t = 0)]
        recheck: usize,
    },
    /// A heuristic system on C_n^0 and its maximal Lipschitz constant.
    Heuristic {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "greedy-min-lip")]
        strategy: String,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExtCmd {
    /// Exact checks of the extensional projections.
    Verify {
        #[arg(long)]
        k: usize,
        /// Indices `a..b` (half-open); defaults to every index.
        #[arg(long)]
        i_range: Option<String>,
        /// Random functions per index for the Lipschitz check.
        #[arg(long, default_value_t = 3)]
        trials: usize,
    },
    /// Apply P_i to a function given as CSV `label,value`.
    Apply {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        f: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCmd {
    /// Conditionality witnesses on grid nets.
    Lemma41 {
        /// Grid sizes; repeat the flag for several.
        #[arg(long = "grid", default_values_t = [3usize, 4, 5, 6])]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Circle lower-bound certificate against the heuristics.
    Thm32 {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Escape-or-restrict dichotomy on circle unions.
    Dichotomy {
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_USAGE);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(1);
    }
    let ctx = commands::Ctx { threads: cli.threads, seed: cli.seed };
    let result = match cli.command {
        Command::Space(c) => commands::space(c),
        Command::Norm(a) => commands::norm(a),
        Command::System(c) => commands::system(c),
        Command::Basis(c) => commands::basis(c, &ctx),
        Command::Search(c) => commands::search(c, &ctx),
        Command::Extensional(c) => commands::extensional(c, &ctx),
        Command::Experiment(c) => commands::experiment(c, &ctx),
    };
    match result {
        Ok(report) => finish(report, cli.format, cli.output),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn finish(report: Report, format: Option<Format>, output: Option<PathBuf>) -> ExitCode {
    for line in &report.notes {
        eprintln!("{line}");
    }
    let want_csv = format.map_or(report.prefer_csv, |f| f == Format::Csv);
    let text = match (want_csv, &report.csv) {
        (true, Some(csv)) => csv.clone(),
        _ => serde_json::to_string_pretty(&report.json).expect("reports serialize") + "\n",
    };
    let written = match output {
        Some(path) => std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match report.status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Failed => ExitCode::from(1),
        Status::Indeterminate => ExitCode::from(2),
    }
}
