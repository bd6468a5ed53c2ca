mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tmshift::dlr::Scheme;
use tmshift::modelfile::parse_model;
use tmshift::Error;

use commands::{Common, DualityArgs, WalkArgs};
use output::{emit, Format};

/// Exit status when the Green series diverges.
const EXIT_DIVERGING: u8 = 4;
/// Exit status when a computation ends without a certificate either way.
const EXIT_INCONCLUSIVE: u8 = 5;
/// Exit status for malformed model files and invalid inputs.
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "tmshift", version, about = "Green functions, Martin boundaries and conformal measures of countable Markov shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML model file.
    #[arg(long)]
    model: PathBuf,
    /// Spectral parameter.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Relative tolerance of Green-series certificates.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Maximum number of Green-series terms.
    #[arg(long, default_value_t = 4000)]
    n_cap: usize,
    /// Radius and maximum word length of the test cylinders.
    #[arg(long, default_value_t = 2)]
    test_depth: usize,
    /// Rho resolution of boundary clustering.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Write `<subcommand>.json` or `<subcommand>.txt` into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    PosRecurrent,
    NullRecurrent,
    Transient,
}

#[derive(Subcommand)]
enum Command {
    /// Certified Green function G(1_[w], x | lambda).
    Green {
        #[command(flatten)]
        common: CommonArgs,
        /// Point `prefix|cycle` or `@family:n`; defaults to the anchored point of the origin.
        #[arg(long)]
        point: Option<String>,
        /// Comma-separated cylinder word; defaults to the origin.
        #[arg(long)]
        cylinder: Option<String>,
    },
    /// Martin kernel K(1_[w], x | lambda) at a point or along every orbit.
    Kernel {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        cylinder: Option<String>,
    },
    /// Boundary atlas from escaping orbits.
    Atlas {
        #[command(flatten)]
        common: CommonArgs,
        /// Work on the reversed shift with its own escape families.
        #[arg(long)]
        reversed: bool,
    },
    /// Finite-volume approximations of a thermodynamic limit.
    Thermo {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = SchemeArg::Transient)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 30)]
        n_max: usize,
        /// Work on the reversed shift.
        #[arg(long)]
        reversed: bool,
        #[arg(long)]
        point: Option<String>,
        #[arg(long)]
        cylinder: Option<String>,
    },
    /// DLR and conformality checks for every measure of the model file.
    Dlr {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest prefix length conditioned on.
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Number of tail coordinates fixed.
        #[arg(long, default_value_t = 2)]
        depth: usize,
    },
    /// Monte-Carlo hitting distribution of the model's random walk at lambda = 1.
    Walk {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        #[arg(long, default_value_t = 2)]
        ball_radius: usize,
        #[arg(long, default_value_t = 20)]
        settle: usize,
    },
    /// Transience duality and, with path measures `f` and `h`, the ratio-limit experiment.
    Duality {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        seed: u64,
        /// Run the ratio-limit experiment on the reversed shift.
        #[arg(long)]
        reversed: bool,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Green { common, .. }
            | Command::Kernel { common, .. }
            | Command::Atlas { common, .. }
            | Command::Thermo { common, .. }
            | Command::Dlr { common, .. }
            | Command::Walk { common, .. }
            | Command::Duality { common, .. } => common,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverging { .. } => EXIT_DIVERGING,
        Error::BudgetExhausted { .. } | Error::LayerLimit { .. } | Error::NotCauchy { .. } | Error::NotEscaping(_) => EXIT_INCONCLUSIVE,
        Error::Parse { .. }
        | Error::InvalidParameter(_)
        | Error::UnknownState(_)
        | Error::Inadmissible { .. }
        | Error::EmptyWord
        | Error::DirectionMismatch
        | Error::MissingWeight(_)
        | Error::RangeTooLarge(_)
        | Error::NotHarmonic { .. }
        | Error::NotExcessive { .. } => EXIT_VALIDATION,
        _ => 1,
    }
}

fn run(cmd: &Command) -> Result<(), (u8, String)> {
    let ca = cmd.common();
    let path = &ca.model;
    let text = std::fs::read_to_string(path).map_err(|e| (1, format!("cannot read {}: {e}", path.display())))?;
    let lib = |e: Error| (exit_code(&e), format!("{}: {e}", path.display()));
    let file = parse_model(&text).map_err(lib)?;
    let c = Common {
        lambda: ca.lambda,
        tol: ca.tol,
        n_cap: ca.n_cap,
        test_depth: ca.test_depth,
        eps: ca.eps,
    };
    if !(c.lambda > 0.0 && c.tol > 0.0 && c.eps > 0.0) || c.test_depth == 0 {
        return Err(lib(Error::InvalidParameter(
            "--lambda, --tol and --eps must be positive and --test-depth at least 1".into(),
        )));
    }
    let report = match cmd {
        Command::Green { point, cylinder, .. } => commands::green_cmd(&file, &c, point.as_deref(), cylinder.as_deref()),
        Command::Kernel { point, cylinder, .. } => commands::kernel_cmd(&file, &c, point.as_deref(), cylinder.as_deref()),
        Command::Atlas { reversed, .. } => commands::atlas_cmd(&file, &c, *reversed),
        Command::Thermo {
            scheme,
            n_max,
            reversed,
            point,
            cylinder,
            ..
        } => {
            let scheme = match scheme {
                SchemeArg::PosRecurrent => Scheme::PosRecurrent,
                SchemeArg::NullRecurrent => Scheme::NullRecurrent,
                SchemeArg::Transient => Scheme::Transient,
            };
            commands::thermo_cmd(&file, &c, scheme, *n_max, *reversed, point.as_deref(), cylinder.as_deref())
        }
        Command::Dlr { n, depth, .. } => commands::dlr_cmd(&file, &c, *n, *depth),
        Command::Walk {
            seed,
            samples,
            horizon,
            ball_radius,
            settle,
            ..
        } => commands::walk_cmd(
            &file,
            &c,
            &WalkArgs {
                seed: *seed,
                samples: *samples,
                horizon: *horizon,
                ball_radius: *ball_radius,
                settle: *settle,
            },
        ),
        Command::Duality {
            seed,
            reversed,
            steps,
            samples,
            ..
        } => commands::duality_cmd(
            &file,
            &c,
            &DualityArgs {
                seed: *seed,
                reversed: *reversed,
                steps: *steps,
                samples: *samples,
            },
        ),
    }
    .map_err(lib)?;
    emit(&report, ca.format, ca.out.as_deref()).map_err(|e| (1, format!("cannot write output: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
