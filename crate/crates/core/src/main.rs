use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qclab::surface::{catalog, catalog_equation, load_surface_spec, Quadric, CATALOG};
use qclab::verify::accept::{emit_accept, run_acceptance, AcceptOptions};
use qclab::verify::report::{emit_report, Format};
use qclab::verify::{run_suite, SuiteSpec, DEFAULT_JET_ORDER, DEFAULT_POINTS, DEFAULT_SEED};

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;

/// Numerical checks of quaternionic contact geometry on quadric
/// hypersurfaces of flat quaternionic space.
#[derive(Parser)]
#[command(name = "qclab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in surfaces and their defining equations.
    Catalog,
    /// Run the identity suite on one surface.
    Check(CheckArgs),
    /// Run the full acceptance matrix.
    Accept(AcceptArgs),
}

#[derive(Args)]
struct Common {
    /// Number of sample points.
    #[arg(long, default_value_t = DEFAULT_POINTS)]
    points: usize,
    /// Sampler seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Chart jet order (3 to 5); groups needing more derivatives raise it.
    #[arg(long = "jet-order", default_value_t = DEFAULT_JET_ORDER)]
    jet_order: usize,
    /// Emit the machine-readable JSON report.
    #[arg(long)]
    machine: bool,
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Catalog surface name or path to a surface spec (TOML).
    surface: String,
    /// Quaternionic dimension for catalog surfaces.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Relative tolerance applied to every identity.
    #[arg(long)]
    tol: Option<f64>,
    /// Per-identity tolerance, `id=value`; may repeat.
    #[arg(long = "tol-for", value_parser = parse_override)]
    tol_for: Vec<(String, f64)>,
    /// Restrict to these identity ids or `group.` prefixes (comma separated).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AcceptArgs {
    /// Skip the second run that checks reports are reproducible.
    #[arg(long)]
    no_determinism: bool,
    #[command(flatten)]
    common: Common,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (id, v) = s.split_once('=').ok_or_else(|| format!("expected id=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad tolerance '{v}': {e}"))?;
    Ok((id.to_string(), v))
}

fn load_surface(arg: &str, n: usize) -> Result<Quadric, String> {
    if CATALOG.contains(&arg) {
        return catalog(arg, n).map_err(|e| e.to_string());
    }
    let path = Path::new(arg);
    if path.exists() {
        return load_surface_spec(path).map_err(|e| format!("{}: {e}", path.display()));
    }
    Err(format!("'{arg}' is neither a catalog surface ({}) nor a readable file", CATALOG.join(", ")))
}

fn deliver(text: &str, output: &Option<PathBuf>) -> Result<(), String> {
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    if let Some(p) = output {
        std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn format_of(c: &Common) -> Format {
    if c.machine {
        Format::Machine
    } else {
        Format::Human
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Catalog => {
            for name in CATALOG {
                println!("{:<12} {}", name, catalog_equation(name).unwrap_or(""));
            }
            Ok(true)
        }
        Command::Check(a) => {
            let mut spec = SuiteSpec::new(load_surface(&a.surface, a.n)?);
            spec.points = a.common.points;
            spec.seed = a.common.seed;
            spec.jet_order = a.common.jet_order;
            spec.tolerance = a.tol;
            spec.tolerances = a.tol_for.into_iter().collect::<BTreeMap<_, _>>();
            spec.only = (!a.only.is_empty()).then_some(a.only);
            let report = run_suite(&spec).map_err(|e| e.to_string())?;
            deliver(&emit_report(&report, format_of(&a.common)), &a.common.output)?;
            Ok(report.pass)
        }
        Command::Accept(a) => {
            let opts = AcceptOptions {
                points: a.common.points,
                seed: a.common.seed,
                jet_order: a.common.jet_order,
                determinism: !a.no_determinism,
            };
            let report = run_acceptance(&opts).map_err(|e| e.to_string())?;
            deliver(&emit_accept(&report, format_of(&a.common)), &a.common.output)?;
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
