//! Command-line entry point: load a geometry description, run identity
//! suites over its sample grid, and emit text and JSON reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nullgeo::report::VerificationReport;
use nullgeo::spec::LoadedGeometry;
use nullgeo::suites::{verify, RunConfig, Suite};
use nullgeo::Error;

#[derive(Parser)]
#[command(
    name = "nullgeo",
    version,
    about = "Numerical verification engine for the geometry of lightlike hypersurfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a geometry spec and run identity suites over its sample grid.
    Verify {
        /// Path to a GeometrySpec JSON file, or the name of a built-in fixture.
        #[arg(long)]
        spec: String,
        /// Identity suite: all, hypersurface, degcalc, weyl, foliation, kaehler.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Number of seeded random interior sample points (overrides the spec).
        #[arg(long)]
        points: Option<usize>,
        /// Random seed (overrides the spec).
        #[arg(long)]
        seed: Option<u64>,
        /// Tolerance override for curvature-level identities.
        #[arg(long)]
        tol_curvature: Option<f64>,
        /// Write the JSON report to this path as well.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// List the built-in fixtures.
    Fixtures,
}

fn run_verify(
    spec: &str,
    suite: &str,
    cfg: &RunConfig,
    report_path: Option<&PathBuf>,
) -> Result<VerificationReport, Error> {
    let text = if std::path::Path::new(spec).exists() {
        std::fs::read_to_string(spec)?
    } else if let Some(f) = nullgeo::fixtures::by_name(spec) {
        f.json.to_string()
    } else {
        return Err(Error::schema(format!(
            "spec '{spec}' is neither a readable file nor a built-in fixture"
        )));
    };
    let suite = Suite::parse(suite)
        .ok_or_else(|| Error::schema(format!("unknown suite '{suite}'")))?;
    let geo = LoadedGeometry::from_json(&text)?;
    let report = verify(&geo, suite, cfg)?;
    if let Some(path) = report_path {
        std::fs::write(path, report.to_json())?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify {
            spec,
            suite,
            points,
            seed,
            tol_curvature,
            report,
        } => {
            let cfg = RunConfig {
                random_points: points,
                seed,
                tol_curvature,
            };
            match run_verify(&spec, &suite, &cfg, report.as_ref()) {
                Ok(rep) => {
                    print!("{}", rep.render_text());
                    if rep.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Fixtures => {
            print!("{}", nullgeo::fixtures::render_table());
            ExitCode::SUCCESS
        }
    }
}
