use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use minmap_cli::config;
use minmap_cli::{
    run, CliError, Scenario, ScenarioConfig, CONVERGENCE_COLUMNS, CURVATURE_COLUMNS,
    GEOMETRY_COLUMNS, MONITOR_COLUMNS, POINTWISE_COLUMNS, RESIDUAL_COLUMNS,
};

/// Minimal-map geometry toolkit: pointwise analysis, identity checks,
/// refinement studies and tension flows for maps between conformal surfaces.
#[derive(Parser, Debug)]
#[command(
    name = "minmap",
    version,
    after_help = "Exit status: 0 ok, 1 i/o, 2 config/parse, 3 chart domain, 4 numerical."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pointwise singular values, Jacobians, Kähler angles and graph geometry.
    #[command(after_help = const_format(&[POINTWISE_COLUMNS, GEOMETRY_COLUMNS]))]
    Analyze(Common),
    /// Residuals of every geometric identity on one grid.
    #[command(after_help = RESIDUAL_COLUMNS)]
    Verify(Common),
    /// Convergence orders of |H| and every identity over nested grids.
    #[command(after_help = CONVERGENCE_COLUMNS)]
    Refine(Common),
    /// Explicit tension flow towards a minimal map.
    #[command(after_help = const_format(&[MONITOR_COLUMNS, "snapshot_final.txt: header `nx ny hx hy x0 y0`, then `i j f1 f2` rows"]))]
    Flow(Common),
    /// Gauss curvature of both metrics, analytic against finite differences.
    #[command(after_help = CURVATURE_COLUMNS)]
    Curvature(Common),
}

fn const_format(lines: &[&str]) -> String {
    lines.join("\n")
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points per side; overrides `[grid]` sizes.
    #[arg(long)]
    grid: Option<usize>,
    /// Map preset. Without `--config` this selects a built-in scenario
    /// (paper_example, identity, z_squared, perturbed_z_squared, constant).
    #[arg(long)]
    preset: Option<String>,
}

fn resolve(c: &Common) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(p)) => ScenarioConfig::preset(p)?,
        (None, None) => return Err(CliError::config("either --config or --preset is required")),
    };
    if let (Some(_), Some(p)) = (&c.config, &c.preset) {
        cfg.map = config::MapSpec {
            preset: p.clone(),
            ..cfg.map
        };
    }
    if let Some(n) = c.grid {
        cfg.grid.n = Some(n);
        cfg.grid.nx = None;
        cfg.grid.ny = None;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, common) = match &cli.command {
        Command::Analyze(c) => (Scenario::Analyze, c),
        Command::Verify(c) => (Scenario::Verify, c),
        Command::Refine(c) => (Scenario::Refine, c),
        Command::Flow(c) => (Scenario::Flow, c),
        Command::Curvature(c) => (Scenario::Curvature, c),
    };
    let result = resolve(common).and_then(|(cfg, out)| {
        if let Some(s) = cfg.scenario {
            if s != scenario {
                eprintln!("note: config names scenario {s:?}, running {scenario:?}");
            }
        }
        run(scenario, &cfg, &out)
    });
    match result {
        Ok(report) => {
            print!("{}", report.summary);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
