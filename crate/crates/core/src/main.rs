use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdc_kit::collocation::{CollocationTable, NodeFamily};
use sdc_kit::harness::{
    parse_key_values, problem_from_settings, run_study, sdc_from_settings, study_from_settings, Settings,
};
use sdc_kit::imex::SolverTolerances;
use sdc_kit::sdc::Sdc;
use sdc_kit::snapshot::save_snapshot;
use sdc_kit::{Error, ImexSystem, Result};

#[derive(Parser)]
#[command(name = "sdc-kit", version, about = "Fast-wave/slow-wave IMEX SDC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Temporal convergence study written as CSV.
    Study {
        /// Flat `key = value` file; flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        method: Method,
        /// Comma separated, strictly decreasing step sizes.
        #[arg(long)]
        dts: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// analytic, ssprk3 or self.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long = "dt-ref")]
        dt_ref: Option<f64>,
        /// Directory for cached reference solutions.
        #[arg(long = "cache-dir")]
        cache_dir: Option<PathBuf>,
    },
    /// Single simulation emitting snapshot CSVs.
    Run {
        #[command(flatten)]
        method: Method,
        #[arg(long)]
        dt: f64,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Keep every n-th step; the initial and final states are always written.
        #[arg(long, default_value_t = 0)]
        stride: usize,
    },
    /// Print the collocation table as JSON.
    Tables {
        #[arg(long = "M")]
        m: usize,
        #[arg(long, default_value = "gauss")]
        family: NodeFamily,
    },
}

#[derive(Args)]
struct Method {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    /// gauss, radau-right or lobatto.
    #[arg(long)]
    family: Option<String>,
    /// IE, LU or MIN-SR-FLEX.
    #[arg(long = "qdelta-imp")]
    qdelta_imp: Option<String>,
    /// EE or MIN-SR-NS.
    #[arg(long = "qdelta-exp")]
    qdelta_exp: Option<String>,
    /// copy or low-order.
    #[arg(long)]
    guess: Option<String>,
    /// collocation or copy-node.
    #[arg(long = "final")]
    final_update: Option<String>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Implicit solver tolerance (absolute and relative).
    #[arg(long)]
    tol: Option<f64>,
}

impl Method {
    fn apply(&self, settings: &mut Settings) {
        let entries = [
            ("problem", self.problem.clone()),
            ("M", self.m.map(|v| v.to_string())),
            ("K", self.k.map(|v| v.to_string())),
            ("family", self.family.clone()),
            ("qdelta_imp", self.qdelta_imp.clone()),
            ("qdelta_exp", self.qdelta_exp.clone()),
            ("guess", self.guess.clone()),
            ("final", self.final_update.clone()),
            ("t_end", self.t_end.map(|v| v.to_string())),
            ("tol", self.tol.map(|v| v.to_string())),
        ];
        for (key, value) in entries {
            if let Some(v) = value {
                settings.insert(key.to_string(), v);
            }
        }
    }
}

fn study(
    config: Option<PathBuf>,
    method: &Method,
    extra: [(&str, Option<String>); 5],
) -> Result<()> {
    let mut settings = match config {
        Some(path) => parse_key_values(&std::fs::read_to_string(path)?)?,
        None => Settings::new(),
    };
    method.apply(&mut settings);
    for (key, value) in extra {
        if let Some(v) = value {
            settings.insert(key.to_string(), v);
        }
    }
    let config = study_from_settings(&settings)?;
    let outcome = run_study(&config)?;
    println!("{:>14}  {:>12}  {:>8}", "dt", "error_l2", "order");
    for row in &outcome.rows {
        let order = row.observed_order.map(|o| format!("{o:.3}")).unwrap_or_default();
        println!("{:>14.6e}  {:>12.4e}  {:>8}", row.dt, row.error_l2, order);
    }
    let order = outcome.fitted_order()?;
    println!("fitted order {order:.3}");
    Ok(())
}

fn run(method: &Method, dt: f64, out_dir: PathBuf, stride: usize) -> Result<()> {
    let mut settings = Settings::new();
    method.apply(&mut settings);
    let spec = problem_from_settings(&settings)?;
    let sdc = Sdc::new(sdc_from_settings(&settings, SolverTolerances::default().nonlinear_abs)?)?;
    let t_end = method.t_end.ok_or_else(|| Error::InvalidConfig("--t-end is required".into()))?;
    let steps = (t_end / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::InvalidConfig(format!("dt = {dt} does not divide t_end = {t_end}")));
    }
    let problem = spec.build()?;
    let run = sdc.integrate(&problem, &problem.initial_state(), 0.0, t_end, steps, Some(stride))?;
    std::fs::create_dir_all(&out_dir)?;
    let layout = problem.layout();
    for snap in &run.snapshots {
        save_snapshot(&out_dir.join(format!("snapshot_{:06}.csv", snap.step)), &layout, &snap.state)?;
    }
    println!(
        "{} steps, {} implicit solves, {} snapshots in {}",
        steps,
        run.report.implicit_solve_count,
        run.snapshots.len(),
        out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Study { config, method, dts, out, reference, dt_ref, cache_dir } => study(
            config,
            &method,
            [
                ("dts", dts),
                ("out", out.map(|p| p.display().to_string())),
                ("reference", reference),
                ("dt_ref", dt_ref.map(|v| v.to_string())),
                ("cache_dir", cache_dir.map(|p| p.display().to_string())),
            ],
        ),
        Command::Run { method, dt, out_dir, stride } => run(&method, dt, out_dir, stride),
        Command::Tables { m, family } => {
            CollocationTable::new(family, m).and_then(|t| t.to_json()).map(|json| println!("{json}"))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::DegenerateFit(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
