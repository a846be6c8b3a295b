use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gp_sparx::experiment::{Experiment, Overrides, Report};
use gp_sparx::switching::Mode;
use gp_sparx::Error;

#[derive(Parser, Debug)]
#[command(
    name = "gp-sparx",
    version,
    about = "Wind farm wake modelling with switched GP-SPARX models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, default_value = "configs/desk_scale.json")]
    config: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Prediction mode: osa or cascade.
    #[arg(long, global = true)]
    mode: Option<Mode>,

    /// Read configured angles as degrees.
    #[arg(long, global = true)]
    degrees: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate training and test datasets.
    Simulate,
    /// Fit one model per training angle and write the manifest.
    Train,
    /// Run the switched model over the test sweep and write the report.
    Evaluate,
    /// Simulate, train and evaluate, then print a summary.
    Report,
}

fn print_summary(report: &Report) {
    let s = &report.summary;
    println!("mode                {}", s.mode);
    println!("records             {}", s.n_records);
    println!("polar bins          {} ({} empty)", s.n_bins, s.empty_bins);
    println!("global mse          {:.6}", s.global_mse);
    match s.global_nmse {
        Some(v) => println!("global nmse (%)     {v:.4}"),
        None => println!("global nmse (%)     n/a"),
    }
    for (i, v) in s.per_turbine_nmse.iter().enumerate() {
        match v {
            Some(v) => println!("  turbine {:<3}       {v:.4}", i + 1),
            None => println!("  turbine {:<3}       n/a", i + 1),
        }
    }
    let b = &s.bands;
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
    println!(
        "near training mse   {} ({} records)",
        show(b.training_mse),
        b.training_count
    );
    println!(
        "near boundary mse   {} ({} records)",
        show(b.boundary_mse),
        b.boundary_count
    );
    println!("boundary/training   {}", show(b.ratio));
}

fn run(cli: &Cli) -> Result<(), Error> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        mode: cli.mode,
        degrees: cli.degrees,
    };
    let experiment = Experiment::load(&cli.config, &overrides)?;
    match cli.command {
        Command::Simulate => {
            for path in experiment.simulate()? {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Train => {
            let outcome = experiment.train()?;
            log::info!("wrote {}", outcome.manifest_path.display());
        }
        Command::Evaluate => {
            experiment.evaluate()?;
            log::info!("wrote {}", experiment.report_dir().display());
        }
        Command::Report => {
            experiment.simulate()?;
            experiment.train()?;
            let report = experiment.evaluate()?;
            print_summary(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
