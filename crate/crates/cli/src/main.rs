//! `landau`: batch entry points for the solver and the regularity diagnostics.
//!
//! Exit codes: 0 ok, 2 configuration or validation error, 3 domain or window
//! error, 4 numeric failure.

mod commands;
mod rundir;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "landau", version, about = "Regularized Landau equation: solver and regularity diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver from a TOML configuration and write a run directory.
    Simulate(SimulateArgs),
    /// Moments, scaled entropy terms and local mass terms of a saved run.
    Diagnose(DiagnoseArgs),
    /// Multiscale dissipation scan and covering estimate of the singular set.
    ScanSingular(ScanArgs),
    /// Axisymmetric reduction and the off-axis boundedness criterion.
    Axisym(AxisymArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config path without its extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Report moments only at this time (linear interpolation between frames).
    #[arg(long)]
    pub at: Option<f64>,
    /// Scaled cylinder `t0,vx,vy,vz,eps`.
    #[arg(long, value_parser = commands::parse_list::<5>)]
    pub cylinder: Option<[f64; 5]>,
    #[arg(long, default_value_t = commands::DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Inner radius of the scaled entropy inequality.
    #[arg(long, default_value_t = commands::DEFAULT_RADIUS)]
    pub radius: f64,
    /// Cutoff width of the scaled entropy inequality.
    #[arg(long, default_value_t = commands::DEFAULT_WIDTH)]
    pub width: f64,
    #[arg(long, default_value_t = commands::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Moment table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// One seed `t0 vx vy vz` per line (commas or spaces; `#` starts a comment).
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long, default_value_t = commands::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Flag threshold; repeat the flag for a sweep.
    #[arg(long, default_values_t = [landau_core::regularity::ETA_DG_PLUS_DEFAULT])]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = commands::DEFAULT_J_MAX)]
    pub j_max: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AxisymArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Axis `bx,by,bz,dx,dy,dz` (base point and direction).
    #[arg(long, value_parser = commands::parse_list::<6>, default_value = "0,0,0,0,0,1")]
    pub axis: [f64; 6],
    /// Off-axis point `vx,vy,vz`.
    #[arg(long, value_parser = commands::parse_list::<3>)]
    pub point: [f64; 3],
    /// Time of the point; defaults to the last saved frame.
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub ladder: Option<usize>,
    /// Write the reduced profile of the frame nearest `t0` (LNDA format).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::ScanSingular(a) => commands::scan_singular(&a),
        Command::Axisym(a) => commands::axisym(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("landau: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
