use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use viscobem::case::{load_config, run_case, write_error};
use viscobem::model::{generate_mesh, MeshShape, QuarterDiskSpec, RectangleSpec};

#[derive(Parser)]
#[command(name = "viscobem", version, about = "Quasistatic visco-elastic boundary element solver (2D plane strain)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case and write CSV outputs into a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the time step of the configuration.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Generate a mesh file.
    Mesh {
        #[command(subcommand)]
        shape: Shape,
        /// Output file (stdout when omitted).
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum Shape {
    Rectangle {
        #[arg(long)]
        length: f64,
        #[arg(long)]
        height: f64,
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long, default_value_t = 0)]
        region: usize,
        #[arg(long, default_value = "")]
        prefix: String,
    },
    QuarterDisk {
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        contact_angle: f64,
        #[arg(long)]
        n_contact: usize,
        #[arg(long)]
        n_arc: usize,
        #[arg(long)]
        n_straight: usize,
    },
}

const CONFIG_ERROR: u8 = 2;
const SOLVER_ERROR: u8 = 3;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, tau } => {
            let case = match load_config(&config).and_then(|c| match tau {
                Some(t) => c.with_step(t),
                None => Ok(c),
            }) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    write_error(&out, &e);
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            match run_case(&case, &out) {
                Ok(s) => {
                    println!("{} steps written to {}", s.steps, out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    write_error(&out, &e);
                    ExitCode::from(SOLVER_ERROR)
                }
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(c) => {
                println!(
                    "ok: {} nodes, {} elements, {} steps",
                    c.setup.mesh.node_count(),
                    c.setup.mesh.elements.len(),
                    (c.total / c.tau).round()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Mesh { shape, out } => {
            let shape = match shape {
                Shape::Rectangle { length, height, nx, ny, region, prefix } => {
                    MeshShape::Rectangle(RectangleSpec { origin: [0.0, 0.0], length, height, nx, ny, region, prefix })
                }
                Shape::QuarterDisk { radius, contact_angle, n_contact, n_arc, n_straight } => {
                    MeshShape::QuarterDisk(QuarterDiskSpec {
                        radius,
                        contact_angle_deg: contact_angle,
                        n_contact,
                        n_arc,
                        n_straight,
                    })
                }
            };
            let text = match generate_mesh(&shape) {
                Ok(m) => m.to_text(),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            match out {
                Some(p) => {
                    if let Err(e) = fs::write(&p, text) {
                        eprintln!("error: {}: {e}", p.display());
                        return ExitCode::from(SOLVER_ERROR);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
    }
}
