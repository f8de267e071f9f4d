use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use goldilocks::harness::checks::{
    invert_check, moments_check, ode_check, InvertCheckConfig, MomentsCheckConfig, OdeCheckConfig,
};
use goldilocks::harness::emit::write_json;
use goldilocks::harness::experiment::{initial_network, load_network, run_toy_experiment};
use goldilocks::harness::views::{write_backprojection, write_phase_diagram};
use goldilocks::harness::{run_comparison, ExperimentConfig};
use goldilocks::interpret::{Formulation, Grid2d};
use goldilocks::{Activation, Error, Network, Result};

#[derive(Parser)]
#[command(name = "goldilocks", version, about = "Goldilocks residual network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Hidden-layer activation.
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    output_activation: Option<Activation>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    Direct,
    Interpretable,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy classifier and write trajectory, hyperplane, metric and report files.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Train several activations over a seed set and write comparison.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Check the moments lemma against Monte-Carlo and write moments_report.json.
    MomentsCheck {
        #[command(flatten)]
        common: Common,
        /// Restrict the grid to one activation.
        #[arg(long)]
        activation: Option<Activation>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Integrate the scalar flow and write ode_report.json.
    Ode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        activation: Option<Activation>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        span: Option<f64>,
    },
    /// Round-trip exact and first-order inverses and write invert_report.json.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Write phase_diagram.csv for a trained (or freshly initialised) network.
    PhaseDiagram {
        #[command(flatten)]
        common: Common,
        /// network.json written by `train`; otherwise the config's initial network.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Layers to draw; all 2 -> 2 layers by default.
        #[arg(long, value_delimiter = ',')]
        layer: Vec<usize>,
        #[arg(long, value_enum, default_value = "direct")]
        formulation: FormulationArg,
        #[arg(long, default_value_t = -4.0)]
        grid_min: f64,
        #[arg(long, default_value_t = 4.0)]
        grid_max: f64,
        #[arg(long, default_value_t = 21)]
        grid_steps: usize,
    },
    /// Write output archetypes and hyperplanes in input coordinates.
    Backproject {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: Option<PathBuf>,
    },
}

fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn experiment_config(common: &Common, flags: &TrainFlags) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(a) = flags.activation {
        cfg.activation = a;
    }
    if let Some(a) = flags.output_activation {
        cfg.output_activation = a;
    }
    if let Some(e) = flags.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = flags.lr {
        cfg.learning_rate = lr;
    }
    if let Some(l2) = flags.l2 {
        cfg.l2_beta = l2;
    }
    if let Some(p) = flags.dropout {
        cfg.dropout_prob = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn network_for(common: &Common, network: &Option<PathBuf>) -> Result<Network> {
    match network {
        Some(p) => load_network(p),
        None => initial_network(&experiment_config(common, &TrainFlags::none())?),
    }
}

impl TrainFlags {
    fn none() -> Self {
        Self {
            activation: None,
            output_activation: None,
            epochs: None,
            lr: None,
            l2: None,
            dropout: None,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, flags } => {
            let cfg = experiment_config(&common, &flags)?;
            let report = run_toy_experiment(&cfg)?;
            eprintln!("trained in {:.2}s", report.wall_clock_secs);
            println!("final_error {}", report.final_error);
            for a in &report.artifacts {
                println!("wrote {a}");
            }
        }
        Command::Compare { common, flags } => {
            let cfg = experiment_config(&common, &flags)?;
            for row in run_comparison(&cfg)? {
                println!(
                    "{:<18} reached {}/{} median epochs {} best error {}",
                    row.activation,
                    row.runs_reaching_target,
                    row.seeds.len(),
                    row.median_epochs_to_target.map_or("NA".into(), |v| v.to_string()),
                    row.best_error
                );
            }
            println!("wrote {}", cfg.out_dir.join("comparison.csv").display());
        }
        Command::MomentsCheck {
            common,
            activation,
            samples,
        } => {
            let mut cfg: MomentsCheckConfig = load_json(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(a) = activation {
                cfg.activations = vec![a];
            }
            if let Some(n) = samples {
                cfg.samples = n;
            }
            let report = moments_check(&cfg)?;
            let path = out_dir(&common)?.join("moments_report.json");
            write_json(&path, &report)?;
            println!("{}/{} cases within tolerance", report.passed, report.cases.len());
            println!("wrote {}", path.display());
        }
        Command::Ode {
            common,
            activation,
            step,
            span,
        } => {
            let mut cfg: OdeCheckConfig = load_json(common.config.as_deref())?;
            if let Some(a) = activation {
                cfg.activation = a;
            }
            if let Some(s) = step {
                cfg.step = s;
            }
            if let Some(s) = span {
                cfg.span = s;
            }
            let report = ode_check(&cfg)?;
            let path = out_dir(&common)?.join("ode_report.json");
            write_json(&path, &report)?;
            println!(
                "invariant change {} (expected {}), drift {:e}, halving ratio {}",
                report.run.invariant_change, report.expected_change, report.run.drift, report.halving_ratio
            );
            println!("wrote {}", path.display());
        }
        Command::Invert { common, tol } => {
            let mut cfg: InvertCheckConfig = load_json(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(t) = tol {
                cfg.tol = t;
            }
            let report = invert_check(&cfg)?;
            let path = out_dir(&common)?.join("invert_report.json");
            write_json(&path, &report)?;
            println!(
                "exact round trip {:e}, first-order error ratios {:?}",
                report.max_round_trip_error, report.error_ratios
            );
            println!("wrote {}", path.display());
        }
        Command::PhaseDiagram {
            common,
            network,
            layer,
            formulation,
            grid_min,
            grid_max,
            grid_steps,
        } => {
            let net = network_for(&common, &network)?;
            let layers = if layer.is_empty() {
                net.layers()
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| l.in_dim() == 2 && l.out_dim() == 2)
                    .map(|(k, _)| k)
                    .collect()
            } else {
                layer
            };
            let formulation = match formulation {
                FormulationArg::Direct => Formulation::Direct,
                FormulationArg::Interpretable => Formulation::Interpretable,
            };
            let path = out_dir(&common)?.join("phase_diagram.csv");
            let grid = Grid2d::square(grid_min, grid_max, grid_steps);
            let n = write_phase_diagram(&net, &grid, &layers, formulation, &path)?;
            println!("wrote {} arrows to {}", n, path.display());
        }
        Command::Backproject { common, network } => {
            let net = network_for(&common, &network)?;
            for p in write_backprojection(&net, &out_dir(&common)?)? {
                println!("wrote {p}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
