use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmat::experiment::{self, ExperimentConfig, ExperimentKind, GeometryKind, KernelKind, SizeControl};
use hmat::hmatrix::snapshot;
use hmat::{HMatrix, HmatError};

/// Hierarchical matrix experiments for Laplace, Helmholtz and elastodynamic kernels.
#[derive(Parser, Debug)]
#[command(name = "hmat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write CSV.
    Run {
        #[arg(long, value_enum)]
        experiment: ExperimentArg,
        #[command(flatten)]
        problem: ProblemArgs,
        /// Diagonal shift for coincident points (default: point count).
        #[arg(long)]
        shift: Option<f64>,
        /// Also compute the true residual against the dense matrix.
        #[arg(long)]
        dense_oracle: bool,
        /// Also run GMRES and report its iteration count.
        #[arg(long)]
        gmres: bool,
        /// Output file (default: stdout).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Save or inspect binary snapshots.
    Snapshot {
        #[command(subcommand)]
        action: SnapshotAction,
    },
}

#[derive(Subcommand, Debug)]
enum SnapshotAction {
    /// Assemble one instance and save the matrix (or its LU factors).
    Save {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        factors: bool,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Load a snapshot and print a summary.
    Load {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        factors: bool,
    },
}

#[derive(Args, Debug)]
struct ProblemArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    geometry: GeometryArg,
    #[arg(long, value_enum, default_value = "elasto-u")]
    kernel: KernelArg,
    /// Angular frequencies (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "3")]
    omega: Vec<f64>,
    /// Point counts (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "density")]
    count: Vec<usize>,
    /// Points per S-wavelength; overrides --count.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps_aca: f64,
    /// Defaults to --eps-aca.
    #[arg(long)]
    eps_lu: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    eta: f64,
    #[arg(long, default_value_t = 100)]
    n_leaf: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sphere radius or plate half width.
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExperimentArg {
    RankTable,
    Storage,
    Solve,
    Estimator,
    RankVsFrequency,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GeometryArg {
    Plate,
    Sphere,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KernelArg {
    Laplace,
    Helmholtz,
    ElastoU,
    ElastoT,
}

impl ProblemArgs {
    fn config(&self, experiment: ExperimentKind) -> ExperimentConfig {
        let size = match self.density {
            Some(d) => SizeControl::Density(d),
            None if self.count.is_empty() => SizeControl::Count(vec![1000]),
            None => SizeControl::Count(self.count.clone()),
        };
        ExperimentConfig {
            experiment,
            geometry: match self.geometry {
                GeometryArg::Plate => GeometryKind::Plate,
                GeometryArg::Sphere => GeometryKind::Sphere,
            },
            kernel: match self.kernel {
                KernelArg::Laplace => KernelKind::Laplace,
                KernelArg::Helmholtz => KernelKind::Helmholtz,
                KernelArg::ElastoU => KernelKind::ElastoU,
                KernelArg::ElastoT => KernelKind::ElastoT,
            },
            omegas: self.omega.clone(),
            size,
            nu: self.nu,
            rho: self.rho,
            mu: self.mu,
            eps_aca: self.eps_aca,
            eps_lu: self.eps_lu,
            eta: self.eta,
            n_leaf: self.n_leaf,
            seed: self.seed,
            extent: self.extent,
            ..Default::default()
        }
    }
}

fn exit_code(e: &HmatError) -> u8 {
    match e {
        _ if e.is_numerical() => 3,
        HmatError::Io(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), HmatError> {
    match cli.command {
        Command::Run { experiment, problem, shift, dense_oracle, gmres, output } => {
            let kind = match experiment {
                ExperimentArg::RankTable => ExperimentKind::RankTable,
                ExperimentArg::Storage => ExperimentKind::Storage,
                ExperimentArg::Solve => ExperimentKind::Solve,
                ExperimentArg::Estimator => ExperimentKind::Estimator,
                ExperimentArg::RankVsFrequency => ExperimentKind::RankVsFrequency,
            };
            let cfg = ExperimentConfig { shift, dense_oracle, gmres, output, ..problem.config(kind) };
            experiment::run_experiment(&cfg, &mut std::io::stdout().lock())?;
        }
        Command::Snapshot { action: SnapshotAction::Save { problem, factors, output } } => {
            let cfg = problem.config(ExperimentKind::Storage);
            cfg.validate()?;
            let (omega, spec) = experiment::instances(&cfg)?[0];
            let kernel = cfg.kernel_for(omega)?;
            let cloud = hmat::make_geometry(spec)?;
            let acfg = hmat::AssemblyConfig {
                aca: hmat::lowrank::AcaConfig::with_eps(cfg.eps_aca),
                eta: cfg.eta,
                n_leaf: cfg.n_leaf,
                self_rule: hmat::SelfBlockRule::Shift(cloud.len() as f64),
                seed: cfg.seed,
                ..Default::default()
            };
            let (h, _, _) = HMatrix::from_cloud(&kernel, &cloud, &acfg)?;
            if factors {
                let f = hmat::hmatrix::hlu(&h, cfg.eps_lu.unwrap_or(cfg.eps_aca))?;
                snapshot::save_factors(&f, &output)?;
            } else {
                snapshot::save_matrix(&h, &output)?;
            }
            println!("saved N={} to {}", h.dim(), output.display());
        }
        Command::Snapshot { action: SnapshotAction::Load { input, factors } } => {
            if factors {
                let f = snapshot::load_factors(&input)?;
                let s = f.lower.storage_report().n_stored + f.upper.storage_report().n_stored;
                println!("factors N={} eps_lu={:e} stored={}", f.dim(), f.eps_lu, s);
            } else {
                let h = snapshot::load_matrix(&input)?;
                let r = h.storage_report();
                println!("matrix N={} stored={} tau={:.4e} max_rank={}", h.dim(), r.n_stored, r.tau, r.max_rank_after);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("HMAT_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
