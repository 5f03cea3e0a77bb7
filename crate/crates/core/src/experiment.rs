//! Experiment pipeline behind the `hmat` binary: geometry, trees, assembly and
//! optional solve/estimate, one CSV row per instance.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use faer::c64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HmatError, Result};
use crate::geometry::{make_geometry, BlockTree, ClusterTree, GeometrySpec, PointCloud};
use crate::hmatrix::{AssemblyConfig, HMatrix, StorageReport};
use crate::kernels::{Kernel, Material, SelfBlockRule};
use crate::lowrank::AcaConfig;
use crate::solve::{self, EstimatorOptions, EstimatorReport, GmresConfig};

pub const CSV_VERSION_LINE: &str = "# hmat-csv v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    RankTable,
    Storage,
    Solve,
    Estimator,
    RankVsFrequency,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::RankTable => "rank-table",
            ExperimentKind::Storage => "storage",
            ExperimentKind::Solve => "solve",
            ExperimentKind::Estimator => "estimator",
            ExperimentKind::RankVsFrequency => "rank-vs-frequency",
        }
    }

    fn solves(&self) -> bool {
        matches!(self, ExperimentKind::Solve | ExperimentKind::Estimator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Plate,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Laplace,
    Helmholtz,
    ElastoU,
    ElastoT,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Laplace => "laplace",
            KernelKind::Helmholtz => "helmholtz",
            KernelKind::ElastoU => "elasto-u",
            KernelKind::ElastoT => "elasto-t",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SizeControl {
    /// Total point counts (plates use the nearest square grid at or above).
    Count(Vec<usize>),
    /// Points per S-wavelength (per wavelength for Helmholtz).
    Density(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub geometry: GeometryKind,
    pub kernel: KernelKind,
    pub omegas: Vec<f64>,
    pub size: SizeControl,
    pub nu: f64,
    pub rho: f64,
    pub mu: f64,
    pub eps_aca: f64,
    /// Defaults to `eps_aca`.
    pub eps_lu: Option<f64>,
    pub eta: f64,
    pub n_leaf: usize,
    pub seed: u64,
    /// Sphere radius or plate half width.
    pub extent: f64,
    /// Diagonal shift zeta; defaults to the point count.
    pub shift: Option<f64>,
    pub dense_oracle: bool,
    pub gmres: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::RankTable,
            geometry: GeometryKind::Sphere,
            kernel: KernelKind::ElastoU,
            omegas: vec![3.0],
            size: SizeControl::Count(vec![1000]),
            nu: 1.0 / 3.0,
            rho: 1.0,
            mu: 1.0,
            eps_aca: 1e-4,
            eps_lu: None,
            eta: 3.0,
            n_leaf: 100,
            seed: 0,
            extent: 1.0,
            shift: None,
            dense_oracle: false,
            gmres: false,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HmatError::InvalidArgument(m));
        if self.omegas.is_empty() {
            return bad("at least one omega is required".into());
        }
        if self.omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("omega values must be positive".into());
        }
        match &self.size {
            SizeControl::Count(c) if c.is_empty() || c.contains(&0) => return bad("counts must be positive".into()),
            SizeControl::Density(d) if !(*d > 0.0 && d.is_finite()) => return bad("density must be positive".into()),
            SizeControl::Density(_) if self.kernel == KernelKind::Laplace => {
                return bad("density mode needs an oscillatory kernel".into())
            }
            _ => {}
        }
        if !(self.eps_aca > 0.0 && self.eps_aca < 1.0) || self.eps_lu.is_some_and(|e| !(e > 0.0 && e < 1.0)) {
            return bad("tolerances must lie in (0, 1)".into());
        }
        if !(self.eta > 0.0) || self.n_leaf == 0 || !(self.extent > 0.0) {
            return bad("eta, n-leaf and extent must be positive".into());
        }
        if matches!(self.kernel, KernelKind::ElastoU | KernelKind::ElastoT) {
            Material::new(self.rho, self.mu, self.nu, 1.0)?;
        }
        Ok(())
    }

    pub fn kernel_for(&self, omega: f64) -> Result<Kernel> {
        let k = match self.kernel {
            KernelKind::Laplace => Kernel::Laplace,
            KernelKind::Helmholtz => Kernel::Helmholtz { kappa: omega },
            KernelKind::ElastoU => Kernel::ElastoU(Material::new(self.rho, self.mu, self.nu, omega)?),
            KernelKind::ElastoT => Kernel::ElastoT(Material::new(self.rho, self.mu, self.nu, omega)?),
        };
        Ok(k)
    }

    /// Wavelength that sets the density scale: S wavelength for elastic kernels.
    pub fn wavelength(&self, omega: f64) -> Option<f64> {
        match self.kernel_for(omega).ok()? {
            Kernel::Laplace => None,
            Kernel::Helmholtz { kappa } => Some(2.0 * std::f64::consts::PI / kappa),
            Kernel::ElastoU(m) | Kernel::ElastoT(m) => Some(m.s_wavelength()),
        }
    }

    pub fn geometry_for_count(&self, count: usize) -> GeometrySpec {
        match self.geometry {
            GeometryKind::Plate => {
                GeometrySpec::Plate { n_per_axis: (count as f64).sqrt().ceil() as usize, half_width: self.extent }
            }
            GeometryKind::Sphere => GeometrySpec::Sphere { count, radius: self.extent },
        }
    }

    /// Geometry with roughly `density` points per wavelength at `omega`.
    pub fn geometry_for_density(&self, omega: f64, density: f64) -> Result<GeometrySpec> {
        let lambda = self
            .wavelength(omega)
            .ok_or_else(|| HmatError::InvalidArgument("density mode needs an oscillatory kernel".into()))?;
        let h = lambda / density;
        Ok(match self.geometry {
            GeometryKind::Plate => GeometrySpec::Plate {
                n_per_axis: ((2.0 * self.extent / h).round() as usize + 1).max(2),
                half_width: self.extent,
            },
            GeometryKind::Sphere => {
                GeometrySpec::Sphere { count: sphere_count_for_spacing(h, self.extent), radius: self.extent }
            }
        })
    }
}

/// Point count whose Fibonacci sphere has mean nearest-neighbour spacing close to `h`.
pub fn sphere_count_for_spacing(h: f64, radius: f64) -> usize {
    const N0: usize = 2000;
    let probe = make_geometry(GeometrySpec::Sphere { count: N0, radius }).expect("valid probe sphere");
    let h0 = probe.mean_spacing();
    // spacing scales like N^{-1/2}
    ((N0 as f64) * (h0 / h).powi(2)).round().max(1.0) as usize
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub tree: f64,
    pub assemble: f64,
    pub solve: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub n_points: usize,
    pub n: usize,
    pub omega: f64,
    pub density: Option<f64>,
    pub eps_aca: f64,
    pub eps_lu: f64,
    pub storage: StorageReport,
    pub estimator: Option<EstimatorReport>,
    pub gmres_iterations: Option<usize>,
    pub timings: Timings,
}

pub fn random_rhs(n: usize, seed: u64) -> Vec<c64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            c64::new(re, im)
        })
        .collect()
}

pub fn measured_density(cfg: &ExperimentConfig, cloud: &PointCloud, spec: &GeometrySpec, omega: f64) -> Option<f64> {
    let lambda = cfg.wavelength(omega)?;
    let h = match spec {
        GeometrySpec::Plate { n_per_axis, half_width } if *n_per_axis > 1 => {
            2.0 * half_width / (*n_per_axis - 1) as f64
        }
        _ => cloud.mean_spacing(),
    };
    (h > 0.0).then(|| lambda / h)
}

pub fn run_instance(cfg: &ExperimentConfig, omega: f64, spec: GeometrySpec) -> Result<InstanceResult> {
    let kernel = cfg.kernel_for(omega)?;
    let cloud = make_geometry(spec)?;
    let eps_lu = cfg.eps_lu.unwrap_or(cfg.eps_aca);
    let self_rule = SelfBlockRule::Shift(cfg.shift.unwrap_or(cloud.len() as f64));
    let acfg = AssemblyConfig {
        aca: AcaConfig::with_eps(cfg.eps_aca),
        eta: cfg.eta,
        n_leaf: cfg.n_leaf,
        self_rule,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut timings = Timings::default();
    let t = Instant::now();
    let tree = ClusterTree::build(&cloud, cfg.n_leaf)?;
    let bt = BlockTree::build(&tree, &tree, cfg.eta)?;
    timings.tree = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let h = HMatrix::assemble(&kernel, &cloud, &tree, &bt, &acfg)?;
    timings.assemble = t.elapsed().as_secs_f64();
    let storage = h.storage_report();
    let mut estimator = None;
    let mut gmres_iterations = None;
    if cfg.experiment.solves() {
        let b = random_rhs(h.dim(), cfg.seed);
        let t = Instant::now();
        let (x0, _) = solve::solve_direct(&h, &b, eps_lu)?;
        if cfg.gmres {
            let res = solve::solve_gmres(&h, &b, &GmresConfig::default())?;
            gmres_iterations = Some(res.iterations);
        }
        timings.solve = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let opts = EstimatorOptions {
            dense_oracle: cfg.dense_oracle || cfg.experiment == ExperimentKind::Estimator,
            two_norm: false,
        };
        estimator = Some(solve::estimate(&h, &kernel, &cloud, self_rule, &b, &x0, opts)?);
        timings.estimate = t.elapsed().as_secs_f64();
    }
    Ok(InstanceResult {
        n_points: cloud.len(),
        n: h.dim(),
        omega,
        density: measured_density(cfg, &cloud, &spec, omega),
        eps_aca: cfg.eps_aca,
        eps_lu,
        storage,
        estimator,
        gmres_iterations,
        timings,
    })
}

/// All (omega, geometry) instances of a configuration, in output order.
pub fn instances(cfg: &ExperimentConfig) -> Result<Vec<(f64, GeometrySpec)>> {
    let mut out = Vec::new();
    for &omega in &cfg.omegas {
        match &cfg.size {
            SizeControl::Count(counts) => out.extend(counts.iter().map(|&c| (omega, cfg.geometry_for_count(c)))),
            SizeControl::Density(d) => out.push((omega, cfg.geometry_for_density(omega, *d)?)),
        }
    }
    Ok(out)
}

pub const CSV_COLUMNS: [&str; 26] = [
    "experiment",
    "geometry",
    "kernel",
    "n_points",
    "N",
    "omega",
    "density",
    "eps_aca",
    "eps_lu",
    "max_rank_before",
    "max_rank_after",
    "N_s",
    "tau",
    "storage_bound",
    "c_sp",
    "n_fallbacks",
    "bound",
    "delta",
    "delta_h_frob",
    "norm_a_frob",
    "true_residual",
    "gmres_iterations",
    "t_tree_s",
    "t_assemble_s",
    "t_solve_s",
    "t_estimate_s",
];

/// Columns holding wall-clock times; everything else is deterministic.
pub const TIMING_COLUMNS: [&str; 4] = ["t_tree_s", "t_assemble_s", "t_solve_s", "t_estimate_s"];

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn csv_record(cfg: &ExperimentConfig, r: &InstanceResult) -> Vec<String> {
    let e = r.estimator.as_ref();
    vec![
        cfg.experiment.name().to_string(),
        match cfg.geometry {
            GeometryKind::Plate => "plate".into(),
            GeometryKind::Sphere => "sphere".into(),
        },
        cfg.kernel.name().to_string(),
        r.n_points.to_string(),
        r.n.to_string(),
        r.omega.to_string(),
        opt(r.density.map(|d| format!("{d:.4}"))),
        sci(r.eps_aca),
        sci(r.eps_lu),
        r.storage.max_rank_before.to_string(),
        r.storage.max_rank_after.to_string(),
        r.storage.n_stored.to_string(),
        sci(r.storage.tau),
        sci(r.storage.bound),
        r.storage.c_sp.to_string(),
        r.storage.n_fallbacks.to_string(),
        opt(e.map(|e| sci(e.bound))),
        opt(e.map(|e| sci(e.delta))),
        opt(e.map(|e| sci(e.delta_h_frob))),
        opt(e.map(|e| sci(e.norm_a_frob))),
        opt(e.and_then(|e| e.true_residual).map(sci)),
        opt(r.gmres_iterations),
        format!("{:.3}", r.timings.tree),
        format!("{:.3}", r.timings.assemble),
        format!("{:.3}", r.timings.solve),
        format!("{:.3}", r.timings.estimate),
    ]
}

/// Runs every instance and writes the CSV (to `cfg.output` or `sink`).
pub fn run_experiment(cfg: &ExperimentConfig, sink: &mut dyn Write) -> Result<Vec<InstanceResult>> {
    cfg.validate()?;
    let mut results = Vec::new();
    let mut file;
    let out: &mut dyn Write = match &cfg.output {
        Some(p) => {
            file = std::fs::File::create(p)?;
            &mut file
        }
        None => sink,
    };
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for (omega, spec) in instances(cfg)? {
        let r = run_instance(cfg, omega, spec)?;
        w.write_record(csv_record(cfg, &r)).map_err(csv_err)?;
        w.flush()?;
        results.push(r);
    }
    Ok(results)
}

fn csv_err(e: csv::Error) -> HmatError {
    HmatError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experiment_parameters() {
        let c = ExperimentConfig::default();
        assert_eq!((c.n_leaf, c.eta, c.eps_aca), (100, 3.0, 1e-4));
        assert_eq!((c.nu, c.rho, c.mu), (1.0 / 3.0, 1.0, 1.0));
    }

    #[test]
    fn density_sizing_on_plate() {
        let cfg = ExperimentConfig { geometry: GeometryKind::Plate, ..Default::default() };
        // lambda_s = 2 pi / omega with rho = mu = 1
        let spec = cfg.geometry_for_density(std::f64::consts::PI, 10.0).unwrap();
        assert_eq!(spec, GeometrySpec::Plate { n_per_axis: 11, half_width: 1.0 });
    }

    #[test]
    fn sphere_density_is_close_to_target() {
        let cfg = ExperimentConfig::default();
        let spec = cfg.geometry_for_density(4.0, 8.0).unwrap();
        let cloud = make_geometry(spec).unwrap();
        let d = measured_density(&cfg, &cloud, &spec, 4.0).unwrap();
        assert!((d - 8.0).abs() < 0.4, "{d}");
    }

    #[test]
    fn invalid_configs() {
        let mut c = ExperimentConfig { omegas: vec![], ..Default::default() };
        assert!(c.validate().is_err());
        c.omegas = vec![1.0];
        c.size = SizeControl::Density(10.0);
        c.kernel = KernelKind::Laplace;
        assert!(c.validate().is_err());
        c.kernel = KernelKind::ElastoU;
        c.nu = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::Solve,
            size: SizeControl::Count(vec![150]),
            n_leaf: 30,
            ..Default::default()
        };
        let strip = |s: Vec<u8>| {
            let text = String::from_utf8(s).unwrap();
            text.lines()
                .map(|l| l.split(',').take(CSV_COLUMNS.len() - 4).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run_experiment(&cfg, &mut a).unwrap();
        run_experiment(&cfg, &mut b).unwrap();
        assert!(String::from_utf8(a.clone()).unwrap().starts_with(CSV_VERSION_LINE));
        assert_eq!(strip(a), strip(b));
    }
}
