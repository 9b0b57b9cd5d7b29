//! Command-line front end.

pub mod plot;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::FitWindow;
use crate::clusters::{cluster_spectrum, ClusterGeometry};
use crate::ensemble::{
    estimate_memory_bytes, run_ensemble, BinSpec, DynamicsOptions, EnsembleError, Experiment, LindbladMethod,
    LindbladOptions, LowEnergyOptions, LsrOptions, OutputScales, RunConfig, SpectralOptions, TimeGrid,
};
use crate::geometry::{radius_for_density, sample_configuration, CloudSpec, Profile};
use plot::{render_artifact, PlotKind, PlotSpec};

/// Default output root when neither `--out` nor the config names one.
pub const OUT_ENV: &str = "RYDLOC_OUT";
/// Memory budget in MiB above which a warning is logged.
pub const MEM_ENV: &str = "RYDLOC_MEM_MB";
const DEFAULT_MEM_MB: u64 = 8192;

#[derive(Debug, Parser)]
#[command(name = "rydloc", version, about = "Disorder-averaged spectra and transport of dipolar spin clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one configuration and write it as CSV.
    Sample(SampleArgs),
    /// Spectra of the dimer, line trimer, triangle and square.
    Clusters(ClustersArgs),
    /// DOS, IPR and fractal dimension versus energy.
    Spectrum(SpectrumArgs),
    /// Level-spacing ratios.
    Lsr(LsrArgs),
    /// Unitary spreading from the central atom.
    Dynamics(DynamicsArgs),
    /// Dephased spreading (rate in kHz).
    Lindblad(LindbladArgs),
    /// Statistics of the lowest eigenvalues and the ground state.
    Lowenergy(LowEnergyArgs),
    /// Render an SVG from a stored artifact.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Uniform,
    Gaussian,
    Pancake,
}

#[derive(Debug, Args)]
pub struct CloudArgs {
    /// Number of atoms.
    #[arg(long)]
    pub n: Option<usize>,
    /// Packing fraction (sets the radius, or the Gaussian width).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Disk radius in blockade radii.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// In-plane Gaussian width.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Transverse Gaussian width (pancake clouds).
    #[arg(long)]
    pub sigma_z: Option<f64>,
}

impl CloudArgs {
    fn apply(&self, cloud: &mut CloudSpec) {
        let old_rho = cloud.nominal_rho();
        if let Some(p) = self.profile {
            cloud.profile = match p {
                ProfileArg::Uniform => Profile::UniformDisk,
                ProfileArg::Gaussian => Profile::GaussianDisk,
                ProfileArg::Pancake => Profile::Pancake,
            };
        }
        if let Some(s) = self.sigma {
            cloud.sigma_in_plane = Some(s);
        }
        if let Some(s) = self.sigma_z {
            cloud.sigma_z = Some(s);
        }
        if cloud.profile == Profile::Pancake && cloud.sigma_z.is_none() {
            cloud.sigma_z = Some(0.5);
        }
        if let Some(n) = self.n {
            cloud.n_atoms = n;
        }
        // keep the density fixed when only the atom number changes
        let rho = self.rho.or((self.n.is_some() && self.radius.is_none()).then_some(old_rho));
        let gaussian = cloud.profile == Profile::GaussianDisk
            || (cloud.profile == Profile::Pancake && cloud.sigma_in_plane.is_some());
        if gaussian {
            if cloud.sigma_in_plane.is_none() {
                cloud.sigma_in_plane = Some(cloud.radius / crate::geometry::GAUSSIAN_TRUNCATION);
            }
            if let Some(rho) = rho.filter(|_| self.sigma.is_none()) {
                cloud.sigma_in_plane = Some((cloud.n_atoms as f64 * cloud.blockade.powi(2) / (8.0 * rho)).sqrt());
            }
            cloud.radius = cloud.region_radius();
        } else if let Some(r) = self.radius {
            cloud.radius = r;
        } else if let Some(rho) = rho {
            cloud.radius = radius_for_density(cloud.n_atoms, rho, cloud.blockade);
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// RunConfig JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $RYDLOC_OUT/<experiment>-<hash>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Write times in µs and energies in MHz.
    #[arg(long)]
    pub si: bool,
    /// Keep one scalar per realization.
    #[arg(long)]
    pub log_scalars: bool,
    #[arg(long)]
    pub failure_budget: Option<usize>,
    /// Warn when the estimated memory exceeds this many MiB.
    #[arg(long)]
    pub mem_budget_mb: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EnergyBinArgs {
    #[arg(long)]
    pub e_min: Option<f64>,
    #[arg(long)]
    pub e_max: Option<f64>,
    #[arg(long)]
    pub n_bins: Option<usize>,
}

impl EnergyBinArgs {
    fn apply(&self, bins: &mut BinSpec) {
        if let Some(v) = self.e_min {
            bins.lo = v;
        }
        if let Some(v) = self.e_max {
            bins.hi = v;
        }
        if let Some(v) = self.n_bins {
            bins.n_bins = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TimeArgs {
    /// First output time (internal units).
    #[arg(long)]
    pub t_min: Option<f64>,
    /// Last output time (internal units).
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub n_times: Option<usize>,
}

impl TimeArgs {
    fn apply(&self, grid: &mut TimeGrid) {
        if self.t_min.is_none() && self.t_max.is_none() && self.n_times.is_none() {
            return;
        }
        let (a, b, n) = match grid {
            TimeGrid::Log { t_min, t_max, n } => (*t_min, *t_max, *n),
            TimeGrid::Explicit(t) => (t[0].max(1e-2), *t.last().unwrap_or(&1e5), t.len()),
        };
        *grid = TimeGrid::Log {
            t_min: self.t_min.unwrap_or(a),
            t_max: self.t_max.unwrap_or(b),
            n: self.n_times.unwrap_or(n),
        };
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// CloudSpec (or RunConfig) JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV path (stdout when absent); metadata goes to `<path>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClustersArgs {
    /// JSON list of cluster geometries (default: the four canonical ones).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Nearest-neighbour spacing in blockade radii.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Energies in MHz.
    #[arg(long)]
    pub si: bool,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[command(flatten)]
    pub bins: EnergyBinArgs,
    /// Order of the fractal dimension.
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LsrArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[command(flatten)]
    pub bins: EnergyBinArgs,
    /// Lower end of the energy window of the ratio histogram.
    #[arg(long, requires = "window_hi", allow_hyphen_values = true)]
    pub window_lo: Option<f64>,
    #[arg(long, requires = "window_lo", allow_hyphen_values = true)]
    pub window_hi: Option<f64>,
    #[arg(long)]
    pub ratio_bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[command(flatten)]
    pub times: TimeArgs,
    #[arg(long)]
    pub profile_dr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Trajectories,
    MasterEquation,
}

#[derive(Debug, Args)]
pub struct LindbladArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[command(flatten)]
    pub times: TimeArgs,
    /// Dephasing rate in kHz.
    #[arg(long, conflicts_with = "gamma")]
    pub gamma_khz: Option<f64>,
    /// Dephasing rate in internal units.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Fit window of the growth exponent (internal time units).
    #[arg(long, requires = "alpha_hi")]
    pub alpha_lo: Option<f64>,
    #[arg(long, requires = "alpha_lo")]
    pub alpha_hi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LowEnergyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[command(flatten)]
    pub bins: EnergyBinArgs,
    /// Number of lowest levels to track.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// PlotSpec JSON; positional arguments and flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Store directory.
    pub store: Option<PathBuf>,
    /// Artifact file name, e.g. `msd.csv`.
    pub artifact: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<PlotKind>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub x_label: Option<String>,
    #[arg(long)]
    pub y_label: Option<String>,
    /// SVG path (default: next to the artifact).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Ensemble(EnsembleError),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Ensemble(e) => e.exit_code(),
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Other(m) => f.write_str(m),
            CliError::Ensemble(e) => write!(f, "{e}"),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        CliError::Ensemble(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Sample(a) => sample(a),
        Command::Clusters(a) => clusters(a),
        Command::Spectrum(a) => {
            let mut cfg = base_config(&a.run, Experiment::Spectral(SpectralOptions::default()))?;
            a.cloud.apply(&mut cfg.cloud);
            if let Experiment::Spectral(o) = &mut cfg.experiment {
                a.bins.apply(&mut o.energy_bins);
                if let Some(q) = a.q {
                    o.gfd_q = q;
                }
            }
            execute(cfg, &a.run)
        }
        Command::Lsr(a) => {
            let mut cfg = base_config(&a.run, Experiment::Lsr(LsrOptions::default()))?;
            a.cloud.apply(&mut cfg.cloud);
            if let Experiment::Lsr(o) = &mut cfg.experiment {
                a.bins.apply(&mut o.energy_bins);
                if let (Some(lo), Some(hi)) = (a.window_lo, a.window_hi) {
                    o.window = Some(FitWindow::new(lo, hi));
                }
                if let Some(b) = a.ratio_bins {
                    o.ratio_bins = b;
                }
            }
            execute(cfg, &a.run)
        }
        Command::Dynamics(a) => {
            let mut cfg = base_config(&a.run, Experiment::Dynamics(DynamicsOptions::default()))?;
            a.cloud.apply(&mut cfg.cloud);
            if let Experiment::Dynamics(o) = &mut cfg.experiment {
                a.times.apply(&mut o.times);
                if let Some(dr) = a.profile_dr {
                    o.profile_dr = dr;
                }
            }
            execute(cfg, &a.run)
        }
        Command::Lindblad(a) => {
            let mut cfg = base_config(&a.run, Experiment::Lindblad(LindbladOptions::default()))?;
            a.cloud.apply(&mut cfg.cloud);
            if let Experiment::Lindblad(o) = &mut cfg.experiment {
                a.times.apply(&mut o.times);
                if let Some(k) = a.gamma_khz {
                    o.gamma_khz = Some(k);
                    o.gamma = None;
                }
                if let Some(g) = a.gamma {
                    o.gamma = Some(g);
                    o.gamma_khz = None;
                }
                if let Some(m) = a.method {
                    o.method = match m {
                        MethodArg::Trajectories => LindbladMethod::Trajectories,
                        MethodArg::MasterEquation => LindbladMethod::MasterEquation,
                    };
                }
                if let Some(t) = a.trajectories {
                    o.n_trajectories = t;
                }
                if let (Some(lo), Some(hi)) = (a.alpha_lo, a.alpha_hi) {
                    o.alpha_window = Some(FitWindow::new(lo, hi));
                }
            }
            execute(cfg, &a.run)
        }
        Command::Lowenergy(a) => {
            let mut cfg = base_config(&a.run, Experiment::LowEnergy(LowEnergyOptions::default()))?;
            a.cloud.apply(&mut cfg.cloud);
            if let Experiment::LowEnergy(o) = &mut cfg.experiment {
                a.bins.apply(&mut o.energy_bins);
                if let Some(k) = a.k {
                    o.k_lowest = k;
                }
            }
            execute(cfg, &a.run)
        }
        Command::Plot(a) => plot_cmd(a),
    }
}

/// Config from `--config` (which must match the subcommand) or defaults.
fn base_config(run: &RunArgs, default: Experiment) -> Result<RunConfig, CliError> {
    let mut cfg = match &run.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            if cfg.experiment.name() != default.name() {
                return Err(CliError::Usage(format!(
                    "config describes a {} experiment, not {}",
                    cfg.experiment.name(),
                    default.name()
                )));
            }
            cfg
        }
        None => RunConfig::new(CloudSpec::uniform_at_density(200, 0.1, 0), default, 10, 1),
    };
    if let Some(r) = run.realizations {
        cfg.n_realizations = r;
    }
    if let Some(s) = run.seed {
        cfg.master_seed = s;
    }
    if let Some(b) = run.failure_budget {
        cfg.failure_budget = b;
    }
    if run.log_scalars {
        cfg.log_scalars = true;
    }
    if let Some(o) = &run.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return d.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("rydloc-out"), PathBuf::from);
    root.join(format!("{}-{}", cfg.experiment.name(), &cfg.hash()[..12]))
}

fn execute(cfg: RunConfig, run: &RunArgs) -> Result<(), CliError> {
    cfg.validate()?;
    let workers = if run.workers == 0 { rayon::current_num_threads() } else { run.workers };
    let budget = run
        .mem_budget_mb
        .or_else(|| std::env::var(MEM_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(DEFAULT_MEM_MB);
    let need = estimate_memory_bytes(&cfg, workers);
    if need > budget * 1024 * 1024 {
        log::warn!(
            "estimated memory {} MiB exceeds the budget of {budget} MiB; consider fewer workers",
            need / (1024 * 1024)
        );
    }
    let store = run_ensemble(&cfg, run.workers)?;
    let dir = output_dir(&cfg);
    let scales = if run.si { OutputScales::si(&cfg.units()) } else { OutputScales::internal() };
    let manifest = store.write(&dir, scales)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&store.summary()).map_err(|e| CliError::Other(e.to_string()))?)?;
    eprintln!(
        "{} realizations, {} artifacts in {}",
        manifest.realizations_completed,
        manifest.artifacts.len(),
        dir.display()
    );
    Ok(())
}

fn sample(a: SampleArgs) -> Result<(), CliError> {
    let mut spec = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<CloudSpec>(&text)
                .or_else(|_| serde_json::from_str::<RunConfig>(&text).map(|c| c.cloud))
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => CloudSpec::uniform_at_density(200, 0.1, 0),
    };
    a.cloud.apply(&mut spec);
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = sample_configuration(&spec).map_err(|e| CliError::Other(e.to_string()))?;
    match &a.out {
        Some(path) => {
            cfg.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            let meta = serde_json::to_string_pretty(&cfg.metadata()).map_err(|e| CliError::Other(e.to_string()))?;
            std::fs::write(sidecar(path), meta)?;
        }
        None => cfg.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn join(v: impl IntoIterator<Item = String>) -> String {
    v.into_iter().collect::<Vec<_>>().join(" ")
}

fn clusters(a: ClustersArgs) -> Result<(), CliError> {
    let mut geoms = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Vec<ClusterGeometry>>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => ClusterGeometry::canonical(),
    };
    if let Some(s) = a.spacing {
        geoms.iter_mut().for_each(|g| g.spacing = s);
    }
    let scale = if a.si { crate::coupling::SiUnits::default().energy_to_mhz(1.0) } else { 1.0 };
    let mut out = std::io::stdout().lock();
    writeln!(out, "cluster,n_atoms,eigenvalues,iprs,degeneracies")?;
    for g in &geoms {
        let c = cluster_spectrum(g).map_err(|e| CliError::Usage(e.to_string()))?;
        writeln!(
            out,
            "{},{},{},{},{}",
            g.name(),
            c.eigenvalues.len(),
            join(c.eigenvalues.iter().map(|e| format!("{:?}", e * scale))),
            join(c.iprs.iter().map(|p| format!("{p:?}"))),
            join(c.degeneracies.iter().map(|d| d.to_string())),
        )?;
    }
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> Result<(), CliError> {
    let mut spec: Option<PlotSpec> = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    if spec.is_none() {
        let (Some(store), Some(artifact)) = (a.store.clone(), a.artifact.clone()) else {
            return Err(CliError::Usage("plot needs a store directory and an artifact name, or --config".into()));
        };
        let stem = Path::new(&artifact).file_stem().map_or("plot".into(), |s| s.to_string_lossy().into_owned());
        spec = Some(PlotSpec {
            kind: PlotKind::Line,
            output: store.join(format!("{stem}.svg")),
            store,
            artifact,
            x_column: None,
            y_column: None,
            x_label: String::new(),
            y_label: String::new(),
        });
    }
    let mut spec = spec.expect("set above");
    if let Some(s) = a.store {
        spec.store = s;
    }
    if let Some(v) = a.artifact {
        spec.artifact = v;
    }
    if let Some(k) = a.kind {
        spec.kind = k;
    }
    spec.x_column = a.x.or(spec.x_column);
    spec.y_column = a.y.or(spec.y_column);
    if let Some(l) = a.x_label {
        spec.x_label = l;
    }
    if let Some(l) = a.y_label {
        spec.y_label = l;
    }
    if let Some(o) = a.out {
        spec.output = o;
    }
    if spec.x_label.is_empty() {
        spec.x_label = spec.x_column.clone().unwrap_or_default();
    }
    if spec.y_label.is_empty() {
        spec.y_label = spec.y_column.clone().unwrap_or_default();
    }
    render_artifact(&spec).map_err(|e| match e {
        plot::PlotError::UnknownArtifact(_) | plot::PlotError::MissingColumn(_) => CliError::Usage(e.to_string()),
        other => CliError::Other(other.to_string()),
    })?;
    eprintln!("wrote {}", spec.output.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("rydloc").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn density_flag_sets_radius() {
        let Command::Sample(a) = parse(&["sample", "--n", "100", "--rho", "0.1"]).command else { panic!() };
        let mut spec = CloudSpec::uniform_at_density(10, 0.3, 0);
        a.cloud.apply(&mut spec);
        assert_eq!(spec.n_atoms, 100);
        assert!((spec.nominal_rho() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn atom_number_alone_keeps_density() {
        let Command::Sample(a) = parse(&["sample", "--n", "400"]).command else { panic!() };
        let mut spec = CloudSpec::uniform_at_density(100, 0.25, 0);
        a.cloud.apply(&mut spec);
        assert!((spec.nominal_rho() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_sets_width() {
        let Command::Sample(a) = parse(&["sample", "--profile", "gaussian", "--n", "200", "--rho", "0.5"]).command else {
            panic!()
        };
        let mut spec = CloudSpec::uniform(10, 5.0, 0);
        a.cloud.apply(&mut spec);
        assert!((spec.nominal_rho() - 0.5).abs() < 1e-12);
        spec.validate().unwrap();
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["rydloc", "spectrum", "--rho", "nope"]), 2);
        assert_eq!(run(["rydloc", "frobnicate"]), 2);
        assert_eq!(run(["rydloc", "spectrum", "--realizations", "0", "--n", "20", "--out", "/nonexistent/x"]), 2);
    }
}
