//! TOML run configuration and its translation into a model.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgld_core::action::TargetKind;
use pgld_core::grid::{Grid, ScalarField, SurfaceField};
use pgld_core::noise::{NoiseModel, SigmaKind, TimeModulation};
use pgld_core::operators::eigenmodes_a2;
use pgld_core::params::{check_neumann_compatible, ForcingSet, HeatSource, PhysParams, WindStress};
use pgld_core::skeleton::ControlPath;
use pgld_core::stepper::Model;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, HarnessError, Result};
use crate::expr::{Env, Expr};
use crate::output::read_control_csv;
use crate::snapshot::read_snapshot;

/// Tolerance of the lateral Neumann check on analytic `theta*`.
const COMPAT_TOL: f64 = 1e-8;

/// A scalar field given as a constant, an expression or a `PGLDFLD0` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Expr { expr: String },
    File { file: PathBuf },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingConfig {
    pub wind_x: FieldSpec,
    pub wind_y: FieldSpec,
    pub theta_star: FieldSpec,
    /// May depend on `t`.
    pub heat: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub modes: usize,
    pub q: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub sigma: SigmaKind,
    #[serde(default)]
    pub modulation: TimeModulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
}

/// A control path from a CSV file or as equal-interval values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSpec {
    File { file: PathBuf },
    Values { values: Vec<Vec<f64>> },
}

/// Subcommand settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Store every n-th state (0: endpoints only).
    pub snapshot_stride: usize,
    pub control: Option<ControlSpec>,
    pub target: TargetKind,
    pub delta: f64,
    /// Measure the deviation along this carrier mode instead of in l2.
    pub direction_mode: Option<usize>,
    pub deltas: Vec<f64>,
    pub intervals: usize,
    pub rho0: f64,
    pub stages: usize,
    pub max_iter: usize,
    pub eps_list: Vec<f64>,
    pub n_paths: usize,
    pub importance: bool,
    pub picard: bool,
    pub picard_window: Option<f64>,
    pub audit_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            snapshot_stride: 0,
            control: None,
            target: TargetKind::TerminalDistance,
            delta: 0.3,
            direction_mode: None,
            deltas: Vec::new(),
            intervals: 20,
            rho0: 100.0,
            stages: 5,
            max_iter: 200,
            eps_list: vec![0.4, 0.2, 0.1, 0.05],
            n_paths: 1000,
            importance: false,
            picard: false,
            picard_window: None,
            audit_samples: 200,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "yes")]
    pub advection: bool,
    pub grid: GridConfig,
    #[serde(default)]
    pub params: PhysParams,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub theta0: FieldSpec,
    pub noise: NoiseConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    /// Directory that relative file references are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut c = RunConfig::from_toml(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        c.validate()?;
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self.grid;
        Grid::new(g.nx, g.ny, g.nz, g.lx, g.ly, g.h).map_err(config_err)
    }

    /// Every file the configuration refers to, resolved.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let f = &self.forcing;
        let mut out: Vec<PathBuf> = [&f.wind_x, &f.wind_y, &f.theta_star, &f.heat, &self.theta0]
            .into_iter()
            .filter_map(|s| match s {
                FieldSpec::File { file } => Some(self.resolve(file)),
                _ => None,
            })
            .collect();
        if let Some(ControlSpec::File { file }) = &self.experiment.control {
            out.push(self.resolve(file));
        }
        out
    }

    /// Checks everything that can be checked without running the model.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.master_seed > i64::MAX as u64 {
            return Err(HarnessError::Config(format!("master_seed {} exceeds 2^63 - 1", self.master_seed)));
        }
        self.params.validate().map_err(config_err)?;
        let t = self.time;
        if !(t.t_final > 0.0 && t.dt > 0.0 && t.dt <= t.t_final) {
            return Err(HarnessError::Config(format!("need 0 < dt <= T, got dt = {}, T = {}", t.dt, t.t_final)));
        }
        let n = (t.t_final / t.dt).round();
        if (n * t.dt - t.t_final).abs() > 1e-12 * t.t_final.max(1.0) {
            return Err(HarnessError::Config(format!("dt = {} does not divide T = {}", t.dt, t.t_final)));
        }
        let nz = &self.noise;
        if nz.modes == 0 || nz.q.len() != nz.modes || nz.amplitudes.len() != nz.modes {
            return Err(HarnessError::Config(format!(
                "noise needs {} variances and amplitudes, got {} and {}",
                nz.modes,
                nz.q.len(),
                nz.amplitudes.len()
            )));
        }
        if nz.modes > grid.len() {
            return Err(HarnessError::Config(format!("{} noise modes exceed {} grid nodes", nz.modes, grid.len())));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(HarnessError::Config(format!("eps = {} must be non-negative", self.eps)));
        }
        for path in self.input_files() {
            if !path.is_file() {
                return Err(HarnessError::Config(format!("referenced file {} does not exist", path.display())));
            }
        }
        let f = &self.forcing;
        for (name, spec) in [
            ("wind_x", &f.wind_x),
            ("wind_y", &f.wind_y),
            ("theta_star", &f.theta_star),
            ("heat", &f.heat),
            ("theta0", &self.theta0),
        ] {
            if let FieldSpec::Expr { expr } = spec {
                Expr::parse(expr).map_err(|e| HarnessError::Config(format!("{name}: {e}")))?;
            }
        }
        if let FieldSpec::Expr { expr } = &f.theta_star {
            let e = Expr::parse(expr).expect("parsed above");
            if e.depends_on_time() {
                return Err(HarnessError::Config("theta_star cannot depend on t".into()));
            }
            let env = self.env();
            check_neumann_compatible(&grid, |x, y| e.eval(&Env { x, y, z: 0.0, ..env }), COMPAT_TOL)
                .map_err(config_err)?;
        }
        let ex = &self.experiment;
        if let Some(m) = ex.direction_mode {
            if m >= nz.modes {
                return Err(HarnessError::Config(format!("direction_mode {m} outside {} noise modes", nz.modes)));
            }
        }
        if ex.intervals == 0 || ex.stages == 0 || ex.n_paths == 0 {
            return Err(HarnessError::Config("intervals, stages and n_paths must be positive".into()));
        }
        if ex.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(HarnessError::Config("eps_list entries must be positive".into()));
        }
        Ok(())
    }

    fn env(&self) -> Env {
        Env { lx: self.grid.lx, ly: self.grid.ly, h: self.grid.h, ..Default::default() }
    }

    fn volume_field(&self, name: &str, spec: &FieldSpec, grid: Grid, t: f64) -> Result<ScalarField> {
        match spec {
            FieldSpec::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            FieldSpec::Expr { expr } => {
                let e = Expr::parse(expr).map_err(|e| HarnessError::Config(format!("{name}: {e}")))?;
                let env = self.env();
                Ok(ScalarField::from_fn(grid, |x, y, z| e.eval(&Env { x, y, z, t, ..env })))
            }
            FieldSpec::File { file } => {
                let f = read_snapshot(&self.resolve(file))?;
                if f.grid != grid {
                    return Err(HarnessError::Config(format!("{name}: file grid differs from the configured grid")));
                }
                Ok(f)
            }
        }
    }

    /// Surface fields from files use the top layer of the stored volume field.
    fn surface_field(&self, name: &str, spec: &FieldSpec, grid: Grid) -> Result<SurfaceField> {
        match spec {
            FieldSpec::Constant(c) => Ok(SurfaceField::constant(grid, *c)),
            FieldSpec::Expr { expr } => {
                let e = Expr::parse(expr).map_err(|e| HarnessError::Config(format!("{name}: {e}")))?;
                let env = self.env();
                Ok(SurfaceField::from_fn(grid, |x, y| e.eval(&Env { x, y, ..env })))
            }
            FieldSpec::File { .. } => Ok(self.volume_field(name, spec, grid, 0.0)?.surface_trace()),
        }
    }

    fn heat(&self, grid: Grid) -> Result<HeatSource> {
        match &self.forcing.heat {
            FieldSpec::Constant(c) if *c == 0.0 => Ok(HeatSource::Zero),
            FieldSpec::Expr { expr } => {
                let e = Expr::parse(expr).map_err(|e| HarnessError::Config(format!("heat: {e}")))?;
                if !e.depends_on_time() {
                    return Ok(HeatSource::Static(self.volume_field("heat", &self.forcing.heat, grid, 0.0)?));
                }
                let env = self.env();
                Ok(HeatSource::Function(Arc::new(move |x, y, z, t| e.eval(&Env { x, y, z, t, ..env }))))
            }
            spec => Ok(HeatSource::Static(self.volume_field("heat", spec, grid, 0.0)?)),
        }
    }

    pub fn forcing_set(&self, grid: Grid) -> Result<ForcingSet> {
        let f = &self.forcing;
        Ok(ForcingSet {
            wind: WindStress {
                x: self.surface_field("wind_x", &f.wind_x, grid)?,
                y: self.surface_field("wind_y", &f.wind_y, grid)?,
            },
            theta_star: self.surface_field("theta_star", &f.theta_star, grid)?,
            heat: self.heat(grid)?,
        })
    }

    pub fn build_model(&self) -> Result<Model> {
        let grid = self.grid()?;
        let forcing = self.forcing_set(grid)?;
        let theta0 = self.volume_field("theta0", &self.theta0, grid, 0.0)?;
        let n = &self.noise;
        let carriers = eigenmodes_a2(&grid, &self.params, n.modes).map_err(config_err)?;
        let noise =
            NoiseModel::new(carriers, n.q.clone(), n.amplitudes.clone(), n.sigma, n.modulation).map_err(config_err)?;
        let model = Model::new(grid, self.params, forcing, noise, theta0, self.time.t_final, self.time.dt)
            .map_err(config_err)?;
        Ok(model.with_advection(self.advection))
    }

    /// The configured control, if any.
    pub fn control(&self) -> Result<Option<ControlPath>> {
        let q = &self.noise.q;
        match &self.experiment.control {
            None => Ok(None),
            Some(ControlSpec::Values { values }) => {
                ControlPath::uniform(self.time.t_final, values.clone(), q).map(Some).map_err(config_err)
            }
            Some(ControlSpec::File { file }) => read_control_csv(&self.resolve(file), q).map(Some),
        }
    }
}
