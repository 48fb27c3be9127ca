//! The experiment configuration, a versioned TOML key tree.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::MeasureKind;
use crate::fields::{CoefficientPair, DiffusionSpec, DriftSpec};
use crate::flow::Scheme;
use crate::fokker_planck::{Boundary, FpeScheme};
use crate::grid::GridSpec;
use crate::moduli::OsgoodModulus;
use crate::mollify::{MollifierSpec, MollifyMode, Norm, DEFAULT_QUADRATURE_POINTS};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    OsgoodCertify,
    MollifyLadder,
    FlowCauchy,
    DensityBound,
    FpeDuality,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::OsgoodCertify,
        Experiment::MollifyLadder,
        Experiment::FlowCauchy,
        Experiment::DensityBound,
        Experiment::FpeDuality,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Experiment::OsgoodCertify => "osgood-certify",
            Experiment::MollifyLadder => "mollify-ladder",
            Experiment::FlowCauchy => "flow-cauchy",
            Experiment::DensityBound => "density-bound",
            Experiment::FpeDuality => "fpe-duality",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Not part of the hash.
    #[serde(default)]
    pub workers: usize,
    /// Output directory below the output root. Not part of the hash.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Free-form stamp. Not part of the hash.
    #[serde(default)]
    pub timestamp: Option<String>,
    pub coefficients: CoefficientsConfig,
    #[serde(default)]
    pub modulus: ModulusConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub mollify: MollifyConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub fpe: FpeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub d: usize,
    /// Noise dimension, `d` when absent.
    #[serde(default)]
    pub m: Option<usize>,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
}

impl CoefficientsConfig {
    pub fn noise_dim(&self) -> usize {
        self.m.unwrap_or(self.d)
    }

    pub fn build(&self) -> Result<CoefficientPair> {
        CoefficientPair::from_specs(&self.drift, &self.diffusion, self.d, self.noise_dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusConfig {
    /// `linear`, `loglinear`, `loglinear-smooth` or `custom`.
    pub key: String,
    /// `(s, rho)` table for `custom`.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        Self { key: "loglinear".into(), path: None }
    }
}

impl ModulusConfig {
    pub fn build(&self) -> Result<OsgoodModulus> {
        match (self.key.as_str(), &self.path) {
            ("custom", Some(p)) => OsgoodModulus::from_csv(p),
            ("custom", None) => Err(Error::param("custom modulus needs modulus.path")),
            (k, _) => OsgoodModulus::from_key(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl GridConfig {
    pub fn cube(d: usize, half: f64, cells: usize) -> Self {
        Self { lower: vec![-half; d], upper: vec![half; d], resolution: vec![cells; d] }
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.lower.clone(), self.upper.clone(), self.resolution.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// i.i.d. draws from the reference measure.
    #[default]
    Sample,
    /// Cell centres of `measure.quadrature` weighted by the density.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub reference: MeasureKind,
    #[serde(default)]
    pub starts: StartMode,
    #[serde(default)]
    pub quadrature: Option<GridConfig>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { reference: MeasureKind::Weighted { q: 2.0 }, starts: StartMode::Sample, quadrature: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifyConfig {
    pub levels: Vec<usize>,
    pub quadrature_points: usize,
    pub mode: MollifyMode,
    /// Tabulate each level on its support at this many cells per unit
    /// length; 0 evaluates the convolution lazily.
    pub cells_per_unit: f64,
    /// Ball radius of the distance quadrature.
    pub radius: f64,
    pub norm: Norm,
    pub distance_cells: usize,
    /// Integrability exponent `q` in `delta_{n,l}`.
    pub q: f64,
}

impl Default for MollifyConfig {
    fn default() -> Self {
        Self {
            levels: vec![],
            quadrature_points: DEFAULT_QUADRATURE_POINTS,
            mode: MollifyMode::Convolve,
            cells_per_unit: 0.0,
            radius: 1.0,
            norm: Norm::L1,
            distance_cells: 1024,
            q: 2.0,
        }
    }
}

impl MollifyConfig {
    pub fn spec(&self, level: usize) -> MollifierSpec {
        MollifierSpec::new(level).with_points(self.quadrature_points).with_mode(self.mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CauchyMode {
    /// Mollification ladder against its finest level.
    #[default]
    Mollify,
    /// Step-count doublings of one pair.
    Steps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub eta: f64,
    pub lambda: f64,
    pub deltas: Vec<f64>,
    #[serde(default = "two")]
    pub coarse_factor: usize,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub t_end: f64,
    pub steps: usize,
    pub particles: usize,
    pub paths: usize,
    pub scheme: Scheme,
    pub stopping_radius: Option<f64>,
    pub cauchy: CauchyMode,
    /// Step counts of the `steps` mode, increasing by factors of two.
    pub step_ladder: Vec<usize>,
    /// Accepted band of successive distance ratios in `steps` mode.
    pub ratio_band: [f64; 2],
    /// Final-over-first bound of the mollification ladder.
    pub final_fraction: f64,
    /// Level `R` of the set `G_R` in the stability functional.
    pub level_r: f64,
    pub probe: Option<ProbeConfig>,
    /// Write the reference trajectories as a binary dump.
    pub dump: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            steps: 1024,
            particles: 1000,
            paths: 20,
            scheme: Scheme::EulerMaruyama,
            stopping_radius: None,
            cauchy: CauchyMode::Mollify,
            step_ladder: vec![],
            ratio_band: [0.6, 0.8],
            final_fraction: 0.1,
            level_r: 10.0,
            probe: None,
            dump: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyCondition {
    Drift,
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    /// Pairs are drawn from the cube `[-half, half]^d`.
    pub half: f64,
    pub radius: f64,
    pub n_pairs: usize,
    pub sweep_pairs: usize,
    /// Relative margin added to the swept constant `g_R`.
    pub headroom: f64,
    pub tolerance: f64,
    pub conditions: Vec<CertifyCondition>,
    pub epsilons: Vec<f64>,
    /// Growth ratio `I(eps_min) / I(eps_max)` required of the modulus.
    pub threshold: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            half: std::f64::consts::PI,
            radius: 1.0,
            n_pairs: 100_000,
            sweep_pairs: 100_000,
            headroom: 0.02,
            tolerance: 0.0,
            conditions: vec![CertifyCondition::Drift, CertifyCondition::Sigma],
            epsilons: (1..=8).map(|k| 10f64.powi(-k)).collect(),
            threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub p: Vec<f64>,
    /// Snapshot times; `T/2` and `T` when empty.
    pub times: Vec<f64>,
    pub slack: f64,
    pub bandwidth: Option<Vec<f64>>,
    /// Also require `|E K_t - 1| <= unit_tolerance` on the central cells.
    pub expect_unit: bool,
    pub unit_tolerance: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            p: vec![1.0, 2.0],
            times: vec![],
            slack: 0.15,
            bandwidth: None,
            expect_unit: false,
            unit_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDensity {
    /// Isotropic Gaussian.
    Gaussian {
        #[serde(default)]
        mean: Vec<f64>,
        variance: f64,
    },
}

impl InitialDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialDensity::Gaussian { mean, variance } => {
                let r2: f64 = x.iter().enumerate().map(|(i, v)| (v - mean.get(i).copied().unwrap_or(0.0)).powi(2)).sum();
                let norm = (2.0 * std::f64::consts::PI * variance).powf(x.len() as f64 / 2.0);
                (-r2 / (2.0 * variance)).exp() / norm
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    /// `|x|^2`.
    Square,
    /// `exp(-1 / (1 - |x - c|^2 / r^2))` inside the ball.
    Bump { center: Vec<f64>, radius: f64 },
    /// `exp(-|x - c|^2 / w^2)`.
    Gaussian { center: Vec<f64>, width: f64 },
}

impl TestFunctionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunctionSpec::Square => "square",
            TestFunctionSpec::Bump { .. } => "bump",
            TestFunctionSpec::Gaussian { .. } => "gaussian",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let dist2 = |c: &[f64]| -> f64 { x.iter().enumerate().map(|(i, v)| (v - c.get(i).copied().unwrap_or(0.0)).powi(2)).sum() };
        match self {
            TestFunctionSpec::Square => x.iter().map(|v| v * v).sum(),
            TestFunctionSpec::Bump { center, radius } => {
                let s = dist2(center) / (radius * radius);
                if s < 1.0 {
                    (-1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }
            TestFunctionSpec::Gaussian { center, width } => (-dist2(center) / (width * width)).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub scheme: FpeScheme,
    #[serde(default = "one_usize")]
    pub refine: usize,
    pub dt: f64,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpeConfig {
    pub scheme: FpeScheme,
    /// Overrides `grid.resolution` for the PDE.
    pub resolution: Option<Vec<usize>>,
    /// Defaults to the smallest cell width.
    pub dt: Option<f64>,
    pub boundary: Boundary,
    pub initial: InitialDensity,
    pub test_functions: Vec<TestFunctionSpec>,
    pub grid_budget: f64,
    /// Quadrature grid of the particle starts; the PDE grid when absent.
    pub start_grid: Option<GridConfig>,
    /// Variance error against the closed form at `h` and `h/2`.
    pub order_study: bool,
    pub uniqueness: Option<[DiscretizationConfig; 2]>,
}

impl Default for FpeConfig {
    fn default() -> Self {
        Self {
            scheme: FpeScheme::CrankNicolson,
            resolution: None,
            dt: None,
            boundary: Boundary::ZeroFlux,
            initial: InitialDensity::Gaussian { mean: vec![], variance: 0.5 },
            test_functions: vec![
                TestFunctionSpec::Square,
                TestFunctionSpec::Bump { center: vec![0.5], radius: 1.5 },
                TestFunctionSpec::Gaussian { center: vec![1.0], width: 1.0 },
            ],
            grid_budget: crate::fokker_planck::GRID_BUDGET,
            start_grid: None,
            order_study: false,
            uniqueness: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// SHA-256 of the canonical JSON form without the execution-only fields
    /// (`workers`, `output`, `timestamp`).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.output = None;
        c.timestamp = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// The PDE grid: `grid` with `fpe.resolution` applied.
    pub fn fpe_grid(&self) -> Result<GridSpec> {
        let g = self.grid.as_ref().ok_or_else(|| Error::Config(vec!["grid: required".into()]))?;
        let mut g = g.clone();
        if let Some(r) = &self.fpe.resolution {
            g.resolution = r.clone();
        }
        g.spec()
    }

    /// `T / 2` and `T` unless snapshot times are configured.
    pub fn density_times(&self) -> Vec<f64> {
        if self.density.times.is_empty() {
            vec![0.5 * self.flow.t_end, self.flow.t_end]
        } else {
            self.density.times.clone()
        }
    }
}
