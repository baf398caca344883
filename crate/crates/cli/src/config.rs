//! Experiment configuration: a versioned TOML schema resolved into core
//! types with field-path diagnostics.
//!
//! Schema (version 1):
//!
//! ```toml
//! version = 1
//!
//! [grid]                      # periodic torus
//! dimension = 1               # 1..3
//! side = 6.283185307179586
//! points = 64                 # power of two
//!
//! [time]
//! horizon = 1.0
//! steps = 64
//! theta = 1.0                 # implicitness of the principal part
//!
//! [run]
//! replicas = 100
//! seed = 42
//! out = "out"
//! mode = "linear"             # linear | picard | localized
//! dump_fields = false         # terminal field per replica (raw format)
//! dump_paths = false          # sampled noise per replica (CSV)
//!
//! [assumptions]
//! delta = 0.5
//! kbound = 5.0
//!
//! [noise]                     # Levy channels, in order (k = 1, 2, ...)
//! # n0 = 1                    # exempted channels of the localized mode
//! # truncation = 3.0          # jump truncation level (default +inf)
//! [[noise.channel]]
//! beta = 1.0                  # Gaussian coefficient
//! drift = 0.0                 # absorbed at load time (see below)
//! measure = { kind = "none" }
//! # measure kinds:
//! #  { kind = "finite-atoms", atoms = [{ size = 0.7, rate = 2.0 }] }
//! #  { kind = "compound-poisson", rate = 3.0,
//! #    sizes = { law = "normal", mean = 0.0, std_dev = 1.0 } }   # | uniform | laplace
//! #  { kind = "stable-like", alpha = 1.2, intensity = 0.4,
//! #    inner_cut = 0.2 }      # omit outer_cut for an infinite tail
//!
//! [coefficients]              # entries are field specs (see below)
//! a = []                      # d*d entries row-major; empty = identity
//! b_bar = []                  # d entries; empty = zeros
//! b = []
//! c = { kind = "constant", value = 0.0 }
//! sigma = []                  # channels*dim entries, channel-major
//! mu = []                     # one per channel
//!
//! [data]
//! u0 = { kind = "constant", value = 0.0 }
//! f = { kind = "constant", value = 0.0 }
//! g = []                      # one per channel; empty = zeros
//! # nonlinear = { kind = "fractional", alpha = 1.5, beta = 0.5,
//! #               epsilon = 0.1, k1 = 12.0 }       # picard mode
//! # nonlinear = { kind = "linear-reaction", rate = 0.4, epsilon = 0.01, k1 = 1.0 }
//!
//! [verify]
//! channel = 1                 # 1-based channel for noise-law checks
//! replicas = 10000            # falls back to run.replicas
//!
//! [converge]
//! ladder = [64, 128, 256]
//! reference = "oracle"        # oracle | self
//! refine = 16                 # reference refinement factor
//! realizations = 8
//! ```
//!
//! Field specs:
//!
//! ```toml
//! { kind = "constant", value = 1.0 }
//! { kind = "file", path = "field.bin" }            # raw field file
//! { kind = "separable", time = { kind = "cosine", amplitude = 1.0, frequency = 3.0 },
//!   space = "field.bin" }                          # profile * file field
//! { kind = "adapted", name = "clipped-noise-level",
//!   channel = 1, base = 1.0, gain = 0.5, lo = 0.5, hi = 1.5 }
//! ```
//!
//! Nonzero channel drifts are absorbed at load time: the extracted drift
//! moves the channel's noise coefficients into the deterministic side
//! (`b += drift * sigma`, `c += drift * mu`, `f += drift * g`), matching
//! the reduction that makes the stored drivers martingales.

use std::fs;
use std::path::{Path, PathBuf};

use levypde::coeff::{AdaptedCoefficient, CoefficientField, CoefficientSet, TimeProfile};
use levypde::field::{io as field_io, Field, TorusGrid};
use levypde::levy::{
    absorb_large_jump_drift, Atom, JumpSizeDist, LevyMeasure, LevyTriplet, NoiseFamily, TimeGrid,
};
use levypde::solver::{NonlinearForcing, SolverConfig, SplitLipschitz};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{path}`: {msg}")]
    Field { path: String, msg: String },
}

fn field_err<T>(path: &str, msg: impl ToString) -> Result<T, ConfigError> {
    Err(ConfigError::Field {
        path: path.to_string(),
        msg: msg.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Raw schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub grid: GridBlock,
    pub time: TimeBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub assumptions: AssumptionsBlock,
    pub noise: NoiseBlock,
    #[serde(default)]
    pub coefficients: CoefficientsBlock,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub converge: ConvergeBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dimension: usize,
    pub side: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub replicas: usize,
    pub seed: u64,
    pub out: String,
    pub mode: RunMode,
    pub dump_fields: bool,
    pub dump_paths: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            replicas: 100,
            seed: 0,
            out: "out".into(),
            mode: RunMode::Linear,
            dump_fields: false,
            dump_paths: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Linear,
    Picard,
    Localized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssumptionsBlock {
    pub delta: f64,
    pub kbound: f64,
}

impl Default for AssumptionsBlock {
    fn default() -> Self {
        Self {
            delta: 0.5,
            kbound: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub channel: Vec<ChannelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub drift: f64,
    pub measure: MeasureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    None,
    FiniteAtoms {
        atoms: Vec<AtomConfig>,
    },
    CompoundPoisson {
        rate: f64,
        sizes: SizeLawConfig,
    },
    StableLike {
        alpha: f64,
        intensity: f64,
        inner_cut: f64,
        #[serde(default)]
        outer_cut: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub size: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SizeLawConfig {
    Normal { mean: f64, std_dev: f64 },
    Uniform { lo: f64, hi: f64 },
    Laplace { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientsBlock {
    pub a: Vec<FieldSpecConfig>,
    pub b_bar: Vec<FieldSpecConfig>,
    pub b: Vec<FieldSpecConfig>,
    pub c: Option<FieldSpecConfig>,
    pub sigma: Vec<FieldSpecConfig>,
    pub mu: Vec<FieldSpecConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataBlock {
    pub u0: Option<FieldSpecConfig>,
    pub f: Option<FieldSpecConfig>,
    pub g: Vec<FieldSpecConfig>,
    pub nonlinear: Option<NonlinearConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearConfig {
    Fractional {
        alpha: f64,
        beta: f64,
        epsilon: f64,
        k1: f64,
    },
    LinearReaction {
        rate: f64,
        epsilon: f64,
        k1: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpecConfig {
    Constant {
        value: f64,
    },
    File {
        path: String,
    },
    Separable {
        time: TimeProfileConfig,
        space: String,
    },
    Adapted {
        name: String,
        channel: usize,
        base: f64,
        gain: f64,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeProfileConfig {
    Constant { value: f64 },
    Cosine { amplitude: f64, frequency: f64 },
    ExpDecay { amplitude: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    pub channel: usize,
    pub replicas: Option<usize>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            channel: 1,
            replicas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeBlock {
    pub ladder: Vec<usize>,
    pub reference: ConvergeReference,
    pub refine: usize,
    pub realizations: usize,
}

impl Default for ConvergeBlock {
    fn default() -> Self {
        Self {
            ladder: vec![64, 128, 256],
            reference: ConvergeReference::Oracle,
            refine: 16,
            realizations: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergeReference {
    Oracle,
    SelfRefined,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Fully resolved experiment: core types plus run/check parameters.
pub struct Resolved {
    pub raw: ExperimentConfig,
    pub grid: TorusGrid<f64>,
    pub time: TimeGrid<f64>,
    pub solver: SolverConfig<f64>,
    pub family: NoiseFamily<f64>,
    pub set: CoefficientSet<f64>,
    pub f: CoefficientField<f64>,
    pub g: Vec<CoefficientField<f64>>,
    pub u0: Field<f64>,
    pub nonlinear: Option<NonlinearForcing<f64>>,
    pub localization: Option<(usize, f64)>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    /// Canonical serialization; hashing and the round-trip contract use it.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, config_dir: &Path) -> Result<Resolved, ConfigError> {
        if self.version != 1 {
            return field_err("version", format!("unsupported version {}", self.version));
        }
        let grid = TorusGrid::new(self.grid.dimension, self.grid.side, self.grid.points)
            .map_err(|e| ConfigError::Field {
                path: "grid".into(),
                msg: e.to_string(),
            })?;
        let time = TimeGrid::new(self.time.horizon, self.time.steps).map_err(|e| {
            ConfigError::Field {
                path: "time".into(),
                msg: e.to_string(),
            }
        })?;
        if !(0.0..=1.0).contains(&self.time.theta) {
            return field_err("time.theta", "must lie in [0, 1]");
        }
        let solver = SolverConfig::new(time, grid, self.time.theta);

        // channels
        let mut triplets = Vec::new();
        let mut extracted_drifts = Vec::new();
        for (k, ch) in self.noise.channel.iter().enumerate() {
            let path = format!("noise.channel[{k}]");
            let measure = resolve_measure(&ch.measure, &path)?;
            let raw = LevyTriplet::new(ch.drift, ch.beta, measure).map_err(|e| {
                ConfigError::Field {
                    path: path.clone(),
                    msg: e.to_string(),
                }
            })?;
            if ch.drift != 0.0 {
                let (mart, drift_out) =
                    absorb_large_jump_drift(&raw).map_err(|e| ConfigError::Field {
                        path: path.clone(),
                        msg: e.to_string(),
                    })?;
                triplets.push(mart);
                extracted_drifts.push(drift_out);
            } else {
                extracted_drifts.push(0.0);
                triplets.push(raw);
            }
        }
        let family = NoiseFamily::new(triplets);
        let channels = family.len();
        let d = grid.dim();

        // coefficients
        let resolve_list = |list: &[FieldSpecConfig],
                            expected: usize,
                            default: CoefficientField<f64>,
                            path: &str|
         -> Result<Vec<CoefficientField<f64>>, ConfigError> {
            if list.is_empty() {
                return Ok(vec![default; expected]);
            }
            if list.len() != expected {
                return field_err(
                    path,
                    format!("expected {expected} entries, got {}", list.len()),
                );
            }
            list.iter()
                .enumerate()
                .map(|(i, spec)| {
                    resolve_field_spec(spec, grid, channels, config_dir, &format!("{path}[{i}]"))
                })
                .collect()
        };

        let a = if self.coefficients.a.is_empty() {
            let mut a = vec![CoefficientField::zero(); d * d];
            for i in 0..d {
                a[i * d + i] = CoefficientField::Constant(1.0);
            }
            a
        } else {
            resolve_list(
                &self.coefficients.a,
                d * d,
                CoefficientField::zero(),
                "coefficients.a",
            )?
        };
        let b_bar = resolve_list(
            &self.coefficients.b_bar,
            d,
            CoefficientField::zero(),
            "coefficients.b_bar",
        )?;
        let mut b = resolve_list(
            &self.coefficients.b,
            d,
            CoefficientField::zero(),
            "coefficients.b",
        )?;
        let mut c = match &self.coefficients.c {
            Some(spec) => resolve_field_spec(spec, grid, channels, config_dir, "coefficients.c")?,
            None => CoefficientField::zero(),
        };
        let sigma = resolve_list(
            &self.coefficients.sigma,
            channels * d,
            CoefficientField::zero(),
            "coefficients.sigma",
        )?;
        let mu = resolve_list(
            &self.coefficients.mu,
            channels,
            CoefficientField::zero(),
            "coefficients.mu",
        )?;

        // data
        let u0_spec = match &self.data.u0 {
            Some(spec) => resolve_field_spec(spec, grid, channels, config_dir, "data.u0")?,
            None => CoefficientField::zero(),
        };
        let u0 = u0_spec
            .eval(&levypde::coeff::CoeffContext {
                grid,
                node: 0,
                time: 0.0,
                noise: None,
            })
            .map_err(|e| ConfigError::Field {
                path: "data.u0".into(),
                msg: e.to_string(),
            })?;
        let mut f = match &self.data.f {
            Some(spec) => resolve_field_spec(spec, grid, channels, config_dir, "data.f")?,
            None => CoefficientField::zero(),
        };
        let g = resolve_list(&self.data.g, channels, CoefficientField::zero(), "data.g")?;

        // drift absorption folds the noise coefficients into the dt term
        for (k, &drift) in extracted_drifts.iter().enumerate() {
            if drift == 0.0 {
                continue;
            }
            let fold = |target: &mut CoefficientField<f64>, part: &CoefficientField<f64>| {
                let addend = CoefficientField::Scaled {
                    factor: drift,
                    offset: 0.0,
                    inner: Box::new(part.clone()),
                };
                *target = CoefficientField::Sum(vec![target.clone(), addend]);
            };
            for i in 0..d {
                let part = sigma[k * d + i].clone();
                fold(&mut b[i], &part);
            }
            fold(&mut c, &mu[k].clone());
            fold(&mut f, &g[k].clone());
        }

        let set = CoefficientSet::new(d, channels, a, b_bar, b, c, sigma, mu).map_err(|e| {
            ConfigError::Field {
                path: "coefficients".into(),
                msg: e.to_string(),
            }
        })?;

        // localization
        let localization = match self.noise.n0 {
            Some(n0) => {
                if n0 > channels {
                    return field_err("noise.n0", format!("exceeds channel count {channels}"));
                }
                Some((n0, self.noise.truncation.unwrap_or(f64::INFINITY)))
            }
            None => None,
        };
        if self.run.mode == RunMode::Localized && localization.is_none() {
            return field_err("noise.n0", "localized mode needs an n0 block");
        }

        // nonlinear forcing
        let nonlinear = match &self.data.nonlinear {
            Some(NonlinearConfig::Fractional {
                alpha,
                beta,
                epsilon,
                k1,
            }) => {
                if !(*alpha < 2.0) {
                    return field_err("data.nonlinear.alpha", "must satisfy alpha < 2");
                }
                if !(*beta < 1.0) {
                    return field_err("data.nonlinear.beta", "must satisfy beta < 1");
                }
                Some(NonlinearForcing::fractional(
                    *alpha,
                    *beta,
                    channels,
                    SplitLipschitz {
                        epsilon: *epsilon,
                        k1: *k1,
                    },
                ))
            }
            Some(NonlinearConfig::LinearReaction { rate, epsilon, k1 }) => {
                Some(NonlinearForcing::linear_reaction(
                    *rate,
                    channels,
                    SplitLipschitz {
                        epsilon: *epsilon,
                        k1: *k1,
                    },
                ))
            }
            None => None,
        };
        if self.run.mode == RunMode::Picard && nonlinear.is_none() {
            return field_err("data.nonlinear", "picard mode needs a nonlinear block");
        }

        if self.verify.channel == 0 || self.verify.channel > channels.max(1) {
            return field_err(
                "verify.channel",
                format!("must reference a channel in 1..={channels}"),
            );
        }

        Ok(Resolved {
            raw: self.clone(),
            grid,
            time,
            solver,
            family,
            set,
            f,
            g,
            u0,
            nonlinear,
            localization,
        })
    }
}

fn resolve_measure(m: &MeasureConfig, path: &str) -> Result<LevyMeasure<f64>, ConfigError> {
    let measure = match m {
        MeasureConfig::None => LevyMeasure::none(),
        MeasureConfig::FiniteAtoms { atoms } => LevyMeasure::FiniteAtoms(
            atoms
                .iter()
                .map(|a| Atom {
                    size: a.size,
                    rate: a.rate,
                })
                .collect(),
        ),
        MeasureConfig::CompoundPoisson { rate, sizes } => LevyMeasure::DensityCompoundPoisson {
            rate: *rate,
            sizes: match sizes {
                SizeLawConfig::Normal { mean, std_dev } => JumpSizeDist::Normal {
                    mean: *mean,
                    std_dev: *std_dev,
                },
                SizeLawConfig::Uniform { lo, hi } => JumpSizeDist::Uniform { lo: *lo, hi: *hi },
                SizeLawConfig::Laplace { scale } => JumpSizeDist::Laplace { scale: *scale },
            },
        },
        MeasureConfig::StableLike {
            alpha,
            intensity,
            inner_cut,
            outer_cut,
        } => LevyMeasure::TruncatedStableLike {
            alpha: *alpha,
            intensity: *intensity,
            inner_cut: *inner_cut,
            outer_cut: outer_cut.unwrap_or(f64::INFINITY),
        },
    };
    measure.validate().map_err(|e| ConfigError::Field {
        path: path.to_string(),
        msg: e.to_string(),
    })?;
    Ok(measure)
}

fn resolve_field_spec(
    spec: &FieldSpecConfig,
    grid: TorusGrid<f64>,
    channels: usize,
    config_dir: &Path,
    path: &str,
) -> Result<CoefficientField<f64>, ConfigError> {
    match spec {
        FieldSpecConfig::Constant { value } => Ok(CoefficientField::Constant(*value)),
        FieldSpecConfig::File { path: file } => {
            let field = load_field(config_dir, file, grid, path)?;
            Ok(CoefficientField::Separable {
                time: TimeProfile::Constant(1.0),
                space: field,
            })
        }
        FieldSpecConfig::Separable { time, space } => {
            let field = load_field(config_dir, space, grid, path)?;
            Ok(CoefficientField::Separable {
                time: match time {
                    TimeProfileConfig::Constant { value } => TimeProfile::Constant(*value),
                    TimeProfileConfig::Cosine {
                        amplitude,
                        frequency,
                    } => TimeProfile::Cosine {
                        amplitude: *amplitude,
                        frequency: *frequency,
                    },
                    TimeProfileConfig::ExpDecay { amplitude, rate } => TimeProfile::ExpDecay {
                        amplitude: *amplitude,
                        rate: *rate,
                    },
                },
                space: field,
            })
        }
        FieldSpecConfig::Adapted {
            name,
            channel,
            base,
            gain,
            lo,
            hi,
        } => {
            if name != "clipped-noise-level" {
                return field_err(path, format!("unknown adapted functional `{name}`"));
            }
            if *channel == 0 || *channel > channels {
                return field_err(path, format!("channel must lie in 1..={channels}"));
            }
            Ok(CoefficientField::Adapted(
                AdaptedCoefficient::ClippedNoiseLevel {
                    channel: channel - 1,
                    base: *base,
                    gain: *gain,
                    lo: *lo,
                    hi: *hi,
                },
            ))
        }
    }
}

fn load_field(
    config_dir: &Path,
    file: &str,
    grid: TorusGrid<f64>,
    path: &str,
) -> Result<Field<f64>, ConfigError> {
    let full = config_dir.join(file);
    let mut reader = fs::File::open(&full).map_err(|source| ConfigError::Io {
        path: full.clone(),
        source,
    })?;
    let field: Field<f64> = field_io::read_raw(&mut reader).map_err(|e| ConfigError::Field {
        path: path.to_string(),
        msg: format!("{}: {e}", full.display()),
    })?;
    if *field.grid() != grid {
        return field_err(
            path,
            format!(
                "field file {} has grid {:?}, config wants {:?}",
                full.display(),
                field.grid(),
                grid
            ),
        );
    }
    Ok(field)
}
