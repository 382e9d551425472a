use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{ScalingFamily, WarpedBasis};
use crate::calibration::hex16;
use crate::design::{DesignDistribution, NoiseModel, RegressionFunction};
use crate::envelopes::{j_bar, EnvelopeConstants};
use crate::{Error, Result};

/// Desk-scale replicate counts.
pub const DESK_B1: usize = 5_000;
pub const DESK_B2: usize = 5_000;
pub const DESK_B_EVAL: usize = 2_000;
/// Counts restored by `--paper-scale`.
pub const PAPER_B: usize = 25_000;

/// Which resolution levels enter the sup-statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    /// `{0, ..., count - 1}`.
    PaperSim(u32),
    /// `{0, ..., j_bar(n)}`.
    TheoryCap,
}

impl Default for LevelMode {
    fn default() -> Self {
        LevelMode::PaperSim(50)
    }
}

/// Source of null errors during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullModeKind {
    /// Smoothed bootstrap of the residuals of a pilot sample around `f0`.
    #[default]
    ResidualBootstrap,
    /// The truth's own noise law.
    KnownNoise,
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design_tag: String,
    pub truth_tag: String,
    pub null_tags: Vec<String>,
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub bound_m: f64,
    #[serde(default)]
    pub level_mode: LevelMode,
    #[serde(rename = "B1", default = "default_b1")]
    pub b1: usize,
    #[serde(rename = "B2", default = "default_b2")]
    pub b2: usize,
    #[serde(rename = "B_eval", default = "default_b_eval")]
    pub b_eval: usize,
    #[serde(default = "default_snr")]
    pub snr: f64,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default)]
    pub null_mode: NullModeKind,
}

fn default_b1() -> usize {
    DESK_B1
}
fn default_b2() -> usize {
    DESK_B2
}
fn default_b_eval() -> usize {
    DESK_B_EVAL
}
fn default_snr() -> f64 {
    15.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_family() -> String {
    "haar".into()
}

impl ExperimentConfig {
    /// The Table-1 style experiment for one design.
    pub fn table_one(design_tag: &str, seed: u64) -> Self {
        ExperimentConfig {
            design_tag: design_tag.into(),
            truth_tag: "heavy_sine".into(),
            null_tags: vec!["sine:kappa=2".into(), "sine:kappa=4".into(), "sine:kappa=6".into()],
            n: 512,
            alpha: 0.05,
            bound_m: 10.0,
            level_mode: LevelMode::default(),
            b1: DESK_B1,
            b2: DESK_B2,
            b_eval: DESK_B_EVAL,
            snr: default_snr(),
            seed,
            output_dir: default_output_dir(),
            family: default_family(),
            null_mode: NullModeKind::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Switch to 25,000 / 25,000 / 25,000 replicates.
    pub fn paper_scale(mut self) -> Self {
        self.b1 = PAPER_B;
        self.b2 = PAPER_B;
        self.b_eval = PAPER_B;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.n < 16 {
            return bad(format!("n must be >= 16, got {}", self.n));
        }
        for (name, b) in [("B1", self.b1), ("B2", self.b2), ("B_eval", self.b_eval)] {
            if b < 100 {
                return bad(format!("{name} must be >= 100, got {b}"));
            }
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad(format!("snr must be positive, got {}", self.snr));
        }
        if !(self.bound_m > 0.0 && self.bound_m.is_finite()) {
            return bad(format!("M must be positive, got {}", self.bound_m));
        }
        if let LevelMode::PaperSim(0) = self.level_mode {
            return bad("paper_sim needs at least one level".into());
        }
        let tagged = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        tagged(self.design().map(|_| ()))?;
        tagged(self.truth().map(|_| ()))?;
        tagged(self.nulls().map(|_| ()))?;
        tagged(ScalingFamily::from_tag(&self.family).map(|_| ()))?;
        let levels = self.levels()?;
        let max = ScalingFamily::from_tag(&self.family)?.max_level();
        if let Some(&top) = levels.last() {
            if top > max {
                return bad(format!("level {top} exceeds the maximum {max} for family {}", self.family));
            }
        }
        Ok(())
    }

    pub fn design(&self) -> Result<DesignDistribution> {
        DesignDistribution::from_tag(&self.design_tag)
    }

    pub fn truth(&self) -> Result<RegressionFunction> {
        RegressionFunction::from_tag(&self.truth_tag)
    }

    pub fn nulls(&self) -> Result<Vec<RegressionFunction>> {
        self.null_tags.iter().map(|t| RegressionFunction::from_tag(t)).collect()
    }

    pub fn levels(&self) -> Result<Vec<u32>> {
        Ok(match self.level_mode {
            LevelMode::PaperSim(c) => (0..c).collect(),
            LevelMode::TheoryCap => (0..=j_bar(self.n as u64)?).collect(),
        })
    }

    pub fn basis(&self) -> Result<WarpedBasis> {
        WarpedBasis::new(ScalingFamily::from_tag(&self.family)?, self.design()?, self.levels()?)
    }

    /// Truncated-Gaussian noise with `sd = sd_G(f) / snr`.
    pub fn truth_noise(&self) -> Result<NoiseModel> {
        let design = self.design()?;
        let truth = self.truth()?;
        noise_for(&truth, &design, self.snr, self.bound_m)
    }

    /// Hash of every experimental field; `output_dir` is excluded so that a
    /// run can be relocated without changing its identity.
    pub fn config_hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&keyed).expect("config serializes");
        hex16(&Sha256::digest(format!("v{};{canonical}", env!("CARGO_PKG_VERSION")).as_bytes()))
    }
}

/// Envelope constants from a TOML file with keys among `c1, c2, c_alpha,
/// c_rate, tau_inf, tau0_inf, m, f0_sup`. Keys left out keep their value in
/// `base`; unknown keys are an error.
pub fn load_envelope_constants(path: &Path, base: &EnvelopeConstants) -> Result<EnvelopeConstants> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |e: String| Error::Config(format!("{}: {e}", path.display()));
    let given: toml::Table = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| bad(e.to_string()))?;
    merged.extend(given);
    let c: EnvelopeConstants = merged.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    c.validate().map_err(|e| bad(e.to_string()))?;
    Ok(c)
}

/// Unit proof constants with the model-derived `tau`'s; `f0` is the first
/// null (or the truth when there is none).
pub fn model_envelope_constants(cfg: &ExperimentConfig) -> Result<EnvelopeConstants> {
    let truth = cfg.truth()?;
    let f0 = cfg.nulls()?.into_iter().next().unwrap_or_else(|| truth.clone());
    Ok(EnvelopeConstants::from_model(&truth, &f0, &cfg.truth_noise()?))
}

pub(crate) fn noise_for(
    f: &RegressionFunction,
    design: &DesignDistribution,
    snr: f64,
    bound_m: f64,
) -> Result<NoiseModel> {
    let sigma = crate::design::snr_to_noise_scale(f, design, snr, crate::design::DEFAULT_QUAD_POINTS)?;
    NoiseModel::truncated_gaussian(sigma, bound_m)
}
