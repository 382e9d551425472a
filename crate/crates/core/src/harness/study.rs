use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NullModeKind};
use crate::basis::WarpedBasis;
use crate::calibration::{calibrate, CalibrationSpec, CalibrationTable, NullGenerator};
use crate::design::{sample_with_rng, DesignDistribution, NoiseModel, RegressionFunction, Sample};
use crate::estimators::{r_hats_into, NullFunctional, Scratch};
use crate::rng::{derive_seed, substream, Domain};
use crate::{Error, Result};

/// Label of the level row in a [`PowerTable`].
pub const LEVEL_ROW: &str = "level";

const CALIBRATION_TAG: u64 = 0xCA11_B0A7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub design_tag: String,
    pub null_tag: String,
    pub estimate: f64,
    pub mc_stderr: f64,
    #[serde(rename = "B_eval")]
    pub b_eval: usize,
    pub seed: u64,
}

impl PowerRow {
    fn new(design_tag: &str, null_tag: &str, rejections: usize, b_eval: usize, seed: u64) -> Self {
        let p = rejections as f64 / b_eval as f64;
        PowerRow {
            design_tag: design_tag.into(),
            null_tag: null_tag.into(),
            estimate: p,
            mc_stderr: (p * (1.0 - p) / b_eval as f64).sqrt(),
            b_eval,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn row(&self, null_tag: &str) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.null_tag == null_tag)
    }
}

/// Everything a study needs, resolved from a config. Fields are public so
/// that callers can substitute components (for instance a noiseless model).
#[derive(Debug, Clone)]
pub struct StudySetup {
    pub design_tag: String,
    pub design: DesignDistribution,
    pub truth: RegressionFunction,
    pub noise: NoiseModel,
    pub nulls: Vec<(String, RegressionFunction)>,
    pub basis: WarpedBasis,
    pub n: usize,
    pub alpha: f64,
    pub bound_m: f64,
    pub b1: usize,
    pub b2: usize,
    pub b_eval: usize,
    pub seed: u64,
    pub null_mode: NullModeKind,
}

/// Result of a full study.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub table: PowerTable,
    /// One calibration per row, in row order.
    pub calibrations: Vec<CalibrationTable>,
}

impl StudySetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let nulls = cfg
            .null_tags
            .iter()
            .zip(cfg.nulls()?)
            .map(|(t, f)| (t.clone(), f))
            .collect();
        Ok(StudySetup {
            design_tag: cfg.design_tag.clone(),
            design: cfg.design()?,
            truth: cfg.truth()?,
            noise: cfg.truth_noise()?,
            nulls,
            basis: cfg.basis()?,
            n: cfg.n,
            alpha: cfg.alpha,
            bound_m: cfg.bound_m,
            b1: cfg.b1,
            b2: cfg.b2,
            b_eval: cfg.b_eval,
            seed: cfg.seed,
            null_mode: cfg.null_mode,
        })
    }

    /// Pilot sample from the truth; the source of bootstrap residuals.
    pub fn pilot(&self) -> Result<Sample> {
        let mut rng = substream(self.seed, Domain::Pilot, 0);
        Ok(sample_with_rng(&self.design, &self.truth, &self.noise, self.n, &mut rng)?.0)
    }

    /// Evaluation dataset `b`, shared by every row.
    pub fn evaluation_sample(&self, b: usize) -> Result<Sample> {
        let mut rng = substream(self.seed, Domain::Evaluation, b as u64);
        Ok(sample_with_rng(&self.design, &self.truth, &self.noise, self.n, &mut rng)?.0)
    }

    pub fn null_generator(&self, f0: &RegressionFunction, pilot: &Sample) -> Result<NullGenerator> {
        let null = NullFunctional::new(f0.clone(), &self.design);
        match self.null_mode {
            NullModeKind::KnownNoise => {
                NullGenerator::known_model(self.noise.clone(), null, self.design.clone(), self.n)
            }
            NullModeKind::ResidualBootstrap => NullGenerator::smoothed_bootstrap(
                pilot,
                null,
                self.design.clone(),
                None,
                self.bound_m,
                self.n,
            ),
        }
    }

    /// Calibrate row `index` against `f0`.
    pub fn calibrate_row(&self, index: usize, f0: &RegressionFunction, pilot: &Sample) -> Result<CalibrationTable> {
        let gen = self.null_generator(f0, pilot)?;
        let spec = CalibrationSpec::new(
            self.alpha,
            self.b1,
            self.b2,
            derive_seed(self.seed, Domain::Custom(CALIBRATION_TAG), index as u64),
        );
        calibrate(&gen, &self.basis, &spec)
    }

    /// Fraction of evaluation datasets on which the test rejects.
    pub fn rejections(&self, f0: &RegressionFunction, table: &CalibrationTable) -> Result<usize> {
        let null = NullFunctional::new(f0.clone(), &self.design);
        table.check_binding(self.n, &self.basis, &null)?;
        let width = self.basis.levels().len();
        let hits: Vec<bool> = (0..self.b_eval)
            .into_par_iter()
            .map_init(Scratch::default, |scratch, b| {
                let s = self.evaluation_sample(b)?;
                let mut out = vec![0.0; width];
                r_hats_into(&self.basis, &null, s.x(), s.y(), scratch, &mut out)?;
                Ok(out.iter().zip(&table.thresholds).any(|(r, t)| r - t > 0.0))
            })
            .collect::<Result<_>>()?;
        Ok(hits.into_iter().filter(|h| *h).count())
    }

    /// Level row (null = truth) followed by one power row per null.
    pub fn run(&self) -> Result<StudyOutput> {
        let pilot = self.pilot()?;
        let mut rows = vec![(LEVEL_ROW.to_string(), self.truth.clone())];
        rows.extend(self.nulls.iter().cloned());
        let mut table = PowerTable::default();
        let mut calibrations = Vec::with_capacity(rows.len());
        for (i, (tag, f0)) in rows.iter().enumerate() {
            let cal = self.calibrate_row(i, f0, &pilot)?;
            let hits = self.rejections(f0, &cal)?;
            table.rows.push(PowerRow::new(&self.design_tag, tag, hits, self.b_eval, self.seed));
            calibrations.push(cal);
        }
        Ok(StudyOutput { table, calibrations })
    }
}

/// Run `f` on a pool of `jobs` workers (`None`: rayon's default).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Calibrate, evaluate and tabulate the level and power rows of `cfg`.
pub fn run_level_power_study(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<StudyOutput> {
    let setup = StudySetup::from_config(cfg)?;
    with_jobs(jobs, || setup.run())?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ScalingFamily;
    use crate::harness::config::LevelMode;

    fn small(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n: 64,
            b1: 200,
            b2: 200,
            b_eval: 200,
            level_mode: LevelMode::PaperSim(8),
            null_tags: vec!["sine:kappa=4".into()],
            ..ExperimentConfig::table_one("type1", seed)
        }
    }

    #[test]
    fn study_shape_and_determinism() {
        let cfg = small(3);
        let a = run_level_power_study(&cfg, Some(1)).unwrap();
        let b = run_level_power_study(&cfg, Some(2)).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.table.rows.len(), 2);
        assert_eq!(a.table.rows[0].null_tag, LEVEL_ROW);
        for r in &a.table.rows {
            assert!((0.0..=1.0).contains(&r.estimate));
            assert_eq!(r.mc_stderr, (r.estimate * (1.0 - r.estimate) / 200.0).sqrt());
        }
        assert!(run_level_power_study(&cfg, Some(0)).is_err());
    }

    #[test]
    fn noiseless_constant_truth_never_rejects() {
        let cfg = small(5);
        let mut setup = StudySetup::from_config(&cfg).unwrap();
        setup.truth = RegressionFunction::constant(0.0);
        setup.noise = NoiseModel::uniform(0.0, 10.0).unwrap();
        setup.nulls.clear();
        setup.basis = WarpedBasis::new(ScalingFamily::haar(), setup.design.clone(), (0..8).collect()).unwrap();
        let out = setup.run().unwrap();
        assert_eq!(out.table.rows[0].estimate, 0.0);
    }
}
