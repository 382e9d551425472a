//! Null calibration of the per-level thresholds.
//!
//! Two independent batches of synthetic datasets are drawn under `f = f0`.
//! The first (B1 replicates) gives, for each level `J`, the `1 - u`
//! quantile curve `u -> r_J(u)` on a grid. The second (B2 replicates)
//! estimates the family-wise rejection probability
//!
//! ```text
//! FWE(u) = P[ max_J (R_hat_J - r_J(u)) > 0 ]
//! ```
//!
//! and `u_alpha` is the largest grid value with `FWE(u) <= alpha`.

use std::path::Path;

use rand::Rng;
use rand::distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::WarpedBasis;
use crate::design::{DesignDistribution, NoiseModel, Sample};
use crate::estimators::{r_hats_warped_into, NullFunctional, Scratch};
use crate::rng::{derive_seed, substream, Domain};
use crate::{Error, Result};

/// Version tag of the JSON calibration document.
pub const TABLE_FORMAT_VERSION: u32 = 1;

/// Minimum replicate count for a null batch.
pub const MIN_REPLICATES: usize = 100;

/// How synthetic null errors are produced.
#[derive(Debug, Clone)]
pub enum NullMode {
    /// The error law is known.
    KnownModel(NoiseModel),
    /// Centered residuals `Y_j - f0(X_j)` of a source sample, resampled and
    /// jittered by `bandwidth * Z`.
    SmoothedResidualBootstrap {
        residuals: Vec<f64>,
        bandwidth: f64,
    },
}

/// Generator of datasets under `H0: f = f0`.
#[derive(Debug, Clone)]
pub struct NullGenerator {
    mode: NullMode,
    noise: NoiseModel,
    null: NullFunctional,
    design: DesignDistribution,
    n: usize,
}

/// Normal-reference bandwidth `1.06 sd n^{-1/5}`.
pub fn default_bandwidth(residuals: &[f64]) -> f64 {
    let n = residuals.len() as f64;
    if residuals.len() < 2 {
        return 0.0;
    }
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

fn residuals_of(source: &Sample, null: &NullFunctional) -> Vec<f64> {
    source
        .x()
        .iter()
        .zip(source.y())
        .map(|(x, y)| y - null.f0().eval(*x))
        .collect()
}

impl NullGenerator {
    pub fn known_model(
        noise: NoiseModel,
        null: NullFunctional,
        design: DesignDistribution,
        n: usize,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::SampleTooSmall { n, min: 2 });
        }
        Ok(NullGenerator {
            mode: NullMode::KnownModel(noise.clone()),
            noise,
            null,
            design,
            n,
        })
    }

    /// Smoothed residual bootstrap from `source`. `bandwidth = None` uses
    /// [`default_bandwidth`]; draws are clamped to `[-bound_m, bound_m]`.
    pub fn smoothed_bootstrap(
        source: &Sample,
        null: NullFunctional,
        design: DesignDistribution,
        bandwidth: Option<f64>,
        bound_m: f64,
        n: usize,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::SampleTooSmall { n, min: 2 });
        }
        let raw = residuals_of(source, &null);
        let bandwidth = bandwidth.unwrap_or_else(|| default_bandwidth(&raw));
        let noise = NoiseModel::residual_pool(&raw, bandwidth, bound_m)?;
        let residuals = match noise.kind() {
            crate::design::NoiseKind::ResidualPool { values, .. } => values.as_ref().clone(),
            _ => unreachable!(),
        };
        Ok(NullGenerator {
            mode: NullMode::SmoothedResidualBootstrap {
                residuals,
                bandwidth,
            },
            noise,
            null,
            design,
            n,
        })
    }

    pub fn mode(&self) -> &NullMode {
        &self.mode
    }

    pub fn null(&self) -> &NullFunctional {
        &self.null
    }

    pub fn design(&self) -> &DesignDistribution {
        &self.design
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// One null dataset: warped coordinates, design points and responses.
    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Replicate) -> Result<()> {
        buf.u.clear();
        buf.x.clear();
        buf.y.clear();
        let f0 = self.null.f0();
        for _ in 0..self.n {
            let u: f64 = rng.sample(Open01);
            let x = self.design.quantile(u);
            let fx = f0.eval(x);
            let y = fx + self.noise.draw(rng, &mut buf.clamped);
            buf.u.push(u);
            buf.x.push(x);
            buf.y.push(y);
        }
        Ok(())
    }
}

/// One smoothed-bootstrap error draw from the residuals of `source` around
/// `f0`. Returns the draw and whether it had to be clamped to `[-M, M]`.
pub fn smoothed_residual_draw<R: Rng + ?Sized>(
    source: &Sample,
    null: &NullFunctional,
    bandwidth: f64,
    bound_m: f64,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if !(bandwidth >= 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be >= 0, got {bandwidth}")));
    }
    let pool = NoiseModel::residual_pool(&residuals_of(source, null), bandwidth, bound_m)?;
    let mut clamped = 0;
    let v = pool.draw(rng, &mut clamped);
    Ok((v, clamped > 0))
}

#[derive(Default)]
struct Replicate {
    u: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    clamped: u64,
    scratch: Scratch,
}

/// Null draws of `R_hat_J`: one row per replicate, one column per level.
#[derive(Debug, Clone, PartialEq)]
pub struct NullMatrix {
    pub levels: Vec<u32>,
    pub rows: usize,
    /// Row-major `rows x levels.len()`.
    pub data: Vec<f64>,
    /// Number of residual draws clamped to the M-band.
    pub clamped: u64,
}

impl NullMatrix {
    pub fn row(&self, b: usize) -> &[f64] {
        let w = self.levels.len();
        &self.data[b * w..(b + 1) * w]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let w = self.levels.len();
        (0..self.rows).map(|b| self.data[b * w + j]).collect()
    }
}

fn check_compatible(gen: &NullGenerator, basis: &WarpedBasis) -> Result<()> {
    if gen.design.label() != basis.design().label() {
        return Err(Error::CalibrationMismatch(format!(
            "generator design {} differs from basis design {}",
            gen.design.label(),
            basis.design().label()
        )));
    }
    Ok(())
}

/// Simulate `B` independent null datasets and their level statistics.
///
/// Replicate `b` uses the substream `(seed, b)`, so the matrix does not
/// depend on the rayon pool size.
pub fn simulate_null_rhat(
    gen: &NullGenerator,
    basis: &WarpedBasis,
    replicates: usize,
    seed: u64,
) -> Result<NullMatrix> {
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    check_compatible(gen, basis)?;
    let width = basis.levels().len();
    let rows: Vec<(Vec<f64>, u64)> = (0..replicates)
        .into_par_iter()
        .map_init(Replicate::default, |buf, b| {
            let mut rng = substream(seed, Domain::Dataset, b as u64);
            buf.clamped = 0;
            gen.fill(&mut rng, buf)?;
            let mut out = vec![0.0; width];
            r_hats_warped_into(basis, &gen.null, &buf.u, &buf.x, &buf.y, &mut buf.scratch, &mut out)?;
            Ok((out, buf.clamped))
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(replicates * width);
    let mut clamped = 0;
    for (row, c) in rows {
        data.extend_from_slice(&row);
        clamped += c;
    }
    Ok(NullMatrix {
        levels: basis.levels().to_vec(),
        rows: replicates,
        data,
        clamped,
    })
}

/// The `ceil((1 - u) B)`-th smallest value (conservative upper order statistic).
pub fn empirical_quantile(values: &[f64], u: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_quantile(&sorted, u)
}

fn sorted_quantile(sorted: &[f64], u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("quantile level u = {u} outside (0, 1)")));
    }
    let b = sorted.len();
    // the small offset absorbs rounding in (1 - u) * B at exact integers
    let rank = (((1.0 - u) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    Ok(sorted[rank - 1])
}

/// `n` geometrically spaced points from `alpha / 100` to `alpha`.
pub fn default_u_grid(alpha: f64, points: usize) -> Vec<f64> {
    let lo = alpha / 100.0;
    if points <= 1 {
        return vec![alpha];
    }
    let mut grid: Vec<f64> = (0..points)
        .map(|i| lo * (100f64).powf(i as f64 / (points - 1) as f64))
        .collect();
    grid[points - 1] = alpha;
    grid
}

/// Quantile curves `[level][u]` from a null matrix.
pub fn quantile_curves(matrix: &NullMatrix, u_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if matrix.rows == 0 {
        return Err(Error::Empty("null matrix"));
    }
    (0..matrix.levels.len())
        .map(|j| {
            let mut col = matrix.column(j);
            col.sort_by(f64::total_cmp);
            u_grid.iter().map(|&u| sorted_quantile(&col, u)).collect()
        })
        .collect()
}

/// Outcome of the `u_alpha` search.
#[derive(Debug, Clone, PartialEq)]
pub struct UAlphaChoice {
    pub u_alpha: f64,
    pub grid_index: usize,
    pub thresholds: Vec<f64>,
    /// Estimated family-wise error at every grid point.
    pub fwe: Vec<f64>,
    /// No grid value met the target; the smallest one was returned.
    pub fallback: bool,
}

/// Largest grid `u` whose estimated family-wise error is at most `alpha`.
pub fn calibrate_u_alpha(
    null_matrix: &NullMatrix,
    curves: &[Vec<f64>],
    alpha: f64,
    u_grid: &[f64],
) -> Result<UAlphaChoice> {
    if u_grid.is_empty() {
        return Err(Error::Empty("u grid"));
    }
    if u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("u grid must be strictly increasing".into()));
    }
    if !(u_grid[0] > 0.0 && *u_grid.last().unwrap() <= alpha) {
        return Err(Error::InvalidParameter(format!("u grid must lie in (0, {alpha}]")));
    }
    let width = null_matrix.levels.len();
    if curves.len() != width || curves.iter().any(|c| c.len() != u_grid.len()) {
        return Err(Error::LengthMismatch {
            expected: width,
            got: curves.len(),
        });
    }
    if null_matrix.rows == 0 {
        return Err(Error::Empty("null matrix"));
    }
    let fwe: Vec<f64> = (0..u_grid.len())
        .map(|g| {
            let hits = (0..null_matrix.rows)
                .filter(|&b| {
                    null_matrix
                        .row(b)
                        .iter()
                        .zip(curves)
                        .any(|(r, curve)| r - curve[g] > 0.0)
                })
                .count();
            hits as f64 / null_matrix.rows as f64
        })
        .collect();
    let chosen = fwe.iter().rposition(|&p| p <= alpha);
    let (grid_index, fallback) = match chosen {
        Some(i) => (i, false),
        None => (0, true),
    };
    Ok(UAlphaChoice {
        u_alpha: u_grid[grid_index],
        grid_index,
        thresholds: curves.iter().map(|c| c[grid_index]).collect(),
        fwe,
        fallback,
    })
}

/// Hash binding a calibration to `(n, levels, f0, design, family)`.
pub fn binding_hash(
    n: usize,
    levels: &[u32],
    null_label: &str,
    design_label: &str,
    family_tag: &str,
) -> String {
    let levels: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
    let canonical = format!(
        "n={n};levels={};null={null_label};design={design_label};family={family_tag}",
        levels.join(",")
    );
    hex16(&Sha256::digest(canonical.as_bytes()))
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Per-level null quantiles and the selected `u_alpha`, bound to one
/// `(n, levels, f0, design, family)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
    pub alpha: f64,
    pub null_label: String,
    pub design_label: String,
    pub family: String,
    pub levels: Vec<u32>,
    pub b1: usize,
    pub b2: usize,
    pub u_grid: Vec<f64>,
    /// `quantile_curves[j][g] = r_{n, levels[j]}(u_grid[g])`.
    pub quantile_curves: Vec<Vec<f64>>,
    pub fwe: Vec<f64>,
    pub u_alpha: f64,
    pub thresholds: Vec<f64>,
    pub clamped: u64,
    pub fallback: bool,
}

/// Calibration settings.
#[derive(Debug, Clone)]
pub struct CalibrationSpec {
    pub alpha: f64,
    pub b1: usize,
    pub b2: usize,
    pub u_grid: Vec<f64>,
    pub seed: u64,
}

impl CalibrationSpec {
    pub fn new(alpha: f64, b1: usize, b2: usize, seed: u64) -> Self {
        CalibrationSpec {
            alpha,
            b1,
            b2,
            u_grid: default_u_grid(alpha, 20),
            seed,
        }
    }
}

/// Two-phase calibration on disjoint substreams.
pub fn calibrate(
    gen: &NullGenerator,
    basis: &WarpedBasis,
    spec: &CalibrationSpec,
) -> Result<CalibrationTable> {
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {} outside (0, 1)", spec.alpha)));
    }
    let quantile_seed = derive_seed(spec.seed, Domain::QuantilePhase, 0);
    let level_seed = derive_seed(spec.seed, Domain::LevelPhase, 0);
    let first = simulate_null_rhat(gen, basis, spec.b1, quantile_seed)?;
    let curves = quantile_curves(&first, &spec.u_grid)?;
    let second = simulate_null_rhat(gen, basis, spec.b2, level_seed)?;
    let choice = calibrate_u_alpha(&second, &curves, spec.alpha, &spec.u_grid)?;
    let null_label = gen.null.f0().label().to_string();
    let family = basis.family().tag();
    Ok(CalibrationTable {
        format_version: TABLE_FORMAT_VERSION,
        config_hash: binding_hash(gen.n, basis.levels(), &null_label, basis.design().label(), &family),
        seed: spec.seed,
        n: gen.n,
        alpha: spec.alpha,
        null_label,
        design_label: basis.design().label().to_string(),
        family,
        levels: basis.levels().to_vec(),
        b1: spec.b1,
        b2: spec.b2,
        u_grid: spec.u_grid.clone(),
        quantile_curves: curves,
        fwe: choice.fwe,
        u_alpha: choice.u_alpha,
        thresholds: choice.thresholds,
        clamped: first.clamped + second.clamped,
        fallback: choice.fallback,
    })
}

impl CalibrationTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: CalibrationTable = serde_json::from_str(text)?;
        if table.format_version != TABLE_FORMAT_VERSION {
            return Err(Error::CalibrationMismatch(format!(
                "unsupported calibration format version {}",
                table.format_version
            )));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Refuse to use the table for a different configuration.
    pub fn check_binding(&self, n: usize, basis: &WarpedBasis, null: &NullFunctional) -> Result<()> {
        if self.levels != basis.levels() {
            return Err(Error::CalibrationMismatch(format!(
                "table levels {:?} differ from basis levels {:?}",
                self.levels,
                basis.levels()
            )));
        }
        if self.n != n {
            return Err(Error::CalibrationMismatch(format!(
                "table calibrated for n = {}, sample has n = {n}",
                self.n
            )));
        }
        let expected = binding_hash(
            n,
            basis.levels(),
            null.f0().label(),
            basis.design().label(),
            &basis.family().tag(),
        );
        if expected != self.config_hash {
            return Err(Error::CalibrationMismatch(format!(
                "table hash {} does not match configuration hash {expected} (null {}, design {})",
                self.config_hash,
                null.f0().label(),
                basis.design().label()
            )));
        }
        if self.thresholds.len() != self.levels.len() {
            return Err(Error::CalibrationMismatch("threshold count differs from level count".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ScalingFamily;
    use crate::design::{sample_dataset, RegressionFunction};

    fn setup(levels: Vec<u32>, noise: NoiseModel, f0: RegressionFunction, n: usize) -> (NullGenerator, WarpedBasis) {
        let d = DesignDistribution::type_i();
        let basis = WarpedBasis::new(ScalingFamily::haar(), d.clone(), levels).unwrap();
        let null = NullFunctional::new(f0, &d);
        (NullGenerator::known_model(noise, null, d, n).unwrap(), basis)
    }

    #[test]
    fn empirical_quantile_ranks() {
        let v = [30.0, 10.0, 50.0, 20.0, 40.0];
        assert_eq!(empirical_quantile(&v, 0.2).unwrap(), 40.0);
        assert_eq!(empirical_quantile(&v, 1e-9).unwrap(), 50.0);
        assert_eq!(empirical_quantile(&v, 0.999).unwrap(), 10.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&v, 0.0).is_err());
        assert!(empirical_quantile(&v, 1.0).is_err());
    }

    #[test]
    fn normal_median() {
        use rand_distr::StandardNormal;
        let mut rng = substream(1, Domain::Custom(9), 0);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(empirical_quantile(&draws, 0.5).unwrap().abs() < 0.02);
    }

    #[test]
    fn zero_noise_zero_null_gives_zero_matrix() {
        let (gen, basis) = setup(
            vec![0, 1, 2],
            NoiseModel::uniform(0.0, 1.0).unwrap(),
            RegressionFunction::constant(0.0),
            32,
        );
        let m = simulate_null_rhat(&gen, &basis, 100, 3).unwrap();
        assert!(m.data.iter().all(|v| *v == 0.0));
        assert!(simulate_null_rhat(&gen, &basis, 99, 3).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_pool_size_free() {
        let (gen, basis) = setup(
            (0..8).collect(),
            NoiseModel::truncated_gaussian(0.5, 10.0).unwrap(),
            RegressionFunction::sine(2.0),
            64,
        );
        let a = simulate_null_rhat(&gen, &basis, 200, 17).unwrap();
        let b = simulate_null_rhat(&gen, &basis, 200, 17).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| simulate_null_rhat(&gen, &basis, 200, 17)).unwrap();
        assert_eq!(a, c);
        let d = simulate_null_rhat(&gen, &basis, 200, 18).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn u_alpha_selection() {
        let (gen, basis) = setup(
            vec![0, 2, 4],
            NoiseModel::truncated_gaussian(1.0, 10.0).unwrap(),
            RegressionFunction::constant(0.0),
            64,
        );
        let grid = default_u_grid(0.05, 20);
        assert_eq!(grid.len(), 20);
        assert!((grid[0] - 0.0005).abs() < 1e-15 && grid[19] == 0.05);
        let first = simulate_null_rhat(&gen, &basis, 1000, 1).unwrap();
        let curves = quantile_curves(&first, &grid).unwrap();
        for c in &curves {
            assert!(c.windows(2).all(|w| w[1] <= w[0]));
        }
        let second = simulate_null_rhat(&gen, &basis, 1000, 2).unwrap();
        let choice = calibrate_u_alpha(&second, &curves, 0.05, &grid).unwrap();
        assert!(choice.fwe.windows(2).all(|w| w[0] <= w[1]));
        assert!(choice.u_alpha > 0.0 && choice.u_alpha <= 0.05);
        assert!(choice.fwe[choice.grid_index] <= 0.05);

        // degenerate null: nothing ever rejects
        let zeros = NullMatrix {
            levels: vec![0, 2, 4],
            rows: 10,
            data: vec![0.0; 30],
            clamped: 0,
        };
        let positive = vec![vec![1.0; 20]; 3];
        let c = calibrate_u_alpha(&zeros, &positive, 0.05, &grid).unwrap();
        assert_eq!(c.u_alpha, 0.05);
        assert!(!c.fallback);
        // everything rejects: fall back to the smallest grid value
        let negative = vec![vec![-1.0; 20]; 3];
        let c = calibrate_u_alpha(&zeros, &negative, 0.05, &grid).unwrap();
        assert!(c.fallback);
        assert_eq!(c.u_alpha, grid[0]);
        assert!(calibrate_u_alpha(&zeros, &positive, 0.05, &[]).is_err());
    }

    #[test]
    fn single_level_fwe_tracks_u() {
        let (gen, basis) = setup(
            vec![3],
            NoiseModel::truncated_gaussian(1.0, 10.0).unwrap(),
            RegressionFunction::constant(0.0),
            64,
        );
        let spec = CalibrationSpec::new(0.05, 4000, 4000, 5);
        let table = calibrate(&gen, &basis, &spec).unwrap();
        let se = (0.05f64 * 0.95 / 4000.0).sqrt();
        // the chosen grid value sits within binomial error of alpha
        assert!(table.u_alpha >= 0.05 / 1.28 - 3.0 * se, "u_alpha = {}", table.u_alpha);
        for (u, p) in spec.u_grid.iter().zip(&table.fwe) {
            assert!((p - u).abs() <= 4.0 * (u * (1.0 - u) / 4000.0).sqrt() + 1.0 / 4000.0);
        }
    }

    #[test]
    fn residual_bootstrap() {
        let d = DesignDistribution::type_i();
        let f = RegressionFunction::sine(2.0);
        let noise = NoiseModel::truncated_gaussian(0.4, 10.0).unwrap();
        let source = sample_dataset(&d, &f, &noise, 300, 4).unwrap();
        let null = NullFunctional::new(f.clone(), &d);
        let gen = NullGenerator::smoothed_bootstrap(&source, null.clone(), d.clone(), None, 10.0, 300).unwrap();
        match gen.mode() {
            NullMode::SmoothedResidualBootstrap { residuals, bandwidth } => {
                let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
                assert!(mean.abs() < 1e-12);
                assert!(*bandwidth > 0.0);
            }
            _ => panic!("wrong mode"),
        }

        // bandwidth 0: draws stay in the centered residual multiset
        let mut rng = substream(3, Domain::Custom(4), 0);
        let res = residuals_of(&source, &null);
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        for _ in 0..50 {
            let (v, clamped) = smoothed_residual_draw(&source, &null, 0.0, 10.0, &mut rng).unwrap();
            assert!(!clamped);
            assert!(res.iter().any(|r| ((r - mean) - v).abs() < 1e-15));
        }
        // a single residual recentered is always zero
        let one = Sample::new(vec![0.3, 0.3], vec![f.eval(0.3) + 0.7, f.eval(0.3) + 0.7]).unwrap();
        for _ in 0..10 {
            assert_eq!(smoothed_residual_draw(&one, &null, 0.0, 10.0, &mut rng).unwrap().0, 0.0);
        }
        assert!(smoothed_residual_draw(&source, &null, -1.0, 10.0, &mut rng).is_err());

        // centered in the long run
        let pool = NoiseModel::residual_pool(&res, default_bandwidth(&res), 10.0).unwrap();
        let mut c = 0;
        let draws: Vec<f64> = (0..100_000).map(|_| pool.draw(&mut rng, &mut c)).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!(m.abs() <= 4.0 * sd / (draws.len() as f64).sqrt());

        // a tight band clamps and counts
        let tight = NoiseModel::residual_pool(&res, 0.0, 0.05).unwrap();
        let mut clamped = 0;
        for _ in 0..1000 {
            assert!(tight.draw(&mut rng, &mut clamped).abs() <= 0.05);
        }
        assert!(clamped > 0);
    }

    #[test]
    fn table_json_round_trip_and_binding() {
        let (gen, basis) = setup(
            vec![0, 1, 2, 3],
            NoiseModel::truncated_gaussian(0.5, 10.0).unwrap(),
            RegressionFunction::sine(1.0),
            40,
        );
        let table = calibrate(&gen, &basis, &CalibrationSpec::new(0.05, 200, 200, 9)).unwrap();
        let back = CalibrationTable::from_json(&table.to_json().unwrap()).unwrap();
        assert_eq!(table, back);
        assert!(table.check_binding(40, &basis, gen.null()).is_ok());
        assert!(table.check_binding(41, &basis, gen.null()).is_err());
        let other = NullFunctional::new(RegressionFunction::sine(2.0), basis.design());
        assert!(table.check_binding(40, &basis, &other).is_err());
        let mut bumped = table.clone();
        bumped.format_version = 99;
        assert!(CalibrationTable::from_json(&bumped.to_json().unwrap()).is_err());
    }
}
