//! Projection U-statistics.
//!
//! For level `J` the order-two U-statistic
//!
//! ```text
//! theta_hat = 1/(n(n-1)) sum_{i != j} sum_k Y_i phi_k(G(X_i)) Y_j phi_k(G(X_j))
//! ```
//!
//! is unbiased for `sum_k theta_k^2 = ||Pi_{S_J} f||^2`. With
//! `S_k = sum_i Y_i phi_k(G(X_i))` and `Q_k = sum_i (Y_i phi_k(G(X_i)))^2`
//! the double sum collapses to `sum_k (S_k^2 - Q_k)`. For Haar only one `k`
//! is active per observation, and after sorting the warped design points
//! once, every level is a single linear pass over runs of equal cells.

use crate::basis::{haar_cell, CoefficientVector, WarpedBasis};
use crate::design::{DesignDistribution, RegressionFunction, Sample, DEFAULT_QUAD_POINTS};
use crate::quadrature::{Nodes, Rule};
use crate::{Error, Result};

/// Null function `f0` with its cached `||f0||^2` in `L2(G)`.
#[derive(Debug, Clone)]
pub struct NullFunctional {
    f0: RegressionFunction,
    f0_norm_sq: f64,
}

impl NullFunctional {
    pub fn new(f0: RegressionFunction, design: &DesignDistribution) -> Self {
        Self::with_quad_points(f0, design, DEFAULT_QUAD_POINTS)
    }

    pub fn with_quad_points(
        f0: RegressionFunction,
        design: &DesignDistribution,
        quad_points: usize,
    ) -> Self {
        let nodes = Nodes::new(quad_points, &f0.warped_breakpoints(design), Rule::GaussLegendre4);
        let f0_norm_sq = nodes.integrate(|u| {
            let v = f0.eval(design.quantile(u));
            v * v
        });
        NullFunctional { f0, f0_norm_sq }
    }

    pub fn f0(&self) -> &RegressionFunction {
        &self.f0
    }

    pub fn f0_norm_sq(&self) -> f64 {
        self.f0_norm_sq
    }

    /// `||f0||^2 - (2/n) sum_i Y_i f0(X_i)`: the part of `R_hat` shared by all levels.
    pub fn offset(&self, x: &[f64], y: &[f64]) -> f64 {
        let cross: f64 = x.iter().zip(y).map(|(xi, yi)| yi * self.f0.eval(*xi)).sum();
        self.f0_norm_sq - 2.0 * cross / x.len() as f64
    }
}

/// Per-level statistics. `linear_term` and `u_tilde` are only filled when
/// the true coefficients are supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStatistic {
    pub level: u32,
    pub theta_hat: f64,
    pub r_hat: f64,
    pub linear_term: Option<f64>,
    pub u_tilde: Option<f64>,
}

/// Constant, linear and degenerate parts of `theta_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoeffdingParts {
    pub constant: f64,
    pub linear: f64,
    pub degenerate: f64,
}

impl HoeffdingParts {
    pub fn total(&self) -> f64 {
        self.constant + self.linear + self.degenerate
    }
}

/// Reusable buffers for the per-level passes.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    pairs: Vec<(f64, f64)>,
    dense_s: Vec<f64>,
    dense_q: Vec<f64>,
    active: Vec<(u64, f64)>,
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::SampleTooSmall { n, min: 2 })
    } else {
        Ok(())
    }
}

/// Load `(G(x_i), y_i)` into the scratch, sorted by the warped coordinate
/// when the family is Haar.
fn prepare(basis: &WarpedBasis, x: &[f64], y: &[f64], scratch: &mut Scratch) {
    let design = basis.design();
    scratch.pairs.clear();
    scratch
        .pairs
        .extend(x.iter().zip(y).map(|(xi, yi)| (design.cdf(*xi), *yi)));
    if basis.family().is_haar() {
        scratch.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
}

/// Haar `sum_k (S_k^2 - Q_k) / 2^J` over sorted pairs, and whether any cell
/// held two or more points.
fn haar_pair_sum(level: u32, pairs: &[(f64, f64)]) -> (f64, bool) {
    let mut acc = 0.0;
    let mut shared = false;
    let mut i = 0;
    while i < pairs.len() {
        let cell = haar_cell(level, pairs[i].0);
        let (mut sum, mut sumsq) = (pairs[i].1, pairs[i].1 * pairs[i].1);
        let mut j = i + 1;
        while j < pairs.len() && haar_cell(level, pairs[j].0) == cell {
            sum += pairs[j].1;
            sumsq += pairs[j].1 * pairs[j].1;
            j += 1;
        }
        if j - i > 1 {
            shared = true;
            acc += sum * sum - sumsq;
        }
        i = j;
    }
    (acc, shared)
}

/// Dense `S_k`, `Q_k` at one level for any family.
fn dense_sums(basis: &WarpedBasis, level: u32, scratch: &mut Scratch) {
    let dim = 1usize << level;
    scratch.dense_s.clear();
    scratch.dense_s.resize(dim, 0.0);
    scratch.dense_q.clear();
    scratch.dense_q.resize(dim, 0.0);
    for &(u, y) in &scratch.pairs {
        basis.family().active(level, u, &mut scratch.active);
        for &(k, v) in &scratch.active {
            let a = y * v;
            scratch.dense_s[k as usize] += a;
            scratch.dense_q[k as usize] += a * a;
        }
    }
}

fn dense_limit(basis: &WarpedBasis, level: u32) -> Result<()> {
    if level > crate::basis::MAX_DAUBECHIES_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "level {level} too large for dense accumulation with {}",
            basis.family().tag()
        )));
    }
    Ok(())
}

/// `theta_hat` for every level in `levels` over already-prepared pairs.
fn thetas_into(
    basis: &WarpedBasis,
    levels: &[u32],
    scratch: &mut Scratch,
    out: &mut [f64],
) -> Result<()> {
    let n = scratch.pairs.len() as f64;
    let norm = n * (n - 1.0);
    if let Some(&bad) = levels.iter().find(|&&l| l > basis.family().max_level()) {
        return Err(Error::InvalidParameter(format!(
            "level {bad} exceeds the maximum {} for {}",
            basis.family().max_level(),
            basis.family().tag()
        )));
    }
    if basis.family().is_haar() {
        // Haar partitions are nested: once no cell is shared, no deeper
        // level can share one either.
        let mut exhausted = false;
        for (slot, &level) in out.iter_mut().zip(levels) {
            if exhausted {
                *slot = 0.0;
                continue;
            }
            let (acc, shared) = haar_pair_sum(level, &scratch.pairs);
            exhausted = !shared;
            *slot = acc * (1u64 << level) as f64 / norm;
        }
    } else {
        for (slot, &level) in out.iter_mut().zip(levels) {
            dense_limit(basis, level)?;
            dense_sums(basis, level, scratch);
            let acc: f64 = scratch
                .dense_s
                .iter()
                .zip(&scratch.dense_q)
                .map(|(s, q)| s * s - q)
                .sum();
            *slot = acc / norm;
        }
    }
    Ok(())
}

/// Order-two projection U-statistic at level `J` (fast path).
pub fn theta_hat(sample: &Sample, basis: &WarpedBasis, level: u32) -> Result<f64> {
    check_n(sample.n())?;
    let mut scratch = Scratch::default();
    prepare(basis, sample.x(), sample.y(), &mut scratch);
    let mut out = [0.0];
    thetas_into(basis, &[level], &mut scratch, &mut out)?;
    Ok(out[0])
}

/// Literal double loop over ordered pairs `i != j`; `O(n^2 2^J)`.
pub fn theta_hat_naive(sample: &Sample, basis: &WarpedBasis, level: u32) -> Result<f64> {
    check_n(sample.n())?;
    let n = sample.n();
    let dim = 1u64 << level;
    let mut weighted = Vec::with_capacity(n);
    for (x, y) in sample.x().iter().zip(sample.y()) {
        let row = (0..dim)
            .map(|k| basis.eval_warped(level, k, *x).map(|v| y * v))
            .collect::<Result<Vec<f64>>>()?;
        weighted.push(row);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            total += weighted[i]
                .iter()
                .zip(&weighted[j])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// Unbiased estimator of `||f - f0||^2` restricted to `S_J`.
pub fn r_hat(
    sample: &Sample,
    basis: &WarpedBasis,
    level: u32,
    null: &NullFunctional,
) -> Result<f64> {
    Ok(theta_hat(sample, basis, level)? + null.offset(sample.x(), sample.y()))
}

fn check_theta(level: u32, theta: &CoefficientVector) -> Result<()> {
    let expected = 1usize << level;
    if theta.level != level || theta.values.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: theta.values.len(),
        });
    }
    Ok(())
}

/// Hoeffding decomposition of `theta_hat` around the true coefficients.
pub fn hoeffding_decompose(
    sample: &Sample,
    basis: &WarpedBasis,
    level: u32,
    true_theta: &CoefficientVector,
) -> Result<HoeffdingParts> {
    check_n(sample.n())?;
    check_theta(level, true_theta)?;
    dense_limit(basis, level)?;
    let mut scratch = Scratch::default();
    prepare(basis, sample.x(), sample.y(), &mut scratch);
    dense_sums(basis, level, &mut scratch);
    let n = sample.n() as f64;
    let mut constant = 0.0;
    let mut cross = 0.0;
    let mut degenerate = 0.0;
    for ((s, q), t) in scratch
        .dense_s
        .iter()
        .zip(&scratch.dense_q)
        .zip(&true_theta.values)
    {
        constant += t * t;
        cross += t * s;
        // sum_{i != j} a_i a_j with a_i = Y_i phi_k - theta_k
        let centered_sum = s - n * t;
        let centered_sq = q - 2.0 * t * s + n * t * t;
        degenerate += centered_sum * centered_sum - centered_sq;
    }
    Ok(HoeffdingParts {
        constant,
        linear: 2.0 * cross / n - 2.0 * constant,
        degenerate: degenerate / (n * (n - 1.0)),
    })
}

/// Degenerate part `U_tilde` of `theta_hat`.
pub fn u_tilde(
    sample: &Sample,
    basis: &WarpedBasis,
    level: u32,
    true_theta: &CoefficientVector,
) -> Result<f64> {
    Ok(hoeffding_decompose(sample, basis, level, true_theta)?.degenerate)
}

/// `theta_hat` and `r_hat` for every level of the basis, in level order.
pub fn all_level_statistics(
    sample: &Sample,
    basis: &WarpedBasis,
    null: &NullFunctional,
) -> Result<Vec<LevelStatistic>> {
    check_n(sample.n())?;
    let levels = basis.levels();
    let mut thetas = vec![0.0; levels.len()];
    let mut scratch = Scratch::default();
    prepare(basis, sample.x(), sample.y(), &mut scratch);
    thetas_into(basis, levels, &mut scratch, &mut thetas)?;
    let offset = null.offset(sample.x(), sample.y());
    Ok(levels
        .iter()
        .zip(thetas)
        .map(|(&level, theta_hat)| LevelStatistic {
            level,
            theta_hat,
            r_hat: theta_hat + offset,
            linear_term: None,
            u_tilde: None,
        })
        .collect())
}

/// Level statistic with the oracle Hoeffding terms filled in.
pub fn level_statistic_with_truth(
    sample: &Sample,
    basis: &WarpedBasis,
    level: u32,
    null: &NullFunctional,
    true_theta: &CoefficientVector,
) -> Result<LevelStatistic> {
    let parts = hoeffding_decompose(sample, basis, level, true_theta)?;
    let theta_hat = theta_hat(sample, basis, level)?;
    Ok(LevelStatistic {
        level,
        theta_hat,
        r_hat: theta_hat + null.offset(sample.x(), sample.y()),
        linear_term: Some(parts.linear),
        u_tilde: Some(parts.degenerate),
    })
}

/// Allocation-free `r_hat` for all levels; the calibration hot loop.
pub fn r_hats_into(
    basis: &WarpedBasis,
    null: &NullFunctional,
    x: &[f64],
    y: &[f64],
    scratch: &mut Scratch,
    out: &mut [f64],
) -> Result<()> {
    check_n(x.len())?;
    if out.len() != basis.levels().len() {
        return Err(Error::LengthMismatch {
            expected: basis.levels().len(),
            got: out.len(),
        });
    }
    prepare(basis, x, y, scratch);
    thetas_into(basis, basis.levels(), scratch, out)?;
    let offset = null.offset(x, y);
    out.iter_mut().for_each(|v| *v += offset);
    Ok(())
}

/// As [`r_hats_into`], with the warped coordinates `u_i = G(x_i)` already known.
pub fn r_hats_warped_into(
    basis: &WarpedBasis,
    null: &NullFunctional,
    u: &[f64],
    x: &[f64],
    y: &[f64],
    scratch: &mut Scratch,
    out: &mut [f64],
) -> Result<()> {
    check_n(x.len())?;
    if u.len() != x.len() || y.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: u.len().min(y.len()),
        });
    }
    scratch.pairs.clear();
    scratch.pairs.extend(u.iter().copied().zip(y.iter().copied()));
    if basis.family().is_haar() {
        scratch.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    thetas_into(basis, basis.levels(), scratch, out)?;
    let offset = null.offset(x, y);
    out.iter_mut().for_each(|v| *v += offset);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ScalingFamily;
    use crate::design::{sample_dataset, NoiseModel};

    fn uniform_haar(levels: Vec<u32>) -> WarpedBasis {
        WarpedBasis::new(ScalingFamily::haar(), DesignDistribution::type_i(), levels).unwrap()
    }

    #[test]
    fn small_hand_computed_values() {
        let b = uniform_haar(vec![0]);
        let s = Sample::new(vec![0.1, 0.5, 0.9], vec![1.0, 2.0, 3.0]).unwrap();
        assert!((theta_hat(&s, &b, 0).unwrap() - 22.0 / 6.0).abs() < 1e-12);
        let s2 = Sample::new(vec![0.2, 0.8], vec![1.0, 2.0]).unwrap();
        assert!((theta_hat_naive(&s2, &b, 0).unwrap() - 2.0).abs() < 1e-12);
        let c = Sample::new(vec![0.1, 0.2, 0.7, 0.9], vec![1.5; 4]).unwrap();
        assert!((theta_hat_naive(&c, &b, 0).unwrap() - 2.25).abs() < 1e-12);
        let z = Sample::new(vec![0.1, 0.2, 0.7], vec![0.0; 3]).unwrap();
        assert_eq!(theta_hat(&z, &b, 0).unwrap(), 0.0);
    }

    #[test]
    fn too_small_samples_fail() {
        let b = uniform_haar(vec![0]);
        assert!(Sample::new(vec![0.5], vec![1.0]).is_err());
        let mut scratch = Scratch::default();
        let mut out = [0.0];
        assert!(r_hats_into(
            &b,
            &NullFunctional::new(RegressionFunction::constant(0.0), b.design()),
            &[0.5],
            &[1.0],
            &mut scratch,
            &mut out
        )
        .is_err());
    }

    #[test]
    fn repeated_design_point() {
        let b = uniform_haar(vec![3]);
        let s = Sample::new(vec![0.4; 6], vec![1.0, -2.0, 0.5, 3.0, 2.0, -1.0]).unwrap();
        for j in [1, 3, 5] {
            let fast = theta_hat(&s, &b, j).unwrap();
            let slow = theta_hat_naive(&s, &b, j).unwrap();
            assert!((fast - slow).abs() < 1e-10 * (1.0 + slow.abs()));
        }
    }

    #[test]
    fn fast_matches_naive_for_daubechies() {
        let d = DesignDistribution::type_ii();
        let b = WarpedBasis::new(ScalingFamily::daubechies(2).unwrap(), d.clone(), vec![0, 1, 2, 3])
            .unwrap();
        let noise = NoiseModel::truncated_gaussian(0.5, 10.0).unwrap();
        let s = sample_dataset(&d, &RegressionFunction::heavy_sine(), &noise, 60, 3).unwrap();
        for j in 0..=3 {
            let fast = theta_hat(&s, &b, j).unwrap();
            let slow = theta_hat_naive(&s, &b, j).unwrap();
            assert!((fast - slow).abs() < 1e-10 * (1.0 + slow.abs()), "J={j}");
        }
    }

    #[test]
    fn r_hat_edge_cases() {
        let d = DesignDistribution::type_ii();
        let b = WarpedBasis::new(ScalingFamily::haar(), d.clone(), vec![0, 2, 4]).unwrap();
        let noise = NoiseModel::truncated_gaussian(0.5, 10.0).unwrap();
        let s = sample_dataset(&d, &RegressionFunction::sine(2.0), &noise, 100, 8).unwrap();
        let zero = NullFunctional::new(RegressionFunction::constant(0.0), &d);
        for j in [0, 2, 4] {
            assert_eq!(r_hat(&s, &b, j, &zero).unwrap(), theta_hat(&s, &b, j).unwrap());
        }
        let heavy = NullFunctional::new(RegressionFunction::heavy_sine(), &d);
        let quiet = Sample::new(s.x().to_vec(), vec![0.0; s.n()]).unwrap();
        assert!((r_hat(&quiet, &b, 2, &heavy).unwrap() - heavy.f0_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn null_norm_is_converged() {
        for d in [
            DesignDistribution::type_i(),
            DesignDistribution::type_ii(),
            DesignDistribution::type_iii(),
        ] {
            for f in [RegressionFunction::heavy_sine(), RegressionFunction::sine(4.0)] {
                let a = NullFunctional::with_quad_points(f.clone(), &d, 1 << 14);
                let b = NullFunctional::with_quad_points(f, &d, 1 << 15);
                assert!(a.f0_norm_sq() >= 0.0);
                assert!((a.f0_norm_sq() - b.f0_norm_sq()).abs() <= 1e-8);
            }
        }
        // ||4 sin(4 pi x)||^2 = 8 under the uniform design
        let u = NullFunctional::new(RegressionFunction::sine(4.0), &DesignDistribution::type_i());
        assert!((u.f0_norm_sq() - 8.0).abs() < 1e-10);
    }

    #[test]
    fn hoeffding_trivial_and_centering() {
        let b = uniform_haar(vec![2]);
        let z = Sample::new(vec![0.1, 0.6, 0.7], vec![0.0; 3]).unwrap();
        let parts = hoeffding_decompose(&z, &b, 2, &CoefficientVector::zeros(2)).unwrap();
        assert_eq!((parts.constant, parts.linear, parts.degenerate), (0.0, 0.0, 0.0));
        let s = Sample::new(vec![0.1, 0.15, 0.6, 0.7, 0.72], vec![1.0, -1.0, 2.0, 0.5, 4.0]).unwrap();
        let u0 = u_tilde(&s, &b, 2, &CoefficientVector::zeros(2)).unwrap();
        assert!((u0 - theta_hat(&s, &b, 2).unwrap()).abs() < 1e-12);
        assert!(matches!(
            u_tilde(&s, &b, 2, &CoefficientVector::zeros(3)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn u_tilde_matches_centered_double_loop() {
        // noiseless member of S_2 observed on an exact quantile grid
        let d = DesignDistribution::type_ii();
        let b = WarpedBasis::new(ScalingFamily::haar(), d.clone(), vec![2]).unwrap();
        let f = b.basis_function(2, 1).unwrap().plus(0.5, &b.basis_function(2, 3).unwrap());
        let theta = b.project_coeffs(&f, 2, 1 << 12).unwrap();
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| d.quantile((i as f64 + 0.5) / n as f64)).collect();
        let y: Vec<f64> = x.iter().map(|&xi| f.eval(xi)).collect();
        let s = Sample::new(x.clone(), y.clone()).unwrap();
        let mut naive = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in 0..4 {
                    let a = y[i] * b.eval_warped(2, k, x[i]).unwrap() - theta.values[k as usize];
                    let c = y[j] * b.eval_warped(2, k, x[j]).unwrap() - theta.values[k as usize];
                    naive += a * c;
                }
            }
        }
        naive /= (n * (n - 1)) as f64;
        assert!((u_tilde(&s, &b, 2, &theta).unwrap() - naive).abs() < 1e-10);
        let parts = hoeffding_decompose(&s, &b, 2, &theta).unwrap();
        assert!((parts.constant - theta.energy()).abs() < 1e-15);
    }

    #[test]
    fn all_levels_agree_with_single_calls() {
        let d = DesignDistribution::type_iii();
        let b = WarpedBasis::new(ScalingFamily::haar(), d.clone(), (0..50).collect()).unwrap();
        let noise = NoiseModel::truncated_gaussian(0.3, 10.0).unwrap();
        let s = sample_dataset(&d, &RegressionFunction::heavy_sine(), &noise, 512, 1).unwrap();
        let null = NullFunctional::new(RegressionFunction::sine(4.0), &d);
        let all = all_level_statistics(&s, &b, &null).unwrap();
        assert_eq!(all.len(), 50);
        for (i, st) in all.iter().enumerate() {
            assert_eq!(st.level, i as u32);
            let single = r_hat(&s, &b, st.level, &null).unwrap();
            assert!((st.r_hat - single).abs() <= 1e-12 * (1.0 + single.abs()));
        }
        let one = WarpedBasis::new(ScalingFamily::haar(), d, vec![4]).unwrap();
        let only = all_level_statistics(&s, &one, &null).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0].r_hat, r_hat(&s, &one, 4, &null).unwrap());
    }

    #[test]
    fn with_truth_satisfies_identity() {
        let d = DesignDistribution::type_i();
        let b = WarpedBasis::new(ScalingFamily::haar(), d.clone(), vec![3]).unwrap();
        let f = RegressionFunction::heavy_sine();
        let noise = NoiseModel::truncated_gaussian(0.4, 10.0).unwrap();
        let s = sample_dataset(&d, &f, &noise, 128, 77).unwrap();
        let theta = b.project_coeffs(&f, 3, 1 << 12).unwrap();
        let null = NullFunctional::new(RegressionFunction::constant(0.0), &d);
        let st = level_statistic_with_truth(&s, &b, 3, &null, &theta).unwrap();
        let lhs = theta.energy() + st.linear_term.unwrap() + st.u_tilde.unwrap();
        assert!((lhs - st.theta_hat).abs() < 1e-8);
    }
}
