//! Random-design regression model `Y = f(X) + eps` on [0, 1].
//!
//! A [`DesignDistribution`] is the law `G` of the covariate and doubles as the
//! warping map of the basis. A [`RegressionFunction`] is a bounded signal, a
//! [`NoiseModel`] a bounded, centered error law, and [`sample_dataset`]
//! glues them together into a reproducible [`Sample`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erf;

use crate::quadrature::{Nodes, Rule};
use crate::rng::{substream, Domain};
use crate::{Error, Result};

/// Weight of the uniform component mixed into the Beta-shaped designs.
///
/// Beta densities vanish at the end points, which would break the
/// "density bounded from below" requirement on `G`.
pub const UNIFORM_MIX_WEIGHT: f64 = 0.05;

/// Default quadrature resolution for norms and moments.
pub const DEFAULT_QUAD_POINTS: usize = 1 << 14;

const QUANTILE_TABLE: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignKind {
    TypeI,
    TypeII,
    TypeIII,
    Custom,
}

/// Caller-supplied design law.
pub trait DesignCdf: Send + Sync {
    fn cdf(&self, x: f64) -> f64;
    fn quantile(&self, u: f64) -> f64;
}

#[derive(Clone)]
enum Shape {
    Uniform,
    /// `(1 - w) * Beta(a, b) + w * Uniform(0, 1)`.
    BetaMix {
        a: f64,
        b: f64,
        w: f64,
        ln_norm: f64,
        /// Quantiles at `i / QUANTILE_TABLE`, used to bracket the inversion.
        table: Arc<Vec<f64>>,
    },
    Custom(Arc<dyn DesignCdf>),
}

/// Law `G` of the design variable, with its inverse and density bounds.
#[derive(Clone)]
pub struct DesignDistribution {
    kind: DesignKind,
    label: String,
    shape: Shape,
    density_lower: f64,
    density_upper: f64,
}

impl fmt::Debug for DesignDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesignDistribution")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("density_lower", &self.density_lower)
            .field("density_upper", &self.density_upper)
            .finish()
    }
}

impl DesignDistribution {
    /// Type I: uniform on [0, 1].
    pub fn type_i() -> Self {
        DesignDistribution {
            kind: DesignKind::TypeI,
            label: "type1".into(),
            shape: Shape::Uniform,
            density_lower: 1.0,
            density_upper: 1.0,
        }
    }

    /// Type II: symmetric, center-heavy (Beta(2, 2) body).
    pub fn type_ii() -> Self {
        Self::beta_mix(DesignKind::TypeII, "type2", 2.0, 2.0, UNIFORM_MIX_WEIGHT)
    }

    /// Type III: strongly right-skewed with a sparse left tail (Beta(5, 1.5) body).
    pub fn type_iii() -> Self {
        Self::beta_mix(DesignKind::TypeIII, "type3", 5.0, 1.5, UNIFORM_MIX_WEIGHT)
    }

    fn beta_mix(kind: DesignKind, label: &str, a: f64, b: f64, w: f64) -> Self {
        let ln_norm = ln_beta(a, b);
        // a, b > 1: unimodal, zero at both end points.
        let mode = (a - 1.0) / (a + b - 2.0);
        let peak = ((a - 1.0) * mode.ln() + (b - 1.0) * (1.0 - mode).ln() - ln_norm).exp();
        let mut design = DesignDistribution {
            kind,
            label: label.into(),
            shape: Shape::BetaMix {
                a,
                b,
                w,
                ln_norm,
                table: Arc::new(Vec::new()),
            },
            density_lower: w,
            density_upper: (1.0 - w) * peak + w,
        };
        let table: Vec<f64> = (0..=QUANTILE_TABLE)
            .map(|i| design.invert_cdf(i as f64 / QUANTILE_TABLE as f64, 0.0, 1.0))
            .collect();
        if let Shape::BetaMix { table: slot, .. } = &mut design.shape {
            *slot = Arc::new(table);
        }
        design
    }

    /// A user-supplied design. The cdf is spot-checked on a grid for
    /// monotonicity and the end-point conditions.
    pub fn custom(
        label: impl Into<String>,
        law: Arc<dyn DesignCdf>,
        density_lower: f64,
        density_upper: f64,
    ) -> Result<Self> {
        if !(density_lower > 0.0 && density_lower <= density_upper && density_upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "density bounds must satisfy 0 < lower <= upper < inf, got ({density_lower}, {density_upper})"
            )));
        }
        if law.cdf(0.0).abs() > 1e-12 || (law.cdf(1.0) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("cdf must satisfy cdf(0)=0 and cdf(1)=1".into()));
        }
        let mut prev = 0.0;
        for i in 0..=1024 {
            let c = law.cdf(i as f64 / 1024.0);
            if c < prev {
                return Err(Error::InvalidParameter("cdf is not non-decreasing".into()));
            }
            prev = c;
        }
        Ok(DesignDistribution {
            kind: DesignKind::Custom,
            label: label.into(),
            shape: Shape::Custom(law),
            density_lower,
            density_upper,
        })
    }

    /// Parse a config tag: `type1`, `type2` or `type3`.
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag.trim() {
            "type1" => Ok(Self::type_i()),
            "type2" => Ok(Self::type_ii()),
            "type3" => Ok(Self::type_iii()),
            other => Err(Error::Config(format!("unknown design tag {other:?}"))),
        }
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn density_lower(&self) -> f64 {
        self.density_lower
    }

    pub fn density_upper(&self) -> f64 {
        self.density_upper
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match &self.shape {
            Shape::Uniform => x,
            Shape::BetaMix { a, b, w, .. } => (1.0 - w) * beta_reg(*a, *b, x) + w * x,
            Shape::Custom(law) => law.cdf(x),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.shape {
            Shape::Uniform => u,
            Shape::BetaMix { table, .. } => {
                let pos = u * QUANTILE_TABLE as f64;
                let i = (pos.floor() as usize).min(QUANTILE_TABLE - 1);
                self.invert_cdf(u, (table[i] - 1e-12).max(0.0), (table[i + 1] + 1e-12).min(1.0))
            }
            Shape::Custom(law) => law.quantile(u),
        }
    }

    /// Density `g(x)` of the built-in designs; `None` for custom laws.
    pub fn density(&self, x: f64) -> Option<f64> {
        match &self.shape {
            Shape::Custom(_) => None,
            _ => Some(self.density_unchecked(x)),
        }
    }

    fn density_unchecked(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Uniform => 1.0,
            Shape::BetaMix { a, b, w, ln_norm, .. } => {
                let body = if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_norm).exp()
                };
                (1.0 - w) * body + w
            }
            Shape::Custom(_) => f64::NAN,
        }
    }

    // Safeguarded Newton: the bracket always contains the root and shrinks
    // every step, so the iteration cannot escape [0, 1].
    fn invert_cdf(&self, u: f64, lo: f64, hi: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (lo, hi);
        let mut x = if hi - lo < 1.0 { 0.5 * (lo + hi) } else { u };
        for _ in 0..200 {
            let r = self.cdf(x) - u;
            if r.abs() <= 1e-14 {
                return x;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = x - r / self.density_unchecked(x);
            x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 {
                break;
            }
        }
        x
    }
}

/// Heavy Sine: `4 sin(4 pi x) - sgn(x - 0.3) - sgn(0.72 - x)`, with `sgn(0) = 0`.
pub fn heavy_sine(x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(heavy_sine_unchecked(x))
}

/// Sine alternative `kappa * sin(4 pi x)`.
pub fn sine_alternative(x: f64, kappa: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(kappa * (4.0 * PI * x).sin())
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("x = {x} outside [0, 1]")))
    }
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn heavy_sine_unchecked(x: f64) -> f64 {
    4.0 * (4.0 * PI * x).sin() - sgn(x - 0.3) - sgn(0.72 - x)
}

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A bounded regression function on [0, 1].
///
/// `breakpoints` lists the x-locations of jump discontinuities (if any); the
/// quadrature routines split panels there.
#[derive(Clone)]
pub struct RegressionFunction {
    label: String,
    eval: EvalFn,
    sup_norm_bound: f64,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for RegressionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegressionFunction")
            .field("label", &self.label)
            .field("sup_norm_bound", &self.sup_norm_bound)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl RegressionFunction {
    /// Wrap a closure. `sup_norm_bound` is spot-checked on a 4097-point grid.
    pub fn new(
        label: impl Into<String>,
        sup_norm_bound: f64,
        breakpoints: Vec<f64>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(sup_norm_bound >= 0.0 && sup_norm_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sup-norm bound must be finite and >= 0, got {sup_norm_bound}"
            )));
        }
        for i in 0..=4096 {
            let x = i as f64 / 4096.0;
            let v = eval(x);
            if !(v.abs() <= sup_norm_bound * (1.0 + 1e-12) + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "|f({x})| = {} exceeds the declared bound {sup_norm_bound}",
                    v.abs()
                )));
            }
        }
        Ok(RegressionFunction {
            label: label.into(),
            eval: Arc::new(eval),
            sup_norm_bound,
            breakpoints,
        })
    }

    pub fn heavy_sine() -> Self {
        RegressionFunction {
            label: "heavy_sine".into(),
            eval: Arc::new(heavy_sine_unchecked),
            sup_norm_bound: 6.0,
            breakpoints: vec![0.3, 0.72],
        }
    }

    pub fn sine(kappa: f64) -> Self {
        RegressionFunction {
            label: format!("sine:kappa={kappa}"),
            eval: Arc::new(move |x| kappa * (4.0 * PI * x).sin()),
            sup_norm_bound: kappa.abs(),
            breakpoints: Vec::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        RegressionFunction {
            label: format!("const:c={c}"),
            eval: Arc::new(move |_| c),
            sup_norm_bound: c.abs(),
            breakpoints: Vec::new(),
        }
    }

    /// Parse a config tag: `heavy_sine`, `sine:kappa=<k>` or `const:c=<c>`.
    pub fn from_tag(tag: &str) -> Result<Self> {
        let tag = tag.trim();
        if tag == "heavy_sine" {
            return Ok(Self::heavy_sine());
        }
        if let Some(kappa) = parse_param(tag, "sine", "kappa")? {
            return Ok(Self::sine(kappa));
        }
        if let Some(c) = parse_param(tag, "const", "c")? {
            return Ok(Self::constant(c));
        }
        Err(Error::Config(format!("unknown function tag {tag:?}")))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sup_norm_bound(&self) -> f64 {
        self.sup_norm_bound
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// `c * f`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        RegressionFunction {
            label: format!("{}*{c}", self.label),
            eval: Arc::new(move |x| c * inner(x)),
            sup_norm_bound: c.abs() * self.sup_norm_bound,
            breakpoints: self.breakpoints.clone(),
        }
    }

    /// `f + delta * g`.
    pub fn plus(&self, delta: f64, g: &RegressionFunction) -> Self {
        let (a, b) = (self.eval.clone(), g.eval.clone());
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend_from_slice(&g.breakpoints);
        RegressionFunction {
            label: format!("{}+{delta}*{}", self.label, g.label),
            eval: Arc::new(move |x| a(x) + delta * b(x)),
            sup_norm_bound: self.sup_norm_bound + delta.abs() * g.sup_norm_bound,
            breakpoints,
        }
    }

    /// Breakpoints mapped into the warped coordinate `u = G(x)`.
    pub fn warped_breakpoints(&self, design: &DesignDistribution) -> Vec<f64> {
        self.breakpoints.iter().map(|&b| design.cdf(b)).collect()
    }

    /// `f o G^{-1}` as a function on the uniform design.
    pub fn unwarped(&self, design: &DesignDistribution) -> Self {
        let inner = self.eval.clone();
        let d = design.clone();
        RegressionFunction {
            label: format!("{}@{}^-1", self.label, design.label()),
            eval: Arc::new(move |u| inner(d.quantile(u))),
            sup_norm_bound: self.sup_norm_bound,
            breakpoints: self.warped_breakpoints(design),
        }
    }
}

fn parse_param(tag: &str, head: &str, key: &str) -> Result<Option<f64>> {
    let Some(rest) = tag.strip_prefix(head).and_then(|r| r.strip_prefix(':')) else {
        return Ok(None);
    };
    let value = rest
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Config(format!("tag {tag:?}: expected `{head}:{key}=<value>`")))?;
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Config(format!("tag {tag:?}: bad numeric value {value:?}")))
}

/// Error distribution.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    /// Gaussian truncated at +-3 standard units, rescaled to variance `sigma^2`.
    TruncatedGaussian { sigma: f64 },
    Uniform { halfwidth: f64 },
    /// Resampled centered residuals plus `bandwidth * Z`, clamped to `[-M, M]`.
    ResidualPool { values: Arc<Vec<f64>>, bandwidth: f64 },
}

/// Bounded, centered noise with an explicit bound `M` on `|Y - f(X)|`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    kind: NoiseKind,
    bound_m: f64,
}

const TRUNCATION: f64 = 3.0;

/// Standard deviation of a standard normal truncated to `[-3, 3]`.
pub fn truncated_normal_sd() -> f64 {
    let t = TRUNCATION;
    let mass = erf(t / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    (1.0 - 2.0 * t * pdf / mass).sqrt()
}

impl NoiseModel {
    pub fn truncated_gaussian(sigma: f64, bound_m: f64) -> Result<Self> {
        Self::checked(NoiseKind::TruncatedGaussian { sigma }, bound_m)
    }

    pub fn uniform(halfwidth: f64, bound_m: f64) -> Result<Self> {
        Self::checked(NoiseKind::Uniform { halfwidth }, bound_m)
    }

    /// Centers `residuals` and resamples them with Gaussian smoothing.
    pub fn residual_pool(residuals: &[f64], bandwidth: f64, bound_m: f64) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::Empty("residual pool"));
        }
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let values: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
        Self::checked(
            NoiseKind::ResidualPool {
                values: Arc::new(values),
                bandwidth,
            },
            bound_m,
        )
    }

    fn checked(kind: NoiseKind, bound_m: f64) -> Result<Self> {
        if !(bound_m > 0.0 && bound_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("M must be positive, got {bound_m}")));
        }
        let scale = match &kind {
            NoiseKind::TruncatedGaussian { sigma } => *sigma,
            NoiseKind::Uniform { halfwidth } => *halfwidth,
            NoiseKind::ResidualPool { bandwidth, .. } => *bandwidth,
        };
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale must be >= 0, got {scale}")));
        }
        let model = NoiseModel { kind, bound_m };
        if !matches!(model.kind, NoiseKind::ResidualPool { .. }) && model.max_abs() > bound_m {
            return Err(Error::NoiseBound {
                deviation: model.max_abs(),
                bound: bound_m,
            });
        }
        Ok(model)
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    /// Largest `|eps|` the model can produce.
    pub fn max_abs(&self) -> f64 {
        match &self.kind {
            NoiseKind::TruncatedGaussian { sigma } => TRUNCATION * sigma / truncated_normal_sd(),
            NoiseKind::Uniform { halfwidth } => *halfwidth,
            NoiseKind::ResidualPool { .. } => self.bound_m,
        }
    }

    /// Standard deviation of a draw (before any clamping).
    pub fn sd(&self) -> f64 {
        match &self.kind {
            NoiseKind::TruncatedGaussian { sigma } => *sigma,
            NoiseKind::Uniform { halfwidth } => halfwidth / 3f64.sqrt(),
            NoiseKind::ResidualPool { values, bandwidth } => {
                let var = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
                (var + bandwidth * bandwidth).sqrt()
            }
        }
    }

    /// One draw. `clamped` is incremented whenever a residual-pool draw had
    /// to be pulled back into `[-M, M]`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, clamped: &mut u64) -> f64 {
        match &self.kind {
            NoiseKind::TruncatedGaussian { sigma } => {
                if *sigma == 0.0 {
                    return 0.0;
                }
                loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= TRUNCATION {
                        return sigma * z / truncated_normal_sd();
                    }
                }
            }
            NoiseKind::Uniform { halfwidth } => {
                if *halfwidth == 0.0 {
                    return 0.0;
                }
                halfwidth * (2.0 * rng.random::<f64>() - 1.0)
            }
            NoiseKind::ResidualPool { values, bandwidth } => {
                let r = values[rng.random_range(0..values.len())];
                let eps = if *bandwidth > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    r + bandwidth * z
                } else {
                    r
                };
                if eps.abs() > self.bound_m {
                    *clamped += 1;
                    eps.clamp(-self.bound_m, self.bound_m)
                } else {
                    eps
                }
            }
        }
    }
}

/// Paired observations `(x_i, y_i)` with `x_i` in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::SampleTooSmall { n: x.len(), min: 2 });
        }
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("design point {bad} outside [0, 1]")));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite response {bad}")));
        }
        Ok(Sample { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Multiply every response by `c`.
    pub fn scale_responses(&self, c: f64) -> Sample {
        Sample {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v * c).collect(),
        }
    }
}

/// Draw `n` i.i.d. pairs from `Y = f(X) + eps` using the given generator.
///
/// Returns the sample and the number of clamped noise draws.
pub fn sample_with_rng<R: Rng + ?Sized>(
    design: &DesignDistribution,
    f: &RegressionFunction,
    noise: &NoiseModel,
    n: usize,
    rng: &mut R,
) -> Result<(Sample, u64)> {
    if n < 2 {
        return Err(Error::SampleTooSmall { n, min: 2 });
    }
    let mut clamped = 0;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.sample(Open01);
        let xi = design.quantile(u);
        let fx = f.eval(xi);
        let eps = noise.draw(rng, &mut clamped);
        let yi = fx + eps;
        let deviation = (yi - fx).abs();
        if deviation > noise.bound_m() {
            return Err(Error::NoiseBound {
                deviation,
                bound: noise.bound_m(),
            });
        }
        x.push(xi);
        y.push(yi);
    }
    Ok((Sample { x, y }, clamped))
}

/// Seeded dataset draw; bit-identical for identical arguments.
pub fn sample_dataset(
    design: &DesignDistribution,
    f: &RegressionFunction,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<Sample> {
    let mut rng = substream(seed, Domain::Dataset, 0);
    sample_with_rng(design, f, noise, n, &mut rng).map(|(s, _)| s)
}

/// Mean and variance of `f(X)` for `X ~ G`, by quadrature in `u = G(x)`.
pub fn moments_under_design(
    f: &RegressionFunction,
    design: &DesignDistribution,
    grid: usize,
) -> (f64, f64) {
    let nodes = Nodes::new(grid, &f.warped_breakpoints(design), Rule::GaussLegendre4);
    let vals: Vec<f64> = nodes.points.iter().map(|&u| f.eval(design.quantile(u))).collect();
    let mean: f64 = vals.iter().zip(&nodes.weights).map(|(v, w)| v * w).sum();
    let var: f64 = vals
        .iter()
        .zip(&nodes.weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum();
    (mean, var.max(0.0))
}

/// Noise standard deviation giving `sd_G(f(X)) / sigma = snr`.
pub fn snr_to_noise_scale(
    f: &RegressionFunction,
    design: &DesignDistribution,
    snr: f64,
    grid: usize,
) -> Result<f64> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidParameter(format!("snr must be positive, got {snr}")));
    }
    if grid == 0 {
        return Err(Error::QuadratureBudget { needed: 1, got: 0 });
    }
    let (mean, var) = moments_under_design(f, design, grid);
    if var <= 1e-24 * (1.0 + mean * mean) {
        return Err(Error::ZeroSignalVariance);
    }
    Ok(var.sqrt() / snr)
}
