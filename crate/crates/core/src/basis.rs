//! Scaling functions warped by the design CDF.
//!
//! `phi_{J,k}(x) = 2^{J/2} phi(2^J x - k)` composed with `G` gives a system
//! that is orthonormal in `L2([0,1], G)`: substituting `u = G(x)` turns
//! every inner product into a Lebesgue one. All quadrature here therefore
//! runs in the warped coordinate and never needs the design density.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::{DesignDistribution, RegressionFunction};
use crate::quadrature::{Nodes, Rule};
use crate::{Error, Result};

/// Highest level accepted for the Haar family (cell indices fit in `u64`).
pub const MAX_HAAR_LEVEL: u32 = 62;
/// Highest level accepted for Daubechies families (dense per-level storage).
pub const MAX_DAUBECHIES_LEVEL: u32 = 20;
/// Largest level for which a dense Gram matrix is built.
pub const MAX_GRAM_LEVEL: u32 = 12;

/// Dyadic resolution of the tabulated Daubechies scaling function.
const CASCADE_RESOLUTION: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    Haar,
    /// Periodized Daubechies with `order` vanishing moments (`2 * order` taps).
    DaubechiesPeriodized(u32),
}

/// A compactly supported scaling function `phi`.
#[derive(Clone)]
pub struct ScalingFamily {
    kind: FamilyKind,
    filter: Vec<f64>,
    table: Option<Arc<Vec<f64>>>,
    sup_norm: f64,
}

impl fmt::Debug for ScalingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalingFamily")
            .field("kind", &self.kind)
            .field("support_length", &self.support_length())
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl ScalingFamily {
    pub fn haar() -> Self {
        ScalingFamily {
            kind: FamilyKind::Haar,
            filter: vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            table: None,
            sup_norm: 1.0,
        }
    }

    /// Periodized Daubechies family. Orders 2 (4 taps) and 3 (6 taps) are
    /// available in closed form.
    pub fn daubechies(order: u32) -> Result<Self> {
        let filter = daubechies_filter(order)?;
        let table = cascade(&filter, CASCADE_RESOLUTION);
        let sup_norm = table.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(ScalingFamily {
            kind: FamilyKind::DaubechiesPeriodized(order),
            filter,
            table: Some(Arc::new(table)),
            sup_norm,
        })
    }

    /// Parse a config tag: `haar`, `db4` (4 taps) or `db6` (6 taps).
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag.trim() {
            "haar" => Ok(Self::haar()),
            "db4" => Self::daubechies(2),
            "db6" => Self::daubechies(3),
            other => Err(Error::Config(format!("unknown scaling family tag {other:?}"))),
        }
    }

    pub fn tag(&self) -> String {
        match self.kind {
            FamilyKind::Haar => "haar".into(),
            FamilyKind::DaubechiesPeriodized(order) => format!("db{}", 2 * order),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn is_haar(&self) -> bool {
        self.kind == FamilyKind::Haar
    }

    /// Low-pass filter coefficients `h_k` (they sum to `sqrt(2)`).
    pub fn filter(&self) -> &[f64] {
        &self.filter
    }

    /// Length `L` of the support `[0, L]` of `phi`.
    pub fn support_length(&self) -> u32 {
        self.filter.len() as u32 - 1
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn max_level(&self) -> u32 {
        match self.kind {
            FamilyKind::Haar => MAX_HAAR_LEVEL,
            FamilyKind::DaubechiesPeriodized(_) => MAX_DAUBECHIES_LEVEL,
        }
    }

    /// Unscaled father function `phi(y)` on the real line.
    pub fn phi(&self, y: f64) -> f64 {
        match &self.table {
            None => {
                if (0.0..1.0).contains(&y) {
                    1.0
                } else {
                    0.0
                }
            }
            Some(table) => {
                let len = self.support_length() as f64;
                if !(y > 0.0 && y < len) {
                    return 0.0;
                }
                let pos = y * (1u64 << CASCADE_RESOLUTION) as f64;
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                if frac == 0.0 || i + 1 >= table.len() {
                    table[i.min(table.len() - 1)]
                } else {
                    table[i] * (1.0 - frac) + table[i + 1] * frac
                }
            }
        }
    }

    fn rule(&self) -> Rule {
        // Daubechies functions are only Holder-continuous; midpoint nodes land
        // on the tabulated dyadic grid and avoid interpolation.
        match self.kind {
            FamilyKind::Haar => Rule::GaussLegendre4,
            FamilyKind::DaubechiesPeriodized(_) => Rule::Midpoint,
        }
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level > self.max_level() {
            return Err(Error::InvalidParameter(format!(
                "level {level} exceeds the maximum {} for {}",
                self.max_level(),
                self.tag()
            )));
        }
        Ok(())
    }

    /// Nonzero `(k, phi_{J,k}(t))` pairs at `t` in [0, 1], merged by `k`.
    pub fn active(&self, level: u32, t: f64, out: &mut Vec<(u64, f64)>) {
        out.clear();
        let cells = 1u64 << level;
        let scale = (cells as f64).sqrt();
        let s = t * cells as f64;
        match self.kind {
            FamilyKind::Haar => {
                let k = (s.floor() as u64).min(cells - 1);
                out.push((k, scale));
            }
            FamilyKind::DaubechiesPeriodized(_) => {
                let len = self.support_length() as i64;
                let base = s.floor() as i64;
                for shift in (base - len + 1)..=base {
                    let v = self.phi(s - shift as f64);
                    if v == 0.0 {
                        continue;
                    }
                    let k = shift.rem_euclid(cells as i64) as u64;
                    match out.iter_mut().find(|(kk, _)| *kk == k) {
                        Some(slot) => slot.1 += scale * v,
                        None => out.push((k, scale * v)),
                    }
                }
            }
        }
    }
}

/// `2^{J/2} phi(2^J t - k)`, periodized on [0, 1] for Daubechies families.
pub fn eval_scaling(family: &ScalingFamily, level: u32, k: u64, t: f64) -> Result<f64> {
    family.check_level(level)?;
    if k >= 1u64 << level {
        return Err(Error::IndexOutOfRange { level, k });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    let mut buf = Vec::with_capacity(8);
    family.active(level, t, &mut buf);
    Ok(buf.iter().find(|(kk, _)| *kk == k).map_or(0.0, |(_, v)| *v))
}

/// Scaling family, design and level set `{J}` of the multiple test.
#[derive(Debug, Clone)]
pub struct WarpedBasis {
    family: ScalingFamily,
    design: DesignDistribution,
    levels: Vec<u32>,
}

impl WarpedBasis {
    pub fn new(family: ScalingFamily, design: DesignDistribution, levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Empty("level set"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "levels must be strictly increasing".into(),
            ));
        }
        family.check_level(*levels.last().unwrap())?;
        Ok(WarpedBasis {
            family,
            design,
            levels,
        })
    }

    pub fn family(&self) -> &ScalingFamily {
        &self.family
    }

    pub fn design(&self) -> &DesignDistribution {
        &self.design
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Number of indices at level `J` (periodized count `2^J`).
    pub fn cells(level: u32) -> u64 {
        1u64 << level
    }

    pub fn eval_warped(&self, level: u32, k: u64, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        eval_scaling(&self.family, level, k, self.design.cdf(x))
    }

    /// Index of the single Haar function that is nonzero at `x`.
    pub fn active_index(&self, level: u32, x: f64) -> Result<u64> {
        if !self.family.is_haar() {
            return Err(Error::Unsupported(format!(
                "active_index needs the Haar family, not {}",
                self.family.tag()
            )));
        }
        self.family.check_level(level)?;
        Ok(haar_cell(level, self.design.cdf(x)))
    }

    fn nodes_for(&self, level: u32, quad_points: usize, breaks: &[f64]) -> Result<Nodes> {
        self.family.check_level(level)?;
        let needed = 1usize
            .checked_shl(level + 6)
            .filter(|v| *v != 0)
            .ok_or_else(|| Error::InvalidParameter(format!("level {level} too large for quadrature")))?;
        if quad_points < needed {
            return Err(Error::QuadratureBudget {
                needed,
                got: quad_points,
            });
        }
        Ok(Nodes::new(quad_points, breaks, self.family.rule()))
    }

    /// `G[k,k'] = int phi_{J,k}(G(x)) phi_{J,k'}(G(x)) dG(x)`, by midpoint
    /// quadrature in `u = G(x)`. Row-major, `2^J x 2^J`.
    pub fn gram_matrix(&self, level: u32, quad_points: usize) -> Result<Vec<Vec<f64>>> {
        if level > MAX_GRAM_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "gram matrix limited to J <= {MAX_GRAM_LEVEL}"
            )));
        }
        self.nodes_for(level, quad_points, &[])?;
        let dim = 1usize << level;
        let mut gram = vec![vec![0.0; dim]; dim];
        if self.family.is_haar() {
            // Disjoint cells: the integral is 2^J times the cell length.
            let cells = dim as f64;
            for (k, row) in gram.iter_mut().enumerate() {
                row[k] = cells * ((k + 1) as f64 / cells - k as f64 / cells);
            }
            return Ok(gram);
        }
        let nodes = Nodes::new(quad_points, &[], Rule::Midpoint);
        let mut active = Vec::new();
        for (&u, &w) in nodes.points.iter().zip(&nodes.weights) {
            self.family.active(level, u, &mut active);
            for &(k, a) in &active {
                for &(kk, b) in &active {
                    gram[k as usize][kk as usize] += w * a * b;
                }
            }
        }
        Ok(gram)
    }

    /// `theta_{J,k} = <f, phi_{J,k} o G>` in `L2(G)`.
    pub fn project_coeffs(
        &self,
        f: &RegressionFunction,
        level: u32,
        quad_points: usize,
    ) -> Result<CoefficientVector> {
        Ok(self.project_with_norm(f, level, quad_points)?.0)
    }

    fn project_with_norm(
        &self,
        f: &RegressionFunction,
        level: u32,
        quad_points: usize,
    ) -> Result<(CoefficientVector, f64)> {
        if level > MAX_DAUBECHIES_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "dense coefficient vectors limited to J <= {MAX_DAUBECHIES_LEVEL}"
            )));
        }
        let nodes = self.nodes_for(level, quad_points, &f.warped_breakpoints(&self.design))?;
        let mut values = vec![0.0; 1usize << level];
        let mut norm_sq = 0.0;
        let mut active = Vec::new();
        for (&u, &w) in nodes.points.iter().zip(&nodes.weights) {
            let g = f.eval(self.design.quantile(u));
            norm_sq += w * g * g;
            self.family.active(level, u, &mut active);
            for &(k, v) in &active {
                values[k as usize] += w * g * v;
            }
        }
        Ok((CoefficientVector { level, values }, norm_sq))
    }

    /// `||f - Pi_{S_J} f||^2` in `L2(G)`, clamped at zero.
    pub fn projection_error(
        &self,
        f: &RegressionFunction,
        level: u32,
        quad_points: usize,
    ) -> Result<f64> {
        let (theta, norm_sq) = self.project_with_norm(f, level, quad_points)?;
        Ok((norm_sq - theta.energy()).max(0.0))
    }

    /// `phi_{J,k} o G` as a regression function (unit norm in `L2(G)`).
    pub fn basis_function(&self, level: u32, k: u64) -> Result<RegressionFunction> {
        eval_scaling(&self.family, level, k, 0.0)?;
        let family = self.family.clone();
        let design = self.design.clone();
        let bound = (Self::cells(level) as f64).sqrt() * family.sup_norm() * family.support_length() as f64;
        let breaks = if family.is_haar() {
            let cells = Self::cells(level) as f64;
            vec![design.quantile(k as f64 / cells), design.quantile((k + 1) as f64 / cells)]
        } else {
            Vec::new()
        };
        RegressionFunction::new(
            format!("phi[{},{level},{k}]", family.tag()),
            bound,
            breaks,
            move |x| eval_scaling(&family, level, k, design.cdf(x)).unwrap_or(0.0),
        )
    }
}

/// Haar cell `min(floor(2^J u), 2^J - 1)`.
#[inline]
pub fn haar_cell(level: u32, u: f64) -> u64 {
    let cells = 1u64 << level;
    ((u * cells as f64).floor() as u64).min(cells - 1)
}

/// Projection coefficients at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub level: u32,
    pub values: Vec<f64>,
}

impl CoefficientVector {
    pub fn zeros(level: u32) -> Self {
        CoefficientVector {
            level,
            values: vec![0.0; 1usize << level],
        }
    }

    /// `sum_k theta_k^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

fn daubechies_filter(order: u32) -> Result<Vec<f64>> {
    let s2 = std::f64::consts::SQRT_2;
    match order {
        2 => {
            let r3 = 3f64.sqrt();
            let d = 4.0 * s2;
            Ok(vec![(1.0 + r3) / d, (3.0 + r3) / d, (3.0 - r3) / d, (1.0 - r3) / d])
        }
        3 => {
            let r10 = 10f64.sqrt();
            let q = (5.0 + 2.0 * r10).sqrt();
            let d = 16.0 * s2;
            Ok(vec![
                (1.0 + r10 + q) / d,
                (5.0 + r10 + 3.0 * q) / d,
                (10.0 - 2.0 * r10 + 2.0 * q) / d,
                (10.0 - 2.0 * r10 - 2.0 * q) / d,
                (5.0 + r10 - 3.0 * q) / d,
                (1.0 + r10 - q) / d,
            ])
        }
        other => Err(Error::Unsupported(format!(
            "Daubechies order {other} (available: 2, 3)"
        ))),
    }
}

/// Values of `phi` on the dyadic grid `i / 2^resolution`, `0 <= i <= L 2^resolution`.
fn cascade(filter: &[f64], resolution: u32) -> Vec<f64> {
    let len = filter.len() - 1;
    let s2 = std::f64::consts::SQRT_2;

    // phi at the integers: eigenvector of A[m][j] = sqrt(2) h_{2m-j} for
    // eigenvalue 1, normalized by sum phi(m) = 1.
    let dim = len + 1;
    let mut a = vec![vec![0.0; dim + 1]; dim];
    for (m, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().take(dim).enumerate() {
            let idx = 2 * m as i64 - j as i64;
            if idx >= 0 && (idx as usize) < filter.len() {
                *cell = s2 * filter[idx as usize];
            }
        }
        row[m] -= 1.0;
    }
    for cell in a[dim - 1].iter_mut() {
        *cell = 1.0;
    }
    let at_integers = solve_dense(a);

    let step = 1usize << resolution;
    let mut table = vec![0.0; len * step + 1];
    for (m, v) in at_integers.iter().enumerate() {
        table[m * step] = *v;
    }
    for r in 1..=resolution {
        let stride = 1usize << (resolution - r);
        let mut i = stride;
        while i < len * step {
            let mut acc = 0.0;
            for (k, h) in filter.iter().enumerate() {
                let idx = 2 * i as i64 - (k * step) as i64;
                if idx >= 0 && (idx as usize) <= len * step {
                    acc += h * table[idx as usize];
                }
            }
            table[i] = s2 * acc;
            i += 2 * stride;
        }
    }
    table
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for c in col..=n {
                    a[row][c] -= factor * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (a[row][n] - tail) / a[row][row];
    }
    x
}
