//! The calibrated sup-statistic and its decision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::WarpedBasis;
use crate::calibration::CalibrationTable;
use crate::design::Sample;
use crate::estimators::{r_hats_into, NullFunctional, Scratch};
use crate::Result;

/// One level's contribution to the sup-statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelExcess {
    #[serde(rename = "J")]
    pub level: u32,
    pub r_hat: f64,
    pub threshold: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// `max_J (R_hat_J - r_J(u_alpha))`.
    pub r_alpha: f64,
    pub reject: bool,
    /// Smallest level attaining the maximum.
    pub argmax_level: u32,
    pub per_level: Vec<LevelExcess>,
    pub alpha: f64,
    pub u_alpha: f64,
}

fn decide(r_hats: &[f64], table: &CalibrationTable) -> TestOutcome {
    let per_level: Vec<LevelExcess> = table
        .levels
        .iter()
        .zip(r_hats)
        .zip(&table.thresholds)
        .map(|((&level, &r_hat), &threshold)| LevelExcess {
            level,
            r_hat,
            threshold,
            excess: r_hat - threshold,
        })
        .collect();
    let mut best = 0;
    for (i, l) in per_level.iter().enumerate() {
        if l.excess > per_level[best].excess {
            best = i;
        }
    }
    let r_alpha = per_level[best].excess;
    TestOutcome {
        r_alpha,
        reject: r_alpha > 0.0,
        argmax_level: per_level[best].level,
        per_level,
        alpha: table.alpha,
        u_alpha: table.u_alpha,
    }
}

/// Test `H0: f = f0` on `sample`. Rejects iff some level exceeds its
/// threshold strictly.
pub fn run_test(
    sample: &Sample,
    basis: &WarpedBasis,
    null: &NullFunctional,
    table: &CalibrationTable,
) -> Result<TestOutcome> {
    table.check_binding(sample.n(), basis, null)?;
    let mut out = vec![0.0; basis.levels().len()];
    r_hats_into(basis, null, sample.x(), sample.y(), &mut Scratch::default(), &mut out)?;
    Ok(decide(&out, table))
}

/// Run the test on many datasets; outputs keep the input order.
pub fn decision_boundary_scan(
    samples: &[Sample],
    basis: &WarpedBasis,
    null: &NullFunctional,
    table: &CalibrationTable,
) -> Result<Vec<TestOutcome>> {
    for s in samples {
        table.check_binding(s.n(), basis, null)?;
    }
    let width = basis.levels().len();
    samples
        .par_iter()
        .map_init(Scratch::default, |scratch, s| {
            let mut out = vec![0.0; width];
            r_hats_into(basis, null, s.x(), s.y(), scratch, &mut out)?;
            Ok(decide(&out, table))
        })
        .collect()
}
