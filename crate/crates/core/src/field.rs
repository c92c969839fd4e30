//! Synthetic score-error fields `e(x)` added to the exact score.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreErrorField {
    #[default]
    None,
    /// `e(x) = ell_bar * x`.
    Linear { ell_bar: f64 },
    /// `e(x) = omega * J x` with `J` the planar quarter turn.
    #[serde(rename = "skew_rotation_2d")]
    SkewRotation2D { omega: f64 },
    /// `e(x) = height * (x / width) * exp(-|x|^2 / (2 width^2))`.
    BoundedBump { height: f64, width: f64 },
}

impl ScoreErrorField {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            ScoreErrorField::None => Ok(()),
            ScoreErrorField::Linear { ell_bar } => ensure(ell_bar.is_finite(), || "ell_bar must be finite".into()),
            ScoreErrorField::SkewRotation2D { omega } => {
                ensure(omega.is_finite(), || "omega must be finite".into())?;
                ensure(dim == 2, || format!("skew rotation needs d = 2, got d = {dim}"))
            }
            ScoreErrorField::BoundedBump { height, width } => ensure(
                height >= 0.0 && height.is_finite() && width > 0.0 && width.is_finite(),
                || format!("bump needs height >= 0 and width > 0, got ({height}, {width})"),
            ),
        }
    }

    /// Writes `e(x)` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            ScoreErrorField::None => out.fill(0.0),
            ScoreErrorField::Linear { ell_bar } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = ell_bar * xi;
                }
            }
            ScoreErrorField::SkewRotation2D { omega } => {
                out[0] = -omega * x[1];
                out[1] = omega * x[0];
            }
            ScoreErrorField::BoundedBump { height, width } => {
                let n2: f64 = x.iter().map(|v| v * v).sum();
                let k = height / width * (-n2 / (2.0 * width * width)).exp();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = k * xi;
                }
            }
        }
    }

    /// Upper bound on `<e(x)-e(y), x-y> / |x-y|^2` over all pairs.
    pub fn slope_bound(&self) -> f64 {
        match *self {
            ScoreErrorField::None | ScoreErrorField::SkewRotation2D { .. } => 0.0,
            ScoreErrorField::Linear { ell_bar } => ell_bar,
            ScoreErrorField::BoundedBump { height, width } => height / width,
        }
    }

    /// Global Lipschitz constant of the field.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            ScoreErrorField::None => 0.0,
            ScoreErrorField::Linear { ell_bar } => ell_bar.abs(),
            ScoreErrorField::SkewRotation2D { omega } => omega.abs(),
            ScoreErrorField::BoundedBump { height, width } => height / width,
        }
    }
}
