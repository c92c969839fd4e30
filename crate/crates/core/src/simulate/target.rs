//! Closed-form targets: scores and samplers for every noised marginal.

use serde::{Deserialize, Serialize};

use super::rng::{normal, uniform, Stream};
use crate::error::{ensure, Result};
use crate::field::ScoreErrorField;
use crate::profile::{f_m_over_r, WeakLogParams};
use crate::quadrature::QuadratureConfig;
use crate::schedule::ScheduleSpec;

/// Targets with closed-form noised marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetModel {
    /// `N(0, 1/alpha0)`.
    #[serde(rename = "gaussian_1d")]
    Gaussian1D { alpha0: f64 },
    /// `N(-m, s2)/2 + N(m, s2)/2`.
    #[serde(rename = "mixture_1d")]
    Mixture1D { m: f64, s2: f64 },
    /// Isotropic planar Gaussian `N(0, I/base)`, the carrier for rotational error fields.
    #[serde(rename = "rotation_2d_wrap")]
    Rotation2DWrap { base: f64 },
}

/// Forward coefficients `(a(s), sigma^2(s))` of one marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub a: f64,
    pub sigma2: f64,
}

impl Marginal {
    pub const DATA: Marginal = Marginal { a: 1.0, sigma2: 0.0 };

    pub fn at(schedule: &ScheduleSpec, s: f64) -> Result<Self> {
        let q = QuadratureConfig::default();
        Ok(Self {
            a: schedule.coeff_a(s, &q)?,
            sigma2: schedule.coeff_sigma2(s, &q)?,
        })
    }
}

impl TargetModel {
    pub fn dim(&self) -> usize {
        match self {
            TargetModel::Rotation2DWrap { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TargetModel::Gaussian1D { alpha0 } => alpha0 > 0.0 && alpha0.is_finite(),
            TargetModel::Mixture1D { m, s2 } => m > 0.0 && m.is_finite() && s2 > 0.0 && s2.is_finite(),
            TargetModel::Rotation2DWrap { base } => base > 0.0 && base.is_finite(),
        };
        ensure(ok, || {
            format!("target parameters must be positive and finite: {self:?}")
        })
    }

    /// Certified `(alpha, M)`. For the mixture, the log-cosh part has gradient
    /// increments at most `min(m^2 r / s2^2, 2m / s2)`, which `f_M(r)` with
    /// `M = 4 m^2 / s2^2` dominates.
    pub fn weak_params(&self) -> Result<WeakLogParams> {
        self.validate()?;
        match *self {
            TargetModel::Gaussian1D { alpha0 } => WeakLogParams::new(alpha0, 0.0),
            TargetModel::Mixture1D { m, s2 } => WeakLogParams::new(1.0 / s2, 4.0 * m * m / (s2 * s2)),
            TargetModel::Rotation2DWrap { base } => WeakLogParams::new(base, 0.0),
        }
    }

    /// Variance of each Gaussian component of the marginal.
    pub fn component_variance(&self, mg: Marginal) -> f64 {
        let a2 = mg.a * mg.a;
        match *self {
            TargetModel::Gaussian1D { alpha0 } => a2 / alpha0 + mg.sigma2,
            TargetModel::Mixture1D { s2, .. } => a2 * s2 + mg.sigma2,
            TargetModel::Rotation2DWrap { base } => a2 / base + mg.sigma2,
        }
    }

    /// `grad log p_s(x)` written into `out`.
    pub fn score(&self, mg: Marginal, x: &[f64], out: &mut [f64]) {
        let v = self.component_variance(mg);
        match *self {
            TargetModel::Mixture1D { m, .. } => {
                let mu = mg.a * m;
                out[0] = (-x[0] + mu * (mu * x[0] / v).tanh()) / v;
            }
            _ => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -xi / v;
                }
            }
        }
    }

    /// One exact draw from the marginal.
    pub fn sample(&self, mg: Marginal, rng: &mut Stream, out: &mut [f64]) {
        let sd = self.component_variance(mg).sqrt();
        match *self {
            TargetModel::Mixture1D { m, .. } => {
                let sign = if uniform(rng) < 0.5 { -1.0 } else { 1.0 };
                out[0] = sign * mg.a * m + sd * normal(rng);
            }
            _ => {
                for o in out.iter_mut().take(self.dim()) {
                    *o = sd * normal(rng);
                }
            }
        }
    }

    /// Marginal CDF, 1D targets only.
    pub fn cdf_1d(&self, mg: Marginal, x: f64) -> f64 {
        let sd = self.component_variance(mg).sqrt();
        match *self {
            TargetModel::Mixture1D { m, .. } => {
                let mu = mg.a * m;
                0.5 * (normal_cdf((x - mu) / sd) + normal_cdf((x + mu) / sd))
            }
            _ => normal_cdf(x / sd),
        }
    }

    /// Marginal density, 1D targets only.
    pub fn pdf_1d(&self, mg: Marginal, x: f64) -> f64 {
        let sd = self.component_variance(mg).sqrt();
        match *self {
            TargetModel::Mixture1D { m, .. } => {
                let mu = mg.a * m;
                0.5 * (normal_pdf((x - mu) / sd) + normal_pdf((x + mu) / sd)) / sd
            }
            _ => normal_pdf(x / sd) / sd,
        }
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `grad log p_s(x)` at forward time `s`.
pub fn exact_score(target: &TargetModel, schedule: &ScheduleSpec, s: f64, x: &[f64]) -> Result<Vec<f64>> {
    ensure(x.len() == target.dim(), || {
        format!("point has dimension {}, target {}", x.len(), target.dim())
    })?;
    let mg = Marginal::at(schedule, s)?;
    let mut out = vec![0.0; x.len()];
    target.score(mg, x, &mut out);
    Ok(out)
}

/// Learned reverse drift `f(s) x + g^2(s) (grad log p_s(x) + e(x))` at reverse time `t = T - s`.
pub fn learned_drift(
    target: &TargetModel,
    field: &ScoreErrorField,
    schedule: &ScheduleSpec,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let horizon = schedule.horizon();
    ensure((0.0..horizon).contains(&t), || {
        format!("reverse time {t} outside [0, {horizon})")
    })?;
    let s = horizon - t;
    let mut out = exact_score(target, schedule, s, x)?;
    let mut e = vec![0.0; x.len()];
    field.eval(x, &mut e);
    let (f, g2) = (schedule.f(s), schedule.g2(s));
    for ((o, xi), ei) in out.iter_mut().zip(x).zip(&e) {
        *o = f * xi + g2 * (*o + ei);
    }
    Ok(out)
}

/// Worst gap between the pairwise convexity of `V_0` and its certified envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationScan {
    pub pairs: usize,
    /// `min (kappa_V0(x, y) - alpha + f_M(r)/r)` over the scanned pairs.
    pub worst_margin: f64,
    pub worst_pair: (f64, f64),
}

/// Scans an `n x n` grid on `[-half_width, half_width]^2` for the mixture's
/// weak-convexity certificate.
pub fn mixture_certification_scan(m: f64, s2: f64, half_width: f64, n: usize) -> Result<CertificationScan> {
    let target = TargetModel::Mixture1D { m, s2 };
    let weak = target.weak_params()?;
    ensure(n >= 2 && half_width > 0.0, || {
        "scan needs n >= 2 and a positive width".into()
    })?;
    let grad = |x: f64| x / s2 - m / s2 * (m * x / s2).tanh();
    let pts: Vec<f64> = (0..n)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect();
    let grads: Vec<f64> = pts.iter().map(|&x| grad(x)).collect();
    let mut scan = CertificationScan {
        pairs: 0,
        worst_margin: f64::INFINITY,
        worst_pair: (0.0, 0.0),
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = (pts[i] - pts[j]).abs();
            let kappa = (grads[i] - grads[j]) / (pts[i] - pts[j]);
            let margin = kappa - weak.alpha + f_m_over_r(weak.big_m, r);
            scan.pairs += 1;
            if margin < scan.worst_margin {
                scan.worst_margin = margin;
                scan.worst_pair = (pts[i], pts[j]);
            }
        }
    }
    Ok(scan)
}
