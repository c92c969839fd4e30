//! One-dimensional `W_2` by quantile matching.

use serde::{Deserialize, Serialize};

use super::rng::{stream, uniform, BOOTSTRAP};
use super::target::{normal_cdf, normal_pdf, Marginal, TargetModel};
use crate::error::{ensure, Result};
use crate::schedule::ScheduleSpec;

/// Bootstrap resamples behind every reported standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Quantile levels used to measure the initialization mismatch.
pub const INIT_QUANTILE_POINTS: usize = 1_000_000;

/// Law of the sampler's starting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLaw {
    /// Exact `p_T` for Gaussian targets, `N(0, I)` otherwise.
    #[default]
    Auto,
    ExactTerminal,
    StandardNormal,
}

impl InitLaw {
    pub fn resolve(self, target: &TargetModel) -> InitLaw {
        match (self, target) {
            (InitLaw::Auto, TargetModel::Mixture1D { .. }) => InitLaw::StandardNormal,
            (InitLaw::Auto, _) => InitLaw::ExactTerminal,
            (law, _) => law,
        }
    }
}

/// Empirical `W_2` between equal-size samples; both slices are sorted in place.
pub fn quantile_w2(a: &mut [f64], b: &mut [f64]) -> Result<f64> {
    ensure(a.len() == b.len() && !a.is_empty(), || {
        format!(
            "quantile W2 needs equal nonempty samples, got {} and {}",
            a.len(),
            b.len()
        )
    })?;
    ensure(a.iter().chain(b.iter()).all(|v| v.is_finite()), || {
        "samples must be finite".into()
    })?;
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    Ok(sorted_w2(a, b))
}

fn sorted_w2(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Bootstrap standard error of the quantile `W_2` of two sorted samples.
pub fn bootstrap_stderr(sorted_a: &[f64], sorted_b: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = sorted_a.len();
    let mut counts = vec![0u32; n];
    let mut ra = Vec::with_capacity(n);
    let mut rb = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(resamples);
    for b in 0..resamples {
        let mut rng = stream(seed, BOOTSTRAP, b as u64);
        for (src, dst) in [(sorted_a, &mut ra), (sorted_b, &mut rb)] {
            counts.fill(0);
            for _ in 0..n {
                counts[((uniform(&mut rng) * n as f64) as usize).min(n - 1)] += 1;
            }
            // expanding counts over a sorted source yields a sorted resample
            dst.clear();
            for (x, &c) in src.iter().zip(&counts) {
                dst.extend(std::iter::repeat_n(*x, c as usize));
            }
        }
        values.push(sorted_w2(&ra, &rb));
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}

/// Inverse of a continuous CDF by safeguarded Newton inside `[lo, hi]`.
fn invert_cdf(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, u: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = cdf(x) - u;
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let newton = x - r / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// `W_2` between two 1D laws from midpoint quantile levels.
pub fn quantile_w2_laws(
    cdf_a: impl Fn(f64) -> f64,
    pdf_a: impl Fn(f64) -> f64,
    cdf_b: impl Fn(f64) -> f64,
    pdf_b: impl Fn(f64) -> f64,
    bracket: f64,
    n: usize,
) -> f64 {
    let mut ss = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let qa = invert_cdf(&cdf_a, &pdf_a, u, -bracket, bracket);
        let qb = invert_cdf(&cdf_b, &pdf_b, u, -bracket, bracket);
        ss += (qa - qb) * (qa - qb);
    }
    (ss / n as f64).sqrt()
}

/// `W_2(init law, p_T)` for a 1D target.
pub fn init_w2(target: &TargetModel, schedule: &ScheduleSpec, law: InitLaw) -> Result<f64> {
    ensure(target.dim() == 1, || {
        "initial W2 is computed for 1D targets only".into()
    })?;
    let mg = Marginal::at(schedule, schedule.horizon())?;
    match law.resolve(target) {
        InitLaw::ExactTerminal => Ok(0.0),
        InitLaw::StandardNormal => match target {
            TargetModel::Mixture1D { m, .. } => {
                let v = target.component_variance(mg);
                let bracket = 40.0 * (1.0 + v.sqrt() + mg.a * m);
                Ok(quantile_w2_laws(
                    |x| target.cdf_1d(mg, x),
                    |x| target.pdf_1d(mg, x),
                    normal_cdf,
                    normal_pdf,
                    bracket,
                    INIT_QUANTILE_POINTS,
                ))
            }
            _ => Ok((target.component_variance(mg).sqrt() - 1.0).abs()),
        },
        InitLaw::Auto => unreachable!("resolved above"),
    }
}
