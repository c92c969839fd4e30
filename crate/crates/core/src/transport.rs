//! Exact transport costs on small discrete measures, the switch-time moment
//! conversion from `W_phi` to `W_2`, the moment-budget recursion and the
//! affine-tail sharpness family.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::field::ScoreErrorField;
use crate::switchgeom::SwitchGeometry;

/// Largest support size handled by permutation enumeration.
pub const MAX_PERMUTATION_SUPPORT: usize = 7;
const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        ensure(!points.is_empty(), || "measure needs at least one atom".into())?;
        ensure(points.len() == weights.len(), || {
            format!("{} points but {} weights", points.len(), weights.len())
        })?;
        let d = points[0].len();
        ensure((1..=3).contains(&d), || format!("dimension must be 1..=3, got {d}"))?;
        ensure(
            points.iter().all(|p| p.len() == d && p.iter().all(|v| v.is_finite())),
            || "points must share one dimension and be finite".into(),
        )?;
        ensure(weights.iter().all(|&w| w > 0.0 && w.is_finite()), || {
            "weights must be positive".into()
        })?;
        let total: f64 = weights.iter().sum();
        ensure((total - 1.0).abs() <= WEIGHT_TOL, || {
            format!("weights sum to {total}, expected 1")
        })?;
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn equal_weights(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - w0).abs() <= WEIGHT_TOL)
    }

    /// `sum_i w_i |x_i|^p`.
    pub fn moment(&self, p: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * norm(x).powf(p))
            .sum()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Ground cost between atoms.
#[derive(Debug, Clone, Copy)]
pub enum Cost<'a> {
    SquaredEuclidean,
    Euclidean,
    Phi(&'a SwitchGeometry),
}

impl Cost<'_> {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = dist(x, y);
        match self {
            Cost::SquaredEuclidean => r * r,
            Cost::Euclidean => r,
            Cost::Phi(sw) => sw.phi_value(r),
        }
    }

    fn is_convex(&self) -> bool {
        !matches!(self, Cost::Phi(_))
    }
}

/// Exact optimal transport cost `inf_pi E_pi[cost(X, Y)]`.
///
/// Supported: either side a single atom (the coupling is unique), equal-weight
/// supports of equal size up to seven atoms (permutation enumeration), and
/// one-dimensional measures with arbitrary weights under a convex cost
/// (monotone quantile coupling). For squared Euclidean cost this is `W_2^2`.
pub fn w_cost_discrete(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: Cost<'_>) -> Result<f64> {
    ensure(mu.dim() == nu.dim(), || {
        format!("dimension mismatch: {} vs {}", mu.dim(), nu.dim())
    })?;
    if nu.len() == 1 {
        return Ok(dirac_cost(mu, &nu.points[0], cost));
    }
    if mu.len() == 1 {
        return Ok(dirac_cost(nu, &mu.points[0], cost));
    }
    if mu.len() == nu.len() && mu.len() <= MAX_PERMUTATION_SUPPORT && mu.equal_weights() && nu.equal_weights() {
        return Ok(permutation_cost(mu, nu, cost));
    }
    if mu.dim() == 1 && cost.is_convex() {
        return Ok(quantile_cost(mu, nu, cost));
    }
    Err(Error::UnsupportedTransport(format!(
        "supports of size {} and {} in d = {}; supported regimes are a single-atom side, \
         equal-weight equal-size supports with n <= {MAX_PERMUTATION_SUPPORT}, \
         or d = 1 with a convex cost",
        mu.len(),
        nu.len(),
        mu.dim()
    )))
}

fn dirac_cost(mu: &DiscreteMeasure, y: &[f64], cost: Cost<'_>) -> f64 {
    mu.points
        .iter()
        .zip(&mu.weights)
        .map(|(x, w)| w * cost.eval(x, y))
        .sum()
}

fn permutation_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: Cost<'_>) -> f64 {
    let n = mu.len();
    let c: Vec<Vec<f64>> = mu
        .points
        .iter()
        .map(|x| nu.points.iter().map(|y| cost.eval(x, y)).collect())
        .collect();
    // Terms are summed in sorted order so that swapping the measures, which
    // transposes the cost matrix, gives a bit-identical result.
    let mut terms = [0.0f64; MAX_PERMUTATION_SUPPORT];
    let mut total = |perm: &[usize]| {
        for (i, &j) in perm.iter().enumerate() {
            terms[i] = c[i][j];
        }
        let t = &mut terms[..perm.len()];
        t.sort_by(f64::total_cmp);
        t.iter().sum::<f64>()
    };

    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = total(&perm);
    let mut stack = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            best = best.min(total(&perm));
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

fn quantile_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: Cost<'_>) -> f64 {
    let sorted = |m: &DiscreteMeasure| {
        let mut v: Vec<(f64, f64)> = m.points.iter().map(|p| p[0]).zip(m.weights.iter().copied()).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (a, b) = (sorted(mu), sorted(nu));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        acc += m * cost.eval(&[a[i].0], &[b[j].0]);
        ra -= m;
        rb -= m;
        if ra <= WEIGHT_TOL && i + 1 < a.len() {
            i += 1;
            ra = a[i].1;
        } else if ra <= WEIGHT_TOL {
            i += 1;
        }
        if rb <= WEIGHT_TOL && j + 1 < b.len() {
            j += 1;
            rb = b[j].1;
        } else if rb <= WEIGHT_TOL {
            j += 1;
        }
    }
    acc
}

/// Moment order `p` and a budget `m_bar` for `E|Z|^p + E|X|^p`, the sum of
/// both laws' `p`-th moments at the switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentBudget {
    pub p: f64,
    pub m_bar: f64,
}

impl MomentBudget {
    pub fn new(p: f64, m_bar: f64) -> Result<Self> {
        let b = Self { p, m_bar };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        theta_p(self.p)?;
        ensure(self.m_bar > 0.0 && self.m_bar.is_finite(), || {
            format!("moment budget must be positive, got {}", self.m_bar)
        })
    }
}

/// `theta_p = (p - 2) / (2 (p - 1))`.
pub fn theta_p(p: f64) -> Result<f64> {
    ensure(p > 2.0 && p.is_finite(), || format!("p must exceed 2, got {p}"))?;
    Ok((p - 2.0) / (2.0 * (p - 1.0)))
}

/// `C_p = sqrt(2(p-1)) (p-2)^{-theta} a^{-theta} M_bar^{1/(2(p-1))}`.
///
/// The slope enters through its logarithm, so the result is `+inf` only when
/// `C_p` itself exceeds the double range.
pub fn conversion_constant(sw: &SwitchGeometry, budget: &MomentBudget) -> Result<f64> {
    budget.validate()?;
    ensure(sw.log_a_slope <= 0.0 && !sw.log_a_slope.is_nan(), || {
        format!("log tail slope must be <= 0, got {}", sw.log_a_slope)
    })?;
    let p = budget.p;
    let th = theta_p(p)?;
    let log_c = 0.5 * (2.0 * (p - 1.0)).ln() - th * (p - 2.0).ln() - th * sw.log_a_slope
        + budget.m_bar.ln() / (2.0 * (p - 1.0));
    Ok(log_c.exp())
}

/// `C_p * delta_phi^theta_p`.
pub fn convert_to_w2(sw: &SwitchGeometry, budget: &MomentBudget, delta_phi: f64) -> Result<f64> {
    ensure(delta_phi >= 0.0, || {
        format!("W_phi budget must be >= 0, got {delta_phi}")
    })?;
    if delta_phi == 0.0 {
        return Ok(0.0);
    }
    Ok(conversion_constant(sw, budget)? * delta_phi.powf(theta_p(budget.p)?))
}

/// Right-hand side `(rho / a) W_phi + 2^{p-1} M_bar / rho^{p-2}` of the
/// interpolation inequality for `W_2^2`.
pub fn interpolation_bound(a_slope: f64, budget: &MomentBudget, w_phi: f64, rho: f64) -> f64 {
    let p = budget.p;
    rho / a_slope * w_phi + 2f64.powf(p - 1.0) * budget.m_bar / rho.powf(p - 2.0)
}

/// Iterates `m_{k+1} = (1 + A_k) m_k + B_k`.
pub fn moment_recursion(m0: f64, steps: &[(f64, f64)]) -> Result<f64> {
    ensure(m0 >= 0.0, || format!("initial moment must be >= 0, got {m0}"))?;
    steps.iter().try_fold(m0, |m, &(a, b)| {
        ensure(a >= 0.0 && b >= 0.0, || {
            format!("recursion step needs A, B >= 0, got ({a}, {b})")
        })?;
        Ok((1.0 + a) * m + b)
    })
}

/// Exact costs of `mu_R = (1 - R^-p) delta_0 + R^-p delta_{R e_1}` against `delta_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessPoint {
    pub r: f64,
    pub w2: f64,
    pub wphi: f64,
    pub mp: f64,
}

pub fn sharpness_pair(r: f64, p: f64, sw: &SwitchGeometry) -> Result<SharpnessPoint> {
    ensure(r >= 1.0 && r.is_finite(), || format!("R must be >= 1, got {r}"))?;
    theta_p(p)?;
    let mass = r.powf(-p);
    Ok(SharpnessPoint {
        r,
        w2: (mass * r * r).sqrt(),
        wphi: mass * sw.phi_value(r),
        mp: mass * r.powf(p),
    })
}

/// `max <e(x)-e(y), x-y> / |x-y|^2` over the sampled pairs; coincident pairs
/// are skipped. `None` when no usable pair remains.
pub fn onesided_slope_check(field: &ScoreErrorField, pairs: &[(Vec<f64>, Vec<f64>)]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (x, y) in pairs {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 == 0.0 {
            continue;
        }
        let mut ex = vec![0.0; x.len()];
        let mut ey = vec![0.0; y.len()];
        field.eval(x, &mut ex);
        field.eval(y, &mut ey);
        let inner: f64 = (0..x.len()).map(|i| (ex[i] - ey[i]) * (x[i] - y[i])).sum();
        let q = inner / d2;
        worst = Some(worst.map_or(q, |w| w.max(q)));
    }
    worst
}
