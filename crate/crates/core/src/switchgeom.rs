//! Switch-level constants, the two-zone profile and the concave switch metric.
//!
//! For a switch `s0` the early window `[s0, T]` is summarized by
//! `g_lo = inf g`, `b_hi = sup b`, `g_bar = sup g^2 sqrt(M_u)` and
//! `m_lo = inf m`. These give the envelope radius `R_sw = 4 g_bar / m_lo`,
//! the tail margin `m_sw = m_lo / 2`, the core curvature
//! `lambda = (b_hi^+ + m_sw) / (4 g_lo^2)`, the tail slope
//! `a = exp(-lambda R_sw^2)` and the contraction rate `c = m_sw a`.
//!
//! The metric has a Gaussian core and an affine tail:
//! `phi(r) = int_0^r exp(-lambda u^2) du` for `r <= R_sw`, then slope `a`.

use libm::erf;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::extremum::{window_extremum, Extremum};
use crate::profile::RadialGeometry;

const TAYLOR_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchGeometry {
    pub s0: f64,
    pub t_s: f64,
    pub g_lo: f64,
    pub b_hi: f64,
    pub g_bar: f64,
    pub m_lo: f64,
    pub r_sw: f64,
    pub m_sw: f64,
    pub lambda: f64,
    /// `-lambda R_sw^2`; kept because the slope itself may underflow.
    pub log_a_slope: f64,
    pub a_slope: f64,
    pub c_rate: f64,
}

/// Metric value with first and one-sided second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEval {
    pub phi: f64,
    pub dphi: f64,
    pub d2phi_left: f64,
    pub d2phi_right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl SwitchGeometry {
    /// Derives every switch constant from the four window aggregates.
    pub fn from_aggregates(s0: f64, t_s: f64, g_lo: f64, b_hi: f64, g_bar: f64, m_lo: f64) -> Result<Self> {
        if !(m_lo > 0.0) {
            return Err(Error::Inadmissible { s0, margin: m_lo });
        }
        if !(g_lo > 0.0) {
            return Err(Error::DegenerateNoise { s0 });
        }
        ensure(b_hi.is_finite() && g_bar.is_finite() && g_bar >= 0.0, || {
            format!("window aggregates must be finite (b_hi = {b_hi}, g_bar = {g_bar})")
        })?;
        let m_sw = 0.5 * m_lo;
        let r_sw = if g_bar == 0.0 { 0.0 } else { 4.0 * g_bar / m_lo };
        let lambda = (b_hi.max(0.0) + m_sw) / (4.0 * g_lo * g_lo);
        let log_a_slope = -lambda * r_sw * r_sw;
        let a_slope = log_a_slope.exp();
        Ok(Self {
            s0,
            t_s,
            g_lo,
            b_hi,
            g_bar,
            m_lo,
            r_sw,
            m_sw,
            lambda,
            log_a_slope,
            a_slope,
            c_rate: m_sw * a_slope,
        })
    }

    /// Two-zone profile: `-b_hi` on `(0, R_sw]`, `m_sw` beyond.
    pub fn profile(&self, r: f64) -> f64 {
        if r <= self.r_sw {
            -self.b_hi
        } else {
            self.m_sw
        }
    }

    fn core_integral(&self, r: f64) -> f64 {
        let l = self.lambda;
        if l == 0.0 {
            return r;
        }
        let x = l * r * r;
        if x < TAYLOR_CUTOFF {
            let r3 = r * r * r;
            r - l * r3 / 3.0 + l * l * r3 * r * r / 10.0
        } else {
            (std::f64::consts::PI / (4.0 * l)).sqrt() * erf(l.sqrt() * r)
        }
    }

    pub fn phi(&self, r: f64) -> PhiEval {
        let r = r.max(0.0);
        if r < self.r_sw {
            let e = (-self.lambda * r * r).exp();
            let d2 = -2.0 * self.lambda * r * e;
            PhiEval {
                phi: self.core_integral(r),
                dphi: e,
                d2phi_left: d2,
                d2phi_right: d2,
            }
        } else if r == self.r_sw {
            PhiEval {
                phi: self.core_integral(r),
                dphi: self.a_slope,
                d2phi_left: -2.0 * self.lambda * r * self.a_slope,
                d2phi_right: 0.0,
            }
        } else {
            PhiEval {
                phi: self.core_integral(self.r_sw) + self.a_slope * (r - self.r_sw),
                dphi: self.a_slope,
                d2phi_left: 0.0,
                d2phi_right: 0.0,
            }
        }
    }

    pub fn phi_value(&self, r: f64) -> f64 {
        self.phi(r).phi
    }

    fn residual_with(&self, r: f64, d2: f64, profile: f64, ev: &PhiEval) -> f64 {
        2.0 * self.g_lo * self.g_lo * d2 - profile * r * ev.dphi + self.c_rate * ev.phi
    }

    /// `2 g_lo^2 phi'' - kappa(r) r phi' + c phi`, which must be `<= 0`.
    pub fn generator_residual(&self, r: f64) -> Result<f64> {
        ensure(r > 0.0, || format!("generator residual needs r > 0, got {r}"))?;
        if r == self.r_sw {
            return Err(Error::AtKink { r_sw: self.r_sw });
        }
        let ev = self.phi(r);
        Ok(self.residual_with(r, ev.d2phi_left, self.profile(r), &ev))
    }

    /// Residual at the kink using the one-sided second derivative and profile.
    pub fn generator_residual_one_sided(&self, r: f64, side: Side) -> Result<f64> {
        ensure(r > 0.0, || format!("generator residual needs r > 0, got {r}"))?;
        let ev = self.phi(r);
        Ok(match side {
            Side::Left => self.residual_with(r, ev.d2phi_left, -self.b_hi, &ev),
            Side::Right => {
                let prof = if r < self.r_sw { -self.b_hi } else { self.m_sw };
                self.residual_with(r, ev.d2phi_right, prof, &ev)
            }
        })
    }
}

/// Window aggregates and switch constants at `s0`.
pub fn build_switch(geom: &RadialGeometry, s0: f64) -> Result<SwitchGeometry> {
    let t = geom.horizon();
    let m_lo = geom.window_margin(s0)?;
    if !(m_lo > 0.0) {
        return Err(Error::Inadmissible { s0, margin: m_lo });
    }
    let g_lo = geom.schedule.g_window_inf(s0)?;
    let b_hi = window_extremum(|u| Ok(geom.margin_load(u)?.load), s0, t, Extremum::Max)?.value;
    let g_bar = window_extremum(
        |u| Ok(geom.schedule.g2(u) * geom.smoothed_params(u)?.m_s.sqrt()),
        s0,
        t,
        Extremum::Max,
    )?
    .value;
    SwitchGeometry::from_aggregates(s0, t - s0, g_lo, b_hi, g_bar, m_lo)
}

/// Margins on a switch grid and the admissible subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSet {
    /// `(s0, window margin)` for every grid point, in input order.
    pub margins: Vec<(f64, f64)>,
    /// The entries with positive margin, in input order.
    pub admissible: Vec<(f64, f64)>,
    /// Bracket `[lo, hi]` around the threshold where the margin turns positive,
    /// present when some grid points are admissible and some are not.
    pub s_min_bracket: Option<(f64, f64)>,
}

impl AdmissibleSet {
    pub fn contains(&self, s0: f64) -> bool {
        self.admissible.iter().any(|&(s, _)| s == s0)
    }
}

pub fn admissible_set(geom: &RadialGeometry, switch_grid: &[f64]) -> Result<AdmissibleSet> {
    let t = geom.horizon();
    for &s in switch_grid {
        ensure(s > 0.0 && s <= t, || format!("switch {s} outside (0, {t}]"))?;
    }
    let margins = switch_grid
        .par_iter()
        .map(|&s| geom.window_margin(s).map(|m| (s, m)))
        .collect::<Result<Vec<_>>>()?;
    let admissible: Vec<(f64, f64)> = margins.iter().copied().filter(|&(_, m)| m > 0.0).collect();

    let first_in = admissible.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let last_out = margins
        .iter()
        .filter(|&&(s, m)| m <= 0.0 && s < first_in)
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let s_min_bracket = if first_in.is_finite() && last_out.is_finite() {
        let (mut lo, mut hi) = (last_out, first_in);
        while hi - lo > 1e-13 * t.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if geom.window_margin(mid)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some((lo, hi))
    } else {
        None
    };

    Ok(AdmissibleSet {
        margins,
        admissible,
        s_min_bracket,
    })
}

/// Log-spaced radii on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Largest generator residual over the given radii. Points at the kink are
/// evaluated one-sided at `R_sw (1 -+ 1e-12)` with both second derivatives.
pub fn max_generator_residual(sw: &SwitchGeometry, radii: &[f64]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for &r in radii {
        let v = if r == sw.r_sw {
            sw.generator_residual(r * (1.0 - 1e-12))?
                .max(sw.generator_residual(r * (1.0 + 1e-12))?)
        } else {
            sw.generator_residual(r)?
        };
        worst = worst.max(v);
    }
    if sw.r_sw > 0.0 {
        worst = worst
            .max(sw.generator_residual_one_sided(sw.r_sw, Side::Left)?)
            .max(sw.generator_residual_one_sided(sw.r_sw, Side::Right)?);
    }
    Ok(worst)
}
