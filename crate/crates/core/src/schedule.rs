//! Forward noise schedules and the deterministic smoothing coefficients.
//!
//! The forward process is `dX = -f(s) X ds + g(s) dB`. Its marginal at noise
//! level `s` is the data law scaled by `a(s)` and convolved with
//! `N(0, sigma2(s) I)`, where
//!
//! ```text
//! a(s)      = exp(-int_0^s f)
//! sigma2(s) = int_0^s (a(s)/a(u))^2 g(u)^2 du
//! ```
//!
//! Schedules are restricted to piecewise-continuous representations: the two
//! parametric families below plus piecewise-linear tabulations of `(f, g)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::extremum::{window_extremum, Extremum};
use crate::quadrature::{integrate_breaks, QuadratureConfig};

/// One knot of a tabulated schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSample {
    pub s: f64,
    pub f: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// Variance preserving: `f = beta/2`, `g = sqrt(beta)`.
    Vp { beta: f64 },
    /// Constant Ornstein-Uhlenbeck coefficients.
    ConstantOu { f0: f64, g0: f64 },
    /// Piecewise-linear interpolation of `(f, g)` between knots.
    Tabulated { samples: Vec<ScheduleSample> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ScheduleRepr {
    Vp { beta: f64, horizon: f64 },
    ConstantOu { f0: f64, g0: f64, horizon: f64 },
    Tabulated { samples: Vec<ScheduleSample>, horizon: f64 },
}

/// A validated forward schedule on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    horizon: f64,
    /// Knot abscissae (tabulated only).
    knots: Vec<f64>,
    /// `int_0^{s_i} f` at each knot (tabulated only).
    cum_f: Vec<f64>,
}

impl TryFrom<ScheduleRepr> for ScheduleSpec {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        let (kind, horizon) = match r {
            ScheduleRepr::Vp { beta, horizon } => (ScheduleKind::Vp { beta }, horizon),
            ScheduleRepr::ConstantOu { f0, g0, horizon } => (ScheduleKind::ConstantOu { f0, g0 }, horizon),
            ScheduleRepr::Tabulated { samples, horizon } => (ScheduleKind::Tabulated { samples }, horizon),
        };
        ScheduleSpec::new(kind, horizon)
    }
}

impl From<ScheduleSpec> for ScheduleRepr {
    fn from(s: ScheduleSpec) -> Self {
        let horizon = s.horizon;
        match s.kind {
            ScheduleKind::Vp { beta } => ScheduleRepr::Vp { beta, horizon },
            ScheduleKind::ConstantOu { f0, g0 } => ScheduleRepr::ConstantOu { f0, g0, horizon },
            ScheduleKind::Tabulated { samples } => ScheduleRepr::Tabulated { samples, horizon },
        }
    }
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, horizon: f64) -> Result<Self> {
        ensure(horizon > 0.0 && horizon.is_finite(), || {
            format!("horizon must be positive and finite, got {horizon}")
        })?;
        let (knots, cum_f) = match &kind {
            ScheduleKind::Vp { beta } => {
                ensure(*beta > 0.0 && beta.is_finite(), || {
                    format!("VP beta must be positive, got {beta}")
                })?;
                (Vec::new(), Vec::new())
            }
            ScheduleKind::ConstantOu { f0, g0 } => {
                ensure(*f0 >= 0.0 && f0.is_finite(), || format!("f0 must be >= 0, got {f0}"))?;
                ensure(*g0 > 0.0 && g0.is_finite(), || format!("g0 must be > 0, got {g0}"))?;
                (Vec::new(), Vec::new())
            }
            ScheduleKind::Tabulated { samples } => {
                ensure(samples.len() >= 2, || {
                    "tabulated schedule needs at least two knots".into()
                })?;
                ensure(samples[0].s == 0.0, || {
                    format!("first knot must sit at s = 0, got {}", samples[0].s)
                })?;
                ensure(samples.last().is_some_and(|k| k.s >= horizon), || {
                    format!("tabulation must cover the horizon {horizon}")
                })?;
                for w in samples.windows(2) {
                    ensure(w[1].s > w[0].s, || {
                        format!("knots must be strictly increasing ({} then {})", w[0].s, w[1].s)
                    })?;
                }
                for (i, k) in samples.iter().enumerate() {
                    ensure(k.f >= 0.0 && k.f.is_finite(), || {
                        format!("f must be finite and >= 0 at knot {i}")
                    })?;
                    let g_ok = if i == 0 { k.g >= 0.0 } else { k.g > 0.0 };
                    ensure(g_ok && k.g.is_finite(), || {
                        format!("g must be positive on (0, T] (knot {i} has g = {})", k.g)
                    })?;
                }
                let knots: Vec<f64> = samples.iter().map(|k| k.s).collect();
                let mut cum = Vec::with_capacity(samples.len());
                cum.push(0.0);
                for w in samples.windows(2) {
                    let prev = *cum.last().unwrap();
                    cum.push(prev + 0.5 * (w[0].f + w[1].f) * (w[1].s - w[0].s));
                }
                (knots, cum)
            }
        };
        Ok(Self {
            kind,
            horizon,
            knots,
            cum_f,
        })
    }

    pub fn vp(beta: f64, horizon: f64) -> Result<Self> {
        Self::new(ScheduleKind::Vp { beta }, horizon)
    }

    pub fn constant_ou(f0: f64, g0: f64, horizon: f64) -> Result<Self> {
        Self::new(ScheduleKind::ConstantOu { f0, g0 }, horizon)
    }

    pub fn tabulated(samples: Vec<ScheduleSample>, horizon: f64) -> Result<Self> {
        Self::new(ScheduleKind::Tabulated { samples }, horizon)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// VP rate, if this is a VP schedule.
    pub fn vp_beta(&self) -> Option<f64> {
        match self.kind {
            ScheduleKind::Vp { beta } => Some(beta),
            _ => None,
        }
    }

    /// Interior knots where `f` or `g` may have kinks.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn segment(&self, s: f64) -> usize {
        // index i with knots[i] <= s < knots[i+1], clamped
        match self.knots.partition_point(|&k| k <= s) {
            0 => 0,
            i => (i - 1).min(self.knots.len() - 2),
        }
    }

    fn interp(&self, s: f64, pick: impl Fn(&ScheduleSample) -> f64) -> f64 {
        let ScheduleKind::Tabulated { samples } = &self.kind else {
            unreachable!("interp on parametric schedule")
        };
        let i = self.segment(s);
        let (k0, k1) = (&samples[i], &samples[i + 1]);
        let w = ((s - k0.s) / (k1.s - k0.s)).clamp(0.0, 1.0);
        pick(k0) + w * (pick(k1) - pick(k0))
    }

    pub fn f(&self, s: f64) -> f64 {
        match self.kind {
            ScheduleKind::Vp { beta } => 0.5 * beta,
            ScheduleKind::ConstantOu { f0, .. } => f0,
            ScheduleKind::Tabulated { .. } => self.interp(s, |k| k.f),
        }
    }

    pub fn g(&self, s: f64) -> f64 {
        match self.kind {
            ScheduleKind::Vp { beta } => beta.sqrt(),
            ScheduleKind::ConstantOu { g0, .. } => g0,
            ScheduleKind::Tabulated { .. } => self.interp(s, |k| k.g),
        }
    }

    pub fn g2(&self, s: f64) -> f64 {
        match self.kind {
            ScheduleKind::Vp { beta } => beta,
            _ => {
                let g = self.g(s);
                g * g
            }
        }
    }

    /// `int_0^s f`, exact for every representation.
    pub fn integral_f(&self, s: f64) -> f64 {
        match self.kind {
            ScheduleKind::Vp { beta } => 0.5 * beta * s,
            ScheduleKind::ConstantOu { f0, .. } => f0 * s,
            ScheduleKind::Tabulated { .. } => {
                let i = self.segment(s);
                let s0 = self.knots[i];
                let f0 = self.f(s0);
                let fs = self.f(s);
                self.cum_f[i] + 0.5 * (f0 + fs) * (s - s0)
            }
        }
    }

    fn check_time(&self, s: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&s) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                s,
                lo: 0.0,
                hi: self.horizon,
            })
        }
    }

    /// `a(s) = exp(-int_0^s f)`.
    pub fn coeff_a(&self, s: f64, _q: &QuadratureConfig) -> Result<f64> {
        self.check_time(s)?;
        Ok(match self.kind {
            ScheduleKind::Vp { beta } => (-0.5 * beta * s).exp(),
            _ => (-self.integral_f(s)).exp(),
        })
    }

    /// `sigma^2(s)`; closed form for VP and constant OU, quadrature otherwise.
    pub fn coeff_sigma2(&self, s: f64, q: &QuadratureConfig) -> Result<f64> {
        self.check_time(s)?;
        match self.kind {
            ScheduleKind::Vp { beta } => Ok(-(-beta * s).exp_m1()),
            ScheduleKind::ConstantOu { f0, g0 } => Ok(if f0 == 0.0 {
                g0 * g0 * s
            } else {
                g0 * g0 * -(-2.0 * f0 * s).exp_m1() / (2.0 * f0)
            }),
            ScheduleKind::Tabulated { .. } => self.sigma2_by_quadrature(s, q),
        }
    }

    /// Generic quadrature route for `a(s)`, ignoring any closed form.
    pub fn coeff_a_quadrature(&self, s: f64, q: &QuadratureConfig) -> Result<f64> {
        self.check_time(s)?;
        let int_f = integrate_breaks(|u| self.f(u), 0.0, s, &self.knots, q)?;
        Ok((-int_f).exp())
    }

    /// Generic quadrature route for `sigma^2(s)`, ignoring any closed form.
    pub fn coeff_sigma2_quadrature(&self, s: f64, q: &QuadratureConfig) -> Result<f64> {
        self.check_time(s)?;
        self.sigma2_by_quadrature(s, q)
    }

    fn sigma2_by_quadrature(&self, s: f64, q: &QuadratureConfig) -> Result<f64> {
        let fs = self.integral_f(s);
        integrate_breaks(
            |u| (-2.0 * (fs - self.integral_f(u))).exp() * self.g2(u),
            0.0,
            s,
            &self.knots,
            q,
        )
    }

    fn window_check(&self, s0: f64) -> Result<()> {
        if s0 > self.horizon {
            return Err(Error::EmptyWindow {
                s0,
                horizon: self.horizon,
            });
        }
        ensure(s0 > 0.0, || format!("window start must be > 0, got {s0}"))
    }

    /// `inf_{u in [s0, T]} g(u)`.
    pub fn g_window_inf(&self, s0: f64) -> Result<f64> {
        self.window_check(s0)?;
        Ok(window_extremum(|u| Ok(self.g(u)), s0, self.horizon, Extremum::Min)?.value)
    }

    /// `sup_{u in [s0, T]} f(u)`.
    pub fn f_window_sup(&self, s0: f64) -> Result<f64> {
        self.window_check(s0)?;
        Ok(window_extremum(|u| Ok(self.f(u)), s0, self.horizon, Extremum::Max)?.value)
    }

    /// `sup_{u in [s0, T]} g(u)^2`.
    pub fn g2_window_sup(&self, s0: f64) -> Result<f64> {
        self.window_check(s0)?;
        Ok(window_extremum(|u| Ok(self.g2(u)), s0, self.horizon, Extremum::Max)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn vp_coefficients() {
        let vp = ScheduleSpec::vp(2.0, 3.0).unwrap();
        assert_eq!(vp.coeff_a(0.0, &q()).unwrap(), 1.0);
        assert!((vp.coeff_a(1.0, &q()).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let vp1 = ScheduleSpec::vp(1.0, 3.0).unwrap();
        let s2 = vp1.coeff_sigma2(std::f64::consts::LN_2, &q()).unwrap();
        assert!((s2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigma2_vanishes_at_zero() {
        for spec in [
            ScheduleSpec::vp(1.3, 2.0).unwrap(),
            ScheduleSpec::constant_ou(0.4, 1.1, 2.0).unwrap(),
            tab_linear_g(),
        ] {
            assert_eq!(spec.coeff_sigma2(0.0, &q()).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_ou_driftless() {
        let ou = ScheduleSpec::constant_ou(0.0, 1.0, 6.0).unwrap();
        assert_eq!(ou.coeff_a(5.0, &q()).unwrap(), 1.0);
        // quadrature oracle of int_0^3 1 du
        let oracle = ou.coeff_sigma2_quadrature(3.0, &q()).unwrap();
        assert!((oracle - 3.0).abs() < 1e-12);
        assert!((ou.coeff_sigma2(3.0, &q()).unwrap() - 3.0).abs() < 1e-15);
    }

    fn tab_linear_g() -> ScheduleSpec {
        // g = 1 + u on [0, 1], f = 0.3
        let samples = (0..=10)
            .map(|i| {
                let s = i as f64 / 10.0;
                ScheduleSample { s, f: 0.3, g: 1.0 + s }
            })
            .collect();
        ScheduleSpec::tabulated(samples, 1.0).unwrap()
    }

    #[test]
    fn window_extrema() {
        let vp = ScheduleSpec::vp(4.0, 2.0).unwrap();
        for s0 in [0.1, 0.7, 2.0] {
            assert_eq!(vp.g_window_inf(s0).unwrap(), 2.0);
        }
        let tab = tab_linear_g();
        // dense grid scan oracle
        let oracle = (0..=100_000)
            .map(|i| 0.5 + 0.5 * i as f64 / 100_000.0)
            .map(|u| tab.g(u))
            .fold(f64::INFINITY, f64::min);
        assert!((tab.g_window_inf(0.5).unwrap() - oracle).abs() < 1e-12);
        assert!((tab.g_window_inf(0.5).unwrap() - 1.5).abs() < 1e-12);
        let ou = ScheduleSpec::constant_ou(0.5, 1.0, 1.0).unwrap();
        assert_eq!(ou.f_window_sup(0.2).unwrap(), 0.5);
        assert!((tab.g2_window_sup(0.5).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_window_errors() {
        let vp = ScheduleSpec::vp(1.0, 2.0).unwrap();
        assert!(matches!(vp.g_window_inf(2.5), Err(Error::EmptyWindow { .. })));
        assert!(vp.coeff_a(2.5, &q()).is_err());
    }

    #[test]
    fn tabulated_matches_constant_ou() {
        let samples = vec![
            ScheduleSample { s: 0.0, f: 0.7, g: 1.3 },
            ScheduleSample { s: 0.4, f: 0.7, g: 1.3 },
            ScheduleSample { s: 2.0, f: 0.7, g: 1.3 },
        ];
        let tab = ScheduleSpec::tabulated(samples, 2.0).unwrap();
        let ou = ScheduleSpec::constant_ou(0.7, 1.3, 2.0).unwrap();
        for s in [0.05, 0.4, 1.1, 2.0] {
            let d_a = tab.coeff_a(s, &q()).unwrap() - ou.coeff_a(s, &q()).unwrap();
            let d_s = tab.coeff_sigma2(s, &q()).unwrap() - ou.coeff_sigma2(s, &q()).unwrap();
            assert!(d_a.abs() < 1e-14, "a mismatch at {s}");
            assert!(d_s.abs() < 1e-10, "sigma2 mismatch at {s}");
        }
    }

    #[test]
    fn rejects_invalid_tabulations() {
        let bad = vec![
            ScheduleSample { s: 0.0, f: 0.0, g: 1.0 },
            ScheduleSample { s: 0.5, f: 0.0, g: 0.0 },
            ScheduleSample { s: 1.0, f: 0.0, g: 1.0 },
        ];
        assert!(ScheduleSpec::tabulated(bad, 1.0).is_err());
        let short = vec![
            ScheduleSample { s: 0.0, f: 0.0, g: 1.0 },
            ScheduleSample { s: 0.5, f: 0.0, g: 1.0 },
        ];
        assert!(ScheduleSpec::tabulated(short, 1.0).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let spec: ScheduleSpec = serde_json::from_str(r#"{"kind":"vp","beta":1.5,"horizon":4.0}"#).unwrap();
        assert_eq!(spec.vp_beta(), Some(1.5));
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ScheduleSpec>(&back).unwrap(), spec);
        let bad = serde_json::from_str::<ScheduleSpec>(r#"{"kind":"vp","beta":-1,"horizon":4.0}"#);
        assert!(bad.is_err());
    }
}
