//! Smoothed weak-log-concavity parameters and the radial lower envelope.
//!
//! A target `p_0 ∝ exp(-V_0)` is weakly log-concave with parameters `(alpha, M)`
//! when its radial profile satisfies `kappa_{V_0}(r) >= alpha - f_M(r)/r`.
//! Forward smoothing transports this to `(alpha_s, M_s)` at every noise level,
//! and together with the score-error slope `ell(s)` yields the envelope
//!
//! ```text
//! kappa_s(r) = g^2(s) (alpha_s - f_{M_s}(r)/r - ell(s)) - f(s)
//! ```
//!
//! which rises from `-b(s)` (near-field load) to `m(s)` (far-field margin).

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::extremum::{window_extremum, Extremum};
use crate::quadrature::{integrate_breaks, QuadratureConfig};
use crate::schedule::ScheduleSpec;

/// Bracket floor used for near-field evaluations and zero crossings.
pub const NEAR_FIELD_R: f64 = 1e-12;
const ZERO_CROSS_TOL: f64 = 1e-10;
const SERIES_CUTOFF: f64 = 1e-4;

/// Weak-log-concavity parameters of the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakLogParams {
    pub alpha: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
}

impl WeakLogParams {
    pub fn new(alpha: f64, big_m: f64) -> Result<Self> {
        let p = Self { alpha, big_m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.alpha > 0.0 && self.alpha.is_finite(), || {
            format!("alpha must be positive, got {}", self.alpha)
        })?;
        ensure(self.big_m >= 0.0 && self.big_m.is_finite(), || {
            format!("M must be nonnegative, got {}", self.big_m)
        })
    }
}

/// A scalar function of the noise level: a constant or a piecewise-linear table
/// of `[s, value]` pairs (held constant outside the table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Envelope {
    Constant(f64),
    Tabulated(Vec<[f64; 2]>),
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope::Constant(0.0)
    }
}

impl Envelope {
    pub fn validate(&self, what: &str) -> Result<()> {
        match self {
            Envelope::Constant(v) => ensure(v.is_finite(), || format!("{what} must be finite")),
            Envelope::Tabulated(t) => {
                ensure(!t.is_empty(), || format!("{what} table is empty"))?;
                ensure(t.iter().all(|p| p[0].is_finite() && p[1].is_finite()), || {
                    format!("{what} table has non-finite entries")
                })?;
                ensure(t.windows(2).all(|w| w[1][0] > w[0][0]), || {
                    format!("{what} table abscissae must be strictly increasing")
                })
            }
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        match self {
            Envelope::Constant(v) => *v,
            Envelope::Tabulated(t) => {
                let i = t.partition_point(|p| p[0] <= s);
                if i == 0 {
                    t[0][1]
                } else if i == t.len() {
                    t[i - 1][1]
                } else {
                    let (a, b) = (t[i - 1], t[i]);
                    a[1] + (s - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
                }
            }
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        match self {
            Envelope::Constant(_) => Vec::new(),
            Envelope::Tabulated(t) => t.iter().map(|p| p[0]).collect(),
        }
    }

    /// Minimum over all values the envelope takes.
    pub fn min_value(&self) -> f64 {
        match self {
            Envelope::Constant(v) => *v,
            Envelope::Tabulated(t) => t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
        }
    }

    /// Pointwise comparison `self <= other`, checked at the union of knots
    /// (exact for piecewise-linear envelopes).
    pub fn dominated_by(&self, other: &Envelope) -> bool {
        let mut pts = self.knots();
        pts.extend(other.knots());
        if pts.is_empty() {
            pts.push(0.0);
        }
        pts.iter().all(|&s| self.at(s) <= other.at(s))
    }
}

/// Score-error envelopes: one-sided slope `ell(s)` and L2 forcing `eps(s)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreErrorEnvelope {
    pub ell: Envelope,
    pub eps: Envelope,
}

impl ScoreErrorEnvelope {
    pub fn constant(ell: f64, eps: f64) -> Self {
        Self {
            ell: Envelope::Constant(ell),
            eps: Envelope::Constant(eps),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ell.validate("ell")?;
        self.eps.validate("eps")?;
        ensure(self.eps.min_value() >= 0.0, || "eps must be nonnegative".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedParams {
    pub alpha_s: f64,
    pub m_s: f64,
}

/// Far-field margin `m(s)` and near-field load `b(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginLoad {
    pub margin: f64,
    pub load: f64,
}

/// `f_M(r) = 2 sqrt(M) tanh(sqrt(M) r / 2)`.
pub fn f_m(big_m: f64, r: f64) -> f64 {
    let sm = big_m.sqrt();
    2.0 * sm * (0.5 * sm * r).tanh()
}

/// `f_M(r) / r`, with a series near `r = 0`; equals `M` at `r = 0`.
pub fn f_m_over_r(big_m: f64, r: f64) -> f64 {
    let y = 0.5 * big_m.sqrt() * r;
    if y < SERIES_CUTOFF {
        let y2 = y * y;
        big_m * (1.0 - y2 / 3.0 + 2.0 * y2 * y2 / 15.0)
    } else {
        f_m(big_m, r) / r
    }
}

/// Weak-log-concavity envelope `alpha - f_M(r)/r` of the unsmoothed target.
pub fn weak_envelope(alpha: f64, big_m: f64, r: f64) -> f64 {
    alpha - f_m_over_r(big_m, r)
}

/// Constant `C_0 = (2 sqrt(M) + |grad V_0(0)|)^2 / alpha` of the quadratic tail
/// lower bound `V_0(x) - V_0(0) >= alpha |x|^2 / 4 - C_0`.
pub fn gaussian_tail_constant(alpha: f64, big_m: f64, grad0_norm: f64) -> f64 {
    let k = 2.0 * big_m.sqrt() + grad0_norm;
    k * k / alpha
}

/// Everything needed to evaluate the radial envelope at any noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialGeometry {
    pub schedule: ScheduleSpec,
    pub weak: WeakLogParams,
    #[serde(default)]
    pub score: ScoreErrorEnvelope,
    #[serde(default)]
    pub quad: QuadratureConfig,
}

impl RadialGeometry {
    pub fn new(
        schedule: ScheduleSpec,
        weak: WeakLogParams,
        score: ScoreErrorEnvelope,
        quad: QuadratureConfig,
    ) -> Result<Self> {
        let g = Self {
            schedule,
            weak,
            score,
            quad,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.weak.validate()?;
        self.score.validate()?;
        self.quad.validate()
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon()
    }

    /// All points where the integrands built from this geometry may kink.
    pub fn breaks(&self) -> Vec<f64> {
        let mut b = self.schedule.knots().to_vec();
        b.extend(self.score.ell.knots());
        b.extend(self.score.eps.knots());
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    pub fn smoothed_params(&self, s: f64) -> Result<SmoothedParams> {
        let a = self.schedule.coeff_a(s, &self.quad)?;
        let sigma2 = self.schedule.coeff_sigma2(s, &self.quad)?;
        let a2 = a * a;
        let den = a2 + self.weak.alpha * sigma2;
        Ok(SmoothedParams {
            alpha_s: self.weak.alpha / den,
            m_s: self.weak.big_m * a2 / (den * den),
        })
    }

    pub fn margin_load(&self, s: f64) -> Result<MarginLoad> {
        let sp = self.smoothed_params(s)?;
        let g2 = self.schedule.g2(s);
        let f = self.schedule.f(s);
        let ell = self.score.ell.at(s);
        Ok(MarginLoad {
            margin: g2 * (sp.alpha_s - ell) - f,
            load: f + g2 * (sp.m_s + ell - sp.alpha_s),
        })
    }

    /// `kappa_s(r)` for `r > 0`. The `r -> 0` limit is `-load`.
    pub fn kappa_lower(&self, s: f64, r: f64) -> Result<f64> {
        ensure(r > 0.0, || format!("kappa_lower needs r > 0, got {r}"))?;
        let sp = self.smoothed_params(s)?;
        let g2 = self.schedule.g2(s);
        let ell = self.score.ell.at(s);
        Ok(g2 * (sp.alpha_s - f_m_over_r(sp.m_s, r) - ell) - self.schedule.f(s))
    }

    /// `g^2(s) eps(s)`, the forcing density.
    pub fn forcing(&self, s: f64) -> f64 {
        self.schedule.g2(s) * self.score.eps.at(s)
    }

    fn load_at(&self, s: f64) -> f64 {
        self.margin_load(s).map_or(f64::NAN, |ml| ml.load)
    }

    /// `int_a^b load(u) du`.
    pub fn gamma_between(&self, a: f64, b: f64) -> Result<f64> {
        let breaks = self.breaks();
        integrate_breaks(|u| self.load_at(u), a, b, &breaks, &self.quad)
    }

    /// `Gamma(s) = int_0^s load(u) du`.
    pub fn gamma(&self, s: f64) -> Result<f64> {
        if !(0.0..=self.horizon()).contains(&s) {
            return Err(Error::OutOfRange {
                s,
                lo: 0.0,
                hi: self.horizon(),
            });
        }
        self.gamma_between(0.0, s)
    }

    /// Smallest radius where the envelope turns nonnegative. Infinite when the
    /// margin is not positive.
    pub fn zero_cross_radius(&self, s: f64) -> Result<f64> {
        let ml = self.margin_load(s)?;
        if ml.margin <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let k = |r: f64| self.kappa_lower(s, r);
        if k(NEAR_FIELD_R)? >= 0.0 {
            return Ok(0.0);
        }
        let mut lo = NEAR_FIELD_R;
        let mut hi = 1.0;
        while k(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 2f64.powi(64) {
                return Ok(f64::INFINITY);
            }
        }
        while hi - lo > ZERO_CROSS_TOL {
            let mid = 0.5 * (lo + hi);
            if k(mid)? >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `inf_{u in [s0, T]} m(u)`.
    pub fn window_margin(&self, s0: f64) -> Result<f64> {
        let t = self.horizon();
        if s0 > t {
            return Err(Error::EmptyWindow { s0, horizon: t });
        }
        ensure(s0 > 0.0, || format!("window start must be > 0, got {s0}"))?;
        let w = window_extremum(|u| Ok(self.margin_load(u)?.margin), s0, t, Extremum::Min)?;
        Ok(w.value)
    }
}
