//! Closed forms for the variance-preserving schedule with constant proxies
//! `ell_bar` and `eps_bar`.
//!
//! With `D(s) = alpha + (1 - alpha) e^{-beta s}`:
//!
//! ```text
//! m_pr(s)     = beta (alpha / D - ell_bar - 1/2)
//! b_pr(s)     = beta (M e^{-beta s} / D^2 + ell_bar + 1/2 - alpha / D)
//! Gamma_pr(s) = beta (ell_bar + 1/2) s - log(alpha e^{beta s} + 1 - alpha) + M_VP(s)
//! M_VP(s)     = M (1/D - 1) / (1 - alpha)     (alpha != 1)
//!             = M (1 - e^{-beta s})           (alpha == 1)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::extremum::{window_extremum, Extremum};
use crate::quadrature::{integrate, QuadratureConfig};
use crate::switchgeom::SwitchGeometry;
use crate::transport::{conversion_constant, theta_p, MomentBudget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpClosedForms {
    pub gamma_pr: f64,
    pub m_pr: f64,
    pub b_pr: f64,
}

/// Proxy parameters of a VP certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpParams {
    pub beta: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub ell_bar: f64,
}

impl VpParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.beta > 0.0 && self.beta.is_finite(), || "beta must be > 0".into())?;
        ensure(self.alpha > 0.0 && self.alpha.is_finite(), || {
            "alpha must be > 0".into()
        })?;
        ensure(self.big_m >= 0.0 && self.big_m.is_finite(), || "M must be >= 0".into())?;
        ensure(self.ell_bar.is_finite(), || "ell_bar must be finite".into())
    }

    fn d(&self, s: f64) -> f64 {
        self.alpha + (1.0 - self.alpha) * (-self.beta * s).exp()
    }

    pub fn closed_forms(&self, s: f64) -> VpClosedForms {
        let VpParams {
            beta,
            alpha,
            big_m,
            ell_bar,
        } = *self;
        let d = self.d(s);
        let e = (-beta * s).exp();
        let m_vp = if alpha == 1.0 {
            big_m * -(-beta * s).exp_m1()
        } else {
            big_m * (1.0 / d - 1.0) / (1.0 - alpha)
        };
        // log(alpha e^{beta s} + 1 - alpha) = beta s + log(D)
        let log_term = beta * s + d.ln();
        VpClosedForms {
            gamma_pr: beta * (ell_bar + 0.5) * s - log_term + m_vp,
            m_pr: beta * (alpha / d - ell_bar - 0.5),
            b_pr: beta * (big_m * e / (d * d) + ell_bar + 0.5 - alpha / d),
        }
    }

    /// `sup g^2 sqrt(M_u)` over `[s0, T]` with `g^2 = beta`.
    fn g_bar(&self, s0: f64, t: f64) -> Result<f64> {
        let f = |u: f64| {
            let d = self.d(u);
            Ok(self.beta * (self.big_m * (-self.beta * u).exp()).sqrt() / d)
        };
        Ok(window_extremum(f, s0, t, Extremum::Max)?.value)
    }
}

pub fn vp_closed_forms(beta: f64, alpha: f64, big_m: f64, ell_bar: f64, s: f64) -> VpClosedForms {
    VpParams {
        beta,
        alpha,
        big_m,
        ell_bar,
    }
    .closed_forms(s)
}

/// Switch level where the proxy margin turns positive; `+inf` when it never does.
pub fn vp_admissible_threshold(beta: f64, alpha: f64, ell_bar: f64) -> Result<f64> {
    ensure(beta > 0.0, || format!("beta must be > 0, got {beta}"))?;
    ensure(alpha > 0.0 && alpha <= 1.0, || {
        format!("threshold needs alpha in (0, 1], got {alpha}")
    })?;
    if ell_bar >= 0.5 {
        return Ok(f64::INFINITY);
    }
    if alpha >= ell_bar + 0.5 {
        return Ok(0.0);
    }
    let ratio = ((ell_bar + 0.5) * (1.0 - alpha)) / (alpha * (0.5 - ell_bar));
    Ok((ratio.ln() / beta).max(0.0))
}

/// Inputs of the closed-form VP certificates on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpCertificateConfig {
    #[serde(flatten)]
    pub params: VpParams,
    pub eps_bar: f64,
    pub horizon: f64,
    pub steps: usize,
    pub c_sch: f64,
    pub q: f64,
    pub budget: MomentBudget,
    pub init_w2: f64,
    #[serde(default)]
    pub init_wphi: Option<f64>,
    pub s0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpCertificate {
    pub switch: SwitchGeometry,
    pub gamma_s0: f64,
    /// Early `W_phi` budget in closed form.
    pub xi_sw: f64,
    /// Lower envelope of the direct early term; present only when the
    /// smallest proxy load on the window is positive.
    pub xi_dir: Option<f64>,
    pub b_lo: f64,
    pub conversion_constant: f64,
    pub delta_late: f64,
    pub routed: f64,
    /// Direct bound evaluated with the closed-form `Gamma_pr`.
    pub direct: f64,
    /// `C_p xi_sw^theta < xi_dir`; `None` when `xi_dir` is absent.
    pub strict_improvement: Option<bool>,
}

pub fn vp_certificates(cfg: &VpCertificateConfig) -> Result<VpCertificate> {
    let p = cfg.params;
    p.validate()?;
    cfg.budget.validate()?;
    let t = cfg.horizon;
    ensure(t > 0.0 && cfg.steps > 0, || "need a positive horizon and steps".into())?;
    ensure(cfg.eps_bar >= 0.0 && cfg.c_sch >= 0.0 && cfg.init_w2 >= 0.0, || {
        "eps_bar, c_sch and init_w2 must be >= 0".into()
    })?;
    let h = t / cfg.steps as f64;
    let d = cfg.c_sch * h.powf(cfg.q);
    let k_f = (t - cfg.s0) / h;
    let k_sw = k_f.round();
    if (k_f - k_sw).abs() > 1e-9 || !(cfg.s0 > 0.0 && cfg.s0 <= t) {
        return Err(Error::NotGridAligned {
            s0: cfg.s0,
            below: t - k_f.ceil() * h,
            above: t - k_f.floor() * h,
        });
    }
    let k_sw = k_sw as usize;
    let s0 = cfg.s0;
    let l = t - s0;

    let threshold = if p.alpha <= 1.0 {
        vp_admissible_threshold(p.beta, p.alpha, p.ell_bar)?
    } else {
        0.0
    };
    let m_lo = window_extremum(|u| Ok(p.closed_forms(u).m_pr), s0, t, Extremum::Min)?.value;
    if s0 <= threshold || m_lo <= 0.0 {
        return Err(Error::Inadmissible { s0, margin: m_lo });
    }
    let b_hi = window_extremum(|u| Ok(p.closed_forms(u).b_pr), s0, t, Extremum::Max)?.value;
    let b_lo = window_extremum(|u| Ok(p.closed_forms(u).b_pr), s0, t, Extremum::Min)?.value;
    let sw = SwitchGeometry::from_aggregates(s0, l, p.beta.sqrt(), b_hi, p.g_bar(s0, t)?, m_lo)?;
    let c = sw.c_rate;

    let init_wphi = cfg.init_wphi.unwrap_or(cfg.init_w2);
    let decay = -(-c * l).exp_m1();
    // c underflows to zero when the tail slope does; use the undamped limits
    let (defect_sum, forcing_int) = if c > 0.0 {
        (decay / -(-c * h).exp_m1(), decay / c)
    } else {
        ((l / h).round(), l)
    };
    let xi_sw = (-c * l).exp() * init_wphi + d * defect_sum + p.beta * cfg.eps_bar * forcing_int;
    let xi_dir = (b_lo > 0.0).then(|| {
        let grow = (b_lo * l).exp_m1();
        (b_lo * l).exp() * cfg.init_w2 + d * grow / (b_lo * h).exp_m1() + p.beta * cfg.eps_bar / b_lo * grow
    });

    let gamma = |s: f64| p.closed_forms(s).gamma_pr;
    let q = QuadratureConfig::default();
    let forcing = |a: f64, b: f64| -> Result<f64> {
        if cfg.eps_bar == 0.0 {
            return Ok(0.0);
        }
        integrate(|u| gamma(u).exp() * p.beta * cfg.eps_bar, a, b, &q)
    };
    let n = cfg.steps;
    let mut late_disc = 0.0;
    for k in k_sw..n {
        late_disc += gamma(t - (k + 1) as f64 * h).exp() * d;
    }
    let delta_late = late_disc + forcing(0.0, s0)?;

    let cp = conversion_constant(&sw, &cfg.budget)?;
    let th = theta_p(cfg.budget.p)?;
    let gamma_s0 = gamma(s0);
    let routed_early = if xi_sw == 0.0 { 0.0 } else { cp * xi_sw.powf(th) };
    let routed = delta_late + gamma_s0.exp() * routed_early;

    let mut direct = gamma(t).exp() * cfg.init_w2 + forcing(0.0, t)?;
    for k in 0..n {
        direct += gamma(t - (k + 1) as f64 * h).exp() * d;
    }

    Ok(VpCertificate {
        switch: sw,
        gamma_s0,
        xi_sw,
        xi_dir,
        b_lo,
        conversion_constant: cp,
        delta_late,
        routed,
        direct,
        strict_improvement: xi_dir.map(|x| routed_early < x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    #[test]
    fn gamma_vanishes_at_zero() {
        for alpha in [0.1, 0.5, 1.0] {
            let v = vp_closed_forms(1.3, alpha, 2.0, 0.2, 0.0);
            assert!(v.gamma_pr.abs() < 1e-15);
        }
    }

    #[test]
    fn unit_alpha_branch() {
        let (beta, m, s) = (0.7, 3.0, 1.9);
        let v = vp_closed_forms(beta, 1.0, m, 0.0, s);
        // with alpha = 1: D = 1 and the log term is beta s
        let expected = beta * 0.5 * s - beta * s + m * (1.0 - (-beta * s).exp());
        assert!((v.gamma_pr - expected).abs() < 1e-14);
    }

    #[test]
    fn gamma_matches_quadrature_of_load() {
        let q = QuadratureConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            ..Default::default()
        };
        for (beta, alpha, m, ell) in [(1.0, 0.5, 1.0, 0.0), (2.0, 0.1, 5.0, 0.2), (0.5, 0.9, 0.0, 0.2)] {
            let oracle = integrate(|u| vp_closed_forms(beta, alpha, m, ell, u).b_pr, 0.0, 1.0, &q).unwrap();
            let v = vp_closed_forms(beta, alpha, m, ell, 1.0).gamma_pr;
            assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
        }
    }

    #[test]
    fn threshold_cases() {
        let s = vp_admissible_threshold(1.0, 0.25, 0.0).unwrap();
        assert!((s - 3f64.ln()).abs() < 1e-15);
        assert_eq!(vp_admissible_threshold(1.0, 0.9, 0.0).unwrap(), 0.0);
        assert_eq!(vp_admissible_threshold(1.0, 0.5, 0.6).unwrap(), f64::INFINITY);
        let at = vp_closed_forms(1.0, 0.25, 0.0, 0.0, s);
        assert!(at.m_pr.abs() < 1e-15);
    }

    fn base_cfg() -> VpCertificateConfig {
        VpCertificateConfig {
            params: VpParams {
                beta: 1.0,
                alpha: 0.5,
                big_m: 1.0,
                ell_bar: 0.0,
            },
            eps_bar: 0.01,
            horizon: 4.0,
            steps: 400,
            c_sch: 1.0,
            q: 1.5,
            budget: MomentBudget::new(4.0, 6.0).unwrap(),
            init_w2: 0.0,
            init_wphi: None,
            s0: 2.0,
        }
    }

    #[test]
    fn geometric_sums_match_explicit_sums() {
        let cfg = VpCertificateConfig {
            init_w2: 0.3,
            ..base_cfg()
        };
        let cert = vp_certificates(&cfg).unwrap();
        let h = cfg.horizon / cfg.steps as f64;
        let d = cfg.c_sch * h.powf(cfg.q);
        let c = cert.switch.c_rate;
        let k = ((cfg.horizon - cfg.s0) / h).round() as usize;
        let l = k as f64 * h;
        let mut explicit = (-c * l).exp() * 0.3;
        for j in 0..k {
            explicit += (-c * (l - (j + 1) as f64 * h)).exp() * d;
        }
        explicit += cfg.params.beta * cfg.eps_bar / c * (1.0 - (-c * l).exp());
        assert!((cert.xi_sw - explicit).abs() < 1e-10 * explicit);
    }

    #[test]
    fn init_only_terms() {
        let cfg = VpCertificateConfig {
            eps_bar: 0.0,
            c_sch: 0.0,
            init_w2: 0.7,
            init_wphi: Some(0.5),
            params: VpParams {
                big_m: 1.0,
                alpha: 0.1,
                ell_bar: -0.2,
                ..base_cfg().params
            },
            ..base_cfg()
        };
        let cert = vp_certificates(&cfg).unwrap();
        let l = cfg.horizon - cfg.s0;
        assert!((cert.xi_sw - (-cert.switch.c_rate * l).exp() * 0.5).abs() < 1e-15);
        let b_lo = cert.b_lo;
        assert!(b_lo > 0.0);
        let xi_dir = cert.xi_dir.unwrap();
        assert!((xi_dir - (b_lo * l).exp() * 0.7).abs() < 1e-14);
    }

    #[test]
    fn misaligned_and_inadmissible() {
        let cfg = VpCertificateConfig {
            s0: 2.005,
            ..base_cfg()
        };
        assert!(matches!(vp_certificates(&cfg), Err(Error::NotGridAligned { .. })));
        let cfg = VpCertificateConfig {
            params: VpParams {
                alpha: 0.1,
                ..base_cfg().params
            },
            s0: 0.5,
            ..base_cfg()
        };
        assert!(matches!(vp_certificates(&cfg), Err(Error::Inadmissible { .. })));
    }
}
