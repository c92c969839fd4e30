//! End-to-end certificates.
//!
//! For a grid-aligned admissible switch `s0` (reverse time `t_K = T - s0`)
//! the routed bound is
//!
//! ```text
//! B_p(s0) = L(s0) + exp(Gamma(s0)) * C_p * Delta_phi(s0)^theta_p
//! ```
//!
//! where `Delta_phi` propagates the initial mismatch, the per-step defects
//! `d_k` and the score forcing `g^2 eps` through the early window at rate `c`,
//! and the late term `L(s0)` propagates the remaining defects and forcing in
//! `W_2` with growth `exp(Gamma)`. The direct bound propagates everything in
//! `W_2` over the whole horizon and splits as `L(s0) + exp(Gamma(s0)) R_dir(s0)`.

pub mod vp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::profile::{Envelope, RadialGeometry};
use crate::quadrature::{integrate_breaks, QuadratureConfig};
use crate::switchgeom::{build_switch, SwitchGeometry};
use crate::transport::{conversion_constant, theta_p, MomentBudget};

/// Relative tolerance (in units of `T`) for matching a switch to the grid.
pub const ALIGN_TOL: f64 = 1e-12;
/// Relative tolerance under which routed and direct bounds are declared tied.
pub const TIE_TOL: f64 = 1e-12;

/// Per-step one-step defect bounds `d_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefectModel {
    /// Explicit `d_k`, one per step.
    PerStep { d: Vec<f64> },
    /// `d_k = c_sch * h^q` on a uniform grid.
    PowerLaw { c_sch: f64, q: f64 },
}

/// Reverse-time grid `0 = t_0 < ... < t_N = T` and its defect model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub grid: Vec<f64>,
    pub defects: DefectModel,
}

impl DiscretizationSpec {
    pub fn uniform(horizon: f64, steps: usize, defects: DefectModel) -> Result<Self> {
        ensure(steps > 0, || "need at least one step".into())?;
        let grid = (0..=steps)
            .map(|k| {
                if k == steps {
                    horizon
                } else {
                    horizon * k as f64 / steps as f64
                }
            })
            .collect();
        Ok(Self { grid, defects })
    }

    pub fn steps(&self) -> usize {
        self.grid.len().saturating_sub(1)
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let g = &self.grid;
        ensure(g.len() >= 2, || "grid needs at least two points".into())?;
        ensure(g[0] == 0.0, || format!("grid must start at 0, got {}", g[0]))?;
        ensure(g.windows(2).all(|w| w[1] > w[0]), || {
            "grid must be strictly increasing".into()
        })?;
        let last = *g.last().unwrap();
        ensure((last - horizon).abs() <= ALIGN_TOL * horizon, || {
            format!("grid must end at the horizon {horizon}, got {last}")
        })?;
        match &self.defects {
            DefectModel::PerStep { d } => {
                ensure(d.len() == self.steps(), || {
                    format!("{} defects for {} steps", d.len(), self.steps())
                })?;
                ensure(d.iter().all(|&v| v >= 0.0 && v.is_finite()), || {
                    "defects must be finite and >= 0".into()
                })
            }
            DefectModel::PowerLaw { c_sch, q } => {
                ensure(*c_sch >= 0.0 && c_sch.is_finite(), || "c_sch must be >= 0".into())?;
                ensure(*q > 0.0 && q.is_finite(), || "q must be > 0".into())?;
                let h = horizon / self.steps() as f64;
                ensure(
                    g.windows(2)
                        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * horizon.max(1.0)),
                    || "power-law defects need a uniform grid".into(),
                )
            }
        }
    }

    /// The defect sequence `d_0, ..., d_{N-1}`.
    pub fn defects(&self) -> Vec<f64> {
        match &self.defects {
            DefectModel::PerStep { d } => d.clone(),
            DefectModel::PowerLaw { c_sch, q } => {
                let n = self.steps();
                let h = self.grid[n] / n as f64;
                vec![c_sch * h.powf(*q); n]
            }
        }
    }

    /// Index `K` with `t_K = T - s0`, or an error naming the nearest aligned switches.
    pub fn switch_index(&self, s0: f64) -> Result<usize> {
        let t = *self.grid.last().unwrap();
        let target = t - s0;
        let k = self.grid.partition_point(|&x| x < target);
        let near = |i: usize| self.grid.get(i).map(|&x| (x - target).abs() <= ALIGN_TOL * t);
        if near(k) == Some(true) {
            return Ok(k);
        }
        if k > 0 && near(k - 1) == Some(true) {
            return Ok(k - 1);
        }
        let above = if k > 0 { t - self.grid[k - 1] } else { t };
        let below = self.grid.get(k).map_or(0.0, |&x| t - x);
        Err(Error::NotGridAligned { s0, below, above })
    }

    /// Switches `s0 = T - t_K` for `K = 1..=N` paired with `K`; `s0 = T` is `K = 0`.
    pub fn aligned_switches(&self) -> Vec<f64> {
        let t = *self.grid.last().unwrap();
        self.grid[..self.steps()].iter().map(|&x| t - x).collect()
    }
}

/// Everything the certificates consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub geom: RadialGeometry,
    pub disc: DiscretizationSpec,
    pub budget: MomentBudget,
    pub init_w2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_wphi: Option<f64>,
}

impl CertificateInputs {
    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        self.disc.validate(self.geom.horizon())?;
        self.budget.validate()?;
        ensure(self.init_w2 >= 0.0 && self.init_w2.is_finite(), || {
            format!("init_w2 must be >= 0, got {}", self.init_w2)
        })?;
        if let Some(w) = self.init_wphi {
            ensure(w >= 0.0 && w <= self.init_w2, || {
                format!("init_wphi must lie in [0, init_w2], got {w}")
            })?;
        }
        Ok(())
    }

    /// `W_phi` initial mismatch; defaults to `init_w2` since `W_phi <= W_2`.
    pub fn init_wphi(&self) -> f64 {
        self.init_wphi.unwrap_or(self.init_w2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Routed,
    Direct,
    Tie,
}

impl Winner {
    /// An infinite (vacuous) bound loses to any finite one.
    pub fn decide(routed: f64, direct: f64) -> Self {
        if routed == direct {
            return Winner::Tie;
        }
        if routed.is_infinite() || direct.is_infinite() {
            return if routed < direct {
                Winner::Routed
            } else {
                Winner::Direct
            };
        }
        let tol = TIE_TOL * 1f64.max(routed.abs()).max(direct.abs());
        if (routed - direct).abs() <= tol {
            Winner::Tie
        } else if routed < direct {
            Winner::Routed
        } else {
            Winner::Direct
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Winner::Routed => "routed",
            Winner::Direct => "direct",
            Winner::Tie => "tie",
        }
    }
}

/// Routed and direct bounds at one switch with their shared late term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub s0: f64,
    pub margin: f64,
    pub r_sw: f64,
    pub lambda: f64,
    pub log_a_slope: f64,
    pub a_slope: f64,
    pub c_rate: f64,
    pub gamma_s0: f64,
    /// Early `W_phi` budget before conversion.
    pub early_budget: f64,
    pub conversion_constant: f64,
    /// `C_p * early_budget^theta_p`.
    pub early_routed: f64,
    /// Early window propagated in `W_2` with growth `exp(Lambda_{s0})`.
    pub early_direct: f64,
    pub shared_late: f64,
    pub routed: f64,
    pub direct: f64,
    pub winner: Winner,
}

/// Precomputed `Gamma` and late-window quantities on the grid.
#[derive(Debug, Clone)]
pub struct CertificateEngine {
    inputs: CertificateInputs,
    defects: Vec<f64>,
    breaks: Vec<f64>,
    /// `Gamma(T - t_j)`.
    gamma_at: Vec<f64>,
    /// `int_0^{T - t_j} exp(Gamma) g^2 eps`.
    late_forcing_at: Vec<f64>,
    forcing_free: bool,
}

fn panel_cfg(q: &QuadratureConfig, len: f64, total: f64) -> QuadratureConfig {
    QuadratureConfig {
        abs_tol: (q.abs_tol * len / total).max(f64::MIN_POSITIVE),
        ..*q
    }
}

impl CertificateEngine {
    pub fn new(inputs: &CertificateInputs) -> Result<Self> {
        inputs.validate()?;
        let geom = &inputs.geom;
        let t = geom.horizon();
        let grid = &inputs.disc.grid;
        let n = grid.len() - 1;
        let breaks = geom.breaks();
        let forcing_free = matches!(geom.score.eps, Envelope::Constant(e) if e == 0.0);

        let mut gamma_at = vec![0.0; n + 1];
        let mut late_forcing_at = vec![0.0; n + 1];
        for j in (0..n).rev() {
            let (lo, hi) = (t - grid[j + 1], t - grid[j]);
            let lo = if j + 1 == n { 0.0 } else { lo };
            let cfg = panel_cfg(&geom.quad, hi - lo, t);
            let base = gamma_at[j + 1];
            gamma_at[j] = base + integrate_breaks(|u| load(geom, u), lo, hi, &breaks, &cfg)?;
            let panel = if forcing_free {
                0.0
            } else {
                exp_growth_forcing(geom, lo, hi, base, &breaks, &cfg)?
            };
            late_forcing_at[j] = late_forcing_at[j + 1] + panel;
        }
        Ok(Self {
            inputs: inputs.clone(),
            defects: inputs.disc.defects(),
            breaks,
            gamma_at,
            late_forcing_at,
            forcing_free,
        })
    }

    pub fn inputs(&self) -> &CertificateInputs {
        &self.inputs
    }

    fn horizon(&self) -> f64 {
        self.inputs.geom.horizon()
    }

    fn grid(&self) -> &[f64] {
        &self.inputs.disc.grid
    }

    /// `Gamma(s0)` for an aligned switch, read from the grid table.
    pub fn gamma_at_switch(&self, s0: f64) -> Result<f64> {
        Ok(self.gamma_at[self.inputs.disc.switch_index(s0)?])
    }

    /// `Delta_phi(s0)`: initial, defect and forcing contributions contracted at rate `c`.
    pub fn early_budget(&self, sw: &SwitchGeometry) -> Result<f64> {
        let k_sw = self.inputs.disc.switch_index(sw.s0)?;
        let t_s = self.grid()[k_sw];
        let c = sw.c_rate;
        let mut acc = (-c * t_s).exp() * self.inputs.init_wphi();
        for k in 0..k_sw {
            acc += (-c * (t_s - self.grid()[k + 1])).exp() * self.defects[k];
        }
        if !self.forcing_free {
            let geom = &self.inputs.geom;
            acc += integrate_breaks(
                |s| (-c * (s - sw.s0)).exp() * geom.forcing(s),
                sw.s0,
                self.horizon(),
                &self.breaks,
                &geom.quad,
            )?;
        }
        Ok(acc)
    }

    /// Late defects and forcing propagated in `W_2` over `[0, s0]`.
    pub fn late_budget(&self, s0: f64) -> Result<f64> {
        let k_sw = self.inputs.disc.switch_index(s0)?;
        let n = self.grid().len() - 1;
        let mut acc = 0.0;
        for k in k_sw..n {
            acc += self.gamma_at[k + 1].exp() * self.defects[k];
        }
        Ok(acc + self.late_forcing_at[k_sw])
    }

    /// Full-horizon `W_2` propagation.
    pub fn direct_bound(&self) -> f64 {
        let n = self.grid().len() - 1;
        let mut acc = self.gamma_at[0].exp() * self.inputs.init_w2;
        for k in 0..n {
            acc += self.gamma_at[k + 1].exp() * self.defects[k];
        }
        acc + self.late_forcing_at[0]
    }

    /// `R_dir(s0)` computed from `Lambda_{s0}(r) = int_{s0}^r b` by fresh
    /// quadratures anchored at `s0`, independent of the `Gamma` table.
    pub fn early_direct(&self, s0: f64) -> Result<f64> {
        let k_sw = self.inputs.disc.switch_index(s0)?;
        let geom = &self.inputs.geom;
        let t = self.horizon();
        let lambda = |r: f64| integrate_breaks(|u| load(geom, u), s0, r, &self.breaks, &geom.quad);
        let mut acc = lambda(t)?.exp() * self.inputs.init_w2;
        for k in 0..k_sw {
            acc += lambda(t - self.grid()[k + 1])?.exp() * self.defects[k];
        }
        if !self.forcing_free {
            acc += exp_growth_forcing(geom, s0, t, 0.0, &self.breaks, &geom.quad)?;
        }
        Ok(acc)
    }

    /// Routed bound, direct bound and their decomposition at `s0`.
    pub fn compare(&self, s0: f64) -> Result<CertificateReport> {
        let sw = build_switch(&self.inputs.geom, s0)?;
        self.compare_with(&sw)
    }

    pub fn compare_with(&self, sw: &SwitchGeometry) -> Result<CertificateReport> {
        let s0 = sw.s0;
        let gamma_s0 = self.gamma_at_switch(s0)?;
        let shared_late = self.late_budget(s0)?;
        let early_budget = self.early_budget(sw)?;
        let cp = conversion_constant(sw, &self.inputs.budget)?;
        let early_routed = if early_budget == 0.0 {
            0.0
        } else {
            cp * early_budget.powf(theta_p(self.inputs.budget.p)?)
        };
        let early_direct = self.early_direct(s0)?;
        let routed = shared_late + gamma_s0.exp() * early_routed;
        let direct = shared_late + gamma_s0.exp() * early_direct;
        ensure(!routed.is_nan() && !direct.is_nan(), || {
            format!("undefined bound at s0 = {s0} (routed {routed}, direct {direct})")
        })?;
        Ok(CertificateReport {
            s0,
            margin: sw.m_lo,
            r_sw: sw.r_sw,
            lambda: sw.lambda,
            log_a_slope: sw.log_a_slope,
            a_slope: sw.a_slope,
            c_rate: sw.c_rate,
            gamma_s0,
            early_budget,
            conversion_constant: cp,
            early_routed,
            early_direct,
            shared_late,
            routed,
            direct,
            winner: Winner::decide(routed, direct),
        })
    }

    /// Reports for every admissible switch of the grid (in grid order) and
    /// the index of the smallest routed bound; ties go to the smallest `s0`.
    pub fn optimize(&self, switch_grid: &[f64]) -> Result<Optimized> {
        let geom = &self.inputs.geom;
        let margins = switch_grid
            .par_iter()
            .map(|&s0| {
                self.inputs.disc.switch_index(s0)?;
                Ok((s0, geom.window_margin(s0)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let admissible: Vec<f64> = margins.iter().filter(|p| p.1 > 0.0).map(|p| p.0).collect();
        if admissible.is_empty() {
            return Err(Error::NoAdmissibleSwitch { margins });
        }
        let reports = admissible
            .par_iter()
            .map(|&s0| self.compare(s0))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, r) in reports.iter().enumerate() {
            let b = &reports[best];
            if r.routed < b.routed || (r.routed == b.routed && r.s0 < b.s0) {
                best = i;
            }
        }
        Ok(Optimized { best, reports, margins })
    }
}

/// Result of a switch-grid optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimized {
    /// Index into `reports` of the minimizer.
    pub best: usize,
    pub reports: Vec<CertificateReport>,
    /// `(s0, window margin)` for every requested switch.
    pub margins: Vec<(f64, f64)>,
}

impl Optimized {
    pub fn best_report(&self) -> &CertificateReport {
        &self.reports[self.best]
    }
}

fn load(geom: &RadialGeometry, u: f64) -> f64 {
    geom.margin_load(u).map_or(f64::NAN, |ml| ml.load)
}

/// `int_lo^hi exp(base + int_lo^u b) g^2(u) eps(u) du`.
fn exp_growth_forcing(
    geom: &RadialGeometry,
    lo: f64,
    hi: f64,
    base: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let mut failure = None;
    let value = integrate_breaks(
        |u| {
            let f = geom.forcing(u);
            if f == 0.0 {
                return 0.0;
            }
            match integrate_breaks(|v| load(geom, v), lo, u, breaks, &geom.quad) {
                Ok(g) => (base + g).exp() * f,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        breaks,
        cfg,
    );
    match (value, failure) {
        (_, Some(e)) => Err(e),
        (v, None) => v,
    }
}

pub fn early_budget(inputs: &CertificateInputs, sw: &SwitchGeometry) -> Result<f64> {
    CertificateEngine::new(inputs)?.early_budget(sw)
}

pub fn late_budget(inputs: &CertificateInputs, s0: f64) -> Result<f64> {
    CertificateEngine::new(inputs)?.late_budget(s0)
}

pub fn direct_bound(inputs: &CertificateInputs) -> Result<f64> {
    Ok(CertificateEngine::new(inputs)?.direct_bound())
}

/// `B_p(s0)`; the full report carries every term.
pub fn routed_bound(inputs: &CertificateInputs, s0: f64) -> Result<f64> {
    Ok(CertificateEngine::new(inputs)?.compare(s0)?.routed)
}

pub fn compare(inputs: &CertificateInputs, s0: f64) -> Result<CertificateReport> {
    CertificateEngine::new(inputs)?.compare(s0)
}

pub fn optimize_switch(inputs: &CertificateInputs, switch_grid: &[f64]) -> Result<Optimized> {
    CertificateEngine::new(inputs)?.optimize(switch_grid)
}

/// The geometry with score-error envelopes replaced by upper proxies.
pub fn proxy_inputs(geom: &RadialGeometry, ell_upper: Envelope, eps_upper: Envelope) -> RadialGeometry {
    let mut g = geom.clone();
    g.score.ell = ell_upper;
    g.score.eps = eps_upper;
    g
}
