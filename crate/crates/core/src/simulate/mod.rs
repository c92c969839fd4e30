//! Monte Carlo checks of the contraction and growth mechanisms.
//!
//! Pairs of learned reverse-SDE paths are driven either by the same noise
//! (synchronous coupling) or by mirrored noise until they meet (coalescing
//! reflection coupling). Time here is reverse time `t = T - s`.
//!
//! The reflection scheme is explicit Euler-Maruyama with the Brownian
//! increment mirrored along the current unit separation. A step is split by
//! Brownian-bridge subdivision when it would change `r` by half or more
//! without meeting; paths whose separation falls to `coalesce_eps` (or flips
//! orientation) are glued and move together afterwards. The threshold stands
//! in for the continuous-time hitting of zero.

pub mod rng;
pub mod target;
pub mod w2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::DiscretizationSpec;
use crate::error::{ensure, Error, Result};
use crate::field::ScoreErrorField;
use crate::profile::{Envelope, RadialGeometry, ScoreErrorEnvelope};
use crate::quadrature::QuadratureConfig;
use crate::schedule::ScheduleSpec;
use crate::switchgeom::SwitchGeometry;

pub use rng::StreamRecord;
pub use target::{exact_score, learned_drift, mixture_certification_scan, CertificationScan, Marginal, TargetModel};
pub use w2::{init_w2, quantile_w2, InitLaw};

/// Any coordinate beyond this aborts the run.
pub const EXPLOSION_LIMIT: f64 = 1e8;
/// Maximum Brownian-bridge halvings of one step.
pub const MAX_BISECTIONS: u32 = 40;
/// Upper bound on stored time points per run.
pub const MAX_RECORDS: usize = 200;

fn default_step() -> f64 {
    1e-3
}
fn default_paths() -> usize {
    10_000
}
fn default_coalesce() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub target: TargetModel,
    #[serde(default)]
    pub error_field: ScoreErrorField,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_step")]
    pub step_h: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_coalesce")]
    pub coalesce_eps: f64,
    /// Reverse-time window `[u, v]`.
    pub window: [f64; 2],
    #[serde(default)]
    pub init: InitLaw,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.error_field.validate(self.target.dim())?;
        let t = self.schedule.horizon();
        let [u, v] = self.window;
        ensure(0.0 <= u && u < v && v <= t, || {
            format!("window [{u}, {v}] must lie in [0, {t}]")
        })?;
        ensure(self.step_h > 0.0 && self.step_h <= 0.1 * (v - u), || {
            format!(
                "step {} must be positive and at most a tenth of the window",
                self.step_h
            )
        })?;
        ensure(self.n_paths >= 100, || {
            format!("need at least 100 paths, got {}", self.n_paths)
        })?;
        ensure(self.coalesce_eps > 0.0, || "coalesce_eps must be positive".into())
    }

    /// Geometry certified for this target with the field's one-sided slope as `ell`.
    pub fn certified_geometry(&self, eps: Envelope) -> Result<RadialGeometry> {
        RadialGeometry::new(
            self.schedule.clone(),
            self.target.weak_params()?,
            ScoreErrorEnvelope {
                ell: Envelope::Constant(self.error_field.slope_bound()),
                eps,
            },
            QuadratureConfig::default(),
        )
    }

    /// `int_u^v b(T - t) dt`, the synchronous growth exponent over the window.
    pub fn window_load_integral(&self) -> Result<f64> {
        let geom = self.certified_geometry(Envelope::Constant(0.0))?;
        let t = self.schedule.horizon();
        geom.gamma_between(t - self.window[1], t - self.window[0])
    }
}

/// Time series of a coupling run. Means are over all paths, coalesced ones
/// contributing zero distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub times: Vec<f64>,
    /// `E[phi(r_t)]` (or `E[r_t]` when no metric is given).
    pub mean_phi_r: Vec<f64>,
    pub phi_stderr: Vec<f64>,
    pub mean_dist: Vec<f64>,
    pub dist_stderr: Vec<f64>,
    pub coalesced_fraction: Vec<f64>,
    /// Largest recorded separation of any pair after it was glued.
    pub post_coalescence_max_gap: f64,
    /// Least-squares decay rate of `E[phi(r_t)]` over its positive entries.
    pub fitted_rate: f64,
    /// Realized quadratic variation of `r` over `int 4 g^2 dt` before
    /// coalescence; 1D reflection runs only.
    pub qv_ratio: Option<f64>,
    pub per_path_seeds: StreamRecord,
}

impl CouplingResult {
    /// `ln E|D_v| - ln E|D_u|` and its delta-method standard error.
    pub fn log_growth(&self) -> (f64, f64) {
        let (m0, m1) = (self.mean_dist[0], *self.mean_dist.last().unwrap());
        let se0 = self.dist_stderr[0] / m0;
        let se1 = *self.dist_stderr.last().unwrap() / m1;
        ((m1 / m0).ln(), (se0 * se0 + se1 * se1).sqrt())
    }
}

/// Least-squares slope of `ln y` against `t`, negated, over entries with `y > 0`.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in &pts {
        sty += (t - mt) * (y - my);
        stt += (t - mt) * (t - mt);
    }
    -sty / stt
}

#[derive(Debug, Clone, Copy)]
struct Coeffs {
    t: f64,
    f: f64,
    g: f64,
    g2: f64,
    mg: Marginal,
}

type State = [f64; 2];

struct Dynamics<'a> {
    target: &'a TargetModel,
    field: &'a ScoreErrorField,
    schedule: &'a ScheduleSpec,
    dim: usize,
}

impl<'a> Dynamics<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        Self {
            target: &cfg.target,
            field: &cfg.error_field,
            schedule: &cfg.schedule,
            dim: cfg.target.dim(),
        }
    }

    fn coeffs(&self, t: f64) -> Result<Coeffs> {
        let s = self.schedule.horizon() - t;
        let g = self.schedule.g(s);
        Ok(Coeffs {
            t,
            f: self.schedule.f(s),
            g,
            g2: g * g,
            mg: Marginal::at(self.schedule, s)?,
        })
    }

    fn drift(&self, c: &Coeffs, x: &State) -> State {
        let d = self.dim;
        let (mut score, mut err) = ([0.0; 2], [0.0; 2]);
        self.target.score(c.mg, &x[..d], &mut score[..d]);
        self.field.eval(&x[..d], &mut err[..d]);
        let mut out = [0.0; 2];
        for i in 0..d {
            out[i] = c.f * x[i] + c.g2 * (score[i] + err[i]);
        }
        out
    }

    fn em(&self, c: &Coeffs, x: &State, dt: f64, dw: &State) -> State {
        let b = self.drift(c, x);
        let mut out = [0.0; 2];
        for i in 0..self.dim {
            out[i] = x[i] + b[i] * dt + c.g * dw[i];
        }
        out
    }

    fn noise(&self, rng: &mut rng::Stream, dt: f64) -> State {
        let mut dw = [0.0; 2];
        for w in dw.iter_mut().take(self.dim) {
            *w = dt.sqrt() * rng::normal(rng);
        }
        dw
    }

    fn guard(&self, path: usize, t: f64, states: &[&State]) -> Result<()> {
        for x in states {
            if x[..self.dim].iter().any(|v| !(v.abs() <= EXPLOSION_LIMIT)) {
                return Err(Error::Explosion { path, t });
            }
        }
        Ok(())
    }
}

fn norm(x: &State) -> f64 {
    x[0].hypot(x[1])
}

fn sub(x: &State, y: &State) -> State {
    [x[0] - y[0], x[1] - y[1]]
}

/// Window step grid: `n` equal steps and the record stride.
fn window_grid(cfg: &SimConfig) -> (usize, f64, usize) {
    let [u, v] = cfg.window;
    let n = ((v - u) / cfg.step_h - 1e-9).ceil().max(1.0) as usize;
    let stride = n.div_ceil(MAX_RECORDS).max(1);
    (n, (v - u) / n as f64, stride)
}

fn record_indices(n: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..=n).step_by(stride).collect();
    if *idx.last().unwrap() != n {
        idx.push(n);
    }
    idx
}

struct PathTrace {
    dist: Vec<f64>,
    /// First record index at which the pair was glued.
    glued_at: Option<usize>,
    qv: f64,
    qv_ref: f64,
}

#[derive(Default)]
struct QvAcc {
    qv: f64,
    qv_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coupling {
    Synchronous,
    Reflection,
}

impl Dynamics<'_> {
    /// One mirrored step over `[c.t, c.t + dt]`; returns true on coalescence.
    #[allow(clippy::too_many_arguments)]
    fn reflect_step(
        &self,
        c: &Coeffs,
        x: &mut State,
        y: &mut State,
        dt: f64,
        dw: State,
        depth: u32,
        eps: f64,
        rng: &mut rng::Stream,
        acc: &mut QvAcc,
    ) -> Result<bool> {
        let d0 = sub(x, y);
        let r = norm(&d0);
        if r <= eps {
            *y = *x;
            return Ok(true);
        }
        let e = [d0[0] / r, d0[1] / r];
        let proj = e[0] * dw[0] + e[1] * dw[1];
        let dw_y = [dw[0] - 2.0 * proj * e[0], dw[1] - 2.0 * proj * e[1]];
        let xn = self.em(c, x, dt, &dw);
        let yn = self.em(c, y, dt, &dw_y);
        let dn = sub(&xn, &yn);
        let along = dn[0] * e[0] + dn[1] * e[1];
        if along <= eps {
            *x = xn;
            *y = xn;
            return Ok(true);
        }
        let rn = norm(&dn);
        if (rn - r).abs() >= 0.5 * r && depth < MAX_BISECTIONS {
            let half = 0.5 * dt;
            let z = self.noise(rng, 0.25 * dt);
            let dw1 = [0.5 * dw[0] + z[0], 0.5 * dw[1] + z[1]];
            let dw2 = [dw[0] - dw1[0], dw[1] - dw1[1]];
            if self.reflect_step(c, x, y, half, dw1, depth + 1, eps, rng, acc)? {
                // glued paths finish the step together
                *x = self.em(&self.coeffs(c.t + half)?, x, half, &dw2);
                *y = *x;
                return Ok(true);
            }
            let mid = self.coeffs(c.t + half)?;
            return self.reflect_step(&mid, x, y, half, dw2, depth + 1, eps, rng, acc);
        }
        acc.qv += (rn - r) * (rn - r);
        acc.qv_ref += 4.0 * c.g2 * dt;
        *x = xn;
        *y = yn;
        Ok(false)
    }

    #[allow(clippy::too_many_arguments)]
    fn run_path(
        &self,
        cfg: &SimConfig,
        coupling: Coupling,
        table: &[Coeffs],
        h: f64,
        stride: usize,
        gap: f64,
        path: usize,
    ) -> Result<PathTrace> {
        let mut rng = rng::stream(cfg.seed, rng::PATHS, path as u64);
        let mut x = [0.0; 2];
        self.target.sample(table[0].mg, &mut rng, &mut x[..self.dim]);
        let mut y = x;
        y[0] += gap;
        let n = table.len() - 1;
        let mut dist = Vec::with_capacity(n / stride + 2);
        dist.push(gap.abs());
        let mut acc = QvAcc::default();
        let mut glued = gap == 0.0;
        let mut glued_at = glued.then_some(0);
        for (k, c) in table[..n].iter().enumerate() {
            let dw = self.noise(&mut rng, h);
            if glued {
                x = self.em(c, &x, h, &dw);
                y = x;
            } else {
                match coupling {
                    Coupling::Synchronous => {
                        x = self.em(c, &x, h, &dw);
                        y = self.em(c, &y, h, &dw);
                    }
                    Coupling::Reflection => {
                        glued = self.reflect_step(c, &mut x, &mut y, h, dw, 0, cfg.coalesce_eps, &mut rng, &mut acc)?;
                    }
                }
            }
            self.guard(path, table[k + 1].t, &[&x, &y])?;
            if (k + 1) % stride == 0 || k + 1 == n {
                dist.push(norm(&sub(&x, &y)));
                if glued && glued_at.is_none() {
                    glued_at = Some(dist.len() - 1);
                }
            }
        }
        Ok(PathTrace {
            dist,
            glued_at,
            qv: acc.qv,
            qv_ref: acc.qv_ref,
        })
    }
}

fn run_coupling(
    cfg: &SimConfig,
    coupling: Coupling,
    initial_gap: f64,
    metric: Option<&SwitchGeometry>,
) -> Result<CouplingResult> {
    cfg.validate()?;
    ensure(initial_gap >= 0.0 && initial_gap.is_finite(), || {
        format!("initial gap must be finite and >= 0, got {initial_gap}")
    })?;
    let dynamics = Dynamics::new(cfg);
    let (n, h, stride) = window_grid(cfg);
    let u = cfg.window[0];
    let table = (0..=n)
        .map(|k| dynamics.coeffs(if k == n { cfg.window[1] } else { u + k as f64 * h }))
        .collect::<Result<Vec<_>>>()?;
    let traces = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| dynamics.run_path(cfg, coupling, &table, h, stride, initial_gap, i))
        .collect::<Result<Vec<_>>>()?;

    let idx = record_indices(n, stride);
    let times: Vec<f64> = idx.iter().map(|&k| table[k].t).collect();
    let phi = |r: f64| match metric {
        Some(sw) if r > 0.0 => sw.phi_value(r),
        _ => r,
    };
    let np = cfg.n_paths as f64;
    let mut out = CouplingResult {
        times,
        mean_phi_r: Vec::with_capacity(idx.len()),
        phi_stderr: Vec::with_capacity(idx.len()),
        mean_dist: Vec::with_capacity(idx.len()),
        dist_stderr: Vec::with_capacity(idx.len()),
        coalesced_fraction: Vec::with_capacity(idx.len()),
        post_coalescence_max_gap: 0.0,
        fitted_rate: f64::NAN,
        qv_ratio: None,
        per_path_seeds: StreamRecord::new(cfg.seed, rng::PATHS, cfg.n_paths),
    };
    // reduce in path order so the result does not depend on scheduling
    for j in 0..idx.len() {
        let (mut s_phi, mut s_phi2, mut s_d, mut s_d2, mut glued) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for tr in &traces {
            let r = tr.dist[j];
            let p = phi(r);
            s_phi += p;
            s_phi2 += p * p;
            s_d += r;
            s_d2 += r * r;
            if tr.glued_at.is_some_and(|g| g <= j) {
                glued += 1;
                out.post_coalescence_max_gap = out.post_coalescence_max_gap.max(r);
            }
        }
        let se = |s: f64, s2: f64| (((s2 - s * s / np) / (np - 1.0)).max(0.0) / np).sqrt();
        out.mean_phi_r.push(s_phi / np);
        out.phi_stderr.push(se(s_phi, s_phi2));
        out.mean_dist.push(s_d / np);
        out.dist_stderr.push(se(s_d, s_d2));
        out.coalesced_fraction.push(glued as f64 / np);
    }
    out.fitted_rate = fit_decay_rate(&out.times, &out.mean_phi_r);
    if coupling == Coupling::Reflection && dynamics.dim == 1 {
        let (qv, qv_ref) = traces.iter().fold((0.0, 0.0), |a, t| (a.0 + t.qv, a.1 + t.qv_ref));
        out.qv_ratio = (qv_ref > 0.0).then(|| qv / qv_ref);
    }
    Ok(out)
}

/// Both paths driven by the same Brownian motion from `X_u ~ p_{T-u}`, `Y_u = X_u + gap e_1`.
pub fn run_synchronous(cfg: &SimConfig, initial_gap: f64, metric: Option<&SwitchGeometry>) -> Result<CouplingResult> {
    run_coupling(cfg, Coupling::Synchronous, initial_gap, metric)
}

/// Coalescing reflection coupling; the window must sit inside the early
/// window `[0, t_s]` of `metric` when one is given.
pub fn run_reflection(cfg: &SimConfig, initial_gap: f64, metric: Option<&SwitchGeometry>) -> Result<CouplingResult> {
    if let Some(sw) = metric {
        let t_s = sw.t_s;
        ensure(cfg.window[1] <= t_s * (1.0 + 1e-12), || {
            format!("window end {} exceeds the early window [0, {t_s}]", cfg.window[1])
        })?;
    }
    run_coupling(cfg, Coupling::Reflection, initial_gap, metric)
}

/// End-to-end `W_2` estimate against exact draws from `p_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub w2_hat: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub init: InitLaw,
    /// `W_2` between the starting law and `p_T`.
    pub init_w2: f64,
    pub warning: Option<String>,
}

/// Runs the learned sampler on the grid of `disc` from the configured initial
/// law and compares its outputs with exact `p_0` draws by quantile `W_2`.
pub fn sample_and_w2_1d(cfg: &SimConfig, disc: &DiscretizationSpec, n_samples: usize) -> Result<EndToEnd> {
    cfg.target.validate()?;
    cfg.error_field.validate(cfg.target.dim())?;
    ensure(cfg.target.dim() == 1, || {
        "end-to-end estimation is one-dimensional".into()
    })?;
    ensure(n_samples >= 2, || "need at least two samples".into())?;
    let t = cfg.schedule.horizon();
    disc.validate(t)?;
    let dynamics = Dynamics::new(cfg);
    let grid = &disc.grid;
    let table = grid[..grid.len() - 1]
        .iter()
        .map(|&tk| dynamics.coeffs(tk))
        .collect::<Result<Vec<_>>>()?;
    let law = cfg.init.resolve(&cfg.target);
    let terminal = Marginal::at(&cfg.schedule, t)?;

    let mut outputs = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, rng::PATHS, i as u64);
            let mut x = [0.0; 2];
            match law {
                InitLaw::StandardNormal => x[0] = rng::normal(&mut rng),
                _ => cfg.target.sample(terminal, &mut rng, &mut x[..1]),
            }
            for (k, c) in table.iter().enumerate() {
                let dt = grid[k + 1] - grid[k];
                let dw = dynamics.noise(&mut rng, dt);
                x = dynamics.em(c, &x, dt, &dw);
            }
            dynamics.guard(i, t, &[&x])?;
            Ok(x[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut reference: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, rng::REFERENCE, i as u64);
            let mut x = [0.0];
            cfg.target.sample(Marginal::DATA, &mut rng, &mut x);
            x[0]
        })
        .collect();
    let w2_hat = quantile_w2(&mut outputs, &mut reference)?;
    let stderr = w2::bootstrap_stderr(&outputs, &reference, w2::BOOTSTRAP_RESAMPLES, cfg.seed);
    Ok(EndToEnd {
        w2_hat,
        stderr,
        n_samples,
        init: law,
        init_w2: init_w2(&cfg.target, &cfg.schedule, law)?,
        warning: (n_samples < 1000).then(|| format!("only {n_samples} samples; W2 estimate is noisy")),
    })
}
