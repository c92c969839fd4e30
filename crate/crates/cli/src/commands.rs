//! One function per subcommand; each reads a loaded config and writes its reports.

use std::path::PathBuf;

use anyhow::{Context, Result};
use phasecert_core::certificate::vp::vp_admissible_threshold;
use phasecert_core::switchgeom::log_grid;
use phasecert_core::transport::{sharpness_pair, theta_p};
use phasecert_core::{
    admissible_set, build_switch, CertificateEngine, CertificateInputs, Envelope, Error, MomentBudget, SwitchGeometry,
};
use tracing::{info, warn};

use crate::config::{describe, RunConfig};
use crate::output::{
    num, validate_document, write_json, AdmissibleDoc, CertifyDoc, CouplingSummary, EndToEndSummary, SharpnessDoc,
    SimulateDoc, Table, ADMISSIBLE_SCHEMA, CERTIFY_SCHEMA, SHARPNESS_SCHEMA, SIMULATE_SCHEMA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Synchronous,
    Reflection,
    EndToEnd,
}

impl SimMode {
    fn as_str(self) -> &'static str {
        match self {
            SimMode::Synchronous => "synchronous",
            SimMode::Reflection => "reflection",
            SimMode::EndToEnd => "end_to_end",
        }
    }
}

fn csv_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.output.csv.clone()
}

fn json_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.output.json.clone()
}

/// Rows `(s, r, kappa_lower, margin, load, zero_cross_radius)` on a log radius grid.
pub fn profile(cfg: &RunConfig) -> Result<()> {
    let block = cfg
        .profile
        .as_ref()
        .ok_or_else(|| crate::config::ConfigError("missing `profile` block".into()))?;
    let geom = cfg.geometry()?;
    let radii = log_grid(block.r_min, block.r_max, block.n_r);
    let mut table = Table::create(
        csv_path(cfg).as_deref(),
        &["s", "r", "kappa_lower", "margin", "load", "zero_cross_radius"],
    )?;
    for &s in &block.s {
        let ml = geom.margin_load(s)?;
        let r0 = geom.zero_cross_radius(s)?;
        for &r in &radii {
            let k = geom.kappa_lower(s, r)?;
            table.row(&[num(s), num(r), num(k), num(ml.margin), num(ml.load), num(r0)])?;
        }
    }
    table.finish()
}

pub fn admissible(cfg: &RunConfig) -> Result<()> {
    let geom = cfg.geometry()?;
    let grid = cfg.switch_grid()?;
    let set = admissible_set(&geom, &grid)?;
    let vp_threshold = match (geom.schedule.vp_beta(), &geom.score.ell) {
        (Some(beta), Envelope::Constant(ell)) => vp_admissible_threshold(beta, geom.weak.alpha, *ell).ok(),
        _ => None,
    };
    let note = set
        .admissible
        .is_empty()
        .then(|| "no admissible switch on the grid".to_string());
    if let Some(n) = &note {
        warn!("{n}");
    }
    let doc = AdmissibleDoc {
        schema: ADMISSIBLE_SCHEMA.into(),
        horizon: geom.horizon(),
        margins: set.margins,
        admissible: set.admissible.iter().map(|p| p.0).collect(),
        s_min_bracket: set.s_min_bracket,
        vp_threshold,
        note,
    };
    write_json(json_path(cfg).as_deref(), &doc)
}

/// Per-switch reports as CSV (stdout by default) and the optimization as JSON.
pub fn certify(cfg: &RunConfig) -> Result<()> {
    let inputs = cfg.certificate_inputs()?;
    let engine = CertificateEngine::new(&inputs)?;
    let grid = cfg.switch_grid()?;
    let opt = engine.optimize(&grid)?;
    let mut table = Table::create(
        csv_path(cfg).as_deref(),
        &[
            "s0",
            "margin",
            "r_sw",
            "lambda",
            "log_a_slope",
            "c_rate",
            "gamma_s0",
            "early_budget",
            "conversion_constant",
            "early_routed",
            "early_direct",
            "shared_late",
            "routed",
            "direct",
            "winner",
            "argmin",
        ],
    )?;
    for (i, r) in opt.reports.iter().enumerate() {
        table.row(&[
            num(r.s0),
            num(r.margin),
            num(r.r_sw),
            num(r.lambda),
            num(r.log_a_slope),
            num(r.c_rate),
            num(r.gamma_s0),
            num(r.early_budget),
            num(r.conversion_constant),
            num(r.early_routed),
            num(r.early_direct),
            num(r.shared_late),
            num(r.routed),
            num(r.direct),
            r.winner.as_str().to_string(),
            u8::from(i == opt.best).to_string(),
        ])?;
    }
    table.finish()?;
    let best = opt.best_report();
    info!(s0 = best.s0, routed = best.routed, direct = best.direct, "best switch");
    if let Some(path) = json_path(cfg) {
        let doc = CertifyDoc {
            schema: CERTIFY_SCHEMA.into(),
            direct_bound: engine.direct_bound(),
            best: opt.best,
            best_s0: best.s0,
            reports: opt.reports.clone(),
            margins: opt.margins.clone(),
        };
        write_json(Some(&path), &doc)?;
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, mode: SimMode) -> Result<()> {
    let sim = cfg.sim_config()?;
    let block = cfg.simulate_block()?;
    let (coupling, end_to_end) = match mode {
        SimMode::Synchronous | SimMode::Reflection => {
            let geom = cfg.sim_geometry(&sim)?;
            let horizon = sim.schedule.horizon();
            let s0 = block.switch_s0.unwrap_or(horizon - sim.window[1]);
            let sw = match build_switch(&geom, s0) {
                Ok(sw) => Some(sw),
                Err(e @ (Error::Inadmissible { .. } | Error::DegenerateNoise { .. }))
                    if mode == SimMode::Synchronous =>
                {
                    info!("tracking the Euclidean gap only: {e}");
                    None
                }
                Err(e) => return Err(e.into()),
            };
            let res = if mode == SimMode::Synchronous {
                phasecert_core::simulate::run_synchronous(&sim, block.gap, sw.as_ref())?
            } else {
                phasecert_core::simulate::run_reflection(&sim, block.gap, sw.as_ref())?
            };
            let mut table = Table::create(
                csv_path(cfg).as_deref(),
                &[
                    "t",
                    "mean_phi_r",
                    "phi_stderr",
                    "mean_dist",
                    "dist_stderr",
                    "coalesced_fraction",
                ],
            )?;
            for i in 0..res.times.len() {
                table.row(&[
                    num(res.times[i]),
                    num(res.mean_phi_r[i]),
                    num(res.phi_stderr[i]),
                    num(res.mean_dist[i]),
                    num(res.dist_stderr[i]),
                    num(res.coalesced_fraction[i]),
                ])?;
            }
            table.finish()?;
            let (log_growth, log_growth_stderr) = res.log_growth();
            let summary = CouplingSummary {
                initial_gap: block.gap,
                switch_s0: sw.map(|s| s.s0),
                c_rate: sw.map(|s| s.c_rate),
                window_load_integral: sim.window_load_integral()?,
                log_growth,
                log_growth_stderr,
                result: res,
            };
            (Some(summary), None)
        }
        SimMode::EndToEnd => {
            let disc = cfg.discretization()?;
            let run = phasecert_core::simulate::sample_and_w2_1d(&sim, &disc, block.n_samples)?;
            if let Some(w) = &run.warning {
                warn!("{w}");
            }
            let (routed, direct) = match &cfg.budget {
                Some(_) => {
                    let inputs = CertificateInputs {
                        geom: cfg.sim_geometry(&sim)?,
                        disc: disc.clone(),
                        budget: cfg.budget()?,
                        init_w2: run.init_w2,
                        init_wphi: None,
                    };
                    let engine = CertificateEngine::new(&inputs)?;
                    let grid = cfg.switch_grid()?;
                    let routed = match engine.optimize(&grid) {
                        Ok(o) => o.best_report().routed,
                        Err(Error::NoAdmissibleSwitch { .. }) => f64::INFINITY,
                        Err(e) => return Err(e.into()),
                    };
                    (Some(routed), Some(engine.direct_bound()))
                }
                None => (None, None),
            };
            let certificate = routed.zip(direct).map(|(r, d)| r.min(d));
            let mut table = Table::create(
                csv_path(cfg).as_deref(),
                &["w2_hat", "stderr", "n_samples", "init_w2", "routed", "direct"],
            )?;
            let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
            table.row(&[
                num(run.w2_hat),
                num(run.stderr),
                run.n_samples.to_string(),
                num(run.init_w2),
                opt(routed),
                opt(direct),
            ])?;
            table.finish()?;
            let summary = EndToEndSummary {
                within_certificate: certificate.map(|c| run.w2_hat - 3.0 * run.stderr <= c),
                run,
                certificate,
                routed,
                direct,
            };
            (None, Some(summary))
        }
    };
    if let Some(path) = json_path(cfg) {
        let doc = SimulateDoc {
            schema: SIMULATE_SCHEMA.into(),
            mode: mode.as_str().into(),
            seed: sim.seed,
            coupling,
            end_to_end,
        };
        write_json(Some(&path), &doc)?;
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x.ln() - mx;
        sxy += dx * (y.ln() - my);
        sxx += dx * dx;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Switch used by the sharpness family: the configured one, or the identity metric.
fn sharpness_switch(cfg: &RunConfig, s0: Option<f64>) -> Result<SwitchGeometry> {
    match s0 {
        Some(s0) => Ok(build_switch(&cfg.geometry()?, s0)?),
        None => {
            let t = cfg.schedule.horizon();
            Ok(SwitchGeometry::from_aggregates(t, 0.0, 1.0, 0.0, 0.0, 1.0)?)
        }
    }
}

pub fn sharpness(cfg: &RunConfig) -> Result<()> {
    let block = cfg
        .sharpness
        .as_ref()
        .ok_or_else(|| crate::config::ConfigError("missing `sharpness` block".into()))?;
    let theta = theta_p(block.p)?;
    let sw = sharpness_switch(cfg, block.s0)?;
    let mut table = Table::create(csv_path(cfg).as_deref(), &["r", "w2", "wphi", "moment", "ratio"])?;
    let (mut w2s, mut wphis, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
    for &r in &block.radii {
        let pt = sharpness_pair(r, block.p, &sw)?;
        // the family's p-th moment is exactly one, so the budget is M = mp
        let budget = MomentBudget::new(block.p, pt.mp)?;
        let power =
            (-theta * sw.log_a_slope).exp() * budget.m_bar.powf(1.0 / (2.0 * (block.p - 1.0))) * pt.wphi.powf(theta);
        let ratio = pt.w2 / power;
        table.row(&[num(r), num(pt.w2), num(pt.wphi), num(pt.mp), num(ratio)])?;
        w2s.push((r, pt.w2));
        if r > sw.r_sw {
            wphis.push((r, pt.wphi));
        }
        ratios.push(ratio);
    }
    table.finish()?;
    let slope_w2 = loglog_slope(&w2s).context("sharpness needs at least two distinct radii")?;
    let doc = SharpnessDoc {
        schema: SHARPNESS_SCHEMA.into(),
        p: block.p,
        theta,
        r_sw: sw.r_sw,
        a_slope: sw.a_slope,
        slope_w2,
        slope_wphi: loglog_slope(&wphis),
        ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    info!(slope_w2 = doc.slope_w2, slope_wphi = ?doc.slope_wphi, "fitted slopes");
    if let Some(path) = json_path(cfg) {
        write_json(Some(&path), &doc)?;
    }
    Ok(())
}

/// Checks a config (blocks present) or an output document (schema round trip).
pub fn validate(path: &std::path::Path, overrides: &[String]) -> Result<()> {
    let value = crate::config::read_json(path)?;
    if value.get("schema").is_some() {
        let text = std::fs::read_to_string(path)?;
        let kind =
            validate_document(&text).map_err(|e| crate::config::ConfigError(format!("{}: {e}", path.display())))?;
        println!("{}: valid {kind} document", path.display());
        return Ok(());
    }
    let cfg = RunConfig::load(path, overrides, None)?;
    cfg.geometry()?;
    if cfg.discretization.is_some() {
        cfg.discretization()?;
    }
    if cfg.budget.is_some() {
        cfg.budget()?;
    }
    if cfg.simulate.is_some() {
        cfg.sim_config()?.validate()?;
    }
    println!(
        "{}: valid config (schema_version {})",
        path.display(),
        cfg.schema_version
    );
    for (block, present) in describe(&cfg) {
        println!("  {block}: {}", if present { "present" } else { "absent" });
    }
    Ok(())
}
