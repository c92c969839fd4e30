//! CSV and JSON emission plus the typed JSON documents the `validate` command checks.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use phasecert_core::{CertificateReport, CouplingResult, EndToEnd};
use serde::{Deserialize, Serialize};

pub const ADMISSIBLE_SCHEMA: &str = "phasecert.admissible/1";
pub const CERTIFY_SCHEMA: &str = "phasecert.certify/1";
pub const SIMULATE_SCHEMA: &str = "phasecert.simulate/1";
pub const SHARPNESS_SCHEMA: &str = "phasecert.sharpness/1";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV sink on a file or stdout.
pub struct Table {
    writer: csv::Writer<Box<dyn Write>>,
}

impl Table {
    pub fn create(path: Option<&Path>, header: &[&str]) -> Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
            None => Box::new(io::stdout()),
        };
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Pretty JSON to `path`, or to stdout when no path is configured.
pub fn write_json<T: Serialize>(path: Option<&Path>, doc: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleDoc {
    pub schema: String,
    pub horizon: f64,
    /// `(s0, window margin)` for every requested switch.
    pub margins: Vec<(f64, f64)>,
    pub admissible: Vec<f64>,
    pub s_min_bracket: Option<(f64, f64)>,
    /// Closed-form threshold, present for VP schedules with constant envelopes.
    pub vp_threshold: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyDoc {
    pub schema: String,
    pub direct_bound: f64,
    /// Index into `reports` of the smallest routed bound.
    pub best: usize,
    pub best_s0: f64,
    pub reports: Vec<CertificateReport>,
    pub margins: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDoc {
    pub schema: String,
    pub mode: String,
    pub seed: u64,
    #[serde(default)]
    pub coupling: Option<CouplingSummary>,
    #[serde(default)]
    pub end_to_end: Option<EndToEndSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSummary {
    pub initial_gap: f64,
    /// Switch whose metric was tracked, with its contraction rate `c`.
    pub switch_s0: Option<f64>,
    pub c_rate: Option<f64>,
    /// `int b` over the window: the synchronous growth budget.
    pub window_load_integral: f64,
    pub log_growth: f64,
    pub log_growth_stderr: f64,
    pub result: CouplingResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndToEndSummary {
    pub run: EndToEnd,
    /// `min(routed, direct)`; present when the config carries a budget.
    pub certificate: Option<f64>,
    pub routed: Option<f64>,
    pub direct: Option<f64>,
    /// `w2_hat - 3 stderr <= certificate`.
    pub within_certificate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessDoc {
    pub schema: String,
    pub p: f64,
    pub theta: f64,
    pub r_sw: f64,
    pub a_slope: f64,
    /// Least-squares log-log slopes; `W_phi` uses only radii beyond `R_sw`.
    pub slope_w2: f64,
    pub slope_wphi: Option<f64>,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// Parses `text` as whichever document its `schema` tag names.
pub fn validate_document(text: &str) -> Result<&'static str> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let schema = value
        .get("schema")
        .and_then(|s| s.as_str())
        .unwrap_or_default()
        .to_string();
    let kind = match schema.as_str() {
        ADMISSIBLE_SCHEMA => {
            serde_json::from_str::<AdmissibleDoc>(text)?;
            ADMISSIBLE_SCHEMA
        }
        CERTIFY_SCHEMA => {
            serde_json::from_str::<CertifyDoc>(text)?;
            CERTIFY_SCHEMA
        }
        SIMULATE_SCHEMA => {
            serde_json::from_str::<SimulateDoc>(text)?;
            SIMULATE_SCHEMA
        }
        SHARPNESS_SCHEMA => {
            serde_json::from_str::<SharpnessDoc>(text)?;
            SHARPNESS_SCHEMA
        }
        other => anyhow::bail!("unknown output schema `{other}`"),
    };
    Ok(kind)
}
