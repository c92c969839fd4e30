//! Routed and direct Wasserstein-2 error certificates for reverse diffusion
//! samplers on weakly log-concave targets.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod error;
pub mod extremum;
pub mod field;
pub mod profile;
pub mod quadrature;
pub mod schedule;
pub mod simulate;
pub mod switchgeom;
pub mod transport;

pub use certificate::{
    compare, optimize_switch, CertificateEngine, CertificateInputs, CertificateReport, DefectModel, DiscretizationSpec,
    Optimized, Winner,
};
pub use error::{Error, Result};
pub use field::ScoreErrorField;
pub use profile::{Envelope, MarginLoad, RadialGeometry, ScoreErrorEnvelope, SmoothedParams, WeakLogParams};
pub use quadrature::QuadratureConfig;
pub use schedule::{ScheduleKind, ScheduleSample, ScheduleSpec};
pub use simulate::{CouplingResult, EndToEnd, InitLaw, SimConfig, TargetModel};
pub use switchgeom::{admissible_set, build_switch, AdmissibleSet, PhiEval, SwitchGeometry};
pub use transport::{DiscreteMeasure, MomentBudget};
