//! Fixtures shared by the benchmarks.

use phasecert_core::certificate::DefectModel;
use phasecert_core::simulate::{InitLaw, SimConfig, TargetModel};
use phasecert_core::{
    CertificateInputs, DiscreteMeasure, DiscretizationSpec, MomentBudget, QuadratureConfig, RadialGeometry,
    ScheduleSpec, ScoreErrorEnvelope, ScoreErrorField, WeakLogParams,
};

/// VP geometry with a nonconvex defect and a small score error.
pub fn vp_geometry() -> RadialGeometry {
    RadialGeometry::new(
        ScheduleSpec::vp(1.0, 8.0).expect("valid schedule"),
        WeakLogParams::new(0.6, 2.0).expect("valid weak parameters"),
        ScoreErrorEnvelope::constant(0.0, 1e-3),
        QuadratureConfig::default(),
    )
    .expect("valid geometry")
}

pub fn certificate_inputs(steps: usize) -> CertificateInputs {
    let geom = vp_geometry();
    let disc = DiscretizationSpec::uniform(geom.horizon(), steps, DefectModel::PowerLaw { c_sch: 1.0, q: 1.5 })
        .expect("valid grid");
    CertificateInputs {
        geom,
        disc,
        budget: MomentBudget::new(4.0, 6.0).expect("valid budget"),
        init_w2: 1.0,
        init_wphi: None,
    }
}

/// Two equal-weight point clouds in the plane with `n` atoms each.
pub fn point_clouds(n: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let cloud = |shift: f64| {
        (0..n)
            .map(|i| {
                let t = i as f64 * 2.399_963;
                vec![t.cos() * (1.0 + i as f64) + shift, t.sin() * (1.0 + i as f64)]
            })
            .collect::<Vec<_>>()
    };
    (
        DiscreteMeasure::uniform(cloud(0.0)).expect("valid measure"),
        DiscreteMeasure::uniform(cloud(0.7)).expect("valid measure"),
    )
}

/// Short Gaussian run: 500 paths over a unit window.
pub fn short_sim() -> SimConfig {
    SimConfig {
        target: TargetModel::Gaussian1D { alpha0: 1.0 },
        error_field: ScoreErrorField::None,
        schedule: ScheduleSpec::vp(1.0, 4.0).expect("valid schedule"),
        step_h: 1e-3,
        n_paths: 500,
        seed: 1,
        coalesce_eps: 1e-6,
        window: [0.0, 1.0],
        init: InitLaw::Auto,
    }
}
