//! Adaptive Simpson quadrature with panel splitting at caller-supplied breakpoints.
//!
//! The global tolerance `max(abs_tol, rel_tol * |I|)` is distributed over
//! subintervals in proportion to their length. Integrands are expected to be
//! smooth inside each panel; piecewise-linear data should pass its knots as
//! breakpoints so no panel straddles a kink.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 1 << 20,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.abs_tol > 0.0 && self.abs_tol.is_finite(), || {
            format!("abs_tol must be positive, got {}", self.abs_tol)
        })?;
        ensure(self.rel_tol > 0.0 && self.rel_tol.is_finite(), || {
            format!("rel_tol must be positive, got {}", self.rel_tol)
        })?;
        ensure(self.max_subdivisions > 0, || "max_subdivisions must be positive".into())
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn eval<F: FnMut(f64) -> f64>(f: &mut F, x: f64, partial: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::DivergentIntegral { at: x, partial })
    }
}

/// Integrate `f` over `[a, b]`, splitting panels at every breakpoint strictly inside.
pub fn integrate_detailed<F>(mut f: F, a: f64, b: f64, breaks: &[f64], cfg: &QuadratureConfig) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    ensure(a.is_finite() && b.is_finite(), || {
        format!("integration bounds must be finite, got [{a}, {b}]")
    })?;
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    if a > b {
        let r = integrate_detailed(f, b, a, breaks, cfg)?;
        return Ok(Integral { value: -r.value, ..r });
    }

    let mut nodes = Vec::with_capacity(breaks.len() + 2);
    nodes.push(a);
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    nodes.extend(inner);
    nodes.push(b);

    let total = b - a;
    let mut stack = Vec::with_capacity(64);
    let mut rough = 0.0;
    // Seed in reverse so the stack pops panels left to right.
    let mut seeds = Vec::with_capacity(nodes.len() - 1);
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let fa = eval(&mut f, lo, 0.0)?;
        let fm = eval(&mut f, mid, 0.0)?;
        let fb = eval(&mut f, hi, 0.0)?;
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        rough += whole;
        seeds.push(Segment {
            a: lo,
            b: hi,
            fa,
            fm,
            fb,
            whole,
        });
    }
    stack.extend(seeds.into_iter().rev());

    let tol = cfg.abs_tol.max(cfg.rel_tol * rough.abs());
    let mut acc = Accum::default();
    let mut err = 0.0;
    let mut unresolved = 0.0;
    let mut subdivisions = 0usize;

    while let Some(seg) = stack.pop() {
        let m = 0.5 * (seg.a + seg.b);
        let lm = 0.5 * (seg.a + m);
        let rm = 0.5 * (m + seg.b);
        let flm = eval(&mut f, lm, acc.value())?;
        let frm = eval(&mut f, rm, acc.value())?;
        let left = (m - seg.a) / 6.0 * (seg.fa + 4.0 * flm + seg.fm);
        let right = (seg.b - m) / 6.0 * (seg.fm + 4.0 * frm + seg.fb);
        let delta = left + right - seg.whole;
        let local_tol = tol * (seg.b - seg.a) / total;
        let width_floor = 64.0 * f64::EPSILON * seg.a.abs().max(seg.b.abs()).max(1e-300);
        let converged = delta.abs() <= 15.0 * local_tol;
        if converged || (seg.b - seg.a) <= width_floor {
            if !converged {
                unresolved += delta.abs() / 15.0;
            }
            acc.add(left + right + delta / 15.0);
            err += delta.abs() / 15.0;
            continue;
        }
        subdivisions += 1;
        if subdivisions > cfg.max_subdivisions {
            return Err(Error::QuadratureFailed {
                a,
                b,
                estimate: acc.value() + left + right,
                residual: err + delta.abs(),
                subdivisions,
            });
        }
        stack.push(Segment {
            a: m,
            b: seg.b,
            fa: seg.fm,
            fm: frm,
            fb: seg.fb,
            whole: right,
        });
        stack.push(Segment {
            a: seg.a,
            b: m,
            fa: seg.fa,
            fm: flm,
            fb: seg.fm,
            whole: left,
        });
    }

    if unresolved > tol {
        return Err(Error::QuadratureFailed {
            a,
            b,
            estimate: acc.value(),
            residual: unresolved,
            subdivisions,
        });
    }
    Ok(Integral {
        value: acc.value(),
        error: err,
        subdivisions,
    })
}

/// Integrate `f` over `[a, b]` with breakpoints; returns only the value.
pub fn integrate_breaks<F>(f: F, a: f64, b: f64, breaks: &[f64], cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_detailed(f, a, b, breaks, cfg).map(|r| r.value)
}

pub fn integrate<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_breaks(f, a, b, &[], cfg)
}
