//! Window extrema: a uniform scan followed by golden-section refinement.
//!
//! Exact for monotone and constant functions (the scan contains both endpoints).
//! For oscillatory tabulated data the result is only as good as the scan
//! resolution, since refinement is local to the best scan cell.

use crate::error::Result;

/// Number of scan points on the window, endpoints included.
pub const SCAN_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

impl Extremum {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Extremum::Min => a < b,
            Extremum::Max => a > b,
        }
    }
}

/// Location and value of a window extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowExtremum {
    pub at: f64,
    pub value: f64,
}

/// Extremum of `f` over `[lo, hi]`.
pub fn window_extremum<F>(mut f: F, lo: f64, hi: f64, kind: Extremum) -> Result<WindowExtremum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if hi <= lo {
        let value = f(lo)?;
        return Ok(WindowExtremum { at: lo, value });
    }
    let n = SCAN_POINTS;
    let step = (hi - lo) / (n - 1) as f64;
    let node = |i: usize| if i == n - 1 { hi } else { lo + step * i as f64 };

    let mut best_i = 0;
    let mut best = f(lo)?;
    for i in 1..n {
        let v = f(node(i))?;
        if kind.better(v, best) {
            best = v;
            best_i = i;
        }
    }

    let a = node(best_i.saturating_sub(1));
    let b = node((best_i + 1).min(n - 1));
    let refined = golden_section(&mut f, a, b, kind)?;
    if kind.better(refined.value, best) {
        Ok(refined)
    } else {
        Ok(WindowExtremum {
            at: node(best_i),
            value: best,
        })
    }
}

fn golden_section<F>(f: &mut F, mut a: f64, mut b: f64, kind: Extremum) -> Result<WindowExtremum>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let tol = 1e-12 * (b - a).abs().max(f64::MIN_POSITIVE);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if kind.better(fc, fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if kind.better(fc, fd) {
        WindowExtremum { at: c, value: fc }
    } else {
        WindowExtremum { at: d, value: fd }
    })
}
