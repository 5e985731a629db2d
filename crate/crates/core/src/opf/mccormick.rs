use crate::error::{Error, Result};

/// Half-space `cx·x + cy·y + cw·w ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub cx: f64,
    pub cy: f64,
    pub cw: f64,
    pub rhs: f64,
}

impl Plane {
    pub fn slack(&self, x: f64, y: f64, w: f64) -> f64 {
        self.rhs - (self.cx * x + self.cy * y + self.cw * w)
    }
}

/// Convex hull of `w = x·y` over the box `[xl, xu] × [yl, yu]`.
///
/// Order: two under-estimators then two over-estimators.
pub fn mccormick_planes(xl: f64, xu: f64, yl: f64, yu: f64) -> Result<[Plane; 4]> {
    if ![xl, xu, yl, yu].iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(format!(
            "unbounded interval in bilinear envelope: x in [{xl}, {xu}], y in [{yl}, {yu}]"
        )));
    }
    if xl > xu || yl > yu {
        return Err(Error::Validation(format!(
            "empty interval in bilinear envelope: x in [{xl}, {xu}], y in [{yl}, {yu}]"
        )));
    }
    Ok([
        // w ≥ xl·y + yl·x − xl·yl
        Plane {
            cx: yl,
            cy: xl,
            cw: -1.0,
            rhs: xl * yl,
        },
        // w ≥ xu·y + yu·x − xu·yu
        Plane {
            cx: yu,
            cy: xu,
            cw: -1.0,
            rhs: xu * yu,
        },
        // w ≤ xu·y + yl·x − xu·yl
        Plane {
            cx: -yl,
            cy: -xu,
            cw: 1.0,
            rhs: -xu * yl,
        },
        // w ≤ xl·y + yu·x − xl·yu
        Plane {
            cx: -yu,
            cy: -xl,
            cw: 1.0,
            rhs: -xl * yu,
        },
    ])
}

/// Range of `w` allowed by the envelope at a fixed `(x, y)`.
pub fn envelope_range(planes: &[Plane; 4], x: f64, y: f64) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for p in planes {
        let bound = (p.rhs - p.cx * x - p.cy * y) / p.cw;
        if p.cw < 0.0 {
            lo = lo.max(bound);
        } else {
            hi = hi.min(bound);
        }
    }
    (lo, hi)
}
