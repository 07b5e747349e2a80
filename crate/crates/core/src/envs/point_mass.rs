use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMassParams {
    pub speed: f64,
    pub dt: f64,
    /// Workspace is the square `[-half_extent, half_extent]²`.
    pub half_extent: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            speed: 1.0,
            dt: 0.1,
            half_extent: 5.0,
        }
    }
}

/// Moves a fixed distance along the unit direction of `a`; a zero direction holds.
pub fn point_mass_step(params: &PointMassParams, p: [f64; 2], a: [f64; 2]) -> [f64; 2] {
    let n = a[0].hypot(a[1]);
    if n == 0.0 || !n.is_finite() {
        return p;
    }
    let step = params.speed * params.dt / n;
    let e = params.half_extent;
    [
        (p[0] + step * a[0]).clamp(-e, e),
        (p[1] + step * a[1]).clamp(-e, e),
    ]
}
