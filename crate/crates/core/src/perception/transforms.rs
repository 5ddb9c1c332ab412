use crate::env::{sin_cos_deg, AgentState};

/// A stored pose in world units: meters and degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseRow {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub beta: f64,
}

impl PoseRow {
    pub fn of(s: &AgentState) -> Self {
        PoseRow {
            x: s.x_m(),
            y: s.y_m(),
            theta: s.theta_deg(),
            beta: s.beta_deg(),
        }
    }
}

/// `(x̃, ỹ)`: the offset from `current` expressed in its heading-aligned frame.
pub fn egocentric_position(x: f64, y: f64, current: &PoseRow) -> (f64, f64) {
    let (dx, dy) = (x - current.x, y - current.y);
    let (s, c) = sin_cos_deg(current.theta);
    (dx * c + dy * s, -dx * s + dy * c)
}

/// `[x̃, ỹ, sin(θ−θc), cos(θ−θc), sin(β−βc), cos(β−βc)]`.
pub fn egocentric_row(row: &PoseRow, current: &PoseRow) -> [f64; 6] {
    let (x, y) = egocentric_position(row.x, row.y, current);
    let (ts, tc) = sin_cos_deg(row.theta - current.theta);
    let (bs, bc) = sin_cos_deg(row.beta - current.beta);
    [x, y, ts, tc, bs, bc]
}

/// Row-wise [`egocentric_row`], flattened to `D × 6`.
pub fn egocentric_transform(rows: &[PoseRow], current: &PoseRow) -> Vec<f64> {
    rows.iter().flat_map(|r| egocentric_row(r, current)).collect()
}

/// `(x̃, ỹ) → (ρ, sin φ, cos φ)`; the origin maps to `(0, 0, 1)`.
pub fn polar(x: f64, y: f64) -> [f64; 3] {
    let rho = x.hypot(y);
    if rho == 0.0 {
        [0.0, 0.0, 1.0]
    } else {
        [rho, y / rho, x / rho]
    }
}

/// Polarises the first two columns of each `width`-wide row and passes the
/// remaining columns through, giving rows of `width + 1`.
pub fn polarize(rows: &[f64], width: usize) -> Vec<f64> {
    assert!(width >= 2 && rows.len().is_multiple_of(width), "polarize: bad row width {width}");
    let mut out = Vec::with_capacity(rows.len() / width * (width + 1));
    for r in rows.chunks_exact(width) {
        out.extend_from_slice(&polar(r[0], r[1]));
        out.extend_from_slice(&r[2..]);
    }
    out
}
