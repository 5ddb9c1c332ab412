//! Synthetic detector and egocentric occupancy grid.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

use super::geometry::{to_agent_frame, Heading, Pitch, CELL_METERS};
use super::plan::{FloorPlan, Height, ObjectInstance};

/// Camera height above the floor in meters; mid-height objects sit level with it.
pub const CAMERA_HEIGHT_M: f64 = 0.9;
/// Side length of the egocentric grid.
pub const GRID_SIZE: usize = 7;
const BOX_SCALE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentState {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
    pub pitch: Pitch,
}

impl AgentState {
    pub fn new(x: i32, y: i32, heading: Heading, pitch: Pitch) -> Self {
        AgentState { x, y, heading, pitch }
    }

    pub fn cell(&self) -> (i32, i32) {
        (self.x, self.y)
    }

    pub fn x_m(&self) -> f64 {
        self.x as f64 * CELL_METERS
    }

    pub fn y_m(&self) -> f64 {
        self.y as f64 * CELL_METERS
    }

    pub fn theta_deg(&self) -> f64 {
        self.heading.degrees() as f64
    }

    pub fn beta_deg(&self) -> f64 {
        self.pitch.degrees() as f64
    }

    /// Euclidean distance in meters to the centre of a cell.
    pub fn distance_m(&self, cell: (i32, i32)) -> f64 {
        let (dx, dy) = ((cell.0 - self.x) as f64, (cell.1 - self.y) as f64);
        (dx * dx + dy * dy).sqrt() * CELL_METERS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    /// `[x1, y1, x2, y2]` in normalised image coordinates.
    pub bbox: [f64; 4],
    pub confidence: f64,
    /// World cell of the detected instance; only the occupancy grid reads it.
    pub cell: (i32, i32),
}

pub fn pitch_sees(pitch: Pitch, height: Height) -> bool {
    matches!(
        (pitch, height),
        (Pitch::Down, Height::Low) | (Pitch::Level, Height::Mid) | (Pitch::Up, Height::High)
    )
}

/// Whether a cell offset `(forward, left)` lies inside the view cone.
pub fn in_view_cone(forward: i32, left: i32, range: i32) -> bool {
    forward >= left.abs() && forward * forward + left * left <= range * range
}

/// Noise-free detection of `obj` from `state`, or `None` when it is out of
/// range, outside ±45°, occluded, or at a height the current pitch misses.
pub fn visibility(plan: &FloorPlan, state: &AgentState, obj: &ObjectInstance, range: i32) -> Option<Detection> {
    let (f, l) = to_agent_frame(obj.x - state.x, obj.y - state.y, state.heading);
    if (f, l) == (0, 0) || !in_view_cone(f, l, range) || !pitch_sees(state.pitch, obj.height) {
        return None;
    }
    if !plan.line_of_sight(state.cell(), (obj.x, obj.y)) {
        return None;
    }
    let dist = ((f * f + l * l) as f64).sqrt();
    let azimuth = (-l as f64).atan2(f as f64).to_degrees();
    let size = (BOX_SCALE / dist).clamp(0.05, 0.6);
    let cx = 0.5 + azimuth / 90.0;
    let elevation = (obj.height.meters() - CAMERA_HEIGHT_M)
        .atan2(dist * CELL_METERS)
        .to_degrees();
    let cy = (0.5 - (elevation - state.beta_deg()) / 90.0).clamp(0.0, 1.0);
    let bbox = [
        (cx - size / 2.0).max(0.0),
        (cy - size / 2.0).max(0.0),
        (cx + size / 2.0).min(1.0),
        (cy + size / 2.0).min(1.0),
    ];
    Some(Detection {
        class_id: obj.class_id,
        bbox,
        confidence: (1.0 - dist / range as f64).clamp(0.1, 1.0),
        cell: (obj.x, obj.y),
    })
}

/// Plane of the egocentric grid that carries presence of `class_id`.
pub fn class_plane(class_id: usize, planes: usize) -> usize {
    class_id % planes
}

/// Egocentric `[channels × 7 × 7]` grid. Row 6 holds the agent, rows above it
/// are further ahead, column 3 is straight ahead with columns to the right
/// increasing. Channel 0 marks visible obstacles, channel 1 holds
/// `1 − d/(range+1)` on visible cells, and the rest carry detected objects
/// hashed by class.
pub fn local_grid(plan: &FloorPlan, state: &AgentState, detections: &[Detection], channels: usize, range: i32) -> Tensor {
    let n = GRID_SIZE;
    let mut grid = Tensor::zeros(&[channels, n, n]);
    let data = grid.data_mut();
    let (fx, fy) = state.heading.step();
    let (rx, ry) = (fy, -fx);
    let planes = channels - 2;
    for r in 0..n {
        for c in 0..n {
            let f = (n - 1 - r) as i32;
            let right = c as i32 - (n / 2) as i32;
            if !in_view_cone(f, right, range) {
                continue;
            }
            let cell = (state.x + f * fx + right * rx, state.y + f * fy + right * ry);
            if !plan.in_bounds(cell.0, cell.1) || !plan.line_of_sight(state.cell(), cell) {
                continue;
            }
            let d = ((f * f + right * right) as f64).sqrt();
            if !plan.is_free(cell.0, cell.1) {
                data[r * n + c] = 1.0;
            }
            data[n * n + r * n + c] = 1.0 - d / (range as f64 + 1.0);
            for det in detections.iter().filter(|d| d.cell == cell) {
                data[(2 + class_plane(det.class_id, planes)) * n * n + r * n + c] = 1.0;
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::plan::{Cell, Split};

    fn room() -> FloorPlan {
        let (w, h) = (11, 11);
        let mut cells = vec![Cell::Free; w * h];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    cells[y * w + x] = Cell::Obstacle;
                }
            }
        }
        FloorPlan::new("t", Split::Test, w, h, cells).unwrap()
    }

    fn obj(x: i32, y: i32, height: Height) -> ObjectInstance {
        ObjectInstance { class_id: 2, x, y, height }
    }

    #[test]
    fn straight_ahead_is_centred() {
        let mut p = room();
        p.set_cell(6, 5, Cell::Obstacle);
        let s = AgentState::new(5, 5, Heading::EAST, Pitch::Level);
        let d = visibility(&p, &s, &obj(6, 5, Height::Mid), 5).unwrap();
        assert_eq!((d.bbox[0] + d.bbox[2]) / 2.0, 0.5);
        assert_eq!((d.bbox[1] + d.bbox[3]) / 2.0, 0.5);
        assert_eq!(d.confidence, 0.8);
        assert!(d.bbox[0] < d.bbox[2] && d.bbox[1] < d.bbox[3]);
    }

    #[test]
    fn behind_and_wrong_pitch_unseen() {
        let p = room();
        let s = AgentState::new(5, 5, Heading::EAST, Pitch::Level);
        assert!(visibility(&p, &s, &obj(3, 5, Height::Mid), 5).is_none());
        assert!(visibility(&p, &s, &obj(7, 5, Height::Low), 5).is_none());
        let down = AgentState { pitch: Pitch::Down, ..s };
        assert!(visibility(&p, &down, &obj(7, 5, Height::Low), 5).is_some());
    }

    #[test]
    fn occluded_object_unseen() {
        let mut p = room();
        p.set_cell(6, 5, Cell::Obstacle);
        let s = AgentState::new(4, 5, Heading::EAST, Pitch::Level);
        assert!(visibility(&p, &s, &obj(8, 5, Height::Mid), 5).is_none());
    }

    #[test]
    fn cone_edges_and_range() {
        let p = room();
        let s = AgentState::new(2, 5, Heading::EAST, Pitch::Level);
        // 45° to the left sits at the left image edge
        let d = visibility(&p, &s, &obj(4, 7, Height::Mid), 5).unwrap();
        assert!((d.bbox[0] - 0.0).abs() < 1e-12);
        assert!(visibility(&p, &s, &obj(4, 8, Height::Mid), 5).is_none());
        assert!(visibility(&p, &s, &obj(7, 5, Height::Mid), 5).is_some());
        assert!(visibility(&p, &s, &obj(8, 5, Height::Mid), 5).is_none());
    }

    #[test]
    fn grid_marks_walls_ahead() {
        let p = room();
        let s = AgentState::new(8, 5, Heading::EAST, Pitch::Level);
        let g = local_grid(&p, &s, &[], 8, 5);
        // wall at x = 10 is two cells ahead: row 4, centre column
        assert_eq!(g.at(&[0, 4, 3]), 1.0);
        assert_eq!(g.at(&[0, 5, 3]), 0.0);
        assert_eq!(g.at(&[1, 6, 3]), 1.0);
        // cells beyond the wall stay unseen
        assert_eq!(g.at(&[1, 3, 3]), 0.0);
    }
}
