use crate::env::{AgentState, StepResult};
use crate::error::{Error, Result};
use crate::nn::RngStream;
use crate::tensor::Tensor;

use super::memory::Memories;
use super::transforms::{egocentric_position, egocentric_row, polar, PoseRow};

/// Width of a raw target-sighting row: bbox, pose, confidence.
pub const NT_RAW: usize = 9;
/// Width after egocentring the pose columns.
pub const NT_FEATURES: usize = 11;
/// Egocentric pose with polar position.
pub const ET_FEATURES: usize = 7;
pub const OT_FEATURES: usize = 3;

/// Fixed random appearance vector per class.
#[derive(Clone, Debug, PartialEq)]
pub struct AppearanceTable {
    dim: usize,
    rows: Vec<f64>,
}

impl AppearanceTable {
    pub fn seeded(n_classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let rows = (0..n_classes * dim).map(|_| rng.range(-1.0, 1.0)).collect();
        AppearanceTable { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.rows.len() / self.dim.max(1)
    }

    pub fn row(&self, class_id: usize) -> &[f64] {
        &self.rows[class_id * self.dim..(class_id + 1) * self.dim]
    }

    /// Columns per object row: appearance, bbox, confidence, target flag.
    pub fn d_obj(&self) -> usize {
        self.dim + 6
    }
}

/// The five per-step inputs. Memory matrices stay in world units and are
/// egocentred when an encoder reads them.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinkingInputs {
    /// `C × 7 × 7` egocentric grid.
    pub it: Tensor,
    /// `N × d_obj` object rows; all-zero for classes not detected.
    pub st: Tensor,
    /// `[x1, y1, x2, y2, x, y, θ, β, confidence]` per target sighting.
    pub nt: Vec<[f64; NT_RAW]>,
    /// `[x, y, θ, β]` per visited pose.
    pub et: Vec<[f64; 4]>,
    /// `[x, y]` per blocked cell, meters.
    pub ot: Vec<[f64; 2]>,
}

/// Assembles the inputs for the current step; `memories` must already hold it.
pub fn build_inputs(obs: &StepResult, target: usize, memories: &Memories, table: &AppearanceTable) -> ThinkingInputs {
    let n = table.n_classes();
    let d = table.d_obj();
    let mut st = Tensor::zeros(&[n, d]);
    let data = st.data_mut();
    for det in &obs.detections {
        if det.class_id >= n {
            continue;
        }
        let row = &mut data[det.class_id * d..(det.class_id + 1) * d];
        let dim = table.dim();
        // keep the most confident instance per class
        if row[dim + 4] >= det.confidence && row[dim + 4] > 0.0 {
            continue;
        }
        row[..dim].copy_from_slice(table.row(det.class_id));
        row[dim..dim + 4].copy_from_slice(&det.bbox);
        row[dim + 4] = det.confidence;
        row[dim + 5] = if det.class_id == target { 1.0 } else { 0.0 };
    }
    let nt = memories
        .tomg
        .iter()
        .map(|node| {
            let p = PoseRow::of(&node.state);
            let b = node.bbox;
            [b[0], b[1], b[2], b[3], p.x, p.y, p.theta, p.beta, node.confidence]
        })
        .collect();
    let et = memories
        .history
        .iter()
        .map(|s| {
            let p = PoseRow::of(s);
            [p.x, p.y, p.theta, p.beta]
        })
        .collect();
    let ot = memories
        .obstacles
        .iter()
        .map(|&(x, y)| [x as f64 * crate::env::CELL_METERS, y as f64 * crate::env::CELL_METERS])
        .collect();
    ThinkingInputs {
        it: obs.local_grid.clone(),
        st,
        nt,
        et,
        ot,
    }
}

/// `D_n × 11` egocentred sighting rows, or `None` when nothing was seen yet.
pub fn nt_features(nt: &[[f64; NT_RAW]], current: &AgentState) -> Option<Tensor> {
    if nt.is_empty() {
        return None;
    }
    let cur = PoseRow::of(current);
    let mut data = Vec::with_capacity(nt.len() * NT_FEATURES);
    for r in nt {
        data.extend_from_slice(&r[..4]);
        let pose = PoseRow {
            x: r[4],
            y: r[5],
            theta: r[6],
            beta: r[7],
        };
        data.extend_from_slice(&egocentric_row(&pose, &cur));
        data.push(r[8]);
    }
    Some(Tensor::matrix(nt.len(), NT_FEATURES, data).expect("row width fixed"))
}

/// `D_e × 7`: polar position plus egocentric angle features per visited pose.
pub fn et_features(et: &[[f64; 4]], current: &AgentState) -> Result<Tensor> {
    if et.is_empty() {
        return Err(Error::Contract("exploration history is empty".into()));
    }
    let cur = PoseRow::of(current);
    let mut data = Vec::with_capacity(et.len() * ET_FEATURES);
    for r in et {
        let e = egocentric_row(
            &PoseRow {
                x: r[0],
                y: r[1],
                theta: r[2],
                beta: r[3],
            },
            &cur,
        );
        data.extend_from_slice(&polar(e[0], e[1]));
        data.extend_from_slice(&e[2..]);
    }
    Tensor::matrix(et.len(), ET_FEATURES, data)
}

/// `D_o × 3` polar obstacle positions, or `None` with no recorded collisions.
pub fn ot_features(ot: &[[f64; 2]], current: &AgentState) -> Option<Tensor> {
    if ot.is_empty() {
        return None;
    }
    let cur = PoseRow::of(current);
    let data = ot
        .iter()
        .flat_map(|r| {
            let (x, y) = egocentric_position(r[0], r[1], &cur);
            polar(x, y)
        })
        .collect();
    Some(Tensor::matrix(ot.len(), OT_FEATURES, data).expect("row width fixed"))
}
