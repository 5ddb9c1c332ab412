use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::geometry::CELL_METERS;
use super::plan::{FloorPlan, NEIGHBOURS};

/// Free cells from which an instance of `class_id` is within
/// `success_distance` meters and in line of sight.
pub fn goal_cells(plan: &FloorPlan, class_id: usize, success_distance: f64) -> Vec<(i32, i32)> {
    let reach = success_distance / CELL_METERS;
    let r = reach.floor() as i32;
    let mut out = Vec::new();
    for y in 0..plan.height() as i32 {
        for x in 0..plan.width() as i32 {
            if !plan.is_free(x, y) {
                continue;
            }
            let hit = plan.instances_of(class_id).any(|o| {
                let (dx, dy) = (o.x - x, o.y - y);
                dx.abs() <= r
                    && dy.abs() <= r
                    && ((dx * dx + dy * dy) as f64).sqrt() <= reach
                    && plan.line_of_sight((x, y), (o.x, o.y))
            });
            if hit {
                out.push((x, y));
            }
        }
    }
    out
}

/// Breadth-first step counts from every free cell to the nearest goal cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    steps: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn from_goals(plan: &FloorPlan, goals: &[(i32, i32)]) -> Self {
        let width = plan.width();
        let mut steps = vec![None; width * plan.height()];
        let mut queue = VecDeque::new();
        for &(x, y) in goals {
            let k = y as usize * width + x as usize;
            if steps[k].is_none() {
                steps[k] = Some(0);
                queue.push_back((x, y));
            }
        }
        while let Some((x, y)) = queue.pop_front() {
            let d = steps[y as usize * width + x as usize].expect("queued cells are labelled");
            for (dx, dy) in NEIGHBOURS {
                let (nx, ny) = (x + dx, y + dy);
                if plan.is_free(nx, ny) {
                    let k = ny as usize * width + nx as usize;
                    if steps[k].is_none() {
                        steps[k] = Some(d + 1);
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        DistanceField { width, steps }
    }

    /// Field towards `class_id`; a class absent from the plan is a task error.
    pub fn to_class(plan: &FloorPlan, class_id: usize, success_distance: f64) -> Result<Self> {
        if !plan.has_class(class_id) {
            return Err(Error::Task(format!("class {class_id} does not occur in plan {}", plan.id)));
        }
        Ok(Self::from_goals(plan, &goal_cells(plan, class_id, success_distance)))
    }

    pub fn steps(&self, cell: (i32, i32)) -> Option<u32> {
        if cell.0 < 0 || cell.1 < 0 || cell.0 as usize >= self.width {
            return None;
        }
        self.steps.get(cell.1 as usize * self.width + cell.0 as usize).copied().flatten()
    }

    pub fn meters(&self, cell: (i32, i32)) -> Option<f64> {
        self.steps(cell).map(|s| s as f64 * CELL_METERS)
    }
}

/// Geodesic distance in meters from `from` to the nearest cell where the
/// target class can be reported found, or `None` when unreachable.
pub fn shortest_path_length(plan: &FloorPlan, from: (i32, i32), class_id: usize, success_distance: f64) -> Result<Option<f64>> {
    Ok(DistanceField::to_class(plan, class_id, success_distance)?.meters(from))
}
