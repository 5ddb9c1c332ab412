use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::traversed_cells;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Obstacle,
}

/// Vertical placement of an object; each is visible at exactly one pitch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Height {
    Low,
    Mid,
    High,
}

impl Height {
    pub const ALL: [Height; 3] = [Height::Low, Height::Mid, Height::High];

    /// Height of the object centre in meters.
    pub fn meters(self) -> f64 {
        match self {
            Height::Low => 0.3,
            Height::Mid => 0.9,
            Height::High => 1.5,
        }
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Height::Low => "low",
            Height::Mid => "mid",
            Height::High => "high",
        })
    }
}

impl FromStr for Height {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "low" => Ok(Height::Low),
            "mid" => Ok(Height::Mid),
            "high" => Ok(Height::High),
            other => Err(format!("unknown height `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObjectInstance {
    pub class_id: usize,
    pub x: i32,
    pub y: i32,
    pub height: Height,
}

/// A rectangular room. Cell `(x, y)` is stored at `y * width + x`; objects
/// sit on obstacle cells that border free space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloorPlan {
    pub id: String,
    pub split: Split,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    pub objects: Vec<ObjectInstance>,
}

impl FloorPlan {
    pub fn new(id: impl Into<String>, split: Split, width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Validation(format!(
                "plan grid has {} cells, expected {width}×{height}",
                cells.len()
            )));
        }
        Ok(FloorPlan {
            id: id.into(),
            split,
            width,
            height,
            cells,
            objects: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Out-of-bounds positions read as obstacles.
    pub fn cell(&self, x: i32, y: i32) -> Cell {
        if self.in_bounds(x, y) {
            self.cells[y as usize * self.width + x as usize]
        } else {
            Cell::Obstacle
        }
    }

    pub fn is_free(&self, x: i32, y: i32) -> bool {
        self.cell(x, y) == Cell::Free
    }

    pub fn set_cell(&mut self, x: i32, y: i32, c: Cell) {
        assert!(self.in_bounds(x, y), "set_cell({x}, {y}) out of bounds");
        self.cells[y as usize * self.width + x as usize] = c;
    }

    pub fn free_cells(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if self.is_free(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn instances_of(&self, class_id: usize) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.class_id == class_id)
    }

    pub fn has_class(&self, class_id: usize) -> bool {
        self.instances_of(class_id).next().is_some()
    }

    /// True when every cell strictly between the two cell centres is free.
    pub fn line_of_sight(&self, from: (i32, i32), to: (i32, i32)) -> bool {
        traversed_cells(from, to).into_iter().all(|(x, y)| self.is_free(x, y))
    }

    /// Structural checks: obstacle boundary, connected free space, and every
    /// object on an in-bounds obstacle cell with a free 4-neighbour.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width as i32, self.height as i32);
        for y in 0..h {
            for x in 0..w {
                let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
                if border && self.is_free(x, y) {
                    return Err(Error::Validation(format!("plan {}: boundary cell ({x}, {y}) is free", self.id)));
                }
            }
        }
        let free = self.free_cells();
        if free.is_empty() {
            return Err(Error::Validation(format!("plan {} has no free cells", self.id)));
        }
        if flood_fill_count(self, free[0]) != free.len() {
            return Err(Error::Validation(format!("plan {}: free space is disconnected", self.id)));
        }
        for o in &self.objects {
            if !self.in_bounds(o.x, o.y) || self.is_free(o.x, o.y) {
                return Err(Error::Validation(format!(
                    "plan {}: object of class {} at ({}, {}) is not on an obstacle cell",
                    self.id, o.class_id, o.x, o.y
                )));
            }
            if !NEIGHBOURS.iter().any(|(dx, dy)| self.is_free(o.x + dx, o.y + dy)) {
                return Err(Error::Validation(format!(
                    "plan {}: object at ({}, {}) has no free neighbour",
                    self.id, o.x, o.y
                )));
            }
        }
        Ok(())
    }

    /// The same room turned a quarter counter-clockwise: `(x, y)` moves to
    /// `(height − 1 − y, x)`.
    pub fn rotated_ccw(&self) -> FloorPlan {
        let (w, h) = (self.width, self.height);
        let mut cells = vec![Cell::Obstacle; w * h];
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                let (nx, ny) = rotate_cell_ccw(x, y, h);
                cells[ny as usize * h + nx as usize] = self.cell(x, y);
            }
        }
        let objects = self
            .objects
            .iter()
            .map(|o| {
                let (x, y) = rotate_cell_ccw(o.x, o.y, h);
                ObjectInstance { x, y, ..*o }
            })
            .collect();
        FloorPlan {
            id: self.id.clone(),
            split: self.split,
            width: h,
            height: w,
            cells,
            objects,
        }
    }
}

pub(crate) const NEIGHBOURS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Cell mapping used by [`FloorPlan::rotated_ccw`] for a plan of the given height.
pub fn rotate_cell_ccw(x: i32, y: i32, plan_height: usize) -> (i32, i32) {
    (plan_height as i32 - 1 - y, x)
}

/// Number of free cells reachable from `start` by 4-connected moves.
pub fn flood_fill_count(plan: &FloorPlan, start: (i32, i32)) -> usize {
    if !plan.is_free(start.0, start.1) {
        return 0;
    }
    let mut seen = vec![false; plan.width * plan.height];
    let mut stack = vec![start];
    seen[start.1 as usize * plan.width + start.0 as usize] = true;
    let mut count = 0;
    while let Some((x, y)) = stack.pop() {
        count += 1;
        for (dx, dy) in NEIGHBOURS {
            let (nx, ny) = (x + dx, y + dy);
            if plan.is_free(nx, ny) {
                let k = ny as usize * plan.width + nx as usize;
                if !seen[k] {
                    seen[k] = true;
                    stack.push((nx, ny));
                }
            }
        }
    }
    count
}
