use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::RngStream;

use super::plan::{flood_fill_count, Cell, FloorPlan, Height, ObjectInstance, Split, NEIGHBOURS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub width: usize,
    pub height: usize,
    /// Target fraction of interior cells covered by furniture blocks.
    pub obstacle_density: f64,
    pub n_classes: usize,
    pub instances_per_class: usize,
    /// Longest side of a furniture block in cells.
    pub max_block: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            width: 11,
            height: 11,
            obstacle_density: 0.15,
            n_classes: 22,
            instances_per_class: 1,
            max_block: 3,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 7 || self.height < 7 {
            return Err(Error::Config(format!(
                "plan size {}×{} is below the 7×7 minimum",
                self.width, self.height
            )));
        }
        if !(0.0..0.6).contains(&self.obstacle_density) {
            return Err(Error::Config(format!(
                "obstacle_density {} outside [0, 0.6)",
                self.obstacle_density
            )));
        }
        if self.n_classes == 0 || self.instances_per_class == 0 || self.max_block == 0 {
            return Err(Error::Config(
                "n_classes, instances_per_class and max_block must be positive".into(),
            ));
        }
        Ok(())
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 2000;

/// Builds a walled room with furniture blocks and one or more instances of
/// every class. The same seed and config always give the same plan.
pub fn generate_floorplan(seed: u64, cfg: &GenConfig, id: &str, split: Split) -> Result<FloorPlan> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = RngStream::new(seed);
    let mut cells = vec![Cell::Free; w * h];
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                cells[y * w + x] = Cell::Obstacle;
            }
        }
    }
    let mut plan = FloorPlan::new(id, split, w, h, cells)?;

    let interior = (w - 2) * (h - 2);
    let wanted = (cfg.obstacle_density * interior as f64).round() as usize;
    let mut placed = 0;
    let mut attempts = 0;
    while placed < wanted && attempts < MAX_PLACEMENT_ATTEMPTS {
        attempts += 1;
        let long = 1 + rng.below(cfg.max_block);
        let short = 1 + rng.below(long.min(2));
        let (bw, bh) = if rng.bernoulli(0.5) { (long, short) } else { (short, long) };
        if bw > w - 2 || bh > h - 2 {
            continue;
        }
        let x0 = 1 + rng.below(w - 1 - bw) as i32;
        let y0 = 1 + rng.below(h - 1 - bh) as i32;
        let block: Vec<(i32, i32)> = (0..bh as i32)
            .flat_map(|dy| (0..bw as i32).map(move |dx| (x0 + dx, y0 + dy)))
            .collect();
        if block.iter().any(|&(x, y)| !plan.is_free(x, y)) {
            continue;
        }
        for &(x, y) in &block {
            plan.set_cell(x, y, Cell::Obstacle);
        }
        let free = plan.free_cells();
        if free.is_empty() || flood_fill_count(&plan, free[0]) != free.len() {
            for &(x, y) in &block {
                plan.set_cell(x, y, Cell::Free);
            }
            continue;
        }
        placed += block.len();
    }

    // Objects stand on obstacle cells that touch free space: furniture tops
    // and walls. Corners never qualify.
    let mut slots = Vec::new();
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if !plan.is_free(x, y) && NEIGHBOURS.iter().any(|(dx, dy)| plan.is_free(x + dx, y + dy)) {
                slots.push((x, y));
            }
        }
    }
    let needed = cfg.n_classes * cfg.instances_per_class;
    if needed > slots.len() {
        return Err(Error::Generation(format!(
            "{needed} objects requested but only {} placement slots in a {w}×{h} plan",
            slots.len()
        )));
    }
    for i in (1..slots.len()).rev() {
        let j = rng.below(i + 1);
        slots.swap(i, j);
    }
    let mut slot = slots.into_iter();
    for class_id in 0..cfg.n_classes {
        for _ in 0..cfg.instances_per_class {
            let (x, y) = slot.next().expect("slot count checked above");
            let height = Height::ALL[rng.below(3)];
            plan.objects.push(ObjectInstance { class_id, x, y, height });
        }
    }
    plan.validate()?;
    Ok(plan)
}

/// Plans `0..count` of a suite, each seeded from `base_seed` and its index.
pub fn generate_suite(base_seed: u64, count: usize, cfg: &GenConfig, prefix: &str, split: Split) -> Result<Vec<FloorPlan>> {
    (0..count)
        .map(|i| {
            let seed = RngStream::new(base_seed).derive(i as u64 + 1).next_u64();
            generate_floorplan(seed, cfg, &format!("{prefix}{i:03}"), split)
        })
        .collect()
}
