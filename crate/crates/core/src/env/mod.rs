//! Gridworld object-navigation environment.

mod episode;
mod generate;
mod geometry;
mod io;
mod paths;
mod plan;
mod sensor;

pub use episode::{Action, EnvConfig, NavEnv, StepResult};
pub use generate::{generate_floorplan, generate_suite, GenConfig};
pub use geometry::{sin_cos_deg, to_agent_frame, traversed_cells, Heading, Pitch, CELL_METERS};
pub use io::{format_plans, load_plans, parse_plans, save_plans};
pub use paths::{goal_cells, shortest_path_length, DistanceField};
pub use plan::{flood_fill_count, rotate_cell_ccw, Cell, FloorPlan, Height, ObjectInstance, Split};
pub use sensor::{
    class_plane, in_view_cone, local_grid, pitch_sees, visibility, AgentState, Detection, CAMERA_HEIGHT_M, GRID_SIZE,
};
