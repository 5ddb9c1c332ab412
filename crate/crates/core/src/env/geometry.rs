use serde::{Deserialize, Serialize};

/// Grid cell size in meters.
pub const CELL_METERS: f64 = 0.5;

/// Facing direction in 90° steps, counter-clockwise from +x.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Heading(u8);

impl Heading {
    pub const EAST: Heading = Heading(0);
    pub const NORTH: Heading = Heading(1);
    pub const WEST: Heading = Heading(2);
    pub const SOUTH: Heading = Heading(3);
    pub const ALL: [Heading; 4] = [Heading(0), Heading(1), Heading(2), Heading(3)];

    pub fn from_quarter_turns(k: i32) -> Heading {
        Heading(k.rem_euclid(4) as u8)
    }

    pub fn quarter_turns(self) -> i32 {
        self.0 as i32
    }

    pub fn degrees(self) -> i32 {
        90 * self.0 as i32
    }

    /// Unit step along the heading.
    pub fn step(self) -> (i32, i32) {
        match self.0 {
            0 => (1, 0),
            1 => (0, 1),
            2 => (-1, 0),
            _ => (0, -1),
        }
    }

    /// Counter-clockwise quarter turn.
    pub fn left(self) -> Heading {
        Heading((self.0 + 1) % 4)
    }

    pub fn right(self) -> Heading {
        Heading((self.0 + 3) % 4)
    }
}

/// Camera pitch in 30° steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pitch {
    Down,
    Level,
    Up,
}

impl Pitch {
    pub fn degrees(self) -> i32 {
        match self {
            Pitch::Down => -30,
            Pitch::Level => 0,
            Pitch::Up => 30,
        }
    }

    /// One step down, or `None` at the lower limit.
    pub fn lower(self) -> Option<Pitch> {
        match self {
            Pitch::Down => None,
            Pitch::Level => Some(Pitch::Down),
            Pitch::Up => Some(Pitch::Level),
        }
    }

    pub fn raise(self) -> Option<Pitch> {
        match self {
            Pitch::Down => Some(Pitch::Level),
            Pitch::Level => Some(Pitch::Up),
            Pitch::Up => None,
        }
    }
}

/// Exact sine and cosine for whole-degree angles that are multiples of 30°;
/// other angles fall back to floating-point evaluation.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    if deg.fract() == 0.0 && (deg as i64) % 30 == 0 {
        let k = (deg as i64).rem_euclid(360) / 30;
        let h = 3f64.sqrt() / 2.0;
        match k {
            0 => (0.0, 1.0),
            1 => (0.5, h),
            2 => (h, 0.5),
            3 => (1.0, 0.0),
            4 => (h, -0.5),
            5 => (0.5, -h),
            6 => (0.0, -1.0),
            7 => (-0.5, -h),
            8 => (-h, -0.5),
            9 => (-1.0, 0.0),
            10 => (-h, 0.5),
            _ => (-0.5, h),
        }
    } else {
        let r = deg.to_radians();
        (r.sin(), r.cos())
    }
}

/// Offset of `(dx, dy)` in a frame facing `heading`: `(forward, left)`.
pub fn to_agent_frame(dx: i32, dy: i32, heading: Heading) -> (i32, i32) {
    let (cx, cy) = heading.step();
    (dx * cx + dy * cy, -dx * cy + dy * cx)
}

/// Cells crossed by the segment between the centres of `from` and `to`,
/// excluding both endpoints. A cell counts when the segment passes through
/// its open interior; exact corner crossings step diagonally.
pub fn traversed_cells(from: (i32, i32), to: (i32, i32)) -> Vec<(i32, i32)> {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let (nx, ny) = (dx.abs() as i64, dy.abs() as i64);
    let (sx, sy) = (dx.signum(), dy.signum());
    let (mut x, mut y) = from;
    let (mut ix, mut iy) = (0i64, 0i64);
    let mut out = Vec::new();
    while ix < nx || iy < ny {
        // next vertical boundary at t = (ix + ½)/nx, horizontal at (iy + ½)/ny
        let cross_x = (1 + 2 * ix) * ny;
        let cross_y = (1 + 2 * iy) * nx;
        if cross_x == cross_y {
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if cross_x < cross_y {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        if (x, y) != to {
            out.push((x, y));
        }
    }
    out
}
