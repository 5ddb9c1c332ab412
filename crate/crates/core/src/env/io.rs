//! Plan suite text format.
//!
//! ```text
//! mtnav-plans 1
//! plan <id> <split> <width> <height>
//! <height rows of width characters, '#' obstacle, '.' free, row y = 0 first>
//! objects <count>
//! <class_id> <x> <y> <low|mid|high>
//! end
//! ```
//!
//! Blank lines and lines starting with `;` are ignored between records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::plan::{Cell, FloorPlan, ObjectInstance};

const HEADER: &str = "mtnav-plans 1";

pub fn format_plans(plans: &[FloorPlan]) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for p in plans {
        let _ = writeln!(out, "plan {} {} {} {}", p.id, p.split, p.width(), p.height());
        for y in 0..p.height() as i32 {
            for x in 0..p.width() as i32 {
                out.push(if p.is_free(x, y) { '.' } else { '#' });
            }
            out.push('\n');
        }
        let _ = writeln!(out, "objects {}", p.objects.len());
        for o in &p.objects {
            let _ = writeln!(out, "{} {} {} {}", o.class_id, o.x, o.y, o.height);
        }
        out.push_str("end\n");
    }
    out
}

pub fn parse_plans(text: &str, path: &Path) -> Result<Vec<FloorPlan>> {
    let bad = |line: usize, msg: String| Error::format(path, format!("line {line}: {msg}"));
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with(';'));
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(bad(n, format!("expected `{HEADER}`, found `{other}`"))),
        None => return Err(Error::format(path, "empty plan file")),
    }
    let mut plans = Vec::new();
    while let Some((n, line)) = lines.next() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 || f[0] != "plan" {
            return Err(bad(n, format!("expected `plan <id> <split> <w> <h>`, found `{line}`")));
        }
        let split = f[2].parse().map_err(|e: String| bad(n, e))?;
        let w: usize = f[3].parse().map_err(|_| bad(n, format!("bad width `{}`", f[3])))?;
        let h: usize = f[4].parse().map_err(|_| bad(n, format!("bad height `{}`", f[4])))?;
        let mut cells = Vec::with_capacity(w * h);
        for _ in 0..h {
            let (n, row) = lines.next().ok_or_else(|| Error::format(path, "truncated grid"))?;
            if row.chars().count() != w {
                return Err(bad(n, format!("grid row has {} cells, expected {w}", row.chars().count())));
            }
            for c in row.chars() {
                cells.push(match c {
                    '.' => Cell::Free,
                    '#' => Cell::Obstacle,
                    other => return Err(bad(n, format!("unexpected grid character `{other}`"))),
                });
            }
        }
        let mut plan = FloorPlan::new(f[1], split, w, h, cells)?;
        let (n, line) = lines.next().ok_or_else(|| Error::format(path, "missing object table"))?;
        let count: usize = line
            .strip_prefix("objects ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad(n, format!("expected `objects <count>`, found `{line}`")))?;
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| Error::format(path, "truncated object table"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad(n, format!("expected `<class> <x> <y> <height>`, found `{line}`")));
            }
            let num = |s: &str| s.parse::<i64>().map_err(|_| bad(n, format!("bad number `{s}`")));
            plan.objects.push(ObjectInstance {
                class_id: usize::try_from(num(f[0])?).map_err(|_| bad(n, "negative class id".into()))?,
                x: num(f[1])? as i32,
                y: num(f[2])? as i32,
                height: f[3].parse().map_err(|e: String| bad(n, e))?,
            });
        }
        match lines.next() {
            Some((_, "end")) => {}
            Some((n, other)) => return Err(bad(n, format!("expected `end`, found `{other}`"))),
            None => return Err(Error::format(path, "missing `end`")),
        }
        plan.validate().map_err(|e| Error::format(path, e.to_string()))?;
        plans.push(plan);
    }
    Ok(plans)
}

pub fn save_plans(path: &Path, plans: &[FloorPlan]) -> Result<()> {
    fs::write(path, format_plans(plans)).map_err(|e| Error::io(path, e))
}

pub fn load_plans(path: &Path) -> Result<Vec<FloorPlan>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plans(&text, path)
}
