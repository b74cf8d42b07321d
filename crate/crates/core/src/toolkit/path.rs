//! A* route search over an 8-connected binary traversability mask.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::raster::{BinaryMask, Point};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub reachable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Point>>,
}

impl PathResult {
    pub fn unreachable() -> Self {
        Self { reachable: false, length_m: None, waypoints: None }
    }
}

/// Counts of axis-aligned and diagonal steps along `waypoints`; the path
/// cost is `axis + diagonal * SQRT_2`.
pub fn path_cost_steps(waypoints: &[Point]) -> (u32, u32) {
    waypoints.windows(2).fold((0, 0), |(axis, diag), w| {
        let dx = w[0].0.abs_diff(w[1].0);
        let dy = w[0].1.abs_diff(w[1].1);
        if dx + dy == 2 {
            (axis, diag + 1)
        } else {
            (axis + 1, diag)
        }
    })
}

fn steps_cost((axis, diag): (u32, u32)) -> f64 {
    axis as f64 + diag as f64 * SQRT_2
}

/// Nearest traversable pixel within Chebyshev distance `radius`, measured by
/// Euclidean distance; ties resolve in row-major order.
pub fn snap_to_traversable(mask: &BinaryMask, p: Point, radius: u32) -> Option<Point> {
    if mask.get(p.0, p.1) {
        return Some(p);
    }
    let (w, h) = mask.dims();
    let x0 = p.0.saturating_sub(radius);
    let y0 = p.1.saturating_sub(radius);
    let x1 = (p.0 + radius).min(w - 1);
    let y1 = (p.1 + radius).min(h - 1);
    let mut best: Option<(u64, Point)> = None;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !mask.get(x, y) {
                continue;
            }
            let dx = x.abs_diff(p.0) as u64;
            let dy = y.abs_diff(p.1) as u64;
            let d = dx * dx + dy * dy;
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, (x, y)));
            }
        }
    }
    best.map(|(_, q)| q)
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // BinaryHeap is a max-heap: smallest f first, then deeper g, then index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

fn octile(a: Point, b: Point) -> f64 {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) as f64 + lo as f64 * SQRT_2
}

fn astar(mask: &BinaryMask, start: Point, goal: Point) -> Option<Vec<Point>> {
    let (w, h) = mask.dims();
    let n = w as usize * h as usize;
    let idx = |p: Point| p.1 as usize * w as usize + p.0 as usize;
    let at = |i: usize| ((i % w as usize) as u32, (i / w as usize) as u32);

    // Costs are tracked as exact (axis, diagonal) step counts.
    let mut steps: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let s = idx(start);
    steps[s] = Some((0, 0));
    open.push(Open { f: octile(start, goal), g: 0.0, idx: s });

    let goal_idx = idx(goal);
    while let Some(Open { idx: cur, .. }) = open.pop() {
        if closed[cur] {
            continue;
        }
        closed[cur] = true;
        if cur == goal_idx {
            let mut path = vec![at(cur)];
            let mut c = cur;
            while parent[c] != usize::MAX {
                c = parent[c];
                path.push(at(c));
            }
            path.reverse();
            return Some(path);
        }
        let (cx, cy) = at(cur);
        let cur_steps = steps[cur].expect("opened nodes have a cost");
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = cx as i64 + dx as i64;
                let ny = cy as i64 + dy as i64;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let np = (nx as u32, ny as u32);
                if !mask.get(np.0, np.1) {
                    continue;
                }
                let ni = idx(np);
                if closed[ni] {
                    continue;
                }
                let cand = if dx != 0 && dy != 0 {
                    (cur_steps.0, cur_steps.1 + 1)
                } else {
                    (cur_steps.0 + 1, cur_steps.1)
                };
                let g = steps_cost(cand);
                if steps[ni].is_none_or(|old| g < steps_cost(old)) {
                    steps[ni] = Some(cand);
                    parent[ni] = cur;
                    open.push(Open { f: g + octile(np, goal), g, idx: ni });
                }
            }
        }
    }
    None
}

/// Shortest 8-connected route between two points over `traversable`.
///
/// Endpoints off the mask are first snapped to the nearest traversable pixel
/// within `snap_radius`; if none exists the destination is unreachable.
/// Axis steps cost 1 and diagonal steps cost √2, scaled by `gsd`.
pub fn find_path(
    traversable: &BinaryMask,
    start: Point,
    dest: Point,
    gsd: f64,
    snap_radius: u32,
) -> Result<PathResult, ToolError> {
    let (w, h) = traversable.dims();
    for p in [start, dest] {
        if p.0 >= w || p.1 >= h {
            return Err(ToolError::OutOfBounds { point: p, width: w, height: h });
        }
    }
    let (Some(s), Some(t)) =
        (snap_to_traversable(traversable, start, snap_radius), snap_to_traversable(traversable, dest, snap_radius))
    else {
        return Ok(PathResult::unreachable());
    };
    Ok(match astar(traversable, s, t) {
        Some(waypoints) => {
            let cost = steps_cost(path_cost_steps(&waypoints));
            PathResult { reachable: true, length_m: Some(cost * gsd), waypoints: Some(waypoints) }
        }
        None => PathResult::unreachable(),
    })
}
