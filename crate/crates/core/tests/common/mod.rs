#![allow(dead_code)]
//! Oracles and scene builders shared by the integration tests.

pub mod criteria;

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{Point3, Vector3};
use orsense::belief::BeliefGrid;
use orsense::grid::{Cell, CellState, GridSpec, ObjectId, RegionMask, VoxelStates};
use orsense::scene::{GroundTruthScene, Pose, SceneObject, Shape};

pub const VS: f64 = 0.02;

/// Axis-aligned box object covering cells `min .. min + ext`.
pub fn block(spec: &GridSpec, id: u32, min: Cell, ext: [i32; 3]) -> SceneObject {
    let shape = Shape::Cuboid {
        width: ext[0] as f64 * spec.voxel_size,
        depth: ext[1] as f64 * spec.voxel_size,
        height: ext[2] as f64 * spec.voxel_size,
    };
    let position = std::array::from_fn(|a| spec.origin[a] + (min[a] as f64 + ext[a] as f64 / 2.0) * spec.voxel_size);
    SceneObject::new(ObjectId(id), shape, Pose { position, yaw: 0.0 }, spec).expect("block inside grid")
}

/// Shelf of `dims` with the given boxes; object 0 is the target.
pub fn shelf(dims: [usize; 3], boxes: &[(Cell, [i32; 3])]) -> GroundTruthScene {
    let spec = GridSpec::new(dims, VS, [0.0; 3]).unwrap();
    let objects = boxes.iter().enumerate().map(|(i, &(min, ext))| block(&spec, i as u32, min, ext)).collect();
    GroundTruthScene::assemble(spec, objects, ObjectId(0)).unwrap()
}

/// Belief that knows the whole ground truth.
pub fn full_belief(gt: &GroundTruthScene) -> BeliefGrid {
    let mut b = BeliefGrid::new(gt.spec);
    for i in 0..gt.spec.len() {
        b.observe(i, gt.state(i));
    }
    b
}

/// Ground-truth belief with `hidden` cells left unobserved.
pub fn belief_except(gt: &GroundTruthScene, hidden: impl Fn(Cell) -> bool) -> BeliefGrid {
    let mut b = BeliefGrid::new(gt.spec);
    for i in 0..gt.spec.len() {
        if !hidden(gt.spec.cell(i)) {
            b.observe(i, gt.state(i));
        }
    }
    b
}

/// Exact ray oracle: [`slab_crossings`] cut after the first ray-blocking voxel.
pub fn slab_oracle(grid: &impl VoxelStates, origin: &Point3<f64>, dir: &Vector3<f64>, max_range: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for idx in slab_crossings(grid.spec(), origin, dir, max_range) {
        out.push(idx);
        if grid.state(idx).blocks_rays() {
            break;
        }
    }
    out
}

/// Every voxel whose box the segment `[0, max_range)` crosses with positive
/// length, by entry distance.
pub fn slab_crossings(spec: &GridSpec, origin: &Point3<f64>, dir: &Vector3<f64>, max_range: f64) -> Vec<usize> {
    let s = spec.voxel_size;
    let o = (origin - spec.min_corner()) / s;
    let max_t = max_range / s;
    let mut hits: Vec<(f64, usize)> = Vec::new();
    // Only cells inside the segment's bounding box can be crossed.
    let end = o + dir * max_t;
    let range = |a: usize| {
        let n = spec.dims[a] as i32;
        let lo = (o[a].min(end[a]).floor() as i32 - 1).clamp(0, n);
        let hi = (o[a].max(end[a]).floor() as i32 + 1).clamp(-1, n - 1);
        lo..=hi
    };
    let cells = range(2).flat_map(|k| range(1).flat_map(move |j| range(0).map(move |i| [i, j, k])));
    for c in cells.collect::<Vec<_>>() {
        let idx = spec.index_unchecked(c);
        let (mut lo, mut hi) = (0.0f64, max_t);
        let mut inside = true;
        for a in 0..3 {
            let (b0, b1) = (c[a] as f64, c[a] as f64 + 1.0);
            if dir[a] == 0.0 {
                if o[a] < b0 || o[a] >= b1 {
                    inside = false;
                }
                continue;
            }
            let (t0, t1) = ((b0 - o[a]) / dir[a], (b1 - o[a]) / dir[a]);
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        if inside && hi > lo {
            hits.push((lo, idx));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits.into_iter().map(|h| h.1).collect()
}

/// Voxels containing points sampled every `step` meters along the ray.
pub fn dense_samples(spec: &GridSpec, origin: &Point3<f64>, dir: &Vector3<f64>, max_range: f64, step: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut t = 0.0;
    while t < max_range {
        let c = spec.cell_at(&(origin + dir * t));
        if let Some(i) = spec.index(c) {
            if out.last() != Some(&i) {
                out.push(i);
            }
        }
        t += step;
    }
    out
}

/// 26-connected components of `member` cells, as sorted index sets.
pub fn bfs_components(spec: &GridSpec, member: &[bool]) -> BTreeSet<Vec<usize>> {
    let mut seen = vec![false; member.len()];
    let mut out = BTreeSet::new();
    for s in 0..member.len() {
        if !member[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut q = VecDeque::from([s]);
        while let Some(cur) = q.pop_front() {
            let c = spec.cell(cur);
            for d in neighbours26() {
                if let Some(n) = spec.index([c[0] + d[0], c[1] + d[1], c[2] + d[2]]) {
                    if member[n] && !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                        q.push_back(n);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

fn neighbours26() -> Vec<Cell> {
    let mut v = Vec::new();
    for z in -1..=1 {
        for y in -1..=1 {
            for x in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    v.push([x, y, z]);
                }
            }
        }
    }
    v
}

pub const N6: [Cell; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

/// Breadth-first shortest path length for a footprint over the lattice the
/// planner uses (the grid plus a free strip of `outside` rows in front of the
/// open face). `blocked` answers for in-grid cells.
pub fn bfs_cost(
    spec: &GridSpec,
    outside: i32,
    blocked: &dyn Fn(Cell) -> bool,
    footprint: &[Cell],
    start: Cell,
    goal: Cell,
) -> Option<usize> {
    let [nx, ny, nz] = spec.dims.map(|n| n as i32);
    let cell_free = |c: Cell| {
        if c[0] < 0 || c[0] >= nx || c[2] < 0 || c[2] >= nz || c[1] >= ny || c[1] < -outside {
            return false;
        }
        c[1] < 0 || !blocked(c)
    };
    let config_free = |p: Cell| {
        (0..3).all(|a| p[a] >= if a == 1 { -outside } else { 0 })
            && p[0] < nx
            && p[1] < ny
            && p[2] < nz
            && footprint.iter().all(|o| cell_free([p[0] + o[0], p[1] + o[1], p[2] + o[2]]))
    };
    if !config_free(start) || !config_free(goal) {
        return None;
    }
    let key = |p: Cell| ((p[2] * (ny + outside) + p[1] + outside) * nx + p[0]) as usize;
    let mut dist = vec![usize::MAX; (nx * (ny + outside) * nz) as usize];
    dist[key(start)] = 0;
    let mut q = VecDeque::from([start]);
    while let Some(p) = q.pop_front() {
        if p == goal {
            return Some(dist[key(p)]);
        }
        for d in N6 {
            let n = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
            if config_free(n) && dist[key(n)] == usize::MAX {
                dist[key(n)] = dist[key(p)] + 1;
                q.push_back(n);
            }
        }
    }
    None
}

/// Configurations reachable from `start` by 6-connected moves, as a set.
pub fn bfs_reachable(
    spec: &GridSpec,
    outside: i32,
    blocked: &dyn Fn(Cell) -> bool,
    footprint: &[Cell],
    start: Cell,
) -> BTreeSet<Cell> {
    let [nx, ny, nz] = spec.dims.map(|n| n as i32);
    let cell_free = |c: Cell| {
        if c[0] < 0 || c[0] >= nx || c[2] < 0 || c[2] >= nz || c[1] >= ny || c[1] < -outside {
            return false;
        }
        c[1] < 0 || !blocked(c)
    };
    let config_free = |p: Cell| footprint.iter().all(|o| cell_free([p[0] + o[0], p[1] + o[1], p[2] + o[2]]));
    let mut seen = BTreeSet::new();
    if !config_free(start) {
        return seen;
    }
    seen.insert(start);
    let mut q = VecDeque::from([start]);
    while let Some(p) = q.pop_front() {
        for d in N6 {
            let n = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
            if config_free(n) && seen.insert(n) {
                q.push_back(n);
            }
        }
    }
    seen
}

pub fn region_cells(spec: &GridSpec, r: &RegionMask) -> Vec<Cell> {
    r.voxels().iter().map(|&i| spec.cell(i)).collect()
}

/// Every observed belief cell equals the truth.
pub fn sound(belief: &BeliefGrid, gt: &GroundTruthScene) -> bool {
    (0..gt.spec.len()).all(|i| {
        let b = belief.state(i);
        b == CellState::Unobserved || b == gt.state(i)
    })
}

/// Corridor x 7..=11 leads to the target at the back. A one-voxel-wide object
/// stands centered in front of a second blocker, so no gripper lane reaches
/// the second one. The only space outside the corridor is a pocket behind
/// the left filler, reachable only past the second blocker.
pub fn in_sweep_differentiator() -> GroundTruthScene {
    shelf(
        [15, 14, 8],
        &[
            ([8, 10, 1], [3, 3, 4]),  // target
            ([9, 1, 1], [1, 2, 6]),   // thin front blocker
            ([8, 3, 1], [3, 3, 6]),   // locked blocker
            ([1, 0, 1], [6, 3, 6]),   // left filler
            ([12, 0, 1], [2, 13, 6]), // right filler
        ],
    )
}
