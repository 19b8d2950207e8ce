//! Floating box gripper on the voxel lattice: collision grids, lattice A*,
//! swept volumes, frontal grasps and placement enumeration.
//!
//! Gripper configurations are lattice cells naming the min corner of the
//! gripper box. Configurations may extend up to [`OUTSIDE_DEPTH`] voxels in
//! front of the open face, where space is free.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::belief::BeliefGrid;
use crate::error::{Error, Result};
use crate::grid::{Cell, CellState, GridSpec, ObjectId, RegionMask, VoxelStates};

pub const OUTSIDE_DEPTH: i32 = 24;

const NEIGHBOURS: [Cell; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperSpec {
    /// Width (x), depth (y) and height (z) of the gripper box in meters.
    pub footprint_dims: [f64; 3],
    /// Margin, in voxels, added around swept volumes.
    pub clearance: usize,
}

impl Default for GripperSpec {
    fn default() -> Self {
        Self { footprint_dims: [0.06, 0.06, 0.04], clearance: 1 }
    }
}

impl GripperSpec {
    pub fn voxels(&self, voxel_size: f64) -> [i32; 3] {
        self.footprint_dims.map(|d| ((d / voxel_size).round() as i32).max(1))
    }

    pub fn footprint(&self, voxel_size: f64) -> Footprint {
        let [w, d, h] = self.voxels(voxel_size);
        let mut offsets = Vec::with_capacity((w * d * h) as usize);
        for k in 0..h {
            for j in 0..d {
                for i in 0..w {
                    offsets.push([i, j, k]);
                }
            }
        }
        Footprint::new(offsets)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occupancy {
    Free,
    Blocked,
    Object(ObjectId),
}

/// Collision view of a scene for the planners.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanningGrid {
    spec: GridSpec,
    cells: Vec<Occupancy>,
}

impl PlanningGrid {
    /// Shell, walls and unobserved cells block; known objects keep their id.
    pub fn from_belief(belief: &BeliefGrid) -> Self {
        let spec = *belief.spec();
        let cells = (0..spec.len())
            .map(|i| {
                if spec.is_shell(spec.cell(i)) {
                    return Occupancy::Blocked;
                }
                match belief.state(i) {
                    CellState::Free => Occupancy::Free,
                    CellState::Occupied(id) => Occupancy::Object(id),
                    CellState::Unobserved | CellState::Wall => Occupancy::Blocked,
                }
            })
            .collect();
        Self { spec, cells }
    }

    /// Only the shelf shell blocks.
    pub fn walls_only(spec: GridSpec) -> Self {
        let cells = (0..spec.len())
            .map(|i| if spec.is_shell(spec.cell(i)) { Occupancy::Blocked } else { Occupancy::Free })
            .collect();
        Self { spec, cells }
    }

    /// Ground-truth occupancy, for replay.
    pub fn from_truth(truth: &impl VoxelStates) -> Self {
        let spec = *truth.spec();
        let cells = (0..spec.len())
            .map(|i| match truth.state(i) {
                CellState::Free => Occupancy::Free,
                CellState::Occupied(id) => Occupancy::Object(id),
                CellState::Unobserved | CellState::Wall => Occupancy::Blocked,
            })
            .collect();
        Self { spec, cells }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn at(&self, c: Cell) -> Occupancy {
        if let Some(i) = self.spec.index(c) {
            return self.cells[i];
        }
        let [nx, _, nz] = self.spec.dims.map(|n| n as i32);
        if c[1] < 0 && c[1] >= -OUTSIDE_DEPTH && (0..nx).contains(&c[0]) && (0..nz).contains(&c[2]) {
            Occupancy::Free
        } else {
            Occupancy::Blocked
        }
    }

    #[inline]
    pub fn blocked(&self, c: Cell, ignore: &[ObjectId]) -> bool {
        match self.at(c) {
            Occupancy::Free => false,
            Occupancy::Blocked => true,
            Occupancy::Object(id) => !ignore.contains(&id),
        }
    }

    pub fn set(&mut self, c: Cell, occ: Occupancy) {
        if let Some(i) = self.spec.index(c) {
            self.cells[i] = occ;
        }
    }

    pub fn state_at_index(&self, idx: usize) -> Occupancy {
        self.cells[idx]
    }

    /// Frees `from` (where it holds `id`) and marks `to` as `id`.
    pub fn move_object(&mut self, id: ObjectId, from: &[Cell], to: &[Cell]) {
        for &c in from {
            if self.at(c) == Occupancy::Object(id) {
                self.set(c, Occupancy::Free);
            }
        }
        for &c in to {
            self.set(c, Occupancy::Object(id));
        }
    }
}

/// Cell offsets relative to a gripper configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Footprint {
    offsets: Vec<Cell>,
    max_dj: i32,
}

impl Footprint {
    pub fn new(mut offsets: Vec<Cell>) -> Self {
        offsets.sort_unstable_by_key(|o| (o[2], o[1], o[0]));
        offsets.dedup();
        let max_dj = offsets.iter().map(|o| o[1]).max().unwrap_or(0);
        Self { offsets, max_dj }
    }

    pub fn offsets(&self) -> &[Cell] {
        &self.offsets
    }

    /// Gripper plus an object held rigidly while the gripper sits at `reference`.
    pub fn attach(&self, object_cells: &[Cell], reference: Cell) -> Footprint {
        let mut offsets = self.offsets.clone();
        offsets.extend(object_cells.iter().map(|c| sub(*c, reference)));
        Footprint::new(offsets)
    }

    pub fn cells_at(&self, p: Cell) -> impl Iterator<Item = Cell> + '_ {
        self.offsets.iter().map(move |o| add(p, *o))
    }

    #[inline]
    pub fn collides(&self, grid: &PlanningGrid, p: Cell, ignore: &[ObjectId]) -> bool {
        self.offsets.iter().any(|o| grid.blocked(add(p, *o), ignore))
    }

    /// Configuration straight in front of `p` with every cell outside the shelf.
    pub fn home(&self, p: Cell) -> Cell {
        [p[0], -(self.max_dj + 1), p[2]]
    }

    /// Offsets grown by a cube of half width `margin`.
    pub fn dilated(&self, margin: i32) -> Footprint {
        if margin == 0 {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.offsets.len() * 8);
        for o in &self.offsets {
            for dz in -margin..=margin {
                for dy in -margin..=margin {
                    for dx in -margin..=margin {
                        out.push([o[0] + dx, o[1] + dy, o[2] + dz]);
                    }
                }
            }
        }
        Footprint::new(out)
    }
}

#[inline]
pub fn add(a: Cell, b: Cell) -> Cell {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Cell, b: Cell) -> Cell {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn shift(cells: &[Cell], by: Cell) -> Vec<Cell> {
    cells.iter().map(|c| add(*c, by)).collect()
}

/// Mean cell center of `cells`.
pub fn centroid(spec: &GridSpec, cells: &[Cell]) -> Point3<f64> {
    let n = cells.len().max(1) as f64;
    let sum = cells.iter().fold(Vector3::zeros(), |acc, c| acc + spec.center(*c).coords);
    Point3::from(sum / n)
}

/// Index over gripper configurations: the grid box extended in front of the
/// open face.
#[derive(Clone, Copy, Debug)]
pub struct Lattice {
    nx: i32,
    ny: i32,
    nz: i32,
}

impl Lattice {
    pub fn new(spec: &GridSpec) -> Self {
        let [nx, ny, nz] = spec.dims.map(|n| n as i32);
        Self { nx, ny: ny + OUTSIDE_DEPTH, nz }
    }

    pub fn len(&self) -> usize {
        (self.nx * self.ny * self.nz) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, c: Cell) -> Option<usize> {
        let j = c[1] + OUTSIDE_DEPTH;
        if c[0] < 0 || c[0] >= self.nx || j < 0 || j >= self.ny || c[2] < 0 || c[2] >= self.nz {
            return None;
        }
        Some((c[0] + self.nx * (j + self.ny * c[2])) as usize)
    }

    #[inline]
    pub fn index_unchecked(&self, c: Cell) -> usize {
        (c[0] + self.nx * (c[1] + OUTSIDE_DEPTH + self.ny * c[2])) as usize
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> Cell {
        let idx = idx as i32;
        [idx % self.nx, (idx / self.nx) % self.ny - OUTSIDE_DEPTH, idx / (self.nx * self.ny)]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub positions: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached: Option<ObjectId>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }

    pub fn cost(&self, voxel_size: f64) -> f64 {
        self.steps() as f64 * voxel_size
    }

    pub fn start(&self) -> Cell {
        self.positions[0]
    }

    pub fn end(&self) -> Cell {
        *self.positions.last().expect("paths are non-empty")
    }

    pub fn is_connected(&self) -> bool {
        self.positions.windows(2).all(|w| {
            let d = sub(w[1], w[0]);
            d.iter().map(|v| v.abs()).sum::<i32>() == 1
        })
    }

    pub fn reversed(&self) -> Path {
        let mut positions = self.positions.clone();
        positions.reverse();
        Path { positions, attached: self.attached }
    }
}

/// Collision bitmap over gripper configurations for one footprint. Each
/// lattice row along x is a `u128`; a set bit means the footprint collides.
#[derive(Clone, Debug)]
pub struct ConfigSpace {
    lattice: Lattice,
    rows: Vec<u128>,
}

/// Widest grid (in x) the row bitmaps can represent.
pub const MAX_LATTICE_WIDTH: usize = 100;

impl ConfigSpace {
    pub fn new(grid: &PlanningGrid, footprint: &Footprint, ignore: &[ObjectId]) -> Self {
        let lattice = Lattice::new(grid.spec());
        let nx = lattice.nx;
        assert!(nx as usize <= MAX_LATTICE_WIDTH, "grid too wide for the lattice planner");
        let (ny, nz) = (lattice.ny, lattice.nz);
        let outside = !0u128 << nx;
        // Obstacle rows, one per (j, k) in the extended lattice.
        let mut blocked = vec![0u128; (ny * nz) as usize];
        for k in 0..nz {
            for jj in 0..ny {
                let j = jj - OUTSIDE_DEPTH;
                let mut row = outside;
                for i in 0..nx {
                    if grid.blocked([i, j, k], ignore) {
                        row |= 1 << i;
                    }
                }
                blocked[(jj + ny * k) as usize] = row;
            }
        }
        let mut rows = vec![0u128; blocked.len()];
        for k in 0..nz {
            for jj in 0..ny {
                let mut acc = 0u128;
                for o in &footprint.offsets {
                    let (sj, sk) = (jj + o[1], k + o[2]);
                    if sj < 0 || sj >= ny || sk < 0 || sk >= nz {
                        acc = !0;
                        break;
                    }
                    let b = blocked[(sj + ny * sk) as usize];
                    acc |= if o[0] >= 0 {
                        if o[0] >= 128 { !0 } else { (b >> o[0]) | (!0u128).checked_shl(128 - o[0] as u32).unwrap_or(0) }
                    } else {
                        let s = (-o[0]) as u32;
                        if s >= 128 { !0 } else { (b << s) | ((1u128 << s) - 1) }
                    };
                }
                rows[(jj + ny * k) as usize] = acc;
            }
        }
        Self { lattice, rows }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    #[inline]
    pub fn free(&self, c: Cell) -> bool {
        let jj = c[1] + OUTSIDE_DEPTH;
        if c[0] < 0 || c[0] >= self.lattice.nx || jj < 0 || jj >= self.lattice.ny || c[2] < 0 || c[2] >= self.lattice.nz {
            return false;
        }
        (self.rows[(jj + self.lattice.ny * c[2]) as usize] >> c[0]) & 1 == 0
    }

    /// Shortest 6-connected path; A* with a Euclidean heuristic. Ties go to
    /// the earliest-generated node, neighbours in +x, -x, +y, -y, +z, -z order.
    pub fn plan(&self, start: Cell, goal: Cell) -> Result<Path> {
        let lattice = self.lattice;
        let (Some(s), Some(g)) = (lattice.index(start), lattice.index(goal)) else {
            return Err(Error::NoPath);
        };
        if !self.free(start) {
            return Err(Error::InvalidStart);
        }
        if !self.free(goal) {
            return Err(Error::NoPath);
        }
        let heuristic = |c: Cell| {
            let d = sub(c, goal);
            ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt()
        };
        let n = lattice.len();
        let mut cost = vec![u32::MAX; n];
        let mut parent = vec![u32::MAX; n];
        let mut open = BinaryHeap::new();
        let mut seq = 0u64;
        cost[s] = 0;
        open.push(Reverse((heuristic(start).to_bits(), seq, s as u32)));
        while let Some(Reverse((_, _, cur))) = open.pop() {
            let cur = cur as usize;
            if cur == g {
                let mut positions = vec![goal];
                let mut at = g;
                while at != s {
                    at = parent[at] as usize;
                    positions.push(lattice.cell(at));
                }
                positions.reverse();
                return Ok(Path { positions, attached: None });
            }
            let c = lattice.cell(cur);
            let next_cost = cost[cur] + 1;
            for d in NEIGHBOURS {
                let nc = add(c, d);
                if !self.free(nc) {
                    continue;
                }
                let ni = lattice.index_unchecked(nc);
                if next_cost >= cost[ni] {
                    continue;
                }
                cost[ni] = next_cost;
                parent[ni] = cur as u32;
                seq += 1;
                open.push(Reverse(((next_cost as f64 + heuristic(nc)).to_bits(), seq, ni as u32)));
            }
        }
        Err(Error::NoPath)
    }

    /// Every configuration reachable from `start`, by lattice index.
    pub fn reachable(&self, start: Cell) -> Vec<bool> {
        let lattice = self.lattice;
        let mut seen = vec![false; lattice.len()];
        if !self.free(start) {
            return seen;
        }
        seen[lattice.index_unchecked(start)] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for d in NEIGHBOURS {
                let nc = add(c, d);
                if !self.free(nc) {
                    continue;
                }
                let ni = lattice.index_unchecked(nc);
                if !seen[ni] {
                    seen[ni] = true;
                    queue.push_back(nc);
                }
            }
        }
        seen
    }
}

/// Shortest lattice path for `footprint` from `start` to `goal`, treating
/// objects in `ignore` as absent.
pub fn plan_path(
    start: Cell,
    goal: Cell,
    footprint: &Footprint,
    grid: &PlanningGrid,
    ignore: &[ObjectId],
) -> Result<Path> {
    ConfigSpace::new(grid, footprint, ignore).plan(start, goal)
}

/// Every configuration reachable from `start` without collision.
pub fn reachable_configurations(
    start: Cell,
    footprint: &Footprint,
    grid: &PlanningGrid,
    ignore: &[ObjectId],
) -> Vec<bool> {
    ConfigSpace::new(grid, footprint, ignore).reachable(start)
}

/// Voxels swept by a footprint along a path, dilated by a clearance margin.
/// Only shelf-interior voxels are kept; the shell is fixed and the space in
/// front of the shelf is not part of the scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweptVolume {
    mask: Vec<bool>,
    voxels: Vec<usize>,
}

impl SweptVolume {
    pub fn empty(spec: &GridSpec) -> Self {
        Self { mask: vec![false; spec.len()], voxels: Vec::new() }
    }

    pub fn from_region(spec: &GridSpec, region: &RegionMask) -> Self {
        let mut out = Self::empty(spec);
        for &v in region.voxels() {
            out.insert(v);
        }
        out
    }

    fn insert(&mut self, idx: usize) {
        if !self.mask[idx] {
            self.mask[idx] = true;
            self.voxels.push(idx);
        }
    }

    pub fn union(&self, other: &SweptVolume) -> SweptVolume {
        let mut out = self.clone();
        for &v in &other.voxels {
            out.insert(v);
        }
        out.voxels.sort_unstable();
        out
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.mask.get(idx).copied().unwrap_or(false)
    }

    pub fn contains_cell(&self, spec: &GridSpec, c: Cell) -> bool {
        spec.index(c).is_some_and(|i| self.mask[i])
    }

    pub fn intersects(&self, spec: &GridSpec, cells: &[Cell]) -> bool {
        cells.iter().any(|&c| self.contains_cell(spec, c))
    }

    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn to_region(&self) -> RegionMask {
        RegionMask::new(self.voxels.clone())
    }
}

pub fn swept_volume(path: &Path, footprint: &Footprint, clearance: usize, spec: &GridSpec) -> SweptVolume {
    let grown = footprint.dilated(clearance as i32);
    let mut out = SweptVolume::empty(spec);
    for &p in &path.positions {
        for c in grown.cells_at(p) {
            if spec.is_interior(c) {
                out.insert(spec.index_unchecked(c));
            }
        }
    }
    out.voxels.sort_unstable();
    out
}

/// Gripper box touching the object's front (-y) face, `dx` voxels off the
/// centered position, bottom at `k0`.
pub fn frontal_grasp(object_cells: &[Cell], gripper: [i32; 3], dx: i32, k0: i32) -> Option<Cell> {
    let (x_lo, x_hi) = span(object_cells.iter().map(|c| c[0]))?;
    let x0 = (x_lo + x_hi + 1 - gripper[0]).div_euclid(2) + dx;
    let front = object_cells
        .iter()
        .filter(|c| (x0..x0 + gripper[0]).contains(&c[0]) && (k0..k0 + gripper[2]).contains(&c[2]))
        .map(|c| c[1])
        .min()?;
    Some([x0, front - gripper[1], k0])
}

/// The default grasp used for obstacles: centered, gripper resting at the
/// object's base.
pub fn object_grasp(object_cells: &[Cell], gripper: [i32; 3]) -> Option<Cell> {
    let (k_lo, _) = span(object_cells.iter().map(|c| c[2]))?;
    frontal_grasp(object_cells, gripper, 0, k_lo)
}

fn span(it: impl Iterator<Item = i32>) -> Option<(i32, i32)> {
    it.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub gripper_pose: Cell,
    /// Size of the retrieval swept volume, once evaluated. Smaller is better.
    pub score: Option<usize>,
}

/// Frontal grasps around the target: five lateral offsets at two heights.
/// Candidates whose gripper box meets the shelf walls or the target are
/// dropped; movable objects in the way become blockers instead.
pub fn grasp_candidates(
    target: ObjectId,
    target_cells: &[Cell],
    belief: &BeliefGrid,
    gripper: &GripperSpec,
) -> Result<Vec<GraspCandidate>> {
    let spec = belief.spec();
    let g = gripper.voxels(spec.voxel_size);
    let (k_lo, k_hi) = span(target_cells.iter().map(|c| c[2])).ok_or(Error::NoGraspFound(target))?;
    let height = k_hi - k_lo + 1;
    let mut levels = vec![k_lo];
    let mid = k_lo + ((height - g[2]) / 2).max(0);
    if mid != k_lo {
        levels.push(mid);
    }
    let fp = gripper.footprint(spec.voxel_size);
    let mut out: Vec<GraspCandidate> = Vec::new();
    for &k0 in &levels {
        for dx in [0, -1, 1, -2, 2] {
            let Some(pose) = frontal_grasp(target_cells, g, dx, k0) else { continue };
            let clear = fp.cells_at(pose).all(|c| match belief.spec().index(c) {
                Some(i) => {
                    !spec.is_shell(c) && !matches!(belief.state(i), CellState::Wall)
                        && belief.state(i) != CellState::Occupied(target)
                }
                None => c[1] < 0 && (0..spec.dims[0] as i32).contains(&c[0]) && (0..spec.dims[2] as i32).contains(&c[2]),
            });
            if clear && !out.iter().any(|o| o.gripper_pose == pose) {
                out.push(GraspCandidate { gripper_pose: pose, score: None });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoGraspFound(target));
    }
    Ok(out)
}

/// A relocation target for a held object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Object translation in voxels.
    pub offset: Cell,
    /// Gripper configuration at release.
    pub place_pose: Cell,
    pub distance: f64,
    pub carry: Path,
    pub retract: Path,
}

/// An object about to be moved: its cells and the grasp configuration.
#[derive(Clone, Copy, Debug)]
pub struct HeldObject<'a> {
    pub id: ObjectId,
    pub cells: &'a [Cell],
    pub grasp: Cell,
}

/// Placement enumeration for one grasped object. Candidate placements are
/// floor-level translations (no change in height) reachable by the loaded
/// gripper from the grasp configuration whose moved footprint stays inside
/// the shelf.
pub struct PlacementSearch<'a> {
    grid: &'a PlanningGrid,
    object: HeldObject<'a>,
    gripper: &'a Footprint,
    loaded: ConfigSpace,
    reach: Vec<bool>,
}

impl<'a> PlacementSearch<'a> {
    pub fn new(grid: &'a PlanningGrid, object: HeldObject<'a>, gripper: &'a Footprint) -> Self {
        let loaded = ConfigSpace::new(grid, &gripper.attach(object.cells, object.grasp), &[object.id]);
        let reach = loaded.reachable(object.grasp);
        Self { grid, object, gripper, loaded, reach }
    }

    /// Offsets of candidates satisfying `accept`, in lattice order.
    pub fn candidates(&self, mut accept: impl FnMut(&[Cell]) -> bool) -> Vec<Cell> {
        let spec = *self.grid.spec();
        let lattice = self.loaded.lattice;
        let grasp = self.object.grasp;
        let mut out = Vec::new();
        let mut moved = Vec::with_capacity(self.object.cells.len());
        for (idx, _) in self.reach.iter().enumerate().filter(|(_, r)| **r) {
            let p = lattice.cell(idx);
            if p[2] != grasp[2] || p == grasp {
                continue;
            }
            let offset = sub(p, grasp);
            moved.clear();
            moved.extend(self.object.cells.iter().map(|c| add(*c, offset)));
            if moved.iter().all(|&c| spec.is_interior(c)) && accept(&moved) {
                out.push(offset);
            }
        }
        out
    }

    /// Adds the carry path and the gripper's retreat to the open face.
    pub fn complete(&self, offset: Cell, distance: f64) -> Option<Placement> {
        let place_pose = add(self.object.grasp, offset);
        let mut carry = self.loaded.plan(self.object.grasp, place_pose).ok()?;
        carry.attached = Some(self.object.id);
        let mut after = self.grid.clone();
        after.move_object(self.object.id, self.object.cells, &shift(self.object.cells, offset));
        let retract = plan_path(place_pose, self.gripper.home(place_pose), self.gripper, &after, &[]).ok()?;
        Some(Placement { offset, place_pose, distance, carry, retract })
    }

    /// Up to `max_count` completed placements, nearest to `anchor` first
    /// (ties keep candidate order).
    pub fn ranked(&self, candidates: Vec<Cell>, anchor: Point3<f64>, max_count: usize) -> Vec<Placement> {
        let spec = *self.grid.spec();
        let base = centroid(&spec, self.object.cells);
        let vs = spec.voxel_size;
        let mut ranked: Vec<(f64, Cell)> = candidates
            .into_iter()
            .map(|o| {
                let moved = base + Vector3::new(o[0] as f64, o[1] as f64, o[2] as f64) * vs;
                ((moved - anchor).norm(), o)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Vec::new();
        for (d, o) in ranked {
            if out.len() >= max_count {
                break;
            }
            if let Some(p) = self.complete(o, d) {
                out.push(p);
            }
        }
        out
    }
}

/// Up to `max_count` placements avoiding `forbidden`, nearest to `anchor` first.
pub fn feasible_placements(
    grid: &PlanningGrid,
    object: HeldObject<'_>,
    gripper: &Footprint,
    forbidden: &SweptVolume,
    anchor: Point3<f64>,
    max_count: usize,
) -> Vec<Placement> {
    let spec = *grid.spec();
    let search = PlacementSearch::new(grid, object, gripper);
    let candidates = search.candidates(|cells| !forbidden.intersects(&spec, cells));
    search.ranked(candidates, anchor, max_count)
}
