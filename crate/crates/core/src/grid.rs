//! Voxel lattice primitives shared by the ground truth, the belief and the
//! planners.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer lattice coordinate `(i, j, k)`. Planners use coordinates outside the
/// grid (in front of the open face), hence signed.
pub type Cell = [i32; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "object", rename_all = "snake_case")]
pub enum CellState {
    Unobserved,
    Free,
    Occupied(ObjectId),
    Wall,
}

impl CellState {
    pub fn is_observed(self) -> bool {
        self != CellState::Unobserved
    }

    /// Opaque to camera rays.
    pub fn blocks_rays(self) -> bool {
        matches!(self, CellState::Occupied(_) | CellState::Wall)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidSpec(format!("dims must be positive, got {dims:?}")));
        }
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::InvalidSpec(format!("voxel_size must be positive, got {voxel_size}")));
        }
        if dims.iter().product::<usize>() > u32::MAX as usize {
            return Err(Error::InvalidSpec("grid too large".into()));
        }
        Ok(Self { dims, voxel_size, origin })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: Cell) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.contains(c).then(|| self.index_unchecked(c))
    }

    #[inline]
    pub fn index_unchecked(&self, c: Cell) -> usize {
        c[0] as usize + self.dims[0] * (c[1] as usize + self.dims[1] * c[2] as usize)
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> Cell {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [(idx % nx) as i32, ((idx / nx) % ny) as i32, (idx / (nx * ny)) as i32]
    }

    pub fn center(&self, c: Cell) -> Point3<f64> {
        let s = self.voxel_size;
        Point3::new(
            self.origin[0] + (c[0] as f64 + 0.5) * s,
            self.origin[1] + (c[1] as f64 + 0.5) * s,
            self.origin[2] + (c[2] as f64 + 0.5) * s,
        )
    }

    /// Cell containing `p` (may lie outside the grid).
    pub fn cell_at(&self, p: &Point3<f64>) -> Cell {
        let s = self.voxel_size;
        [
            ((p.x - self.origin[0]) / s).floor() as i32,
            ((p.y - self.origin[1]) / s).floor() as i32,
            ((p.z - self.origin[2]) / s).floor() as i32,
        ]
    }

    pub fn min_corner(&self) -> Point3<f64> {
        Point3::from(self.origin)
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.dims[0] as f64 * self.voxel_size,
            self.dims[1] as f64 * self.voxel_size,
            self.dims[2] as f64 * self.voxel_size,
        )
    }

    /// Shelf shell: side walls, back wall, floor and ceiling. The `j = 0`
    /// layer is the open face and only belongs to the shell where it meets
    /// another wall.
    pub fn is_shell(&self, c: Cell) -> bool {
        let [nx, ny, nz] = self.dims.map(|n| n as i32);
        c[0] == 0 || c[0] == nx - 1 || c[1] == ny - 1 || c[2] == 0 || c[2] == nz - 1
    }

    pub fn is_interior(&self, c: Cell) -> bool {
        self.contains(c) && !self.is_shell(c)
    }

    pub fn interior(&self) -> RegionMask {
        RegionMask::from_sorted((0..self.len()).filter(|&i| !self.is_shell(self.cell(i))).collect())
    }
}

/// Read access to a dense lattice of cell states.
pub trait VoxelStates {
    fn spec(&self) -> &GridSpec;
    fn state(&self, idx: usize) -> CellState;
}

/// A set of voxel indices, kept sorted and unique.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    voxels: Vec<usize>,
}

impl RegionMask {
    pub fn new(mut voxels: Vec<usize>) -> Self {
        voxels.sort_unstable();
        voxels.dedup();
        Self { voxels }
    }

    fn from_sorted(voxels: Vec<usize>) -> Self {
        debug_assert!(voxels.windows(2).all(|w| w[0] < w[1]));
        Self { voxels }
    }

    pub fn from_cells(spec: &GridSpec, cells: impl IntoIterator<Item = Cell>) -> Self {
        Self::new(cells.into_iter().filter_map(|c| spec.index(c)).collect())
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

    pub fn contains(&self, idx: usize) -> bool {
        self.voxels.binary_search(&idx).is_ok()
    }

    pub fn retain(&mut self, keep: impl FnMut(&usize) -> bool) {
        self.voxels.retain(keep);
    }

    pub fn to_triples(&self, spec: &GridSpec) -> Vec<Cell> {
        self.voxels.iter().map(|&i| spec.cell(i)).collect()
    }

    pub fn centroid(&self, spec: &GridSpec) -> Option<Point3<f64>> {
        if self.voxels.is_empty() {
            return None;
        }
        let sum = self
            .voxels
            .iter()
            .fold(Vector3::zeros(), |acc, &i| acc + spec.center(spec.cell(i)).coords);
        Some(Point3::from(sum / self.voxels.len() as f64))
    }

    pub fn within_bounds(&self, spec: &GridSpec) -> bool {
        self.voxels.last().is_none_or(|&i| i < spec.len())
    }
}

/// Fraction of `region` whose belief state is observed.
pub fn coverage(region: &RegionMask, belief: &impl VoxelStates) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let seen = region.voxels().iter().filter(|&&i| belief.state(i).is_observed()).count();
    Ok(seen as f64 / region.len() as f64)
}

/// Maximal 26-connected components of the cells matching `predicate`, largest
/// first. Equal sizes keep discovery order (lowest seed index first).
pub fn grow_regions(grid: &impl VoxelStates, predicate: impl Fn(CellState) -> bool) -> Vec<RegionMask> {
    let spec = *grid.spec();
    grow_regions_by_index(&spec, |i| predicate(grid.state(i)))
}

pub fn grow_regions_by_index(spec: &GridSpec, member: impl Fn(usize) -> bool) -> Vec<RegionMask> {
    let n = spec.len();
    let mut label = vec![false; n];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if label[seed] || !member(seed) {
            continue;
        }
        label[seed] = true;
        queue.push_back(seed);
        let mut comp = Vec::new();
        while let Some(cur) = queue.pop_front() {
            comp.push(cur);
            let c = spec.cell(cur);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let Some(nb) = spec.index([c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        if !label[nb] && member(nb) {
                            label[nb] = true;
                            queue.push_back(nb);
                        }
                    }
                }
            }
        }
        out.push(RegionMask::new(comp));
    }
    out.sort_by(|a, b| b.len().cmp(&a.len()));
    out
}
