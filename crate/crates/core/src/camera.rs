//! Pin-hole camera: voxel ray traversal, belief updates and view scoring.

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::belief::BeliefGrid;
use crate::error::{Error, Result};
use crate::grid::{CellState, GridSpec, VoxelStates};
use crate::scene::GroundTruthScene;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    pub rays_u: usize,
    pub rays_v: usize,
    pub max_range: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            horizontal_fov: 70f64.to_radians(),
            vertical_fov: 55f64.to_radians(),
            rays_u: 160,
            rays_v: 120,
            max_range: 1.5,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !fov_ok(self.horizontal_fov) || !fov_ok(self.vertical_fov) {
            return Err(Error::Format("field of view must lie in (0, pi)".into()));
        }
        if self.rays_u < 2 || self.rays_v < 2 {
            return Err(Error::Format("need at least 2x2 rays".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Format("max_range must be positive".into()));
        }
        Ok(())
    }

    pub fn ray_count(&self) -> usize {
        self.rays_u * self.rays_v
    }

    /// Unit ray directions in the camera frame (optical axis +z, image x
    /// horizontal, image y up), sampled at pixel centers.
    pub fn local_rays(&self) -> Vec<Vector3<f64>> {
        let tu = (self.horizontal_fov / 2.0).tan();
        let tv = (self.vertical_fov / 2.0).tan();
        let mut out = Vec::with_capacity(self.ray_count());
        for v in 0..self.rays_v {
            let y = tv * (2.0 * (v as f64 + 0.5) / self.rays_v as f64 - 1.0);
            for u in 0..self.rays_u {
                let x = tu * (2.0 * (u as f64 + 0.5) / self.rays_u as f64 - 1.0);
                out.push(Vector3::new(x, y, 1.0).normalize());
            }
        }
        out
    }
}

/// Camera pose. `orientation` is a unit quaternion `[w, i, j, k]` mapping the
/// camera frame to the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: u32,
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl Viewpoint {
    pub fn new(id: u32, position: Point3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        let q = rotation.quaternion();
        Self { id, position: position.into(), orientation: [q.w, q.i, q.j, q.k] }
    }

    /// Camera at `position` with its optical axis through `focus`.
    pub fn look_at(id: u32, position: Point3<f64>, focus: Point3<f64>) -> Option<Self> {
        let dir = focus - position;
        if dir.norm() < 1e-9 {
            return None;
        }
        let dir = dir.normalize();
        let up = if dir.z.abs() > 0.99 { Vector3::y() } else { Vector3::z() };
        Some(Self::new(id, position, UnitQuaternion::face_towards(&dir, &up)))
    }

    pub fn point(&self) -> Point3<f64> {
        Point3::from(self.position)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, i, j, k] = self.orientation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, i, j, k))
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.rotation() * Vector3::z()
    }

    fn world_rays(&self, intrinsics: &Intrinsics) -> Vec<Vector3<f64>> {
        let r = self.rotation();
        intrinsics.local_rays().into_iter().map(|d| r * d).collect()
    }
}

/// Incremental voxel traversal along `origin + t * dir` (unit `dir`, meters).
///
/// Visits every voxel the segment `[0, max_range)` pierces, in order. `visit`
/// returns `false` to stop early. Rays starting outside the grid begin at
/// their entry point; rays that never enter visit nothing.
pub fn traverse(
    spec: &GridSpec,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    max_range: f64,
    mut visit: impl FnMut(usize) -> bool,
) {
    let s = spec.voxel_size;
    let o = (origin - spec.min_corner()) / s;
    let max_t = max_range / s;
    let n = spec.dims.map(|d| d as f64);

    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if o[a] < 0.0 || o[a] >= n[a] {
                return;
            }
        } else {
            let t0 = -o[a] / dir[a];
            let t1 = (n[a] - o[a]) / dir[a];
            t_enter = t_enter.max(t0.min(t1));
            t_exit = t_exit.min(t0.max(t1));
        }
    }
    if t_enter >= t_exit || t_enter >= max_t {
        return;
    }

    let p = o + dir * t_enter;
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        cell[a] = (p[a].floor() as i64).clamp(0, spec.dims[a] as i64 - 1);
        if dir[a] > 1e-15 {
            step[a] = 1;
            t_max[a] = t_enter + (cell[a] as f64 + 1.0 - p[a]) / dir[a];
            t_delta[a] = 1.0 / dir[a];
        } else if dir[a] < -1e-15 {
            step[a] = -1;
            t_max[a] = t_enter + (cell[a] as f64 - p[a]) / dir[a];
            t_delta[a] = -1.0 / dir[a];
        }
    }

    let (nx, ny) = (spec.dims[0], spec.dims[1]);
    loop {
        let idx = cell[0] as usize + nx * (cell[1] as usize + ny * cell[2] as usize);
        if !visit(idx) {
            return;
        }
        let axis = if t_max[0] <= t_max[1] {
            if t_max[0] <= t_max[2] { 0 } else { 2 }
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[axis] >= max_t {
            return;
        }
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= spec.dims[axis] as i64 {
            return;
        }
        t_max[axis] += t_delta[axis];
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Traversal {
    pub voxels: Vec<usize>,
    pub hit: Option<usize>,
}

/// Traverses `grid` until the first `Occupied`/`Wall` voxel (included and
/// reported as the hit) or `max_range`.
pub fn cast_ray(grid: &impl VoxelStates, origin: &Point3<f64>, direction: &Vector3<f64>, max_range: f64) -> Traversal {
    let mut out = Traversal::default();
    traverse(grid.spec(), origin, direction, max_range, |idx| {
        out.voxels.push(idx);
        if grid.state(idx).blocks_rays() {
            out.hit = Some(idx);
            false
        } else {
            true
        }
    });
    out
}

/// Observes the ground truth from `viewpoint`, copying every traversed voxel
/// into the belief. A ray that hits an object reveals that object's whole
/// footprint (segmentation against a known object model). Returns the number of
/// cells that were unobserved before.
pub fn apply_viewpoint(
    gt: &GroundTruthScene,
    belief: &mut BeliefGrid,
    viewpoint: &Viewpoint,
    intrinsics: &Intrinsics,
) -> Result<usize> {
    let spec = gt.spec;
    let origin = viewpoint.point();
    if let Some(idx) = spec.index(spec.cell_at(&origin)) {
        if gt.state(idx).blocks_rays() {
            return Err(Error::InvalidPose);
        }
    }
    let mut newly = 0usize;
    let mut revealed = Vec::new();
    for dir in viewpoint.world_rays(intrinsics) {
        traverse(&spec, &origin, &dir, intrinsics.max_range, |idx| {
            let truth = gt.state(idx);
            newly += belief.observe(idx, truth) as usize;
            if let CellState::Occupied(id) = truth {
                if !revealed.contains(&id) {
                    revealed.push(id);
                }
            }
            !truth.blocks_rays()
        });
    }
    for id in revealed {
        if let Some(obj) = gt.object(id) {
            for &v in &obj.footprint {
                newly += belief.observe(v, CellState::Occupied(id)) as usize;
            }
        }
    }
    Ok(newly)
}

/// Expected new coverage: distinct unobserved voxels the frustum's rays pass
/// before reaching a known occupied or wall cell. Unobserved cells are
/// treated as transparent.
pub fn frustum_gain(belief: &BeliefGrid, viewpoint: &Viewpoint, intrinsics: &Intrinsics) -> u64 {
    count_unobserved_hits(belief, viewpoint, intrinsics, |_| true)
}

/// Like [`frustum_gain`] but only counts voxels for which `in_region` holds.
pub fn region_gain(
    belief: &BeliefGrid,
    viewpoint: &Viewpoint,
    intrinsics: &Intrinsics,
    in_region: impl Fn(usize) -> bool,
) -> u64 {
    count_unobserved_hits(belief, viewpoint, intrinsics, in_region)
}

fn count_unobserved_hits(
    belief: &BeliefGrid,
    viewpoint: &Viewpoint,
    intrinsics: &Intrinsics,
    in_region: impl Fn(usize) -> bool,
) -> u64 {
    let spec = *belief.spec();
    let origin = viewpoint.point();
    let mut seen = vec![false; spec.len()];
    let mut count = 0u64;
    let cells = belief.cells();
    for dir in viewpoint.world_rays(intrinsics) {
        traverse(&spec, &origin, &dir, intrinsics.max_range, |idx| {
            let st = cells[idx];
            if st.blocks_rays() {
                return false;
            }
            if st == CellState::Unobserved && !seen[idx] {
                seen[idx] = true;
                if in_region(idx) {
                    count += 1;
                }
            }
            true
        });
    }
    count
}

/// Where the in-hand camera may be placed: a standoff band in front of the
/// open face, or inside the shelf at a known-free voxel whose 26 neighbours
/// are known free too.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpace {
    pub standoff_min: f64,
    pub standoff_max: f64,
}

impl Default for CameraSpace {
    fn default() -> Self {
        Self { standoff_min: 0.05, standoff_max: 0.40 }
    }
}

impl CameraSpace {
    pub fn in_band(&self, spec: &GridSpec, p: &Point3<f64>) -> bool {
        let lo = spec.min_corner();
        let hi = lo + spec.extent();
        let d = lo.y - p.y;
        d >= self.standoff_min && d <= self.standoff_max && p.x >= lo.x && p.x <= hi.x && p.z >= lo.z && p.z <= hi.z
    }

    pub fn inside_ok(belief: &BeliefGrid, c: [i32; 3]) -> bool {
        let spec = belief.spec();
        if !spec.is_interior(c) {
            return false;
        }
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                    match spec.index(n) {
                        Some(i) if belief.state(i) == CellState::Free => {}
                        None if n[1] < 0 => {}
                        _ => return false,
                    }
                }
            }
        }
        true
    }

    pub fn is_valid(&self, belief: &BeliefGrid, p: &Point3<f64>) -> bool {
        let spec = belief.spec();
        if self.in_band(spec, p) {
            return true;
        }
        let c = spec.cell_at(p);
        spec.contains(c) && Self::inside_ok(belief, c)
    }
}
