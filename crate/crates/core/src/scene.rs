//! Ground-truth shelf scenes: object shapes, rasterization, random generation
//! and the on-disk scene format.

use std::path::Path;

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, CellState, GridSpec, ObjectId, RegionMask, VoxelStates};

const INSIDE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Cuboid { width: f64, depth: f64, height: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    fn contains_local(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Shape::Cuboid { width, depth, height } => {
                p.x.abs() <= width / 2.0 + INSIDE_EPS
                    && p.y.abs() <= depth / 2.0 + INSIDE_EPS
                    && p.z.abs() <= height / 2.0 + INSIDE_EPS
            }
            Shape::Cylinder { radius, height } => {
                p.x * p.x + p.y * p.y <= radius * radius + INSIDE_EPS
                    && p.z.abs() <= height / 2.0 + INSIDE_EPS
            }
        }
    }

    /// Half extents of the world-axis-aligned bounding box after rotating by `yaw`.
    fn half_extents(&self, yaw: f64) -> Vector3<f64> {
        match *self {
            Shape::Cuboid { width, depth, height } => {
                let (s, c) = yaw.sin_cos();
                Vector3::new(
                    (c.abs() * width + s.abs() * depth) / 2.0,
                    (s.abs() * width + c.abs() * depth) / 2.0,
                    height / 2.0,
                )
            }
            Shape::Cylinder { radius, height } => Vector3::new(radius, radius, height / 2.0),
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            Shape::Cuboid { height, .. } | Shape::Cylinder { height, .. } => height,
        }
    }
}

/// Shape center and rotation about the vertical axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl Pose {
    pub fn point(&self) -> Point3<f64> {
        Point3::from(self.position)
    }
}

/// Voxels whose centers lie inside the posed shape.
pub fn rasterize_object(shape: &Shape, pose: &Pose, spec: &GridSpec) -> Result<Vec<usize>> {
    let center = pose.point();
    let half = shape.half_extents(pose.yaw);
    let lo = center - half;
    let hi = center + half;
    let gmin = spec.min_corner();
    let gmax = gmin + spec.extent();
    let tol = 1e-9;
    if (0..3).any(|a| lo[a] < gmin[a] - tol || hi[a] > gmax[a] + tol) {
        return Err(Error::OutOfBounds);
    }
    let c_lo = spec.cell_at(&lo);
    let c_hi = spec.cell_at(&hi);
    let inv = Rotation3::from_axis_angle(&Vector3::z_axis(), -pose.yaw);
    let mut out = Vec::new();
    for k in c_lo[2].max(0)..=c_hi[2].min(spec.dims[2] as i32 - 1) {
        for j in c_lo[1].max(0)..=c_hi[1].min(spec.dims[1] as i32 - 1) {
            for i in c_lo[0].max(0)..=c_hi[0].min(spec.dims[0] as i32 - 1) {
                let c = [i, j, k];
                let local = inv * (spec.center(c) - center);
                if shape.contains_local(&local) {
                    out.push(spec.index_unchecked(c));
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub shape: Shape,
    pub pose: Pose,
    #[serde(skip)]
    pub footprint: Vec<usize>,
}

impl SceneObject {
    pub fn new(id: ObjectId, shape: Shape, pose: Pose, spec: &GridSpec) -> Result<Self> {
        let footprint = rasterize_object(&shape, &pose, spec)?;
        Ok(Self { id, shape, pose, footprint })
    }

    pub fn footprint_cells(&self, spec: &GridSpec) -> Vec<Cell> {
        self.footprint.iter().map(|&i| spec.cell(i)).collect()
    }

    pub fn region(&self) -> RegionMask {
        RegionMask::new(self.footprint.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Large,
}

impl SizeClass {
    /// Outer shelf dimensions in meters, walls included.
    pub fn dimensions(self) -> [f64; 3] {
        match self {
            SizeClass::Small => [0.60, 0.40, 0.40],
            SizeClass::Large => [1.00, 0.50, 0.50],
        }
    }

    pub fn grid_spec(self, voxel_size: f64) -> GridSpec {
        let d = self.dimensions();
        let dims = d.map(|m| (m / voxel_size).round().max(3.0) as usize);
        GridSpec::new(dims, voxel_size, [0.0; 3]).expect("size class dims are valid")
    }
}

impl std::str::FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::Format(format!("unknown size class {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpenFace {
    #[serde(rename = "-y")]
    NegY,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene {
    pub spec: GridSpec,
    cells: Vec<CellState>,
    pub objects: Vec<SceneObject>,
    pub target_id: ObjectId,
    pub open_face: OpenFace,
    pub seed: u64,
    pub size_class: Option<SizeClass>,
}

impl VoxelStates for GroundTruthScene {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn state(&self, idx: usize) -> CellState {
        self.cells[idx]
    }
}

impl GroundTruthScene {
    /// Builds a validated shelf: shell walls, objects rasterized into the
    /// interior with pairwise disjoint footprints.
    pub fn assemble(spec: GridSpec, objects: Vec<SceneObject>, target_id: ObjectId) -> Result<Self> {
        let mut cells = vec![CellState::Free; spec.len()];
        for (i, cell) in cells.iter_mut().enumerate() {
            if spec.is_shell(spec.cell(i)) {
                *cell = CellState::Wall;
            }
        }
        for obj in &objects {
            if obj.footprint.is_empty() {
                return Err(Error::Format(format!("object {} has an empty footprint", obj.id)));
            }
            for &v in &obj.footprint {
                match cells[v] {
                    CellState::Free => cells[v] = CellState::Occupied(obj.id),
                    CellState::Wall => return Err(Error::OutOfBounds),
                    _ => return Err(Error::Format(format!("object {} overlaps another object", obj.id))),
                }
            }
        }
        if !objects.iter().any(|o| o.id == target_id) {
            return Err(Error::UnknownObject(target_id));
        }
        Ok(Self { spec, cells, objects, target_id, open_face: OpenFace::NegY, seed: 0, size_class: None })
    }

    /// Unvalidated constructor for hand-built lattices (tests, oracles).
    pub fn from_parts(spec: GridSpec, cells: Vec<CellState>, objects: Vec<SceneObject>, target_id: ObjectId) -> Self {
        assert_eq!(cells.len(), spec.len());
        Self { spec, cells, objects, target_id, open_face: OpenFace::NegY, seed: 0, size_class: None }
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target(&self) -> &SceneObject {
        self.object(self.target_id).expect("target exists")
    }

    pub fn movables(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(move |o| o.id != self.target_id)
    }

    /// Cells in front of the target that a straight frontal retrieval has to
    /// pass through: the target's x-extent widened by one voxel, from the open
    /// face up to the target's front, floor to the target's top.
    pub fn corridor(&self) -> RegionMask {
        let cells = self.target().footprint_cells(&self.spec);
        let (x0, x1) = min_max(cells.iter().map(|c| c[0]));
        let (y0, _) = min_max(cells.iter().map(|c| c[1]));
        let (_, z1) = min_max(cells.iter().map(|c| c[2]));
        let mut out = Vec::new();
        for k in 1..=z1 {
            for j in 0..y0 {
                for i in x0 - 1..=x1 + 1 {
                    if let Some(idx) = self.spec.index([i, j, k]) {
                        if !self.spec.is_shell([i, j, k]) {
                            out.push(idx);
                        }
                    }
                }
            }
        }
        RegionMask::new(out)
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            seed: self.seed,
            size_class: self.size_class,
            target_id: self.target_id,
            open_face: self.open_face,
            grid: self.spec,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectRecord { id: o.id, shape: o.shape, pose: o.pose })
                .collect(),
        }
    }

    pub fn from_file(file: &SceneFile) -> Result<Self> {
        let spec = GridSpec::new(file.grid.dims, file.grid.voxel_size, file.grid.origin)?;
        let objects = file
            .objects
            .iter()
            .map(|r| SceneObject::new(r.id, r.shape, r.pose, &spec))
            .collect::<Result<Vec<_>>>()?;
        let mut scene = Self::assemble(spec, objects, file.target_id)?;
        scene.seed = file.seed;
        scene.size_class = file.size_class;
        scene.open_face = file.open_face;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SceneFile = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_file().to_toml()?)?;
        Ok(())
    }
}

fn min_max(it: impl Iterator<Item = i32>) -> (i32, i32) {
    it.fold((i32::MAX, i32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub shape: Shape,
    pub pose: Pose,
}

/// Serialized scene: grid, objects and provenance. Cells are rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_class: Option<SizeClass>,
    pub target_id: ObjectId,
    pub open_face: OpenFace,
    pub grid: GridSpec,
    pub objects: Vec<ObjectRecord>,
}

impl SceneFile {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Scene generator parameters. Sizes are in voxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub voxel_size: f64,
    pub obstacle_base: (i32, i32),
    pub obstacle_height: (i32, i32),
    pub target_base: (i32, i32),
    pub target_height: (i32, i32),
    /// Minimum empty voxels between two objects' footprints in x/y.
    pub min_gap: i32,
    /// Probability that an obstacle is sampled next to the growing cluster
    /// around the target instead of anywhere on the shelf floor.
    pub near_target: f64,
    /// Largest gap, in voxels, between a clustered obstacle and the object
    /// it is sampled next to.
    pub near_radius: i32,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.02,
            obstacle_base: (4, 6),
            obstacle_height: (6, 12),
            target_base: (3, 4),
            target_height: (5, 8),
            min_gap: 1,
            near_target: 1.0,
            near_radius: 1,
            max_attempts: 10_000,
        }
    }
}

/// Axis-aligned voxel-unit description used during sampling.
#[derive(Clone, Copy, Debug)]
struct Blueprint {
    shape: Shape,
    ext: [i32; 3],
}

impl Blueprint {
    fn sample(rng: &mut ChaCha8Rng, base: (i32, i32), height: (i32, i32), vs: f64) -> Self {
        let h = rng.random_range(height.0..=height.1);
        if rng.random_bool(0.5) {
            let d = rng.random_range(base.0.max(2)..=base.1);
            let r = d as f64 * vs / 2.0;
            Self { shape: Shape::Cylinder { radius: r, height: h as f64 * vs }, ext: [d, d, h] }
        } else {
            let w = rng.random_range(base.0..=base.1);
            let d = rng.random_range(base.0..=base.1);
            Self {
                shape: Shape::Cuboid { width: w as f64 * vs, depth: d as f64 * vs, height: h as f64 * vs },
                ext: [w, d, h],
            }
        }
    }

    /// Pose for a footprint whose min corner is `(x0, y0)` standing on the floor.
    fn pose_at(&self, spec: &GridSpec, x0: i32, y0: i32) -> Pose {
        let vs = spec.voxel_size;
        Pose {
            position: [
                spec.origin[0] + (x0 as f64 + self.ext[0] as f64 / 2.0) * vs,
                spec.origin[1] + (y0 as f64 + self.ext[1] as f64 / 2.0) * vs,
                spec.origin[2] + (1.0 + self.ext[2] as f64 / 2.0) * vs,
            ],
            yaw: 0.0,
        }
    }
}

/// Deterministic random shelf. The target sits in the rear half; obstacles are
/// rejection-sampled without overlap and the first one is forced into the
/// frontal corridor so retrieval needs at least one relocation.
pub fn generate_scene(seed: u64, size_class: SizeClass, n_obstacles: usize) -> Result<GroundTruthScene> {
    generate_scene_with(seed, size_class, n_obstacles, &GeneratorConfig::default())
}

pub fn generate_scene_with(
    seed: u64,
    size_class: SizeClass,
    n_obstacles: usize,
    cfg: &GeneratorConfig,
) -> Result<GroundTruthScene> {
    let spec = size_class.grid_spec(cfg.voxel_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [nx, ny, nz] = spec.dims.map(|n| n as i32);
    let vs = spec.voxel_size;
    let mut attempts = 0usize;

    // Interior: x in 1..nx-1, y in 0..ny-1, z in 1..nz-1.
    let target_bp = Blueprint::sample(&mut rng, cfg.target_base, cfg.target_height, vs);
    let (tx0, ty0) = loop {
        attempts += 1;
        if attempts > cfg.max_attempts {
            return Err(Error::PlacementFailure(cfg.max_attempts));
        }
        let x0 = rng.random_range(1..=nx - 1 - target_bp.ext[0]);
        let y_lo = ny / 2;
        let y_hi = ny - 1 - target_bp.ext[1];
        if y_lo > y_hi || target_bp.ext[2] + 1 >= nz - 1 {
            continue;
        }
        break (x0, rng.random_range(y_lo..=y_hi));
    };
    let target = SceneObject::new(ObjectId(0), target_bp.shape, target_bp.pose_at(&spec, tx0, ty0), &spec)?;
    let mut placed: Vec<(SceneObject, [i32; 4])> =
        vec![(target, [tx0, ty0, tx0 + target_bp.ext[0], ty0 + target_bp.ext[1]])];

    let corridor_x = (tx0 - 1, tx0 + target_bp.ext[0] + 1);
    while placed.len() < n_obstacles + 1 {
        attempts += 1;
        if attempts > cfg.max_attempts {
            return Err(Error::PlacementFailure(cfg.max_attempts));
        }
        let bp = Blueprint::sample(&mut rng, cfg.obstacle_base, cfg.obstacle_height, vs);
        let [ex, ey, _] = bp.ext;
        let x_range = (1, nx - 1 - ex);
        let y_range = (0, ny - 1 - ey);
        let (x0, y0) = if placed.len() == 1 {
            // Blocker: overlaps the corridor's x-span and sits in front of the target.
            let lo = (corridor_x.0 - ex + 1).max(x_range.0);
            let hi = (corridor_x.1 - 1).min(x_range.1);
            let y_hi = ty0 - ey - cfg.min_gap;
            if lo > hi || y_hi < 0 {
                continue;
            }
            (rng.random_range(lo..=hi), rng.random_range(0..=y_hi))
        } else if rng.random_bool(cfg.near_target) {
            // Grow the cluster: land within `near_radius` of an object already placed.
            let r = placed[rng.random_range(0..placed.len())].1;
            let lo_x = (r[0] - cfg.near_radius - ex).max(x_range.0);
            let hi_x = (r[2] + cfg.near_radius).min(x_range.1);
            let lo_y = (r[1] - cfg.near_radius - ey).max(y_range.0);
            let hi_y = (r[3] + cfg.near_radius).min(y_range.1);
            if lo_x > hi_x || lo_y > hi_y {
                continue;
            }
            (rng.random_range(lo_x..=hi_x), rng.random_range(lo_y..=hi_y))
        } else {
            if x_range.0 > x_range.1 || y_range.0 > y_range.1 {
                continue;
            }
            (rng.random_range(x_range.0..=x_range.1), rng.random_range(y_range.0..=y_range.1))
        };
        let rect = [x0, y0, x0 + ex, y0 + ey];
        let g = cfg.min_gap;
        let clash = placed.iter().any(|(_, r)| {
            rect[0] < r[2] + g && r[0] < rect[2] + g && rect[1] < r[3] + g && r[1] < rect[3] + g
        });
        if clash || bp.ext[2] + 1 >= nz - 1 {
            continue;
        }
        let id = ObjectId(placed.len() as u32);
        let obj = SceneObject::new(id, bp.shape, bp.pose_at(&spec, x0, y0), &spec)?;
        placed.push((obj, rect));
    }

    let objects: Vec<SceneObject> = placed.into_iter().map(|(o, _)| o).collect();
    let mut scene = GroundTruthScene::assemble(spec, objects, ObjectId(0))?;
    scene.seed = seed;
    scene.size_class = Some(size_class);
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, vs: f64) -> GridSpec {
        GridSpec::new([n, n, n], vs, [0.0; 3]).unwrap()
    }

    #[test]
    fn unit_cube_on_voxel_center_is_one_voxel() {
        let s = spec(8, 0.02);
        let c = s.center([3, 4, 5]);
        let shape = Shape::Cuboid { width: 0.02, depth: 0.02, height: 0.02 };
        let fp = rasterize_object(&shape, &Pose { position: c.into(), yaw: 0.0 }, &s).unwrap();
        assert_eq!(fp, vec![s.index_unchecked([3, 4, 5])]);
    }

    #[test]
    fn square_cuboid_yaw_symmetry() {
        let s = spec(20, 0.01);
        let shape = Shape::Cuboid { width: 0.06, depth: 0.06, height: 0.04 };
        let pose = |yaw| Pose { position: [0.1, 0.1, 0.1], yaw };
        let a = rasterize_object(&shape, &pose(0.0), &s).unwrap();
        let b = rasterize_object(&shape, &pose(std::f64::consts::FRAC_PI_2), &s).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(!a.is_empty());
    }

    #[test]
    fn out_of_bounds_rejected() {
        let s = spec(8, 0.02);
        let shape = Shape::Cylinder { radius: 0.05, height: 0.1 };
        let err = rasterize_object(&shape, &Pose { position: [0.02, 0.08, 0.08], yaw: 0.0 }, &s);
        assert!(matches!(err, Err(Error::OutOfBounds)));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(7, SizeClass::Small, 6).unwrap();
        let b = generate_scene(7, SizeClass::Small, 6).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a.objects, b.objects);
    }

    #[test]
    fn zero_obstacles_gives_target_only() {
        let s = generate_scene(3, SizeClass::Large, 0).unwrap();
        assert_eq!(s.objects.len(), 1);
        assert_eq!(s.target_id, ObjectId(0));
    }

    #[test]
    fn target_in_rear_half() {
        for seed in 0..20 {
            let s = generate_scene(seed, SizeClass::Small, 5).unwrap();
            let ny = s.spec.dims[1] as i32;
            assert!(s.target().footprint_cells(&s.spec).iter().all(|c| c[1] >= ny / 2));
        }
    }

    #[test]
    fn scene_file_roundtrip() {
        let s = generate_scene(11, SizeClass::Large, 8).unwrap();
        let text = s.to_file().to_toml().unwrap();
        let parsed: SceneFile = toml::from_str(&text).unwrap();
        let back = GroundTruthScene::from_file(&parsed).unwrap();
        assert_eq!(back.cells(), s.cells());
        assert_eq!(back.to_file(), s.to_file());
    }
}
