//! Target retrieval path selection, blocking objects and swept-volume sensing.

use std::collections::BTreeMap;

use crate::belief::BeliefGrid;
use crate::error::{Error, Result};
use crate::gripper::{
    frontal_grasp, grasp_candidates, swept_volume, ConfigSpace, Footprint, GraspCandidate, GripperSpec, Occupancy,
    Path, PlanningGrid, SweptVolume,
};
use crate::grid::{Cell, GridSpec, ObjectId, RegionMask, VoxelStates};
use crate::sensing::{Sensor, Stage};

/// How the gripper reaches one object: grasp configuration, the path in from
/// the open face, and that path's swept volume.
#[derive(Clone, Debug, PartialEq)]
pub struct PickAccess {
    pub object: ObjectId,
    pub grasp: Cell,
    pub reach: Path,
    pub sweep: SweptVolume,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachabilityResult {
    pub target: ObjectId,
    pub target_cells: Vec<Cell>,
    pub grasp: GraspCandidate,
    /// Gripper path from the open face to the grasp.
    pub target_path: Path,
    /// Gripper and target back out of the shelf.
    pub retrieve_path: Path,
    pub target_sweep: SweptVolume,
    pub blocking: Vec<ObjectId>,
    pub pick_paths: BTreeMap<ObjectId, PickAccess>,
}

/// Grasps tried for a movable object: frontal, at its base, centered first.
pub fn object_grasps(cells: &[Cell], gripper: [i32; 3]) -> Vec<Cell> {
    let Some(k0) = cells.iter().map(|c| c[2]).min() else { return Vec::new() };
    let mut out: Vec<Cell> = Vec::new();
    for dx in [0, -1, 1, -2, 2] {
        if let Some(g) = frontal_grasp(cells, gripper, dx, k0) {
            if !out.contains(&g) {
                out.push(g);
            }
        }
    }
    out
}

/// First grasp of `cells` whose approach from the open face is collision
/// free for the bare gripper in `cspace`.
pub fn pick_access_in(
    cspace: &ConfigSpace,
    spec: &GridSpec,
    gripper: &GripperSpec,
    footprint: &Footprint,
    object: ObjectId,
    cells: &[Cell],
    clearance: usize,
) -> Option<PickAccess> {
    for grasp in object_grasps(cells, gripper.voxels(spec.voxel_size)) {
        if !cspace.free(grasp) {
            continue;
        }
        if let Ok(reach) = cspace.plan(footprint.home(grasp), grasp) {
            let sweep = swept_volume(&reach, footprint, clearance, spec);
            return Some(PickAccess { object, grasp, reach, sweep });
        }
    }
    None
}

pub fn pick_access(
    grid: &PlanningGrid,
    gripper: &GripperSpec,
    object: ObjectId,
    cells: &[Cell],
    ignore: &[ObjectId],
) -> Option<PickAccess> {
    let spec = grid.spec();
    let fp = gripper.footprint(spec.voxel_size);
    let cspace = ConfigSpace::new(grid, &fp, ignore);
    pick_access_in(&cspace, spec, gripper, &fp, object, cells, gripper.clearance)
}

/// Shell plus every known object; unobserved space counts as free.
pub fn objects_only_grid(spec: GridSpec, objects: &BTreeMap<ObjectId, Vec<Cell>>) -> PlanningGrid {
    let mut grid = PlanningGrid::walls_only(spec);
    for (&id, cells) in objects {
        for &c in cells {
            grid.set(c, Occupancy::Object(id));
        }
    }
    grid
}

/// Known non-target objects with a cell inside `sweep`, in id order.
pub fn blocking_objects(belief: &BeliefGrid, target: ObjectId, sweep: &SweptVolume) -> Vec<ObjectId> {
    let spec = belief.spec();
    belief
        .known_objects()
        .into_iter()
        .filter(|(id, cells)| *id != target && sweep.intersects(spec, cells))
        .map(|(id, _)| id)
        .collect()
}

/// Selects the grasp with the smallest reach-plus-retrieve swept volume,
/// planning against the shelf shell and the target only, then finds the
/// blocking objects and their pick paths.
pub fn plan_retrieval(belief: &BeliefGrid, target: ObjectId, gripper: &GripperSpec) -> Result<ReachabilityResult> {
    let spec = *belief.spec();
    let known = belief.known_objects();
    let target_cells = known.get(&target).cloned().ok_or(Error::NoGraspFound(target))?;
    let candidates = grasp_candidates(target, &target_cells, belief, gripper)?;
    let movables: Vec<ObjectId> = known.keys().copied().filter(|&id| id != target).collect();
    let grid = objects_only_grid(spec, &known);
    let fp = gripper.footprint(spec.voxel_size);
    let bare = ConfigSpace::new(&grid, &fp, &movables);

    let mut best: Option<(usize, GraspCandidate, Path, Path, SweptVolume)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let g = cand.gripper_pose;
        let Ok(reach) = bare.plan(fp.home(g), g) else { continue };
        let loaded = fp.attach(&target_cells, g);
        let mut ignore = movables.clone();
        ignore.push(target);
        let Ok(mut retrieve) = ConfigSpace::new(&grid, &loaded, &ignore).plan(g, loaded.home(g)) else { continue };
        retrieve.attached = Some(target);
        let sweep = swept_volume(&reach, &fp, gripper.clearance, &spec)
            .union(&swept_volume(&retrieve, &loaded, gripper.clearance, &spec));
        if best.as_ref().is_none_or(|b| sweep.len() < b.4.len()) {
            best = Some((i, GraspCandidate { gripper_pose: g, score: Some(sweep.len()) }, reach, retrieve, sweep));
        }
    }
    let (_, grasp, target_path, retrieve_path, target_sweep) = best.ok_or(Error::NoPath)?;
    let mut result = ReachabilityResult {
        target,
        target_cells,
        grasp,
        target_path,
        retrieve_path,
        target_sweep,
        blocking: Vec::new(),
        pick_paths: BTreeMap::new(),
    };
    refresh_blocking(&mut result, belief, gripper);
    Ok(result)
}

/// Recomputes the blocking set against the current belief and plans pick
/// paths for blockers that lack one. Returns the newly added blockers.
pub fn refresh_blocking(result: &mut ReachabilityResult, belief: &BeliefGrid, gripper: &GripperSpec) -> Vec<ObjectId> {
    let blocking = blocking_objects(belief, result.target, &result.target_sweep);
    let added: Vec<ObjectId> = blocking.iter().copied().filter(|id| !result.blocking.contains(id)).collect();
    let known = belief.known_objects();
    let grid = objects_only_grid(*belief.spec(), &known);
    for &id in &blocking {
        if result.pick_paths.contains_key(&id) {
            continue;
        }
        let others: Vec<ObjectId> = known.keys().copied().filter(|&o| o != id && o != result.target).collect();
        if let Some(access) = pick_access(&grid, gripper, id, &known[&id], &others) {
            result.pick_paths.insert(id, access);
        }
    }
    result.blocking = blocking;
    added
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SasOutcome {
    pub viewpoints: usize,
    /// Blockers revealed by sensing.
    pub revealed: Vec<ObjectId>,
    /// Swept-volume cells still unobserved.
    pub residual: Option<RegionMask>,
}

/// Senses the unobserved part of the target sweep, then of each blocker's
/// pick sweep. Newly revealed blockers get pick paths and their sweeps are
/// sensed in turn. The target sweep itself stays fixed.
pub fn sas(sensor: &mut Sensor<'_>, belief: &mut BeliefGrid, result: &mut ReachabilityResult, gripper: &GripperSpec) -> SasOutcome {
    let mut out = SasOutcome::default();
    let mut sensed: Vec<ObjectId> = Vec::new();
    let mut sweeps = vec![result.target_sweep.clone()];
    sweeps.extend(result.pick_paths.values().map(|p| p.sweep.clone()));
    sensed.extend(result.pick_paths.keys().copied());
    for _round in 0..4 {
        for sweep in &sweeps {
            let region = unobserved_part(belief, sweep);
            if !region.is_empty() {
                out.viewpoints += sensor.rs_sense(belief, &region, Stage::Sas).viewpoints.len();
            }
        }
        let added = refresh_blocking(result, belief, gripper);
        out.revealed.extend(added);
        sweeps = result
            .pick_paths
            .iter()
            .filter(|(id, _)| !sensed.contains(id))
            .map(|(_, p)| p.sweep.clone())
            .collect();
        let fresh: Vec<ObjectId> = result.pick_paths.keys().copied().filter(|id| !sensed.contains(id)).collect();
        sensed.extend(fresh);
        if sweeps.is_empty() {
            break;
        }
    }
    let mut all = result.target_sweep.clone();
    for p in result.pick_paths.values() {
        all = all.union(&p.sweep);
    }
    let residual = unobserved_part(belief, &all);
    out.residual = (!residual.is_empty()).then_some(residual);
    out
}

pub fn unobserved_part(belief: &BeliefGrid, sweep: &SweptVolume) -> RegionMask {
    RegionMask::new(sweep.voxels().iter().copied().filter(|&i| !belief.state(i).is_observed()).collect())
}
