//! Feedback-based sensing after a failed search: pick the most promising
//! node, cluster unobserved space and sense the cluster that would open the
//! most placements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefGrid;
use crate::error::{Error, Result};
use crate::gripper::{ConfigSpace, HeldObject, Occupancy, PlacementSearch};
use crate::grid::{grow_regions_by_index, CellState, ObjectId, RegionMask, VoxelStates};
use crate::mcts::{Problem, SearchTree, TreeNode};
use crate::reachability::{pick_access_in, unobserved_part};
use crate::sensing::{Sensor, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    #[serde(skip)]
    pub cluster: RegionMask,
    pub size: usize,
    pub opened_regions: usize,
    pub per_object: BTreeMap<ObjectId, usize>,
}

/// Fewest movables left in the sweep, then highest mean value, then lowest id.
pub fn promising_node(tree: &SearchTree) -> &TreeNode {
    let mut best = &tree.nodes[0];
    for n in &tree.nodes[1..] {
        let better = n.remaining < best.remaining || (n.remaining == best.remaining && n.mean() > best.mean());
        if better {
            best = n;
        }
    }
    best
}

/// Placements that would open up if `cluster` were free: for each movable
/// still in the sweep at `node`, the floor-level placements reachable by the
/// loaded gripper that touch the cluster and avoid the sweep.
pub fn score_cluster(cluster: &RegionMask, node: &TreeNode, problem: &Problem<'_>) -> ClusterScore {
    let mut grid = problem.grid(&node.arrangement);
    let spec = *grid.spec();
    for &v in cluster.voxels() {
        let c = spec.cell(v);
        if !spec.is_shell(c) && grid.at(c) == Occupancy::Blocked {
            grid.set(c, Occupancy::Free);
        }
    }
    let sweep = problem.sweep();
    let cspace = ConfigSpace::new(&grid, &problem.footprint, &[]);
    let mut per_object = BTreeMap::new();
    for id in problem.in_sweep(&node.arrangement) {
        let cells = problem.cells(&node.arrangement, id);
        let count = match pick_access_in(&cspace, &spec, &problem.gripper, &problem.footprint, id, &cells, 0) {
            Some(acc) => {
                let held = HeldObject { id, cells: &cells, grasp: acc.grasp };
                PlacementSearch::new(&grid, held, &problem.footprint)
                    .candidates(|moved| {
                        !sweep.intersects(&spec, moved)
                            && moved.iter().any(|&c| cluster.contains(spec.index_unchecked(c)))
                    })
                    .len()
            }
            None => 0,
        };
        per_object.insert(id, count);
    }
    ClusterScore {
        cluster: cluster.clone(),
        size: cluster.len(),
        opened_regions: per_object.values().sum(),
        per_object,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FasDecision {
    pub node: usize,
    /// Sensed the unobserved part of the target and pick sweeps first.
    pub sweep_priority: bool,
    pub scores: Vec<ClusterScore>,
    pub chosen: Option<usize>,
    pub viewpoints: usize,
}

/// Interior clusters of unobserved cells, largest first.
pub fn unobserved_clusters(belief: &BeliefGrid) -> Vec<RegionMask> {
    let spec = *belief.spec();
    grow_regions_by_index(&spec, |i| belief.state(i) == CellState::Unobserved && !spec.is_shell(spec.cell(i)))
}

/// Regions to sense, in the order they should be tried.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FasPlan {
    pub decision: FasDecision,
    regions: Vec<(Option<usize>, RegionMask)>,
}

/// Decides what one feedback step senses. Unobserved cells of the target
/// sweep or of the remaining blockers' pick sweeps come first. Otherwise
/// clusters are scored at the promising node and tried best first (ties:
/// larger, then earlier); with all scores zero this is largest first.
pub fn plan_fas(tree: &SearchTree, problem: &Problem<'_>) -> Result<FasPlan> {
    let node = promising_node(tree);
    let mut decision = FasDecision { node: node.id, ..FasDecision::default() };
    let clusters = unobserved_clusters(problem.belief);
    if clusters.is_empty() {
        return Err(Error::NothingUnobserved);
    }
    let mut focus = problem.sweep().clone();
    for id in problem.in_sweep(&node.arrangement) {
        if let Some(p) = problem.retrieval.pick_paths.get(&id) {
            focus = focus.union(&p.sweep);
        }
    }
    let priority = unobserved_part(problem.belief, &focus);
    let mut regions = Vec::new();
    if !priority.is_empty() {
        decision.sweep_priority = true;
        regions.push((None, priority));
        regions.extend(clusters.into_iter().enumerate().map(|(i, c)| (Some(i), c)));
        return Ok(FasPlan { decision, regions });
    }
    decision.scores = clusters.iter().map(|c| score_cluster(c, node, problem)).collect();
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&decision.scores[a], &decision.scores[b]);
        sb.opened_regions.cmp(&sa.opened_regions).then(sb.size.cmp(&sa.size)).then(a.cmp(&b))
    });
    regions.extend(order.into_iter().map(|i| (Some(i), clusters[i].clone())));
    Ok(FasPlan { decision, regions })
}

/// Senses the planned regions in order until one yields new observations.
/// Regions no viewpoint can see into are skipped.
pub fn select_and_sense(sensor: &mut Sensor<'_>, belief: &mut BeliefGrid, plan: FasPlan) -> Result<FasDecision> {
    let mut decision = plan.decision;
    let before = belief.observed_count();
    for (idx, region) in plan.regions {
        decision.viewpoints += sensor.rs_sense(belief, &region, Stage::Fas).viewpoints.len();
        if belief.observed_count() > before {
            decision.chosen = idx;
            return Ok(decision);
        }
    }
    Err(Error::NothingUnobserved)
}
