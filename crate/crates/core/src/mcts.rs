//! Monte-Carlo tree search over object arrangements for clearing the target's
//! retrieval swept volume.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefGrid;
use crate::error::{Error, Result};
use crate::gripper::{
    add, centroid, shift, ConfigSpace, Footprint, GripperSpec, Path, PlacementSearch, HeldObject, Occupancy,
    PlanningGrid, SweptVolume,
};
use crate::grid::{Cell, ObjectId, VoxelStates};
use crate::reachability::{pick_access_in, PickAccess, ReachabilityResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerMode {
    /// Relocation inside the target sweep allowed as a fallback.
    #[default]
    Or,
    /// Objects are never placed inside the target sweep.
    Ss,
}

impl std::str::FromStr for PlannerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(Self::Or),
            "ss" => Ok(Self::Ss),
            _ => Err(Error::InvalidSpec(format!("unknown planner mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Or => "OR",
            Self::Ss => "SS",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub exploration_c: f64,
    /// Placements per object per expansion.
    pub branching: usize,
    pub max_iterations: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    pub w_clear: f64,
    pub w_distance: f64,
    pub w_rollout: f64,
    /// Distance normalizer in meters; ten shelf widths when unset.
    pub distance_norm: Option<f64>,
    /// In-sweep candidates checked per object by the fallback.
    pub fallback_candidates: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            exploration_c: 1.0,
            branching: 3,
            max_iterations: 1000,
            time_limit: 30.0,
            w_clear: 0.6,
            w_distance: 0.2,
            w_rollout: 0.4,
            distance_norm: None,
            fallback_candidates: 48,
        }
    }
}

/// Object translations (voxels) relative to the belief, movables only.
pub type Arrangement = BTreeMap<ObjectId, Cell>;

/// One pick-and-place: reach the grasp, carry to the placement, retract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relocation {
    pub object: ObjectId,
    pub pick_pose: Cell,
    pub place_pose: Cell,
    /// Object translation in voxels.
    pub offset: Cell,
    /// Euclidean displacement of the object in meters.
    pub distance: f64,
    pub reach: Path,
    pub carry: Path,
    pub retract: Path,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub arrangement: Arrangement,
    pub action: Option<Relocation>,
    pub visits: u32,
    pub total_value: f64,
    pub cumulative_distance: f64,
    /// Movables still intersecting the target sweep.
    pub remaining: usize,
    pub expanded: bool,
    /// No success reachable below this node.
    pub dead: bool,
}

impl TreeNode {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_value / self.visits as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub action: Option<String>,
    pub visits: u32,
    pub total_value: f64,
    pub remaining: usize,
    pub cleared: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub nodes: Vec<NodeRecord>,
}

impl SearchTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut node: TreeNode) -> usize {
        let id = self.nodes.len();
        node.id = id;
        if let Some(p) = node.parent {
            self.nodes[p].children.push(id);
        }
        self.nodes.push(node);
        id
    }

    /// Node ids from the root down to `id`.
    pub fn lineage(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut at = id;
        while let Some(p) = self.nodes[at].parent {
            out.push(p);
            at = p;
        }
        out.reverse();
        out
    }

    pub fn actions_to(&self, id: usize) -> Vec<Relocation> {
        self.lineage(id).into_iter().filter_map(|n| self.nodes[n].action.clone()).collect()
    }

    pub fn dump(&self) -> TreeDump {
        let root_remaining = self.nodes.first().map_or(0, |n| n.remaining);
        TreeDump {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    parent: n.parent,
                    action: n.action.as_ref().map(|a| {
                        format!("{} {:?}->{:?}", a.object, a.pick_pose, a.place_pose)
                    }),
                    visits: n.visits,
                    total_value: n.total_value,
                    remaining: n.remaining,
                    cleared: root_remaining.saturating_sub(n.remaining),
                })
                .collect(),
        }
    }

    /// Adds `value` to every node from `id` up to the root.
    pub fn backprop(&mut self, id: usize, value: f64) {
        let mut at = Some(id);
        while let Some(n) = at {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.total_value += value;
            at = node.parent;
        }
    }

    fn mark_dead(&mut self, id: usize) {
        let mut at = Some(id);
        while let Some(n) = at {
            let node = &self.nodes[n];
            let all_dead = node.children.iter().all(|&c| self.nodes[c].dead);
            if !(node.expanded && all_dead) && n != id {
                break;
            }
            self.nodes[n].dead = true;
            at = self.nodes[n].parent;
        }
    }
}

pub fn ucb(total_value: f64, visits: u32, parent_visits: u32, c: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    let n = visits as f64;
    total_value / n + c * (2.0 * (parent_visits.max(1) as f64).ln() / n).sqrt()
}

/// Child with the largest UCB among live children; creation order breaks ties.
pub fn select_child(tree: &SearchTree, node: usize, c: f64) -> Option<usize> {
    let parent = &tree.nodes[node];
    let mut best: Option<(usize, f64)> = None;
    for &ch in &parent.children {
        let child = &tree.nodes[ch];
        if child.dead {
            continue;
        }
        let u = ucb(child.total_value, child.visits, parent.visits, c);
        if best.is_none_or(|(_, b)| u > b) {
            best = Some((ch, u));
        }
    }
    best.map(|b| b.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Success,
    /// The sweep was cleared of objects but still has unobserved cells.
    SweepUnobserved,
    /// Every branch was a dead end.
    Exhausted,
    /// Iteration or time budget spent.
    Timeout,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub iterations: usize,
    pub nodes: usize,
    /// Seconds; not reproducible.
    pub elapsed: f64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub status: SearchStatus,
    pub plan: Option<Vec<Relocation>>,
    /// Node that ended the search (success or cleared-but-unobserved).
    pub terminal: Option<usize>,
    pub tree: SearchTree,
    pub stats: SearchStats,
}

/// Fixed inputs of one search: the belief, the frozen retrieval and the
/// planning grid derived from the belief.
pub struct Problem<'a> {
    pub belief: &'a BeliefGrid,
    pub retrieval: &'a ReachabilityResult,
    pub gripper: GripperSpec,
    pub footprint: Footprint,
    pub base: PlanningGrid,
    /// Known movables and their cells in the belief.
    pub objects: BTreeMap<ObjectId, Vec<Cell>>,
    pub mode: PlannerMode,
    pub config: MctsConfig,
}

impl<'a> Problem<'a> {
    pub fn new(
        belief: &'a BeliefGrid,
        retrieval: &'a ReachabilityResult,
        gripper: GripperSpec,
        mode: PlannerMode,
        config: MctsConfig,
    ) -> Self {
        let mut objects = belief.known_objects();
        objects.remove(&retrieval.target);
        let footprint = gripper.footprint(belief.spec().voxel_size);
        Self { belief, retrieval, gripper, footprint, base: PlanningGrid::from_belief(belief), objects, mode, config }
    }

    pub fn sweep(&self) -> &SweptVolume {
        &self.retrieval.target_sweep
    }

    pub fn cells(&self, arr: &Arrangement, id: ObjectId) -> Vec<Cell> {
        let cells = &self.objects[&id];
        match arr.get(&id) {
            Some(&off) => shift(cells, off),
            None => cells.clone(),
        }
    }

    pub fn grid(&self, arr: &Arrangement) -> PlanningGrid {
        let mut grid = self.base.clone();
        for (&id, &off) in arr {
            let cells = &self.objects[&id];
            grid.move_object(id, cells, &shift(cells, off));
        }
        grid
    }

    /// Movables whose cells meet the target sweep, in id order.
    pub fn in_sweep(&self, arr: &Arrangement) -> Vec<ObjectId> {
        let spec = self.belief.spec();
        self.objects
            .keys()
            .copied()
            .filter(|&id| self.sweep().intersects(spec, &self.cells(arr, id)))
            .collect()
    }

    pub fn sweep_fully_observed(&self) -> bool {
        self.sweep().voxels().iter().all(|&i| self.belief.state(i).is_observed())
    }

    /// Retrieval paths collision free in `grid`.
    pub fn retrieval_clear(&self, grid: &PlanningGrid) -> bool {
        let r = self.retrieval;
        let ignore = [r.target];
        let reach_ok = r.target_path.positions.iter().all(|&p| !self.footprint.collides(grid, p, &ignore));
        let loaded = self.footprint.attach(&r.target_cells, r.grasp.gripper_pose);
        let retrieve_ok = r.retrieve_path.positions.iter().all(|&p| !loaded.collides(grid, p, &ignore));
        reach_ok && retrieve_ok
    }

    fn access(&self, grid: &PlanningGrid, cspace: &ConfigSpace, arr: &Arrangement, id: ObjectId) -> Option<PickAccess> {
        pick_access_in(
            cspace,
            grid.spec(),
            &self.gripper,
            &self.footprint,
            id,
            &self.cells(arr, id),
            self.gripper.clearance,
        )
        .map(|mut a| {
            a.reach.attached = None;
            a
        })
    }

    /// Movables on the pick path of `id` if other movables were absent.
    fn dependency_blockers(&self, grid: &PlanningGrid, arr: &Arrangement, id: ObjectId) -> Vec<ObjectId> {
        let others: Vec<ObjectId> = self.objects.keys().copied().filter(|&o| o != id).collect();
        let cspace = ConfigSpace::new(grid, &self.footprint, &others);
        let Some(access) = pick_access_in(&cspace, grid.spec(), &self.gripper, &self.footprint, id, &self.cells(arr, id), 0)
        else {
            return Vec::new();
        };
        let spec = grid.spec();
        others
            .into_iter()
            .filter(|&o| access.sweep.intersects(spec, &self.cells(arr, o)))
            .collect()
    }

    fn relocation(&self, access: &PickAccess, placement: crate::gripper::Placement) -> Relocation {
        Relocation {
            object: access.object,
            pick_pose: access.grasp,
            place_pose: placement.place_pose,
            offset: placement.offset,
            distance: placement.distance,
            reach: access.reach.clone(),
            carry: placement.carry,
            retract: placement.retract,
        }
    }

    /// Candidate relocations from an arrangement.
    pub fn expand_moves(&self, arr: &Arrangement) -> Vec<Relocation> {
        let grid = self.grid(arr);
        let cspace = ConfigSpace::new(&grid, &self.footprint, &[]);
        let spec = *grid.spec();
        let in_sweep = self.in_sweep(arr);
        let mut move_set = in_sweep.clone();
        let mut access: BTreeMap<ObjectId, Option<PickAccess>> = BTreeMap::new();
        let mut i = 0;
        while i < move_set.len() {
            let id = move_set[i];
            let acc = self.access(&grid, &cspace, arr, id);
            if acc.is_none() {
                for b in self.dependency_blockers(&grid, arr, id) {
                    if !move_set.contains(&b) {
                        move_set.push(b);
                    }
                }
            }
            access.insert(id, acc);
            i += 1;
        }

        let sweep = self.sweep();
        let mut moves = Vec::new();
        let mut searches = Vec::new();
        for &id in &move_set {
            let Some(acc) = &access[&id] else { continue };
            let cells = self.cells(arr, id);
            let anchor = centroid(&spec, &cells);
            let held = HeldObject { id, cells: &cells, grasp: acc.grasp };
            let search = PlacementSearch::new(&grid, held, &self.footprint);
            let candidates = search.candidates(|c| !sweep.intersects(&spec, c));
            for p in search.ranked(candidates, anchor, self.config.branching) {
                moves.push(self.relocation(acc, p));
            }
            searches.push((id, cells.clone()));
        }
        if !moves.is_empty() || self.mode == PlannerMode::Ss {
            return moves;
        }

        // Park an object inside the sweep, but only where that opens a pick
        // path for an in-sweep object that had none.
        let locked: Vec<ObjectId> = in_sweep.iter().copied().filter(|id| access[id].is_none()).collect();
        if locked.is_empty() {
            return moves;
        }
        for (id, cells) in searches {
            let acc = access[&id].as_ref().expect("searched objects are accessible");
            let anchor = centroid(&spec, &cells);
            let held = HeldObject { id, cells: &cells, grasp: acc.grasp };
            let search = PlacementSearch::new(&grid, held, &self.footprint);
            let inside = search.candidates(|c| sweep.intersects(&spec, c));
            let mut ranked: Vec<(f64, Cell)> = inside
                .into_iter()
                .map(|o| {
                    let moved = centroid(&spec, &shift(&cells, o));
                    ((moved - anchor).norm(), o)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut made = 0;
            for (d, off) in ranked.into_iter().take(self.config.fallback_candidates) {
                if made >= self.config.branching {
                    break;
                }
                let mut next = arr.clone();
                let total = add(*next.get(&id).unwrap_or(&[0, 0, 0]), off);
                next.insert(id, total);
                let after = self.grid(&next);
                let after_space = ConfigSpace::new(&after, &self.footprint, &[]);
                let unlocks = locked
                    .iter()
                    .any(|&o| o != id && self.access(&after, &after_space, &next, o).is_some());
                if !unlocks {
                    continue;
                }
                if let Some(p) = search.complete(off, d) {
                    moves.push(self.relocation(acc, p));
                    made += 1;
                }
            }
        }
        moves
    }

    fn apply(&self, arr: &Arrangement, mv: &Relocation) -> Arrangement {
        let mut next = arr.clone();
        let total = add(*next.get(&mv.object).unwrap_or(&[0, 0, 0]), mv.offset);
        next.insert(mv.object, total);
        next
    }

    pub fn distance_norm(&self) -> f64 {
        self.config.distance_norm.unwrap_or_else(|| 10.0 * self.belief.spec().extent().x)
    }

    /// Greedy completion: repeatedly move the in-sweep object nearest the
    /// open face to its nearest placement outside the sweep. Returns the
    /// number of movables left in the sweep.
    pub fn rollout(&self, arr: &Arrangement, depth: usize) -> usize {
        let spec = *self.belief.spec();
        let sweep = self.sweep();
        let mut arr = arr.clone();
        let mut remaining = self.in_sweep(&arr);
        for _ in 0..depth {
            if remaining.is_empty() {
                break;
            }
            let grid = self.grid(&arr);
            let cspace = ConfigSpace::new(&grid, &self.footprint, &[]);
            let mut order: Vec<(f64, ObjectId)> =
                remaining.iter().map(|&id| (centroid(&spec, &self.cells(&arr, id)).y, id)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut moved = None;
            for (_, id) in order {
                let Some(acc) = self.access(&grid, &cspace, &arr, id) else { continue };
                let cells = self.cells(&arr, id);
                let held = HeldObject { id, cells: &cells, grasp: acc.grasp };
                let search = PlacementSearch::new(&grid, held, &self.footprint);
                let candidates = search.candidates(|c| !sweep.intersects(&spec, c));
                if let Some(p) = search.ranked(candidates, centroid(&spec, &cells), 1).into_iter().next() {
                    moved = Some((id, p.offset));
                    break;
                }
            }
            let Some((id, off)) = moved else { break };
            let total = add(*arr.get(&id).unwrap_or(&[0, 0, 0]), off);
            arr.insert(id, total);
            remaining = self.in_sweep(&arr);
        }
        remaining.len()
    }

    /// Pre-clamp node value.
    pub fn raw_value(&self, remaining: usize, after_rollout: usize, distance: f64, blockers: usize) -> f64 {
        let n = blockers.max(1) as f64;
        let cleared = (1.0 - remaining as f64 / n).clamp(0.0, 1.0);
        let rolled = (1.0 - after_rollout as f64 / n).clamp(0.0, 1.0);
        let c = &self.config;
        c.w_clear * cleared - c.w_distance * (distance / self.distance_norm()).min(1.0) + c.w_rollout * rolled
    }

    pub fn evaluate(&self, node: &TreeNode, blockers: usize) -> f64 {
        let after = if node.remaining == 0 { 0 } else { self.rollout(&node.arrangement, blockers.max(1)) };
        self.raw_value(node.remaining, after, node.cumulative_distance, blockers).clamp(0.0, 1.0)
    }
}

/// Runs the search until a node clears the sweep or the budget is spent.
pub fn search(problem: &Problem<'_>) -> Result<SearchOutcome> {
    let start = Instant::now();
    if problem.sweep().is_empty() {
        return Err(Error::InfeasibleRoot("empty target sweep".into()));
    }
    let root_arr = Arrangement::new();
    let root_remaining = problem.in_sweep(&root_arr).len();
    let mut tree = SearchTree::default();
    tree.push(TreeNode {
        id: 0,
        parent: None,
        children: Vec::new(),
        arrangement: root_arr,
        action: None,
        visits: 0,
        total_value: 0.0,
        cumulative_distance: 0.0,
        remaining: root_remaining,
        expanded: false,
        dead: false,
    });
    let blockers = root_remaining;
    let finish = |tree: SearchTree, status, terminal: Option<usize>, iterations| {
        let plan = (status == SearchStatus::Success).then(|| tree.actions_to(terminal.expect("success has a node")));
        let stats = SearchStats { iterations, nodes: tree.len(), elapsed: start.elapsed().as_secs_f64() };
        Ok(SearchOutcome { status, plan, terminal, tree, stats })
    };
    if let Some(status) = terminal_status(problem, &tree.nodes[0]) {
        return finish(tree, status, Some(0), 0);
    }

    let c = problem.config.exploration_c;
    let mut iterations = 0;
    while iterations < problem.config.max_iterations && start.elapsed().as_secs_f64() < problem.config.time_limit {
        if tree.nodes[0].dead {
            return finish(tree, SearchStatus::Exhausted, None, iterations);
        }
        iterations += 1;
        let mut at = 0;
        while tree.nodes[at].expanded {
            match select_child(&tree, at, c) {
                Some(ch) => at = ch,
                None => break,
            }
        }
        if at != 0 && tree.nodes[at].visits == 0 {
            let v = problem.evaluate(&tree.nodes[at], blockers);
            tree.backprop(at, v);
            continue;
        }
        let moves = problem.expand_moves(&tree.nodes[at].arrangement);
        tree.nodes[at].expanded = true;
        if moves.is_empty() {
            tree.mark_dead(at);
            tree.backprop(at, 0.0);
            continue;
        }
        let parent_arr = tree.nodes[at].arrangement.clone();
        let parent_dist = tree.nodes[at].cumulative_distance;
        let mut first = None;
        for mv in moves {
            let arr = problem.apply(&parent_arr, &mv);
            let remaining = problem.in_sweep(&arr).len();
            let id = tree.push(TreeNode {
                id: 0,
                parent: Some(at),
                children: Vec::new(),
                arrangement: arr,
                cumulative_distance: parent_dist + mv.distance,
                action: Some(mv),
                visits: 0,
                total_value: 0.0,
                remaining,
                expanded: false,
                dead: false,
            });
            first.get_or_insert(id);
            if let Some(status) = terminal_status(problem, &tree.nodes[id]) {
                let v = problem.evaluate(&tree.nodes[id], blockers);
                tree.backprop(id, v);
                return finish(tree, status, Some(id), iterations);
            }
        }
        let leaf = first.expect("moves were non-empty");
        let v = problem.evaluate(&tree.nodes[leaf], blockers);
        tree.backprop(leaf, v);
    }
    let status = if tree.nodes[0].dead { SearchStatus::Exhausted } else { SearchStatus::Timeout };
    finish(tree, status, None, iterations)
}

fn terminal_status(problem: &Problem<'_>, node: &TreeNode) -> Option<SearchStatus> {
    if node.remaining > 0 {
        return None;
    }
    if !problem.sweep_fully_observed() {
        return Some(SearchStatus::SweepUnobserved);
    }
    let grid = problem.grid(&node.arrangement);
    problem.retrieval_clear(&grid).then_some(SearchStatus::Success)
}

/// Occupancy of `grid` restricted to the sweep, for assertions in tests.
pub fn movables_in_sweep(grid: &PlanningGrid, sweep: &SweptVolume, target: ObjectId) -> Vec<ObjectId> {
    let mut out: Vec<ObjectId> = sweep
        .voxels()
        .iter()
        .filter_map(|&i| match grid.state_at_index(i) {
            Occupancy::Object(id) if id != target => Some(id),
            _ => None,
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
