//! Oracle-backed acceptance checks. Each returns a short detail string on
//! success and a description of the first mismatch otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orsense::belief::BeliefGrid;
use orsense::camera::{apply_viewpoint, cast_ray, Intrinsics, Viewpoint};
use orsense::fas::{score_cluster, unobserved_clusters};
use orsense::gripper::{plan_path, Footprint, GripperSpec, PlanningGrid, OUTSIDE_DEPTH};
use orsense::grid::{grow_regions, CellState, GridSpec, ObjectId, VoxelStates};
use orsense::mcts::{search, ucb, select_child, Arrangement, MctsConfig, PlannerMode, Problem, SearchTree, TreeNode};
use orsense::reachability::{object_grasps, plan_retrieval};
use orsense::scene::{generate_scene, GroundTruthScene, SizeClass};

use super::*;

pub type Check = Result<String, String>;

fn random_scene(rng: &mut ChaCha8Rng, dims: [usize; 3], states: &[(f64, CellState)]) -> GroundTruthScene {
    let spec = GridSpec::new(dims, VS, [0.0; 3]).unwrap();
    let cells = (0..spec.len())
        .map(|_| {
            let mut u: f64 = rng.random();
            for &(p, s) in states {
                if u < p {
                    return s;
                }
                u -= p;
            }
            CellState::Free
        })
        .collect();
    GroundTruthScene::from_parts(spec, cells, Vec::new(), ObjectId(0))
}

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Ray traversal against the exact slab oracle on 100 random 16^3 grids.
pub fn c1_ray_casting() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rays = 0;
    for g in 0..100 {
        let gt = random_scene(&mut rng, [16; 3], &[(0.12, CellState::Occupied(ObjectId(1))), (0.03, CellState::Wall)]);
        let ext = 16.0 * VS;
        for r in 0..100 {
            let origin = Point3::new(
                rng.random_range(-0.2 * ext..1.2 * ext),
                rng.random_range(-0.2 * ext..1.2 * ext),
                rng.random_range(-0.2 * ext..1.2 * ext),
            );
            let dir = unit(&mut rng);
            let range = rng.random_range(0.05..0.7);
            let got = cast_ray(&gt, &origin, &dir, range);
            let want = slab_oracle(&gt, &origin, &dir, range);
            if got.voxels != want {
                return Err(format!("grid {g} ray {r}: traversal {:?} != oracle {:?}", got.voxels, want));
            }
            let want_hit = want.last().copied().filter(|&i| gt.state(i).blocks_rays());
            if got.hit != want_hit {
                return Err(format!("grid {g} ray {r}: hit {:?} != {:?}", got.hit, want_hit));
            }
            // The oracle itself: every densely sampled voxel is a crossing.
            let all = slab_crossings(&gt.spec, &origin, &dir, range);
            if let Some(v) = dense_samples(&gt.spec, &origin, &dir, range, VS / 50.0).iter().find(|v| !all.contains(v)) {
                return Err(format!("grid {g} ray {r}: sampled voxel {v} missing from the slab oracle"));
            }
            rays += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 5.0 {
        return Err(format!("{rays} rays took {secs:.2} s"));
    }
    Ok(format!("{rays} rays, {secs:.2} s"))
}

/// Region growing against BFS components on 100 random grids.
pub fn c2_clustering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut comps = 0;
    for g in 0..100 {
        let dims = [rng.random_range(3..14), rng.random_range(3..14), rng.random_range(3..14)];
        let p = rng.random_range(0.1..0.6);
        let gt = random_scene(&mut rng, dims, &[(p, CellState::Unobserved), (0.2, CellState::Occupied(ObjectId(2)))]);
        let got = grow_regions(&gt, |s| s == CellState::Unobserved);
        if got.windows(2).any(|w| w[0].len() < w[1].len()) {
            return Err(format!("grid {g}: regions not ordered largest first"));
        }
        let got: BTreeSet<Vec<usize>> = got.iter().map(|r| r.voxels().to_vec()).collect();
        let member: Vec<bool> = gt.cells().iter().map(|&s| s == CellState::Unobserved).collect();
        let want = bfs_components(&gt.spec, &member);
        if got != want {
            return Err(format!("grid {g}: {} regions vs {} oracle components", got.len(), want.len()));
        }
        comps += want.len();
    }
    Ok(format!("{comps} components"))
}

fn random_footprint(rng: &mut ChaCha8Rng) -> Footprint {
    let ext = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
    let mut offsets = Vec::new();
    for k in 0..ext[2] {
        for j in 0..ext[1] {
            for i in 0..ext[0] {
                offsets.push([i, j, k]);
            }
        }
    }
    Footprint::new(offsets)
}

/// Lattice A* cost against BFS on 100 random 20^3 mazes.
pub fn c3_path_cost() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut found, mut none) = (0, 0);
    for m in 0..100 {
        let p = rng.random_range(0.15..0.4);
        let gt = random_scene(&mut rng, [20; 3], &[(p, CellState::Wall)]);
        let grid = PlanningGrid::from_truth(&gt);
        let fp = random_footprint(&mut rng);
        let blocked = |c: Cell| grid.blocked(c, &[]);
        for q in 0..10 {
            let pick = |rng: &mut ChaCha8Rng| [rng.random_range(0..20), rng.random_range(-OUTSIDE_DEPTH..20), rng.random_range(0..20)];
            let start = pick(&mut rng);
            let reach = bfs_reachable(&gt.spec, OUTSIDE_DEPTH, &blocked, fp.offsets(), start);
            if reach.is_empty() {
                continue;
            }
            // Half the queries target a reachable configuration.
            let goal = if q % 2 == 0 {
                *reach.iter().nth(rng.random_range(0..reach.len())).unwrap()
            } else {
                pick(&mut rng)
            };
            let want = bfs_cost(&gt.spec, OUTSIDE_DEPTH, &blocked, fp.offsets(), start, goal);
            let got = plan_path(start, goal, &fp, &grid, &[]);
            match (&got, want) {
                (Ok(path), Some(cost)) => {
                    if path.steps() != cost {
                        return Err(format!("maze {m}: {start:?}->{goal:?} cost {} vs BFS {cost}", path.steps()));
                    }
                    if !path.is_connected() || path.positions.iter().any(|&c| fp.collides(&grid, c, &[])) {
                        return Err(format!("maze {m}: path not connected or collides"));
                    }
                    if (path.cost(VS) - cost as f64 * VS).abs() > 1e-12 {
                        return Err(format!("maze {m}: metric cost mismatch"));
                    }
                    found += 1;
                }
                (Err(_), None) => none += 1,
                _ => return Err(format!("maze {m}: {start:?}->{goal:?} planner {:?} vs BFS {want:?}", got.map(|p| p.steps()))),
            }
        }
    }
    Ok(format!("{found} paths, {none} infeasible queries"))
}

/// Scene for the FAS oracle: target at the back, blockers in its corridor,
/// scattered clutter and hidden free-space boxes.
fn fas_scene(rng: &mut ChaCha8Rng) -> Option<(GroundTruthScene, BeliefGrid)> {
    let dims = [16, 16, 12];
    let mut boxes = Vec::new();
    let tx = rng.random_range(4..10);
    boxes.push(([tx, rng.random_range(10..12), 1], [3, 3, rng.random_range(3..6)]));
    for _ in 0..rng.random_range(1..3) {
        boxes.push((
            [tx + rng.random_range(-1..2), rng.random_range(4..8), 1],
            [rng.random_range(2..4), 2, rng.random_range(3..7)],
        ));
    }
    for _ in 0..rng.random_range(1..4) {
        boxes.push((
            [rng.random_range(1..12), rng.random_range(0..11), 1],
            [rng.random_range(2..4), rng.random_range(2..4), rng.random_range(2..7)],
        ));
    }
    let spec = GridSpec::new(dims, VS, [0.0; 3]).unwrap();
    if boxes.iter().any(|(m, e)| (0..3).any(|a| m[a] < if a == 1 { 0 } else { 1 } || m[a] + e[a] > dims[a] as i32 - 1)) {
        return None;
    }
    let objects = boxes.iter().enumerate().map(|(i, &(m, e))| block(&spec, i as u32, m, e)).collect();
    let gt = GroundTruthScene::assemble(spec, objects, ObjectId(0)).ok()?;
    let mut hidden = vec![false; spec.len()];
    for _ in 0..rng.random_range(1..4) {
        let m = [rng.random_range(1..13), rng.random_range(0..13), 1];
        let e = [rng.random_range(2..6), rng.random_range(2..6), rng.random_range(2..8)];
        for k in m[2]..m[2] + e[2] {
            for j in m[1]..m[1] + e[1] {
                for i in m[0]..m[0] + e[0] {
                    if let Some(idx) = spec.index([i, j, k]) {
                        hidden[idx] = gt.state(idx) == CellState::Free;
                    }
                }
            }
        }
    }
    let belief = belief_except(&gt, |c| hidden[spec.index_unchecked(c)]);
    Some((gt, belief))
}

/// Brute-force count of placements a cluster opens for each in-sweep object.
pub fn fas_oracle(
    belief: &BeliefGrid,
    sweep: &BTreeSet<usize>,
    objects: &BTreeMap<ObjectId, Vec<Cell>>,
    arrangement: &Arrangement,
    cluster: &BTreeSet<usize>,
    gripper: [i32; 3],
) -> BTreeMap<ObjectId, usize> {
    let spec = *belief.spec();
    let placed: BTreeMap<ObjectId, Vec<Cell>> = objects
        .iter()
        .map(|(&id, cells)| {
            let off = arrangement.get(&id).copied().unwrap_or([0, 0, 0]);
            (id, cells.iter().map(|c| [c[0] + off[0], c[1] + off[1], c[2] + off[2]]).collect())
        })
        .collect();
    let mut owner: BTreeMap<Cell, ObjectId> = BTreeMap::new();
    for (&id, cells) in &placed {
        for &c in cells {
            owner.insert(c, id);
        }
    }
    let blocked_for = |ignore: Option<ObjectId>| {
        let owner = &owner;
        move |c: Cell| -> bool {
            if spec.is_shell(c) {
                return true;
            }
            let idx = spec.index_unchecked(c);
            if let Some(&id) = owner.get(&c) {
                return Some(id) != ignore;
            }
            if cluster.contains(&idx) {
                return false;
            }
            match belief.state(idx) {
                CellState::Free => false,
                CellState::Occupied(id) => !objects.contains_key(&id),
                _ => true,
            }
        }
    };
    let mut fp = Vec::new();
    for k in 0..gripper[2] {
        for j in 0..gripper[1] {
            for i in 0..gripper[0] {
                fp.push([i, j, k]);
            }
        }
    }
    let bare = blocked_for(None);
    let mut out = BTreeMap::new();
    for (&id, cells) in &placed {
        if !cells.iter().any(|&c| sweep.contains(&spec.index_unchecked(c))) {
            continue;
        }
        let grasp = object_grasps(cells, gripper).into_iter().find(|&g| {
            let home = [g[0], -gripper[1], g[2]];
            bfs_cost(&spec, OUTSIDE_DEPTH, &bare, &fp, home, g).is_some()
        });
        let Some(g) = grasp else {
            out.insert(id, 0);
            continue;
        };
        let mut loaded = fp.clone();
        loaded.extend(cells.iter().map(|c| [c[0] - g[0], c[1] - g[1], c[2] - g[2]]));
        loaded.sort();
        loaded.dedup();
        let held = blocked_for(Some(id));
        let reach = bfs_reachable(&spec, OUTSIDE_DEPTH, &held, &loaded, g);
        let count = reach
            .iter()
            .filter(|&&p| p[2] == g[2] && p != g)
            .filter(|&&p| {
                let moved: Vec<Cell> = cells.iter().map(|c| [c[0] + p[0] - g[0], c[1] + p[1] - g[1], c[2]]).collect();
                moved.iter().all(|&c| spec.is_interior(c))
                    && moved.iter().all(|&c| !sweep.contains(&spec.index_unchecked(c)))
                    && moved.iter().any(|&c| cluster.contains(&spec.index_unchecked(c)))
            })
            .count();
        out.insert(id, count);
    }
    out
}

/// Cluster scoring against brute-force placement enumeration on 20
/// constructed scenes, at the root and at searched arrangements.
pub fn c4_fas_scoring() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gripper = GripperSpec::default();
    let (mut scenes, mut checks, mut opened) = (0, 0, 0);
    let mut tries = 0;
    while scenes < 20 {
        tries += 1;
        if tries > 2000 {
            return Err(format!("only {scenes} usable scenes"));
        }
        let Some((gt, belief)) = fas_scene(&mut rng) else { continue };
        let Ok(retrieval) = plan_retrieval(&belief, gt.target_id, &gripper) else { continue };
        let config = MctsConfig { max_iterations: 25, ..MctsConfig::default() };
        let problem = Problem::new(&belief, &retrieval, gripper, PlannerMode::Or, config);
        let clusters = unobserved_clusters(&belief);
        if problem.in_sweep(&Arrangement::new()).is_empty() || clusters.is_empty() {
            continue;
        }
        scenes += 1;
        let Ok(outcome) = search(&problem) else { return Err("search failed".into()) };
        let sweep: BTreeSet<usize> = retrieval.target_sweep.voxels().iter().copied().collect();
        let nodes: Vec<&TreeNode> = outcome.tree.nodes.iter().step_by(3).take(4).collect();
        for node in nodes {
            for cluster in &clusters {
                let got = score_cluster(cluster, node, &problem);
                let set: BTreeSet<usize> = cluster.voxels().iter().copied().collect();
                let want = fas_oracle(&belief, &sweep, &problem.objects, &node.arrangement, &set, gripper.voxels(VS));
                if got.per_object != want || got.opened_regions != want.values().sum::<usize>() || got.size != set.len() {
                    return Err(format!("scene {scenes} node {}: {:?} vs oracle {want:?}", node.id, got.per_object));
                }
                checks += 1;
                opened += got.opened_regions;
            }
        }
    }
    if opened == 0 {
        return Err("every score was zero; scenes do not exercise the oracle".into());
    }
    Ok(format!("{checks} cluster scores on {scenes} scenes, {opened} placements opened"))
}

/// 1000 random viewpoints over 20 random scenes; the belief must stay sound.
pub fn c5_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let intrinsics = Intrinsics { rays_u: 48, rays_v: 36, ..Intrinsics::default() };
    let (mut applied, mut rejected) = (0, 0);
    for s in 0..20u64 {
        let size = if s % 2 == 0 { SizeClass::Small } else { SizeClass::Large };
        let gt = generate_scene(s, size, 5 + (s % 4) as usize).map_err(|e| e.to_string())?;
        let mut belief = BeliefGrid::new(gt.spec);
        let lo = gt.spec.min_corner();
        let ext = gt.spec.extent();
        for v in 0..50 {
            let pos = if v % 3 == 0 {
                lo + Vector3::new(rng.random::<f64>() * ext.x, rng.random::<f64>() * ext.y, rng.random::<f64>() * ext.z)
            } else {
                lo + Vector3::new(rng.random::<f64>() * ext.x, -rng.random_range(0.05..0.4), rng.random::<f64>() * ext.z)
            };
            let focus = lo + Vector3::new(rng.random::<f64>() * ext.x, rng.random::<f64>() * ext.y, rng.random::<f64>() * ext.z);
            let Some(vp) = Viewpoint::look_at(v, pos, focus) else { continue };
            match apply_viewpoint(&gt, &mut belief, &vp, &intrinsics) {
                Ok(_) => applied += 1,
                Err(_) => rejected += 1,
            }
            if !sound(&belief, &gt) || !belief.count_consistent() {
                return Err(format!("scene {s} viewpoint {v}: belief disagrees with ground truth"));
            }
        }
    }
    Ok(format!("{applied} viewpoints applied, {rejected} rejected poses, zero violations"))
}

/// UCB worked value, unvisited preference and backprop visit accounting.
pub fn c10_ucb() -> Check {
    let v = ucb(0.5, 2, 10, 1.0);
    if (v - 1.7674).abs() > 1e-4 {
        return Err(format!("ucb(0.5, 2, 10, 1) = {v}"));
    }
    let node = |parent: Option<usize>, visits: u32, total_value: f64| TreeNode {
        id: 0,
        parent,
        children: Vec::new(),
        arrangement: Arrangement::new(),
        action: None,
        visits,
        total_value,
        cumulative_distance: 0.0,
        remaining: 1,
        expanded: true,
        dead: false,
    };
    let mut tree = SearchTree::default();
    tree.nodes.push(node(None, 10, 9.0));
    for (i, (n, w)) in [(5, 5.0), (0, 0.0), (5, 4.9)].into_iter().enumerate() {
        let mut ch = node(Some(0), n, w);
        ch.id = i + 1;
        tree.nodes.push(ch);
        tree.nodes[0].children.push(i + 1);
    }
    if select_child(&tree, 0, 1.0) != Some(2) {
        return Err("unvisited child not preferred".into());
    }
    tree.nodes[2].visits = 5;
    tree.nodes[2].total_value = 1.0;
    if select_child(&tree, 0, 1.0) != Some(1) {
        return Err("highest mean child not chosen at equal visits".into());
    }

    // Random backprop: every node's visits equal the number of walks that
    // passed through it.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut tree = SearchTree::default();
    tree.nodes.push(node(None, 0, 0.0));
    for id in 1..40 {
        let parent = rng.random_range(0..id);
        let mut n = node(Some(parent), 0, 0.0);
        n.id = id;
        tree.nodes.push(n);
        tree.nodes[parent].children.push(id);
    }
    let mut through = vec![0u32; 40];
    let mut value = vec![0f64; 40];
    for _ in 0..500 {
        let leaf = rng.random_range(0..40);
        let v: f64 = rng.random();
        tree.backprop(leaf, v);
        for id in tree.lineage(leaf) {
            through[id] += 1;
            value[id] += v;
        }
    }
    for n in &tree.nodes {
        let child_sum: u32 = n.children.iter().map(|&c| tree.nodes[c].visits).sum();
        if n.visits != through[n.id] || n.visits < child_sum || (n.total_value - value[n.id]).abs() > 1e-9 {
            return Err(format!("node {}: visits {} expected {}", n.id, n.visits, through[n.id]));
        }
    }
    if tree.nodes[0].visits != 500 {
        return Err("root visits differ from backprop count".into());
    }

    // A real search backs up exactly once per iteration.
    let gt = generate_scene(0, SizeClass::Small, 5).map_err(|e| e.to_string())?;
    let belief = full_belief(&gt);
    let gripper = GripperSpec::default();
    let retrieval = plan_retrieval(&belief, gt.target_id, &gripper).map_err(|e| e.to_string())?;
    let config = MctsConfig { max_iterations: 40, ..MctsConfig::default() };
    let problem = Problem::new(&belief, &retrieval, gripper, PlannerMode::Or, config);
    let out = search(&problem).map_err(|e| e.to_string())?;
    let root = out.tree.root();
    if root.visits as usize != out.stats.iterations {
        return Err(format!("root visits {} after {} iterations", root.visits, out.stats.iterations));
    }
    for n in &out.tree.nodes {
        let child_sum: u32 = n.children.iter().map(|&c| out.tree.nodes[c].visits).sum();
        if n.visits < child_sum {
            return Err(format!("search node {} has fewer visits than its children", n.id));
        }
    }
    Ok(format!("ucb = {v:.4}"))
}

/// OR solves the constructed in-sweep scene, SS gives up on it, both from a
/// full belief and through the MAS pipeline.
pub fn c8_differentiator() -> Check {
    use orsense::executor::{run_episode, EpisodeConfig, SensingMode};
    use orsense::mcts::SearchStatus;

    let gt = in_sweep_differentiator();
    let belief = full_belief(&gt);
    let gripper = GripperSpec::default();
    let reach = plan_retrieval(&belief, gt.target_id, &gripper).map_err(|e| e.to_string())?;
    let status = |mode| {
        let problem = Problem::new(&belief, &reach, gripper, mode, MctsConfig::default());
        search(&problem).map(|o| o.status).map_err(|e| e.to_string())
    };
    let (or, ss) = (status(PlannerMode::Or)?, status(PlannerMode::Ss)?);
    if or != SearchStatus::Success || !matches!(ss, SearchStatus::Exhausted | SearchStatus::Timeout) {
        return Err(format!("search: OR {or:?}, SS {ss:?}"));
    }
    let run = |planner_mode| {
        run_episode(&gt, &EpisodeConfig { sensing_mode: SensingMode::Mas, planner_mode, ..EpisodeConfig::default() })
    };
    let (a, b) = (run(PlannerMode::Or), run(PlannerMode::Ss));
    if !a.success || b.success {
        return Err(format!("episode: OR success {}, SS success {}", a.success, b.success));
    }
    Ok(format!("OR {or:?}, SS {ss:?}"))
}
