//! The episode loop: detect, plan the retrieval, sense, search, and fall
//! back to feedback sensing until a plan is found or nothing is left to see.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefGrid;
use crate::error::{Error, Result};
use crate::fas::{plan_fas, select_and_sense};
use crate::gripper::{shift, Footprint, GripperSpec, Path, PlanningGrid};
use crate::grid::{Cell, ObjectId, VoxelStates};
use crate::mcts::{search, MctsConfig, PlannerMode, Problem, Relocation, SearchStatus};
use crate::reachability::{plan_retrieval, sas, ReachabilityResult};
use crate::scene::{generate_scene_with, GeneratorConfig, GroundTruthScene, SizeClass};
use crate::sensing::{target_detected, SensingConfig, Sensor};
use crate::trace::{Trace, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensingMode {
    #[serde(rename = "MAS")]
    Mas,
    #[serde(rename = "IAS+SAS")]
    IasSas,
    #[serde(rename = "IAS+FAS")]
    IasFas,
    #[serde(rename = "IAS")]
    Ias,
    #[serde(rename = "DIAS")]
    Dias,
}

impl SensingMode {
    pub const ALL: [SensingMode; 5] = [Self::Mas, Self::IasSas, Self::IasFas, Self::Ias, Self::Dias];

    pub fn uses_sas(self) -> bool {
        matches!(self, Self::Mas | Self::IasSas)
    }

    pub fn uses_fas(self) -> bool {
        matches!(self, Self::Mas | Self::IasFas)
    }
}

impl fmt::Display for SensingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mas => "MAS",
            Self::IasSas => "IAS+SAS",
            Self::IasFas => "IAS+FAS",
            Self::Ias => "IAS",
            Self::Dias => "DIAS",
        })
    }
}

impl std::str::FromStr for SensingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.to_ascii_uppercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match norm.as_str() {
            "MAS" => Ok(Self::Mas),
            "IASSAS" => Ok(Self::IasSas),
            "IASFAS" => Ok(Self::IasFas),
            "IAS" => Ok(Self::Ias),
            "DIAS" => Ok(Self::Dias),
            _ => Err(Error::InvalidSpec(format!("unknown sensing mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub seed: u64,
    pub size_class: SizeClass,
    pub n_obstacles: usize,
    pub sensing_mode: SensingMode,
    pub planner_mode: PlannerMode,
    pub sensing: SensingConfig,
    pub gripper: GripperSpec,
    pub mcts: MctsConfig,
    pub generator: GeneratorConfig,
    /// Interior coverage at which dense sensing stops.
    pub dias_threshold: f64,
    /// Search invocations before giving up.
    pub max_attempts: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            size_class: SizeClass::Small,
            n_obstacles: 5,
            sensing_mode: SensingMode::Mas,
            planner_mode: PlannerMode::Or,
            sensing: SensingConfig::default(),
            gripper: GripperSpec::default(),
            mcts: MctsConfig::default(),
            generator: GeneratorConfig::default(),
            dias_threshold: 0.95,
            max_attempts: 10,
        }
    }
}

impl EpisodeConfig {
    pub fn attempt_time_limit(&self) -> f64 {
        self.mcts.time_limit
    }

    pub fn validate(&self) -> Result<()> {
        self.sensing.intrinsics.validate()?;
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.sensing.budget.max_viewpoints == 0 || self.sensing.budget.candidates == 0 {
            return bad("sensing budgets must be positive");
        }
        if self.max_attempts == 0 || self.mcts.max_iterations == 0 || !(self.mcts.time_limit > 0.0) {
            return bad("planning limits must be positive");
        }
        if self.mcts.branching == 0 {
            return bad("branching must be positive");
        }
        if self.gripper.footprint_dims.iter().any(|d| !(*d > 0.0)) {
            return bad("gripper dimensions must be positive");
        }
        if !(self.dias_threshold > 0.0 && self.dias_threshold <= 1.0) {
            return bad("dias_threshold must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    pub relocations: Vec<Relocation>,
    pub target: ObjectId,
    pub grasp: Cell,
    pub reach: Path,
    pub retrieve: Path,
}

impl RetrievalPlan {
    pub fn relocation_distance(&self) -> f64 {
        self.relocations.iter().map(|r| r.distance).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Reach,
    Grasp,
    Carry,
    Place,
    Retract,
    TargetReach,
    TargetRetrieve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Relocation index; equals the relocation count for the target phases.
    pub action: usize,
    pub phase: Phase,
    pub step: usize,
    pub cell: Option<Cell>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "action {} {:?} step {}", self.action, self.phase, self.step)?;
        if let Some(c) = self.cell {
            write!(f, " at {c:?}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub target_exited: bool,
    pub violation: Option<Violation>,
}

/// Executes a plan against the true occupancy. Every step of every path is
/// collision checked (the carried object excluded), moved objects update the
/// occupancy, and the target must end fully outside the shelf.
pub fn replay_plan(gt: &GroundTruthScene, plan: &RetrievalPlan, gripper: &GripperSpec) -> ValidityReport {
    match replay_inner(gt, plan, gripper) {
        Ok(()) => ValidityReport { valid: true, target_exited: true, violation: None },
        Err(v) => ValidityReport { valid: false, target_exited: false, violation: Some(v) },
    }
}

fn replay_inner(gt: &GroundTruthScene, plan: &RetrievalPlan, gripper: &GripperSpec) -> Result<(), Violation> {
    let spec = gt.spec;
    let mut grid = PlanningGrid::from_truth(gt);
    let fp = gripper.footprint(spec.voxel_size);
    let mut cells: BTreeMap<ObjectId, Vec<Cell>> =
        gt.objects.iter().map(|o| (o.id, o.footprint_cells(&spec))).collect();
    let outside = |c: &Cell| c[1] < 0;

    let follow = |grid: &PlanningGrid, fp: &Footprint, path: &Path, ignore: &[ObjectId], action, phase| {
        for (step, &p) in path.positions.iter().enumerate() {
            if step > 0 {
                let prev = path.positions[step - 1];
                let d: i32 = (0..3).map(|a| (p[a] - prev[a]).abs()).sum();
                if d != 1 {
                    return Err(Violation { action, phase, step, cell: None });
                }
            }
            if let Some(c) = fp.cells_at(p).find(|&c| grid.blocked(c, ignore)) {
                return Err(Violation { action, phase, step, cell: Some(c) });
            }
        }
        Ok(())
    };
    let starts_outside = |fp: &Footprint, path: &Path, action, phase| {
        if path.positions.is_empty() || !fp.cells_at(path.start()).all(|c| outside(&c)) {
            return Err(Violation { action, phase, step: 0, cell: None });
        }
        Ok(())
    };
    // The gripper must touch the object's front face when it closes.
    let touches = |grip: Cell, obj: &[Cell]| fp.cells_at(grip).any(|c| obj.contains(&[c[0], c[1] + 1, c[2]]));

    for (a, r) in plan.relocations.iter().enumerate() {
        let Some(current) = cells.get(&r.object).cloned() else {
            return Err(Violation { action: a, phase: Phase::Grasp, step: 0, cell: None });
        };
        starts_outside(&fp, &r.reach, a, Phase::Reach)?;
        follow(&grid, &fp, &r.reach, &[], a, Phase::Reach)?;
        if r.reach.end() != r.pick_pose || !touches(r.pick_pose, &current) || r.object == plan.target {
            return Err(Violation { action: a, phase: Phase::Grasp, step: r.reach.steps(), cell: None });
        }
        let loaded = fp.attach(&current, r.pick_pose);
        if r.carry.start() != r.pick_pose || r.carry.end() != r.place_pose {
            return Err(Violation { action: a, phase: Phase::Carry, step: 0, cell: None });
        }
        follow(&grid, &loaded, &r.carry, &[r.object], a, Phase::Carry)?;
        let offset = [0, 1, 2].map(|i| r.place_pose[i] - r.pick_pose[i]);
        let moved = shift(&current, offset);
        if let Some(&c) = moved.iter().find(|&&c| !spec.is_interior(c)) {
            return Err(Violation { action: a, phase: Phase::Place, step: r.carry.steps(), cell: Some(c) });
        }
        grid.move_object(r.object, &current, &moved);
        cells.insert(r.object, moved);
        if r.retract.start() != r.place_pose || !fp.cells_at(r.retract.end()).all(|c| outside(&c)) {
            return Err(Violation { action: a, phase: Phase::Retract, step: 0, cell: None });
        }
        follow(&grid, &fp, &r.retract, &[], a, Phase::Retract)?;
    }

    let n = plan.relocations.len();
    let target = cells[&plan.target].clone();
    starts_outside(&fp, &plan.reach, n, Phase::TargetReach)?;
    follow(&grid, &fp, &plan.reach, &[], n, Phase::TargetReach)?;
    if plan.reach.end() != plan.grasp || !touches(plan.grasp, &target) {
        return Err(Violation { action: n, phase: Phase::TargetReach, step: plan.reach.steps(), cell: None });
    }
    let loaded = fp.attach(&target, plan.grasp);
    if plan.retrieve.start() != plan.grasp {
        return Err(Violation { action: n, phase: Phase::TargetRetrieve, step: 0, cell: None });
    }
    follow(&grid, &loaded, &plan.retrieve, &[plan.target], n, Phase::TargetRetrieve)?;
    if !loaded.cells_at(plan.retrieve.end()).all(|c| outside(&c)) {
        return Err(Violation { action: n, phase: Phase::TargetRetrieve, step: plan.retrieve.steps(), cell: None });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    TargetNotDetected,
    NoGrasp,
    NoRetrievalPath,
    /// Attempts exhausted or nothing left to sense.
    Unsolved,
    ReplayInvalid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub size_class: Option<SizeClass>,
    pub sensing_mode: SensingMode,
    pub planner_mode: PlannerMode,
    pub success: bool,
    pub failure: Option<FailureReason>,
    /// Wall-clock seconds for sensing and planning computation.
    pub planning_time: f64,
    /// Wall-clock seconds inside the tree search only.
    pub planner_time: f64,
    pub attempts: usize,
    pub objects_moved: usize,
    pub relocation_distance: f64,
    pub viewpoints: usize,
    pub plan: Option<RetrievalPlan>,
    pub replay: Option<ValidityReport>,
    #[serde(skip)]
    pub trace: Trace,
}

struct Episode<'a> {
    gt: &'a GroundTruthScene,
    cfg: &'a EpisodeConfig,
    sensor: Sensor<'a>,
    belief: BeliefGrid,
    trace: Trace,
    attempts: usize,
    planner_time: f64,
}

impl Episode<'_> {
    fn flush_views(&mut self) {
        for v in self.sensor.take_log() {
            self.trace.push(TraceEvent::from_view(&v));
        }
    }

    fn detect(&mut self) -> bool {
        let target = self.gt.target_id;
        let ok = if self.cfg.sensing_mode == SensingMode::Dias {
            self.sensor.dias(&mut self.belief, self.cfg.dias_threshold);
            target_detected(self.gt, &self.belief, target, &self.cfg.sensing.criterion)
        } else {
            self.sensor.ias(&mut self.belief, target).is_ok()
        };
        self.flush_views();
        self.trace.push(TraceEvent::Detection { detected: ok, viewpoints: self.sensor.viewpoints_applied() as usize });
        ok
    }

    /// Alternates search and feedback sensing; returns a plan on success.
    fn plan_loop(&mut self, reach: &ReachabilityResult) -> Option<Vec<Relocation>> {
        let attempts_allowed = if self.cfg.sensing_mode.uses_fas() { self.cfg.max_attempts } else { 1 };
        for attempt in 1..=attempts_allowed {
            let problem = Problem::new(&self.belief, reach, self.cfg.gripper, self.cfg.planner_mode, self.cfg.mcts.clone());
            let blocking = problem.in_sweep(&Default::default());
            let outcome = match search(&problem) {
                Ok(o) => o,
                Err(_) => return None,
            };
            self.attempts += 1;
            self.planner_time += outcome.stats.elapsed;
            self.trace.push(TraceEvent::PlanAttempt {
                attempt,
                status: outcome.status,
                iterations: outcome.stats.iterations,
                nodes: outcome.stats.nodes,
                blocking,
                plan_len: outcome.plan.as_ref().map(Vec::len),
            });
            if outcome.status == SearchStatus::Success {
                return outcome.plan;
            }
            if !self.cfg.sensing_mode.uses_fas() || attempt == attempts_allowed {
                return None;
            }
            let Ok(fas_plan) = plan_fas(&outcome.tree, &problem) else { return None };
            drop(problem);
            let decision = select_and_sense(&mut self.sensor, &mut self.belief, fas_plan);
            self.flush_views();
            let Ok(d) = decision else { return None };
            self.trace.push(TraceEvent::Fas {
                attempt,
                node: d.node,
                sweep_priority: d.sweep_priority,
                scores: d.scores.iter().map(|s| (s.size, s.opened_regions)).collect(),
                chosen: d.chosen,
                viewpoints: d.viewpoints,
            });
        }
        None
    }
}

/// Runs one episode of the configured pipeline on `gt`.
pub fn run_episode(gt: &GroundTruthScene, cfg: &EpisodeConfig) -> EpisodeResult {
    let started = Instant::now();
    let mut ep = Episode {
        gt,
        cfg,
        sensor: Sensor::new(gt, cfg.sensing.clone(), cfg.seed),
        belief: BeliefGrid::new(gt.spec),
        trace: Trace::default(),
        attempts: 0,
        planner_time: 0.0,
    };
    ep.trace.push(TraceEvent::Header {
        seed: cfg.seed,
        sensing_mode: cfg.sensing_mode.to_string(),
        planner_mode: cfg.planner_mode,
        intrinsics: cfg.sensing.intrinsics,
        scene: gt.to_file(),
    });

    let outcome = episode_body(&mut ep);
    let (plan, failure) = match outcome {
        Ok(plan) => (Some(plan), None),
        Err(f) => (None, Some(f)),
    };
    let replay = plan.as_ref().map(|p| replay_plan(gt, p, &cfg.gripper));
    if let Some(p) = &plan {
        for (index, r) in p.relocations.iter().enumerate() {
            ep.trace.push(TraceEvent::Action {
                index,
                object: r.object,
                pick_pose: r.pick_pose,
                place_pose: r.place_pose,
                distance: r.distance,
            });
        }
    }
    if let Some(r) = &replay {
        ep.trace.push(TraceEvent::Replay {
            valid: r.valid,
            target_exited: r.target_exited,
            violation: r.violation.as_ref().map(|v| v.to_string()),
        });
    }
    let replay_ok = replay.as_ref().is_some_and(|r| r.valid && r.target_exited);
    let failure = match failure {
        None if !replay_ok => Some(FailureReason::ReplayInvalid),
        f => f,
    };
    let success = failure.is_none();
    let (objects_moved, relocation_distance) = match (&plan, success) {
        (Some(p), true) => (p.relocations.len(), p.relocation_distance()),
        _ => (0, 0.0),
    };
    let viewpoints = ep.sensor.viewpoints_applied() as usize;
    ep.trace.push(TraceEvent::Result {
        success,
        failure: failure.map(|f| format!("{f:?}")),
        attempts: ep.attempts,
        objects_moved,
        relocation_distance,
        viewpoints,
    });
    EpisodeResult {
        seed: cfg.seed,
        size_class: gt.size_class,
        sensing_mode: cfg.sensing_mode,
        planner_mode: cfg.planner_mode,
        success,
        failure,
        planning_time: started.elapsed().as_secs_f64(),
        planner_time: ep.planner_time,
        attempts: ep.attempts,
        objects_moved,
        relocation_distance,
        viewpoints,
        plan,
        replay,
        trace: ep.trace,
    }
}

fn episode_body(ep: &mut Episode<'_>) -> Result<RetrievalPlan, FailureReason> {
    if !ep.detect() {
        return Err(FailureReason::TargetNotDetected);
    }
    let target = ep.gt.target_id;
    let mut reach = match plan_retrieval(&ep.belief, target, &ep.cfg.gripper) {
        Ok(r) => r,
        Err(Error::NoGraspFound(_)) => return Err(FailureReason::NoGrasp),
        Err(_) => return Err(FailureReason::NoRetrievalPath),
    };
    ep.trace.push(TraceEvent::Reachability {
        grasp: reach.grasp.gripper_pose,
        sweep_size: reach.target_sweep.len(),
        blocking: reach.blocking.clone(),
        sweep: reach.target_sweep.to_region().to_triples(&ep.gt.spec),
    });
    if ep.cfg.sensing_mode.uses_sas() {
        let out = sas(&mut ep.sensor, &mut ep.belief, &mut reach, &ep.cfg.gripper);
        ep.flush_views();
        ep.trace.push(TraceEvent::Sas {
            viewpoints: out.viewpoints,
            revealed: out.revealed,
            residual: out.residual.map_or(0, |r| r.len()),
        });
    }
    let relocations = ep.plan_loop(&reach).ok_or(FailureReason::Unsolved)?;
    Ok(RetrievalPlan {
        relocations,
        target,
        grasp: reach.grasp.gripper_pose,
        reach: reach.target_path.clone(),
        retrieve: reach.retrieve_path.clone(),
    })
}

/// Generates the configured scene and runs the episode on it.
pub fn run_generated(cfg: &EpisodeConfig) -> Result<(GroundTruthScene, EpisodeResult)> {
    cfg.validate()?;
    let gt = generate_scene_with(cfg.seed, cfg.size_class, cfg.n_obstacles, &cfg.generator)?;
    let result = run_episode(&gt, cfg);
    Ok((gt, result))
}

/// Checks the belief against the ground truth; used as an internal invariant.
pub fn belief_is_sound(belief: &BeliefGrid, gt: &GroundTruthScene) -> bool {
    belief.soundness_violation(gt).is_none() && belief.count_consistent() && belief.spec() == gt.spec()
}
