//! Viewpoint selection policies: target detection, region-specific recursive
//! sensing and dense coverage.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefGrid;
use crate::camera::{apply_viewpoint, frustum_gain, region_gain, CameraSpace, Intrinsics, Viewpoint};
use crate::error::Result;
use crate::grid::{coverage, grow_regions_by_index, CellState, GridSpec, ObjectId, RegionMask, VoxelStates};
use crate::scene::GroundTruthScene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingBudget {
    pub max_viewpoints: usize,
    /// Candidate poses scored per greedy step.
    pub candidates: usize,
}

impl Default for SensingBudget {
    fn default() -> Self {
        Self { max_viewpoints: 20, candidates: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionCriterion {
    pub min_target_fraction: f64,
}

impl Default for DetectionCriterion {
    fn default() -> Self {
        Self { min_target_fraction: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    pub intrinsics: Intrinsics,
    pub camera_space: CameraSpace,
    pub budget: SensingBudget,
    pub criterion: DetectionCriterion,
    pub rs_max_depth: usize,
    /// Share of candidates placed inside the shelf when such poses exist.
    pub inside_fraction: f64,
    pub dias_max_viewpoints: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            intrinsics: Intrinsics::default(),
            camera_space: CameraSpace::default(),
            budget: SensingBudget::default(),
            criterion: DetectionCriterion::default(),
            rs_max_depth: 4,
            inside_fraction: 0.5,
            dias_max_viewpoints: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ias,
    Sas,
    Fas,
    Dias,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppliedView {
    pub stage: Stage,
    pub viewpoint: Viewpoint,
    pub newly_observed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionFailure {
    pub viewpoints: Vec<Viewpoint>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RsOutcome {
    pub viewpoints: Vec<Viewpoint>,
    /// Cells of the requested region still unobserved when sensing stopped.
    pub residual: Option<RegionMask>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiasOutcome {
    pub viewpoints: Vec<Viewpoint>,
    pub coverage: f64,
    /// Stopped below the threshold because no candidate gained anything.
    pub stalled: bool,
}

pub fn target_detected(gt: &GroundTruthScene, belief: &BeliefGrid, target: ObjectId, criterion: &DetectionCriterion) -> bool {
    gt.object(target)
        .and_then(|o| coverage(&o.region(), belief).ok())
        .is_some_and(|c| c >= criterion.min_target_fraction)
}

/// Owns the episode's sensing RNG stream and the log of applied viewpoints.
/// The ground truth is only used to simulate observations.
pub struct Sensor<'a> {
    gt: &'a GroundTruthScene,
    pub config: SensingConfig,
    rng: ChaCha8Rng,
    next_id: u32,
    log: Vec<AppliedView>,
}

impl<'a> Sensor<'a> {
    pub fn new(gt: &'a GroundTruthScene, config: SensingConfig, seed: u64) -> Self {
        Self { gt, config, rng: ChaCha8Rng::seed_from_u64(seed), next_id: 0, log: Vec::new() }
    }

    pub fn log(&self) -> &[AppliedView] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<AppliedView> {
        std::mem::take(&mut self.log)
    }

    pub fn viewpoints_applied(&self) -> u32 {
        self.next_id
    }

    /// Applies a pose, assigning the next sequence id.
    pub fn apply(&mut self, belief: &mut BeliefGrid, mut vp: Viewpoint, stage: Stage) -> Result<Viewpoint> {
        vp.id = self.next_id;
        let newly = apply_viewpoint(self.gt, belief, &vp, &self.config.intrinsics)?;
        self.next_id += 1;
        self.log.push(AppliedView { stage, viewpoint: vp, newly_observed: newly });
        Ok(vp)
    }

    fn inside_positions(belief: &BeliefGrid) -> Vec<Point3<f64>> {
        let spec = belief.spec();
        (0..spec.len())
            .filter(|&i| belief.state(i) == CellState::Free)
            .map(|i| spec.cell(i))
            .filter(|&c| CameraSpace::inside_ok(belief, c))
            .map(|c| spec.center(c))
            .collect()
    }

    fn band_position(&mut self, spec: &GridSpec) -> Point3<f64> {
        let lo = spec.min_corner();
        let ext = spec.extent();
        let cs = self.config.camera_space;
        Point3::new(
            lo.x + self.rng.random::<f64>() * ext.x,
            lo.y - self.rng.random_range(cs.standoff_min..=cs.standoff_max),
            lo.z + self.rng.random::<f64>() * ext.z,
        )
    }

    fn interior_point(&mut self, spec: &GridSpec) -> Point3<f64> {
        let s = spec.voxel_size;
        let lo = spec.min_corner();
        let ext = spec.extent();
        Point3::new(
            lo.x + s + self.rng.random::<f64>() * (ext.x - 2.0 * s),
            lo.y + self.rng.random::<f64>() * (ext.y - s),
            lo.z + s + self.rng.random::<f64>() * (ext.z - 2.0 * s),
        )
    }

    /// `K` candidate poses: positions from the standoff band or the free
    /// interior, aimed at `focus` (or at a random interior point).
    pub fn sample_candidates(&mut self, belief: &BeliefGrid, focus: Option<Point3<f64>>) -> Vec<Viewpoint> {
        let spec = *belief.spec();
        let inside = Self::inside_positions(belief);
        let k = self.config.budget.candidates.max(1);
        let mut out = Vec::with_capacity(k);
        let mut guard = 0;
        while out.len() < k && guard < 20 * k {
            guard += 1;
            let use_inside = !inside.is_empty() && self.rng.random_bool(self.config.inside_fraction.clamp(0.0, 1.0));
            let pos = if use_inside {
                inside[self.rng.random_range(0..inside.len())]
            } else {
                self.band_position(&spec)
            };
            let aim = match focus {
                Some(f) => f,
                None => self.interior_point(&spec),
            };
            if (aim - pos).norm() > self.config.intrinsics.max_range {
                continue;
            }
            if let Some(vp) = Viewpoint::look_at(0, pos, aim) {
                out.push(vp);
            }
        }
        out
    }

    /// Greedy pick among candidates; lowest index wins ties.
    fn best(scores: &[u64]) -> Option<(usize, u64)> {
        let mut best: Option<(usize, u64)> = None;
        for (i, &s) in scores.iter().enumerate() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best
    }

    /// Initial active sensing: greedy next-best-view until the target is
    /// detected or the budget runs out.
    pub fn ias(&mut self, belief: &mut BeliefGrid, target: ObjectId) -> Result<Vec<Viewpoint>, DetectionFailure> {
        let mut used = Vec::new();
        let criterion = self.config.criterion;
        for _ in 0..self.config.budget.max_viewpoints {
            if target_detected(self.gt, belief, target, &criterion) {
                return Ok(used);
            }
            let cands = self.sample_candidates(belief, None);
            let scores: Vec<u64> = cands.iter().map(|c| frustum_gain(belief, c, &self.config.intrinsics)).collect();
            match Self::best(&scores) {
                Some((i, s)) if s > 0 => match self.apply(belief, cands[i], Stage::Ias) {
                    Ok(vp) => used.push(vp),
                    Err(_) => continue,
                },
                _ => continue,
            }
        }
        if target_detected(self.gt, belief, target, &criterion) {
            Ok(used)
        } else {
            Err(DetectionFailure { viewpoints: used })
        }
    }

    /// Region-specific sensing: aim at the centroid of the unobserved part of
    /// `region`, apply the candidate whose rays cross the most region voxels,
    /// then recurse on the remaining clusters, largest first.
    pub fn rs_sense(&mut self, belief: &mut BeliefGrid, region: &RegionMask, stage: Stage) -> RsOutcome {
        let mut budget = self.config.budget.max_viewpoints;
        let mut used = Vec::new();
        self.rs_recurse(belief, region, 0, &mut budget, &mut used, stage);
        let mut residual = region.clone();
        residual.retain(|&i| !belief.state(i).is_observed());
        RsOutcome { viewpoints: used, residual: (!residual.is_empty()).then_some(residual) }
    }

    fn rs_recurse(
        &mut self,
        belief: &mut BeliefGrid,
        region: &RegionMask,
        depth: usize,
        budget: &mut usize,
        used: &mut Vec<Viewpoint>,
        stage: Stage,
    ) {
        let spec = *belief.spec();
        let mut target = region.clone();
        target.retain(|&i| !belief.state(i).is_observed());
        if target.is_empty() || *budget == 0 {
            return;
        }
        let Some(centroid) = target.centroid(&spec) else { return };
        let mut mask = vec![false; spec.len()];
        for &i in target.voxels() {
            mask[i] = true;
        }
        let cands = self.sample_candidates(belief, Some(centroid));
        let scores: Vec<u64> = cands
            .iter()
            .map(|c| region_gain(belief, c, &self.config.intrinsics, |i| mask[i]))
            .collect();
        let Some((best, score)) = Self::best(&scores) else { return };
        if score == 0 {
            return;
        }
        *budget -= 1;
        match self.apply(belief, cands[best], stage) {
            Ok(vp) => used.push(vp),
            Err(_) => return,
        }
        let before = target.len();
        target.retain(|&i| !belief.state(i).is_observed());
        if target.is_empty() || target.len() == before || depth + 1 > self.config.rs_max_depth {
            return;
        }
        for mask in &mut mask {
            *mask = false;
        }
        for &i in target.voxels() {
            mask[i] = true;
        }
        for cluster in grow_regions_by_index(&spec, |i| mask[i]) {
            self.rs_recurse(belief, &cluster, depth + 1, budget, used, stage);
            if *budget == 0 {
                break;
            }
        }
    }

    /// Dense sensing until `threshold` of the shelf interior is observed.
    pub fn dias(&mut self, belief: &mut BeliefGrid, threshold: f64) -> DiasOutcome {
        let interior = belief.spec().interior();
        let cov = |b: &BeliefGrid| coverage(&interior, b).unwrap_or(1.0);
        let mut out = DiasOutcome::default();
        let mut zero_streak = 0;
        while cov(belief) < threshold && out.viewpoints.len() < self.config.dias_max_viewpoints {
            let cands = self.sample_candidates(belief, None);
            let scores: Vec<u64> = cands.iter().map(|c| frustum_gain(belief, c, &self.config.intrinsics)).collect();
            match Self::best(&scores) {
                Some((i, s)) if s > 0 => {
                    zero_streak = 0;
                    if let Ok(vp) = self.apply(belief, cands[i], Stage::Dias) {
                        out.viewpoints.push(vp);
                    }
                }
                _ => {
                    zero_streak += 1;
                    if zero_streak >= 2 {
                        break;
                    }
                }
            }
        }
        out.coverage = cov(belief);
        out.stalled = out.coverage < threshold;
        out
    }
}
