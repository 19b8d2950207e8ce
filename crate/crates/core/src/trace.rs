//! Episode event log, stored as JSON Lines (one event object per line).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Viewpoint};
use crate::error::{Error, Result};
use crate::grid::{Cell, ObjectId};
use crate::mcts::{PlannerMode, SearchStatus};
use crate::scene::SceneFile;
use crate::sensing::{AppliedView, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Header {
        seed: u64,
        sensing_mode: String,
        planner_mode: PlannerMode,
        intrinsics: Intrinsics,
        scene: SceneFile,
    },
    Viewpoint {
        stage: Stage,
        id: u32,
        position: [f64; 3],
        orientation: [f64; 4],
        newly_observed: usize,
    },
    Detection {
        detected: bool,
        viewpoints: usize,
    },
    Reachability {
        grasp: Cell,
        sweep_size: usize,
        blocking: Vec<ObjectId>,
        /// Target sweep cells as (i, j, k).
        sweep: Vec<Cell>,
    },
    Sas {
        viewpoints: usize,
        revealed: Vec<ObjectId>,
        residual: usize,
    },
    PlanAttempt {
        attempt: usize,
        status: SearchStatus,
        iterations: usize,
        nodes: usize,
        blocking: Vec<ObjectId>,
        plan_len: Option<usize>,
    },
    Fas {
        attempt: usize,
        node: usize,
        sweep_priority: bool,
        /// (cluster size, opened placements) per scored cluster.
        scores: Vec<(usize, usize)>,
        chosen: Option<usize>,
        viewpoints: usize,
    },
    Action {
        index: usize,
        object: ObjectId,
        pick_pose: Cell,
        place_pose: Cell,
        distance: f64,
    },
    Replay {
        valid: bool,
        target_exited: bool,
        violation: Option<String>,
    },
    Result {
        success: bool,
        failure: Option<String>,
        attempts: usize,
        objects_moved: usize,
        relocation_distance: f64,
        viewpoints: usize,
    },
}

impl TraceEvent {
    pub fn from_view(v: &AppliedView) -> Self {
        let p = v.viewpoint.position;
        TraceEvent::Viewpoint {
            stage: v.stage,
            id: v.viewpoint.id,
            position: p,
            orientation: v.viewpoint.orientation,
            newly_observed: v.newly_observed,
        }
    }

    pub fn viewpoint(&self) -> Option<Viewpoint> {
        match self {
            TraceEvent::Viewpoint { id, position, orientation, .. } => {
                Some(Viewpoint { id: *id, position: *position, orientation: *orientation })
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).map_err(|e| Error::Format(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read(reader: impl std::io::Read) -> Result<Self> {
        let mut events = Vec::new();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            events.push(e);
        }
        Ok(Self { events })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_jsonl()?.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn viewpoint_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, TraceEvent::Viewpoint { .. })).count()
    }

    pub fn attempt_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, TraceEvent::PlanAttempt { .. })).count()
    }

    pub fn header(&self) -> Option<(&SceneFile, &Intrinsics)> {
        self.events.iter().find_map(|e| match e {
            TraceEvent::Header { scene, intrinsics, .. } => Some((scene, intrinsics)),
            _ => None,
        })
    }
}
