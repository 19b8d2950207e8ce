//! Per-configuration aggregates in the layout of the benchmark tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::executor::{EpisodeResult, SensingMode};
use crate::mcts::PlannerMode;

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sensing_mode: SensingMode,
    pub planner_mode: PlannerMode,
    pub episodes: usize,
    pub successes: usize,
    /// Success rate in percent.
    pub sr: f64,
    /// Over successful episodes.
    pub time: Stat,
    pub planner_time: Stat,
    pub objects_moved: Stat,
    pub relocation_distance: Stat,
    /// Over all episodes.
    pub viewpoints: Stat,
    pub attempts: Stat,
}

pub const CSV_HEADER: &str = "Method,Planner,Episodes,SR (%),Time (sec),Time std,Planner time (sec),Planner time std,\
# Viewpoints,# Viewpoints std,# Attempts,# Attempts std,# Objects moved,# Objects moved std,\
Relocation distance (m),Relocation distance std";

/// One row per (sensing mode, planner mode), ordered by sensing mode then
/// planner mode.
pub fn aggregate(results: &[EpisodeResult]) -> Vec<MetricsRow> {
    let mut groups: BTreeMap<(SensingMode, PlannerMode), Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.sensing_mode, r.planner_mode)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((sensing_mode, planner_mode), rs)| {
            let ok: Vec<&&EpisodeResult> = rs.iter().filter(|r| r.success).collect();
            let over_ok = |f: fn(&EpisodeResult) -> f64| Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let over_all = |f: fn(&EpisodeResult) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            MetricsRow {
                sensing_mode,
                planner_mode,
                episodes: rs.len(),
                successes: ok.len(),
                sr: 100.0 * ok.len() as f64 / rs.len() as f64,
                time: over_ok(|r| r.planning_time),
                planner_time: over_ok(|r| r.planner_time),
                objects_moved: over_ok(|r| r.objects_moved as f64),
                relocation_distance: over_ok(|r| r.relocation_distance),
                viewpoints: over_all(|r| r.viewpoints as f64),
                attempts: over_all(|r| r.attempts as f64),
            }
        })
        .collect()
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.1},{:.3},{:.3},{:.3},{:.3},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3},{:.3}",
            r.sensing_mode,
            r.planner_mode,
            r.episodes,
            r.sr,
            r.time.mean,
            r.time.std,
            r.planner_time.mean,
            r.planner_time.std,
            r.viewpoints.mean,
            r.viewpoints.std,
            r.attempts.mean,
            r.attempts.std,
            r.objects_moved.mean,
            r.objects_moved.std,
            r.relocation_distance.mean,
            r.relocation_distance.std,
        );
    }
    out
}

/// Same table without the wall-clock columns, which differ between runs.
pub fn to_csv_deterministic(rows: &[MetricsRow]) -> String {
    to_csv(rows)
        .lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            [&cols[..4], &cols[8..]].concat().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let s = Stat::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.std, 2.0);
        assert_eq!(Stat::of(&[3.5]).std, 0.0);
    }

    #[test]
    fn header_columns() {
        assert_eq!(CSV_HEADER.split(',').count(), 16);
    }
}
