use std::collections::BTreeMap;

use crate::grid::{Cell, CellState, GridSpec, ObjectId, VoxelStates};

/// The robot's knowledge of the shelf. Every observed cell agrees with the
/// ground truth; `observed_count` tracks the non-`Unobserved` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefGrid {
    spec: GridSpec,
    cells: Vec<CellState>,
    observed_count: usize,
}

impl VoxelStates for BeliefGrid {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn state(&self, idx: usize) -> CellState {
        self.cells[idx]
    }
}

impl BeliefGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self { cells: vec![CellState::Unobserved; spec.len()], spec, observed_count: 0 }
    }

    pub fn observed_count(&self) -> usize {
        self.observed_count
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    /// Records an observation; returns true if the cell was unobserved before.
    /// Observations never overwrite a known cell.
    pub fn observe(&mut self, idx: usize, state: CellState) -> bool {
        debug_assert!(state.is_observed());
        if self.cells[idx].is_observed() {
            return false;
        }
        self.cells[idx] = state;
        self.observed_count += 1;
        true
    }

    /// First cell disagreeing with `truth`, if any.
    pub fn soundness_violation(&self, truth: &impl VoxelStates) -> Option<usize> {
        self.cells
            .iter()
            .enumerate()
            .find(|(i, s)| s.is_observed() && **s != truth.state(*i))
            .map(|(i, _)| i)
    }

    pub fn count_consistent(&self) -> bool {
        self.cells.iter().filter(|s| s.is_observed()).count() == self.observed_count
    }

    /// Known objects and their observed cells.
    pub fn known_objects(&self) -> BTreeMap<ObjectId, Vec<Cell>> {
        let mut out: BTreeMap<ObjectId, Vec<Cell>> = BTreeMap::new();
        for (i, s) in self.cells.iter().enumerate() {
            if let CellState::Occupied(id) = s {
                out.entry(*id).or_default().push(self.spec.cell(i));
            }
        }
        out
    }

    pub fn unobserved_interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len())
            .filter(|&i| !self.cells[i].is_observed() && !self.spec.is_shell(self.spec.cell(i)))
    }
}
