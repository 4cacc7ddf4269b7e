use crate::metrics::dominates;

use super::Individual;

/// Feasible, mutually non-dominated individuals seen so far, kept in
/// insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    members: Vec<Individual>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Offers one individual. Infeasible candidates, ids already present and
    /// dominated candidates are ignored; members the candidate dominates
    /// leave. Returns whether it was admitted.
    pub fn insert(&mut self, ind: &Individual) -> bool {
        if !ind.objectives.feasible || self.members.iter().any(|m| m.id == ind.id) {
            return false;
        }
        let v = ind.objectives.values();
        if self
            .members
            .iter()
            .any(|m| dominates(&m.objectives.values(), &v))
        {
            return false;
        }
        self.members
            .retain(|m| !dominates(&v, &m.objectives.values()));
        self.members.push(ind.clone());
        true
    }

    pub fn update<'a>(&mut self, batch: impl IntoIterator<Item = &'a Individual>) -> usize {
        batch.into_iter().filter(|ind| self.insert(ind)).count()
    }
}
