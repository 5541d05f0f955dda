use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::input::{ControllerLayout, ElementId, InputCommand, Intensity};

/// Snapshot of every element of one controller: a physical pad polled at a
/// tick boundary, or the virtual pad fed to the game.
///
/// Elements never written read as neutral.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControllerState {
    elements: BTreeMap<ElementId, Intensity>,
}

/// The synthetic controller the arbitrator drives. The arena only ever
/// reads this type.
pub type VirtualControllerState = ControllerState;

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every element of `layout` present and neutral.
    pub fn neutral(layout: &ControllerLayout) -> Self {
        let elements = layout
            .elements()
            .iter()
            .map(|e| (e.id.clone(), Intensity::neutral(e.kind)))
            .collect();
        ControllerState { elements }
    }

    pub fn get(&self, id: &str) -> Option<Intensity> {
        self.elements.get(id).copied()
    }

    pub fn apply(&mut self, cmd: &InputCommand) {
        self.elements
            .insert(cmd.element().id.clone(), cmd.intensity());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ElementId, Intensity)> {
        self.elements.iter().map(|(k, v)| (k, *v))
    }

    /// Elements whose intensity is not neutral.
    pub fn active(&self) -> impl Iterator<Item = (&ElementId, Intensity)> {
        self.iter().filter(|(_, i)| !i.is_neutral())
    }

    pub fn button(&self, id: &str) -> bool {
        matches!(self.get(id), Some(Intensity::Button(true)))
    }

    pub fn trigger(&self, id: &str) -> f64 {
        match self.get(id) {
            Some(Intensity::Trigger(v)) => v,
            _ => 0.0,
        }
    }

    pub fn stick(&self, id: &str) -> (f64, f64) {
        match self.get(id) {
            Some(Intensity::Stick { x, y }) => (x, y),
            _ => (0.0, 0.0),
        }
    }
}

impl std::borrow::Borrow<str> for ElementId {
    fn borrow(&self) -> &str {
        self.as_str()
    }
}

/// Writes every command into `state`. Applying the same list twice yields
/// the same state as applying it once.
pub fn virtual_apply(commands: &[InputCommand], mut state: VirtualControllerState) -> VirtualControllerState {
    for cmd in commands {
        state.apply(cmd);
    }
    state
}
