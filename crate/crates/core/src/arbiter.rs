//! Per-tick merging of every player's entries into one value per game
//! action, and rendering of the merged frame back onto the virtual
//! controller.
//!
//! When the priority role of a select policy has any entry at all, that
//! role's value wins; "conflict" is not otherwise defined.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::input::{
    ActionId, ActionProfile, BindingSource, ControllerLayout, ControllerMapping, ElementKind,
    InputCommand, InputEntry, Intensity, MergePolicy, PolicyTable, PredicateId, Role, ValueKind,
};
use crate::protocol::{GameState, ProtocolError};

/// 1 iff any entry is nonzero.
pub fn merge_binary(entries: &[&InputEntry]) -> f64 {
    if entries.iter().any(|e| e.value() != 0.0) {
        1.0
    } else {
        0.0
    }
}

/// Mean over the entries present; 0 when there are none.
pub fn merge_average(entries: &[&InputEntry]) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    let sum: f64 = entries.iter().map(|e| e.value()).sum();
    sum / entries.len() as f64
}

/// The priority role's value if it has an entry, otherwise the other
/// role's. Among entries of one role the latest tick wins, then the
/// highest confidence, then the lowest source id.
pub fn merge_select(entries: &[&InputEntry], priority: Role) -> f64 {
    let pick = |role: Role| {
        entries
            .iter()
            .filter(|e| e.role() == role)
            .min_by(|a, b| {
                b.tick()
                    .cmp(&a.tick())
                    .then(b.confidence().total_cmp(&a.confidence()))
                    .then(a.source().cmp(&b.source()))
            })
            .map(|e| e.value())
    };
    pick(priority).or_else(|| pick(priority.other())).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("unknown predicate `{0}`")]
    Unknown(String),
    #[error("no game state available")]
    NoState,
    #[error("{0}")]
    State(String),
}

/// Evaluates named override predicates.
pub trait Predicates {
    fn eval(&self, id: &PredicateId) -> Result<bool, PredicateError>;
}

impl<F> Predicates for F
where
    F: Fn(&PredicateId) -> Result<bool, PredicateError>,
{
    fn eval(&self, id: &PredicateId) -> Result<bool, PredicateError> {
        self(id)
    }
}

/// Names accepted by [`StatePredicates`].
pub const BUILTIN_PREDICATES: [&str; 5] = ["always", "never", "ball_near_own_goal", "airborne", "kickoff"];

/// Built-in predicates over the latest snapshot, seen from the car the
/// pilot drives.
#[derive(Debug, Clone, Copy)]
pub struct StatePredicates<'a> {
    pub state: Option<&'a GameState>,
    pub car: usize,
    /// Distance from the own goal line under which the ball counts as near.
    pub near_goal_distance: f64,
    pub field_half_length: f64,
}

impl<'a> StatePredicates<'a> {
    pub fn new(state: Option<&'a GameState>, car: usize) -> Self {
        StatePredicates {
            state,
            car,
            near_goal_distance: 1500.0,
            field_half_length: 5120.0,
        }
    }
}

impl Predicates for StatePredicates<'_> {
    fn eval(&self, id: &PredicateId) -> Result<bool, PredicateError> {
        match id.0.as_str() {
            "always" => return Ok(true),
            "never" => return Ok(false),
            _ => {}
        }
        if !BUILTIN_PREDICATES.contains(&id.0.as_str()) {
            return Err(PredicateError::Unknown(id.0.clone()));
        }
        let state = self.state.ok_or(PredicateError::NoState)?;
        let car = state.cars.get(self.car).ok_or_else(|| {
            PredicateError::State(
                ProtocolError::CarIndex {
                    index: self.car,
                    cars: state.cars.len(),
                }
                .to_string(),
            )
        })?;
        Ok(match id.0.as_str() {
            "ball_near_own_goal" => {
                // team 0 defends -x
                let own_line = if car.team_id == 0 {
                    -self.field_half_length
                } else {
                    self.field_half_length
                };
                (state.ball.location.x - own_line).abs() < self.near_goal_distance
            }
            "airborne" => !car.ground_contact,
            "kickoff" => {
                let b = &state.ball;
                b.location.x == 0.0 && b.location.y == 0.0 && b.velocity.x == 0.0 && b.velocity.y == 0.0
            }
            _ => unreachable!(),
        })
    }
}

/// Roles that contributed at least one entry to an action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSet {
    pub pilot: bool,
    pub copilot: bool,
}

impl RoleSet {
    pub fn insert(&mut self, role: Role) {
        match role {
            Role::Pilot => self.pilot = true,
            Role::Copilot => self.copilot = true,
        }
    }

    pub fn contains(&self, role: Role) -> bool {
        match role {
            Role::Pilot => self.pilot,
            Role::Copilot => self.copilot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedAction {
    pub value: f64,
    pub roles: RoleSet,
}

/// One merged value per profile action, in profile order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedActionFrame {
    pub tick: u64,
    pub actions: BTreeMap<ActionId, MergedAction>,
}

impl MergedActionFrame {
    /// All actions neutral, no contributors.
    pub fn neutral(tick: u64, profile: &ActionProfile) -> Self {
        let actions = profile
            .actions()
            .iter()
            .map(|a| {
                (
                    a.id.clone(),
                    MergedAction {
                        value: 0.0,
                        roles: RoleSet::default(),
                    },
                )
            })
            .collect();
        MergedActionFrame { tick, actions }
    }

    pub fn value(&self, action: &str) -> f64 {
        self.actions.get(action).map_or(0.0, |m| m.value)
    }

    pub fn set(&mut self, action: &str, value: f64) {
        if let Some(m) = self.actions.get_mut(action) {
            m.value = value;
        }
    }
}

/// Emitted when an override predicate could not be evaluated and the base
/// policy ran over every entry instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateWarning {
    pub tick: u64,
    pub action: ActionId,
    pub predicate: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArbitrationError {
    #[error("entry for unknown action {0}")]
    UnknownAction(ActionId),
    #[error("no merge policy for action {0}")]
    MissingPolicy(ActionId),
}

/// Applies `base` to the copilot entries when `predicate` holds, to all
/// entries otherwise. A failing predicate falls back to the latter and
/// reports why.
pub fn merge_override(
    entries: &[&InputEntry],
    base: &MergePolicy,
    predicate: &PredicateId,
    predicates: &dyn Predicates,
) -> (f64, Option<PredicateError>) {
    match predicates.eval(predicate) {
        Ok(true) => {
            let copilot: Vec<&InputEntry> = entries.iter().copied().filter(|e| e.role() == Role::Copilot).collect();
            (merge_with(base, &copilot, predicates).0, None)
        }
        Ok(false) => (merge_with(base, entries, predicates).0, None),
        Err(e) => (merge_with(base, entries, predicates).0, Some(e)),
    }
}

fn merge_with(
    policy: &MergePolicy,
    entries: &[&InputEntry],
    predicates: &dyn Predicates,
) -> (f64, Option<(PredicateId, PredicateError)>) {
    match policy {
        MergePolicy::BinaryDisjunction => (merge_binary(entries), None),
        MergePolicy::ContinuousAverage => (merge_average(entries), None),
        MergePolicy::SelectPriority(role) => (merge_select(entries, *role), None),
        MergePolicy::OverrideByAgent { predicate, base } => {
            let (v, err) = merge_override(entries, base, predicate, predicates);
            (v, err.map(|e| (predicate.clone(), e)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arbitration {
    pub frame: MergedActionFrame,
    pub warnings: Vec<PredicateWarning>,
}

/// Merges all entries collected for `tick`. Actions nobody touched stay
/// at 0.
pub fn arbitrate_frame(
    entries: &[InputEntry],
    tick: u64,
    policies: &PolicyTable,
    profile: &ActionProfile,
    predicates: &dyn Predicates,
) -> Result<Arbitration, ArbitrationError> {
    let mut grouped: BTreeMap<&str, Vec<&InputEntry>> = BTreeMap::new();
    for e in entries {
        if profile.get(e.action().as_str()).is_none() {
            return Err(ArbitrationError::UnknownAction(e.action().clone()));
        }
        grouped.entry(e.action().as_str()).or_default().push(e);
    }
    let mut frame = MergedActionFrame::neutral(tick, profile);
    let mut warnings = Vec::new();
    for action in profile.actions() {
        let policy = policies
            .get(action.id.as_str())
            .ok_or_else(|| ArbitrationError::MissingPolicy(action.id.clone()))?;
        let group = grouped.remove(action.id.as_str()).unwrap_or_default();
        let (value, warning) = merge_with(policy, &group, predicates);
        if let Some((predicate, err)) = warning {
            warnings.push(PredicateWarning {
                tick,
                action: action.id.clone(),
                predicate: predicate.0,
                message: err.to_string(),
            });
        }
        let mut roles = RoleSet::default();
        for e in &group {
            roles.insert(e.role());
        }
        frame.actions.insert(
            action.id.clone(),
            MergedAction {
                value: action.value_kind.clamp(value),
                roles,
            },
        );
    }
    Ok(Arbitration { frame, warnings })
}

fn render(kind: ElementKind, value_kind: ValueKind, value: f64) -> Intensity {
    match kind {
        ElementKind::Button => Intensity::Button(match value_kind {
            ValueKind::Binary => value != 0.0,
            _ => value >= 0.5,
        }),
        ElementKind::Trigger => Intensity::Trigger(value.clamp(0.0, 1.0)),
        ElementKind::StickAxisPair => Intensity::Stick {
            x: value.clamp(-1.0, 1.0),
            y: 0.0,
        },
    }
}

/// Renders each merged value onto the first element the game's default
/// mapping binds to that action; every other layout element is emitted
/// neutral. A bipolar value on a button pair presses the side its sign
/// points to once its magnitude reaches one half.
pub fn frame_to_commands(
    frame: &MergedActionFrame,
    mapping: &ControllerMapping,
    profile: &ActionProfile,
    layout: &ControllerLayout,
) -> Vec<InputCommand> {
    let mut out: BTreeMap<&str, Intensity> = layout
        .elements()
        .iter()
        .map(|e| (e.id.as_str(), Intensity::neutral(e.kind)))
        .collect();
    for action in profile.actions() {
        let Some(binding) = mapping.bindings_for_action(action.id.as_str()).next() else {
            continue;
        };
        let value = frame.value(action.id.as_str());
        match &binding.source {
            BindingSource::Element(e) => {
                out.insert(e.id.as_str(), render(e.kind, action.value_kind, value));
            }
            BindingSource::ButtonPair { negative, positive } => {
                out.insert(negative.id.as_str(), Intensity::Button(value <= -0.5));
                out.insert(positive.id.as_str(), Intensity::Button(value >= 0.5));
            }
        }
    }
    out.into_iter()
        .filter_map(|(id, intensity)| {
            let element = layout.get(id).cloned().unwrap_or_else(|| match intensity.kind() {
                ElementKind::Button => crate::input::InputElement::button(id),
                ElementKind::Trigger => crate::input::InputElement::trigger(id),
                ElementKind::StickAxisPair => crate::input::InputElement::stick(id),
            });
            InputCommand::new(element, intensity).ok()
        })
        .collect()
}
