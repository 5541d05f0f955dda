//! Turns one player's raw controller input into input entries, applying
//! their personal mapping and filtering actions they are not assigned.

use thiserror::Error;

use crate::controller::ControllerState;
use crate::input::{
    validate_assignment, validate_mapping, ActionAssignment, ActionProfile, BindingSource,
    ControllerMapping, ElementId, ElementKind, InputCommand, InputEntry, InputError, Intensity,
    Role, SourceId, ValueKind, Violations,
};

/// Magnitudes below these snap to 0 before normalization.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeadZones {
    pub trigger: f64,
    pub stick: f64,
}

impl Default for DeadZones {
    fn default() -> Self {
        DeadZones {
            trigger: 0.02,
            stick: 0.05,
        }
    }
}

impl DeadZones {
    pub const NONE: DeadZones = DeadZones {
        trigger: 0.0,
        stick: 0.0,
    };
}

#[derive(Debug, Clone)]
pub struct InterpreterContext {
    role: Role,
    source: SourceId,
    mapping: ControllerMapping,
    assignment: ActionAssignment,
    profile: ActionProfile,
    dead_zones: DeadZones,
}

impl InterpreterContext {
    /// Validates mapping and assignment against the profile up front so
    /// `interpret` never has to.
    pub fn new(
        role: Role,
        source: SourceId,
        mapping: ControllerMapping,
        assignment: ActionAssignment,
        profile: ActionProfile,
        dead_zones: DeadZones,
    ) -> Result<Self, Violations> {
        let mapping_check = validate_mapping(&mapping, &profile);
        let assignment_check = validate_assignment(&assignment, &profile).map(|_| ());
        match (mapping_check, assignment_check) {
            (Ok(()), Ok(())) => {}
            (Err(a), Err(b)) => return Err(Violations(a.0.into_iter().chain(b.0).collect())),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
        Ok(InterpreterContext {
            role,
            source,
            mapping,
            assignment,
            profile,
            dead_zones,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn source(&self) -> SourceId {
        self.source
    }

    pub fn mapping(&self) -> &ControllerMapping {
        &self.mapping
    }

    pub fn assignment(&self) -> &ActionAssignment {
        &self.assignment
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpretError {
    #[error("a {kind:?} element cannot produce a {value_kind:?} value")]
    IncompatibleKind {
        kind: ElementKind,
        value_kind: ValueKind,
    },
    #[error(transparent)]
    Domain(#[from] InputError),
}

fn dead_zone(v: f64, zone: f64) -> f64 {
    if v.abs() < zone {
        0.0
    } else {
        v
    }
}

/// Maps an element intensity onto the value domain of the action it drives.
pub fn normalize_element_value(
    cmd: &InputCommand,
    kind: ValueKind,
    dead_zones: &DeadZones,
) -> Result<f64, InterpretError> {
    let value = match (cmd.intensity(), kind) {
        (Intensity::Button(p), ValueKind::Binary | ValueKind::Unipolar) => f64::from(u8::from(p)),
        (Intensity::Trigger(v), ValueKind::Unipolar) => dead_zone(v, dead_zones.trigger),
        // vertical axis is not consumed by any arena action
        (Intensity::Stick { x, .. }, ValueKind::Bipolar) => dead_zone(x, dead_zones.stick),
        (i, value_kind) => {
            return Err(InterpretError::IncompatibleKind {
                kind: i.kind(),
                value_kind,
            })
        }
    };
    Ok(value)
}

/// Left/right button pair on a bipolar action: -1, 0 or +1. Both held
/// cancel out to 0.
pub fn normalize_button_pair(negative: bool, positive: bool) -> f64 {
    f64::from(u8::from(positive)) - f64::from(u8::from(negative))
}

/// Interprets a single command in isolation. For an element belonging to a
/// button pair, the partner button is taken as released.
///
/// Unmapped elements and actions the role may not drive yield `None`.
pub fn interpret(
    cmd: &InputCommand,
    ctx: &InterpreterContext,
    tick: u64,
) -> Result<Option<InputEntry>, InterpretError> {
    let Some(binding) = ctx.mapping.binding_for(&cmd.element().id) else {
        return Ok(None);
    };
    if !ctx.assignment.permits(binding.action.as_str(), ctx.role) {
        return Ok(None);
    }
    // the mapping was validated, so the action exists
    let action = ctx
        .profile
        .get(binding.action.as_str())
        .expect("validated mapping references a known action");
    let value = match &binding.source {
        BindingSource::Element(_) => normalize_element_value(cmd, action.value_kind, &ctx.dead_zones)?,
        BindingSource::ButtonPair { negative, .. } => {
            let Intensity::Button(pressed) = cmd.intensity() else {
                return Err(InterpretError::IncompatibleKind {
                    kind: cmd.intensity().kind(),
                    value_kind: action.value_kind,
                });
            };
            if cmd.element().id == negative.id {
                normalize_button_pair(pressed, false)
            } else {
                normalize_button_pair(false, pressed)
            }
        }
    };
    Ok(Some(InputEntry::certain(action, value, ctx.role, tick, ctx.source)?))
}

/// An entry plus the element that produced it (the pressed half of a
/// button pair, or `None` when the pair is neutral).
#[derive(Debug, Clone, PartialEq)]
pub struct Interpreted {
    pub entry: InputEntry,
    pub element: Option<ElementId>,
}

/// Interprets a whole polled controller state: one entry per binding the
/// role is allowed to drive, including explicit zero entries for released
/// elements.
pub fn interpret_state(state: &ControllerState, ctx: &InterpreterContext, tick: u64) -> Vec<Interpreted> {
    let mut out = Vec::new();
    for binding in ctx.mapping.bindings() {
        if !ctx.assignment.permits(binding.action.as_str(), ctx.role) {
            continue;
        }
        let Some(action) = ctx.profile.get(binding.action.as_str()) else {
            continue;
        };
        let (value, element) = match &binding.source {
            BindingSource::Element(e) => {
                let intensity = state
                    .get(e.id.as_str())
                    .filter(|i| i.kind() == e.kind)
                    .unwrap_or(Intensity::neutral(e.kind));
                let cmd = match InputCommand::new(e.clone(), intensity) {
                    Ok(c) => c,
                    Err(_) => InputCommand::neutral(e.clone()),
                };
                match normalize_element_value(&cmd, action.value_kind, &ctx.dead_zones) {
                    Ok(v) => (v, Some(e.id.clone())),
                    Err(_) => continue,
                }
            }
            BindingSource::ButtonPair { negative, positive } => {
                let neg = state.button(negative.id.as_str());
                let pos = state.button(positive.id.as_str());
                let v = normalize_button_pair(neg, pos);
                let element = if v < 0.0 {
                    Some(negative.id.clone())
                } else if v > 0.0 {
                    Some(positive.id.clone())
                } else {
                    None
                };
                (v, element)
            }
        };
        if let Ok(entry) = InputEntry::certain(action, value, ctx.role, tick, ctx.source) {
            out.push(Interpreted { entry, element });
        }
    }
    out
}
