//! Domain vocabulary shared by every stage of the pipeline: controller
//! elements and their intensities, game actions, player roles, per-player
//! mappings, action assignments and merging-policy tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    Trigger,
    StickAxisPair,
}

/// Opaque identifier of a physical or virtual controller element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(String);

impl ElementId {
    pub fn new(id: impl Into<String>) -> Self {
        ElementId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        ElementId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputElement {
    pub kind: ElementKind,
    pub id: ElementId,
}

impl InputElement {
    pub fn new(kind: ElementKind, id: impl Into<String>) -> Self {
        InputElement {
            kind,
            id: ElementId::new(id),
        }
    }

    pub fn button(id: impl Into<String>) -> Self {
        Self::new(ElementKind::Button, id)
    }

    pub fn trigger(id: impl Into<String>) -> Self {
        Self::new(ElementKind::Trigger, id)
    }

    pub fn stick(id: impl Into<String>) -> Self {
        Self::new(ElementKind::StickAxisPair, id)
    }
}

/// Element names of the standard twin-stick pad emulated by the virtual controller.
pub mod pad {
    pub const A: &str = "A";
    pub const B: &str = "B";
    pub const X: &str = "X";
    pub const Y: &str = "Y";
    pub const LEFT_BUMPER: &str = "LeftBumper";
    pub const RIGHT_BUMPER: &str = "RightBumper";
    pub const BACK: &str = "Back";
    pub const START: &str = "Start";
    pub const LEFT_THUMB: &str = "LeftThumb";
    pub const RIGHT_THUMB: &str = "RightThumb";
    pub const DPAD_UP: &str = "DPadUp";
    pub const DPAD_DOWN: &str = "DPadDown";
    pub const DPAD_LEFT: &str = "DPadLeft";
    pub const DPAD_RIGHT: &str = "DPadRight";
    pub const LEFT_TRIGGER: &str = "LeftTrigger";
    pub const RIGHT_TRIGGER: &str = "RightTrigger";
    pub const LEFT_STICK: &str = "LeftStick";
    pub const RIGHT_STICK: &str = "RightStick";
}

/// The set of elements one controller exposes. Ids are unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerLayout {
    elements: Vec<InputElement>,
}

impl ControllerLayout {
    pub fn new(elements: Vec<InputElement>) -> Result<Self, InputError> {
        let mut seen = BTreeSet::new();
        for e in &elements {
            if !seen.insert(e.id.clone()) {
                return Err(InputError::DuplicateElement(e.id.clone()));
            }
        }
        Ok(ControllerLayout { elements })
    }

    /// Standard twin-stick pad: 14 buttons, two triggers, two sticks.
    pub fn standard_pad() -> Self {
        use pad::*;
        let buttons = [
            A,
            B,
            X,
            Y,
            LEFT_BUMPER,
            RIGHT_BUMPER,
            BACK,
            START,
            LEFT_THUMB,
            RIGHT_THUMB,
            DPAD_UP,
            DPAD_DOWN,
            DPAD_LEFT,
            DPAD_RIGHT,
        ];
        let mut elements: Vec<InputElement> =
            buttons.iter().map(|b| InputElement::button(*b)).collect();
        elements.push(InputElement::trigger(LEFT_TRIGGER));
        elements.push(InputElement::trigger(RIGHT_TRIGGER));
        elements.push(InputElement::stick(LEFT_STICK));
        elements.push(InputElement::stick(RIGHT_STICK));
        ControllerLayout { elements }
    }

    /// Standard pad extended with extra buttons (e.g. external switches
    /// plugged into an adaptive controller).
    pub fn with_extra_buttons<I, S>(mut self, extra: I) -> Result<Self, InputError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for id in extra {
            self.elements.push(InputElement::button(id));
        }
        ControllerLayout::new(self.elements)
    }

    pub fn elements(&self) -> &[InputElement] {
        &self.elements
    }

    pub fn get(&self, id: &str) -> Option<&InputElement> {
        self.elements.iter().find(|e| e.id.as_str() == id)
    }
}

/// Activation magnitude of an element. The variant always matches the
/// element kind; [`InputCommand::new`] enforces that pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Button(bool),
    Trigger(f64),
    Stick { x: f64, y: f64 },
}

impl Intensity {
    pub fn neutral(kind: ElementKind) -> Self {
        match kind {
            ElementKind::Button => Intensity::Button(false),
            ElementKind::Trigger => Intensity::Trigger(0.0),
            ElementKind::StickAxisPair => Intensity::Stick { x: 0.0, y: 0.0 },
        }
    }

    pub fn kind(&self) -> ElementKind {
        match self {
            Intensity::Button(_) => ElementKind::Button,
            Intensity::Trigger(_) => ElementKind::Trigger,
            Intensity::Stick { .. } => ElementKind::StickAxisPair,
        }
    }

    pub fn is_neutral(&self) -> bool {
        match *self {
            Intensity::Button(p) => !p,
            Intensity::Trigger(v) => v == 0.0,
            Intensity::Stick { x, y } => x == 0.0 && y == 0.0,
        }
    }

    fn check(&self) -> Result<(), InputError> {
        match *self {
            Intensity::Button(_) => Ok(()),
            Intensity::Trigger(v) if v.is_finite() && (0.0..=1.0).contains(&v) => Ok(()),
            Intensity::Stick { x, y }
                if x.is_finite()
                    && y.is_finite()
                    && (-1.0..=1.0).contains(&x)
                    && (-1.0..=1.0).contains(&y) =>
            {
                Ok(())
            }
            other => Err(InputError::IntensityOutOfRange(other)),
        }
    }

    /// Wire form: a scalar for buttons/triggers, an `[x, y]` pair for sticks.
    pub fn to_wire(&self) -> WireIntensity {
        match *self {
            Intensity::Button(p) => WireIntensity::Scalar(if p { 1.0 } else { 0.0 }),
            Intensity::Trigger(v) => WireIntensity::Scalar(v),
            Intensity::Stick { x, y } => WireIntensity::Pair([x, y]),
        }
    }

    /// Resolves a wire intensity against the element kind it targets.
    pub fn from_wire(kind: ElementKind, wire: WireIntensity) -> Result<Self, InputError> {
        let intensity = match (kind, wire) {
            (ElementKind::Button, WireIntensity::Scalar(1.0)) => Intensity::Button(true),
            (ElementKind::Button, WireIntensity::Scalar(0.0)) => Intensity::Button(false),
            (ElementKind::Trigger, WireIntensity::Scalar(v)) => Intensity::Trigger(v),
            (ElementKind::StickAxisPair, WireIntensity::Pair([x, y])) => Intensity::Stick { x, y },
            (kind, wire) => return Err(InputError::WireKindMismatch { kind, wire }),
        };
        intensity.check()?;
        Ok(intensity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireIntensity {
    Scalar(f64),
    Pair([f64; 2]),
}

/// One element activation. Construction rejects intensities outside the
/// element's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCommand {
    element: InputElement,
    intensity: Intensity,
}

impl InputCommand {
    pub fn new(element: InputElement, intensity: Intensity) -> Result<Self, InputError> {
        if intensity.kind() != element.kind {
            return Err(InputError::KindMismatch {
                element: element.id,
                expected: element.kind,
                got: intensity.kind(),
            });
        }
        intensity.check()?;
        Ok(InputCommand { element, intensity })
    }

    pub fn neutral(element: InputElement) -> Self {
        let intensity = Intensity::neutral(element.kind);
        InputCommand { element, intensity }
    }

    pub fn element(&self) -> &InputElement {
        &self.element
    }

    pub fn intensity(&self) -> Intensity {
        self.intensity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// {0, 1}
    Binary,
    /// [0, 1]
    Unipolar,
    /// [-1, 1]
    Bipolar,
}

impl ValueKind {
    pub fn contains(self, v: f64) -> bool {
        match self {
            ValueKind::Binary => v == 0.0 || v == 1.0,
            ValueKind::Unipolar => (0.0..=1.0).contains(&v),
            ValueKind::Bipolar => (-1.0..=1.0).contains(&v),
        }
    }

    pub fn clamp(self, v: f64) -> f64 {
        match self {
            ValueKind::Binary => {
                if v != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ValueKind::Unipolar => v.clamp(0.0, 1.0),
            ValueKind::Bipolar => v.clamp(-1.0, 1.0),
        }
    }

    pub fn is_continuous(self) -> bool {
        !matches!(self, ValueKind::Binary)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(String);

impl ActionId {
    pub fn new(id: impl Into<String>) -> Self {
        ActionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActionId {
    fn from(s: &str) -> Self {
        ActionId::new(s)
    }
}

impl std::borrow::Borrow<str> for ActionId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for ActionId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for ActionId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameActionDescriptor {
    pub id: ActionId,
    pub value_kind: ValueKind,
}

impl GameActionDescriptor {
    pub fn new(id: impl Into<String>, value_kind: ValueKind) -> Self {
        GameActionDescriptor {
            id: ActionId::new(id),
            value_kind,
        }
    }
}

/// Action names of the built-in arena profile.
pub mod arena_actions {
    pub const STEER: &str = "Steer";
    pub const ACCELERATE: &str = "Accelerate";
    pub const BRAKE: &str = "Brake";
    pub const JUMP: &str = "Jump";
    pub const BOOST: &str = "Boost";
    pub const HANDBRAKE: &str = "Handbrake";

    pub const ALL: [&str; 6] = [STEER, ACCELERATE, BRAKE, JUMP, BOOST, HANDBRAKE];
}

/// Ordered list of the game actions a game exposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionProfile {
    actions: Vec<GameActionDescriptor>,
}

impl ActionProfile {
    pub fn new(actions: Vec<GameActionDescriptor>) -> Result<Self, InputError> {
        let mut seen = BTreeSet::new();
        for a in &actions {
            if !seen.insert(a.id.clone()) {
                return Err(InputError::DuplicateAction(a.id.clone()));
            }
        }
        Ok(ActionProfile { actions })
    }

    /// The six actions of the car-ball arena.
    pub fn arena() -> Self {
        use arena_actions::*;
        ActionProfile {
            actions: vec![
                GameActionDescriptor::new(STEER, ValueKind::Bipolar),
                GameActionDescriptor::new(ACCELERATE, ValueKind::Unipolar),
                GameActionDescriptor::new(BRAKE, ValueKind::Unipolar),
                GameActionDescriptor::new(JUMP, ValueKind::Binary),
                GameActionDescriptor::new(BOOST, ValueKind::Binary),
                GameActionDescriptor::new(HANDBRAKE, ValueKind::Binary),
            ],
        }
    }

    pub fn actions(&self) -> &[GameActionDescriptor] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&GameActionDescriptor> {
        self.actions.iter().find(|a| a.id.as_str() == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.id.as_str() == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pilot,
    Copilot,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Pilot => Role::Copilot,
            Role::Copilot => Role::Pilot,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Pilot => "pilot",
            Role::Copilot => "copilot",
        })
    }
}

/// Identifies the player source an entry came from. Used as the last
/// tie-break when several entries of one role compete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(pub u32);

/// One player's contribution to one game action at one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputEntry {
    action: ActionId,
    value: f64,
    confidence: f64,
    role: Role,
    tick: u64,
    source: SourceId,
}

impl InputEntry {
    pub fn new(
        action: &GameActionDescriptor,
        value: f64,
        confidence: f64,
        role: Role,
        tick: u64,
        source: SourceId,
    ) -> Result<Self, InputError> {
        if !value.is_finite() || !action.value_kind.contains(value) {
            return Err(InputError::ValueOutOfDomain {
                action: action.id.clone(),
                kind: action.value_kind,
                value,
            });
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(InputError::ConfidenceOutOfRange(confidence));
        }
        Ok(InputEntry {
            action: action.id.clone(),
            value,
            confidence,
            role,
            tick,
            source,
        })
    }

    /// Entry with full confidence, the default for human-originated input.
    pub fn certain(
        action: &GameActionDescriptor,
        value: f64,
        role: Role,
        tick: u64,
        source: SourceId,
    ) -> Result<Self, InputError> {
        Self::new(action, value, 1.0, role, tick, source)
    }

    pub fn action(&self) -> &ActionId {
        &self.action
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn source(&self) -> SourceId {
        self.source
    }
}

/// What drives a bound action: a single element, or a left/right button
/// pair producing -1 / 0 / +1 for a bipolar action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindingSource {
    Element(InputElement),
    ButtonPair {
        negative: InputElement,
        positive: InputElement,
    },
}

impl BindingSource {
    pub fn elements(&self) -> Vec<&InputElement> {
        match self {
            BindingSource::Element(e) => vec![e],
            BindingSource::ButtonPair { negative, positive } => vec![negative, positive],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub source: BindingSource,
    pub action: ActionId,
}

/// One player's element → action mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerMapping {
    bindings: Vec<Binding>,
}

impl ControllerMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, element: InputElement, action: impl Into<String>) -> Self {
        self.bindings.push(Binding {
            source: BindingSource::Element(element),
            action: ActionId::new(action),
        });
        self
    }

    pub fn bind_pair(
        mut self,
        negative: InputElement,
        positive: InputElement,
        action: impl Into<String>,
    ) -> Self {
        self.bindings.push(Binding {
            source: BindingSource::ButtonPair { negative, positive },
            action: ActionId::new(action),
        });
        self
    }

    /// The arena's default layout: left stick steers, right trigger
    /// accelerates, left trigger brakes, A jumps, B boosts, X handbrakes.
    pub fn arena_default() -> Self {
        use arena_actions::*;
        ControllerMapping::new()
            .bind(InputElement::stick(pad::LEFT_STICK), STEER)
            .bind(InputElement::trigger(pad::RIGHT_TRIGGER), ACCELERATE)
            .bind(InputElement::trigger(pad::LEFT_TRIGGER), BRAKE)
            .bind(InputElement::button(pad::A), JUMP)
            .bind(InputElement::button(pad::B), BOOST)
            .bind(InputElement::button(pad::X), HANDBRAKE)
    }

    pub fn bindings(&self) -> &[Binding] {
        &self.bindings
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// The binding an element participates in, if any.
    pub fn binding_for(&self, element: &ElementId) -> Option<&Binding> {
        self.bindings
            .iter()
            .find(|b| b.source.elements().iter().any(|e| &e.id == element))
    }

    pub fn bindings_for_action<'a>(&'a self, action: &'a str) -> impl Iterator<Item = &'a Binding> {
        self.bindings.iter().filter(move |b| b.action.as_str() == action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assignment {
    PilotOnly,
    CopilotOnly,
    Overlapping,
}

impl Assignment {
    pub fn permits(self, role: Role) -> bool {
        matches!(
            (self, role),
            (Assignment::Overlapping, _)
                | (Assignment::PilotOnly, Role::Pilot)
                | (Assignment::CopilotOnly, Role::Copilot)
        )
    }

    pub const ALL: [Assignment; 3] = [
        Assignment::PilotOnly,
        Assignment::CopilotOnly,
        Assignment::Overlapping,
    ];

    /// Parses the one-letter P/C/O coding or the long names.
    pub fn parse(s: &str) -> Option<Assignment> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" | "pilot" | "pilot_only" => Some(Assignment::PilotOnly),
            "c" | "copilot" | "copilot_only" => Some(Assignment::CopilotOnly),
            "o" | "overlapping" | "both" | "shared" => Some(Assignment::Overlapping),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionAssignment {
    map: BTreeMap<ActionId, Assignment>,
}

impl ActionAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, action: impl Into<String>, assignment: Assignment) -> Self {
        self.map.insert(ActionId::new(action), assignment);
        self
    }

    pub fn uniform(profile: &ActionProfile, assignment: Assignment) -> Self {
        let map = profile
            .actions()
            .iter()
            .map(|a| (a.id.clone(), assignment))
            .collect();
        ActionAssignment { map }
    }

    pub fn get(&self, action: &str) -> Option<Assignment> {
        self.map.get(action).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ActionId, Assignment)> {
        self.map.iter().map(|(k, v)| (k, *v))
    }

    pub fn permits(&self, action: &str, role: Role) -> bool {
        self.get(action).is_some_and(|a| a.permits(role))
    }

    /// Builds an arena assignment from a six-letter P/C/O code in the
    /// order Steer, Accelerate, Brake, Jump, Boost, Handbrake.
    pub fn from_code(code: &str) -> Option<Self> {
        let letters: Vec<char> = code.chars().filter(|c| !c.is_whitespace()).collect();
        if letters.len() != arena_actions::ALL.len() {
            return None;
        }
        let mut out = ActionAssignment::new();
        for (action, c) in arena_actions::ALL.iter().zip(letters) {
            out = out.set(*action, Assignment::parse(&c.to_string())?);
        }
        Some(out)
    }

    /// Action subdivisions chosen by the thirteen study participants,
    /// indexed 1..=13.
    pub fn participant_preset(participant: usize) -> Option<Self> {
        PARTICIPANT_PRESETS
            .get(participant.checked_sub(1)?)
            .and_then(|code| Self::from_code(code))
    }

    /// Preset by name, `"P1"` .. `"P13"`.
    pub fn preset(name: &str) -> Option<Self> {
        let n = name.trim().strip_prefix(['P', 'p'])?.parse().ok()?;
        Self::participant_preset(n)
    }
}

// Steer, Accelerate, Brake, Jump, Boost, Handbrake.
const PARTICIPANT_PRESETS: [&str; 13] = [
    "PPCOPC", "PPPCCC", "OPPCCC", "PPCCPC", "PPPOCP", "PCCCCC", "PPPCPP", "PPCCCC", "PCCCCC",
    "PPPCCC", "PCCPPC", "CCCPPC", "CPCCPC",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyLabel {
    /// Every action shared.
    Reciprocal,
    /// No action shared.
    Disjoint,
    /// Some shared, some exclusive.
    Hybrid,
}

impl fmt::Display for TaxonomyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaxonomyLabel::Reciprocal => "reciprocal",
            TaxonomyLabel::Disjoint => "disjoint",
            TaxonomyLabel::Hybrid => "hybrid",
        })
    }
}

/// Named condition over the game state used by override policies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredicateId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergePolicy {
    BinaryDisjunction,
    ContinuousAverage,
    SelectPriority(Role),
    /// When the predicate holds, only copilot entries reach `base`.
    OverrideByAgent {
        predicate: PredicateId,
        base: Box<MergePolicy>,
    },
}

impl MergePolicy {
    pub fn default_for(kind: ValueKind) -> Self {
        match kind {
            ValueKind::Binary => MergePolicy::BinaryDisjunction,
            _ => MergePolicy::ContinuousAverage,
        }
    }

    /// Parses the config form: `binary`, `average`, `select:pilot`,
    /// `select:copilot`, `override:<predicate>` (base is the kind default)
    /// or `override:<predicate>:<base>`.
    pub fn parse(s: &str, kind: ValueKind) -> Result<Self, InputError> {
        let s = s.trim();
        let bad = || InputError::UnknownPolicy(s.to_string());
        match s {
            "binary" => return Ok(MergePolicy::BinaryDisjunction),
            "average" => return Ok(MergePolicy::ContinuousAverage),
            "select:pilot" => return Ok(MergePolicy::SelectPriority(Role::Pilot)),
            "select:copilot" => return Ok(MergePolicy::SelectPriority(Role::Copilot)),
            _ => {}
        }
        let rest = s.strip_prefix("override:").ok_or_else(bad)?;
        let (predicate, base) = match rest.split_once(':') {
            Some((p, base)) => (p, MergePolicy::parse(base, kind)?),
            None => (rest, MergePolicy::default_for(kind)),
        };
        if predicate.is_empty() {
            return Err(bad());
        }
        Ok(MergePolicy::OverrideByAgent {
            predicate: PredicateId(predicate.to_string()),
            base: Box::new(base),
        })
    }

    fn fits(&self, kind: ValueKind) -> bool {
        match self {
            MergePolicy::BinaryDisjunction => kind == ValueKind::Binary,
            MergePolicy::ContinuousAverage => kind.is_continuous(),
            MergePolicy::SelectPriority(_) => true,
            MergePolicy::OverrideByAgent { base, .. } => {
                !matches!(**base, MergePolicy::OverrideByAgent { .. }) && base.fits(kind)
            }
        }
    }
}

impl fmt::Display for MergePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergePolicy::BinaryDisjunction => f.write_str("binary"),
            MergePolicy::ContinuousAverage => f.write_str("average"),
            MergePolicy::SelectPriority(r) => write!(f, "select:{r}"),
            MergePolicy::OverrideByAgent { predicate, base } => {
                write!(f, "override:{}:{base}", predicate.0)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    map: BTreeMap<ActionId, MergePolicy>,
}

impl PolicyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Disjunction for binary actions, averaging for continuous ones.
    pub fn defaults_for(profile: &ActionProfile) -> Self {
        let map = profile
            .actions()
            .iter()
            .map(|a| (a.id.clone(), MergePolicy::default_for(a.value_kind)))
            .collect();
        PolicyTable { map }
    }

    pub fn set(mut self, action: impl Into<String>, policy: MergePolicy) -> Self {
        self.map.insert(ActionId::new(action), policy);
        self
    }

    pub fn get(&self, action: &str) -> Option<&MergePolicy> {
        self.map.get(action)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ActionId, &MergePolicy)> {
        self.map.iter()
    }

    pub fn validate(&self, profile: &ActionProfile) -> Result<(), Violations> {
        let mut v = Vec::new();
        for action in profile.actions() {
            match self.get(action.id.as_str()) {
                None => v.push(Violation::MissingPolicy {
                    action: action.id.clone(),
                }),
                Some(p) if !p.fits(action.value_kind) => v.push(Violation::PolicyKindMismatch {
                    action: action.id.clone(),
                    policy: p.to_string(),
                }),
                Some(_) => {}
            }
        }
        for (id, _) in self.iter() {
            if profile.get(id.as_str()).is_none() {
                v.push(Violation::UnknownAction { action: id.clone() });
            }
        }
        Violations::into_result(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("element {element} mapped twice")]
    ElementMappedTwice { element: ElementId },
    #[error("unknown action {action}")]
    UnknownAction { action: ActionId },
    #[error("element {element} ({kind:?}) cannot drive {action} ({value_kind:?})")]
    KindMismatch {
        element: ElementId,
        kind: ElementKind,
        action: ActionId,
        value_kind: ValueKind,
    },
    #[error("{action} unassigned")]
    Unassigned { action: ActionId },
    #[error("{action} has no merging policy")]
    MissingPolicy { action: ActionId },
    #[error("policy {policy} does not fit {action}")]
    PolicyKindMismatch { action: ActionId, policy: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    fn into_result(v: Vec<Violation>) -> Result<(), Violations> {
        if v.is_empty() {
            Ok(())
        } else {
            Err(Violations(v))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }
}

fn kind_compatible(kind: ElementKind, value_kind: ValueKind) -> bool {
    matches!(
        (kind, value_kind),
        (ElementKind::Button, ValueKind::Binary)
            | (ElementKind::Button, ValueKind::Unipolar)
            | (ElementKind::Trigger, ValueKind::Unipolar)
            | (ElementKind::StickAxisPair, ValueKind::Bipolar)
    )
}

/// Checks injectivity, kind compatibility and that every bound action
/// exists. Collects every violation instead of stopping at the first.
pub fn validate_mapping(mapping: &ControllerMapping, profile: &ActionProfile) -> Result<(), Violations> {
    let mut v = Vec::new();
    let mut seen: BTreeSet<&ElementId> = BTreeSet::new();
    for binding in mapping.bindings() {
        for e in binding.source.elements() {
            if !seen.insert(&e.id) {
                v.push(Violation::ElementMappedTwice {
                    element: e.id.clone(),
                });
            }
        }
        let Some(action) = profile.get(binding.action.as_str()) else {
            v.push(Violation::UnknownAction {
                action: binding.action.clone(),
            });
            continue;
        };
        match &binding.source {
            BindingSource::Element(e) => {
                if !kind_compatible(e.kind, action.value_kind) {
                    v.push(Violation::KindMismatch {
                        element: e.id.clone(),
                        kind: e.kind,
                        action: action.id.clone(),
                        value_kind: action.value_kind,
                    });
                }
            }
            BindingSource::ButtonPair { negative, positive } => {
                for e in [negative, positive] {
                    if e.kind != ElementKind::Button || action.value_kind != ValueKind::Bipolar {
                        v.push(Violation::KindMismatch {
                            element: e.id.clone(),
                            kind: e.kind,
                            action: action.id.clone(),
                            value_kind: action.value_kind,
                        });
                    }
                }
            }
        }
    }
    Violations::into_result(v)
}

/// Checks that every profile action is assigned (and nothing else is),
/// returning the configuration's taxonomy label.
pub fn validate_assignment(
    assignment: &ActionAssignment,
    profile: &ActionProfile,
) -> Result<TaxonomyLabel, Violations> {
    let mut v = Vec::new();
    for action in profile.actions() {
        if assignment.get(action.id.as_str()).is_none() {
            v.push(Violation::Unassigned {
                action: action.id.clone(),
            });
        }
    }
    for (id, _) in assignment.iter() {
        if profile.get(id.as_str()).is_none() {
            v.push(Violation::UnknownAction { action: id.clone() });
        }
    }
    Violations::into_result(v)?;
    Ok(classify_assignment(assignment))
}

/// Reciprocal iff all actions overlap, disjoint iff none do, hybrid
/// otherwise. An empty assignment is disjoint.
pub fn classify_assignment(assignment: &ActionAssignment) -> TaxonomyLabel {
    let total = assignment.map.len();
    let shared = assignment
        .iter()
        .filter(|(_, a)| *a == Assignment::Overlapping)
        .count();
    if total > 0 && shared == total {
        TaxonomyLabel::Reciprocal
    } else if shared == 0 {
        TaxonomyLabel::Disjoint
    } else {
        TaxonomyLabel::Hybrid
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("duplicate element id {0}")]
    DuplicateElement(ElementId),
    #[error("duplicate action id {0}")]
    DuplicateAction(ActionId),
    #[error("intensity {0:?} outside element domain")]
    IntensityOutOfRange(Intensity),
    #[error("element {element} is a {expected:?}, got {got:?} intensity")]
    KindMismatch {
        element: ElementId,
        expected: ElementKind,
        got: ElementKind,
    },
    #[error("wire intensity {wire:?} does not fit a {kind:?}")]
    WireKindMismatch { kind: ElementKind, wire: WireIntensity },
    #[error("value {value} outside {kind:?} domain of {action}")]
    ValueOutOfDomain {
        action: ActionId,
        kind: ValueKind,
        value: f64,
    },
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("unknown merging policy {0:?}")]
    UnknownPolicy(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use arena_actions::*;

    #[test]
    fn default_mapping_is_valid() {
        let profile = ActionProfile::arena();
        assert!(validate_mapping(&ControllerMapping::arena_default(), &profile).is_ok());
    }

    #[test]
    fn empty_mapping_is_valid() {
        assert!(validate_mapping(&ControllerMapping::new(), &ActionProfile::arena()).is_ok());
    }

    #[test]
    fn element_mapped_twice_is_reported() {
        let m = ControllerMapping::new()
            .bind(InputElement::button(pad::A), JUMP)
            .bind(InputElement::button(pad::A), BOOST);
        let err = validate_mapping(&m, &ActionProfile::arena()).unwrap_err();
        assert_eq!(
            err.0,
            vec![Violation::ElementMappedTwice {
                element: ElementId::new("A")
            }]
        );
        assert_eq!(err.to_string(), "element A mapped twice");
    }

    #[test]
    fn kind_rules() {
        let profile = ActionProfile::arena();
        let trigger_jump = ControllerMapping::new().bind(InputElement::trigger(pad::RIGHT_TRIGGER), JUMP);
        assert!(validate_mapping(&trigger_jump, &profile).is_err());
        let button_accel = ControllerMapping::new().bind(InputElement::button(pad::A), ACCELERATE);
        assert!(validate_mapping(&button_accel, &profile).is_ok());
        let button_steer = ControllerMapping::new().bind(InputElement::button(pad::A), STEER);
        assert!(validate_mapping(&button_steer, &profile).is_err());
        let pair = ControllerMapping::new().bind_pair(
            InputElement::button("Ext1"),
            InputElement::button("Ext2"),
            STEER,
        );
        assert!(validate_mapping(&pair, &profile).is_ok());
        let bad_pair = ControllerMapping::new().bind_pair(
            InputElement::button("Ext1"),
            InputElement::button("Ext2"),
            JUMP,
        );
        assert!(validate_mapping(&bad_pair, &profile).is_err());
        let unknown = ControllerMapping::new().bind(InputElement::button(pad::Y), "Fire");
        assert!(matches!(
            validate_mapping(&unknown, &profile).unwrap_err().0[0],
            Violation::UnknownAction { .. }
        ));
    }

    #[test]
    fn pair_sharing_an_element_with_another_binding_is_not_injective() {
        let m = ControllerMapping::new()
            .bind_pair(InputElement::button(pad::X), InputElement::button(pad::B), STEER)
            .bind(InputElement::button(pad::B), BOOST);
        assert!(validate_mapping(&m, &ActionProfile::arena()).is_err());
    }

    #[test]
    fn assignment_labels() {
        let profile = ActionProfile::arena();
        let all = ActionAssignment::uniform(&profile, Assignment::Overlapping);
        assert_eq!(validate_assignment(&all, &profile), Ok(TaxonomyLabel::Reciprocal));
        let p1 = ActionAssignment::preset("P1").unwrap();
        assert_eq!(validate_assignment(&p1, &profile), Ok(TaxonomyLabel::Hybrid));
        assert_eq!(classify_assignment(&ActionAssignment::preset("P2").unwrap()), TaxonomyLabel::Disjoint);
        assert_eq!(classify_assignment(&ActionAssignment::preset("P5").unwrap()), TaxonomyLabel::Hybrid);
    }

    #[test]
    fn missing_handbrake_is_reported() {
        let profile = ActionProfile::arena();
        let mut a = ActionAssignment::new();
        for action in &ALL[..5] {
            a = a.set(*action, Assignment::PilotOnly);
        }
        let err = validate_assignment(&a, &profile).unwrap_err();
        assert_eq!(err.to_string(), "Handbrake unassigned");
    }

    #[test]
    fn participant_one_row() {
        let p1 = ActionAssignment::participant_preset(1).unwrap();
        assert_eq!(p1.get(STEER), Some(Assignment::PilotOnly));
        assert_eq!(p1.get(ACCELERATE), Some(Assignment::PilotOnly));
        assert_eq!(p1.get(BRAKE), Some(Assignment::CopilotOnly));
        assert_eq!(p1.get(JUMP), Some(Assignment::Overlapping));
        assert_eq!(p1.get(BOOST), Some(Assignment::PilotOnly));
        assert_eq!(p1.get(HANDBRAKE), Some(Assignment::CopilotOnly));
        assert!(ActionAssignment::participant_preset(0).is_none());
        assert!(ActionAssignment::participant_preset(14).is_none());
    }

    #[test]
    fn preset_column_counts_match_reported_totals() {
        // Steering 11, accelerating 9, boosting 6, braking 5, jumping 4,
        // handbraking 2 participants kept the action (P or O).
        let expected = [(STEER, 11), (ACCELERATE, 9), (BRAKE, 5), (JUMP, 4), (BOOST, 6), (HANDBRAKE, 2)];
        for (action, count) in expected {
            let n = (1..=13)
                .filter(|p| {
                    ActionAssignment::participant_preset(*p)
                        .unwrap()
                        .permits(action, Role::Pilot)
                })
                .count();
            assert_eq!(n, count, "{action}");
        }
        let shared: Vec<usize> = (1..=13)
            .filter(|p| {
                classify_assignment(&ActionAssignment::participant_preset(*p).unwrap())
                    == TaxonomyLabel::Hybrid
            })
            .collect();
        assert_eq!(shared, vec![1, 3, 5]);
    }

    #[test]
    fn entry_domain_is_enforced() {
        let profile = ActionProfile::arena();
        let jump = profile.get(JUMP).unwrap();
        assert!(InputEntry::certain(jump, 0.5, Role::Pilot, 0, SourceId(0)).is_err());
        assert!(InputEntry::certain(jump, 1.0, Role::Pilot, 0, SourceId(0)).is_ok());
        let steer = profile.get(STEER).unwrap();
        assert!(InputEntry::certain(steer, -1.5, Role::Pilot, 0, SourceId(0)).is_err());
        assert!(InputEntry::new(steer, 0.0, 1.5, Role::Pilot, 0, SourceId(0)).is_err());
        assert!(InputEntry::certain(steer, f64::NAN, Role::Pilot, 0, SourceId(0)).is_err());
    }

    #[test]
    fn command_domain_is_enforced() {
        assert!(InputCommand::new(InputElement::trigger("RT"), Intensity::Trigger(1.2)).is_err());
        assert!(InputCommand::new(InputElement::trigger("RT"), Intensity::Button(true)).is_err());
        assert!(InputCommand::new(
            InputElement::stick("LS"),
            Intensity::Stick { x: -1.0, y: 0.0 }
        )
        .is_ok());
        assert!(Intensity::from_wire(ElementKind::Button, WireIntensity::Scalar(0.5)).is_err());
        assert_eq!(
            Intensity::from_wire(ElementKind::Button, WireIntensity::Scalar(1.0)),
            Ok(Intensity::Button(true))
        );
    }

    #[test]
    fn policy_strings() {
        use MergePolicy::*;
        assert_eq!(MergePolicy::parse("binary", ValueKind::Binary), Ok(BinaryDisjunction));
        assert_eq!(
            MergePolicy::parse("select:copilot", ValueKind::Bipolar),
            Ok(SelectPriority(Role::Copilot))
        );
        let o = MergePolicy::parse("override:ball_near_own_goal", ValueKind::Bipolar).unwrap();
        assert_eq!(o.to_string(), "override:ball_near_own_goal:average");
        assert_eq!(MergePolicy::parse(&o.to_string(), ValueKind::Bipolar), Ok(o));
        assert!(MergePolicy::parse("median", ValueKind::Bipolar).is_err());
        assert!(MergePolicy::parse("override:", ValueKind::Bipolar).is_err());
    }

    #[test]
    fn policy_table_kind_rules() {
        let profile = ActionProfile::arena();
        assert!(PolicyTable::defaults_for(&profile).validate(&profile).is_ok());
        let bad = PolicyTable::defaults_for(&profile).set(JUMP, MergePolicy::ContinuousAverage);
        assert!(bad.validate(&profile).is_err());
        let bad = PolicyTable::defaults_for(&profile).set(STEER, MergePolicy::BinaryDisjunction);
        assert!(bad.validate(&profile).is_err());
        let ok = PolicyTable::defaults_for(&profile).set(JUMP, MergePolicy::SelectPriority(Role::Pilot));
        assert!(ok.validate(&profile).is_ok());
    }
}
