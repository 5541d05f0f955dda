//! Match orchestration: session config, player input sources, the per-tick
//! pipeline and the tick log.
//!
//! Each tick runs, in order: interpret every human's polled controller,
//! schedule and mask every agent, arbitrate, render onto the virtual
//! controller, step the arena.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{Receiver, TryRecvError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    builtin_policy, mask_actions, AgentActionVector, AgentInput, AgentPolicy, AgentSchedule, HeuristicParams,
    ScheduledAction, DEFAULT_PERIOD,
};
use crate::arbiter::{arbitrate_frame, frame_to_commands, MergedActionFrame, StatePredicates, BUILTIN_PREDICATES};
use crate::arena::{ArenaConfig, InputLog, InputLogHeader, InputLogRecord, Phase, TraceHasher, World};
use crate::controller::{virtual_apply, ControllerState, VirtualControllerState};
use crate::input::{
    validate_assignment, validate_mapping, ActionAssignment, ActionId, ActionProfile, Assignment,
    ControllerLayout, ControllerMapping, ElementId, ElementKind, InputCommand, InputElement, Intensity, MergePolicy,
    PolicyTable, Role, SourceId, TaxonomyLabel, WireIntensity,
};
use crate::interpreter::{interpret_state, DeadZones, InterpreterContext};
use crate::protocol::{compute_derived, suspend_on_pause, EventPayload, GameState, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HumanCooperation,
    PartialAutomation,
    Hybrid,
}

/// Where a player's input comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceSpec {
    /// Never touches the controller.
    Idle,
    /// Timed element events read from an NDJSON file.
    Script(PathBuf),
    /// `input` messages on standard input.
    Stdin,
    /// A protocol client of `serve`.
    Remote,
    /// A software copilot: a built-in policy name, or `remote` for an
    /// agent connecting over the protocol.
    Agent(String),
}

impl SourceSpec {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s {
            "idle" => return Some(SourceSpec::Idle),
            "stdin" => return Some(SourceSpec::Stdin),
            "remote" => return Some(SourceSpec::Remote),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("script:") {
            return (!p.is_empty()).then(|| SourceSpec::Script(PathBuf::from(p)));
        }
        if let Some(p) = s.strip_prefix("agent:") {
            return (!p.is_empty()).then(|| SourceSpec::Agent(p.to_string()));
        }
        None
    }

    pub fn is_agent(&self) -> bool {
        matches!(self, SourceSpec::Agent(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerConfig {
    pub name: String,
    pub role: Role,
    pub source: SourceSpec,
    pub layout: ControllerLayout,
    pub mapping: ControllerMapping,
    pub dead_zones: DeadZones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Ticks between inferences.
    pub period: u64,
    pub params: HeuristicParams,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            period: DEFAULT_PERIOD,
            params: HeuristicParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub mode: Mode,
    pub players: Vec<PlayerConfig>,
    pub assignment: ActionAssignment,
    pub policies: PolicyTable,
    pub arena: ArenaConfig,
    pub agent: AgentConfig,
    /// `kickoff` or a scripted arena scenario.
    pub scenario: String,
    /// Policy driving every car other than the shared one: `heuristic` or
    /// `idle`.
    pub opponents: String,
    pub log: Option<PathBuf>,
    /// Directory relative script paths resolve against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn violations(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    session: RawSession,
    #[serde(default)]
    players: Vec<RawPlayer>,
    #[serde(default)]
    mapping: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    controllers: BTreeMap<String, RawController>,
    #[serde(default)]
    assignment: Option<BTreeMap<String, String>>,
    #[serde(default)]
    policies: BTreeMap<String, String>,
    #[serde(default)]
    arena: ArenaConfig,
    #[serde(default)]
    agent: AgentConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    mode: Mode,
    match_seconds: Option<f64>,
    scenario: Option<String>,
    opponents: Option<String>,
    log: Option<PathBuf>,
    golden_goal: Option<bool>,
    preset: Option<String>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlayer {
    name: String,
    role: Role,
    source: String,
    mapping: Option<String>,
    controller: Option<String>,
    dead_zones: Option<DeadZones>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawController {
    #[serde(default)]
    extra_buttons: Vec<String>,
}

pub const SCENARIOS: [&str; 2] = ["kickoff", "rolling_goal"];

fn parse_mapping(
    table: &BTreeMap<String, String>,
    layout: &ControllerLayout,
    errors: &mut Vec<String>,
    who: &str,
) -> ControllerMapping {
    let mut mapping = ControllerMapping::new();
    let lookup = |id: &str, errors: &mut Vec<String>| -> Option<InputElement> {
        let e = layout.get(id.trim()).cloned();
        if e.is_none() {
            errors.push(format!("{who}: unknown element `{}`", id.trim()));
        }
        e
    };
    for (key, action) in table {
        match key.split_once('+') {
            Some((neg, pos)) => {
                if let (Some(n), Some(p)) = (lookup(neg, errors), lookup(pos, errors)) {
                    mapping = mapping.bind_pair(n, p, action.as_str());
                }
            }
            None => {
                if let Some(e) = lookup(key, errors) {
                    mapping = mapping.bind(e, action.as_str());
                }
            }
        }
    }
    mapping
}

fn check_predicates(policy: &MergePolicy, action: &str, errors: &mut Vec<String>) {
    if let MergePolicy::OverrideByAgent { predicate, base } = policy {
        if !BUILTIN_PREDICATES.contains(&predicate.0.as_str()) {
            errors.push(format!("policies.{action}: unknown predicate `{}`", predicate.0));
        }
        check_predicates(base, action, errors);
    }
}

impl SessionConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses and validates a session document. Every violation found is
    /// reported, not only the first.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut errors = Vec::new();
        let profile = ActionProfile::arena();

        let mut players = Vec::new();
        for (i, p) in raw.players.iter().enumerate() {
            let who = if p.name.is_empty() {
                format!("players[{i}]")
            } else {
                p.name.clone()
            };
            let Some(source) = SourceSpec::parse(&p.source) else {
                errors.push(format!("{who}: unknown source `{}`", p.source));
                continue;
            };
            let mut layout = ControllerLayout::standard_pad();
            if let Some(c) = &p.controller {
                match raw.controllers.get(c) {
                    Some(rc) => match layout.clone().with_extra_buttons(rc.extra_buttons.iter().map(String::as_str)) {
                        Ok(l) => layout = l,
                        Err(e) => errors.push(format!("{who}: {e}")),
                    },
                    None => errors.push(format!("{who}: unknown controller `{c}`")),
                }
            }
            let mapping = match p.mapping.as_deref() {
                None | Some("default") => ControllerMapping::arena_default(),
                Some(name) => match raw.mapping.get(name) {
                    Some(table) => parse_mapping(table, &layout, &mut errors, &who),
                    None => {
                        errors.push(format!("{who}: unknown mapping `{name}`"));
                        ControllerMapping::arena_default()
                    }
                },
            };
            if !source.is_agent() {
                if let Err(v) = validate_mapping(&mapping, &profile) {
                    errors.extend(v.iter().map(|v| format!("{who}: {v}")));
                }
            } else if p.role != Role::Copilot {
                errors.push(format!("{who}: a software agent can only be a copilot"));
            }
            if let SourceSpec::Agent(name) = &source {
                if name != "remote" && builtin_policy(name, &HeuristicParams::default()).is_none() {
                    errors.push(format!("{who}: unknown agent policy `{name}`"));
                }
            }
            players.push(PlayerConfig {
                name: p.name.clone(),
                role: p.role,
                source,
                layout,
                mapping,
                dead_zones: p.dead_zones.unwrap_or_default(),
            });
        }
        let mut names: Vec<&str> = players.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.windows(2).filter(|w| w[0] == w[1]).for_each(|w| {
            errors.push(format!("player name `{}` used twice", w[0]));
        });

        let agents = players.iter().filter(|p| p.source.is_agent()).count();
        let humans = players.len() - agents;
        if players.is_empty() {
            errors.push("no input sources: add at least one [[players]] entry".into());
        }
        match raw.session.mode {
            Mode::PartialAutomation if agents == 0 => {
                errors.push("partial_automation needs at least one agent source".into())
            }
            Mode::HumanCooperation if humans < 2 => {
                errors.push("human_cooperation needs at least two human sources".into())
            }
            _ => {}
        }

        let assignment = match (&raw.session.preset, &raw.assignment) {
            (Some(_), Some(_)) => {
                errors.push("give either session.preset or [assignment], not both".into());
                ActionAssignment::uniform(&profile, Assignment::Overlapping)
            }
            (Some(name), None) => ActionAssignment::preset(name).unwrap_or_else(|| {
                errors.push(format!("unknown preset `{name}` (expected P1 to P13)"));
                ActionAssignment::uniform(&profile, Assignment::Overlapping)
            }),
            (None, Some(table)) => {
                let mut a = ActionAssignment::new();
                for (action, code) in table {
                    match Assignment::parse(code) {
                        Some(x) => a = a.set(action.as_str(), x),
                        None => errors.push(format!("assignment.{action}: unknown value `{code}`")),
                    }
                }
                a
            }
            (None, None) => ActionAssignment::uniform(&profile, Assignment::Overlapping),
        };
        if let Err(v) = validate_assignment(&assignment, &profile) {
            errors.extend(v.iter().map(|v| format!("assignment: {v}")));
        }

        let mut policies = PolicyTable::defaults_for(&profile);
        for (action, text) in &raw.policies {
            let Some(desc) = profile.get(action) else {
                errors.push(format!("policies.{action}: unknown action"));
                continue;
            };
            match MergePolicy::parse(text, desc.value_kind) {
                Ok(p) => {
                    check_predicates(&p, action, &mut errors);
                    policies = policies.set(action.as_str(), p);
                }
                Err(e) => errors.push(format!("policies.{action}: {e}")),
            }
        }
        if let Err(v) = policies.validate(&profile) {
            errors.extend(v.iter().map(|v| format!("policies: {v}")));
        }

        let mut arena = raw.arena;
        if let Some(s) = raw.session.match_seconds {
            arena.match_seconds = s;
        }
        if let Some(g) = raw.session.golden_goal {
            arena.golden_goal = g;
        }
        if let Some(seed) = raw.session.seed {
            arena.seed = seed;
        }
        if let Err(e) = arena.validate() {
            errors.push(format!("arena: {e}"));
        }
        if raw.agent.period == 0 {
            errors.push("agent.period must be at least 1".into());
        }
        let scenario = raw.session.scenario.unwrap_or_else(|| "kickoff".into());
        if !SCENARIOS.contains(&scenario.as_str()) {
            errors.push(format!("unknown scenario `{scenario}`"));
        }
        let opponents = raw.session.opponents.unwrap_or_else(|| "heuristic".into());
        if !["heuristic", "idle"].contains(&opponents.as_str()) {
            errors.push(format!("unknown opponents policy `{opponents}`"));
        }

        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        Ok(SessionConfig {
            mode: raw.session.mode,
            players,
            assignment,
            policies,
            arena,
            agent: raw.agent,
            scenario,
            opponents,
            log: raw.session.log,
            base_dir: PathBuf::new(),
        })
    }

    pub fn taxonomy(&self) -> TaxonomyLabel {
        crate::input::classify_assignment(&self.assignment)
    }

    pub fn profile(&self) -> ActionProfile {
        ActionProfile::arena()
    }
}

/// One polled controller reading.
#[derive(Debug, Clone, PartialEq)]
pub enum Poll {
    State(ControllerState),
    Disconnected,
}

pub trait InputSource: Send {
    /// Latest element states at the tick boundary. Must not block.
    fn poll(&mut self, tick: u64) -> Poll;
}

pub struct IdleSource;

impl InputSource for IdleSource {
    fn poll(&mut self, _: u64) -> Poll {
        Poll::State(ControllerState::new())
    }
}

/// One line of an input script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub tick: u64,
    pub element: ElementId,
    pub intensity: WireIntensity,
}

/// Replays timed element changes; the state persists between events.
pub struct ScriptSource {
    events: Vec<(u64, InputCommand)>,
    next: usize,
    state: ControllerState,
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("script {path}: line {line}: {message}")]
    Script { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScriptSource {
    pub fn new(mut events: Vec<(u64, InputCommand)>) -> Self {
        events.sort_by_key(|(t, _)| *t);
        ScriptSource {
            events,
            next: 0,
            state: ControllerState::new(),
        }
    }

    pub fn parse<R: BufRead>(input: R, layout: &ControllerLayout, path: &str) -> Result<Self, SourceError> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SourceError::Script {
                path: path.to_string(),
                line: i + 1,
                message,
            };
            let ev: ScriptEvent = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let cmd = command_from_wire(layout, &ev.element, ev.intensity).map_err(err)?;
            events.push((ev.tick, cmd));
        }
        Ok(ScriptSource::new(events))
    }

    pub fn load(path: &Path, layout: &ControllerLayout) -> Result<Self, SourceError> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f), layout, &path.display().to_string())
    }
}

impl InputSource for ScriptSource {
    fn poll(&mut self, tick: u64) -> Poll {
        while let Some((t, cmd)) = self.events.get(self.next) {
            if *t > tick {
                break;
            }
            self.state.apply(cmd);
            self.next += 1;
        }
        Poll::State(self.state.clone())
    }
}

/// Resolves a wire intensity against the element's kind in `layout`.
pub fn command_from_wire(layout: &ControllerLayout, element: &ElementId, wire: WireIntensity) -> Result<InputCommand, String> {
    let e = layout
        .get(element.as_str())
        .ok_or_else(|| format!("unknown element `{element}`"))?;
    let intensity = Intensity::from_wire(e.kind, wire).map_err(|e| e.to_string())?;
    InputCommand::new(e.clone(), intensity).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelInput {
    Command(InputCommand),
    Disconnect,
}

/// Input fed from another thread. Commands queued between two polls are
/// applied in arrival order; the last write per element wins.
pub struct ChannelSource {
    rx: Receiver<ChannelInput>,
    state: ControllerState,
    closed: bool,
}

impl ChannelSource {
    pub fn new(rx: Receiver<ChannelInput>) -> Self {
        ChannelSource {
            rx,
            state: ControllerState::new(),
            closed: false,
        }
    }

    /// Reads `input` messages from standard input on a background thread.
    pub fn stdin(layout: ControllerLayout) -> Self {
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let stdin = std::io::stdin();
            for msg in crate::protocol::MessageReader::new(stdin.lock()) {
                match msg {
                    Ok(Message::Input(p)) => {
                        if let Ok(cmd) = command_from_wire(&layout, &p.element, p.intensity) {
                            if tx.send(ChannelInput::Command(cmd)).is_err() {
                                return;
                            }
                        }
                    }
                    Ok(_) => {}
                    Err(_) => break,
                }
            }
            let _ = tx.send(ChannelInput::Disconnect);
        });
        ChannelSource::new(rx)
    }
}

impl InputSource for ChannelSource {
    fn poll(&mut self, _: u64) -> Poll {
        if self.closed {
            return Poll::Disconnected;
        }
        loop {
            match self.rx.try_recv() {
                Ok(ChannelInput::Command(cmd)) => self.state.apply(&cmd),
                Ok(ChannelInput::Disconnect) | Err(TryRecvError::Disconnected) => {
                    self.closed = true;
                    return Poll::Disconnected;
                }
                Err(TryRecvError::Empty) => return Poll::State(self.state.clone()),
            }
        }
    }
}

/// Stages of one tick, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Interpret,
    Agent,
    Arbitrate,
    Apply,
    Step,
}

/// Hooks into the tick pipeline, for instrumentation and tests.
#[allow(unused_variables)]
pub trait PipelineObserver: Send {
    fn stage(&mut self, tick: u64, stage: Stage) {}
    fn human_polled(&mut self, tick: u64, player: &str, state: &ControllerState) {}
    fn agent_scheduled(&mut self, tick: u64, player: &str, action: &ScheduledAction) {}
    fn virtual_applied(&mut self, tick: u64, state: &VirtualControllerState) {}
    fn state(&mut self, state: &GameState) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Game(EventPayload),
    Disconnect { player: String },
    AgentFailure { player: String, message: String },
    MissedInference { player: String },
    PredicateFallback { action: ActionId, predicate: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub scores: [u32; 2],
    /// Goals scored minus conceded by team 0, the team the pilot drives.
    pub goal_differential: i64,
    pub ticks: u64,
    pub duration_seconds: f64,
    pub events: Vec<EventPayload>,
    pub trace_hash: String,
}

impl MatchResult {
    fn from_run(world: &World, config: &ArenaConfig, events: Vec<EventPayload>, trace_hash: String) -> Self {
        MatchResult {
            scores: world.scores,
            goal_differential: i64::from(world.scores[0]) - i64::from(world.scores[1]),
            ticks: world.tick,
            duration_seconds: world.seconds_elapsed(config),
            events,
            trace_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        tick_rate: u32,
        cars: usize,
        ticks: u64,
        scenario: String,
        seed: u64,
    },
    Input {
        tick: u64,
        role: Role,
        source: SourceId,
        player: String,
        action: ActionId,
        value: f64,
        /// Element that produced the value; absent for agents.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        element: Option<ElementId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intensity: Option<Intensity>,
    },
    Frame {
        tick: u64,
        frame: MergedActionFrame,
    },
    Controls {
        tick: u64,
        controllers: Vec<VirtualControllerState>,
    },
    Event {
        tick: u64,
        event: SessionEvent,
    },
    Result {
        result: MatchResult,
    },
}

/// Append-only record of a match.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickLog {
    pub records: Vec<LogRecord>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log has no header")]
    NoHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TickLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn frames(&self) -> impl Iterator<Item = (u64, &MergedActionFrame)> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Frame { tick, frame } => Some((*tick, frame)),
            _ => None,
        })
    }

    pub fn result(&self) -> Option<&MatchResult> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::Result { result } => Some(result),
            _ => None,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(TickLog { records })
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// The virtual controller record the arena consumed.
    pub fn to_input_log(&self) -> Result<InputLog, LogError> {
        let mut header = None;
        let mut records = Vec::new();
        for r in &self.records {
            match r {
                LogRecord::Header {
                    tick_rate,
                    cars,
                    ticks,
                    scenario,
                    ..
                } => {
                    header = Some(InputLogHeader {
                        tick_rate: *tick_rate,
                        cars: *cars,
                        ticks: *ticks,
                        scenario: (scenario != "kickoff").then(|| scenario.clone()),
                    })
                }
                LogRecord::Controls { tick, controllers } => records.push(InputLogRecord {
                    tick: *tick,
                    controllers: controllers.clone(),
                }),
                _ => {}
            }
        }
        Ok(InputLog {
            header: header.ok_or(LogError::NoHeader)?,
            records,
        })
    }
}

/// Re-runs the arena from a tick log and rebuilds the match result.
pub fn replay_log(log: &TickLog, arena: &ArenaConfig) -> Result<MatchResult, crate::arena::ArenaError> {
    let input = log
        .to_input_log()
        .map_err(|e| crate::arena::ArenaError::Log(e.to_string()))?;
    let out = crate::arena::replay(&input, arena)?;
    Ok(MatchResult::from_run(&out.world, arena, out.events, out.trace_hash))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayElement {
    pub element: ElementId,
    pub intensity: WireIntensity,
}

/// Which elements each role had active at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub tick: u64,
    pub pilot: Vec<OverlayElement>,
    pub copilot: Vec<OverlayElement>,
}

/// Per-tick dual-controller view of a log. Agent contributions, which have
/// no physical element, are shown on the element the game binds to the
/// action.
pub fn export_augmented_log(log: &TickLog) -> Vec<OverlayRecord> {
    let default_mapping = ControllerMapping::arena_default();
    let profile = ActionProfile::arena();
    let mut per_tick: BTreeMap<u64, [BTreeMap<ElementId, WireIntensity>; 2]> = BTreeMap::new();
    for r in &log.records {
        match r {
            LogRecord::Frame { tick, .. } => {
                per_tick.entry(*tick).or_default();
            }
            LogRecord::Input {
                tick,
                role,
                action,
                value,
                element,
                intensity,
                ..
            } => {
                let slot = &mut per_tick.entry(*tick).or_default()[*role as usize];
                match (element, intensity) {
                    (Some(e), Some(i)) if !i.is_neutral() => {
                        slot.insert(e.clone(), i.to_wire());
                    }
                    (None, None) if *value != 0.0 => {
                        let Some(binding) = default_mapping.bindings_for_action(action.as_str()).next() else {
                            continue;
                        };
                        let Some(desc) = profile.get(action.as_str()) else {
                            continue;
                        };
                        if let crate::input::BindingSource::Element(e) = &binding.source {
                            let wire = match (e.kind, desc.value_kind) {
                                (ElementKind::StickAxisPair, _) => WireIntensity::Pair([*value, 0.0]),
                                _ => WireIntensity::Scalar(*value),
                            };
                            slot.insert(e.id.clone(), wire);
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
    }
    let list = |m: BTreeMap<ElementId, WireIntensity>| {
        m.into_iter()
            .map(|(element, intensity)| OverlayElement { element, intensity })
            .collect()
    };
    per_tick
        .into_iter()
        .map(|(tick, [p, c])| OverlayRecord {
            tick,
            pilot: list(p),
            copilot: list(c),
        })
        .collect()
}

pub fn write_overlay<W: Write>(records: &[OverlayRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_overlay<R: BufRead>(input: R) -> Result<Vec<OverlayRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("arena: {0}")]
    Arena(#[from] crate::arena::ArenaError),
    #[error("arbitration: {0}")]
    Arbitration(#[from] crate::arbiter::ArbitrationError),
    #[error("writing log: {0}")]
    Log(#[from] std::io::Error),
}

struct HumanSlot {
    name: String,
    ctx: InterpreterContext,
    source: Box<dyn InputSource>,
    connected: bool,
}

struct AgentSlot {
    name: String,
    source_id: SourceId,
    schedule: AgentSchedule,
    policy: Option<Box<dyn AgentPolicy>>,
    remote: Option<Receiver<AgentActionVector>>,
    pending: Option<AgentActionVector>,
}

struct OpponentSlot {
    car: usize,
    schedule: AgentSchedule,
    policy: Box<dyn AgentPolicy>,
}

/// The car every pilot and copilot drive together.
pub const SHARED_CAR: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub state: GameState,
    pub events: Vec<EventPayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// As fast as possible.
    Unpaced,
    /// Wall-clock 120 Hz. A late tick runs immediately; none is skipped.
    RealTime,
}

pub struct Session {
    config: SessionConfig,
    profile: ActionProfile,
    game_mapping: ControllerMapping,
    game_layout: ControllerLayout,
    world: World,
    state: GameState,
    virtual_states: Vec<VirtualControllerState>,
    humans: Vec<HumanSlot>,
    agents: Vec<AgentSlot>,
    opponents: Vec<OpponentSlot>,
    log: TickLog,
    hasher: TraceHasher,
    events: Vec<EventPayload>,
    observer: Option<Box<dyn PipelineObserver>>,
}

impl Session {
    /// Builds the runtime. Script sources are loaded here; remote players
    /// stay idle until [`Session::attach_source`] connects them.
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        let profile = config.profile();
        let mut world = World::scenario(&config.arena, &config.scenario)?;
        let mut humans = Vec::new();
        let mut agents = Vec::new();
        for (i, p) in config.players.iter().enumerate() {
            let source_id = SourceId(i as u32);
            match &p.source {
                SourceSpec::Agent(name) => {
                    let (policy, remote) = if name == "remote" {
                        (None, None)
                    } else {
                        (builtin_policy(name, &config.agent.params), None)
                    };
                    agents.push(AgentSlot {
                        name: p.name.clone(),
                        source_id,
                        schedule: AgentSchedule::new(config.agent.period),
                        policy,
                        remote,
                        pending: None,
                    });
                }
                spec => {
                    let source: Box<dyn InputSource> = match spec {
                        SourceSpec::Script(path) => {
                            let path = if path.is_relative() { config.base_dir.join(path) } else { path.clone() };
                            Box::new(ScriptSource::load(&path, &p.layout)?)
                        }
                        SourceSpec::Stdin => Box::new(ChannelSource::stdin(p.layout.clone())),
                        _ => Box::new(IdleSource),
                    };
                    let ctx = InterpreterContext::new(
                        p.role,
                        source_id,
                        p.mapping.clone(),
                        config.assignment.clone(),
                        profile.clone(),
                        p.dead_zones,
                    )
                    .map_err(|v| ConfigError::Invalid(v.iter().map(|v| format!("{}: {v}", p.name)).collect()))?;
                    humans.push(HumanSlot {
                        name: p.name.clone(),
                        ctx,
                        source,
                        connected: true,
                    });
                }
            }
        }
        if !agents.is_empty() {
            world.cars[SHARED_CAR].is_bot = true;
        }
        let opponents = (0..world.cars.len())
            .filter(|&c| c != SHARED_CAR)
            .map(|car| OpponentSlot {
                car,
                schedule: AgentSchedule::new(config.agent.period),
                policy: builtin_policy(&config.opponents, &config.agent.params)
                    .unwrap_or_else(|| Box::new(crate::agent::ConstantAgent::default())),
            })
            .collect::<Vec<_>>();
        for o in &opponents {
            world.cars[o.car].is_bot = config.opponents != "idle";
        }
        let state = world.snapshot(&config.arena);
        let mut log = TickLog::default();
        log.push(LogRecord::Header {
            tick_rate: config.arena.tick_rate,
            cars: world.cars.len(),
            ticks: config.arena.match_ticks(),
            scenario: config.scenario.clone(),
            seed: config.arena.seed,
        });
        Ok(Session {
            virtual_states: vec![ControllerState::neutral(&ControllerLayout::standard_pad()); world.cars.len()],
            game_mapping: ControllerMapping::arena_default(),
            game_layout: ControllerLayout::standard_pad(),
            profile,
            world,
            state,
            humans,
            agents,
            opponents,
            log,
            hasher: TraceHasher::new(),
            events: Vec::new(),
            observer: None,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn log(&self) -> &TickLog {
        &self.log
    }

    pub fn is_over(&self) -> bool {
        self.world.phase == Phase::Ended
    }

    pub fn set_observer(&mut self, observer: Box<dyn PipelineObserver>) {
        self.observer = Some(observer);
    }

    pub fn take_observer(&mut self) -> Option<Box<dyn PipelineObserver>> {
        self.observer.take()
    }

    /// Replaces the input source of a human player. Returns false when no
    /// human player has that name.
    pub fn attach_source(&mut self, player: &str, source: Box<dyn InputSource>) -> bool {
        match self.humans.iter_mut().find(|h| h.name == player) {
            Some(h) => {
                h.source = source;
                h.connected = true;
                true
            }
            None => false,
        }
    }

    /// Replaces the policy of an agent player.
    pub fn attach_policy(&mut self, player: &str, policy: Box<dyn AgentPolicy>) -> bool {
        match self.agents.iter_mut().find(|a| a.name == player) {
            Some(a) => {
                a.policy = Some(policy);
                a.remote = None;
                true
            }
            None => false,
        }
    }

    /// Connects a remote agent: vectors received on `rx` are adopted at
    /// the next inference tick.
    pub fn attach_remote_agent(&mut self, player: &str, rx: Receiver<AgentActionVector>) -> bool {
        match self.agents.iter_mut().find(|a| a.name == player) {
            Some(a) => {
                a.policy = None;
                a.remote = Some(rx);
                true
            }
            None => false,
        }
    }

    /// Names of players with the given source kind.
    pub fn players_with(&self, pred: impl Fn(&SourceSpec) -> bool) -> Vec<String> {
        self.config
            .players
            .iter()
            .filter(|p| pred(&p.source))
            .map(|p| p.name.clone())
            .collect()
    }

    fn observe(&mut self, f: impl FnOnce(&mut dyn PipelineObserver)) {
        if let Some(o) = self.observer.as_deref_mut() {
            f(o);
        }
    }

    /// Runs one full tick of the pipeline.
    pub fn step(&mut self) -> Result<TickOutput, SessionError> {
        let tick = self.world.tick;
        let suspended = suspend_on_pause(self.state.ui);

        self.observe(|o| o.stage(tick, Stage::Interpret));
        let mut entries = Vec::new();
        for i in 0..self.humans.len() {
            let h = &mut self.humans[i];
            let polled = h.source.poll(tick);
            let polled = match polled {
                Poll::State(s) => s,
                Poll::Disconnected => {
                    if h.connected {
                        h.connected = false;
                        let player = h.name.clone();
                        self.log.push(LogRecord::Event {
                            tick,
                            event: SessionEvent::Disconnect { player },
                        });
                    }
                    continue;
                }
            };
            let name = h.name.clone();
            self.observe(|o| o.human_polled(tick, &name, &polled));
            if suspended {
                continue;
            }
            let h = &self.humans[i];
            for it in interpret_state(&polled, &h.ctx, tick) {
                let intensity = it.element.as_ref().and_then(|e| polled.get(e.as_str()));
                let intensity = match (&it.element, intensity) {
                    (Some(e), None) => h
                        .ctx
                        .mapping()
                        .binding_for(e)
                        .and_then(|b| b.source.elements().into_iter().find(|x| &x.id == e).map(|x| Intensity::neutral(x.kind))),
                    (_, i) => i,
                };
                self.log.push(LogRecord::Input {
                    tick,
                    role: it.entry.role(),
                    source: it.entry.source(),
                    player: h.name.clone(),
                    action: it.entry.action().clone(),
                    value: it.entry.value(),
                    element: it.element.clone(),
                    intensity,
                });
                entries.push(it.entry);
            }
        }

        self.observe(|o| o.stage(tick, Stage::Agent));
        let features = compute_derived(&self.state, SHARED_CAR).ok();
        let pilot_entries: Vec<_> = entries.iter().filter(|e| e.role() == Role::Pilot).cloned().collect();
        for i in 0..self.agents.len() {
            let a = &mut self.agents[i];
            let mut missed = false;
            let scheduled = if let Some(rx) = &a.remote {
                while let Ok(v) = rx.try_recv() {
                    a.pending = Some(v);
                }
                if a.schedule.is_due(tick) {
                    match a.pending.take() {
                        Some(v) => {
                            a.schedule.store(tick, v);
                            ScheduledAction {
                                vector: v,
                                inferred: true,
                                failure: None,
                            }
                        }
                        None => {
                            missed = true;
                            ScheduledAction {
                                vector: a.schedule.last_vector(),
                                inferred: false,
                                failure: None,
                            }
                        }
                    }
                } else {
                    ScheduledAction {
                        vector: a.schedule.last_vector(),
                        inferred: false,
                        failure: None,
                    }
                }
            } else if let Some(policy) = a.policy.as_deref_mut() {
                let input = features.map(|features| AgentInput {
                    state: &self.state,
                    features,
                    car: SHARED_CAR,
                    pilot_entries: &pilot_entries,
                });
                a.schedule.tick(tick, input.as_ref(), policy)
            } else {
                // remote agent not connected yet
                missed = a.schedule.is_due(tick);
                ScheduledAction {
                    vector: a.schedule.last_vector(),
                    inferred: false,
                    failure: None,
                }
            };
            let name = a.name.clone();
            let source_id = a.source_id;
            if missed {
                self.log.push(LogRecord::Event {
                    tick,
                    event: SessionEvent::MissedInference { player: name.clone() },
                });
            }
            if let Some(f) = &scheduled.failure {
                self.log.push(LogRecord::Event {
                    tick,
                    event: SessionEvent::AgentFailure {
                        player: name.clone(),
                        message: f.to_string(),
                    },
                });
            }
            self.observe(|o| o.agent_scheduled(tick, &name, &scheduled));
            for e in mask_actions(&scheduled.vector, &self.config.assignment, tick, source_id) {
                self.log.push(LogRecord::Input {
                    tick,
                    role: e.role(),
                    source: e.source(),
                    player: name.clone(),
                    action: e.action().clone(),
                    value: e.value(),
                    element: None,
                    intensity: None,
                });
                entries.push(e);
            }
        }

        self.observe(|o| o.stage(tick, Stage::Arbitrate));
        let predicates = StatePredicates {
            field_half_length: self.config.arena.half_length,
            ..StatePredicates::new(Some(&self.state), SHARED_CAR)
        };
        let arbitration = arbitrate_frame(&entries, tick, &self.config.policies, &self.profile, &predicates)?;
        for w in &arbitration.warnings {
            self.log.push(LogRecord::Event {
                tick,
                event: SessionEvent::PredicateFallback {
                    action: w.action.clone(),
                    predicate: w.predicate.clone(),
                    message: w.message.clone(),
                },
            });
        }

        self.observe(|o| o.stage(tick, Stage::Apply));
        let commands = frame_to_commands(&arbitration.frame, &self.game_mapping, &self.profile, &self.game_layout);
        let shared = std::mem::take(&mut self.virtual_states[SHARED_CAR]);
        self.virtual_states[SHARED_CAR] = virtual_apply(&commands, shared);
        let applied = self.virtual_states[SHARED_CAR].clone();
        self.observe(|o| o.virtual_applied(tick, &applied));
        self.drive_opponents(tick);
        self.log.push(LogRecord::Frame {
            tick,
            frame: arbitration.frame,
        });
        self.log.push(LogRecord::Controls {
            tick,
            controllers: self.virtual_states.clone(),
        });

        self.observe(|o| o.stage(tick, Stage::Step));
        let events = self.world.step(&self.virtual_states, &self.config.arena);
        self.hasher.record(&self.world);
        for e in &events {
            self.log.push(LogRecord::Event {
                tick,
                event: SessionEvent::Game(e.clone()),
            });
        }
        self.events.extend(events.iter().cloned());
        self.state = self.world.snapshot(&self.config.arena);
        let snapshot = self.state.clone();
        self.observe(|o| o.state(&snapshot));
        Ok(TickOutput { state: snapshot, events })
    }

    fn drive_opponents(&mut self, tick: u64) {
        let all_copilot = ActionAssignment::uniform(&self.profile, Assignment::CopilotOnly);
        for o in &mut self.opponents {
            let input = compute_derived(&self.state, o.car).ok().map(|features| AgentInput {
                state: &self.state,
                features,
                car: o.car,
                pilot_entries: &[],
            });
            let v = o.schedule.tick(tick, input.as_ref(), o.policy.as_mut()).vector;
            let entries = mask_actions(&v, &all_copilot, tick, SourceId(u32::MAX));
            let mut frame = MergedActionFrame::neutral(tick, &self.profile);
            for e in &entries {
                frame.set(e.action().as_str(), e.value());
            }
            let commands = frame_to_commands(&frame, &self.game_mapping, &self.profile, &self.game_layout);
            let prev = std::mem::take(&mut self.virtual_states[o.car]);
            self.virtual_states[o.car] = virtual_apply(&commands, prev);
        }
    }

    /// Steps until the match ends, then appends the result record and
    /// writes the log if one is configured.
    pub fn run(mut self, pacing: Pacing) -> Result<(MatchResult, TickLog), SessionError> {
        let period = Duration::from_secs_f64(self.config.arena.dt());
        let start = Instant::now();
        let mut outcome = Ok(());
        while !self.is_over() {
            if let Err(e) = self.step() {
                outcome = Err(e);
                break;
            }
            if pacing == Pacing::RealTime {
                let due = start + period * self.world.tick as u32;
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
        }
        let result = self.finish();
        if let Some(path) = &self.config.log {
            self.log.save(path)?;
        }
        outcome?;
        Ok((result, self.log))
    }

    /// Appends the result record for the ticks run so far.
    pub fn finish(&mut self) -> MatchResult {
        let result = MatchResult::from_run(&self.world, &self.config.arena, self.events.clone(), self.hasher.hex());
        self.log.push(LogRecord::Result { result: result.clone() });
        result
    }
}

/// Runs a whole match headless.
pub fn run_match(config: SessionConfig) -> Result<(MatchResult, TickLog), SessionError> {
    Session::new(config)?.run(Pacing::Unpaced)
}

/// Team-0 goal differentials of paired matches as samples for the
/// statistics module.
pub fn paired_differentials(pairs: &[(MatchResult, MatchResult)]) -> crate::stats::PairedSamples {
    crate::stats::PairedSamples::from_pairs(
        &pairs
            .iter()
            .map(|(a, b)| (a.goal_differential as f64, b.goal_differential as f64))
            .collect::<Vec<_>>(),
    )
}

/// Arena action bound to each element of the default layout, for UIs.
pub fn default_mapping_table() -> Vec<(ElementId, ActionId)> {
    ControllerMapping::arena_default()
        .bindings()
        .iter()
        .filter_map(|b| match &b.source {
            crate::input::BindingSource::Element(e) => Some((e.id.clone(), b.action.clone())),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::pad;

    const PARTIAL: &str = r#"
[session]
mode = "partial_automation"
match_seconds = 2
preset = "P1"

[[players]]
name = "pilot"
role = "pilot"
source = "idle"

[[players]]
name = "bot"
role = "copilot"
source = "agent:heuristic"
"#;

    #[test]
    fn parses_a_minimal_config() {
        let c = SessionConfig::from_toml_str(PARTIAL).unwrap();
        assert_eq!(c.mode, Mode::PartialAutomation);
        assert_eq!(c.players.len(), 2);
        assert_eq!(c.assignment, ActionAssignment::preset("P1").unwrap());
        assert_eq!(c.players[0].mapping, ControllerMapping::arena_default());
        assert_eq!(c.arena.match_ticks(), 240);
        assert_eq!(c.taxonomy(), TaxonomyLabel::Hybrid);
    }

    #[test]
    fn rejects_a_session_without_sources() {
        let err = SessionConfig::from_toml_str("[session]\nmode = \"hybrid\"\n").unwrap_err();
        assert!(err.violations().iter().any(|v| v.contains("no input sources")));
    }

    #[test]
    fn mode_invariants() {
        let no_agent = PARTIAL.replace("agent:heuristic", "idle");
        let err = SessionConfig::from_toml_str(&no_agent).unwrap_err();
        assert!(err.violations().iter().any(|v| v.contains("at least one agent")));
        let coop = PARTIAL.replace("partial_automation", "human_cooperation");
        let err = SessionConfig::from_toml_str(&coop).unwrap_err();
        assert!(err.violations().iter().any(|v| v.contains("two human")));
        let pilot_bot = PARTIAL.replace("role = \"copilot\"", "role = \"pilot\"");
        assert!(SessionConfig::from_toml_str(&pilot_bot).is_err());
    }

    #[test]
    fn mapping_errors_are_collected() {
        let text = format!(
            "{PARTIAL}\n[mapping.mine]\nA = \"Jump\"\nLeftStick = \"Steer\"\nRightTrigger = \"Accelerate\"\nLeftTrigger = \"Brake\"\nB = \"Boost\"\nX = \"Handbrake\"\nPaddle = \"Jump\"\n"
        )
        .replace("source = \"idle\"", "source = \"idle\"\nmapping = \"mine\"");
        let err = SessionConfig::from_toml_str(&text).unwrap_err();
        assert!(err.violations().iter().any(|v| v.contains("unknown element `Paddle`")));
        let with_paddle = text.replace(
            "mapping = \"mine\"",
            "mapping = \"mine\"\ncontroller = \"adaptive\"",
        ) + "\n[controllers.adaptive]\nextra_buttons = [\"Paddle\"]\n";
        let c = SessionConfig::from_toml_str(&with_paddle).unwrap();
        assert!(c.players[0].layout.get("Paddle").is_some());
    }

    #[test]
    fn button_pair_mapping() {
        let text = format!(
            "{PARTIAL}\n[mapping.pair]\n\"DPadLeft+DPadRight\" = \"Steer\"\nRightTrigger = \"Accelerate\"\n"
        )
        .replace("source = \"idle\"", "source = \"idle\"\nmapping = \"pair\"");
        let c = SessionConfig::from_toml_str(&text).unwrap();
        assert!(c.players[0].mapping.binding_for(&ElementId::new(pad::DPAD_RIGHT)).is_some());
    }

    #[test]
    fn policies_and_predicates() {
        let ok = format!("{PARTIAL}\n[policies]\nSteer = \"override:ball_near_own_goal\"\nJump = \"select:pilot\"\n");
        let c = SessionConfig::from_toml_str(&ok).unwrap();
        assert_eq!(c.policies.get("Jump"), Some(&MergePolicy::SelectPriority(Role::Pilot)));
        let bad = format!("{PARTIAL}\n[policies]\nSteer = \"override:full_moon\"\nJump = \"average\"\n");
        let err = SessionConfig::from_toml_str(&bad).unwrap_err();
        assert_eq!(err.violations().len(), 2, "{:?}", err.violations());
    }

    #[test]
    fn script_source_holds_state_between_events() {
        let text = r#"{"tick":2,"element":"RightTrigger","intensity":0.75}
{"tick":5,"element":"A","intensity":1}
{"tick":6,"element":"RightTrigger","intensity":0}
"#;
        let mut s = ScriptSource::parse(text.as_bytes(), &ControllerLayout::standard_pad(), "t").unwrap();
        let at = |s: &mut ScriptSource, t| match s.poll(t) {
            Poll::State(c) => c,
            Poll::Disconnected => unreachable!(),
        };
        assert_eq!(at(&mut s, 0).trigger(pad::RIGHT_TRIGGER), 0.0);
        assert_eq!(at(&mut s, 3).trigger(pad::RIGHT_TRIGGER), 0.75);
        let c = at(&mut s, 5);
        assert!(c.button(pad::A));
        assert_eq!(at(&mut s, 9).trigger(pad::RIGHT_TRIGGER), 0.0);
        let bad = ScriptSource::parse(r#"{"tick":0,"element":"A","intensity":[1,0]}"#.as_bytes(), &ControllerLayout::standard_pad(), "t");
        assert!(bad.is_err());
    }

    #[test]
    fn channel_source_reports_disconnect() {
        let (tx, rx) = std::sync::mpsc::channel();
        let mut s = ChannelSource::new(rx);
        tx.send(ChannelInput::Command(
            InputCommand::new(InputElement::button(pad::B), Intensity::Button(true)).unwrap(),
        ))
        .unwrap();
        assert!(matches!(s.poll(0), Poll::State(c) if c.button(pad::B)));
        drop(tx);
        assert_eq!(s.poll(1), Poll::Disconnected);
    }

    #[test]
    fn match_length_gives_one_frame_per_tick() {
        let c = SessionConfig::from_toml_str(PARTIAL).unwrap();
        let (result, log) = run_match(c).unwrap();
        assert_eq!(result.ticks, 240);
        assert_eq!(log.frames().count(), 240);
        let ticks: Vec<u64> = log.frames().map(|(t, _)| t).collect();
        assert!(ticks.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(log.result(), Some(&result));
    }

    #[test]
    fn log_round_trips_and_replays() {
        let c = SessionConfig::from_toml_str(PARTIAL).unwrap();
        let arena = c.arena.clone();
        let (result, log) = run_match(c).unwrap();
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let back = TickLog::read_from(&buf[..]).unwrap();
        assert_eq!(back, log);
        assert_eq!(replay_log(&back, &arena).unwrap(), result);
    }

    #[test]
    fn overlay_examples() {
        let mut log = TickLog::default();
        log.push(LogRecord::Frame {
            tick: 0,
            frame: MergedActionFrame::neutral(0, &ActionProfile::arena()),
        });
        log.push(LogRecord::Frame {
            tick: 1,
            frame: MergedActionFrame::neutral(1, &ActionProfile::arena()),
        });
        log.push(LogRecord::Input {
            tick: 1,
            role: Role::Pilot,
            source: SourceId(0),
            player: "p".into(),
            action: ActionId::new("Accelerate"),
            value: 0.8,
            element: Some(ElementId::new(pad::RIGHT_TRIGGER)),
            intensity: Some(Intensity::Trigger(0.8)),
        });
        log.push(LogRecord::Input {
            tick: 1,
            role: Role::Copilot,
            source: SourceId(1),
            player: "bot".into(),
            action: ActionId::new("Boost"),
            value: 1.0,
            element: None,
            intensity: None,
        });
        let overlay = export_augmented_log(&log);
        assert_eq!(overlay[0].pilot, vec![]);
        assert_eq!(overlay[0].copilot, vec![]);
        assert_eq!(
            overlay[1].pilot,
            vec![OverlayElement {
                element: ElementId::new(pad::RIGHT_TRIGGER),
                intensity: WireIntensity::Scalar(0.8)
            }]
        );
        assert_eq!(
            overlay[1].copilot,
            vec![OverlayElement {
                element: ElementId::new(pad::B),
                intensity: WireIntensity::Scalar(1.0)
            }]
        );
        let mut buf = Vec::new();
        write_overlay(&overlay, &mut buf).unwrap();
        assert_eq!(read_overlay(&buf[..]).unwrap(), overlay);
    }
}
