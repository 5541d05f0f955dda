//! Game-state snapshot schema, derived features and the newline-delimited
//! JSON wire protocol spoken over local stream sockets and WebSocket text
//! frames.
//!
//! Every message is one UTF-8 JSON object terminated by `\n`. Envelopes
//! carry a `type` tag and a `payload`:
//!
//! ```text
//! {"type":"state","payload":{"ball":{...},"cars":[...],"teams":[...],"info":{...},"pads":[...],"ui":"in_game","tick":42}}
//! {"type":"input","payload":{"player":"pilot","element":"RightTrigger","intensity":0.8,"tick":42}}
//! {"type":"event","payload":{"kind":"goal","team":0,"tick":42}}
//! {"type":"agent_action","payload":{"tick":45,"vector":[1,0,0,0,0,0,1,0]}}
//! ```

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentActionVector;
use crate::input::{ElementId, Role, WireIntensity};

/// Angles within this distance of each other (or of ±π) compare equal.
pub const ANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }


    pub fn scale(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Pitch, yaw and roll in radians, each within [-π, π].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl Rotation {
    pub fn from_yaw(yaw: f64) -> Self {
        Rotation {
            pitch: 0.0,
            yaw,
            roll: 0.0,
        }
    }

    fn is_normalized(&self) -> bool {
        [self.pitch, self.yaw, self.roll]
            .iter()
            .all(|a| a.is_finite() && a.abs() <= PI + ANGLE_TOLERANCE)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub location: Vec3,
    pub rotation: Rotation,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl Physics {
    fn is_finite(&self) -> bool {
        self.location.is_finite() && self.velocity.is_finite() && self.angular_velocity.is_finite()
    }
}

pub type BallState = Physics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub physics: Physics,
    pub team_id: u8,
    pub demolished: bool,
    pub ground_contact: bool,
    pub jumped: bool,
    /// Remaining fuel, percent.
    pub boost: f64,
    pub is_bot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamInfo {
    pub team_id: u8,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInfo {
    pub seconds_elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostPadState {
    pub pad_id: u32,
    pub active: bool,
    /// Seconds until the pad reactivates; 0 while active.
    pub respawn_remaining: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UiState {
    InGame,
    Paused,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub ball: BallState,
    pub cars: Vec<CarState>,
    pub teams: Vec<TeamInfo>,
    pub info: GameInfo,
    pub pads: Vec<BoostPadState>,
    pub ui: UiState,
    pub tick: u64,
}

/// Top-level field names of an encoded [`GameState`], in encoding order.
pub const STATE_FIELDS: [&str; 7] = ["ball", "cars", "teams", "info", "pads", "ui", "tick"];

impl GameState {
    /// Checks the snapshot invariants: finite numbers, normalized angles,
    /// boost within [0, 100], two teams, consistent pad timers.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let invalid = |what: String| Err(ProtocolError::InvalidState(what));
        if !self.ball.is_finite() {
            return invalid("ball has a non-finite component".into());
        }
        if !self.ball.rotation.is_normalized() {
            return invalid(format!("ball rotation {:?} not within [-pi, pi]", self.ball.rotation));
        }
        for (i, car) in self.cars.iter().enumerate() {
            if !car.physics.is_finite() || !car.boost.is_finite() {
                return invalid(format!("car {i} has a non-finite component"));
            }
            if !car.physics.rotation.is_normalized() {
                return invalid(format!("car {i} rotation {:?} not within [-pi, pi]", car.physics.rotation));
            }
            if !(0.0..=100.0).contains(&car.boost) {
                return invalid(format!("car {i} boost {} outside [0, 100]", car.boost));
            }
            if car.team_id > 1 {
                return invalid(format!("car {i} team {}", car.team_id));
            }
        }
        if self.teams.len() != 2 || self.teams.iter().enumerate().any(|(i, t)| t.team_id as usize != i) {
            return invalid("expected exactly teams 0 and 1".into());
        }
        if !self.info.seconds_elapsed.is_finite() || self.info.seconds_elapsed < 0.0 {
            return invalid(format!("seconds_elapsed {}", self.info.seconds_elapsed));
        }
        for pad in &self.pads {
            if !pad.respawn_remaining.is_finite() || pad.respawn_remaining < 0.0 {
                return invalid(format!("pad {} respawn {}", pad.pad_id, pad.respawn_remaining));
            }
            if pad.active && pad.respawn_remaining != 0.0 {
                return invalid(format!("active pad {} has a respawn timer", pad.pad_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("schema error{}: {message}", field.as_ref().map(|f| format!(" in field `{f}`")).unwrap_or_default())]
    Schema { field: Option<String>, message: String },
    #[error("non-finite angle")]
    NonFiniteAngle,
    #[error("car index {index} out of range ({cars} cars)")]
    CarIndex { index: usize, cars: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn classify_json_error(e: serde_json::Error) -> ProtocolError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => {
            let message = e.to_string();
            let field = message
                .split_once("missing field `")
                .and_then(|(_, rest)| rest.split_once('`'))
                .map(|(f, _)| f.to_string());
            ProtocolError::Schema { field, message }
        }
        Category::Io => ProtocolError::Io(e.into()),
        Category::Syntax | Category::Eof => ProtocolError::Malformed(e.to_string()),
    }
}

/// One newline-terminated JSON line holding the bare state object.
pub fn encode_state(state: &GameState) -> Result<Vec<u8>, ProtocolError> {
    state.validate()?;
    let mut out = serde_json::to_vec(state).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Inverse of [`encode_state`]. Unknown fields are ignored.
pub fn decode_state(bytes: &[u8]) -> Result<GameState, ProtocolError> {
    let line = trim_line(bytes);
    serde_json::from_slice(line).map_err(classify_json_error)
}

fn trim_line(bytes: &[u8]) -> &[u8] {
    let mut end = bytes.len();
    while end > 0 && (bytes[end - 1] == b'\n' || bytes[end - 1] == b'\r') {
        end -= 1;
    }
    &bytes[..end]
}

/// Reduces an angle into [-π, π]. Angles already inside the closed range
/// are returned unchanged, so both π and -π are fixed points; use
/// [`angles_equal`] to compare across the branch cut.
pub fn normalize_angle(theta: f64) -> Result<f64, ProtocolError> {
    if !theta.is_finite() {
        return Err(ProtocolError::NonFiniteAngle);
    }
    if (-PI..=PI).contains(&theta) {
        return Ok(theta);
    }
    let two_pi = 2.0 * PI;
    let r = theta - two_pi * (theta / two_pi).round();
    Ok(r.clamp(-PI, PI))
}

/// Equality modulo 2π within [`ANGLE_TOLERANCE`].
pub fn angles_equal(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d <= ANGLE_TOLERANCE || 2.0 * PI - d <= ANGLE_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedFeatures {
    pub distance_car_ball: f64,
    /// Unit vector from car to ball in world frame; zero when coincident.
    pub relative_direction: Vec3,
    /// Ball velocity minus car velocity.
    pub relative_velocity: Vec3,
}

pub fn compute_derived(state: &GameState, car_index: usize) -> Result<DerivedFeatures, ProtocolError> {
    let car = state.cars.get(car_index).ok_or(ProtocolError::CarIndex {
        index: car_index,
        cars: state.cars.len(),
    })?;
    let offset = state.ball.location - car.physics.location;
    let distance = offset.norm();
    let direction = if distance > 0.0 {
        offset.scale(1.0 / distance)
    } else {
        Vec3::ZERO
    };
    Ok(DerivedFeatures {
        distance_car_ball: distance,
        relative_direction: direction,
        relative_velocity: state.ball.velocity - car.physics.velocity,
    })
}

/// Input processing is suspended whenever the game is not being played.
pub fn suspend_on_pause(ui: UiState) -> bool {
    ui != UiState::InGame
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPayload {
    pub player: String,
    pub element: ElementId,
    pub intensity: WireIntensity,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Goal,
    Kickoff,
    MatchEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPayload {
    pub kind: EventKind,
    #[serde(default)]
    pub team: Option<u8>,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentActionPayload {
    pub tick: u64,
    pub vector: AgentActionVector,
}

/// Session-level control messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigPayload {
    /// Client → server: claim a player slot. `player` names a remote
    /// source in the session config; `agent` marks a software copilot.
    Hello {
        player: String,
        #[serde(default)]
        agent: bool,
    },
    /// Server → client: slot granted.
    Welcome { player: String, role: Role },
    /// Client → server: validate a session config document (TOML text).
    Validate { session: String },
    /// Server → client: outcome of a `validate` request.
    Validation { ok: bool, violations: Vec<String> },
    /// Server → client: a request was rejected.
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Message {
    State(GameState),
    Input(InputPayload),
    Event(EventPayload),
    Config(ConfigPayload),
    AgentAction(AgentActionPayload),
}

/// Encodes a message as one line, including the trailing newline.
pub fn encode_message(msg: &Message) -> Result<String, ProtocolError> {
    if let Message::State(s) = msg {
        s.validate()?;
    }
    let mut line = serde_json::to_string(msg).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

pub fn decode_message(line: &str) -> Result<Message, ProtocolError> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(classify_json_error)
}

/// Reads newline-delimited messages from a byte stream. Blank lines are
/// skipped.
pub struct MessageReader<R> {
    inner: R,
    buf: String,
}

impl<R: BufRead> MessageReader<R> {
    pub fn new(inner: R) -> Self {
        MessageReader {
            inner,
            buf: String::new(),
        }
    }

    /// `Ok(None)` on clean end of stream.
    pub fn read_message(&mut self) -> Result<Option<Message>, ProtocolError> {
        loop {
            self.buf.clear();
            if self.inner.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            if !self.buf.ends_with('\n') {
                return Err(ProtocolError::Malformed("truncated line at end of stream".into()));
            }
            if self.buf.trim().is_empty() {
                continue;
            }
            return decode_message(&self.buf).map(Some);
        }
    }
}

impl<R: BufRead> Iterator for MessageReader<R> {
    type Item = Result<Message, ProtocolError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_message().transpose()
    }
}

pub fn write_message<W: Write>(out: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    out.write_all(encode_message(msg)?.as_bytes())?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::fixtures::kickoff_state;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kickoff_state_encodes_to_one_line() {
        let bytes = encode_state(&kickoff_state()).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        assert_eq!(text.matches('\n').count(), 1);
        assert!(text.ends_with('\n'));
        let v: serde_json::Value = serde_json::from_str(text).unwrap();
        assert!(v.get("ball").is_some() && v.get("cars").is_some());
        assert_eq!(decode_state(&bytes).unwrap(), kickoff_state());
    }

    #[test]
    fn unnormalized_yaw_is_rejected() {
        let mut s = kickoff_state();
        s.cars[0].physics.rotation.yaw = 3.0 * PI / 2.0;
        assert!(matches!(encode_state(&s), Err(ProtocolError::InvalidState(_))));
        s.cars[0].physics.rotation.yaw = normalize_angle(3.0 * PI / 2.0).unwrap();
        assert!(encode_state(&s).is_ok());
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut s = kickoff_state();
        s.ball.velocity.x = f64::NAN;
        assert!(encode_state(&s).is_err());
        let mut s = kickoff_state();
        s.cars[1].boost = 101.0;
        assert!(encode_state(&s).is_err());
        let mut s = kickoff_state();
        s.pads[0].respawn_remaining = 1.0;
        assert!(encode_state(&s).is_err());
    }

    #[test]
    fn truncated_line_is_a_protocol_error() {
        let bytes = encode_state(&kickoff_state()).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(decode_state(cut), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn missing_field_names_the_field() {
        let mut v: serde_json::Value = serde_json::from_slice(&encode_state(&kickoff_state()).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("pads");
        let err = decode_state(v.to_string().as_bytes()).unwrap_err();
        match err {
            ProtocolError::Schema { field, .. } => assert_eq!(field.as_deref(), Some("pads")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_fields_are_ignored() {
        let mut v: serde_json::Value = serde_json::from_slice(&encode_state(&kickoff_state()).unwrap()).unwrap();
        v.as_object_mut().unwrap().insert("weather".into(), serde_json::json!({"rain": true}));
        v["ball"].as_object_mut().unwrap().insert("spin_axis".into(), serde_json::json!(1));
        assert_eq!(decode_state(v.to_string().as_bytes()).unwrap(), kickoff_state());
    }

    #[test]
    fn schema_manifest() {
        let v: serde_json::Value = serde_json::from_slice(&encode_state(&kickoff_state()).unwrap()).unwrap();
        let keys = |v: &serde_json::Value| {
            let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            k.sort();
            k
        };
        let mut top: Vec<&str> = STATE_FIELDS.to_vec();
        top.sort();
        assert_eq!(keys(&v), top);
        assert_eq!(keys(&v["ball"]), ["angular_velocity", "location", "rotation", "velocity"]);
        assert_eq!(keys(&v["ball"]["rotation"]), ["pitch", "roll", "yaw"]);
        assert_eq!(keys(&v["ball"]["location"]), ["x", "y", "z"]);
        assert_eq!(
            keys(&v["cars"][0]),
            ["boost", "demolished", "ground_contact", "is_bot", "jumped", "physics", "team_id"]
        );
        assert_eq!(keys(&v["cars"][0]["physics"]), keys(&v["ball"]));
        assert_eq!(keys(&v["teams"][0]), ["score", "team_id"]);
        assert_eq!(keys(&v["info"]), ["seconds_elapsed"]);
        assert_eq!(keys(&v["pads"][0]), ["active", "pad_id", "respawn_remaining"]);
        assert_eq!(v["ui"], "in_game");
    }

    #[test]
    fn angle_examples() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(normalize_angle(3.0 * PI / 2.0).unwrap(), -PI / 2.0));
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!(close(normalize_angle(-5.0 * PI / 2.0).unwrap(), -PI / 2.0));
        assert_eq!(normalize_angle(PI).unwrap(), PI);
        assert_eq!(normalize_angle(-PI).unwrap(), -PI);
        assert!(angles_equal(PI, -PI));
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    /// Reduces by repeated ±2π steps; independent of the rounding route.
    fn angle_oracle(mut t: f64) -> f64 {
        while t > PI {
            t -= 2.0 * PI;
        }
        while t < -PI {
            t += 2.0 * PI;
        }
        t
    }

    #[test]
    fn derived_examples() {
        let mut s = kickoff_state();
        s.cars[0].physics.location = Vec3::ZERO;
        s.ball.location = Vec3::new(3.0, 4.0, 0.0);
        let d = compute_derived(&s, 0).unwrap();
        assert_eq!(d.distance_car_ball, 5.0);
        assert!((d.relative_direction.x - 0.6).abs() < 1e-15);
        assert!((d.relative_direction.y - 0.8).abs() < 1e-15);
        assert_eq!(d.relative_velocity, Vec3::ZERO);
        s.ball.location = Vec3::ZERO;
        let d = compute_derived(&s, 0).unwrap();
        assert_eq!(d.distance_car_ball, 0.0);
        assert_eq!(d.relative_direction, Vec3::ZERO);
        assert!(matches!(compute_derived(&s, 7), Err(ProtocolError::CarIndex { .. })));
    }

    #[test]
    fn pause_suspends_processing() {
        assert!(!suspend_on_pause(UiState::InGame));
        assert!(suspend_on_pause(UiState::Paused));
        assert!(suspend_on_pause(UiState::Other));
    }

    #[test]
    fn envelopes_round_trip() {
        let msgs = vec![
            Message::State(kickoff_state()),
            Message::Input(InputPayload {
                player: "pilot".into(),
                element: ElementId::new("LeftStick"),
                intensity: WireIntensity::Pair([-1.0, 0.0]),
                tick: 4,
            }),
            Message::Event(EventPayload {
                kind: EventKind::Goal,
                team: Some(1),
                tick: 9,
            }),
            Message::Config(ConfigPayload::Hello {
                player: "copilot".into(),
                agent: true,
            }),
            Message::AgentAction(AgentActionPayload {
                tick: 15,
                vector: AgentActionVector::neutral(),
            }),
        ];
        let mut wire = Vec::new();
        for m in &msgs {
            write_message(&mut wire, m).unwrap();
        }
        let text = String::from_utf8(wire.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with(r#"{"type":"state","payload":{"#));
        assert!(text.contains(r#"{"type":"input","payload":{"player":"pilot","element":"LeftStick","intensity":[-1.0,0.0],"tick":4}}"#));
        let back: Vec<Message> = MessageReader::new(&wire[..]).collect::<Result<_, _>>().unwrap();
        assert_eq!(back, msgs);
    }

    #[test]
    fn reader_flags_truncated_tail() {
        let mut wire = encode_message(&Message::Event(EventPayload {
            kind: EventKind::Kickoff,
            team: None,
            tick: 0,
        }))
        .unwrap()
        .into_bytes();
        wire.extend_from_slice(br#"{"type":"ev"#);
        let mut r = MessageReader::new(&wire[..]);
        assert!(r.read_message().unwrap().is_some());
        assert!(r.read_message().is_err());
    }

    fn arb_vec3() -> impl Strategy<Value = Vec3> {
        (-1e5f64..1e5, -1e5f64..1e5, -1e5f64..1e5).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_physics() -> impl Strategy<Value = Physics> {
        (arb_vec3(), -PI..=PI, -PI..=PI, -PI..=PI, arb_vec3(), arb_vec3()).prop_map(
            |(location, pitch, yaw, roll, velocity, angular_velocity)| Physics {
                location,
                rotation: Rotation { pitch, yaw, roll },
                velocity,
                angular_velocity,
            },
        )
    }

    fn arb_state() -> impl Strategy<Value = GameState> {
        let car = (arb_physics(), 0u8..2, any::<bool>(), any::<bool>(), 0.0f64..=100.0, any::<bool>()).prop_map(
            |(physics, team_id, ground_contact, jumped, boost, is_bot)| CarState {
                physics,
                team_id,
                demolished: false,
                ground_contact,
                jumped,
                boost,
                is_bot,
            },
        );
        let pad = (0u32..64, any::<bool>(), 0.0f64..10.0).prop_map(|(pad_id, active, r)| BoostPadState {
            pad_id,
            active,
            respawn_remaining: if active { 0.0 } else { r },
        });
        (
            arb_physics(),
            prop::collection::vec(car, 2..6),
            0u32..20,
            0u32..20,
            0.0f64..400.0,
            prop::collection::vec(pad, 0..8),
            prop_oneof![Just(UiState::InGame), Just(UiState::Paused), Just(UiState::Other)],
            any::<u64>(),
        )
            .prop_map(|(ball, cars, s0, s1, secs, pads, ui, tick)| GameState {
                ball,
                cars,
                teams: vec![TeamInfo { team_id: 0, score: s0 }, TeamInfo { team_id: 1, score: s1 }],
                info: GameInfo { seconds_elapsed: secs },
                pads,
                ui,
                tick,
            })
    }

    proptest! {
        #[test]
        fn encode_decode_identity(s in arb_state()) {
            let bytes = encode_state(&s).unwrap();
            prop_assert_eq!(decode_state(&bytes).unwrap(), s);
        }

        #[test]
        fn angle_is_periodic(t in -PI..PI, k in -3i32..=3) {
            let base = normalize_angle(t).unwrap();
            let shifted = normalize_angle(t + 2.0 * PI * f64::from(k)).unwrap();
            prop_assert!(angles_equal(base, shifted) || (base - shifted).abs() < 1e-9);
            prop_assert!((-PI..=PI).contains(&shifted));
            prop_assert!(angles_equal(shifted, angle_oracle(t + 2.0 * PI * f64::from(k))));
        }

        #[test]
        fn distance_is_symmetric(car in arb_vec3(), ball in arb_vec3()) {
            let mut s = kickoff_state();
            s.cars[0].physics.location = car;
            s.ball.location = ball;
            let forward = compute_derived(&s, 0).unwrap();
            s.cars[0].physics.location = ball;
            s.ball.location = car;
            let swapped = compute_derived(&s, 0).unwrap();
            prop_assert_eq!(forward.distance_car_ball, swapped.distance_car_ball);
            let d = forward.relative_direction;
            let e = swapped.relative_direction;
            prop_assert!((d.x + e.x).abs() < 1e-12 && (d.y + e.y).abs() < 1e-12 && (d.z + e.z).abs() < 1e-12);
        }
    }
}
