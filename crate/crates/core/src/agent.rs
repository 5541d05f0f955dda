//! Software copilot: a policy queried on a fixed tick cadence whose last
//! vector is repeated in between, masked down to the copilot's actions.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::input::{arena_actions, ActionAssignment, ActionProfile, InputEntry, Role, SourceId};
use crate::protocol::{DerivedFeatures, GameState};

/// Eight-component controller output. Serialized as
/// `[throttle, steer, pitch, yaw, roll, jump, boost, handbrake]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct AgentActionVector {
    pub throttle: f64,
    pub steer: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
    pub jump: bool,
    pub boost: bool,
    pub handbrake: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("vector component {index} = {value} outside its domain")]
    Domain { index: usize, value: f64 },
    #[error("policy failed: {0}")]
    Policy(String),
    #[error("no game state to infer from")]
    NoState,
}

impl AgentActionVector {
    pub fn neutral() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        <[f64; 8]>::from(*self)
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || !(-1.0..=1.0).contains(*v))
            .map_or(Ok(()), |(index, &value)| Err(AgentError::Domain { index, value }))
    }
}

impl From<AgentActionVector> for [f64; 8] {
    fn from(v: AgentActionVector) -> Self {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [v.throttle, v.steer, v.pitch, v.yaw, v.roll, b(v.jump), b(v.boost), b(v.handbrake)]
    }
}

impl TryFrom<[f64; 8]> for AgentActionVector {
    type Error = AgentError;

    fn try_from(a: [f64; 8]) -> Result<Self, AgentError> {
        let flag = |index: usize| match a[index] {
            0.0 => Ok(false),
            1.0 => Ok(true),
            value => Err(AgentError::Domain { index, value }),
        };
        let v = AgentActionVector {
            throttle: a[0],
            steer: a[1],
            pitch: a[2],
            yaw: a[3],
            roll: a[4],
            jump: flag(5)?,
            boost: flag(6)?,
            handbrake: flag(7)?,
        };
        v.validate()?;
        Ok(v)
    }
}

/// What a policy sees at an inference tick.
#[derive(Debug, Clone, Copy)]
pub struct AgentInput<'a> {
    pub state: &'a GameState,
    pub features: DerivedFeatures,
    /// Index of the car the copilot helps drive.
    pub car: usize,
    /// The pilot's entries of the current tick. The built-in policy
    /// ignores them.
    pub pilot_entries: &'a [InputEntry],
}

pub trait AgentPolicy: Send {
    fn id(&self) -> &str;
    fn decide(&mut self, input: &AgentInput<'_>) -> Result<AgentActionVector, AgentError>;
}

pub const DEFAULT_PERIOD: u64 = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSchedule {
    period: u64,
    last: AgentActionVector,
    last_inference: Option<u64>,
}

/// Result of one scheduled tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledAction {
    pub vector: AgentActionVector,
    pub inferred: bool,
    /// Set when inference was due but failed; the stale vector is reused.
    pub failure: Option<AgentError>,
}

impl AgentSchedule {
    /// # Panics
    /// If `period` is 0.
    pub fn new(period: u64) -> Self {
        assert!(period >= 1, "inference period must be at least one tick");
        AgentSchedule {
            period,
            last: AgentActionVector::neutral(),
            last_inference: None,
        }
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn last_vector(&self) -> AgentActionVector {
        self.last
    }

    pub fn last_inference(&self) -> Option<u64> {
        self.last_inference
    }

    pub fn is_due(&self, tick: u64) -> bool {
        tick.is_multiple_of(self.period)
    }

    /// Runs the policy on ticks divisible by the period and repeats the
    /// stored vector otherwise. A failing policy keeps the stored vector.
    pub fn tick(
        &mut self,
        tick: u64,
        input: Option<&AgentInput<'_>>,
        policy: &mut dyn AgentPolicy,
    ) -> ScheduledAction {
        if !self.is_due(tick) {
            return ScheduledAction {
                vector: self.last,
                inferred: false,
                failure: None,
            };
        }
        let result = match input {
            Some(input) => policy.decide(input).and_then(|v| v.validate().map(|()| v)),
            None => Err(AgentError::NoState),
        };
        match result {
            Ok(v) => {
                self.last = v;
                self.last_inference = Some(tick);
                ScheduledAction {
                    vector: v,
                    inferred: true,
                    failure: None,
                }
            }
            Err(e) => ScheduledAction {
                vector: self.last,
                inferred: false,
                failure: Some(e),
            },
        }
    }

    /// Installs a vector computed elsewhere (a remote agent) as the one to
    /// repeat.
    pub fn store(&mut self, tick: u64, vector: AgentActionVector) {
        self.last = vector;
        self.last_inference = Some(tick);
    }
}

/// Copilot entries for the arena actions the assignment lets the copilot
/// drive. Throttle splits at zero into Accelerate and Brake; pitch, yaw
/// and roll have no arena action and are dropped.
pub fn mask_actions(
    vector: &AgentActionVector,
    assignment: &ActionAssignment,
    tick: u64,
    source: SourceId,
) -> Vec<InputEntry> {
    use arena_actions::*;
    let profile = ActionProfile::arena();
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let (accelerate, brake) = if vector.throttle >= 0.0 {
        (vector.throttle, 0.0)
    } else {
        (0.0, -vector.throttle)
    };
    let values = [
        (STEER, vector.steer),
        (ACCELERATE, accelerate),
        (BRAKE, brake),
        (JUMP, flag(vector.jump)),
        (BOOST, flag(vector.boost)),
        (HANDBRAKE, flag(vector.handbrake)),
    ];
    values
        .into_iter()
        .filter(|(action, _)| assignment.permits(action, Role::Copilot))
        .filter_map(|(action, value)| {
            let descriptor = profile.get(action)?;
            InputEntry::new(descriptor, descriptor.value_kind.clamp(value), 1.0, Role::Copilot, tick, source).ok()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicParams {
    pub k_steer: f64,
    /// Alignment (radians) within which boosting is allowed.
    pub boost_cone: f64,
    /// Fuel kept in reserve; no boosting at or below it.
    pub boost_reserve: f64,
    pub jump_radius: f64,
    /// The ball must be lower than this for a jump to connect.
    pub hit_height: f64,
    pub drift_angle: f64,
    /// How far behind the ball, on the ball-to-goal line, the car aims.
    pub approach_offset: f64,
    pub field_half_length: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            k_steer: 2.0,
            boost_cone: 0.3,
            boost_reserve: 10.0,
            jump_radius: 250.0,
            hit_height: 150.0,
            drift_angle: 1.2,
            approach_offset: 200.0,
            field_half_length: 5120.0,
        }
    }
}

/// Signed angle from `heading` to the direction `(dx, dy)`, in [-π, π].
/// Positive means the target is to the left (counter-clockwise).
pub fn bearing(heading: f64, dx: f64, dy: f64) -> f64 {
    let mut d = dy.atan2(dx) - heading;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d < -PI {
        d += 2.0 * PI;
    }
    d
}

/// Chase-and-shoot: drive to the point behind the ball on the line to the
/// opponent goal. Steer −1 turns left.
pub fn heuristic_policy(state: &GameState, features: &DerivedFeatures, car: usize, params: &HeuristicParams) -> AgentActionVector {
    let Some(me) = state.cars.get(car) else {
        return AgentActionVector::neutral();
    };
    let p = me.physics.location;
    let ball = state.ball.location;
    let goal_x = if me.team_id == 0 {
        params.field_half_length
    } else {
        -params.field_half_length
    };
    let (gx, gy) = (goal_x - ball.x, -ball.y);
    let glen = (gx * gx + gy * gy).sqrt();
    let (ux, uy) = if glen > 0.0 { (gx / glen, gy / glen) } else { (0.0, 0.0) };
    let tx = ball.x - ux * params.approach_offset;
    let ty = ball.y - uy * params.approach_offset;
    let phi = bearing(me.physics.rotation.yaw, tx - p.x, ty - p.y);

    let (throttle, steer) = if phi.abs() <= FRAC_PI_2 {
        (1.0, (-params.k_steer * phi).clamp(-1.0, 1.0))
    } else {
        (-0.5, if phi >= 0.0 { 1.0 } else { -1.0 })
    };
    AgentActionVector {
        throttle,
        steer,
        pitch: 0.0,
        yaw: steer,
        roll: 0.0,
        jump: features.distance_car_ball < params.jump_radius && ball.z < params.hit_height,
        boost: phi.abs() < params.boost_cone && me.boost > params.boost_reserve,
        handbrake: phi.abs() > params.drift_angle,
    }
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicAgent {
    pub params: HeuristicParams,
}

impl HeuristicAgent {
    pub fn new(params: HeuristicParams) -> Self {
        HeuristicAgent { params }
    }
}

impl AgentPolicy for HeuristicAgent {
    fn id(&self) -> &str {
        "heuristic"
    }

    fn decide(&mut self, input: &AgentInput<'_>) -> Result<AgentActionVector, AgentError> {
        Ok(heuristic_policy(input.state, &input.features, input.car, &self.params))
    }
}

/// Always returns the same vector.
#[derive(Debug, Clone, Default)]
pub struct ConstantAgent(pub AgentActionVector);

impl AgentPolicy for ConstantAgent {
    fn id(&self) -> &str {
        "constant"
    }

    fn decide(&mut self, _: &AgentInput<'_>) -> Result<AgentActionVector, AgentError> {
        Ok(self.0)
    }
}

/// Built-in policy by name: `heuristic` or `idle`.
pub fn builtin_policy(name: &str, params: &HeuristicParams) -> Option<Box<dyn AgentPolicy>> {
    match name {
        "heuristic" => Some(Box::new(HeuristicAgent::new(params.clone()))),
        "idle" => Some(Box::new(ConstantAgent::default())),
        _ => None,
    }
}
