//! Deterministic fixed-timestep car-ball arena.
//!
//! Planar physics with a scalar ball height. Team 0 attacks +x, team 1
//! attacks -x. All arithmetic is `f64` in a fixed order so that a run is a
//! pure function of config, seed and the per-tick controller log.
//!
//! The arena reads only [`VirtualControllerState`]; it decodes the default
//! pad layout (left stick steers, right trigger accelerates, left trigger
//! brakes, A jumps, B boosts, X handbrakes).

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::VirtualControllerState;
use crate::input::pad;
use crate::protocol::{
    normalize_angle, BoostPadState, CarState, EventKind, EventPayload, GameInfo, GameState, Physics, Rotation,
    TeamInfo, UiState, Vec3,
};

pub const TICK_RATE: u32 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub tick_rate: u32,
    pub match_seconds: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub goal_half_width: f64,
    pub goal_height: f64,
    pub cars_per_team: usize,
    pub car_accel: f64,
    pub brake_decel: f64,
    pub coast_decel: f64,
    pub boost_thrust: f64,
    /// Top speed reachable by throttle alone.
    pub max_drive_speed: f64,
    pub max_speed: f64,
    /// Yaw rate (rad/s) at full steer once above `turn_reference_speed`.
    pub turn_rate: f64,
    pub turn_reference_speed: f64,
    pub handbrake_turn_multiplier: f64,
    /// Factor applied to longitudinal acceleration and lateral grip while
    /// the handbrake is held.
    pub handbrake_grip: f64,
    /// Per-second decay rate of sideways sliding.
    pub lateral_grip: f64,
    /// Per-second decay rate of rolling ball speed.
    pub ball_friction: f64,
    pub ball_restitution: f64,
    pub ball_mass: f64,
    pub car_mass: f64,
    pub gravity: f64,
    pub jump_hit_strength: f64,
    pub jump_airtime: f64,
    pub jump_cooldown: f64,
    pub car_radius: f64,
    pub ball_radius: f64,
    /// Ball heights below this can be touched by a car.
    pub car_reach: f64,
    pub boost_capacity: f64,
    pub boost_drain: f64,
    pub boost_initial: f64,
    pub pad_recharge: f64,
    pub pad_respawn_seconds: f64,
    pub pad_radius: f64,
    pub golden_goal: bool,
    pub seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            tick_rate: TICK_RATE,
            match_seconds: 300.0,
            half_length: 5120.0,
            half_width: 4096.0,
            goal_half_width: 893.0,
            goal_height: 642.0,
            cars_per_team: 1,
            car_accel: 1600.0,
            brake_decel: 3500.0,
            coast_decel: 525.0,
            boost_thrust: 991.67,
            max_drive_speed: 1410.0,
            max_speed: 2300.0,
            turn_rate: 3.0,
            turn_reference_speed: 500.0,
            handbrake_turn_multiplier: 2.0,
            handbrake_grip: 0.5,
            lateral_grip: 10.0,
            ball_friction: 0.3,
            ball_restitution: 0.6,
            ball_mass: 30.0,
            car_mass: 180.0,
            gravity: 650.0,
            jump_hit_strength: 900.0,
            jump_airtime: 0.4,
            jump_cooldown: 1.0,
            car_radius: 80.0,
            ball_radius: 92.75,
            car_reach: 120.0,
            boost_capacity: 100.0,
            boost_drain: 33.3,
            boost_initial: 33.0,
            pad_recharge: 25.0,
            pad_respawn_seconds: 10.0,
            pad_radius: 160.0,
            golden_goal: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArenaError {
    #[error("tick rate must be {TICK_RATE}, got {0}")]
    TickRate(u32),
    #[error("arena constant `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("cars per team must be 1 to 3, got {0}")]
    CarCount(usize),
    #[error("ball restitution must be below 1")]
    Restitution,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("replay log tick rate {log} does not match config {config}")]
    ReplayTickRate { log: u32, config: u32 },
    #[error("replay log has {log} cars, config expects {config}")]
    ReplayCars { log: usize, config: usize },
    #[error("replay log: {0}")]
    Log(String),
}

impl ArenaConfig {
    pub fn validate(&self) -> Result<(), ArenaError> {
        if self.tick_rate != TICK_RATE {
            return Err(ArenaError::TickRate(self.tick_rate));
        }
        let positive: [(&'static str, f64); 34] = [
            ("match_seconds", self.match_seconds),
            ("half_length", self.half_length),
            ("half_width", self.half_width),
            ("goal_half_width", self.goal_half_width),
            ("goal_height", self.goal_height),
            ("car_accel", self.car_accel),
            ("brake_decel", self.brake_decel),
            ("coast_decel", self.coast_decel),
            ("boost_thrust", self.boost_thrust),
            ("max_drive_speed", self.max_drive_speed),
            ("max_speed", self.max_speed),
            ("turn_rate", self.turn_rate),
            ("turn_reference_speed", self.turn_reference_speed),
            ("handbrake_turn_multiplier", self.handbrake_turn_multiplier),
            ("handbrake_grip", self.handbrake_grip),
            ("lateral_grip", self.lateral_grip),
            ("ball_friction", self.ball_friction),
            ("ball_restitution", self.ball_restitution),
            ("ball_mass", self.ball_mass),
            ("car_mass", self.car_mass),
            ("gravity", self.gravity),
            ("jump_hit_strength", self.jump_hit_strength),
            ("jump_airtime", self.jump_airtime),
            ("jump_cooldown", self.jump_cooldown),
            ("car_radius", self.car_radius),
            ("ball_radius", self.ball_radius),
            ("car_reach", self.car_reach),
            ("boost_capacity", self.boost_capacity),
            ("boost_drain", self.boost_drain),
            ("boost_initial", self.boost_initial),
            ("pad_recharge", self.pad_recharge),
            ("pad_respawn_seconds", self.pad_respawn_seconds),
            ("pad_radius", self.pad_radius),
            ("tick_rate", f64::from(self.tick_rate)),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ArenaError::NonPositive(name));
            }
        }
        if self.ball_restitution >= 1.0 {
            return Err(ArenaError::Restitution);
        }
        if !(1..=3).contains(&self.cars_per_team) {
            return Err(ArenaError::CarCount(self.cars_per_team));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.tick_rate)
    }

    pub fn match_ticks(&self) -> u64 {
        (self.match_seconds * f64::from(self.tick_rate)).round() as u64
    }

    pub fn car_count(&self) -> usize {
        2 * self.cars_per_team
    }

    /// Six pads, mirrored through the field center.
    pub fn pad_locations(&self) -> [(f64, f64); 6] {
        [
            (-3000.0, -3000.0),
            (-3000.0, 3000.0),
            (0.0, -3600.0),
            (0.0, 3600.0),
            (3000.0, -3000.0),
            (3000.0, 3000.0),
        ]
    }
}

/// Game actions decoded from a virtual controller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CarControls {
    pub steer: f64,
    pub accelerate: f64,
    pub brake: f64,
    pub jump: bool,
    pub boost: bool,
    pub handbrake: bool,
}

impl CarControls {
    pub fn from_virtual(state: &VirtualControllerState) -> Self {
        CarControls {
            steer: state.stick(pad::LEFT_STICK).0,
            accelerate: state.trigger(pad::RIGHT_TRIGGER),
            brake: state.trigger(pad::LEFT_TRIGGER),
            jump: state.button(pad::A),
            boost: state.button(pad::B),
            handbrake: state.button(pad::X),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Kickoff,
    Play,
    GoalScored,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl Ball {
    fn centered() -> Self {
        Ball {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            vx: 0.0,
            vy: 0.0,
            vz: 0.0,
        }
    }

    pub fn planar_speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Car {
    pub team: u8,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Radians in [-π, π]; 0 faces +x.
    pub heading: f64,
    pub yaw_rate: f64,
    pub fuel: f64,
    /// Seconds left airborne after a jump.
    pub airtime: f64,
    pub jump_cooldown: f64,
    pub jumped: bool,
    pub is_bot: bool,
}

impl Car {
    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }

    /// Velocity component along the heading.
    pub fn forward_speed(&self) -> f64 {
        self.vx * self.heading.cos() + self.vy * self.heading.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pad {
    pub x: f64,
    pub y: f64,
    pub respawn: f64,
}

impl Pad {
    pub fn active(&self) -> bool {
        self.respawn == 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct World {
    pub tick: u64,
    pub phase: Phase,
    pub ball: Ball,
    pub cars: Vec<Car>,
    pub pads: Vec<Pad>,
    pub scores: [u32; 2],
    pub kickoffs: u64,
    #[serde(skip, default = "default_rng")]
    rng: ChaCha8Rng,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl PartialEq for World {
    fn eq(&self, o: &Self) -> bool {
        self.tick == o.tick
            && self.phase == o.phase
            && self.ball == o.ball
            && self.cars == o.cars
            && self.pads == o.pads
            && self.scores == o.scores
            && self.kickoffs == o.kickoffs
    }
}

/// Team-0 spawn layouts; team 1 uses the point reflection.
const SPAWNS: [[(f64, f64); 3]; 3] = [
    [(-2560.0, 0.0), (-3500.0, -1000.0), (-3500.0, 1000.0)],
    [(-2000.0, -2000.0), (-2560.0, 0.0), (-3800.0, 600.0)],
    [(-2000.0, 2000.0), (-2560.0, 0.0), (-3800.0, -600.0)],
];

impl World {
    /// A world waiting for its first kickoff, which happens on the first
    /// step.
    pub fn new(config: &ArenaConfig) -> Self {
        let cars = (0..config.car_count())
            .map(|i| Car {
                team: (i / config.cars_per_team) as u8,
                x: 0.0,
                y: 0.0,
                vx: 0.0,
                vy: 0.0,
                heading: 0.0,
                yaw_rate: 0.0,
                fuel: config.boost_initial,
                airtime: 0.0,
                jump_cooldown: 0.0,
                jumped: false,
                is_bot: false,
            })
            .collect();
        let pads = config
            .pad_locations()
            .iter()
            .map(|&(x, y)| Pad { x, y, respawn: 0.0 })
            .collect();
        let mut w = World {
            tick: 0,
            phase: Phase::Kickoff,
            ball: Ball::centered(),
            cars,
            pads,
            scores: [0, 0],
            kickoffs: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        w.place_kickoff(config, 0);
        w
    }

    /// A scripted starting position, already in play.
    ///
    /// `rolling_goal`: the ball rolls toward the team-1 goal from inside
    /// the attacking half with the first team-0 car behind it.
    pub fn scenario(config: &ArenaConfig, name: &str) -> Result<Self, ArenaError> {
        let mut w = World::new(config);
        match name {
            "kickoff" => {}
            "rolling_goal" => {
                w.phase = Phase::Play;
                w.ball = Ball {
                    x: 4000.0,
                    y: 0.0,
                    z: 0.0,
                    vx: 800.0,
                    vy: 0.0,
                    vz: 0.0,
                };
                w.cars[0].x = 3000.0;
                w.cars[0].y = 0.0;
                w.cars[0].heading = 0.0;
            }
            other => return Err(ArenaError::UnknownScenario(other.to_string())),
        }
        Ok(w)
    }

    fn place_kickoff(&mut self, config: &ArenaConfig, variant: usize) {
        self.ball = Ball::centered();
        let per_team = config.cars_per_team;
        for (i, car) in self.cars.iter_mut().enumerate() {
            let (sx, sy) = SPAWNS[variant][i % per_team];
            let (x, y) = if car.team == 0 { (sx, sy) } else { (-sx, -sy) };
            car.x = x;
            car.y = y;
            car.vx = 0.0;
            car.vy = 0.0;
            car.yaw_rate = 0.0;
            car.heading = (-y).atan2(-x);
            car.fuel = config.boost_initial;
            car.airtime = 0.0;
            car.jump_cooldown = 0.0;
            car.jumped = false;
        }
    }

    /// Ball to the center, cars to a seeded mirrored spawn facing the ball,
    /// fuel reset, phase `Play`. The clock is untouched.
    pub fn reset_kickoff(&mut self, config: &ArenaConfig) {
        let variant = self.rng.random_range(0..SPAWNS.len());
        self.place_kickoff(config, variant);
        self.kickoffs += 1;
        self.phase = Phase::Play;
    }

    pub fn seconds_elapsed(&self, config: &ArenaConfig) -> f64 {
        self.tick as f64 / f64::from(config.tick_rate)
    }

    /// Advances one tick. `controllers` holds one virtual controller per
    /// car; missing entries read as neutral. Inputs are ignored on ticks
    /// that perform a kickoff reset.
    pub fn step(&mut self, controllers: &[VirtualControllerState], config: &ArenaConfig) -> Vec<EventPayload> {
        let mut events = Vec::new();
        if self.phase == Phase::Ended {
            return events;
        }
        let dt = config.dt();
        if matches!(self.phase, Phase::Kickoff | Phase::GoalScored) {
            self.reset_kickoff(config);
            events.push(EventPayload {
                kind: EventKind::Kickoff,
                team: None,
                tick: self.tick,
            });
        } else {
            let controls: Vec<CarControls> = (0..self.cars.len())
                .map(|i| controllers.get(i).map(CarControls::from_virtual).unwrap_or_default())
                .collect();
            let mut jumped_now = vec![false; self.cars.len()];
            for (i, c) in controls.iter().enumerate() {
                jumped_now[i] = self.step_car(i, c, config);
            }
            for (i, jumped) in jumped_now.into_iter().enumerate() {
                self.collide(i, jumped, config);
            }
            self.step_ball(config);
            if let Some(team) = self.detect_goal(config) {
                self.scores[team as usize] += 1;
                self.phase = Phase::GoalScored;
                events.push(EventPayload {
                    kind: EventKind::Goal,
                    team: Some(team),
                    tick: self.tick,
                });
            }
        }
        for pad in &mut self.pads {
            if pad.respawn > 0.0 {
                pad.respawn = (pad.respawn - dt).max(0.0);
            }
        }
        self.tick += 1;
        if self.tick >= config.match_ticks() {
            let tied = self.scores[0] == self.scores[1];
            let decided_in_overtime = self.tick > config.match_ticks() && !tied;
            if !(config.golden_goal && tied) || decided_in_overtime {
                self.phase = Phase::Ended;
                events.push(EventPayload {
                    kind: EventKind::MatchEnd,
                    team: None,
                    tick: self.tick,
                });
            }
        }
        events
    }

    /// Returns whether the car started a jump this tick.
    fn step_car(&mut self, i: usize, c: &CarControls, config: &ArenaConfig) -> bool {
        let dt = config.dt();
        let car = &mut self.cars[i];
        let (sin, cos) = car.heading.sin_cos();
        let s = car.vx * cos + car.vy * sin;
        let lat = -car.vx * sin + car.vy * cos;
        let throttle = c.accelerate - c.brake;
        let grip = if c.handbrake { config.handbrake_grip } else { 1.0 };

        let mut a = if throttle > 0.0 {
            if s >= 0.0 {
                if s < config.max_drive_speed {
                    throttle * config.car_accel
                } else {
                    0.0
                }
            } else {
                throttle * config.brake_decel
            }
        } else if throttle < 0.0 {
            if s > 0.0 {
                throttle * config.brake_decel
            } else if -s < config.max_drive_speed {
                throttle * config.car_accel
            } else {
                0.0
            }
        } else {
            0.0
        };
        a *= grip;
        let boosting = c.boost && car.fuel > 0.0;
        if boosting {
            a += config.boost_thrust;
        }
        let mut s_new = s + a * dt;
        if throttle == 0.0 && !boosting {
            let coast = config.coast_decel * dt;
            s_new = if s_new > coast {
                s_new - coast
            } else if s_new < -coast {
                s_new + coast
            } else {
                0.0
            };
        }
        if !boosting && s < config.max_drive_speed && s_new > config.max_drive_speed {
            s_new = config.max_drive_speed;
        }
        s_new = s_new.clamp(-config.max_speed, config.max_speed);
        let lat_new = lat * (1.0 - config.lateral_grip * grip * dt).max(0.0);

        let mult = if c.handbrake { config.handbrake_turn_multiplier } else { 1.0 };
        let rate = -c.steer * config.turn_rate * mult * (s / config.turn_reference_speed).clamp(-1.0, 1.0);
        let heading = normalize_angle(car.heading + rate * dt).unwrap_or(car.heading);
        car.yaw_rate = rate;
        car.heading = heading;
        let (sin, cos) = heading.sin_cos();
        let vx = s_new * cos - lat_new * sin;
        let vy = s_new * sin + lat_new * cos;
        // a car whose heading and speed did not change keeps its velocity bit-for-bit
        if s_new != s || lat_new != lat || rate != 0.0 {
            car.vx = vx;
            car.vy = vy;
        }
        car.x += car.vx * dt;
        car.y += car.vy * dt;
        let xmax = config.half_length - config.car_radius;
        let ymax = config.half_width - config.car_radius;
        if car.x.abs() > xmax {
            car.x = car.x.clamp(-xmax, xmax);
            car.vx = 0.0;
        }
        if car.y.abs() > ymax {
            car.y = car.y.clamp(-ymax, ymax);
            car.vy = 0.0;
        }

        let mut jumped_now = false;
        if car.airtime > 0.0 {
            car.airtime = (car.airtime - dt).max(0.0);
        }
        if car.jump_cooldown > 0.0 {
            car.jump_cooldown = (car.jump_cooldown - dt).max(0.0);
        }
        if c.jump && car.jump_cooldown == 0.0 && car.airtime == 0.0 {
            car.airtime = config.jump_airtime;
            car.jump_cooldown = config.jump_cooldown;
            car.jumped = true;
            jumped_now = true;
        } else if car.airtime == 0.0 {
            car.jumped = false;
        }

        let fuel = car.fuel;
        let mut pickup = false;
        if fuel < config.boost_capacity {
            let (cx, cy) = (car.x, car.y);
            if let Some(pad) = self
                .pads
                .iter_mut()
                .find(|p| p.active() && ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt() < config.pad_radius)
            {
                pad.respawn = config.pad_respawn_seconds;
                pickup = true;
            }
        }
        let car = &mut self.cars[i];
        car.fuel = fuel_ledger(fuel, boosting, pickup, config);
        jumped_now
    }

    fn collide(&mut self, i: usize, jumped_now: bool, config: &ArenaConfig) {
        let car = &mut self.cars[i];
        let ball = &mut self.ball;
        if ball.z >= config.car_reach {
            return;
        }
        let dx = ball.x - car.x;
        let dy = ball.y - car.y;
        let dist = (dx * dx + dy * dy).sqrt();
        let contact = config.car_radius + config.ball_radius;
        if dist >= contact {
            return;
        }
        let (nx, ny) = if dist > 0.0 {
            (dx / dist, dy / dist)
        } else {
            (car.heading.cos(), car.heading.sin())
        };
        let vr = (ball.vx - car.vx) * nx + (ball.vy - car.vy) * ny;
        if vr < 0.0 {
            let inv = 1.0 / config.ball_mass + 1.0 / config.car_mass;
            let j = -(1.0 + config.ball_restitution) * vr / inv;
            ball.vx += j / config.ball_mass * nx;
            ball.vy += j / config.ball_mass * ny;
            car.vx -= j / config.car_mass * nx;
            car.vy -= j / config.car_mass * ny;
        }
        ball.x = car.x + nx * contact;
        ball.y = car.y + ny * contact;
        if jumped_now {
            ball.vz += config.jump_hit_strength;
            ball.vx += 0.25 * config.jump_hit_strength * nx;
            ball.vy += 0.25 * config.jump_hit_strength * ny;
        }
    }

    fn step_ball(&mut self, config: &ArenaConfig) {
        let dt = config.dt();
        let b = &mut self.ball;
        if b.z > 0.0 || b.vz > 0.0 {
            b.vz -= config.gravity * dt;
            b.z += b.vz * dt;
            if b.z <= 0.0 {
                b.z = 0.0;
                b.vz = -b.vz * config.ball_restitution;
                if b.vz < config.gravity * dt {
                    b.vz = 0.0;
                }
            }
        } else {
            let keep = (1.0 - config.ball_friction * dt).max(0.0);
            b.vx *= keep;
            b.vy *= keep;
        }
        b.x += b.vx * dt;
        b.y += b.vy * dt;
        let speed_cap = config.max_speed * 3.0;
        let s = b.planar_speed();
        if s > speed_cap {
            b.vx *= speed_cap / s;
            b.vy *= speed_cap / s;
        }
        let ymax = config.half_width - config.ball_radius;
        if b.y.abs() > ymax {
            b.y = b.y.clamp(-ymax, ymax);
            b.vy = -b.vy * config.ball_restitution;
        }
        let in_mouth = b.y.abs() < config.goal_half_width && b.z < config.goal_height;
        let xmax = config.half_length - config.ball_radius;
        if !in_mouth && b.x.abs() > xmax {
            b.x = b.x.clamp(-xmax, xmax);
            b.vx = -b.vx * config.ball_restitution;
        }
    }

    /// Team credited with a goal, if the ball center crossed a goal line
    /// inside the mouth.
    fn detect_goal(&self, config: &ArenaConfig) -> Option<u8> {
        let b = &self.ball;
        let in_mouth = b.y.abs() < config.goal_half_width && b.z < config.goal_height;
        if !in_mouth {
            return None;
        }
        if b.x > config.half_length {
            Some(0)
        } else if b.x < -config.half_length {
            Some(1)
        } else {
            None
        }
    }

    /// Projects the world onto the wire schema.
    pub fn snapshot(&self, config: &ArenaConfig) -> GameState {
        let ball = Physics {
            location: Vec3::new(self.ball.x, self.ball.y, self.ball.z),
            rotation: Rotation::default(),
            velocity: Vec3::new(self.ball.vx, self.ball.vy, self.ball.vz),
            angular_velocity: Vec3::ZERO,
        };
        let cars = self
            .cars
            .iter()
            .map(|c| CarState {
                physics: Physics {
                    location: Vec3::new(c.x, c.y, 0.0),
                    rotation: Rotation::from_yaw(c.heading),
                    velocity: Vec3::new(c.vx, c.vy, 0.0),
                    angular_velocity: Vec3::new(0.0, 0.0, c.yaw_rate),
                },
                team_id: c.team,
                demolished: false,
                ground_contact: c.airtime == 0.0,
                jumped: c.jumped,
                boost: c.fuel,
                is_bot: c.is_bot,
            })
            .collect();
        GameState {
            ball,
            cars,
            teams: vec![
                TeamInfo {
                    team_id: 0,
                    score: self.scores[0],
                },
                TeamInfo {
                    team_id: 1,
                    score: self.scores[1],
                },
            ],
            info: GameInfo {
                seconds_elapsed: self.seconds_elapsed(config),
            },
            pads: self
                .pads
                .iter()
                .enumerate()
                .map(|(i, p)| BoostPadState {
                    pad_id: i as u32,
                    active: p.active(),
                    respawn_remaining: p.respawn,
                })
                .collect(),
            ui: if self.phase == Phase::Play {
                UiState::InGame
            } else {
                UiState::Other
            },
            tick: self.tick,
        }
    }

    /// Feeds every numeric field of the world, bit-exact, into `h`.
    pub fn hash_into(&self, h: &mut Sha256) {
        h.update(self.tick.to_le_bytes());
        h.update([self.phase as u8]);
        for v in [self.ball.x, self.ball.y, self.ball.z, self.ball.vx, self.ball.vy, self.ball.vz] {
            h.update(v.to_bits().to_le_bytes());
        }
        for c in &self.cars {
            h.update([c.team, u8::from(c.jumped)]);
            for v in [c.x, c.y, c.vx, c.vy, c.heading, c.yaw_rate, c.fuel, c.airtime, c.jump_cooldown] {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for p in &self.pads {
            h.update(p.respawn.to_bits().to_le_bytes());
        }
        h.update(self.scores[0].to_le_bytes());
        h.update(self.scores[1].to_le_bytes());
        h.update(self.kickoffs.to_le_bytes());
    }
}

/// Next fuel level: drain while boosting, recharge on a pad pickup,
/// clamped to the tank.
pub fn fuel_ledger(fuel: f64, boosting: bool, pickup: bool, config: &ArenaConfig) -> f64 {
    let drain = if boosting { config.boost_drain * config.dt() } else { 0.0 };
    let gain = if pickup { config.pad_recharge } else { 0.0 };
    (fuel - drain + gain).clamp(0.0, config.boost_capacity)
}

/// Running hash of the world after every tick.
#[derive(Debug, Clone, Default)]
pub struct TraceHasher {
    inner: Sha256,
    ticks: u64,
}

impl TraceHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, world: &World) {
        world.hash_into(&mut self.inner);
        self.ticks += 1;
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn hex(&self) -> String {
        self.inner
            .clone()
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLogHeader {
    pub tick_rate: u32,
    pub cars: usize,
    pub ticks: u64,
    #[serde(default)]
    pub scenario: Option<String>,
}

/// Virtual controller state of every car at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLogRecord {
    pub tick: u64,
    pub controllers: Vec<VirtualControllerState>,
}

/// Complete per-tick controller record of a run. On disk: a header line
/// followed by one record line per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLog {
    pub header: InputLogHeader,
    pub records: Vec<InputLogRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum InputLogLine {
    Header(InputLogHeader),
    Tick(InputLogRecord),
}

impl InputLog {
    pub fn new(config: &ArenaConfig, ticks: u64) -> Self {
        InputLog {
            header: InputLogHeader {
                tick_rate: config.tick_rate,
                cars: config.car_count(),
                ticks,
                scenario: None,
            },
            records: Vec::new(),
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &InputLogLine::Header(self.header.clone()))?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, &InputLogLine::Tick(r.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, ArenaError> {
        let mut header = None;
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| ArenaError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|e| ArenaError::Log(e.to_string()))? {
                InputLogLine::Header(h) => header = Some(h),
                InputLogLine::Tick(r) => records.push(r),
            }
        }
        let header = header.ok_or_else(|| ArenaError::Log("missing header".into()))?;
        Ok(InputLog { header, records })
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub world: World,
    pub trace_hash: String,
    pub events: Vec<EventPayload>,
}

/// Re-runs a logged match. Ticks without a record use neutral controllers.
pub fn replay(log: &InputLog, config: &ArenaConfig) -> Result<ReplayOutcome, ArenaError> {
    config.validate()?;
    if log.header.tick_rate != config.tick_rate {
        return Err(ArenaError::ReplayTickRate {
            log: log.header.tick_rate,
            config: config.tick_rate,
        });
    }
    if log.header.cars != config.car_count() {
        return Err(ArenaError::ReplayCars {
            log: log.header.cars,
            config: config.car_count(),
        });
    }
    let mut world = match &log.header.scenario {
        Some(name) => World::scenario(config, name)?,
        None => World::new(config),
    };
    let mut hasher = TraceHasher::new();
    let mut events = Vec::new();
    let mut next = log.records.iter().peekable();
    let none: Vec<VirtualControllerState> = Vec::new();
    for t in 0..log.header.ticks {
        if world.phase == Phase::Ended {
            break;
        }
        while next.peek().is_some_and(|r| r.tick < t) {
            next.next();
        }
        let controllers = match next.peek() {
            Some(r) if r.tick == t => &r.controllers,
            _ => &none,
        };
        events.extend(world.step(controllers, config));
        hasher.record(&world);
    }
    Ok(ReplayOutcome {
        world,
        trace_hash: hasher.hex(),
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerState;
    use crate::input::{InputCommand, InputElement, Intensity};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pressed(cmds: &[(InputElement, Intensity)]) -> ControllerState {
        let mut s = ControllerState::new();
        for (e, i) in cmds {
            s.apply(&InputCommand::new(e.clone(), *i).unwrap());
        }
        s
    }

    fn in_play(config: &ArenaConfig) -> World {
        let mut w = World::new(config);
        w.step(&[], config);
        assert_eq!(w.phase, Phase::Play);
        w
    }

    #[test]
    fn config_defaults_are_valid() {
        ArenaConfig::default().validate().unwrap();
        let bad = ArenaConfig {
            tick_rate: 60,
            ..ArenaConfig::default()
        };
        assert_eq!(bad.validate(), Err(ArenaError::TickRate(60)));
        let bad = ArenaConfig {
            car_accel: 0.0,
            ..ArenaConfig::default()
        };
        assert_eq!(bad.validate(), Err(ArenaError::NonPositive("car_accel")));
        assert_eq!(ArenaConfig::default().match_ticks(), 36_000);
    }

    #[test]
    fn one_tick_of_throttle_from_rest() {
        let config = ArenaConfig::default();
        let mut w = in_play(&config);
        w.cars[0].heading = 0.0;
        let accel = pressed(&[(InputElement::trigger(pad::RIGHT_TRIGGER), Intensity::Trigger(1.0))]);
        w.step(&[accel], &config);
        let expected = config.car_accel * (1.0 / 120.0);
        assert_eq!(w.cars[0].vx, expected);
        assert_eq!(w.cars[0].speed(), expected);
    }

    #[test]
    fn no_thrust_on_an_empty_tank() {
        let config = ArenaConfig::default();
        let mut w = in_play(&config);
        w.cars[0].fuel = 0.0;
        w.cars[0].vx = 1000.0 * w.cars[0].heading.cos();
        w.cars[0].vy = 1000.0 * w.cars[0].heading.sin();
        let mut coasting = w.clone();
        let boost = pressed(&[(InputElement::button(pad::B), Intensity::Button(true))]);
        w.step(&[boost], &config);
        coasting.step(&[], &config);
        assert_eq!(w.cars[0].fuel, 0.0);
        assert_eq!(w.cars[0].speed(), coasting.cars[0].speed());
    }

    #[test]
    fn goal_scores_and_resets() {
        let config = ArenaConfig::default();
        let mut w = in_play(&config);
        w.ball.x = config.half_length - 1.0;
        w.ball.vx = 600.0;
        let events = w.step(&[], &config);
        assert_eq!(
            events,
            vec![EventPayload {
                kind: EventKind::Goal,
                team: Some(0),
                tick: 1
            }]
        );
        assert_eq!(w.scores, [1, 0]);
        assert_eq!(w.phase, Phase::GoalScored);
        let clock_before = w.tick;
        let events = w.step(&[], &config);
        assert_eq!(events[0].kind, EventKind::Kickoff);
        assert_eq!(w.phase, Phase::Play);
        assert_eq!((w.ball.x, w.ball.y), (0.0, 0.0));
        assert_eq!(w.tick, clock_before + 1);
    }

    #[test]
    fn ball_outside_the_mouth_bounces() {
        let config = ArenaConfig::default();
        let mut w = in_play(&config);
        w.ball.x = config.half_length - config.ball_radius - 1.0;
        w.ball.y = config.goal_half_width + 200.0;
        w.ball.vx = 600.0;
        assert!(w.step(&[], &config).is_empty());
        assert!(w.ball.vx < 0.0);
        assert_eq!(w.scores, [0, 0]);
    }

    #[test]
    fn spawns_are_point_symmetric() {
        for per_team in 1..=3 {
            let config = ArenaConfig {
                cars_per_team: per_team,
                seed: 99,
                ..ArenaConfig::default()
            };
            let mut w = World::new(&config);
            for _ in 0..5 {
                w.reset_kickoff(&config);
                for i in 0..per_team {
                    let a = w.cars[i];
                    let b = w.cars[i + per_team];
                    assert_eq!((a.x, a.y), (-b.x, -b.y));
                    assert!((a.heading - (-a.y).atan2(-a.x)).abs() < 1e-12);
                    assert_eq!(a.fuel, config.boost_initial);
                }
                assert_eq!(w.ball, Ball::centered());
            }
        }
    }

    #[test]
    fn snapshot_examples() {
        let config = ArenaConfig::default();
        let mut w = World::new(&config);
        let s = w.snapshot(&config);
        assert_eq!(s.ball.location, Vec3::ZERO);
        assert_eq!(s, w.snapshot(&config));
        w.cars[0].fuel = 37.5;
        assert_eq!(w.snapshot(&config).cars[0].boost, 37.5);
        s.validate().unwrap();
    }

    #[test]
    fn fuel_follows_the_ledger() {
        let config = ArenaConfig::default();
        let mut w = in_play(&config);
        w.cars[0].fuel = 20.0;
        let (px, py) = (w.pads[0].x, w.pads[0].y);
        let boost = pressed(&[(InputElement::button(pad::B), Intensity::Button(true))]);
        for t in 0..400 {
            if t == 100 {
                // drop the car onto a pad
                w.cars[0].x = px;
                w.cars[0].y = py;
                w.cars[0].vx = 0.0;
                w.cars[0].vy = 0.0;
            }
            let fuel = w.cars[0].fuel;
            let boosting = t % 3 != 0;
            let pad_active: Vec<bool> = w.pads.iter().map(|p| p.active()).collect();
            let c = if boosting { vec![boost.clone()] } else { vec![] };
            w.step(&c, &config);
            let picked = w.pads.iter().zip(&pad_active).any(|(p, was)| *was && !p.active());
            let expected = fuel_ledger(fuel, boosting && fuel > 0.0, picked, &config);
            assert_eq!(w.cars[0].fuel, expected, "tick {t}");
            let by_hand = (fuel - if boosting && fuel > 0.0 { 33.3 / 120.0 } else { 0.0 } + if picked { 25.0 } else { 0.0 })
                .clamp(0.0, 100.0);
            assert!((w.cars[0].fuel - by_hand).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_log_leaves_ball_at_center() {
        let config = ArenaConfig::default();
        let log = InputLog::new(&config, 120);
        let out = replay(&log, &config).unwrap();
        assert_eq!(out.world.tick, 120);
        assert_eq!(out.world.seconds_elapsed(&config), 1.0);
        assert_eq!((out.world.ball.x, out.world.ball.y), (0.0, 0.0));
        assert_eq!(out.trace_hash, replay(&log, &config).unwrap().trace_hash);
    }

    #[test]
    fn one_flipped_bit_changes_the_hash() {
        let config = ArenaConfig::default();
        let mut log = InputLog::new(&config, 60);
        let accel = pressed(&[(InputElement::trigger(pad::RIGHT_TRIGGER), Intensity::Trigger(0.5))]);
        for t in 0..60 {
            log.records.push(InputLogRecord {
                tick: t,
                controllers: vec![accel.clone(), ControllerState::new()],
            });
        }
        let base = replay(&log, &config).unwrap().trace_hash;
        let mut flipped = log.clone();
        flipped.records[10].controllers[0].apply(&InputCommand::new(InputElement::button(pad::A), Intensity::Button(true)).unwrap());
        assert_ne!(base, replay(&flipped, &config).unwrap().trace_hash);
    }

    #[test]
    fn replay_rejects_a_foreign_tick_rate() {
        let config = ArenaConfig::default();
        let mut log = InputLog::new(&config, 10);
        log.header.tick_rate = 60;
        assert!(matches!(replay(&log, &config), Err(ArenaError::ReplayTickRate { .. })));
    }

    #[test]
    fn input_log_round_trips_through_ndjson() {
        let config = ArenaConfig::default();
        let mut log = InputLog::new(&config, 2);
        log.records.push(InputLogRecord {
            tick: 0,
            controllers: vec![pressed(&[(InputElement::button(pad::A), Intensity::Button(true))]), ControllerState::new()],
        });
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        assert_eq!(InputLog::read_from(&buf[..]).unwrap(), log);
    }

    #[test]
    fn golden_goal_extends_a_tied_match() {
        let config = ArenaConfig {
            match_seconds: 1.0,
            golden_goal: true,
            ..ArenaConfig::default()
        };
        let mut w = World::new(&config);
        for _ in 0..config.match_ticks() + 10 {
            w.step(&[], &config);
        }
        assert_eq!(w.phase, Phase::Play);
        w.ball.x = -config.half_length - 1.0;
        let events = w.step(&[], &config);
        assert!(events.iter().any(|e| e.kind == EventKind::MatchEnd));
        assert_eq!(w.scores, [0, 1]);
    }

    #[test]
    fn goals_equal_score_sum() {
        let config = ArenaConfig {
            seed: 5,
            ..ArenaConfig::default()
        };
        let mut w = World::new(&config);
        let mut goals = 0;
        let drive = pressed(&[
            (InputElement::trigger(pad::RIGHT_TRIGGER), Intensity::Trigger(1.0)),
            (InputElement::button(pad::B), Intensity::Button(true)),
        ]);
        for _ in 0..6000 {
            let before = w.scores;
            for e in w.step(&[drive.clone(), drive.clone()], &config) {
                if e.kind == EventKind::Goal {
                    goals += 1;
                }
            }
            assert!(w.scores[0] >= before[0] && w.scores[1] >= before[1]);
        }
        assert_eq!(goals, w.scores[0] + w.scores[1]);
    }

    proptest! {
        #[test]
        fn idle_speeds_never_grow(
            bx in -4000.0f64..4000.0, by in -3000.0f64..3000.0,
            bvx in -2000.0f64..2000.0, bvy in -2000.0f64..2000.0,
            cx in -4000.0f64..4000.0, cy in -3000.0f64..3000.0,
            cvx in -1400.0f64..1400.0, cvy in -1400.0f64..1400.0,
            heading in -PI..PI,
        ) {
            let config = ArenaConfig::default();
            let mut w = in_play(&config);
            w.ball = Ball { x: bx, y: by, z: 0.0, vx: bvx, vy: bvy, vz: 0.0 };
            w.cars[0] = Car { x: cx, y: cy, vx: cvx, vy: cvy, heading, ..w.cars[0] };
            w.cars[1].x = 10_000.0; // out of the way, clamped to the wall
            let energy = |w: &World| {
                0.5 * config.ball_mass * w.ball.planar_speed().powi(2)
                    + w.cars.iter().map(|c| 0.5 * config.car_mass * c.speed().powi(2)).sum::<f64>()
            };
            for _ in 0..240 {
                let before = energy(&w);
                w.step(&[], &config);
                if w.phase != Phase::Play {
                    break;
                }
                prop_assert!(energy(&w) <= before * (1.0 + 1e-9) + 1e-9);
            }
        }
    }
}
