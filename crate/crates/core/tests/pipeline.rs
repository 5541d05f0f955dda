use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use coplay::batch::{run_batch, Execution};
use coplay::input::{pad, InputCommand, InputElement, Intensity};
use coplay::session::{
    export_augmented_log, read_overlay, replay_log, run_match, write_overlay, ChannelInput, ChannelSource, LogRecord,
    PipelineObserver, ScriptSource, Session, SessionConfig, SessionEvent, Stage,
};

const BASE: &str = r#"
[session]
mode = "hybrid"
match_seconds = 1
opponents = "idle"

[[players]]
name = "pilot"
role = "pilot"
source = "idle"

[[players]]
name = "friend"
role = "copilot"
source = "remote"
"#;

fn accelerate(t: u64) -> (u64, InputCommand) {
    (
        t,
        InputCommand::new(InputElement::trigger(pad::RIGHT_TRIGGER), Intensity::Trigger(1.0)).unwrap(),
    )
}

struct Trace(Arc<Mutex<Vec<(u64, Stage)>>>);

impl PipelineObserver for Trace {
    fn stage(&mut self, tick: u64, stage: Stage) {
        self.0.lock().unwrap().push((tick, stage));
    }
}

#[test]
fn stages_run_in_order_every_tick() {
    let mut session = Session::new(SessionConfig::from_toml_str(BASE).unwrap()).unwrap();
    let trace = Arc::new(Mutex::new(Vec::new()));
    session.set_observer(Box::new(Trace(trace.clone())));
    session.run(coplay::session::Pacing::Unpaced).unwrap();
    let trace = trace.lock().unwrap();
    let order = [Stage::Interpret, Stage::Agent, Stage::Arbitrate, Stage::Apply, Stage::Step];
    assert_eq!(trace.len(), 120 * order.len());
    for (i, chunk) in trace.chunks(order.len()).enumerate() {
        let expected: Vec<_> = order.iter().map(|s| (i as u64, *s)).collect();
        assert_eq!(chunk, &expected[..]);
    }
}

#[test]
fn raw_input_outside_the_assignment_has_no_effect() {
    // the pilot floors the throttle but owns no action
    let text = format!(
        "{BASE}\n[assignment]\nSteer = \"C\"\nAccelerate = \"C\"\nBrake = \"C\"\nJump = \"C\"\nBoost = \"C\"\nHandbrake = \"C\"\n"
    );
    let mut session = Session::new(SessionConfig::from_toml_str(&text).unwrap()).unwrap();
    session.attach_source("pilot", Box::new(ScriptSource::new(vec![accelerate(0)])));
    let (_, log) = session.run(coplay::session::Pacing::Unpaced).unwrap();
    let pilot_inputs = log
        .records
        .iter()
        .filter(|r| matches!(r, LogRecord::Input { player, .. } if player == "pilot"))
        .count();
    assert_eq!(pilot_inputs, 0);
    assert!(log.frames().all(|(_, f)| f.value("Accelerate") == 0.0));
    let controls: Vec<_> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Controls { controllers, .. } => Some(controllers[0].clone()),
            _ => None,
        })
        .collect();
    assert!(controls.iter().all(|c| c.trigger(pad::RIGHT_TRIGGER) == 0.0));
    let (idle, _) = run_match(SessionConfig::from_toml_str(&text).unwrap()).unwrap();
    assert_eq!(log.result().unwrap().trace_hash, idle.trace_hash);
}

#[test]
fn same_input_moves_the_car_when_assigned() {
    let config = SessionConfig::from_toml_str(BASE).unwrap();
    let mut session = Session::new(config).unwrap();
    session.attach_source("pilot", Box::new(ScriptSource::new(vec![accelerate(0)])));
    let start = session.state().cars[0].physics.location;
    for _ in 0..60 {
        session.step().unwrap();
    }
    assert!((session.state().cars[0].physics.location - start).norm() > 10.0);
}

#[test]
fn disconnect_never_stalls_the_loop() {
    let config = SessionConfig::from_toml_str(BASE).unwrap();
    let mut session = Session::new(config).unwrap();
    let (tx, rx) = mpsc::channel();
    session.attach_source("friend", Box::new(ChannelSource::new(rx)));
    tx.send(ChannelInput::Command(accelerate(0).1)).unwrap();
    let t = Instant::now();
    for i in 0..120 {
        if i == 30 {
            drop(tx);
            break;
        }
        session.step().unwrap();
    }
    while !session.is_over() {
        session.step().unwrap();
    }
    assert!(t.elapsed() < Duration::from_secs(5));
    let log = session.log();
    let disconnects: Vec<u64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Event {
                tick,
                event: SessionEvent::Disconnect { player },
            } if player == "friend" => Some(*tick),
            _ => None,
        })
        .collect();
    assert_eq!(disconnects, [30]);
    assert_eq!(log.frames().count(), 120);
    let late = log
        .records
        .iter()
        .filter(|r| matches!(r, LogRecord::Input { tick, player, .. } if player == "friend" && *tick >= 30))
        .count();
    assert_eq!(late, 0);
}

#[test]
fn remote_agent_misses_are_logged_and_stale_vector_kept() {
    let text = BASE.replace("source = \"remote\"", "source = \"agent:remote\"");
    let mut session = Session::new(SessionConfig::from_toml_str(&text).unwrap()).unwrap();
    let (tx, rx) = mpsc::channel();
    session.attach_remote_agent("friend", rx);
    let v = coplay::agent::AgentActionVector {
        throttle: 1.0,
        ..Default::default()
    };
    tx.send(v).unwrap();
    for _ in 0..30 {
        session.step().unwrap();
    }
    let log = session.log();
    let missed: Vec<u64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Event {
                tick,
                event: SessionEvent::MissedInference { .. },
            } => Some(*tick),
            _ => None,
        })
        .collect();
    assert_eq!(missed, [15]);
    // the idle pilot's zero is averaged in on the overlapping action
    let at_20 = log.frames().find(|(t, _)| *t == 20).unwrap().1;
    assert_eq!(at_20.value("Accelerate"), 0.5);
}

#[test]
fn log_replays_to_the_same_result() {
    let text = BASE.replace("source = \"remote\"", "source = \"agent:heuristic\"").replace("match_seconds = 1", "match_seconds = 20");
    let config = SessionConfig::from_toml_str(&text).unwrap();
    let arena = config.arena.clone();
    let (result, log) = run_match(config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("match.ndjson");
    log.save(&path).unwrap();
    let loaded = coplay::session::TickLog::load(&path).unwrap();
    assert_eq!(replay_log(&loaded, &arena).unwrap(), result);
    assert_eq!(loaded.result(), Some(&result));
    let overlay = export_augmented_log(&loaded);
    assert_eq!(overlay.len(), 2400);
    let mut buf = Vec::new();
    write_overlay(&overlay, &mut buf).unwrap();
    assert_eq!(read_overlay(&buf[..]).unwrap(), overlay);
}

#[test]
fn configured_log_path_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.ndjson");
    let mut config = SessionConfig::from_toml_str(BASE).unwrap();
    config.log = Some(path.clone());
    run_match(config).unwrap();
    let log = coplay::session::TickLog::load(&path).unwrap();
    assert_eq!(log.frames().count(), 120);
}

#[test]
fn batch_modes_agree() {
    let configs: Vec<SessionConfig> = (0..4)
        .map(|seed| {
            let text = BASE
                .replace("source = \"remote\"", "source = \"agent:heuristic\"")
                .replace("opponents = \"idle\"", &format!("seed = {seed}"));
            SessionConfig::from_toml_str(&text).unwrap()
        })
        .collect();
    let seq: Vec<_> = run_batch(&configs, Execution::Sequential).into_iter().map(Result::unwrap).collect();
    let par: Vec<_> = run_batch(&configs, Execution::Parallel).into_iter().map(Result::unwrap).collect();
    assert_eq!(seq, par);
}

#[test]
fn script_files_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pilot.ndjson"),
        "{\"tick\":0,\"element\":\"RightTrigger\",\"intensity\":1.0}\n",
    )
    .unwrap();
    let cfg = dir.path().join("session.toml");
    std::fs::write(&cfg, BASE.replacen("source = \"idle\"", "source = \"script:pilot.ndjson\"", 1)).unwrap();
    let config = SessionConfig::load(&cfg).unwrap();
    let (_, log) = run_match(config).unwrap();
    assert!(log.frames().skip(1).all(|(_, f)| f.value("Accelerate") == 0.5));
}
