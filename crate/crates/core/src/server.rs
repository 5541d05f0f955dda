//! Protocol server. One TCP port carries both transports: a connection that
//! opens with `GET ` is upgraded to WebSocket (one message per text frame),
//! anything else speaks newline-delimited JSON.
//!
//! Client threads only parse and forward; the tick thread owns the session
//! and is the single writer of the virtual controller.

use std::collections::HashMap;
use std::io::{BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;
use tungstenite::protocol::WebSocket;

use crate::agent::AgentActionVector;
use crate::input::ControllerLayout;
use crate::protocol::{encode_message, ConfigPayload, Message, MessageReader, ProtocolError};
use crate::session::{
    command_from_wire, ChannelInput, ChannelSource, MatchResult, Pacing, Session, SessionConfig, SessionError,
    SourceSpec, TickLog,
};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("timed out waiting for players: {}", .0.join(", "))]
    PlayersMissing(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeOptions {
    pub pacing: Pacing,
    /// Hold the kickoff until every remote player has said hello.
    pub wait_for_players: bool,
    /// Give up waiting after this long.
    pub start_timeout: Option<Duration>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            pacing: Pacing::RealTime,
            wait_for_players: true,
            start_timeout: None,
        }
    }
}

type ClientId = u64;

enum Inbound {
    Connected(ClientId, Sender<Message>),
    Message(ClientId, Message),
    Rejected(ClientId, String),
    Closed(ClientId),
}

enum Claim {
    Human { tx: Sender<ChannelInput>, layout: ControllerLayout },
    Agent { tx: Sender<AgentActionVector> },
}

pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> std::io::Result<Self> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves one match and returns its result and log.
    pub fn run(self, config: SessionConfig, opts: ServeOptions) -> Result<(MatchResult, TickLog), ServerError> {
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let stop = stop.clone();
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, tx, stop))
        };
        let out = TickLoop::new(config)?.run(rx, opts);
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        out
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Inbound>, stop: Arc<AtomicBool>) {
    let mut next: ClientId = 0;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next;
                next += 1;
                let tx = tx.clone();
                let stop = stop.clone();
                thread::spawn(move || {
                    let _ = stream.set_nonblocking(false);
                    let _ = handle_client(id, stream, tx, stop);
                });
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(_) => thread::sleep(Duration::from_millis(2)),
        }
    }
}

fn handle_client(id: ClientId, stream: TcpStream, tx: Sender<Inbound>, stop: Arc<AtomicBool>) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut head = [0u8; 4];
    let n = loop {
        match stream.peek(&mut head) {
            Ok(n) if n < 4 && n > 0 && head[..n] == b"GET "[..n] => thread::sleep(Duration::from_millis(1)),
            Ok(n) => break n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    };
    if n == 0 {
        return Ok(());
    }
    let (out_tx, out_rx) = mpsc::channel();
    let websocket = &head == b"GET ";
    if websocket {
        let ws = match tungstenite::accept(stream) {
            Ok(ws) => ws,
            Err(_) => return Ok(()),
        };
        let _ = tx.send(Inbound::Connected(id, out_tx));
        serve_websocket(id, ws, &tx, out_rx, &stop);
    } else {
        let _ = tx.send(Inbound::Connected(id, out_tx));
        serve_ndjson(id, stream, &tx, out_rx)?;
    }
    let _ = tx.send(Inbound::Closed(id));
    Ok(())
}

fn forward(id: ClientId, msg: Result<Message, ProtocolError>, tx: &Sender<Inbound>) -> bool {
    let item = match msg {
        Ok(m) => Inbound::Message(id, m),
        Err(e) => Inbound::Rejected(id, e.to_string()),
    };
    tx.send(item).is_ok()
}

fn serve_ndjson(id: ClientId, stream: TcpStream, tx: &Sender<Inbound>, out_rx: Receiver<Message>) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let shutdown = stream.try_clone()?;
    let write_thread = thread::spawn(move || {
        for msg in out_rx {
            let Ok(line) = encode_message(&msg) else { continue };
            if writer.write_all(line.as_bytes()).is_err() {
                break;
            }
        }
        let _ = writer.shutdown(std::net::Shutdown::Both);
    });
    let mut reader = MessageReader::new(BufReader::new(stream));
    loop {
        match reader.read_message() {
            Ok(Some(m)) => {
                if !forward(id, Ok(m), tx) {
                    break;
                }
            }
            Ok(None) | Err(ProtocolError::Io(_)) => break,
            Err(e) => {
                if !forward(id, Err(e), tx) {
                    break;
                }
            }
        }
    }
    let _ = shutdown.shutdown(std::net::Shutdown::Both);
    let _ = write_thread.join();
    Ok(())
}

fn serve_websocket(
    id: ClientId,
    mut ws: WebSocket<TcpStream>,
    tx: &Sender<Inbound>,
    out_rx: Receiver<Message>,
    stop: &AtomicBool,
) {
    use tungstenite::Message as Frame;
    let _ = ws.get_mut().set_read_timeout(Some(Duration::from_millis(2)));
    loop {
        loop {
            match out_rx.try_recv() {
                Ok(msg) => {
                    let Ok(line) = encode_message(&msg) else { continue };
                    if ws.write(Frame::text(line.trim_end())).is_err() {
                        return;
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return;
                }
            }
        }
        if ws.flush().is_err() {
            return;
        }
        match ws.read() {
            Ok(Frame::Text(t)) => {
                if !forward(id, crate::protocol::decode_message(t.as_str()), tx) {
                    return;
                }
            }
            Ok(Frame::Binary(b)) => {
                let msg = std::str::from_utf8(&b)
                    .map_err(|e| ProtocolError::Malformed(e.to_string()))
                    .and_then(crate::protocol::decode_message);
                if !forward(id, msg, tx) {
                    return;
                }
            }
            Ok(Frame::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
            }
            Err(_) => return,
        }
    }
}

struct TickLoop {
    session: Session,
    clients: HashMap<ClientId, Sender<Message>>,
    claims: HashMap<ClientId, (String, Claim)>,
}

impl TickLoop {
    fn new(config: SessionConfig) -> Result<Self, SessionError> {
        Ok(TickLoop {
            session: Session::new(config)?,
            clients: HashMap::new(),
            claims: HashMap::new(),
        })
    }

    fn remote_players(&self) -> Vec<String> {
        self.session
            .players_with(|s| matches!(s, SourceSpec::Remote) || matches!(s, SourceSpec::Agent(n) if n == "remote"))
    }

    fn missing_players(&self) -> Vec<String> {
        self.remote_players()
            .into_iter()
            .filter(|p| !self.claims.values().any(|(n, _)| n == p))
            .collect()
    }

    fn reply(&self, client: ClientId, payload: ConfigPayload) {
        if let Some(tx) = self.clients.get(&client) {
            let _ = tx.send(Message::Config(payload));
        }
    }

    fn broadcast(&mut self, msg: &Message) {
        self.clients.retain(|_, tx| tx.send(msg.clone()).is_ok());
    }

    fn handle(&mut self, item: Inbound) {
        match item {
            Inbound::Connected(id, tx) => {
                self.clients.insert(id, tx);
            }
            Inbound::Closed(id) => {
                self.clients.remove(&id);
                if let Some((_, Claim::Human { tx, .. })) = self.claims.remove(&id) {
                    let _ = tx.send(ChannelInput::Disconnect);
                }
            }
            Inbound::Rejected(id, message) => self.reply(id, ConfigPayload::Error { message }),
            Inbound::Message(id, msg) => self.handle_message(id, msg),
        }
    }

    fn handle_message(&mut self, id: ClientId, msg: Message) {
        match msg {
            Message::Config(ConfigPayload::Hello { player, agent }) => self.hello(id, player, agent),
            Message::Config(ConfigPayload::Validate { session }) => {
                let payload = match SessionConfig::from_toml_str(&session) {
                    Ok(_) => ConfigPayload::Validation {
                        ok: true,
                        violations: vec![],
                    },
                    Err(e) => ConfigPayload::Validation {
                        ok: false,
                        violations: e.violations(),
                    },
                };
                self.reply(id, payload);
            }
            Message::Input(p) => {
                let err = match self.claims.get(&id) {
                    Some((name, Claim::Human { tx, layout })) if *name == p.player => {
                        match command_from_wire(layout, &p.element, p.intensity) {
                            Ok(cmd) => {
                                let _ = tx.send(ChannelInput::Command(cmd));
                                None
                            }
                            Err(e) => Some(e),
                        }
                    }
                    _ => Some(format!("input for `{}` from a client that does not hold that player", p.player)),
                };
                if let Some(message) = err {
                    self.reply(id, ConfigPayload::Error { message });
                }
            }
            Message::AgentAction(a) => {
                let err = match self.claims.get(&id) {
                    Some((_, Claim::Agent { tx })) => match a.vector.validate() {
                        Ok(()) => {
                            let _ = tx.send(a.vector);
                            None
                        }
                        Err(e) => Some(e.to_string()),
                    },
                    _ => Some("agent_action from a client that is not an agent".into()),
                };
                if let Some(message) = err {
                    self.reply(id, ConfigPayload::Error { message });
                }
            }
            _ => self.reply(
                id,
                ConfigPayload::Error {
                    message: "message type not accepted by the server".into(),
                },
            ),
        }
    }

    fn hello(&mut self, id: ClientId, player: String, agent: bool) {
        let spec = self
            .session
            .config()
            .players
            .iter()
            .find(|p| p.name == player)
            .map(|p| (p.source.clone(), p.role, p.layout.clone()));
        let taken = self.claims.values().any(|(n, _)| *n == player) || self.claims.contains_key(&id);
        let outcome = match spec {
            _ if taken => Err(format!("player `{player}` is already connected")),
            None => Err(format!("no player `{player}` in this session")),
            Some((SourceSpec::Remote, role, layout)) if !agent => {
                let (tx, rx) = mpsc::channel();
                self.session.attach_source(&player, Box::new(ChannelSource::new(rx)));
                Ok((role, Claim::Human { tx, layout }))
            }
            Some((SourceSpec::Agent(name), role, _)) if agent && name == "remote" => {
                let (tx, rx) = mpsc::channel();
                self.session.attach_remote_agent(&player, rx);
                Ok((role, Claim::Agent { tx }))
            }
            Some(_) => Err(format!("player `{player}` does not accept a remote {}", if agent { "agent" } else { "human" })),
        };
        match outcome {
            Ok((role, claim)) => {
                self.claims.insert(id, (player.clone(), claim));
                self.reply(id, ConfigPayload::Welcome { player, role });
            }
            Err(message) => self.reply(id, ConfigPayload::Error { message }),
        }
    }

    fn run(mut self, rx: Receiver<Inbound>, opts: ServeOptions) -> Result<(MatchResult, TickLog), ServerError> {
        let started = Instant::now();
        if opts.wait_for_players {
            while !self.missing_players().is_empty() {
                if opts.start_timeout.is_some_and(|t| started.elapsed() > t) {
                    return Err(ServerError::PlayersMissing(self.missing_players()));
                }
                if let Ok(item) = rx.recv_timeout(Duration::from_millis(5)) {
                    self.handle(item);
                }
            }
        }
        let period = Duration::from_secs_f64(self.session.config().arena.dt());
        let t0 = Instant::now();
        let mut ticks: u32 = 0;
        let state = self.session.state().clone();
        self.broadcast(&Message::State(state));
        while !self.session.is_over() {
            while let Ok(item) = rx.try_recv() {
                self.handle(item);
            }
            let out = self.session.step()?;
            ticks += 1;
            self.broadcast(&Message::State(out.state));
            for e in out.events {
                self.broadcast(&Message::Event(e));
            }
            if opts.pacing == Pacing::RealTime {
                let due = t0 + period * ticks;
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
            }
        }
        let result = self.session.finish();
        let log = self.session.log().clone();
        if let Some(path) = &self.session.config().log {
            log.save(path).map_err(SessionError::Log)?;
        }
        // dropping the outboxes closes every client connection
        self.clients.clear();
        Ok((result, log))
    }
}
