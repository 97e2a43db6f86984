//! Interactive mode: a real-time paced simulation behind a websocket.
//!
//! One thread owns the [`Simulation`]. Commands reach it over a channel and
//! take effect between plant ticks; telemetry leaves through a bounded
//! broadcast queue, so a slow client loses old frames instead of stalling the
//! loop. A client that connects while nobody holds the sticks becomes the
//! operator; the rest observe. When the operator disconnects the sticks are
//! zeroed and the role is free again.

use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use swarmlift_core::guidance::{MotionCommand, MotionLimits};
use swarmlift_core::sim::{Scenario, Simulation};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};

use crate::protocol::{ClientMessage, OperatorCommand, Role, ServerMessage, TelemetryFrame, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Telemetry frames per wall-clock second.
    pub telemetry_rate: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { speed: 1.0, telemetry_rate: 20.0 }
    }
}

struct Request {
    command: OperatorCommand,
    reply: Option<oneshot::Sender<Result<MotionCommand, String>>>,
}

struct AppState {
    scenario: String,
    limits: MotionLimits,
    commands: Mutex<mpsc::Sender<Request>>,
    telemetry: broadcast::Sender<Arc<str>>,
    operator: Mutex<Option<u64>>,
    next_client: Mutex<u64>,
}

fn encode(msg: &ServerMessage) -> Arc<str> {
    serde_json::to_string(msg).expect("server messages serialise").into()
}

fn drain(sim: &mut Simulation, requests: &mpsc::Receiver<Request>) -> bool {
    loop {
        match requests.try_recv() {
            Ok(req) => {
                let motion = req.command.to_motion(&sim.scenario().limits);
                let result = sim.apply_live_command(motion).map_err(|e| e.to_string());
                if let Some(reply) = req.reply {
                    let _ = reply.send(result);
                }
            }
            Err(mpsc::TryRecvError::Empty) => return true,
            Err(mpsc::TryRecvError::Disconnected) => return false,
        }
    }
}

fn run_loop(mut sim: Simulation, requests: mpsc::Receiver<Request>, telemetry: broadcast::Sender<Arc<str>>, options: ServeOptions) {
    let period = Duration::from_secs_f64(1.0 / options.telemetry_rate);
    let start = Instant::now();
    let sim_start = sim.time();
    let mut next_frame = start;
    loop {
        if !drain(&mut sim, &requests) {
            return;
        }
        let target = sim_start + start.elapsed().as_secs_f64() * options.speed;
        while sim.is_running() && sim.time() < target {
            if let Err(e) = sim.step() {
                let _ = telemetry.send(encode(&ServerMessage::Error { reason: e.to_string() }));
                sim.stop();
                break;
            }
            if !drain(&mut sim, &requests) {
                return;
            }
        }
        if sim.is_running() {
            let frame = TelemetryFrame::capture(&sim);
            if frame.positions.iter().flatten().all(|x| x.is_finite()) {
                let _ = telemetry.send(encode(&ServerMessage::Telemetry { frame }));
            } else {
                let _ = telemetry.send(encode(&ServerMessage::Error { reason: format!("non-finite state at t = {} s", sim.time()) }));
                sim.stop();
            }
        }
        next_frame += period;
        let now = Instant::now();
        if next_frame > now {
            thread::sleep(next_frame - now);
        } else {
            next_frame = now;
        }
    }
}

/// Serves `scenario` on `listener` until the listener fails.
pub async fn serve(listener: TcpListener, scenario: Scenario, options: ServeOptions) -> std::io::Result<()> {
    if !(options.speed > 0.0 && options.speed.is_finite() && options.telemetry_rate > 0.0) {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "speed and telemetry rate must be positive"));
    }
    let name = scenario.name.clone();
    let limits = scenario.limits;
    let sim = Simulation::interactive(scenario).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let (tx, rx) = mpsc::channel();
    let (telemetry, _) = broadcast::channel(16);
    let publisher = telemetry.clone();
    thread::Builder::new().name("sim".into()).spawn(move || run_loop(sim, rx, publisher, options))?;
    let state = Arc::new(AppState {
        scenario: name,
        limits,
        commands: Mutex::new(tx),
        telemetry,
        operator: Mutex::new(None),
        next_client: Mutex::new(0),
    });
    let app = Router::new().route("/ws", get(upgrade)).with_state(state);
    axum::serve(listener, app).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, state))
}

impl AppState {
    fn submit(&self, command: OperatorCommand, reply: Option<oneshot::Sender<Result<MotionCommand, String>>>) -> bool {
        self.commands.lock().unwrap().send(Request { command, reply }).is_ok()
    }

    async fn command(&self, command: OperatorCommand) -> ServerMessage {
        let clamped = command.clamped(&self.limits);
        let (tx, rx) = oneshot::channel();
        if !self.submit(clamped, Some(tx)) {
            return ServerMessage::Error { reason: "simulation has stopped".into() };
        }
        match rx.await {
            Ok(Ok(motion)) => ServerMessage::Ack { command: clamped, motion },
            Ok(Err(reason)) => ServerMessage::Error { reason },
            Err(_) => ServerMessage::Error { reason: "simulation has stopped".into() },
        }
    }
}

async fn session(socket: WebSocket, state: Arc<AppState>) {
    let id = {
        let mut next = state.next_client.lock().unwrap();
        *next += 1;
        *next
    };
    let role = {
        let mut operator = state.operator.lock().unwrap();
        if operator.is_none() {
            *operator = Some(id);
            Role::Operator
        } else {
            Role::Observer
        }
    };
    let mut frames = state.telemetry.subscribe();
    let (mut sink, mut stream) = socket.split();
    let hello = ServerMessage::Hello { schema_version: SCHEMA_VERSION, role, scenario: state.scenario.clone() };
    if sink.send(Message::Text(encode(&hello).as_ref().into())).await.is_ok() {
        loop {
            let outgoing: Arc<str> = tokio::select! {
                frame = frames.recv() => match frame {
                    Ok(frame) => frame,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                incoming = stream.next() => match incoming {
                    Some(Ok(Message::Text(text))) => encode(&respond(&state, role, text.as_str()).await),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                },
            };
            if sink.send(Message::Text(outgoing.as_ref().into())).await.is_err() {
                break;
            }
        }
    }
    if role == Role::Operator {
        state.submit(OperatorCommand::default(), None);
        *state.operator.lock().unwrap() = None;
    }
}

async fn respond(state: &AppState, role: Role, text: &str) -> ServerMessage {
    match serde_json::from_str::<ClientMessage>(text) {
        Err(e) => ServerMessage::Error { reason: format!("malformed message: {e}") },
        Ok(ClientMessage::Command { .. }) if role == Role::Observer => {
            ServerMessage::Error { reason: "observers cannot send commands".into() }
        }
        Ok(ClientMessage::Command { command }) => state.command(command).await,
    }
}
