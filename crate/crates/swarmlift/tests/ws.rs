use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use swarmlift::config::{bundled_source, ScenarioFile};
use swarmlift::protocol::{ClientMessage, OperatorCommand, Role, ServerMessage, TelemetryFrame, SCHEMA_VERSION};
use swarmlift::serve::{serve, ServeOptions};
use swarmlift_core::metrics::dominant_frequency;
use tokio::net::{TcpListener, TcpStream};
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(name: &str, speed: f64) -> SocketAddr {
    let file = ScenarioFile::parse(bundled_source(name).unwrap(), name).unwrap();
    let scenario = file.to_scenario(name).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, scenario, ServeOptions { speed, ..Default::default() }));
    addr
}

async fn connect(addr: SocketAddr) -> (Client, Role) {
    let (mut ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    match next(&mut ws).await {
        ServerMessage::Hello { schema_version, role, .. } => {
            assert_eq!(schema_version, SCHEMA_VERSION);
            (ws, role)
        }
        other => panic!("expected hello, got {other:?}"),
    }
}

async fn next(ws: &mut Client) -> ServerMessage {
    loop {
        let msg = timeout(Duration::from_secs(5), ws.next()).await.expect("message in time").unwrap().unwrap();
        if let Message::Text(text) = msg {
            return serde_json::from_str(text.as_str()).unwrap();
        }
    }
}

async fn next_frame(ws: &mut Client) -> TelemetryFrame {
    loop {
        if let ServerMessage::Telemetry { frame } = next(ws).await {
            return frame;
        }
    }
}

/// Sends a command and waits for its reply, skipping telemetry.
async fn send(ws: &mut Client, command: OperatorCommand) -> ServerMessage {
    let text = serde_json::to_string(&ClientMessage::Command { command }).unwrap();
    ws.send(Message::Text(text.into())).await.unwrap();
    loop {
        match next(ws).await {
            ServerMessage::Telemetry { .. } => continue,
            other => return other,
        }
    }
}

fn mean_velocity(frame: &TelemetryFrame) -> [f64; 2] {
    let n = frame.velocities.len() as f64;
    let sum = frame.velocities.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
    [sum[0] / n, sum[1] / n]
}

#[tokio::test(flavor = "multi_thread")]
async fn hello_then_telemetry_at_twenty_hertz() {
    let addr = start("hold_square", 1.0).await;
    let (mut ws, role) = connect(addr).await;
    assert_eq!(role, Role::Operator);
    let first = next_frame(&mut ws).await;
    assert_eq!(first.positions.len(), 4);
    assert_eq!(first.edges.len(), 6);
    assert!(first.payload.is_some());
    let wall = std::time::Instant::now();
    let mut frames = vec![first];
    while wall.elapsed() < Duration::from_secs(2) {
        frames.push(next_frame(&mut ws).await);
    }
    let rate = (frames.len() - 1) as f64 / wall.elapsed().as_secs_f64();
    assert!((rate - 20.0).abs() < 3.0, "{rate} Hz");
    assert!(frames.windows(2).all(|w| w[1].t > w[0].t));
    let span = frames.last().unwrap().t - frames[0].t;
    assert!((span - 2.0).abs() < 0.3, "sim advanced {span} s in 2 s");
}

#[tokio::test(flavor = "multi_thread")]
async fn single_operator_and_clamped_acks() {
    let addr = start("hold_square", 1.0).await;
    let (mut operator, role) = connect(addr).await;
    assert_eq!(role, Role::Operator);
    let (mut observer, role) = connect(addr).await;
    assert_eq!(role, Role::Observer);

    match send(&mut observer, OperatorCommand { stick_x: 0.5, ..Default::default() }).await {
        ServerMessage::Error { reason } => assert!(reason.contains("observer"), "{reason}"),
        other => panic!("{other:?}"),
    }
    let wild = OperatorCommand { stick_x: 2.0, stick_y: 0.0, spin: 5.0, scale: -0.5, altitude_delta: 9.0 };
    match send(&mut operator, wild).await {
        ServerMessage::Ack { command, motion } => {
            assert_eq!(command, OperatorCommand { stick_x: 1.0, stick_y: 0.0, spin: 1.0, scale: -0.5, altitude_delta: 1.0 });
            assert_eq!(motion.translation, [1.0, 0.0]);
            assert_eq!(motion.spin, 0.2);
            assert_eq!(motion.scale_rate, -0.1);
            assert_eq!(motion.altitude_offset, 1.0);
        }
        other => panic!("{other:?}"),
    }
    operator.send(Message::Text("{\"type\":\"jump\"}".into())).await.unwrap();
    loop {
        match next(&mut operator).await {
            ServerMessage::Telemetry { .. } => continue,
            ServerMessage::Error { reason } => {
                assert!(reason.contains("malformed"), "{reason}");
                break;
            }
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn operator_disconnect_zeroes_the_sticks() {
    let addr = start("hold_square", 1.0).await;
    let (mut operator, _) = connect(addr).await;
    let (mut observer, _) = connect(addr).await;
    assert!(matches!(send(&mut operator, OperatorCommand { stick_y: 0.4, ..Default::default() }).await, ServerMessage::Ack { .. }));
    // applied at the next guidance tick
    let mut seen = false;
    for _ in 0..40 {
        if next_frame(&mut observer).await.command.translation == [0.0, 0.4] {
            seen = true;
            break;
        }
    }
    assert!(seen, "command never took effect");
    operator.close(None).await.unwrap();
    drop(operator);
    let mut zeroed = false;
    for _ in 0..40 {
        if next_frame(&mut observer).await.command.translation == [0.0, 0.0] {
            zeroed = true;
            break;
        }
    }
    assert!(zeroed, "sticks stayed live after the operator left");
    let (_, role) = connect(addr).await;
    assert_eq!(role, Role::Operator);
}

#[tokio::test(flavor = "multi_thread")]
async fn full_stick_drives_the_team_at_top_speed() {
    let addr = start("hold_square", 25.0).await;
    let (mut ws, _) = connect(addr).await;
    assert!(matches!(send(&mut ws, OperatorCommand { stick_x: 1.0, ..Default::default() }).await, ServerMessage::Ack { .. }));
    let t0 = next_frame(&mut ws).await.t;
    let mut tail = Vec::new();
    loop {
        let f = next_frame(&mut ws).await;
        if f.t - t0 > 40.0 {
            tail.push(mean_velocity(&f));
        }
        if f.t - t0 > 50.0 {
            break;
        }
    }
    let n = tail.len() as f64;
    let v = tail.iter().fold([0.0; 2], |a, v| [a[0] + v[0] / n, a[1] + v[1] / n]);
    let speed = v[0].hypot(v[1]);
    assert!((speed - 1.0).abs() < 0.1, "{v:?}");
    assert!(v[0] > 0.9, "{v:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn spin_stick_makes_velocities_sinusoidal() {
    let addr = start("hold_square", 50.0).await;
    let (mut ws, _) = connect(addr).await;
    assert!(matches!(send(&mut ws, OperatorCommand { spin: 1.0, ..Default::default() }).await, ServerMessage::Ack { .. }));
    let t0 = next_frame(&mut ws).await.t;
    let mut frames = Vec::new();
    loop {
        let f = next_frame(&mut ws).await;
        if f.t - t0 > 20.0 {
            frames.push(f);
        }
        if frames.last().is_some_and(|f| f.t - t0 > 240.0) {
            break;
        }
    }
    // resample on a uniform grid; dropped frames leave gaps
    let (start, end) = (frames[0].t, frames.last().unwrap().t);
    let dt = 1.0;
    let grid: Vec<f64> = (0..((end - start) / dt) as usize).map(|k| start + k as f64 * dt).collect();
    let sample = |value: &dyn Fn(&TelemetryFrame) -> f64| -> Vec<f64> {
        grid.iter()
            .map(|&t| {
                let j = frames.partition_point(|f| f.t <= t).clamp(1, frames.len() - 1);
                let (a, b) = (&frames[j - 1], &frames[j]);
                let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
                value(a) * (1.0 - w) + value(b) * w
            })
            .collect()
    };
    let bearing = |f: &TelemetryFrame| {
        let c = f.positions.iter().fold([0.0; 2], |a, p| [a[0] + p[0] / 4.0, a[1] + p[1] / 4.0]);
        (f.positions[0][1] - c[1]).atan2(f.positions[0][0] - c[0])
    };
    let mut turned = 0.0;
    for w in frames.windows(2) {
        let mut d = bearing(&w[1]) - bearing(&w[0]);
        d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
        turned += d;
    }
    let rate = turned / (end - start);
    assert!(rate > 0.02 && rate <= 0.2, "{rate}");
    let expected = rate / std::f64::consts::TAU;
    for i in 0..4 {
        let vx = sample(&|f: &TelemetryFrame| f.velocities[i][0]);
        let f = dominant_frequency(&vx, dt).unwrap();
        assert!((f - expected).abs() < 0.1 * expected, "vehicle {i}: {f} vs {expected}");
    }
}
