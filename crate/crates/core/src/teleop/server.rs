//! WebSocket front end. One control loop owns the session and ticks at a
//! fixed rate; clients post poses into a latest-value mailbox per hand and
//! receive every frame through a broadcast channel.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;

use super::protocol::{pose_from_message, ClientMessage, RecordCmd, ServerMessage};
use super::retarget::{Hand, HandPose, RetargetConfig};
use super::session::TeleopSession;
use crate::sim2d::{Sim, SimConfig, TaskId};
use crate::Result;

pub const DEFAULT_TICK_HZ: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub tick_hz: f64,
    pub task: TaskId,
    pub seed: u64,
    pub record_dir: PathBuf,
    pub retarget: RetargetConfig,
    pub sim: SimConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            tick_hz: DEFAULT_TICK_HZ,
            task: TaskId::LiftBag,
            seed: 0,
            record_dir: PathBuf::from("recordings"),
            retarget: RetargetConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

/// Latest pose per hand; newer poses overwrite older ones and stale
/// timestamps are rejected.
#[derive(Default)]
pub struct Mailbox {
    slots: [Option<HandPose>; 2],
}

impl Mailbox {
    /// Returns `false` if the pose was dropped.
    pub fn post(&mut self, pose: HandPose) -> bool {
        if !pose.is_finite() {
            return false;
        }
        let slot = &mut self.slots[pose.hand.index()];
        if slot.is_some_and(|p| pose.t <= p.t) {
            return false;
        }
        *slot = Some(pose);
        true
    }

    pub fn latest(&self) -> [Option<HandPose>; 2] {
        self.slots
    }

    pub fn clear(&mut self) {
        self.slots = [None, None];
    }
}

enum Command {
    Reset { task: String, seed: u64 },
    Record { cmd: RecordCmd, success: Option<bool> },
}

type Request = (Command, oneshot::Sender<ServerMessage>);

/// Handle to a running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

/// Binds and starts serving in the background.
pub async fn spawn(addr: &str, cfg: ServerConfig) -> Result<ServerHandle> {
    cfg.retarget.validate()?;
    cfg.sim.validate()?;
    if !(cfg.tick_hz > 0.0 && cfg.tick_hz.is_finite()) {
        return Err(crate::Error::Config("tick_hz must be positive".into()));
    }
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let (stop_tx, stop_rx) = oneshot::channel();
    let task = tokio::spawn(run(listener, cfg, stop_rx));
    log::info!("teleop server listening on {local}");
    Ok(ServerHandle { addr: local, shutdown: Some(stop_tx), task })
}

/// Serves until interrupted.
pub async fn serve(addr: &str, cfg: ServerConfig) -> Result<()> {
    let handle = spawn(addr, cfg).await?;
    let _ = tokio::signal::ctrl_c().await;
    handle.shutdown().await;
    Ok(())
}

async fn run(listener: TcpListener, cfg: ServerConfig, mut stop: oneshot::Receiver<()>) {
    let mailbox = Arc::new(Mutex::new(Mailbox::default()));
    let (frames_tx, _) = broadcast::channel::<String>(64);
    let (req_tx, req_rx) = mpsc::channel::<Request>(16);
    let control = tokio::spawn(control_loop(cfg, mailbox.clone(), frames_tx.clone(), req_rx));
    loop {
        tokio::select! {
            _ = &mut stop => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    tokio::spawn(handle_client(stream, peer, mailbox.clone(), frames_tx.subscribe(), req_tx.clone()));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
        }
    }
    control.abort();
}

fn frame_message(session: &TeleopSession, held: [bool; 2]) -> String {
    let obs = session.observation();
    let png = obs.encode_png().unwrap_or_default();
    let st = session.state();
    ServerMessage::Frame {
        t: st.step_count,
        png_b64: base64::engine::general_purpose::STANDARD.encode(png),
        joints: st.joints,
        grippers: st.grippers,
        reward: session.last_reward(),
        held: [Hand::Left, Hand::Right].into_iter().filter(|h| held[h.index()]).collect(),
    }
    .to_json()
}

fn handle_command(session: &mut TeleopSession, cfg: &ServerConfig, mailbox: &Mutex<Mailbox>, cmd: Command) -> ServerMessage {
    let result: Result<String> = match cmd {
        Command::Reset { task, seed } => task.parse::<TaskId>().map(|t| {
            session.reset(t, seed);
            mailbox.lock().expect("mailbox").clear();
            format!("reset {} seed {seed}", t.as_str())
        }),
        Command::Record { cmd: RecordCmd::Start, .. } => session.start_recording().map(|_| {
            mailbox.lock().expect("mailbox").clear();
            "recording".to_string()
        }),
        Command::Record { cmd: RecordCmd::Stop, success } => session
            .stop_and_save(success.unwrap_or(false), &cfg.record_dir)
            .map(|(ep, dir)| format!("saved {} ticks to {}", ep.actions.len(), dir.display())),
    };
    match result {
        Ok(msg) => ServerMessage::Ack { msg },
        Err(e) => ServerMessage::Error { msg: e.to_string() },
    }
}

async fn control_loop(
    cfg: ServerConfig,
    mailbox: Arc<Mutex<Mailbox>>,
    frames: broadcast::Sender<String>,
    mut requests: mpsc::Receiver<Request>,
) {
    let sim = match Sim::new(cfg.sim.clone()) {
        Ok(s) => s,
        Err(e) => {
            log::error!("simulator config rejected: {e}");
            return;
        }
    };
    let mut session = match TeleopSession::new(sim, cfg.retarget.clone(), cfg.task, cfg.seed) {
        Ok(s) => s,
        Err(e) => {
            log::error!("session config rejected: {e}");
            return;
        }
    };
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / cfg.tick_hz));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        while let Ok((cmd, reply)) = requests.try_recv() {
            let _ = reply.send(handle_command(&mut session, &cfg, &mailbox, cmd));
        }
        let poses = mailbox.lock().expect("mailbox").latest();
        let outcome = session.control_tick([poses[0].as_ref(), poses[1].as_ref()]);
        let _ = frames.send(frame_message(&session, outcome.held));
    }
}

async fn handle_client(
    stream: TcpStream,
    peer: SocketAddr,
    mailbox: Arc<Mutex<Mailbox>>,
    mut frames: broadcast::Receiver<String>,
    requests: mpsc::Sender<Request>,
) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("handshake with {peer} failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (out_tx, mut out_rx) = mpsc::channel::<String>(64);
    let writer = tokio::spawn(async move {
        loop {
            let text = tokio::select! {
                f = frames.recv() => match f {
                    Ok(t) => t,
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        log::debug!("{peer} skipped {n} frames");
                        continue;
                    }
                    Err(_) => break,
                },
                o = out_rx.recv() => match o {
                    Some(t) => t,
                    None => break,
                },
            };
            if sink.send(Message::text(text)).await.is_err() {
                break;
            }
        }
    });
    while let Some(msg) = source.next().await {
        let text = match msg {
            Ok(Message::Text(t)) => t.to_string(),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let reply = match ClientMessage::parse(&text) {
            Ok(ClientMessage::Pose { hand, t, x, y, theta, pinch }) => {
                if !mailbox.lock().expect("mailbox").post(pose_from_message(hand, t, x, y, theta, pinch)) {
                    log::debug!("dropped stale or non-finite pose from {peer}");
                }
                None
            }
            Ok(ClientMessage::Reset { task, seed }) => Some(request(&requests, Command::Reset { task, seed }).await),
            Ok(ClientMessage::Record { cmd, success }) => Some(request(&requests, Command::Record { cmd, success }).await),
            Err(e) => Some(ServerMessage::Error { msg: e }),
        };
        if let Some(r) = reply {
            if out_tx.send(r.to_json()).await.is_err() {
                break;
            }
        }
    }
    drop(out_tx);
    writer.abort();
}

async fn request(requests: &mpsc::Sender<Request>, cmd: Command) -> ServerMessage {
    let (tx, rx) = oneshot::channel();
    if requests.send((cmd, tx)).await.is_err() {
        return ServerMessage::Error { msg: "control loop stopped".into() };
    }
    rx.await.unwrap_or(ServerMessage::Error { msg: "control loop stopped".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(hand: Hand, t: i64) -> HandPose {
        HandPose { t, hand, position: [1.0, 2.0], orientation: 0.0, pinch: 0.0 }
    }

    #[test]
    fn mailbox_keeps_latest_and_rejects_stale() {
        let mut m = Mailbox::default();
        assert!(m.post(pose(Hand::Left, 5)));
        assert!(m.post(pose(Hand::Left, 6)));
        assert!(!m.post(pose(Hand::Left, 6)));
        assert!(!m.post(pose(Hand::Left, 2)));
        assert!(m.post(pose(Hand::Right, 1)));
        let mut bad = pose(Hand::Right, 9);
        bad.pinch = f64::NAN;
        assert!(!m.post(bad));
        let l = m.latest();
        assert_eq!(l[0].unwrap().t, 6);
        assert_eq!(l[1].unwrap().t, 1);
    }
}
