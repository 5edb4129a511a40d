//! Real-time WebSocket front end. One simulation thread owns the session;
//! connection threads talk to it only through channels.

use std::collections::HashMap;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use aem_core::sim::protocol::{InteractiveSession, ServerMessage};
use aem_core::sim::{Mode, SimConfig};
use anyhow::Context;
use tungstenite::{Message, WebSocket};

use crate::Failure;

/// Longest wall-clock gap the simulation catches up on in one go (s).
const MAX_CATCH_UP: f64 = 0.1;
const POLL: Duration = Duration::from_millis(2);

enum Inbound {
    Join(u64, Sender<String>),
    Text(u64, String),
    Leave(u64),
}

pub fn serve(config: &SimConfig, bind: &str, port: u16) -> Result<(), Failure> {
    let mut config = config.clone();
    if config.mode != Mode::Interactive {
        log::warn!("serve runs the interactive loop; overriding mode");
        config.mode = Mode::Interactive;
    }
    let session = InteractiveSession::new(config)?;
    let listener = TcpListener::bind((bind, port)).with_context(|| format!("binding {bind}:{port}")).map_err(Failure::Other)?;
    let addr = listener.local_addr()?;
    println!("listening on ws://{addr}");
    io::stdout().flush()?;

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || simulation_loop(session, rx));

    for (id, stream) in (1u64..).zip(listener.incoming()) {
        match stream {
            Ok(stream) => {
                let tx = tx.clone();
                thread::spawn(move || {
                    if let Err(e) = connection(id, stream, tx) {
                        log::info!("client {id}: {e}");
                    }
                });
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
    Ok(())
}

fn simulation_loop(mut session: InteractiveSession, rx: Receiver<Inbound>) {
    let fs = session.simulation().config().physics_rate;
    let mut clients: HashMap<u64, Sender<String>> = HashMap::new();
    let mut last = Instant::now();
    let mut debt = 0.0;
    loop {
        loop {
            let msg = match rx.recv_timeout(POLL) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => return,
            };
            match msg {
                Inbound::Join(id, out) => {
                    let _ = out.send(session.hello().to_json());
                    clients.insert(id, out);
                }
                Inbound::Text(id, text) => {
                    if let Some(err) = session.handle_text(&text) {
                        if let Some(out) = clients.get(&id) {
                            let _ = out.send(err.to_json());
                        }
                    }
                }
                Inbound::Leave(id) => {
                    clients.remove(&id);
                    if clients.is_empty() {
                        session.disconnect();
                    }
                }
            }
            if last.elapsed() >= POLL {
                break;
            }
        }

        let now = Instant::now();
        let elapsed = now.duration_since(last).as_secs_f64().min(MAX_CATCH_UP);
        last = now;
        if !session.is_advancing() {
            debt = 0.0;
            continue;
        }
        debt += elapsed * fs;
        while debt >= 1.0 {
            debt -= 1.0;
            match session.tick() {
                Ok(Some(state)) => {
                    let text = state.to_json();
                    clients.retain(|_, out| out.send(text.clone()).is_ok());
                }
                Ok(None) => {}
                Err(e) => {
                    let text = ServerMessage::error("divergence", e.to_string()).to_json();
                    clients.retain(|_, out| out.send(text.clone()).is_ok());
                    let _ = session.handle_text(r#"{"type":"control","action":"reset"}"#);
                    debt = 0.0;
                }
            }
        }
    }
}

fn connection(id: u64, stream: TcpStream, tx: Sender<Inbound>) -> anyhow::Result<()> {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream.try_clone()?).map_err(|e| anyhow::anyhow!("handshake: {e}"))?;
    stream.set_read_timeout(Some(POLL))?;
    let (out_tx, out_rx) = mpsc::channel();
    tx.send(Inbound::Join(id, out_tx))?;
    let result = pump(id, &mut ws, &tx, &out_rx);
    let _ = tx.send(Inbound::Leave(id));
    result
}

fn pump(id: u64, ws: &mut WebSocket<TcpStream>, tx: &Sender<Inbound>, out: &Receiver<String>) -> anyhow::Result<()> {
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => tx.send(Inbound::Text(id, text.to_string()))?,
            Ok(Message::Binary(_)) => {
                ws.send(Message::text(ServerMessage::error("malformed", "binary frames are not supported").to_json()))?
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        let mut queued = false;
        while let Ok(text) = out.try_recv() {
            ws.write(Message::text(text))?;
            queued = true;
        }
        if queued {
            ws.flush()?;
        }
    }
}
