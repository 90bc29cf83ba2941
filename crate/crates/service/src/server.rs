use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::control::{parse_control, Control, ServerMessage};
use crate::session::{run_loop, Session, StatsWindow, TickOutput};

pub const DEFAULT_TICK_RATE: f64 = 30.0;
/// Frames (eye pairs) buffered per client before new ones are dropped.
pub const CLIENT_FRAME_BUFFER: usize = 2;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("invalid tick rate {0}")]
    TickRate(f64),
}

type Frame = (Arc<Vec<u8>>, Arc<Vec<u8>>);

struct Client {
    id: u64,
    frames: SyncSender<Frame>,
    text: mpsc::Sender<String>,
    stats: Arc<AtomicBool>,
}

#[derive(Default)]
struct Hub {
    clients: Mutex<Vec<Client>>,
    next_id: AtomicU64,
}

impl Hub {
    fn is_empty(&self) -> bool {
        self.clients.lock().expect("client list lock").is_empty()
    }

    fn broadcast(&self, out: &TickOutput) {
        let mut clients = self.clients.lock().expect("client list lock");
        match out {
            TickOutput::Frames { left, right, .. } => {
                let frame = (Arc::new(left.to_bytes()), Arc::new(right.to_bytes()));
                clients.retain(|c| !matches!(c.frames.try_send(frame.clone()), Err(TrySendError::Disconnected(_))));
            }
            TickOutput::Error { frame_id, detail } => {
                let text = ServerMessage::Error {
                    detail: detail.clone(),
                    frame: Some(*frame_id),
                }
                .to_json();
                clients.retain(|c| c.text.send(text.clone()).is_ok());
            }
        }
    }

    fn push_stats(&self, text: &str) {
        let mut clients = self.clients.lock().expect("client list lock");
        clients.retain(|c| !c.stats.load(Ordering::Relaxed) || c.text.send(text.to_string()).is_ok());
    }

    fn remove(&self, id: u64) {
        self.clients.lock().expect("client list lock").retain(|c| c.id != id);
    }
}

/// WebSocket front end for one [`Session`]. Binary messages carry frames,
/// text messages carry control input and replies.
pub struct Server {
    listener: TcpListener,
    session: Arc<Session>,
    tick_rate: f64,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<(), ServiceError>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> Result<(), ServiceError> {
        self.stop.store(true, Ordering::Relaxed);
        match self.thread.take() {
            Some(t) => t.join().expect("server thread panicked"),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs + std::fmt::Debug, session: Session, tick_rate: f64) -> Result<Self, ServiceError> {
        if !(tick_rate.is_finite() && tick_rate > 0.0) {
            return Err(ServiceError::TickRate(tick_rate));
        }
        let context = format!("bind {addr:?}");
        let listener = TcpListener::bind(addr).map_err(|source| ServiceError::Io { context, source })?;
        Ok(Self {
            listener,
            session: Arc::new(session),
            tick_rate,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServiceError> {
        self.listener.local_addr().map_err(|source| ServiceError::Io {
            context: "local address".into(),
            source,
        })
    }

    pub fn spawn(self) -> Result<ServerHandle, ServiceError> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::spawn(move || self.run(&flag));
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    /// Serves until `stop` is set.
    pub fn run(self, stop: &Arc<AtomicBool>) -> Result<(), ServiceError> {
        let io = |context: &str| {
            let context = context.to_string();
            move |source| ServiceError::Io { context, source }
        };
        self.listener.set_nonblocking(true).map_err(io("listener"))?;
        let hub = Arc::new(Hub::default());

        let render = {
            let (hub, session, stop) = (hub.clone(), self.session.clone(), stop.clone());
            let tick_rate = self.tick_rate;
            thread::spawn(move || render_thread(&session, &hub, tick_rate, &stop))
        };

        let mut workers = Vec::new();
        while !stop.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    let (hub, session, stop) = (hub.clone(), self.session.clone(), stop.clone());
                    workers.push(thread::spawn(move || {
                        let _ = serve_client(stream, &session, &hub, &stop);
                    }));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(io("accept")(e)),
            }
            workers.retain(|w| !w.is_finished());
        }
        let _ = render.join();
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }
}

fn render_thread(session: &Session, hub: &Hub, tick_rate: f64, stop: &AtomicBool) {
    let mut stats = StatsWindow::new(Duration::from_secs(1));
    while !stop.load(Ordering::Relaxed) {
        if hub.is_empty() {
            thread::sleep(Duration::from_millis(10));
            continue;
        }
        // run until the last client leaves, then park again
        let done = AtomicBool::new(false);
        run_loop(session, tick_rate, &done, |out| {
            if let TickOutput::Frames { render_ms, .. } = &out {
                stats.record(*render_ms);
            }
            hub.broadcast(&out);
            if let Some((frame_ms, fps)) = stats.poll(Instant::now()) {
                let text = ServerMessage::Stats {
                    frame_ms,
                    fps,
                    frame_id: out.frame_id(),
                }
                .to_json();
                hub.push_stats(&text);
            }
            if stop.load(Ordering::Relaxed) || hub.is_empty() {
                done.store(true, Ordering::Relaxed);
            }
        });
    }
}

fn serve_client(stream: TcpStream, session: &Session, hub: &Hub, stop: &AtomicBool) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;

    let id = hub.next_id.fetch_add(1, Ordering::Relaxed);
    let (frame_tx, frame_rx) = mpsc::sync_channel(CLIENT_FRAME_BUFFER);
    let (text_tx, text_rx) = mpsc::channel();
    let stats = Arc::new(AtomicBool::new(false));
    hub.clients.lock().expect("client list lock").push(Client {
        id,
        frames: frame_tx,
        text: text_tx,
        stats: stats.clone(),
    });
    let result = client_loop(&mut ws, session, &frame_rx, &text_rx, &stats, stop);
    hub.remove(id);
    let _ = ws.close(None);
    let _ = ws.flush();
    result
}

fn client_loop(
    ws: &mut WebSocket<TcpStream>,
    session: &Session,
    frames: &Receiver<Frame>,
    texts: &Receiver<String>,
    stats: &AtomicBool,
    stop: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = match parse_control(&text) {
                    Ok(Control::Stats(on)) => {
                        stats.store(on, Ordering::Relaxed);
                        None
                    }
                    Ok(c) => session.apply_control(&c).err().map(|e| e.to_string()),
                    Err(e) => Some(e.to_string()),
                };
                if let Some(detail) = reply {
                    ws.send(Message::text(ServerMessage::Error { detail, frame: None }.to_json()))?;
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        while let Ok(text) = texts.try_recv() {
            ws.send(Message::text(text))?;
        }
        while let Ok((left, right)) = frames.try_recv() {
            ws.send(Message::binary(left.to_vec()))?;
            ws.send(Message::binary(right.to_vec()))?;
        }
    }
    Ok(())
}
