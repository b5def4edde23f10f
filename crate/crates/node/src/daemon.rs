//! The peer daemon: one engine task fed by connection, control and timer events.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use ddnfs_core::engine::{Action, Engine, FetchId};
use ddnfs_core::store::status_report;
use ddnfs_core::{
    Codec, DiskStore, DocPath, FrameDecoder, KeyPair, Message, PathPattern, PeerId, Peerlist, Role, Tag,
    VersionSel,
};
use rand::seq::SliceRandom;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tracing::{debug, info, warn};

use crate::config::NodeConfig;
use crate::control::{self, Reply, Request};
use crate::files;
use crate::handshake::handshake;

pub(crate) const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);
pub(crate) const DIAL_TIMEOUT: Duration = Duration::from_secs(3);

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("bad peerlist: {0}")]
    BadPeerlist(String),
    #[error(transparent)]
    File(#[from] files::FileError),
    #[error(transparent)]
    Store(#[from] ddnfs_core::StoreError),
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

enum Input {
    Message { from: PeerId, tag: Tag, message: Message },
    Connected { peer: PeerId, conn: u64, tx: mpsc::UnboundedSender<Vec<u8>> },
    Disconnected { peer: PeerId, conn: u64 },
    DialFailed { peer: PeerId },
    Control { request: Request, reply: oneshot::Sender<Reply> },
}

/// Checks the startup invariants and opens the store.
fn prepare(config: &NodeConfig) -> Result<(KeyPair, Peerlist, DiskStore), DaemonError> {
    let keys = files::load_key(&config.key)?;
    let peerlist = files::load_peerlist(&config.peerlist)?;
    let me = keys.peer_id();
    let entry = peerlist
        .entry(&me)
        .ok_or_else(|| DaemonError::BadPeerlist(format!("own key {me} is not listed")))?;
    if entry.role != Role::Peer {
        return Err(DaemonError::BadPeerlist("only peer-role keys run a daemon".into()));
    }
    let listed = entry.address.as_deref().unwrap_or("-");
    if listed != config.listen.to_string() {
        return Err(DaemonError::BadPeerlist(format!(
            "own address is {listed}, but listening on {}",
            config.listen
        )));
    }
    let store = DiskStore::open(&config.store)?;
    Ok((keys, peerlist, store))
}

/// Runs until a shutdown request, SIGINT or SIGTERM.
pub async fn run(config: NodeConfig) -> Result<(), DaemonError> {
    let (keys, peerlist, store) = prepare(&config)?;
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| DaemonError::BindFailure {
            addr: config.listen,
            source,
        })?;
    let control = TcpListener::bind(config.control)
        .await
        .map_err(|source| DaemonError::BindFailure {
            addr: config.control,
            source,
        })?;
    let engine = Engine::new(
        keys.clone(),
        peerlist,
        Box::new(store),
        config.engine.clone(),
        rand::random(),
    );
    info!(peer = %keys.peer_id(), listen = %config.listen, control = %config.control, "daemon started");

    let (tx, rx) = mpsc::unbounded_channel();
    let (pl_tx, pl_rx) = watch::channel(engine.peerlist().clone());
    let idle = Duration::from_millis(config.idle_timeout_ms);

    let accept = tokio::spawn(accept_peers(listener, keys.clone(), pl_rx.clone(), tx.clone(), idle));
    let ctl = tokio::spawn(accept_control(control, tx.clone()));
    let mut rt = Runtime {
        engine,
        keys,
        codec: Codec::default(),
        conns: BTreeMap::new(),
        dialing: BTreeMap::new(),
        next_conn: 1 << 32,
        tx,
        pl_tx,
        pl_rx,
        idle,
        fetches: BTreeMap::new(),
        reconciles: BTreeMap::new(),
        startup_helpers: VecDeque::new(),
    };
    if config.startup_reconcile {
        let mut helpers: Vec<PeerId> = rt
            .engine
            .peerlist()
            .group()
            .into_iter()
            .filter(|p| *p != rt.engine.me())
            .collect();
        helpers.shuffle(&mut rand::thread_rng());
        rt.startup_helpers = helpers.into();
        rt.next_startup_reconcile();
    }
    rt.run(rx).await;
    accept.abort();
    ctl.abort();
    info!("daemon stopped");
    Ok(())
}

struct Conn {
    id: u64,
    tx: mpsc::UnboundedSender<Vec<u8>>,
}

struct Runtime {
    engine: Engine,
    keys: KeyPair,
    codec: Codec,
    conns: BTreeMap<PeerId, Conn>,
    dialing: BTreeMap<PeerId, Vec<Vec<u8>>>,
    next_conn: u64,
    tx: mpsc::UnboundedSender<Input>,
    pl_tx: watch::Sender<Peerlist>,
    pl_rx: watch::Receiver<Peerlist>,
    idle: Duration,
    fetches: BTreeMap<FetchId, oneshot::Sender<Reply>>,
    reconciles: BTreeMap<PeerId, Vec<oneshot::Sender<Reply>>>,
    startup_helpers: VecDeque<PeerId>,
}

impl Runtime {
    async fn run(&mut self, mut rx: mpsc::UnboundedReceiver<Input>) {
        let mut tick = tokio::time::interval(Duration::from_millis(self.engine.config().round_ms.max(10)));
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let mut sigterm = terminate_signal();
        loop {
            tokio::select! {
                _ = tick.tick() => {
                    let acts = self.engine.tick(now_ms());
                    self.apply(acts);
                }
                input = rx.recv() => {
                    let Some(input) = input else { break };
                    if !self.input(input) {
                        break;
                    }
                }
                _ = tokio::signal::ctrl_c() => break,
                _ = sigterm.recv() => break,
            }
        }
    }

    fn next_startup_reconcile(&mut self) {
        while let Some(helper) = self.startup_helpers.pop_front() {
            if let Ok(acts) = self.engine.reconcile(now_ms(), helper) {
                info!(helper = %helper.short(), "startup reconcile");
                self.apply(acts);
                return;
            }
        }
    }

    /// Returns false when the daemon should stop.
    fn input(&mut self, input: Input) -> bool {
        match input {
            Input::Message { from, tag, message } => {
                let acts = self.engine.handle_message(now_ms(), from, tag, message);
                self.apply(acts);
            }
            Input::Connected { peer, conn, tx } => {
                debug!(peer = %peer.short(), conn, "connected");
                for frame in self.dialing.remove(&peer).unwrap_or_default() {
                    let _ = tx.send(frame);
                }
                self.conns.insert(peer, Conn { id: conn, tx });
            }
            Input::Disconnected { peer, conn } => {
                if self.conns.get(&peer).is_some_and(|c| c.id == conn) {
                    self.conns.remove(&peer);
                }
            }
            Input::DialFailed { peer } => {
                if let Some(frames) = self.dialing.remove(&peer) {
                    debug!(peer = %peer.short(), dropped = frames.len(), "dial failed");
                }
            }
            Input::Control { request, reply } => {
                if request == Request::Shutdown {
                    return false;
                }
                self.control(request, reply);
            }
        }
        true
    }

    fn send(&mut self, to: PeerId, tag: Tag, message: Message) {
        let frame = match self.codec.encode(&tag, &message) {
            Ok(f) => f,
            Err(e) => {
                warn!(error = %e, "cannot encode outgoing message");
                return;
            }
        };
        if let Some(conn) = self.conns.get(&to) {
            if conn.tx.send(frame.clone()).is_ok() {
                return;
            }
            self.conns.remove(&to);
        }
        if let Some(queue) = self.dialing.get_mut(&to) {
            queue.push(frame);
            return;
        }
        let Some(addr) = self.engine.peerlist().entry(&to).and_then(|e| e.address.clone()) else {
            debug!(peer = %to.short(), "no address; message dropped");
            return;
        };
        self.dialing.insert(to, vec![frame]);
        self.next_conn += 1;
        tokio::spawn(dial(
            addr,
            to,
            self.next_conn,
            self.keys.clone(),
            self.pl_rx.clone(),
            self.tx.clone(),
            self.idle,
        ));
    }

    fn apply(&mut self, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Send { to, tag, message } => self.send(to, tag, message),
                Action::FetchComplete { fetch, result } => {
                    if let Some(reply) = self.fetches.remove(&fetch) {
                        let _ = reply.send(
                            result
                                .map(|f| f.document.content().to_vec())
                                .map_err(|e| e.to_string()),
                        );
                    }
                }
                Action::ReconcileDone {
                    helper,
                    ok,
                    requested,
                    offered,
                } => {
                    info!(helper = %helper.short(), ok, requested, offered, "reconcile finished");
                    for reply in self.reconciles.remove(&helper).unwrap_or_default() {
                        let _ = reply.send(if ok {
                            Ok(format!("requested {requested}, offered {offered}\n").into_bytes())
                        } else {
                            Err(format!("reconcile with {} failed", helper.short()))
                        });
                    }
                    if !ok {
                        self.next_startup_reconcile();
                    } else {
                        self.startup_helpers.clear();
                    }
                }
                Action::PeerlistInstalled { version } => {
                    info!(version, "peerlist installed");
                    let _ = self.pl_tx.send(self.engine.peerlist().clone());
                }
                Action::Blacklisted { peer } => warn!(peer = %peer, "peer blacklisted"),
                Action::VerificationFailed { from, error } => {
                    warn!(from = %from.short(), error = %error, "verification failed")
                }
                Action::StatusChanged(change) => {
                    debug!(id = %change.id, from = ?change.from, to = ?change.to, "status changed")
                }
                Action::Accepted { id, .. } => debug!(id = %id, "accepted"),
                Action::Signed { doc_ref } => debug!(id = %doc_ref.id(), "signed"),
            }
        }
    }

    fn control(&mut self, request: Request, reply: oneshot::Sender<Reply>) {
        let now = now_ms();
        let result: Reply = match request {
            Request::Inject { path, content } => {
                match base64::engine::general_purpose::STANDARD.decode(content) {
                    Err(e) => Err(format!("bad content encoding: {e}")),
                    Ok(body) => match self.engine.inject(now, &path, body) {
                        Ok((id, acts)) => {
                            self.apply(acts);
                            Ok(format!("{id}\n").into_bytes())
                        }
                        Err(e) => Err(e.to_string()),
                    },
                }
            }
            Request::Get { path, sel, rogues } => {
                let parsed = DocPath::new(path).map_err(|e| e.to_string()).and_then(|p| {
                    sel.parse::<VersionSel>()
                        .map(|s| (p, s))
                        .map_err(|e| e.to_string())
                });
                match parsed {
                    Err(e) => Err(e),
                    Ok((path, sel)) => {
                        let local = self.engine.store().get(&path, sel).map(|sd| sd.document.content().to_vec());
                        match (rogues, local) {
                            (None, Some(content)) => Ok(content),
                            (rogues, _) => {
                                let (fetch, acts) = self.engine.fetch_redundant(now, &path, sel, rogues.unwrap_or(0));
                                self.fetches.insert(fetch, reply);
                                self.apply(acts);
                                return;
                            }
                        }
                    }
                }
            }
            Request::Head { pattern, sel } => match (PathPattern::new(&pattern), sel.parse::<VersionSel>()) {
                (Ok(pattern), Ok(sel)) => {
                    let listing = self.engine.store().list(&pattern, sel, usize::MAX);
                    let mut out = String::new();
                    for sd in listing.entries {
                        out.push_str(&format!(
                            "{} {} {} {}\n",
                            sd.document.path(),
                            sd.document.version(),
                            sd.status,
                            sd.block.len()
                        ));
                    }
                    Ok(out.into_bytes())
                }
                (Err(e), _) => Err(e.to_string()),
                (_, Err(e)) => Err(e.to_string()),
            },
            Request::Status { path, sel } => {
                let lookup = DocPath::new(path).map_err(|e| e.to_string()).and_then(|p| {
                    let sel: VersionSel = sel.parse().map_err(|e: ddnfs_core::document::DocumentError| e.to_string())?;
                    let version = self
                        .engine
                        .store()
                        .get(&p, sel)
                        .map(|sd| sd.document.version())
                        .ok_or_else(|| format!("{p} {sel} not stored"))?;
                    status_report(self.engine.store(), self.engine.peerlist(), &p, version).map_err(|e| e.to_string())
                });
                lookup.map(String::into_bytes)
            }
            Request::Reconcile { peer } => match self.engine.peerlist().resolve(&peer) {
                None => Err(format!("unknown peer {peer:?}")),
                Some(helper) => match self.engine.reconcile(now, helper) {
                    Ok(acts) => {
                        self.reconciles.entry(helper).or_default().push(reply);
                        self.apply(acts);
                        return;
                    }
                    Err(e) => Err(e.to_string()),
                },
            },
            Request::BlacklistShow => {
                let mut out = String::new();
                for (peer, entry) in self.engine.blacklist() {
                    let name = self
                        .engine
                        .peerlist()
                        .entry(peer)
                        .and_then(|e| e.name.clone())
                        .unwrap_or_else(|| "-".into());
                    let reason = match &entry.reason {
                        ddnfs_core::engine::BlacklistReason::Equivocation(ev) => format!("equivocation on {}", ev.id()),
                        ddnfs_core::engine::BlacklistReason::InvalidOffer(e) => format!("invalid offer: {e}"),
                    };
                    out.push_str(&format!("{} {} since {} {}\n", peer.to_hex(), name, entry.since, reason));
                }
                Ok(out.into_bytes())
            }
            Request::Shutdown => Ok(Vec::new()),
        };
        let _ = reply.send(result);
    }
}

#[cfg(unix)]
fn terminate_signal() -> tokio::signal::unix::Signal {
    tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()).expect("signal handler")
}

async fn accept_peers(
    listener: TcpListener,
    keys: KeyPair,
    peerlist: watch::Receiver<Peerlist>,
    tx: mpsc::UnboundedSender<Input>,
    idle: Duration,
) {
    let mut conn = 0u64;
    loop {
        let Ok((stream, addr)) = listener.accept().await else { continue };
        conn += 1;
        debug!(%addr, "incoming connection");
        tokio::spawn(connection(stream, None, conn, keys.clone(), peerlist.clone(), tx.clone(), idle));
    }
}

async fn dial(
    addr: String,
    peer: PeerId,
    conn: u64,
    keys: KeyPair,
    peerlist: watch::Receiver<Peerlist>,
    tx: mpsc::UnboundedSender<Input>,
    idle: Duration,
) {
    match tokio::time::timeout(DIAL_TIMEOUT, TcpStream::connect(&addr)).await {
        Ok(Ok(stream)) => connection(stream, Some(peer), conn, keys, peerlist, tx, idle).await,
        _ => {
            let _ = tx.send(Input::DialFailed { peer });
        }
    }
}

/// Authenticates a connection, then shuttles frames until it errors or idles out.
async fn connection(
    stream: TcpStream,
    expected: Option<PeerId>,
    conn: u64,
    keys: KeyPair,
    peerlist: watch::Receiver<Peerlist>,
    tx: mpsc::UnboundedSender<Input>,
    idle: Duration,
) {
    let _ = stream.set_nodelay(true);
    let (r, mut w) = stream.into_split();
    let mut reader = BufReader::new(r);
    let pl = peerlist.borrow().clone();
    let peer = match tokio::time::timeout(HANDSHAKE_TIMEOUT, handshake(&mut reader, &mut w, &keys, &pl, expected)).await {
        Ok(Ok(peer)) => peer,
        Ok(Err(e)) => {
            debug!(error = %e, "handshake failed");
            if let Some(peer) = expected {
                let _ = tx.send(Input::DialFailed { peer });
            }
            return;
        }
        Err(_) => {
            if let Some(peer) = expected {
                let _ = tx.send(Input::DialFailed { peer });
            }
            return;
        }
    };
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Vec<u8>>();
    if tx.send(Input::Connected { peer, conn, tx: out_tx }).is_err() {
        return;
    }
    let mut decoder = FrameDecoder::default();
    let mut buf = vec![0u8; 64 * 1024];
    let mut deadline = tokio::time::Instant::now() + idle;
    loop {
        tokio::select! {
            read = reader.read(&mut buf) => {
                let n = match read {
                    Ok(0) | Err(_) => break,
                    Ok(n) => n,
                };
                deadline = tokio::time::Instant::now() + idle;
                decoder.push(&buf[..n]);
                loop {
                    match decoder.next_frame() {
                        Ok(Some((tag, message))) => {
                            let _ = tx.send(Input::Message { from: peer, tag, message });
                        }
                        Ok(None) => break,
                        Err(e) => {
                            warn!(peer = %peer.short(), error = %e, "bad frame; closing");
                            let _ = tx.send(Input::Disconnected { peer, conn });
                            return;
                        }
                    }
                }
            }
            frame = out_rx.recv() => {
                let Some(frame) = frame else { break };
                deadline = tokio::time::Instant::now() + idle;
                if w.write_all(&frame).await.is_err() {
                    break;
                }
            }
            _ = tokio::time::sleep_until(deadline) => {
                debug!(peer = %peer.short(), "idle; closing");
                break;
            }
        }
    }
    let _ = tx.send(Input::Disconnected { peer, conn });
}

async fn accept_control(listener: TcpListener, tx: mpsc::UnboundedSender<Input>) {
    loop {
        let Ok((stream, _)) = listener.accept().await else { continue };
        let tx = tx.clone();
        tokio::spawn(async move {
            let (r, mut w) = stream.into_split();
            let mut reader = BufReader::new(r);
            let reply = match control::read_request(&mut reader).await {
                Ok(Request::Shutdown) => {
                    // Answer first: the process exits as soon as the engine stops.
                    let _ = control::write_reply(&mut w, &Ok(b"stopping\n".to_vec())).await;
                    let _ = w.shutdown().await;
                    let (reply_tx, _) = oneshot::channel();
                    let _ = tx.send(Input::Control { request: Request::Shutdown, reply: reply_tx });
                    return;
                }
                Ok(request) => {
                    let (reply_tx, reply_rx) = oneshot::channel();
                    if tx.send(Input::Control { request, reply: reply_tx }).is_err() {
                        Err("daemon is stopping".to_string())
                    } else {
                        reply_rx.await.unwrap_or_else(|_| Err("daemon is stopping".into()))
                    }
                }
                Err(e) => Err(e.to_string()),
            };
            let _ = control::write_reply(&mut w, &reply).await;
            let _ = w.shutdown().await;
        });
    }
}

