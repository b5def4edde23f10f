//! Discrete-event loop driving a group of simulated peers.

use std::collections::{BTreeMap, BTreeSet};

use ddnfs_core::engine::{Action, EngineConfig, FetchId, Via};
use ddnfs_core::testkit::Group;
use ddnfs_core::{
    Codec, DocPath, DocumentId, DocumentStatus, Engine, MemoryStore, Message, PeerId, Role, Tag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use crate::config::{ConfigError, SimConfig, WorkloadKind};
use crate::metrics::{Detection, DocMetrics, FetchRecord, Metrics, ReconcileRecord};
use crate::node::Node;

enum Event {
    Round(u64),
    Deliver {
        from: usize,
        to: usize,
        tag: Tag,
        message: Box<Message>,
        bytes: u64,
    },
}

#[derive(Default)]
struct Recorder {
    injected: BTreeMap<DocumentId, (usize, u64)>,
    equivocated: BTreeSet<DocumentId>,
    newest_injected: BTreeMap<DocPath, u64>,
    activated: BTreeMap<DocumentId, BTreeMap<usize, u64>>,
    /// offender -> (blacklisting peer -> round)
    blacklists: BTreeMap<usize, BTreeMap<usize, u64>>,
    correct_blacklisted: u64,
    accepts: BTreeMap<(usize, usize, u64), u64>,
    fetches: BTreeMap<(usize, FetchId), usize>,
    fetch_records: Vec<FetchRecord>,
    reconciles: Vec<ReconcileRecord>,
    messages: BTreeMap<String, u64>,
    delivered: u64,
    lost: u64,
    bytes_sent: Vec<u64>,
    bytes_received: Vec<u64>,
}

pub struct Sim {
    config: SimConfig,
    group: Group,
    nodes: Vec<Node>,
    ids: Vec<PeerId>,
    index: BTreeMap<PeerId, usize>,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    rng: ChaCha8Rng,
    codec: Codec,
    now: u64,
    round: u64,
    next_workload: usize,
    rec: Recorder,
    trace: Option<Vec<String>>,
    hasher: Sha256,
    finished: bool,
}

impl Sim {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut config = config;
        config.workload.sort_by_key(|e| e.round);
        let policy = config.policy.clone().unwrap_or_default();
        let group = Group::new(config.peers, config.admins, &policy, config.seed)
            .map_err(|e| ConfigError::Invalid(format!("policy: {e}")))?;
        let keys: Vec<_> = group.peers.iter().chain(&group.admins).cloned().collect();
        let nodes: Vec<Node> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let engine_config = EngineConfig {
                    tag_prefix: 'a',
                    ..config.engine.clone()
                };
                let engine = Engine::new(
                    k.clone(),
                    group.peerlist.clone(),
                    Box::new(MemoryStore::new()),
                    engine_config,
                    config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64,
                );
                Node::new(engine, config.behavior(i), k.clone())
            })
            .collect();
        let ids: Vec<PeerId> = nodes.iter().map(Node::id).collect();
        let index = ids.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let n = nodes.len();
        let mut sim = Sim {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            group,
            nodes,
            ids,
            index,
            queue: BTreeMap::new(),
            seq: 0,
            codec: Codec::default(),
            now: 0,
            round: 0,
            next_workload: 0,
            rec: Recorder {
                bytes_sent: vec![0; n],
                bytes_received: vec![0; n],
                ..Recorder::default()
            },
            trace: None,
            hasher: Sha256::new(),
            finished: false,
        };
        sim.schedule(0, Event::Round(0));
        Ok(sim)
    }

    /// Keeps a human-readable line for every message sent.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut Node {
        &mut self.nodes[i]
    }

    pub fn peer_id(&self, i: usize) -> PeerId {
        self.ids[i]
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    fn name(&self, i: usize) -> String {
        if i < self.config.peers {
            format!("P{}", i + 1)
        } else {
            format!("A{}", i - self.config.peers + 1)
        }
    }

    fn correct(&self) -> Vec<usize> {
        (0..self.config.peers).filter(|i| self.config.is_correct(*i)).collect()
    }

    fn schedule(&mut self, at: u64, event: Event) {
        self.queue.insert((at, self.seq), event);
        self.seq += 1;
    }

    fn link_up(&self, a: usize, b: usize) -> bool {
        !self.config.partitions.iter().any(|p| {
            (p.from..p.to).contains(&self.round) && p.members.contains(&a) != p.members.contains(&b)
        })
    }

    /// Group members other than `me`, with their indices.
    fn targets(&self, me: usize) -> Vec<(usize, PeerId)> {
        (0..self.config.peers).filter(|i| *i != me).map(|i| (i, self.ids[i])).collect()
    }

    /// Hands a message to the network as if sent by node `from`.
    pub fn send_raw(&mut self, from: usize, to: PeerId, tag: Tag, message: Message) {
        self.dispatch(from, vec![Action::Send { to, tag, message }]);
    }

    fn dispatch(&mut self, from: usize, actions: Vec<Action>) {
        let window_ms = self.config.engine.rate_window_ms.max(1);
        for action in actions {
            match action {
                Action::Send { to, tag, message } => {
                    let Some(&to) = self.index.get(&to) else { continue };
                    let Some(message) = self.nodes[from].outbound(message) else { continue };
                    self.transmit(from, to, tag, message);
                }
                Action::StatusChanged(change) if change.to == Some(DocumentStatus::Active) => {
                    self.rec
                        .activated
                        .entry(change.id)
                        .or_default()
                        .entry(from)
                        .or_insert(self.round);
                }
                Action::Blacklisted { peer } => {
                    let Some(&offender) = self.index.get(&peer) else { continue };
                    if !self.config.is_correct(from) || from >= self.config.peers {
                        continue;
                    }
                    if self.config.is_correct(offender) {
                        self.rec.correct_blacklisted += 1;
                    }
                    let round = self.round;
                    self.rec
                        .blacklists
                        .entry(offender)
                        .or_default()
                        .entry(from)
                        .or_insert(round);
                }
                Action::Accepted { id, originator, via } => match via {
                    Via::Inject => {
                        let newest = self.rec.newest_injected.entry(id.path.clone()).or_default();
                        *newest = (*newest).max(id.version);
                        self.rec.injected.insert(id, (from, self.round));
                    }
                    Via::Offer => {
                        if let Some(&o) = self.index.get(&originator) {
                            *self.rec.accepts.entry((from, o, self.now / window_ms)).or_default() += 1;
                        }
                    }
                    Via::Reconcile => {}
                },
                Action::FetchComplete { fetch, result } => {
                    if let Some(&i) = self.rec.fetches.get(&(from, fetch)) {
                        self.rec.fetch_records[i].result = result
                            .map(|f| f.document.version())
                            .map_err(|e| e.to_string());
                    }
                }
                Action::ReconcileDone {
                    helper,
                    ok,
                    requested,
                    offered,
                } => {
                    let helper = self.index.get(&helper).copied().unwrap_or(usize::MAX);
                    self.rec.reconciles.push(ReconcileRecord {
                        peer: from,
                        helper,
                        ok,
                        requested,
                        offered,
                    });
                }
                _ => {}
            }
        }
    }

    fn transmit(&mut self, from: usize, to: usize, tag: Tag, message: Message) {
        let frame = self.codec.encode(&tag, &message).expect("engine messages encode");
        let bytes = frame.len() as u64;
        *self.rec.messages.entry(message.verb().to_string()).or_default() += 1;
        self.rec.bytes_sent[from] += bytes;
        let p = self
            .config
            .link_delivery
            .get(&(from, to))
            .copied()
            .unwrap_or(self.config.delivery);
        let delivered = self.link_up(from, to) && self.rng.gen::<f64>() < p;
        let (lo, hi) = self.config.latency_ms;
        let latency = self.rng.gen_range(lo..=hi).max(1);
        let header_end = frame.windows(2).position(|w| w == b"\r\n").unwrap_or(frame.len());
        let line = format!(
            "{} {}>{} {}{}",
            self.now,
            self.name(from),
            self.name(to),
            String::from_utf8_lossy(&frame[..header_end]),
            if delivered { "" } else { " LOST" }
        );
        self.hasher.update(line.as_bytes());
        self.hasher.update(&frame);
        if let Some(t) = &mut self.trace {
            t.push(line);
        }
        if delivered {
            self.schedule(
                self.now + latency,
                Event::Deliver {
                    from,
                    to,
                    tag,
                    message: Box::new(message),
                    bytes,
                },
            );
        } else {
            self.rec.lost += 1;
        }
    }

    fn idle(&self) -> bool {
        let deliveries = self.queue.values().any(|e| matches!(e, Event::Deliver { .. }));
        let flooding = self
            .nodes
            .iter()
            .any(|n| matches!(n.behavior, crate::config::Behavior::Flood { rounds, .. } if self.round < rounds));
        !deliveries
            && !flooding
            && self.next_workload == self.config.workload.len()
            && self.nodes.iter().all(|n| n.idle(self.round))
    }

    /// Processes one event. Returns false once the run is over.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let Some(((at, _), event)) = self.queue.pop_first() else {
            self.finished = true;
            return false;
        };
        self.now = at;
        match event {
            Event::Round(r) => {
                self.round = r;
                if r >= self.config.max_rounds || (r > 0 && self.idle()) {
                    self.finished = true;
                    return false;
                }
                self.run_workload(r);
                let round_ms = self.config.engine.round_ms;
                for i in 0..self.nodes.len() {
                    let targets = self.targets(i);
                    let acts = self.nodes[i].tick(self.now, r, &targets);
                    self.dispatch(i, acts);
                }
                self.schedule((r + 1) * round_ms, Event::Round(r + 1));
            }
            Event::Deliver {
                from,
                to,
                tag,
                message,
                bytes,
            } => {
                self.rec.delivered += 1;
                self.rec.bytes_received[to] += bytes;
                let acts = self.nodes[to].handle(self.now, (from, self.ids[from]), tag, *message);
                self.dispatch(to, acts);
            }
        }
        true
    }

    fn run_workload(&mut self, round: u64) {
        while let Some(event) = self.config.workload.get(self.next_workload) {
            if event.round > round {
                break;
            }
            let kind = event.kind.clone();
            self.next_workload += 1;
            match kind {
                WorkloadKind::Inject { peer, path, body } => {
                    let targets = self.targets(peer);
                    let equivocates = self.nodes[peer].behavior == crate::config::Behavior::Equivocate;
                    if let Ok((id, acts)) = self.nodes[peer].inject(self.now, round, &path, body, &targets) {
                        if equivocates {
                            self.rec.equivocated.insert(id.clone());
                            self.rec.injected.insert(id, (peer, round));
                        } else if self.nodes[peer].engine.peerlist().role(&self.ids[peer]) == Some(Role::Admin) {
                            let to: Vec<PeerId> = targets.iter().map(|(_, p)| *p).collect();
                            if let Ok(offers) = self.nodes[peer].engine.offer(&id, &to) {
                                self.dispatch(peer, offers);
                            }
                        }
                        self.dispatch(peer, acts);
                    }
                }
                WorkloadKind::Fetch { peer, path, sel, rogues } => {
                    let expected = self.rec.newest_injected.get(&path).copied();
                    self.rec.fetch_records.push(FetchRecord {
                        peer,
                        path: path.to_string(),
                        round,
                        expected,
                        result: Err("pending".into()),
                    });
                    let (fetch, acts) = self.nodes[peer].engine.fetch_redundant(self.now, &path, sel, rogues);
                    self.rec.fetches.insert((peer, fetch), self.rec.fetch_records.len() - 1);
                    self.dispatch(peer, acts);
                }
                WorkloadKind::Reconcile { peer, helper } => {
                    match self.nodes[peer].engine.reconcile(self.now, self.ids[helper]) {
                        Ok(acts) => self.dispatch(peer, acts),
                        Err(_) => self.rec.reconciles.push(ReconcileRecord {
                            peer,
                            helper,
                            ok: false,
                            requested: 0,
                            offered: 0,
                        }),
                    }
                }
            }
        }
    }

    /// Runs to quiescence or the round limit and reports.
    pub fn run_to_end(&mut self) -> Metrics {
        while self.step() {}
        self.metrics()
    }

    pub fn metrics(&self) -> Metrics {
        let correct = self.correct();
        let share = |n: usize| if correct.is_empty() { 1.0 } else { n as f64 / correct.len() as f64 };

        let documents = self
            .rec
            .injected
            .iter()
            .map(|(id, &(originator, injected_round))| {
                let holders: Vec<usize> = correct
                    .iter()
                    .copied()
                    .filter(|c| {
                        self.nodes[*c].engine.store().get_exact(id).is_some_and(|sd| {
                            matches!(sd.status, DocumentStatus::Active | DocumentStatus::Superseded)
                        })
                    })
                    .collect();
                let rounds_to_active = (holders.len() == correct.len()).then(|| {
                    self.rec
                        .activated
                        .get(id)
                        .into_iter()
                        .flatten()
                        .filter(|(p, _)| correct.contains(p))
                        .map(|(_, r)| r.saturating_sub(injected_round))
                        .max()
                        .unwrap_or(0)
                });
                DocMetrics {
                    id: id.to_string(),
                    originator,
                    honest_origin: self.config.is_correct(originator) && !self.rec.equivocated.contains(id),
                    injected_round,
                    rounds_to_active,
                    coverage: share(holders.len()),
                }
            })
            .collect();

        let detections = self
            .rec
            .blacklists
            .iter()
            .map(|(&offender, by)| {
                let eligible = correct.iter().filter(|c| **c != offender).count();
                let first_round = by.values().copied().min().unwrap_or(0);
                Detection {
                    offender,
                    first_round,
                    last_round: (by.len() == eligible).then(|| by.values().copied().max().unwrap_or(0)),
                    blacklisted_by: by.len(),
                    correct_peers: eligible,
                }
            })
            .collect();

        let mut unsafe_activations = 0;
        let mut conflicting_activations = 0;
        for &c in &correct {
            let engine = &self.nodes[c].engine;
            for id in engine.store().document_ids() {
                let Some(sd) = engine.store().get_exact(&id) else { continue };
                if sd.status != DocumentStatus::Active {
                    continue;
                }
                if self.rec.equivocated.contains(&id) {
                    conflicting_activations += 1;
                }
                if !engine.peerlist().is_active(&id.path, &sd.block) {
                    unsafe_activations += 1;
                }
            }
        }

        let mut max_accepts_per_window: BTreeMap<usize, u64> = BTreeMap::new();
        for (&(node, originator, _), &n) in &self.rec.accepts {
            if correct.contains(&node) {
                let m = max_accepts_per_window.entry(originator).or_default();
                *m = (*m).max(n);
            }
        }

        let stats = correct.iter().map(|c| self.nodes[*c].engine.stats());
        let (duplicate_offers, verification_failures) = stats.fold((0, 0), |(d, v), s| {
            (d + s.duplicates, v + s.verification_failures)
        });

        Metrics {
            rounds: self.round,
            documents,
            messages: self.rec.messages.clone(),
            delivered: self.rec.delivered,
            lost: self.rec.lost,
            duplicate_offers,
            verification_failures,
            detections,
            correct_blacklisted: self.rec.correct_blacklisted,
            unsafe_activations,
            conflicting_activations,
            max_accepts_per_window,
            fetches: self.rec.fetch_records.clone(),
            reconciles: self.rec.reconciles.clone(),
            bytes_sent: self.rec.bytes_sent.clone(),
            bytes_received: self.rec.bytes_received.clone(),
            trace_digest: hex::encode(self.hasher.clone().finalize()),
        }
    }
}

/// Runs a complete simulation.
pub fn run(config: &SimConfig) -> Result<Metrics, ConfigError> {
    Ok(Sim::new(config.clone())?.run_to_end())
}
