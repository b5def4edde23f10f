//! Simulation setup and the scenario file format.
//!
//! ```text
//! # key = value settings
//! peers = 16
//! seed = 7
//! quorum = 9
//! delivery = 0.9
//! latency = 10..120
//! max_rounds = 50
//! adversary P3 = silent-drop
//! adversary P4 = flood 100 5
//! link P1 P2 = 0.5
//! offline P5 = 0..20
//! at 0 inject P1 /docs/a hello
//! at 3 fetch P2 /docs/a @ 2
//! at 21 reconcile P5 P1
//! expect coverage >= 1.0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use ddnfs_core::{DocPath, EngineConfig, VersionSel};
use thiserror::Error;

use crate::scenario::Predicate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

/// How a simulated peer deviates from the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    /// Never sends anything.
    SilentDrop,
    /// Answers GET for `@` or `*` with the oldest version it holds.
    StaleServe,
    /// Forwards only its own record and the chain it depends on.
    StripOffers,
    /// Its injections go out as two different documents under one name.
    Equivocate,
    /// Injects `per_round` documents in each of its first `rounds` rounds.
    Flood { per_round: usize, rounds: u64 },
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize, default: u64| -> Result<u64, String> {
            words
                .get(i)
                .map_or(Ok(default), |w| w.parse().map_err(|_| format!("bad number {w:?}")))
        };
        match words.first().copied() {
            Some("honest") => Ok(Behavior::Honest),
            Some("silent-drop") => Ok(Behavior::SilentDrop),
            Some("stale-serve") => Ok(Behavior::StaleServe),
            Some("strip-offers") => Ok(Behavior::StripOffers),
            Some("equivocate") => Ok(Behavior::Equivocate),
            Some("flood") => Ok(Behavior::Flood {
                per_round: num(1, 100)? as usize,
                rounds: num(2, 5)?,
            }),
            _ => Err(format!("unknown behavior {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadKind {
    Inject { peer: usize, path: DocPath, body: Vec<u8> },
    Fetch { peer: usize, path: DocPath, sel: VersionSel, rogues: usize },
    Reconcile { peer: usize, helper: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadEvent {
    pub round: u64,
    pub kind: WorkloadKind,
}

/// Links between `members` and everyone else are down during `[from, to)` rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub from: u64,
    pub to: u64,
    pub members: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub peers: usize,
    pub admins: usize,
    pub seed: u64,
    /// Policy text; `None` leaves only the default quorum rule.
    pub policy: Option<String>,
    pub adversaries: BTreeMap<usize, Behavior>,
    pub delivery: f64,
    pub link_delivery: BTreeMap<(usize, usize), f64>,
    /// Uniform one-way latency range in milliseconds.
    pub latency_ms: (u64, u64),
    pub partitions: Vec<Partition>,
    pub engine: EngineConfig,
    pub max_rounds: u64,
    pub workload: Vec<WorkloadEvent>,
    pub expectations: Vec<Predicate>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            peers: 8,
            admins: 0,
            seed: 0,
            policy: None,
            adversaries: BTreeMap::new(),
            delivery: 1.0,
            link_delivery: BTreeMap::new(),
            latency_ms: (10, 100),
            partitions: Vec::new(),
            engine: EngineConfig::default(),
            max_rounds: 50,
            workload: Vec::new(),
            expectations: Vec::new(),
        }
    }
}

/// Policy with a single catch-all rule requiring `k` signatures among all peers.
pub fn quorum_policy(peers: usize, k: usize) -> String {
    let names: Vec<String> = (1..=peers).map(|i| format!("P{i}")).collect();
    format!("path /** {{ authors: any; active: quorum({k}, {{{}}}); }}", names.join(","))
}

impl SimConfig {
    pub fn behavior(&self, peer: usize) -> Behavior {
        self.adversaries.get(&peer).copied().unwrap_or(Behavior::Honest)
    }

    pub fn is_correct(&self, peer: usize) -> bool {
        self.behavior(peer) == Behavior::Honest
    }

    /// Total simulated nodes; admins follow the peers.
    pub fn nodes(&self) -> usize {
        self.peers + self.admins
    }

    pub fn inject(&mut self, round: u64, peer: usize, path: &str, body: &[u8]) -> &mut Self {
        self.workload.push(WorkloadEvent {
            round,
            kind: WorkloadKind::Inject {
                peer,
                path: DocPath::new(path).expect("valid path"),
                body: body.to_vec(),
            },
        });
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.peers == 0 {
            return invalid("at least one peer is required".into());
        }
        if !(0.0..=1.0).contains(&self.delivery) || self.link_delivery.values().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("delivery probabilities must lie in [0, 1]".into());
        }
        if self.latency_ms.0 > self.latency_ms.1 {
            return invalid("latency range is reversed".into());
        }
        if self.engine.round_ms == 0 {
            return invalid("round_ms must be positive".into());
        }
        let n = self.nodes();
        let bad_peer = |p: &usize| *p >= n;
        if self.adversaries.keys().any(|p| *p >= self.peers) {
            return invalid("adversaries must be ordinary peers".into());
        }
        for e in &self.workload {
            let ok = match &e.kind {
                WorkloadKind::Inject { peer, .. } | WorkloadKind::Fetch { peer, .. } => !bad_peer(peer),
                WorkloadKind::Reconcile { peer, helper } => !bad_peer(peer) && !bad_peer(helper) && peer != helper,
            };
            if !ok {
                return invalid(format!("workload event at round {} names an unknown peer", e.round));
            }
        }
        if self.partitions.iter().any(|p| p.members.iter().any(bad_peer) || p.from > p.to) {
            return invalid("bad partition".into());
        }
        Ok(())
    }

    /// Parses the scenario text format shown in the module documentation.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::default();
        let mut quorum = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "at" => cfg.workload.push(parse_event(&words, line_no, cfg.peers)?),
                "expect" => cfg.expectations.push(
                    line["expect".len()..]
                        .trim()
                        .parse()
                        .map_err(|m: String| parse_err(line_no, m))?,
                ),
                _ => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
                    apply_setting(&mut cfg, &mut quorum, key.trim(), value.trim(), line_no)?;
                }
            }
        }
        if let Some(k) = quorum {
            if cfg.policy.is_some() {
                return Err(ConfigError::Invalid("both quorum and policy given".into()));
            }
            cfg.policy = Some(quorum_policy(cfg.peers, k));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `P3` is peer index 2; `A1` is the first admin, numbered after the peers.
fn parse_peer(word: &str, line: usize, peers: usize) -> Result<usize, ConfigError> {
    let bad = || parse_err(line, format!("bad peer name {word:?}"));
    let (kind, num) = word.split_at(1.min(word.len()));
    let n: usize = num.parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    match kind {
        "P" => Ok(n - 1),
        "A" => Ok(peers + n - 1),
        _ => Err(bad()),
    }
}

fn parse_range(value: &str, line: usize) -> Result<(u64, u64), ConfigError> {
    let (a, b) = value
        .split_once("..")
        .ok_or_else(|| parse_err(line, "expected a..b"))?;
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| parse_err(line, format!("bad number {s:?}")));
    Ok((num(a)?, num(b)?))
}

fn apply_setting(
    cfg: &mut SimConfig,
    quorum: &mut Option<usize>,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ConfigError> {
    fn num<T: FromStr>(value: &str, line: usize) -> Result<T, ConfigError> {
        value.parse().map_err(|_| parse_err(line, format!("bad value {value:?}")))
    }
    let key_words: Vec<&str> = key.split_whitespace().collect();
    match key_words.as_slice() {
        ["peers"] => cfg.peers = num(value, line)?,
        ["admins"] => cfg.admins = num(value, line)?,
        ["seed"] => cfg.seed = num(value, line)?,
        ["quorum"] => *quorum = Some(num(value, line)?),
        ["policy"] => cfg.policy = Some(value.to_string()),
        ["delivery"] => cfg.delivery = num(value, line)?,
        ["latency"] => cfg.latency_ms = parse_range(value, line)?,
        ["max_rounds"] => cfg.max_rounds = num(value, line)?,
        ["round_ms"] => cfg.engine.round_ms = num(value, line)?,
        ["fanout"] => cfg.engine.fanout = num(value, line)?,
        ["initial_fanout"] => cfg.engine.initial_fanout = num(value, line)?,
        ["bucket"] => cfg.engine.bucket_capacity = num(value, line)?,
        ["refill"] => cfg.engine.refill_per_window = num(value, line)?,
        ["rate_window_ms"] => cfg.engine.rate_window_ms = num(value, line)?,
        ["adversary", who] => {
            let peer = parse_peer(who, line, cfg.peers)?;
            let b = value.parse().map_err(|m: String| parse_err(line, m))?;
            cfg.adversaries.insert(peer, b);
        }
        ["link", a, b] => {
            let (a, b) = (parse_peer(a, line, cfg.peers)?, parse_peer(b, line, cfg.peers)?);
            let p = num(value, line)?;
            cfg.link_delivery.insert((a, b), p);
            cfg.link_delivery.insert((b, a), p);
        }
        ["offline", who] => {
            let (from, to) = parse_range(value, line)?;
            cfg.partitions.push(Partition {
                from,
                to,
                members: [parse_peer(who, line, cfg.peers)?].into(),
            });
        }
        ["partition", ..] => {
            let (from, to) = parse_range(value, line)?;
            let members = key_words[1..]
                .iter()
                .map(|w| parse_peer(w, line, cfg.peers))
                .collect::<Result<_, _>>()?;
            cfg.partitions.push(Partition { from, to, members });
        }
        _ => return Err(parse_err(line, format!("unknown setting {key:?}"))),
    }
    Ok(())
}

/// Admin names resolve against the `peers` setting seen so far.
fn parse_event(words: &[&str], line: usize, peers: usize) -> Result<WorkloadEvent, ConfigError> {
    let peer = |w: &str| parse_peer(w, line, peers);
    let round: u64 = words
        .get(1)
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| parse_err(line, "expected: at <round> <event>"))?;
    let path = |w: Option<&&str>| {
        w.and_then(|p| DocPath::new(*p).ok())
            .ok_or_else(|| parse_err(line, "bad document path"))
    };
    let kind = match words.get(2).copied() {
        Some("inject") if words.len() >= 5 => WorkloadKind::Inject {
            peer: peer(words[3])?,
            path: path(words.get(4))?,
            body: words[5..].join(" ").into_bytes(),
        },
        Some("fetch") if words.len() >= 6 => WorkloadKind::Fetch {
            peer: peer(words[3])?,
            path: path(words.get(4))?,
            sel: words[5].parse().map_err(|_| parse_err(line, "bad version selector"))?,
            rogues: words
                .get(6)
                .map_or(Ok(0), |w| w.parse().map_err(|_| parse_err(line, "bad rogue count")))?,
        },
        Some("reconcile") if words.len() == 5 => WorkloadKind::Reconcile {
            peer: peer(words[3])?,
            helper: peer(words[4])?,
        },
        _ => return Err(parse_err(line, "unknown or incomplete event")),
    };
    Ok(WorkloadEvent { round, kind })
}
