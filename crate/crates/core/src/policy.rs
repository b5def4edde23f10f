//! The peerlist document: group membership, administrators and policy.
//!
//! Policy text is a sequence of rules, first match wins:
//!
//! ```text
//! # comments run to end of line
//! path /logs/** { authors: P1, P2; active: quorum(3, {P1,P2,P3,P4}) and admin(A1); }
//! ```
//!
//! Peers are referred to by the optional name given in their peerlist line or
//! by their full fingerprint in hex. Negation is rejected so that activation
//! is monotone in the set of collected signatures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use base64::Engine as _;
use thiserror::Error;

use crate::crypto::{PeerId, PublicKey};
use crate::document::{DocPath, Document, PathPattern};
use crate::signature::{KeyDirectory, SignatureBlock};

pub const PEERLIST_HEADER: &str = "ddnfs-peerlist v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("line {line}: syntax error: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("line {line}: unknown peer {reference:?}")]
    UnknownPeerRef { line: usize, reference: String },
    #[error("line {line}: {reference:?} is not an administrator")]
    NotAdminRef { line: usize, reference: String },
    #[error("line {line}: bad path pattern {pattern:?}")]
    BadPattern { line: usize, pattern: String },
    #[error("originator {0:?} is not an administrator in the current peerlist")]
    NotAdmin(Option<PeerId>),
    #[error("candidate version {candidate} is not newer than current {current}")]
    VersionNotNewer { current: u64, candidate: u64 },
    #[error("peerlist parse error: {0}")]
    ParseError(String),
    #[error("document is not the peerlist")]
    NotPeerlist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Peer,
    Admin,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Peer => "peer",
            Role::Admin => "admin",
        })
    }
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "peer" => Ok(Role::Peer),
            "admin" => Ok(Role::Admin),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerEntry {
    pub id: PeerId,
    pub public_key: PublicKey,
    pub role: Role,
    /// `host:port`; administrators may have none.
    pub address: Option<String>,
    pub name: Option<String>,
}

pub type PeerTable = BTreeMap<PeerId, PeerEntry>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Authors {
    Any,
    Only(BTreeSet<PeerId>),
}

impl Authors {
    pub fn allows(&self, originator: &PeerId) -> bool {
        match self {
            Authors::Any => true,
            Authors::Only(set) => set.contains(originator),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActivenessExpr {
    Signed(PeerId),
    Quorum(usize, BTreeSet<PeerId>),
    Admin(PeerId),
    And(Box<ActivenessExpr>, Box<ActivenessExpr>),
    Or(Box<ActivenessExpr>, Box<ActivenessExpr>),
    /// Never produced by the parser; kept for programmatic expressions.
    Not(Box<ActivenessExpr>),
}

impl ActivenessExpr {
    pub fn eval(&self, signers: &BTreeSet<PeerId>, peers: &PeerTable) -> bool {
        match self {
            ActivenessExpr::Signed(p) => signers.contains(p),
            ActivenessExpr::Quorum(k, set) => set.intersection(signers).count() >= *k,
            ActivenessExpr::Admin(a) => {
                signers.contains(a) && peers.get(a).is_some_and(|e| e.role == Role::Admin)
            }
            ActivenessExpr::And(a, b) => a.eval(signers, peers) && b.eval(signers, peers),
            ActivenessExpr::Or(a, b) => a.eval(signers, peers) || b.eval(signers, peers),
            ActivenessExpr::Not(a) => !a.eval(signers, peers),
        }
    }

    /// Evaluation trace, one line per atom, e.g. `quorum 2/3 of 4 peers: no`.
    pub fn explain(&self, signers: &BTreeSet<PeerId>, peers: &PeerTable, out: &mut Vec<String>) {
        let yn = |b: bool| if b { "yes" } else { "no" };
        match self {
            ActivenessExpr::Signed(p) => {
                out.push(format!("signed({}): {}", display_id(p, peers), yn(signers.contains(p))))
            }
            ActivenessExpr::Quorum(k, set) => {
                let have = set.intersection(signers).count();
                out.push(format!(
                    "quorum {}/{} of {} peers: {}",
                    have.min(*k),
                    k,
                    set.len(),
                    yn(have >= *k)
                ));
            }
            ActivenessExpr::Admin(a) => {
                out.push(format!("admin({}): {}", display_id(a, peers), yn(self.eval(signers, peers))))
            }
            ActivenessExpr::And(a, b) | ActivenessExpr::Or(a, b) => {
                a.explain(signers, peers, out);
                b.explain(signers, peers, out);
            }
            ActivenessExpr::Not(a) => a.explain(signers, peers, out),
        }
    }

    pub fn render(&self, peers: &PeerTable) -> String {
        match self {
            ActivenessExpr::Signed(p) => format!("signed({})", display_id(p, peers)),
            ActivenessExpr::Admin(p) => format!("admin({})", display_id(p, peers)),
            ActivenessExpr::Quorum(k, set) => format!("quorum({k}, {{{}}})", render_ids(set, peers)),
            ActivenessExpr::And(a, b) => format!("({} and {})", a.render(peers), b.render(peers)),
            ActivenessExpr::Or(a, b) => format!("({} or {})", a.render(peers), b.render(peers)),
            ActivenessExpr::Not(a) => format!("not {}", a.render(peers)),
        }
    }
}

fn display_id(id: &PeerId, peers: &PeerTable) -> String {
    peers
        .get(id)
        .and_then(|e| e.name.clone())
        .unwrap_or_else(|| id.to_hex())
}

fn render_ids(ids: &BTreeSet<PeerId>, peers: &PeerTable) -> String {
    ids.iter().map(|p| display_id(p, peers)).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRule {
    pub pattern: PathPattern,
    pub authors: Authors,
    pub active: ActivenessExpr,
}

impl PolicyRule {
    pub fn render(&self, peers: &PeerTable) -> String {
        let authors = match &self.authors {
            Authors::Any => "any".to_string(),
            Authors::Only(set) => render_ids(set, peers),
        };
        format!(
            "path {} {{ authors: {}; active: {}; }}",
            self.pattern,
            authors,
            self.active.render(peers)
        )
    }
}

/// Result of rule lookup for a path.
#[derive(Debug, Clone, Copy)]
pub struct RuleMatch<'a> {
    pub rule: &'a PolicyRule,
    pub is_default: bool,
}

/// Majority of the ordinary peers: `ceil((n + 1) / 2)`.
pub fn default_quorum(n: usize) -> usize {
    (n + 2) / 2
}

/// Parsed policy plus the default rule for unmatched paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    rules: Vec<PolicyRule>,
    default_rule: PolicyRule,
}

impl Policy {
    pub fn new(rules: Vec<PolicyRule>, peers: &PeerTable) -> Self {
        let group: BTreeSet<PeerId> = peers
            .values()
            .filter(|e| e.role == Role::Peer)
            .map(|e| e.id)
            .collect();
        let default_rule = PolicyRule {
            pattern: PathPattern::everything(),
            authors: Authors::Any,
            active: ActivenessExpr::Quorum(default_quorum(group.len()), group),
        };
        Policy {
            rules,
            default_rule,
        }
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }

    pub fn match_rule(&self, path: &DocPath) -> RuleMatch<'_> {
        match self.rules.iter().find(|r| r.pattern.matches(path)) {
            Some(rule) => RuleMatch {
                rule,
                is_default: false,
            },
            None => RuleMatch {
                rule: &self.default_rule,
                is_default: true,
            },
        }
    }

    pub fn authorized_author(&self, path: &DocPath, originator: &PeerId) -> bool {
        self.match_rule(path).rule.authors.allows(originator)
    }

    pub fn is_active(&self, path: &DocPath, block: &SignatureBlock, peers: &PeerTable) -> bool {
        self.match_rule(path).rule.active.eval(&block.signers(), peers)
    }
}

// ---------------------------------------------------------------------------
// Policy text parser

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Punct(char),
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    last_line: usize,
}

const PUNCT: &[char] = &['{', '}', '(', ')', ';', ':', ','];

impl Lexer {
    fn new(text: &str) -> Self {
        let mut toks = Vec::new();
        let mut last_line = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("");
            let mut word = String::new();
            for ch in content.chars() {
                if ch.is_whitespace() || PUNCT.contains(&ch) {
                    if !word.is_empty() {
                        toks.push((Tok::Word(std::mem::take(&mut word)), line));
                    }
                    if !ch.is_whitespace() {
                        toks.push((Tok::Punct(ch), line));
                    }
                } else {
                    word.push(ch);
                }
            }
            if !word.is_empty() {
                toks.push((Tok::Word(word), line));
            }
        }
        Lexer {
            toks,
            pos: 0,
            last_line,
        }
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map_or(self.last_line, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn err(&self, message: impl Into<String>) -> PolicyError {
        PolicyError::SyntaxError {
            line: self.line(),
            message: message.into(),
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), PolicyError> {
        match self.peek() {
            Some(Tok::Punct(p)) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            other => Err(self.err(format!("expected {c:?}, found {}", describe(other)))),
        }
    }

    fn word(&mut self) -> Result<String, PolicyError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            other => Err(self.err(format!("expected a word, found {}", describe(other)))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), PolicyError> {
        let line = self.line();
        let w = self.word()?;
        if w.eq_ignore_ascii_case(kw) {
            Ok(())
        } else {
            Err(PolicyError::SyntaxError {
                line,
                message: format!("expected {kw:?}, found {w:?}"),
            })
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }
}

fn describe(t: Option<&Tok>) -> String {
    match t {
        None => "end of input".into(),
        Some(Tok::Word(w)) => format!("{w:?}"),
        Some(Tok::Punct(c)) => format!("{c:?}"),
    }
}

struct Parser<'a> {
    lex: Lexer,
    peers: &'a PeerTable,
}

impl Parser<'_> {
    fn resolve(&self, reference: &str, line: usize) -> Result<PeerId, PolicyError> {
        resolve_peer(self.peers, reference).ok_or_else(|| PolicyError::UnknownPeerRef {
            line,
            reference: reference.to_string(),
        })
    }

    fn id(&mut self) -> Result<PeerId, PolicyError> {
        let line = self.lex.line();
        let w = self.lex.word()?;
        self.resolve(&w, line)
    }

    fn id_list(&mut self) -> Result<BTreeSet<PeerId>, PolicyError> {
        let mut ids = BTreeSet::new();
        loop {
            ids.insert(self.id()?);
            if self.lex.peek() == Some(&Tok::Punct(',')) {
                self.lex.pos += 1;
            } else {
                return Ok(ids);
            }
        }
    }

    fn rule(&mut self) -> Result<PolicyRule, PolicyError> {
        self.lex.keyword("path")?;
        let line = self.lex.line();
        let glob = self.lex.word()?;
        let pattern = PathPattern::new(&glob).map_err(|_| PolicyError::BadPattern {
            line,
            pattern: glob.clone(),
        })?;
        self.lex.expect_punct('{')?;
        let mut authors = None;
        let mut active = None;
        while self.lex.peek() != Some(&Tok::Punct('}')) {
            let line = self.lex.line();
            let key = self.lex.word()?.to_ascii_lowercase();
            self.lex.expect_punct(':')?;
            match key.as_str() {
                "authors" if authors.is_none() => {
                    authors = Some(if self.lex.peek_keyword("any") {
                        self.lex.pos += 1;
                        Authors::Any
                    } else {
                        Authors::Only(self.id_list()?)
                    });
                }
                "active" if active.is_none() => active = Some(self.expr()?),
                _ => {
                    return Err(PolicyError::SyntaxError {
                        line,
                        message: format!("unexpected or repeated clause {key:?}"),
                    })
                }
            }
            self.lex.expect_punct(';')?;
        }
        self.lex.expect_punct('}')?;
        match (authors, active) {
            (Some(authors), Some(active)) => Ok(PolicyRule {
                pattern,
                authors,
                active,
            }),
            _ => Err(PolicyError::SyntaxError {
                line,
                message: "rule needs both an authors and an active clause".into(),
            }),
        }
    }

    fn expr(&mut self) -> Result<ActivenessExpr, PolicyError> {
        let mut left = self.conjunction()?;
        while self.lex.peek_keyword("or") {
            self.lex.pos += 1;
            let right = self.conjunction()?;
            left = ActivenessExpr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<ActivenessExpr, PolicyError> {
        let mut left = self.primary()?;
        while self.lex.peek_keyword("and") {
            self.lex.pos += 1;
            let right = self.primary()?;
            left = ActivenessExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn primary(&mut self) -> Result<ActivenessExpr, PolicyError> {
        if self.lex.peek() == Some(&Tok::Punct('(')) {
            self.lex.pos += 1;
            let e = self.expr()?;
            self.lex.expect_punct(')')?;
            return Ok(e);
        }
        let line = self.lex.line();
        let head = self.lex.word()?.to_ascii_lowercase();
        let expr = match head.as_str() {
            "signed" => {
                self.lex.expect_punct('(')?;
                ActivenessExpr::Signed(self.id()?)
            }
            "admin" => {
                self.lex.expect_punct('(')?;
                let id_line = self.lex.line();
                let reference = self.lex.word()?;
                let id = self.resolve(&reference, id_line)?;
                if self.peers[&id].role != Role::Admin {
                    return Err(PolicyError::NotAdminRef {
                        line: id_line,
                        reference,
                    });
                }
                ActivenessExpr::Admin(id)
            }
            "quorum" => {
                self.lex.expect_punct('(')?;
                let k_line = self.lex.line();
                let k: usize = self
                    .lex
                    .word()?
                    .parse()
                    .map_err(|_| PolicyError::SyntaxError {
                        line: k_line,
                        message: "quorum threshold must be a positive integer".into(),
                    })?;
                self.lex.expect_punct(',')?;
                self.lex.expect_punct('{')?;
                let set = self.id_list()?;
                self.lex.expect_punct('}')?;
                if k == 0 || k > set.len() {
                    return Err(PolicyError::SyntaxError {
                        line: k_line,
                        message: format!("quorum threshold {k} outside 1..={}", set.len()),
                    });
                }
                ActivenessExpr::Quorum(k, set)
            }
            "not" => {
                return Err(PolicyError::SyntaxError {
                    line,
                    message: "negation is not permitted in activeness expressions".into(),
                })
            }
            other => {
                return Err(PolicyError::SyntaxError {
                    line,
                    message: format!("unknown atom {other:?}"),
                })
            }
        };
        self.lex.expect_punct(')')?;
        Ok(expr)
    }
}

/// Resolves a peer by name or full hex fingerprint.
pub fn resolve_peer(peers: &PeerTable, reference: &str) -> Option<PeerId> {
    if let Some(e) = peers.values().find(|e| e.name.as_deref() == Some(reference)) {
        return Some(e.id);
    }
    PeerId::from_hex(reference).filter(|id| peers.contains_key(id))
}

pub fn parse_policy(text: &str, peers: &PeerTable) -> Result<Vec<PolicyRule>, PolicyError> {
    let mut p = Parser {
        lex: Lexer::new(text),
        peers,
    };
    let mut rules = Vec::new();
    while p.lex.peek().is_some() {
        rules.push(p.rule()?);
    }
    Ok(rules)
}

// ---------------------------------------------------------------------------
// Peerlist

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Peerlist {
    pub version: u64,
    peers: PeerTable,
    policy_text: String,
    policy: Policy,
}

impl Peerlist {
    pub fn new(version: u64, peers: Vec<PeerEntry>, policy_text: &str) -> Result<Self, PolicyError> {
        let mut table = PeerTable::new();
        let mut names = BTreeSet::new();
        for e in peers {
            if e.public_key.peer_id() != e.id {
                return Err(PolicyError::ParseError(format!(
                    "fingerprint {} does not match its public key",
                    e.id
                )));
            }
            if let Some(addr) = &e.address {
                check_address(addr)?;
            } else if e.role == Role::Peer {
                return Err(PolicyError::ParseError(format!("peer {} needs an address", e.id)));
            }
            if let Some(n) = &e.name {
                let ok = !n.is_empty()
                    && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                if !ok || !names.insert(n.clone()) {
                    return Err(PolicyError::ParseError(format!("bad or duplicate name {n:?}")));
                }
            }
            if table.insert(e.id, e).is_some() {
                return Err(PolicyError::ParseError("duplicate peer".into()));
            }
        }
        if !table.values().any(|e| e.role == Role::Peer) {
            return Err(PolicyError::ParseError("peerlist has no ordinary peer".into()));
        }
        let rules = parse_policy(policy_text, &table)?;
        let policy = Policy::new(rules, &table);
        Ok(Peerlist {
            version,
            peers: table,
            policy_text: policy_text.to_string(),
            policy,
        })
    }

    /// Parses a peerlist body (see [`Peerlist::render`]).
    pub fn parse(version: u64, body: &str) -> Result<Self, PolicyError> {
        let mut lines = body.lines();
        if lines.next().map(str::trim_end) != Some(PEERLIST_HEADER) {
            return Err(PolicyError::ParseError(format!("missing {PEERLIST_HEADER:?} header")));
        }
        let mut entries = Vec::new();
        let mut policy_lines = Vec::new();
        let mut in_policy = false;
        for (i, line) in lines.enumerate() {
            if in_policy {
                policy_lines.push(line);
                continue;
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if t == "policy:" {
                in_policy = true;
                continue;
            }
            entries.push(parse_peer_line(t).map_err(|m| PolicyError::ParseError(format!("line {}: {m}", i + 2)))?);
        }
        Peerlist::new(version, entries, &policy_lines.join("\n"))
    }

    pub fn from_document(doc: &Document) -> Result<Self, PolicyError> {
        if !doc.path().is_peerlist() {
            return Err(PolicyError::NotPeerlist);
        }
        let body = std::str::from_utf8(doc.content())
            .map_err(|_| PolicyError::ParseError("peerlist is not UTF-8".into()))?;
        Peerlist::parse(doc.version(), body)
    }

    pub fn render(&self) -> String {
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut out = format!("{PEERLIST_HEADER}\n");
        for e in self.peers.values() {
            out.push_str(&format!(
                "peer {} {} {} {}",
                e.id.to_hex(),
                e.role,
                e.address.as_deref().unwrap_or("-"),
                b64.encode(e.public_key.0)
            ));
            if let Some(n) = &e.name {
                out.push(' ');
                out.push_str(n);
            }
            out.push('\n');
        }
        out.push_str("policy:\n");
        out.push_str(&self.policy_text);
        if !self.policy_text.is_empty() && !self.policy_text.ends_with('\n') {
            out.push('\n');
        }
        out
    }

    pub fn peers(&self) -> &PeerTable {
        &self.peers
    }

    pub fn entry(&self, id: &PeerId) -> Option<&PeerEntry> {
        self.peers.get(id)
    }

    pub fn role(&self, id: &PeerId) -> Option<Role> {
        self.peers.get(id).map(|e| e.role)
    }

    pub fn is_admin(&self, id: &PeerId) -> bool {
        self.role(id) == Some(Role::Admin)
    }

    /// Ordinary peers: the members that take part in push distribution.
    pub fn group(&self) -> BTreeSet<PeerId> {
        self.peers
            .values()
            .filter(|e| e.role == Role::Peer)
            .map(|e| e.id)
            .collect()
    }

    pub fn resolve(&self, reference: &str) -> Option<PeerId> {
        resolve_peer(&self.peers, reference)
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn policy_text(&self) -> &str {
        &self.policy_text
    }

    pub fn match_rule(&self, path: &DocPath) -> RuleMatch<'_> {
        self.policy.match_rule(path)
    }

    pub fn authorized_author(&self, path: &DocPath, originator: &PeerId) -> bool {
        self.policy.authorized_author(path, originator)
    }

    pub fn is_active(&self, path: &DocPath, block: &SignatureBlock) -> bool {
        self.policy.is_active(path, block, &self.peers)
    }

    /// Human-readable activeness trace for a block.
    pub fn explain(&self, path: &DocPath, block: &SignatureBlock) -> Vec<String> {
        let m = self.match_rule(path);
        let mut out = vec![format!(
            "rule: {}",
            if m.is_default {
                "default".to_string()
            } else {
                m.rule.pattern.to_string()
            }
        )];
        m.rule.active.explain(&block.signers(), &self.peers, &mut out);
        out.push(format!(
            "active: {}",
            if m.rule.active.eval(&block.signers(), &self.peers) { "yes" } else { "no" }
        ));
        out
    }
}

impl KeyDirectory for Peerlist {
    fn public_key(&self, id: &PeerId) -> Option<PublicKey> {
        self.peers.get(id).map(|e| e.public_key)
    }
}

fn check_address(addr: &str) -> Result<(), PolicyError> {
    let bad = || PolicyError::ParseError(format!("bad address {addr:?}, expected host:port"));
    let (host, port) = addr.rsplit_once(':').ok_or_else(bad)?;
    if host.is_empty() || host.chars().any(char::is_whitespace) || port.parse::<u16>().is_err() {
        return Err(bad());
    }
    Ok(())
}

fn parse_peer_line(line: &str) -> Result<PeerEntry, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.first() != Some(&"peer") || !(5..=6).contains(&f.len()) {
        return Err(format!("expected `peer <fp> <role> <addr> <pubkey> [name]`, got {line:?}"));
    }
    let id = PeerId::from_hex(f[1]).ok_or("bad fingerprint")?;
    let role: Role = f[2].parse().map_err(|_| format!("bad role {:?}", f[2]))?;
    let address = (f[3] != "-").then(|| f[3].to_string());
    let key_bytes = base64::engine::general_purpose::STANDARD
        .decode(f[4])
        .map_err(|_| "bad public key encoding")?;
    let public_key = PublicKey::from_slice(&key_bytes).map_err(|_| "bad public key length")?;
    Ok(PeerEntry {
        id,
        public_key,
        role,
        address,
        name: f.get(5).map(|s| s.to_string()),
    })
}

/// Checks a proposed peerlist against the one currently in force and parses it.
/// Authority always comes from `current`, never from the candidate itself.
pub fn validate_peerlist_update(
    current: &Peerlist,
    candidate: &Document,
    block: &SignatureBlock,
) -> Result<Peerlist, PolicyError> {
    if !candidate.path().is_peerlist() {
        return Err(PolicyError::NotPeerlist);
    }
    if candidate.version() <= current.version {
        return Err(PolicyError::VersionNotNewer {
            current: current.version,
            candidate: candidate.version(),
        });
    }
    let originator = block.originator().map(|r| r.signer);
    if !originator.is_some_and(|o| current.is_admin(&o)) {
        return Err(PolicyError::NotAdmin(originator));
    }
    Peerlist::from_document(candidate).map_err(|e| match e {
        PolicyError::ParseError(m) => PolicyError::ParseError(m),
        other => PolicyError::ParseError(other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyPair};
    use crate::document::make_document;
    use crate::signature::sign_document;
    use proptest::prelude::*;

    fn keys(n: usize, base: u8) -> Vec<KeyPair> {
        (0..n)
            .map(|i| generate_keypair(Some(&[base + i as u8; 32])).unwrap())
            .collect()
    }

    /// Peers P1..P4 plus administrator A1.
    fn table() -> (Vec<KeyPair>, KeyPair, PeerTable) {
        let ks = keys(4, 10);
        let admin = generate_keypair(Some(&[99; 32])).unwrap();
        let mut t = PeerTable::new();
        for (i, k) in ks.iter().enumerate() {
            t.insert(
                k.peer_id(),
                PeerEntry {
                    id: k.peer_id(),
                    public_key: *k.public(),
                    role: Role::Peer,
                    address: Some(format!("10.0.0.{}:7000", i + 1)),
                    name: Some(format!("P{}", i + 1)),
                },
            );
        }
        t.insert(
            admin.peer_id(),
            PeerEntry {
                id: admin.peer_id(),
                public_key: *admin.public(),
                role: Role::Admin,
                address: None,
                name: Some("A1".into()),
            },
        );
        (ks, admin, t)
    }

    fn block_signed_by(signers: &[&KeyPair]) -> SignatureBlock {
        let doc = make_document("/logs/x", 1, b"x".to_vec()).unwrap();
        let mut b = SignatureBlock::new(doc.doc_ref());
        let mut parent = None;
        for k in signers {
            let rec = sign_document(k, &doc.doc_ref(), Some(&b), parent).unwrap();
            parent = Some(k.peer_id());
            b.insert(rec).unwrap();
        }
        b
    }

    const LOGS_RULE: &str = "path /logs/** { authors: P1; active: quorum(3, {P1,P2,P3,P4}); }";

    #[test]
    fn parse_single_rule_and_round_trip() {
        let (ks, _, t) = table();
        let rules = parse_policy(LOGS_RULE, &t).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].pattern.as_str(), "/logs/**");
        assert_eq!(rules[0].authors, Authors::Only([ks[0].peer_id()].into_iter().collect()));
        let printed = rules[0].render(&t);
        assert_eq!(parse_policy(&printed, &t).unwrap(), rules);
    }

    #[test]
    fn parse_edge_cases() {
        let (_, _, t) = table();
        assert!(parse_policy("", &t).unwrap().is_empty());
        assert!(parse_policy("# only a comment\n\n", &t).unwrap().is_empty());
        assert!(matches!(
            parse_policy("path /a { authors: any; active: quorum(3, {P9}); }", &t),
            Err(PolicyError::UnknownPeerRef { line: 1, .. })
        ));
        assert!(matches!(
            parse_policy("path /a { authors: any;\n active: not signed(P1); }", &t),
            Err(PolicyError::SyntaxError { line: 2, .. })
        ));
        assert!(matches!(
            parse_policy("path a/b { authors: any; active: signed(P1); }", &t),
            Err(PolicyError::BadPattern { .. })
        ));
        assert!(matches!(
            parse_policy("path /a { authors: any; active: admin(P1); }", &t),
            Err(PolicyError::NotAdminRef { .. })
        ));
        assert!(matches!(
            parse_policy("path /a { authors: any; active: quorum(5, {P1,P2}); }", &t),
            Err(PolicyError::SyntaxError { .. })
        ));
        assert!(matches!(
            parse_policy("path /a { authors: any; }", &t),
            Err(PolicyError::SyntaxError { .. })
        ));
        let multi = "path /a/*\n{\n  authors: P1, P2;\n  active: signed(P1) AND (admin(A1) or quorum(2, {P3, P4}));\n}\n";
        let rules = parse_policy(multi, &t).unwrap();
        assert!(matches!(rules[0].active, ActivenessExpr::And(..)));
    }

    #[test]
    fn match_rule_examples() {
        let (_, _, t) = table();
        let text = format!("{LOGS_RULE}\npath /logs/special {{ authors: any; active: signed(P2); }}");
        let policy = Policy::new(parse_policy(&text, &t).unwrap(), &t);
        let m = policy.match_rule(&DocPath::new("/logs/a").unwrap());
        assert!(!m.is_default);
        assert_eq!(m.rule.pattern.as_str(), "/logs/**");
        // first match wins even though the later rule is more specific
        let m = policy.match_rule(&DocPath::new("/logs/special").unwrap());
        assert_eq!(m.rule.pattern.as_str(), "/logs/**");
        let m = policy.match_rule(&DocPath::new("/other").unwrap());
        assert!(m.is_default);
        match &m.rule.active {
            ActivenessExpr::Quorum(k, set) => {
                assert_eq!(*k, 3);
                assert_eq!(set.len(), 4);
            }
            e => panic!("unexpected default {e:?}"),
        }
    }

    #[test]
    fn default_quorum_is_majority() {
        // ceil((n+1)/2) computed directly
        for n in 1..40usize {
            let expected = ((n as f64 + 1.0) / 2.0).ceil() as usize;
            assert_eq!(default_quorum(n), expected, "n={n}");
        }
        assert_eq!(default_quorum(4), 3);
        assert_eq!(default_quorum(16), 9);
    }

    #[test]
    fn authorized_author_examples() {
        let (ks, _, t) = table();
        let policy = Policy::new(parse_policy(LOGS_RULE, &t).unwrap(), &t);
        let logs = DocPath::new("/logs/a").unwrap();
        assert!(policy.authorized_author(&logs, &ks[0].peer_id()));
        assert!(!policy.authorized_author(&logs, &ks[1].peer_id()));
        assert!(policy.authorized_author(&DocPath::new("/free").unwrap(), &ks[1].peer_id()));
    }

    #[test]
    fn is_active_examples() {
        let (ks, admin, t) = table();
        let policy = Policy::new(parse_policy(LOGS_RULE, &t).unwrap(), &t);
        let logs = DocPath::new("/logs/x").unwrap();
        assert!(policy.is_active(&logs, &block_signed_by(&[&ks[0], &ks[1], &ks[2]]), &t));
        assert!(!policy.is_active(&logs, &block_signed_by(&[&ks[0], &ks[1]]), &t));

        let p2_and_admin = ActivenessExpr::And(
            Box::new(ActivenessExpr::Signed(ks[1].peer_id())),
            Box::new(ActivenessExpr::Admin(admin.peer_id())),
        );
        let b = block_signed_by(&[&ks[0], &ks[1]]);
        assert!(!p2_and_admin.eval(&b.signers(), &t));
        let b = block_signed_by(&[&ks[0], &ks[1], &admin]);
        assert!(p2_and_admin.eval(&b.signers(), &t));

        let not_p3 = ActivenessExpr::Not(Box::new(ActivenessExpr::Signed(ks[2].peer_id())));
        assert!(!not_p3.eval(&block_signed_by(&[&ks[0], &ks[2]]).signers(), &t));
    }

    #[test]
    fn explain_shows_quorum_progress() {
        let (ks, _, t) = table();
        let rules = parse_policy(LOGS_RULE, &t).unwrap();
        let pl = Peerlist::new(1, t.values().cloned().collect(), LOGS_RULE).unwrap();
        assert_eq!(pl.policy().rules(), &rules[..]);
        let trace = pl.explain(&DocPath::new("/logs/x").unwrap(), &block_signed_by(&[&ks[0], &ks[1]]));
        assert!(trace.iter().any(|l| l.contains("2/3")), "{trace:?}");
        assert_eq!(trace.last().unwrap(), "active: no");
    }

    #[test]
    fn peerlist_render_parse_round_trip() {
        let (_, _, t) = table();
        let pl = Peerlist::new(3, t.values().cloned().collect(), LOGS_RULE).unwrap();
        let body = pl.render();
        assert!(body.starts_with("ddnfs-peerlist v1\npeer "));
        let back = Peerlist::parse(3, &body).unwrap();
        assert_eq!(back, pl);
        assert_eq!(back.group().len(), 4);
    }

    #[test]
    fn peerlist_rejects_bad_bodies() {
        let (_, _, t) = table();
        let pl = Peerlist::new(1, t.values().cloned().collect(), "").unwrap();
        let body = pl.render();
        assert!(Peerlist::parse(1, &body.replacen("ddnfs-peerlist v1", "nope", 1)).is_err());
        assert!(Peerlist::parse(1, &body.replacen(":7000", ":notaport", 1)).is_err());
        let admins_only: Vec<_> = t.values().filter(|e| e.role == Role::Admin).cloned().collect();
        assert!(Peerlist::new(1, admins_only, "").is_err());
        let mut wrong_fp: Vec<_> = t.values().cloned().collect();
        wrong_fp[0].id = wrong_fp[1].id;
        assert!(Peerlist::new(1, wrong_fp, "").is_err());
    }

    #[test]
    fn peerlist_update_validation() {
        let (ks, admin, t) = table();
        let current = Peerlist::new(2, t.values().cloned().collect(), "").unwrap();
        let body = current.render();
        let signed_by = |kp: &KeyPair, version: u64| {
            let doc = make_document("/peerlist", version, body.clone().into_bytes()).unwrap();
            let mut b = SignatureBlock::new(doc.doc_ref());
            b.insert(sign_document(kp, &doc.doc_ref(), None, None).unwrap()).unwrap();
            (doc, b)
        };
        let (doc, b) = signed_by(&admin, 3);
        let next = validate_peerlist_update(&current, &doc, &b).unwrap();
        assert_eq!(next.version, 3);
        let (doc, b) = signed_by(&ks[0], 3);
        assert_eq!(
            validate_peerlist_update(&current, &doc, &b),
            Err(PolicyError::NotAdmin(Some(ks[0].peer_id())))
        );
        let (doc, b) = signed_by(&admin, 2);
        assert_eq!(
            validate_peerlist_update(&current, &doc, &b),
            Err(PolicyError::VersionNotNewer { current: 2, candidate: 2 })
        );
        let garbage = make_document("/peerlist", 3, b"junk".to_vec()).unwrap();
        let mut gb = SignatureBlock::new(garbage.doc_ref());
        gb.insert(sign_document(&admin, &garbage.doc_ref(), None, None).unwrap()).unwrap();
        assert!(matches!(
            validate_peerlist_update(&current, &garbage, &gb),
            Err(PolicyError::ParseError(_))
        ));
    }

    fn arb_expr(ids: Vec<PeerId>) -> impl Strategy<Value = ActivenessExpr> {
        let n = ids.len();
        let ids2 = ids.clone();
        let leaf = prop_oneof![
            (0..n).prop_map({
                let ids = ids.clone();
                move |i| ActivenessExpr::Signed(ids[i])
            }),
            (proptest::collection::btree_set(0..n, 1..=n), any::<prop::sample::Index>()).prop_map(
                move |(set, k)| {
                    let set: BTreeSet<PeerId> = set.into_iter().map(|i| ids2[i]).collect();
                    let k = k.index(set.len()) + 1;
                    ActivenessExpr::Quorum(k, set)
                }
            ),
        ];
        leaf.prop_recursive(3, 16, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ActivenessExpr::And(Box::new(a), Box::new(b))),
                (inner.clone(), inner).prop_map(|(a, b)| ActivenessExpr::Or(Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn activeness_is_monotone(
            (expr, small, extra) in {
                let (ks, _, _) = table();
                let ids: Vec<PeerId> = ks.iter().map(|k| k.peer_id()).collect();
                (arb_expr(ids.clone()),
                 proptest::sample::subsequence(ids.clone(), 0..=4),
                 proptest::sample::subsequence(ids, 0..=4))
            }
        ) {
            let (_, _, t) = table();
            let s: BTreeSet<PeerId> = small.into_iter().collect();
            let mut bigger = s.clone();
            bigger.extend(extra);
            if expr.eval(&s, &t) {
                prop_assert!(expr.eval(&bigger, &t));
            }
            // printing and reparsing preserves the expression's meaning
            let text = format!("path /m {{ authors: any; active: {}; }}", expr.render(&t));
            let parsed = parse_policy(&text, &t).unwrap();
            prop_assert_eq!(parsed[0].active.eval(&bigger, &t), expr.eval(&bigger, &t));
        }

        #[test]
        fn first_match_stable_for_disjoint_rules(perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
                                                 which in 0usize..4) {
            let (_, _, t) = table();
            let lines = [
                "path /a/** { authors: P1; active: signed(P1); }",
                "path /b/* { authors: P2; active: signed(P2); }",
                "path /c { authors: P3; active: signed(P3); }",
            ];
            let ordered = Policy::new(parse_policy(&lines.join("\n"), &t).unwrap(), &t);
            let shuffled_text: Vec<&str> = perm.iter().map(|&i| lines[i]).collect();
            let shuffled = Policy::new(parse_policy(&shuffled_text.join("\n"), &t).unwrap(), &t);
            let path = DocPath::new(["/a/x/y", "/b/z", "/c", "/d"][which]).unwrap();
            prop_assert_eq!(ordered.match_rule(&path).rule, shuffled.match_rule(&path).rule);
        }
    }
}
