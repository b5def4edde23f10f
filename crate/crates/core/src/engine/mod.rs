//! Per-peer replication state machine.
//!
//! The engine performs no I/O. Callers feed it messages, timer ticks and
//! local commands together with the current time in milliseconds, and
//! carry out the returned [`Action`]s.

mod campaign;
mod rate;

pub use campaign::{select_targets, Campaign};
pub use rate::TokenBucket;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::{KeyPair, PeerId};
use crate::document::{make_document, DocPath, DocRef, Document, DocumentError, DocumentId, DocumentStatus, PathPattern, VersionSel};
use crate::evidence::Evidence;
use crate::policy::{validate_peerlist_update, Peerlist, Role};
use crate::signature::{merge_blocks, sign_document, verify_block_cached, SignatureBlock, VerifyCache, VerifyError};
use crate::store::{DocumentStore, StatusChange, StoreError, StoredDocument};
use crate::wire::{GetAnswer, HeadStatus, Message, Tag, TagAllocator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Offers per campaign round.
    pub fanout: usize,
    /// Offers in the originator's first round.
    pub initial_fanout: usize,
    pub round_ms: u64,
    /// Rounds a campaign stays dormant after exhausting its targets before
    /// it starts over, while the document is still pending.
    pub rearm_rounds: u64,
    /// Identical offers from the same sender within this span are dropped.
    pub dedup_window_ms: u64,
    pub bucket_capacity: u32,
    pub refill_per_window: u32,
    pub rate_window_ms: u64,
    /// Repeats of one offer per (sender, document) tolerated, as a multiple of the group size.
    pub replay_factor: usize,
    pub get_timeout_ms: u64,
    pub head_cap: usize,
    /// Offers without any signature seen back before a peer is flagged.
    pub suspect_threshold: usize,
    pub tag_prefix: char,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            fanout: 3,
            initial_fanout: 4,
            round_ms: 1000,
            rearm_rounds: 5,
            dedup_window_ms: 2000,
            bucket_capacity: 10,
            refill_per_window: 10,
            rate_window_ms: 60_000,
            replay_factor: 3,
            get_timeout_ms: 3000,
            head_cap: 4096,
            suspect_threshold: 10,
            tag_prefix: 'a',
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("not authorized to author {0}")]
    NotAuthorized(DocPath),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("helper {0:?} is unreachable")]
    HelperUnreachable(PeerId),
    #[error("document {0} not stored")]
    NotFound(DocumentId),
}

/// How a document entered the local store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Via {
    Inject,
    Offer,
    Reconcile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlacklistReason {
    Equivocation(Box<Evidence>),
    InvalidOffer(VerifyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlacklistEntry {
    pub reason: BlacklistReason,
    pub since: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FetchId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("fewer reachable peers than requested")]
    NotEnoughPeers,
    #[error("no peer returned a valid document")]
    AllFailed,
    #[error("conflicting answers; originator {0:?} blacklisted")]
    Inconsistent(PeerId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub document: Document,
    pub block: SignatureBlock,
    /// Peers whose verified answers were received.
    pub answered: Vec<PeerId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send { to: PeerId, tag: Tag, message: Message },
    /// This peer created its signature record for a document.
    Signed { doc_ref: DocRef },
    /// A document entered the local store.
    Accepted { id: DocumentId, originator: PeerId, via: Via },
    StatusChanged(StatusChange),
    Blacklisted { peer: PeerId },
    VerificationFailed { from: PeerId, error: VerifyError },
    FetchComplete { fetch: FetchId, result: Result<Fetched, FetchError> },
    ReconcileDone { helper: PeerId, ok: bool, requested: usize, offered: usize },
    PeerlistInstalled { version: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub offers_received: u64,
    pub duplicates: u64,
    pub replays_dropped: u64,
    pub verification_failures: u64,
    pub rate_deferred: u64,
    pub unauthorized: u64,
    pub missing_sender_record: u64,
    pub conflicts_detected: u64,
    pub races_parked: u64,
    pub conflicting_records: u64,
    pub bad_answers: u64,
    pub timeouts: u64,
    pub gets_sent: u64,
    pub offers_sent: u64,
}

#[derive(Debug, Clone)]
enum Purpose {
    Offer,
    Reconcile,
    Fetch(FetchId),
}

#[derive(Debug, Clone)]
enum Outstanding {
    Get {
        id: DocumentId,
        peer: PeerId,
        sent_at: u64,
        purpose: Purpose,
    },
    Head {
        helper: PeerId,
        sent_at: u64,
    },
}

/// Verified offers for a document not yet stored locally.
#[derive(Debug, Clone)]
struct OfferState {
    block: SignatureBlock,
    first_seen: u64,
    fetching: Option<Tag>,
    tried: BTreeSet<PeerId>,
    via: Via,
}

#[derive(Debug)]
struct FetchState {
    sel: VersionSel,
    path: DocPath,
    pending: BTreeSet<PeerId>,
    answers: Vec<(PeerId, Document, SignatureBlock)>,
}

#[derive(Debug, Default, Clone)]
struct SuspectInfo {
    offered: BTreeSet<DocumentId>,
    signature_seen: bool,
}

pub struct Engine {
    keys: KeyPair,
    me: PeerId,
    peerlist: Peerlist,
    store: Box<dyn DocumentStore>,
    config: EngineConfig,
    rng: ChaCha8Rng,
    tags: TagAllocator,
    campaigns: BTreeMap<DocumentId, Campaign>,
    outstanding: BTreeMap<Tag, Outstanding>,
    offers: BTreeMap<DocumentId, OfferState>,
    blacklist: BTreeMap<PeerId, BlacklistEntry>,
    buckets: BTreeMap<PeerId, TokenBucket>,
    seen: HashMap<(PeerId, [u8; 32]), u64>,
    replays: HashMap<(PeerId, DocumentId), usize>,
    suspects: BTreeMap<PeerId, SuspectInfo>,
    fetches: BTreeMap<FetchId, FetchState>,
    next_fetch: u64,
    cache: VerifyCache,
    stats: EngineStats,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("me", &self.me)
            .field("campaigns", &self.campaigns.len())
            .field("outstanding", &self.outstanding.len())
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// A newer active peerlist found in `store` replaces `peerlist`.
    pub fn new(
        keys: KeyPair,
        peerlist: Peerlist,
        store: Box<dyn DocumentStore>,
        config: EngineConfig,
        seed: u64,
    ) -> Self {
        let mut peerlist = peerlist;
        if let Some(sd) = store.get(&DocPath::peerlist(), VersionSel::Active) {
            if let Ok(pl) = Peerlist::from_document(&sd.document) {
                if pl.version > peerlist.version {
                    peerlist = pl;
                }
            }
        }
        let blacklist = store
            .all_evidence()
            .into_iter()
            .map(|ev| {
                (
                    ev.offender(),
                    BlacklistEntry {
                        reason: BlacklistReason::Equivocation(Box::new(ev.clone())),
                        since: 0,
                    },
                )
            })
            .collect();
        let me = keys.peer_id();
        let tags = TagAllocator::new(config.tag_prefix);
        let mut engine = Engine {
            keys,
            me,
            peerlist,
            store,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tags,
            campaigns: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            offers: BTreeMap::new(),
            blacklist,
            buckets: BTreeMap::new(),
            seen: HashMap::new(),
            replays: HashMap::new(),
            suspects: BTreeMap::new(),
            fetches: BTreeMap::new(),
            next_fetch: 0,
            cache: VerifyCache::new(),
            stats: EngineStats::default(),
        };
        if engine.is_peer() {
            for id in engine.store.document_ids() {
                let pending = engine
                    .store
                    .get_exact(&id)
                    .is_some_and(|sd| sd.status == DocumentStatus::Pending);
                if pending {
                    let fanout = engine.config.fanout;
                    engine.campaigns.insert(id, Campaign::new(fanout, false, 0));
                }
            }
        }
        engine
    }

    pub fn me(&self) -> PeerId {
        self.me
    }

    pub fn peerlist(&self) -> &Peerlist {
        &self.peerlist
    }

    pub fn store(&self) -> &dyn DocumentStore {
        self.store.as_ref()
    }

    pub fn store_mut(&mut self) -> &mut dyn DocumentStore {
        self.store.as_mut()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn blacklist(&self) -> &BTreeMap<PeerId, BlacklistEntry> {
        &self.blacklist
    }

    pub fn is_blacklisted(&self, peer: &PeerId) -> bool {
        self.blacklist.contains_key(peer)
    }

    pub fn campaigns(&self) -> &BTreeMap<DocumentId, Campaign> {
        &self.campaigns
    }

    /// Tags of requests awaiting an answer. IHAVE is never among them.
    pub fn outstanding_tags(&self) -> Vec<Tag> {
        self.outstanding.keys().cloned().collect()
    }

    /// Peers offered at least the configured number of documents without a
    /// single signature of theirs observed since.
    pub fn suspects(&self) -> Vec<PeerId> {
        self.suspects
            .iter()
            .filter(|(_, s)| !s.signature_seen && s.offered.len() >= self.config.suspect_threshold)
            .map(|(p, _)| *p)
            .collect()
    }

    fn is_peer(&self) -> bool {
        self.peerlist.role(&self.me) == Some(Role::Peer)
    }

    fn send(&mut self, to: PeerId, message: Message) -> Action {
        match &message {
            Message::IHave(_) => self.stats.offers_sent += 1,
            Message::Get { .. } => self.stats.gets_sent += 1,
            _ => {}
        }
        Action::Send {
            to,
            tag: self.tags.next_tag(),
            message,
        }
    }

    fn originator_of(block: &SignatureBlock) -> Option<PeerId> {
        block.originator().map(|r| r.signer)
    }

    fn verify(&mut self, doc: Option<&Document>, block: &SignatureBlock) -> Result<PeerId, VerifyError> {
        let v = verify_block_cached(doc, block, &self.peerlist, Some(&mut self.cache))?;
        for s in &v.signers {
            self.suspects.entry(*s).or_default().signature_seen = true;
        }
        Ok(v.originator)
    }

    /// Group members eligible as offer targets.
    fn eligible_targets(&self) -> Vec<PeerId> {
        self.peerlist
            .group()
            .into_iter()
            .filter(|p| *p != self.me && !self.blacklist.contains_key(p))
            .collect()
    }

    fn author_allowed(&self, path: &DocPath, originator: &PeerId) -> bool {
        if path.is_peerlist() && !self.peerlist.is_admin(originator) {
            return false;
        }
        self.peerlist.authorized_author(path, originator)
    }

    // ------------------------------------------------------------------
    // Local commands

    /// Creates, signs and stores a new version of `path` and starts offering it.
    pub fn inject(&mut self, now: u64, path: &str, content: Vec<u8>) -> Result<(DocumentId, Vec<Action>), EngineError> {
        let doc_path = DocPath::new(path)?;
        if !self.author_allowed(&doc_path, &self.me) {
            return Err(EngineError::NotAuthorized(doc_path));
        }
        let mut version = self.store.max_version(&doc_path).unwrap_or(0) + 1;
        if doc_path.is_peerlist() {
            version = version.max(self.peerlist.version + 1);
        }
        let doc = make_document(path, version, content)?;
        let mut block = SignatureBlock::new(doc.doc_ref());
        let rec = sign_document(&self.keys, &doc.doc_ref(), None, None).expect("fresh block");
        block.insert(rec).expect("fresh block");
        let id = doc.id().clone();
        self.store.put(StoredDocument::new(doc, block.clone(), now, self.me))?;
        let mut acts = vec![
            Action::Signed {
                doc_ref: block.doc_ref().clone(),
            },
            Action::Accepted {
                id: id.clone(),
                originator: self.me,
                via: Via::Inject,
            },
        ];
        acts.extend(self.check_activeness(&id));
        if self.is_peer() {
            // already active under a lenient rule: still push it round the group once
            let brief = !self.is_pending(&id);
            let f0 = self.config.initial_fanout;
            self.campaigns.insert(id.clone(), Campaign::new(f0, brief, now));
            acts.extend(self.run_round(now, &id, None));
        }
        Ok((id, acts))
    }

    /// Sends the stored block of `id` to the given peers.
    pub fn offer(&mut self, id: &DocumentId, to: &[PeerId]) -> Result<Vec<Action>, EngineError> {
        let block = self
            .store
            .get_exact(id)
            .ok_or_else(|| EngineError::NotFound(id.clone()))?
            .block
            .clone();
        Ok(to
            .iter()
            .map(|p| self.send(*p, Message::IHave(block.clone())))
            .collect())
    }

    /// Requests `path` from `f + 1` distinct peers and later reports the
    /// newest verified answer.
    pub fn fetch_redundant(&mut self, now: u64, path: &DocPath, sel: VersionSel, f: usize) -> (FetchId, Vec<Action>) {
        let fetch = FetchId(self.next_fetch);
        self.next_fetch += 1;
        let mut candidates = self.eligible_targets();
        candidates.shuffle(&mut self.rng);
        if candidates.len() < f + 1 {
            return (
                fetch,
                vec![Action::FetchComplete {
                    fetch,
                    result: Err(FetchError::NotEnoughPeers),
                }],
            );
        }
        candidates.truncate(f + 1);
        let mut acts = Vec::new();
        for peer in &candidates {
            let action = self.send(*peer, Message::Get { path: path.clone(), version: sel });
            if let Action::Send { tag, .. } = &action {
                let id = DocumentId {
                    path: path.clone(),
                    version: 0,
                };
                self.outstanding.insert(
                    tag.clone(),
                    Outstanding::Get {
                        id,
                        peer: *peer,
                        sent_at: now,
                        purpose: Purpose::Fetch(fetch),
                    },
                );
            }
            acts.push(action);
        }
        self.fetches.insert(
            fetch,
            FetchState {
                sel,
                path: path.clone(),
                pending: candidates.into_iter().collect(),
                answers: Vec::new(),
            },
        );
        (fetch, acts)
    }

    /// Asks `helper` for everything it stores; missing documents are pulled
    /// and documents the helper lacks are offered to it.
    pub fn reconcile(&mut self, now: u64, helper: PeerId) -> Result<Vec<Action>, EngineError> {
        if helper == self.me || self.peerlist.entry(&helper).is_none() || self.is_blacklisted(&helper) {
            return Err(EngineError::HelperUnreachable(helper));
        }
        let action = self.send(
            helper,
            Message::Head {
                pattern: PathPattern::everything(),
                version: VersionSel::Any,
            },
        );
        if let Action::Send { tag, .. } = &action {
            self.outstanding
                .insert(tag.clone(), Outstanding::Head { helper, sent_at: now });
        }
        Ok(vec![action])
    }

    /// Periodic work: due campaign rounds, request timeouts, housekeeping.
    pub fn tick(&mut self, now: u64) -> Vec<Action> {
        let mut acts = Vec::new();

        let expired: Vec<Tag> = self
            .outstanding
            .iter()
            .filter(|(_, o)| {
                let sent = match o {
                    Outstanding::Get { sent_at, .. } | Outstanding::Head { sent_at, .. } => *sent_at,
                };
                now >= sent + self.config.get_timeout_ms
            })
            .map(|(t, _)| t.clone())
            .collect();
        for tag in expired {
            self.stats.timeouts += 1;
            match self.outstanding.remove(&tag) {
                Some(Outstanding::Get { id, peer, purpose, .. }) => {
                    acts.extend(self.request_failed(now, id, peer, purpose));
                }
                Some(Outstanding::Head { helper, .. }) => acts.push(Action::ReconcileDone {
                    helper,
                    ok: false,
                    requested: 0,
                    offered: 0,
                }),
                None => {}
            }
        }

        let rearm = self.config.rearm_rounds * self.config.round_ms;
        let ids: Vec<DocumentId> = self.campaigns.keys().cloned().collect();
        for id in ids {
            let Some(c) = self.campaigns.get_mut(&id) else { continue };
            match c.dormant_since {
                Some(since) if now >= since + rearm => {
                    c.dormant_since = None;
                    c.offered.clear();
                    acts.extend(self.run_round(now, &id, None));
                }
                Some(_) => {}
                None if c.next_due <= now => acts.extend(self.run_round(now, &id, None)),
                None => {}
            }
        }

        let window = self.config.dedup_window_ms;
        self.seen.retain(|_, t| now < *t + window);
        let stale = 10 * self.config.round_ms;
        self.offers
            .retain(|_, o| o.fetching.is_some() || now < o.first_seen + stale);
        acts
    }

    // ------------------------------------------------------------------
    // Messages

    pub fn handle_message(&mut self, now: u64, from: PeerId, tag: Tag, message: Message) -> Vec<Action> {
        if self.peerlist.entry(&from).is_none() || self.is_blacklisted(&from) {
            return match message {
                Message::Get { .. } => vec![self.reply(from, tag, Message::GetAnswer(GetAnswer::Denied))],
                Message::Head { .. } => vec![self.reply(
                    from,
                    tag,
                    Message::HeadAnswer {
                        status: HeadStatus::Denied,
                        entries: Vec::new(),
                    },
                )],
                _ => Vec::new(),
            };
        }
        match message {
            Message::IHave(block) => self.handle_ihave(now, from, block),
            Message::Get { path, version } => {
                let answer = match self.store.get(&path, version) {
                    Some(sd) => GetAnswer::Ok {
                        document: sd.document.clone(),
                        block: sd.block.clone(),
                    },
                    None => GetAnswer::NotFound,
                };
                vec![self.reply(from, tag, Message::GetAnswer(answer))]
            }
            Message::Head { pattern, version } => {
                let listing = self.store.list(&pattern, version, self.config.head_cap);
                let status = if listing.truncated {
                    HeadStatus::Truncated
                } else {
                    HeadStatus::Ok
                };
                let entries = listing.entries.into_iter().map(|sd| sd.block.clone()).collect();
                vec![self.reply(from, tag, Message::HeadAnswer { status, entries })]
            }
            Message::GetAnswer(answer) => self.handle_get_answer(now, from, tag, answer),
            Message::HeadAnswer { status, entries } => self.handle_head_answer(now, from, tag, status, entries),
        }
    }

    fn reply(&self, to: PeerId, tag: Tag, message: Message) -> Action {
        Action::Send { to, tag, message }
    }

    pub fn handle_ihave(&mut self, now: u64, from: PeerId, block: SignatureBlock) -> Vec<Action> {
        self.stats.offers_received += 1;
        let id = block.doc_ref().id();
        let key = (from, block.fingerprint());
        let limit = self.config.replay_factor * self.peerlist.peers().len().max(1);
        if let Some(&at) = self.seen.get(&key) {
            *self.replays.entry((from, id.clone())).or_default() += 1;
            if now < at + self.config.dedup_window_ms {
                self.stats.duplicates += 1;
                return Vec::new();
            }
        }
        if self.replays.get(&(from, id.clone())).is_some_and(|&n| n > limit) {
            self.stats.replays_dropped += 1;
            return Vec::new();
        }
        self.seen.insert(key, now);

        let originator = match self.verify(None, &block) {
            Ok(o) => o,
            Err(error) => return self.reject_offer(now, from, &block, error),
        };
        if self.is_blacklisted(&originator) {
            return Vec::new();
        }
        if let Some(acts) = self.detect_conflict(now, &block) {
            return acts;
        }
        if !self.author_allowed(&id.path, &originator) {
            self.stats.unauthorized += 1;
            return Vec::new();
        }
        if let Some(local) = self.store.get_exact(&id).map(|sd| sd.block.clone()) {
            return self.merge_known(now, from, local, block, true);
        }
        self.offer_unknown(now, from, originator, block)
    }

    fn reject_offer(&mut self, now: u64, from: PeerId, block: &SignatureBlock, error: VerifyError) -> Vec<Action> {
        self.stats.verification_failures += 1;
        let mut acts = vec![Action::VerificationFailed { from, error: error.clone() }];
        // A peer that signed what it forwards vouches for it. Unknown signers
        // are tolerated since peerlist versions can briefly differ.
        if block.contains(&from) && !matches!(error, VerifyError::UnknownSigner(_)) {
            acts.extend(self.blacklist_peer(now, from, BlacklistReason::InvalidOffer(error)));
        }
        acts
    }

    fn blacklist_peer(&mut self, now: u64, peer: PeerId, reason: BlacklistReason) -> Vec<Action> {
        if peer == self.me || self.blacklist.contains_key(&peer) {
            return Vec::new();
        }
        self.blacklist.insert(peer, BlacklistEntry { reason, since: now });
        let doomed: Vec<DocumentId> = self
            .campaigns
            .keys()
            .filter(|id| {
                self.store
                    .get_exact(id)
                    .and_then(|sd| Self::originator_of(&sd.block))
                    == Some(peer)
            })
            .cloned()
            .collect();
        for id in doomed {
            self.campaigns.remove(&id);
        }
        vec![Action::Blacklisted { peer }]
    }

    /// Looks for a stored or offered document with the same name and a
    /// different digest. Returns `Some` when the offer must not be processed further.
    fn detect_conflict(&mut self, now: u64, incoming: &SignatureBlock) -> Option<Vec<Action>> {
        let id = incoming.doc_ref().id();
        let digest = incoming.doc_ref().digest;
        let other = self
            .store
            .get_exact(&id)
            .map(|sd| sd.block.clone())
            .or_else(|| self.offers.get(&id).map(|o| o.block.clone()))
            .filter(|b| b.doc_ref().digest != digest)?;
        if Self::originator_of(&other) != Self::originator_of(incoming) {
            self.stats.races_parked += 1;
            return Some(Vec::new());
        }
        Some(self.equivocation(now, &other, incoming))
    }

    fn equivocation(&mut self, now: u64, a: &SignatureBlock, b: &SignatureBlock) -> Vec<Action> {
        let Ok(evidence) = Evidence::from_blocks(a, b) else {
            return Vec::new();
        };
        let offender = evidence.offender();
        if self.is_blacklisted(&offender) {
            return Vec::new();
        }
        self.stats.conflicts_detected += 1;
        let _ = self.store.put_evidence(evidence.clone());
        let mut acts = self.blacklist_peer(now, offender, BlacklistReason::Equivocation(Box::new(evidence)));
        // Everyone gets both versions; each recipient can check the proof itself.
        for peer in self.eligible_targets() {
            acts.push(self.send(peer, Message::IHave(a.clone())));
            acts.push(self.send(peer, Message::IHave(b.clone())));
        }
        acts
    }

    /// Merges an offer for a stored document. Replies with the merged block
    /// when the sender is missing records, and countersigns if needed.
    fn merge_known(
        &mut self,
        now: u64,
        from: PeerId,
        local: SignatureBlock,
        incoming: SignatureBlock,
        reflexive: bool,
    ) -> Vec<Action> {
        let id = local.doc_ref().id();
        let (mut merged, learned) = match merge_blocks(&local, &incoming) {
            Ok(m) => m,
            Err(_) => {
                self.stats.conflicting_records += 1;
                return Vec::new();
            }
        };
        let mut acts = Vec::new();
        let mut grew = !learned.is_empty();
        if !merged.contains(&self.me) && self.is_peer() {
            let parent = if merged.contains(&from) {
                from
            } else {
                Self::originator_of(&merged).expect("verified")
            };
            if let Ok(rec) = sign_document(&self.keys, merged.doc_ref(), Some(&merged), Some(parent)) {
                merged.insert(rec).expect("checked absent");
                acts.push(Action::Signed {
                    doc_ref: merged.doc_ref().clone(),
                });
                grew = true;
            }
        }
        if grew && self.store.update_block(merged.clone()).is_err() {
            return acts;
        }
        if reflexive && merged.len() > incoming.len() {
            acts.push(self.send(from, Message::IHave(merged)));
        }
        if grew {
            acts.extend(self.after_growth(now, &id, Some(from)));
        }
        acts
    }

    fn offer_unknown(&mut self, now: u64, from: PeerId, originator: PeerId, block: SignatureBlock) -> Vec<Action> {
        let id = block.doc_ref().id();
        let state = self.offers.entry(id.clone()).or_insert_with(|| OfferState {
            block: SignatureBlock::new(block.doc_ref().clone()),
            first_seen: now,
            fetching: None,
            tried: BTreeSet::new(),
            via: Via::Offer,
        });
        if let Ok((merged, _)) = merge_blocks(&state.block, &block) {
            state.block = merged;
        }
        if !block.contains(&from) && from != originator {
            self.stats.missing_sender_record += 1;
            return Vec::new();
        }
        if state.fetching.is_some() {
            return Vec::new();
        }
        if id.path.is_peerlist() && id.version <= self.peerlist.version {
            return Vec::new();
        }
        if !self.rate_allows(now, &originator) {
            self.stats.rate_deferred += 1;
            return Vec::new();
        }
        vec![self.request(now, id, from, Via::Offer)]
    }

    fn request(&mut self, now: u64, id: DocumentId, peer: PeerId, via: Via) -> Action {
        let action = self.send(
            peer,
            Message::Get {
                path: id.path.clone(),
                version: VersionSel::Exact(id.version),
            },
        );
        let Action::Send { tag, .. } = &action else { unreachable!() };
        if let Some(state) = self.offers.get_mut(&id) {
            state.fetching = Some(tag.clone());
            state.tried.insert(peer);
            state.via = via;
        }
        let purpose = match via {
            Via::Reconcile => Purpose::Reconcile,
            _ => Purpose::Offer,
        };
        self.outstanding.insert(
            tag.clone(),
            Outstanding::Get {
                id,
                peer,
                sent_at: now,
                purpose,
            },
        );
        action
    }

    /// Tokens left for `originator`, less requests already in flight.
    fn rate_allows(&mut self, now: u64, originator: &PeerId) -> bool {
        let in_flight = self
            .offers
            .values()
            .filter(|o| {
                o.fetching.is_some() && o.via == Via::Offer && Self::originator_of(&o.block) == Some(*originator)
            })
            .count() as u32;
        self.bucket(now, originator).available(now) > in_flight
    }

    fn bucket(&mut self, now: u64, originator: &PeerId) -> &mut TokenBucket {
        let c = &self.config;
        let (cap, refill, window) = (c.bucket_capacity, c.refill_per_window, c.rate_window_ms);
        self.buckets
            .entry(*originator)
            .or_insert_with(|| TokenBucket::new(cap, refill, window, now))
    }

    fn handle_get_answer(&mut self, now: u64, from: PeerId, tag: Tag, answer: GetAnswer) -> Vec<Action> {
        let Some(Outstanding::Get { id, peer, purpose, .. }) = self.outstanding.get(&tag).cloned() else {
            return Vec::new();
        };
        if peer != from {
            return Vec::new();
        }
        self.outstanding.remove(&tag);
        if let Purpose::Fetch(fetch) = purpose {
            return self.fetch_answer(now, fetch, from, answer);
        }
        let GetAnswer::Ok { document, block } = answer else {
            return self.request_failed(now, id, from, purpose);
        };
        if document.id() != &id {
            self.stats.bad_answers += 1;
            return self.request_failed(now, id, from, purpose);
        }
        let originator = match self.verify(Some(&document), &block) {
            Ok(o) => o,
            Err(_) => {
                self.stats.bad_answers += 1;
                return self.request_failed(now, id, from, purpose);
            }
        };
        if let Some(acts) = self.detect_conflict(now, &block) {
            return acts;
        }
        if self.is_blacklisted(&originator) || !self.author_allowed(&id.path, &originator) {
            self.offers.remove(&id);
            return Vec::new();
        }
        if let Some(local) = self.store.get_exact(&id).map(|sd| sd.block.clone()) {
            self.offers.remove(&id);
            return self.merge_known(now, from, local, block, true);
        }
        let mut merged = block;
        if let Some(state) = self.offers.remove(&id) {
            if let Ok((m, _)) = merge_blocks(&merged, &state.block) {
                merged = m;
            }
        }
        if id.path.is_peerlist() && validate_peerlist_update(&self.peerlist, &document, &merged).is_err() {
            self.stats.unauthorized += 1;
            return Vec::new();
        }
        let via = match purpose {
            Purpose::Reconcile => Via::Reconcile,
            _ => Via::Offer,
        };
        if via == Via::Offer && !self.bucket(now, &originator).try_take(now) {
            self.stats.rate_deferred += 1;
            return Vec::new();
        }
        self.accept(now, from, originator, document, merged, via)
    }

    fn accept(
        &mut self,
        now: u64,
        from: PeerId,
        originator: PeerId,
        document: Document,
        mut block: SignatureBlock,
        via: Via,
    ) -> Vec<Action> {
        let id = document.id().clone();
        let mut acts = Vec::new();
        if !block.contains(&self.me) && self.is_peer() {
            let parent = if block.contains(&from) { from } else { originator };
            if let Ok(rec) = sign_document(&self.keys, block.doc_ref(), Some(&block), Some(parent)) {
                block.insert(rec).expect("checked absent");
                acts.push(Action::Signed {
                    doc_ref: block.doc_ref().clone(),
                });
            }
        }
        if self.store.put(StoredDocument::new(document, block, now, from)).is_err() {
            return Vec::new();
        }
        acts.push(Action::Accepted {
            id: id.clone(),
            originator,
            via,
        });
        acts.extend(self.check_activeness(&id));
        if self.is_peer() {
            let status = self.store.get_exact(&id).map(|sd| sd.status);
            let brief = match status {
                Some(DocumentStatus::Pending) => false,
                Some(DocumentStatus::Active) if via == Via::Reconcile => true,
                _ => return acts,
            };
            let k = self.config.fanout;
            self.campaigns.insert(id.clone(), Campaign::new(k, brief, now));
            acts.extend(self.run_round(now, &id, Some(from)));
        }
        acts
    }

    /// A GET failed or was answered unusably: try another signer of the offer.
    fn request_failed(&mut self, now: u64, id: DocumentId, peer: PeerId, purpose: Purpose) -> Vec<Action> {
        if let Purpose::Fetch(fetch) = purpose {
            return self.fetch_answer(now, fetch, peer, GetAnswer::NotFound);
        }
        let next = self.offers.get(&id).and_then(|state| {
            state
                .block
                .signers()
                .into_iter()
                .find(|p| *p != self.me && !state.tried.contains(p) && !self.blacklist.contains_key(p))
        });
        let via = match purpose {
            Purpose::Reconcile => Via::Reconcile,
            _ => Via::Offer,
        };
        match next {
            Some(p) => vec![self.request(now, id, p, via)],
            None => {
                if let Some(state) = self.offers.get_mut(&id) {
                    state.fetching = None;
                    state.tried.clear();
                }
                Vec::new()
            }
        }
    }

    fn fetch_answer(&mut self, now: u64, fetch: FetchId, from: PeerId, answer: GetAnswer) -> Vec<Action> {
        let Some(state) = self.fetches.get(&fetch) else {
            return Vec::new();
        };
        let (sel, path) = (state.sel, state.path.clone());
        let valid = match answer {
            GetAnswer::Ok { document, block } => {
                let ok = document.path() == &path
                    && match sel {
                        VersionSel::Exact(v) => document.version() == v,
                        VersionSel::Active => self.peerlist.is_active(&path, &block),
                        VersionSel::Any => true,
                    };
                match (ok, self.verify(Some(&document), &block)) {
                    (true, Ok(orig)) if !self.is_blacklisted(&orig) && self.author_allowed(&path, &orig) => {
                        Some((document, block))
                    }
                    _ => {
                        self.stats.bad_answers += 1;
                        None
                    }
                }
            }
            _ => None,
        };
        let state = self.fetches.get_mut(&fetch).expect("checked");
        state.pending.remove(&from);
        if let Some((d, b)) = valid {
            state.answers.push((from, d, b));
        }
        if !state.pending.is_empty() {
            return Vec::new();
        }
        let state = self.fetches.remove(&fetch).expect("checked");
        let Some(best) = state.answers.iter().map(|(_, d, _)| d.version()).max() else {
            return vec![Action::FetchComplete {
                fetch,
                result: Err(FetchError::AllFailed),
            }];
        };
        let newest: Vec<&(PeerId, Document, SignatureBlock)> =
            state.answers.iter().filter(|(_, d, _)| d.version() == best).collect();
        let mut acts = Vec::new();
        if let Some(other) = newest.iter().find(|(_, d, _)| d.digest() != newest[0].1.digest()) {
            let (a, b) = (newest[0].2.clone(), other.2.clone());
            let offender = Self::originator_of(&a).expect("verified");
            if Self::originator_of(&b) == Some(offender) {
                acts.extend(self.equivocation(now, &a, &b));
            }
            acts.push(Action::FetchComplete {
                fetch,
                result: Err(FetchError::Inconsistent(offender)),
            });
            return acts;
        }
        let (_, document, _) = newest[0].clone();
        let mut block = newest[0].2.clone();
        for (_, _, b) in &newest[1..] {
            if let Ok((m, _)) = merge_blocks(&block, b) {
                block = m;
            }
        }
        acts.push(Action::FetchComplete {
            fetch,
            result: Ok(Fetched {
                document,
                block,
                answered: state.answers.iter().map(|(p, _, _)| *p).collect(),
            }),
        });
        acts
    }

    fn handle_head_answer(
        &mut self,
        now: u64,
        from: PeerId,
        tag: Tag,
        status: HeadStatus,
        entries: Vec<SignatureBlock>,
    ) -> Vec<Action> {
        match self.outstanding.get(&tag) {
            Some(Outstanding::Head { helper, .. }) if *helper == from => {}
            _ => return Vec::new(),
        }
        self.outstanding.remove(&tag);
        if status == HeadStatus::Denied {
            return vec![Action::ReconcileDone {
                helper: from,
                ok: false,
                requested: 0,
                offered: 0,
            }];
        }
        let mut acts = Vec::new();
        let mut listed = BTreeSet::new();
        let mut requested = 0;
        let mut offered = 0;
        for block in entries {
            let id = block.doc_ref().id();
            let originator = match self.verify(None, &block) {
                Ok(o) => o,
                Err(_) => {
                    self.stats.verification_failures += 1;
                    continue;
                }
            };
            listed.insert(id.clone());
            if self.is_blacklisted(&originator) {
                continue;
            }
            if let Some(more) = self.detect_conflict(now, &block) {
                acts.extend(more);
                continue;
            }
            if !self.author_allowed(&id.path, &originator) {
                continue;
            }
            if let Some(local) = self.store.get_exact(&id).map(|sd| sd.block.clone()) {
                let before = acts.len();
                acts.extend(self.merge_known(now, from, local, block, true));
                offered += acts[before..]
                    .iter()
                    .filter(|a| matches!(a, Action::Send { to, message: Message::IHave(_), .. } if *to == from))
                    .count();
                continue;
            }
            if id.path.is_peerlist() && id.version <= self.peerlist.version {
                continue;
            }
            let state = self.offers.entry(id.clone()).or_insert_with(|| OfferState {
                block: block.clone(),
                first_seen: now,
                fetching: None,
                tried: BTreeSet::new(),
                via: Via::Reconcile,
            });
            if state.fetching.is_some() {
                continue;
            }
            requested += 1;
            acts.push(self.request(now, id, from, Via::Reconcile));
        }
        if status == HeadStatus::Ok {
            for id in self.store.document_ids() {
                if listed.contains(&id) {
                    continue;
                }
                let Some(sd) = self.store.get_exact(&id) else { continue };
                let blocked = Self::originator_of(&sd.block).is_some_and(|o| self.is_blacklisted(&o));
                if sd.status == DocumentStatus::Superseded || blocked {
                    continue;
                }
                let block = sd.block.clone();
                offered += 1;
                acts.push(self.send(from, Message::IHave(block)));
            }
        }
        acts.push(Action::ReconcileDone {
            helper: from,
            ok: true,
            requested,
            offered,
        });
        acts
    }

    // ------------------------------------------------------------------
    // Campaigns and status

    fn is_pending(&self, id: &DocumentId) -> bool {
        self.store
            .get_exact(id)
            .is_some_and(|sd| sd.status == DocumentStatus::Pending)
    }

    fn after_growth(&mut self, now: u64, id: &DocumentId, exclude: Option<PeerId>) -> Vec<Action> {
        let mut acts = self.check_activeness(id);
        if !self.is_peer() {
            return acts;
        }
        if !self.campaigns.contains_key(id) && self.is_pending(id) {
            let k = self.config.fanout;
            self.campaigns.insert(id.clone(), Campaign::new(k, false, now));
        }
        if let Some(c) = self.campaigns.get_mut(id) {
            c.dormant_since = None;
            acts.extend(self.run_round(now, id, exclude));
        }
        acts
    }

    /// Marks the document active if the policy is satisfied.
    pub fn check_activeness(&mut self, id: &DocumentId) -> Vec<Action> {
        let Some(sd) = self.store.get_exact(id) else {
            return Vec::new();
        };
        if sd.status != DocumentStatus::Pending {
            return Vec::new();
        }
        let blocked = Self::originator_of(&sd.block).is_some_and(|o| self.is_blacklisted(&o));
        if blocked || !self.peerlist.is_active(&id.path, &sd.block) {
            return Vec::new();
        }
        let changes = match self.store.activate(id) {
            Ok(c) => c,
            Err(_) => return Vec::new(),
        };
        let mut acts = Vec::new();
        let mut installed = false;
        for change in changes {
            let ended = change.to != Some(DocumentStatus::Active)
                || !self.campaigns.get(&change.id).is_some_and(|c| c.brief);
            if ended {
                self.campaigns.remove(&change.id);
            }
            if change.id.path.is_peerlist() && change.to == Some(DocumentStatus::Active) {
                installed = self.install_peerlist(&change.id);
            }
            acts.push(Action::StatusChanged(change));
        }
        if installed {
            acts.push(Action::PeerlistInstalled {
                version: self.peerlist.version,
            });
            let pending: Vec<DocumentId> = self.campaigns.keys().cloned().collect();
            for p in pending {
                acts.extend(self.check_activeness(&p));
            }
        }
        acts
    }

    fn install_peerlist(&mut self, id: &DocumentId) -> bool {
        let Some(sd) = self.store.get_exact(id) else {
            return false;
        };
        match Peerlist::from_document(&sd.document) {
            Ok(pl) if pl.version > self.peerlist.version => {
                self.peerlist = pl;
                true
            }
            _ => false,
        }
    }

    /// One round of offers for a campaign.
    fn run_round(&mut self, now: u64, id: &DocumentId, exclude: Option<PeerId>) -> Vec<Action> {
        let Some(sd) = self.store.get_exact(id) else {
            self.campaigns.remove(id);
            return Vec::new();
        };
        let block = sd.block.clone();
        let status = sd.status;
        let Some(campaign) = self.campaigns.get(id) else {
            return Vec::new();
        };
        let blocked = Self::originator_of(&block).is_some_and(|o| self.is_blacklisted(&o));
        if blocked || (!campaign.brief && status != DocumentStatus::Pending) || status == DocumentStatus::Superseded {
            self.campaigns.remove(id);
            return Vec::new();
        }
        let k = if campaign.round == 0 {
            campaign.first_fanout
        } else {
            self.config.fanout
        };
        let candidates: Vec<PeerId> = self
            .eligible_targets()
            .into_iter()
            .filter(|p| Some(*p) != exclude)
            .collect();
        let remaining = candidates
            .iter()
            .filter(|p| !campaign.has_seen_current(p, &block))
            .count();
        let targets = select_targets(candidates, &block, &campaign.offered, k, &mut self.rng);
        let campaign = self.campaigns.get_mut(id).expect("checked");
        campaign.round += 1;
        campaign.next_due = now + self.config.round_ms;
        for t in &targets {
            campaign.offered.insert(*t, block.len());
        }
        let exhausted = remaining <= targets.len();
        if exhausted {
            if campaign.brief {
                self.campaigns.remove(id);
            } else {
                campaign.dormant_since = Some(now);
            }
        }
        let mut acts = Vec::with_capacity(targets.len());
        for t in targets {
            self.suspects.entry(t).or_default().offered.insert(id.clone());
            acts.push(self.send(t, Message::IHave(block.clone())));
        }
        acts
    }

    /// Offer targets for a block as a fresh campaign would pick them.
    pub fn select_offer_targets(&mut self, block: &SignatureBlock, k: usize, exclude: Option<PeerId>) -> Vec<PeerId> {
        let candidates: Vec<PeerId> = self
            .eligible_targets()
            .into_iter()
            .filter(|p| Some(*p) != exclude)
            .collect();
        select_targets(candidates, block, &BTreeMap::new(), k, &mut self.rng)
    }
}
