//! Local storage of documents, signature blocks, status and evidence.
//!
//! [`MemoryStore`] is used by the simulator. [`DiskStore`] keeps the same
//! index in memory and persists it under a directory:
//!
//! ```text
//! docs/<encoded path>/<version>        content
//! docs/<encoded path>/<version>.sig    canonical signature block
//! docs/<encoded path>/<version>.meta   origin and receipt time
//! evidence/<offender fingerprint>      equivocation evidence
//! journal                              `epoch-ms path version old→new`
//! ```
//!
//! Files are written to a temporary name and renamed into place. A document
//! exists once its journal line is complete; partial trailing lines are
//! discarded on reopen.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS, NON_ALPHANUMERIC};
use thiserror::Error;

use crate::crypto::PeerId;
use crate::document::{Digest, DocPath, Document, DocumentId, DocumentStatus, PathPattern, VersionSel};
use crate::evidence::Evidence;
use crate::policy::Peerlist;
use crate::signature::SignatureBlock;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{id} already stored with digest {existing}, refusing {incoming}")]
    ConflictDetected {
        id: DocumentId,
        existing: Digest,
        incoming: Digest,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("signature block does not describe the document")]
    BlockMismatch,
    #[error("illegal status change for {id}: {from} to {to}")]
    IllegalTransition {
        id: DocumentId,
        from: DocumentStatus,
        to: DocumentStatus,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredDocument {
    pub document: Document,
    pub block: SignatureBlock,
    pub status: DocumentStatus,
    /// Local receipt time in epoch milliseconds; never signed.
    pub received_at: u64,
    /// Peer the document was first received from.
    pub origin: PeerId,
}

impl StoredDocument {
    pub fn new(document: Document, block: SignatureBlock, received_at: u64, origin: PeerId) -> Self {
        StoredDocument {
            document,
            block,
            status: DocumentStatus::Pending,
            received_at,
            origin,
        }
    }

    pub fn id(&self) -> &DocumentId {
        self.document.id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted,
    BlockUpdated,
    Unchanged,
}

/// One status change; `None` means absent from the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusChange {
    pub id: DocumentId,
    pub from: Option<DocumentStatus>,
    pub to: Option<DocumentStatus>,
}

#[derive(Debug)]
pub struct Listing<'a> {
    pub entries: Vec<&'a StoredDocument>,
    pub truncated: bool,
}

pub trait DocumentStore: Send {
    /// Stores a verified document. A document already present with the same
    /// digest has its block replaced and its status moved to `sd.status` if
    /// that is a legal change.
    fn put(&mut self, sd: StoredDocument) -> Result<PutOutcome, StoreError>;

    fn update_block(&mut self, block: SignatureBlock) -> Result<(), StoreError>;

    fn get(&self, path: &DocPath, sel: VersionSel) -> Option<&StoredDocument>;

    /// Matches in path order then version order. `VersionSel::Any` lists
    /// every stored version.
    fn list(&self, pattern: &PathPattern, sel: VersionSel, cap: usize) -> Listing<'_>;

    /// Makes `id` active, superseding every older version. If a newer
    /// version is already active, `id` is superseded instead.
    fn activate(&mut self, id: &DocumentId) -> Result<Vec<StatusChange>, StoreError>;

    /// Drops superseded versions beyond the newest `keep_last` per path.
    fn gc_superseded(&mut self, keep_last: u32) -> Result<usize, StoreError>;

    /// Returns false if evidence against the offender was already held.
    fn put_evidence(&mut self, evidence: Evidence) -> Result<bool, StoreError>;

    fn evidence(&self, offender: &PeerId) -> Option<&Evidence>;

    fn all_evidence(&self) -> Vec<&Evidence>;

    fn document_ids(&self) -> Vec<DocumentId>;

    fn get_exact(&self, id: &DocumentId) -> Option<&StoredDocument> {
        self.get(&id.path, VersionSel::Exact(id.version))
    }

    fn max_version(&self, path: &DocPath) -> Option<u64> {
        self.get(path, VersionSel::Any).map(|sd| sd.document.version())
    }
}

#[derive(Debug, Default, Clone)]
struct Index {
    docs: BTreeMap<DocPath, BTreeMap<u64, StoredDocument>>,
    evidence: BTreeMap<PeerId, Evidence>,
}

impl Index {
    fn lookup(&self, id: &DocumentId) -> Option<&StoredDocument> {
        self.docs.get(&id.path)?.get(&id.version)
    }

    fn check_put(&self, sd: &StoredDocument) -> Result<Option<&StoredDocument>, StoreError> {
        if sd.block.doc_ref() != &sd.document.doc_ref() {
            return Err(StoreError::BlockMismatch);
        }
        match self.lookup(sd.id()) {
            Some(old) if old.document.digest() != sd.document.digest() => Err(StoreError::ConflictDetected {
                id: sd.id().clone(),
                existing: old.document.digest(),
                incoming: sd.document.digest(),
            }),
            other => Ok(other),
        }
    }

    fn put(&mut self, sd: StoredDocument) -> Result<(PutOutcome, Vec<StatusChange>), StoreError> {
        let existing = self.check_put(&sd)?.cloned();
        let id = sd.id().clone();
        let wanted = sd.status;
        let outcome = match existing {
            Some(old) => {
                if old.status != wanted && !old.status.can_transition(wanted) {
                    return Err(StoreError::IllegalTransition {
                        id,
                        from: old.status,
                        to: wanted,
                    });
                }
                if old.block == sd.block {
                    PutOutcome::Unchanged
                } else {
                    self.slot(&id).block = sd.block;
                    PutOutcome::BlockUpdated
                }
            }
            None => {
                let mut sd = sd;
                sd.status = DocumentStatus::Pending;
                self.docs.entry(id.path.clone()).or_default().insert(id.version, sd);
                PutOutcome::Inserted
            }
        };
        let mut changes = Vec::new();
        if outcome == PutOutcome::Inserted {
            changes.push(StatusChange {
                id: id.clone(),
                from: None,
                to: Some(DocumentStatus::Pending),
            });
        }
        changes.extend(self.set_status(&id, wanted)?);
        Ok((outcome, changes))
    }

    fn slot(&mut self, id: &DocumentId) -> &mut StoredDocument {
        self.docs
            .get_mut(&id.path)
            .and_then(|v| v.get_mut(&id.version))
            .expect("checked by caller")
    }

    fn set_status(&mut self, id: &DocumentId, to: DocumentStatus) -> Result<Vec<StatusChange>, StoreError> {
        let from = self.lookup(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?.status;
        if from == to {
            return Ok(Vec::new());
        }
        if to == DocumentStatus::Active {
            return self.activate(id);
        }
        from.transition(to).map_err(|_| StoreError::IllegalTransition {
            id: id.clone(),
            from,
            to,
        })?;
        self.slot(id).status = to;
        Ok(vec![StatusChange {
            id: id.clone(),
            from: Some(from),
            to: Some(to),
        }])
    }

    fn activate(&mut self, id: &DocumentId) -> Result<Vec<StatusChange>, StoreError> {
        let versions = self
            .docs
            .get_mut(&id.path)
            .filter(|v| v.contains_key(&id.version))
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let current = versions[&id.version].status;
        match current {
            DocumentStatus::Active => return Ok(Vec::new()),
            DocumentStatus::Superseded => {
                return Err(StoreError::IllegalTransition {
                    id: id.clone(),
                    from: current,
                    to: DocumentStatus::Active,
                })
            }
            DocumentStatus::Pending => {}
        }
        let newer_active = versions
            .range(id.version + 1..)
            .any(|(_, sd)| sd.status == DocumentStatus::Active);
        let mut changes = Vec::new();
        let mut change = |sd: &mut StoredDocument, to: DocumentStatus| {
            changes.push(StatusChange {
                id: sd.id().clone(),
                from: Some(sd.status),
                to: Some(to),
            });
            sd.status = to;
        };
        if newer_active {
            change(versions.get_mut(&id.version).expect("present"), DocumentStatus::Superseded);
            return Ok(changes);
        }
        for (_, sd) in versions.range_mut(..id.version) {
            if sd.status != DocumentStatus::Superseded {
                change(sd, DocumentStatus::Superseded);
            }
        }
        change(versions.get_mut(&id.version).expect("present"), DocumentStatus::Active);
        Ok(changes)
    }

    fn gc_candidates(&self, keep_last: u32) -> Vec<DocumentId> {
        let mut out = Vec::new();
        for versions in self.docs.values() {
            out.extend(
                versions
                    .values()
                    .rev()
                    .filter(|sd| sd.status == DocumentStatus::Superseded)
                    .skip(keep_last as usize)
                    .map(|sd| sd.id().clone()),
            );
        }
        out
    }

    fn remove(&mut self, id: &DocumentId) -> Option<StoredDocument> {
        let versions = self.docs.get_mut(&id.path)?;
        let sd = versions.remove(&id.version);
        if versions.is_empty() {
            self.docs.remove(&id.path);
        }
        sd
    }

    fn get(&self, path: &DocPath, sel: VersionSel) -> Option<&StoredDocument> {
        let versions = self.docs.get(path)?;
        match sel {
            VersionSel::Exact(v) => versions.get(&v),
            VersionSel::Any => versions.values().next_back(),
            VersionSel::Active => versions.values().rev().find(|sd| sd.status == DocumentStatus::Active),
        }
    }

    fn list(&self, pattern: &PathPattern, sel: VersionSel, cap: usize) -> Listing<'_> {
        let mut entries = Vec::new();
        let mut truncated = false;
        let matching = self
            .docs
            .iter()
            .filter(|(p, _)| pattern.matches(p))
            .flat_map(|(_, versions)| {
                versions.values().filter(move |sd| match sel {
                    VersionSel::Exact(v) => sd.document.version() == v,
                    VersionSel::Any => true,
                    VersionSel::Active => sd.status == DocumentStatus::Active,
                })
            });
        for sd in matching {
            if entries.len() == cap {
                truncated = true;
                break;
            }
            entries.push(sd);
        }
        Listing { entries, truncated }
    }

    fn ids(&self) -> Vec<DocumentId> {
        self.docs
            .values()
            .flat_map(|v| v.values().map(|sd| sd.id().clone()))
            .collect()
    }
}

/// Volatile store.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    index: Index,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DocumentStore for MemoryStore {
    fn put(&mut self, sd: StoredDocument) -> Result<PutOutcome, StoreError> {
        self.index.put(sd).map(|(o, _)| o)
    }

    fn update_block(&mut self, block: SignatureBlock) -> Result<(), StoreError> {
        let id = block.doc_ref().id();
        let sd = self.index.lookup(&id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if sd.document.doc_ref() != *block.doc_ref() {
            return Err(StoreError::BlockMismatch);
        }
        self.index.slot(&id).block = block;
        Ok(())
    }

    fn get(&self, path: &DocPath, sel: VersionSel) -> Option<&StoredDocument> {
        self.index.get(path, sel)
    }

    fn list(&self, pattern: &PathPattern, sel: VersionSel, cap: usize) -> Listing<'_> {
        self.index.list(pattern, sel, cap)
    }

    fn activate(&mut self, id: &DocumentId) -> Result<Vec<StatusChange>, StoreError> {
        self.index.activate(id)
    }

    fn gc_superseded(&mut self, keep_last: u32) -> Result<usize, StoreError> {
        let ids = self.index.gc_candidates(keep_last);
        for id in &ids {
            self.index.remove(id);
        }
        Ok(ids.len())
    }

    fn put_evidence(&mut self, evidence: Evidence) -> Result<bool, StoreError> {
        if self.index.evidence.contains_key(&evidence.offender()) {
            return Ok(false);
        }
        self.index.evidence.insert(evidence.offender(), evidence);
        Ok(true)
    }

    fn evidence(&self, offender: &PeerId) -> Option<&Evidence> {
        self.index.evidence.get(offender)
    }

    fn all_evidence(&self) -> Vec<&Evidence> {
        self.index.evidence.values().collect()
    }

    fn document_ids(&self) -> Vec<DocumentId> {
        self.index.ids()
    }
}

// ---------------------------------------------------------------------------
// Disk store

const JOURNAL: &str = "journal";
const DIR_ESCAPES: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.');
const LINE_ESCAPES: &AsciiSet = &CONTROLS.add(b' ').add(b'%');
const ARROW: &str = "→";

/// One filesystem step of a mutation. Mutations are planned as a list of
/// steps so that interrupted writes can be reproduced in tests.
#[derive(Debug)]
enum Step {
    Write(PathBuf, Vec<u8>),
    Journal(String),
    Remove(PathBuf),
}

/// Directory-backed store.
#[derive(Debug)]
pub struct DiskStore {
    root: PathBuf,
    index: Index,
    journal: File,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn status_token(s: Option<DocumentStatus>) -> &'static str {
    s.map_or("none", DocumentStatus::as_str)
}

impl DiskStore {
    /// Opens or creates a store, replaying the journal.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("docs"))?;
        fs::create_dir_all(root.join("evidence"))?;
        let journal_path = root.join(JOURNAL);
        let mut raw = fs::read(&journal_path).unwrap_or_default();
        let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < raw.len() {
            raw.truncate(complete);
            fs::write(&journal_path, &raw)?;
        }
        let text = String::from_utf8(raw).map_err(|_| StoreError::Corrupt("journal is not UTF-8".into()))?;

        let mut statuses: BTreeMap<DocumentId, DocumentStatus> = BTreeMap::new();
        for line in text.lines() {
            let (id, from, to) = parse_journal_line(line)?;
            if statuses.get(&id).copied() != from {
                return Err(StoreError::Corrupt(format!("journal out of order at {line:?}")));
            }
            match to {
                Some(s) => statuses.insert(id, s),
                None => statuses.remove(&id),
            };
        }

        let mut index = Index::default();
        for (id, status) in statuses {
            let base = doc_file(&root, &id);
            let content = fs::read(&base)?;
            let document = Document::from_parts(id.clone(), content);
            let block_bytes = fs::read(base.with_extension("sig"))?;
            let block = SignatureBlock::decode(document.doc_ref(), &block_bytes)
                .map_err(|e| StoreError::Corrupt(format!("{id}: {e}")))?;
            let meta = fs::read_to_string(base.with_extension("meta"))?;
            let (origin, received_at) =
                parse_meta(&meta).ok_or_else(|| StoreError::Corrupt(format!("{id}: bad meta")))?;
            index.docs.entry(id.path.clone()).or_default().insert(
                id.version,
                StoredDocument {
                    document,
                    block,
                    status,
                    received_at,
                    origin,
                },
            );
        }
        for entry in fs::read_dir(root.join("evidence"))? {
            let entry = entry?;
            if entry.path().extension().is_some() {
                continue;
            }
            let ev = Evidence::decode(&fs::read(entry.path())?)
                .map_err(|e| StoreError::Corrupt(format!("evidence: {e}")))?;
            index.evidence.insert(ev.offender(), ev);
        }

        let journal = OpenOptions::new().create(true).append(true).open(&journal_path)?;
        Ok(DiskStore { root, index, journal })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn journal_line(id: &DocumentId, change: &StatusChange) -> String {
        format!(
            "{} {} {} {}{ARROW}{}\n",
            now_ms(),
            utf8_percent_encode(id.path.as_str(), LINE_ESCAPES),
            id.version,
            status_token(change.from),
            status_token(change.to)
        )
    }

    fn plan_put(&self, sd: &StoredDocument, changes: &[StatusChange], inserted: bool) -> Vec<Step> {
        let base = doc_file(&self.root, sd.id());
        let mut steps = Vec::new();
        if inserted {
            steps.push(Step::Write(base.clone(), sd.document.content().to_vec()));
            steps.push(Step::Write(
                base.with_extension("meta"),
                format!("origin {}\nreceived {}\n", sd.origin.to_hex(), sd.received_at).into_bytes(),
            ));
        }
        steps.push(Step::Write(base.with_extension("sig"), sd.block.encode()));
        steps.extend(changes.iter().map(|c| Step::Journal(Self::journal_line(&c.id, c))));
        steps
    }

    fn run(&mut self, steps: Vec<Step>) -> Result<(), StoreError> {
        for step in steps {
            self.run_step(step)?;
        }
        Ok(())
    }

    fn run_step(&mut self, step: Step) -> Result<(), StoreError> {
        match step {
            Step::Write(path, bytes) => {
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir)?;
                }
                let mut tmp = path.clone().into_os_string();
                tmp.push(".tmp");
                fs::write(&tmp, bytes)?;
                fs::rename(&tmp, &path)?;
            }
            Step::Journal(line) => {
                self.journal.write_all(line.as_bytes())?;
                self.journal.sync_data()?;
            }
            Step::Remove(path) => match fs::remove_file(&path) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e.into()),
                _ => {}
            },
        }
        Ok(())
    }

    /// Performs only the first `steps` filesystem operations of a put and
    /// leaves the in-memory index untouched, as if the process died there.
    #[doc(hidden)]
    pub fn put_interrupted(&mut self, sd: StoredDocument, steps: usize) -> Result<(), StoreError> {
        let mut scratch = self.index.clone();
        let (outcome, changes) = scratch.put(sd.clone())?;
        let plan = self.plan_put(&sd, &changes, outcome == PutOutcome::Inserted);
        for step in plan.into_iter().take(steps) {
            self.run_step(step)?;
        }
        Ok(())
    }

    /// Number of filesystem operations a put of `sd` would perform.
    #[doc(hidden)]
    pub fn put_step_count(&self, sd: &StoredDocument) -> Result<usize, StoreError> {
        let mut scratch = self.index.clone();
        let (outcome, changes) = scratch.put(sd.clone())?;
        Ok(self.plan_put(sd, &changes, outcome == PutOutcome::Inserted).len())
    }
}

fn doc_file(root: &Path, id: &DocumentId) -> PathBuf {
    root.join("docs")
        .join(utf8_percent_encode(id.path.as_str(), DIR_ESCAPES).to_string())
        .join(id.version.to_string())
}

fn parse_meta(meta: &str) -> Option<(PeerId, u64)> {
    let mut origin = None;
    let mut received = None;
    for line in meta.lines() {
        match line.split_once(' ')? {
            ("origin", v) => origin = PeerId::from_hex(v),
            ("received", v) => received = v.parse().ok(),
            _ => {}
        }
    }
    Some((origin?, received?))
}

type JournalEntry = (DocumentId, Option<DocumentStatus>, Option<DocumentStatus>);

fn parse_journal_line(line: &str) -> Result<JournalEntry, StoreError> {
    let bad = || StoreError::Corrupt(format!("bad journal line {line:?}"));
    let f: Vec<&str> = line.split(' ').collect();
    if f.len() != 4 {
        return Err(bad());
    }
    f[0].parse::<u64>().map_err(|_| bad())?;
    let path = percent_decode_str(f[1]).decode_utf8().map_err(|_| bad())?;
    let path = DocPath::new(path.into_owned()).map_err(|_| bad())?;
    let version = f[2].parse().map_err(|_| bad())?;
    let (from, to) = f[3].split_once(ARROW).ok_or_else(bad)?;
    let status = |s: &str| -> Result<Option<DocumentStatus>, StoreError> {
        if s == "none" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad())
        }
    };
    let id = DocumentId::new(path, version).map_err(|_| bad())?;
    Ok((id, status(from)?, status(to)?))
}

impl DocumentStore for DiskStore {
    fn put(&mut self, sd: StoredDocument) -> Result<PutOutcome, StoreError> {
        let id = sd.id().clone();
        let mut next = self.index.clone();
        let (outcome, changes) = next.put(sd)?;
        if outcome == PutOutcome::Unchanged && changes.is_empty() {
            return Ok(outcome);
        }
        let stored = next.lookup(&id).cloned().expect("just stored");
        let steps = self.plan_put(&stored, &changes, outcome == PutOutcome::Inserted);
        self.run(steps)?;
        self.index = next;
        Ok(outcome)
    }

    fn update_block(&mut self, block: SignatureBlock) -> Result<(), StoreError> {
        let id = block.doc_ref().id();
        let sd = self.index.lookup(&id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if sd.document.doc_ref() != *block.doc_ref() {
            return Err(StoreError::BlockMismatch);
        }
        let path = doc_file(&self.root, &id).with_extension("sig");
        self.run(vec![Step::Write(path, block.encode())])?;
        self.index.slot(&id).block = block;
        Ok(())
    }

    fn get(&self, path: &DocPath, sel: VersionSel) -> Option<&StoredDocument> {
        self.index.get(path, sel)
    }

    fn list(&self, pattern: &PathPattern, sel: VersionSel, cap: usize) -> Listing<'_> {
        self.index.list(pattern, sel, cap)
    }

    fn activate(&mut self, id: &DocumentId) -> Result<Vec<StatusChange>, StoreError> {
        let mut next = self.index.clone();
        let changes = next.activate(id)?;
        let steps = changes
            .iter()
            .map(|c| Step::Journal(Self::journal_line(&c.id, c)))
            .collect();
        self.run(steps)?;
        self.index = next;
        Ok(changes)
    }

    fn gc_superseded(&mut self, keep_last: u32) -> Result<usize, StoreError> {
        let ids = self.index.gc_candidates(keep_last);
        for id in &ids {
            let change = StatusChange {
                id: id.clone(),
                from: Some(DocumentStatus::Superseded),
                to: None,
            };
            let base = doc_file(&self.root, id);
            self.run(vec![
                Step::Journal(Self::journal_line(id, &change)),
                Step::Remove(base.with_extension("sig")),
                Step::Remove(base.with_extension("meta")),
                Step::Remove(base),
            ])?;
            self.index.remove(id);
        }
        Ok(ids.len())
    }

    fn put_evidence(&mut self, evidence: Evidence) -> Result<bool, StoreError> {
        if self.index.evidence.contains_key(&evidence.offender()) {
            return Ok(false);
        }
        let path = self.root.join("evidence").join(evidence.offender().to_hex());
        self.run(vec![Step::Write(path, evidence.encode())])?;
        self.index.evidence.insert(evidence.offender(), evidence);
        Ok(true)
    }

    fn evidence(&self, offender: &PeerId) -> Option<&Evidence> {
        self.index.evidence.get(offender)
    }

    fn all_evidence(&self) -> Vec<&Evidence> {
        self.index.evidence.values().collect()
    }

    fn document_ids(&self) -> Vec<DocumentId> {
        self.index.ids()
    }
}

/// Human-readable status of one stored document.
pub fn status_report(
    store: &dyn DocumentStore,
    peerlist: &Peerlist,
    path: &DocPath,
    version: u64,
) -> Result<String, StoreError> {
    let sd = store
        .get(path, VersionSel::Exact(version))
        .ok_or_else(|| StoreError::NotFound(format!("{path}@{version}")))?;
    let name = |id: &PeerId| {
        peerlist
            .entry(id)
            .and_then(|e| e.name.clone())
            .unwrap_or_else(|| id.short())
    };
    let mut out = String::new();
    let r = sd.block.doc_ref();
    out.push_str(&format!("document: {} version {}\n", r.path, r.version));
    out.push_str(&format!("size: {}\ndigest: {}\n", r.size, r.digest));
    out.push_str(&format!("status: {}\n", sd.status));
    out.push_str(&format!("origin: {}\nreceived: {}\n", name(&sd.origin), sd.received_at));
    out.push_str(&format!("signers: {}\n", sd.block.len()));
    for rec in sd.block.records() {
        let chain: Vec<String> = rec.chain.iter().map(name).collect();
        out.push_str(&format!(
            "  {} {} chain [{}]\n",
            name(&rec.signer),
            rec.signer.to_hex(),
            chain.join(" > ")
        ));
    }
    if let Some(o) = sd.block.originator() {
        if store.evidence(&o.signer).is_some() {
            out.push_str("equivocation evidence held against originator\n");
        }
    }
    out.push_str("activeness:\n");
    for line in peerlist.explain(path, &sd.block) {
        out.push_str(&format!("  {line}\n"));
    }
    Ok(out)
}
