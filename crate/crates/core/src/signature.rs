//! Hierarchical overlapping signatures.
//!
//! Every peer signs a document once, on first reception. Its signature covers
//! the document reference and the signatures of every peer on the path by
//! which it first received the document, from the originator down to the
//! immediate parent. Later knowledge is merged into the block without
//! re-signing.
//!
//! A block must contain every record named in any included chain: a record
//! cannot be checked without its ancestors' signature bytes. Removing an
//! interior record therefore breaks verification, while removing leaves only
//! yields a smaller valid block.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::crypto::{self, KeyPair, PeerId, PublicKey, SignatureBytes};
use crate::document::{DocRef, Document};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("chain and signature lists differ in length ({chain} vs {sigs})")]
    LengthMismatch { chain: usize, sigs: usize },
    #[error("peer {0:?} has already signed this document")]
    AlreadySigned(PeerId),
    #[error("parent {0:?} has no record in the block")]
    ParentUnknown(Option<PeerId>),
    #[error("block already has an originator")]
    OriginatorExists,
    #[error("block refers to a different document")]
    DocRefMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("bad signature by {0:?}")]
    BadSignature(PeerId),
    #[error("chain references {0:?} but the block has no record for it")]
    MissingChainRecord(PeerId),
    #[error("signer {0:?} is not in the directory")]
    UnknownSigner(PeerId),
    #[error("document does not match the signed reference")]
    DigestMismatch,
    #[error("block has more than one originator record")]
    MultipleOriginators,
    #[error("block has no originator record")]
    NoOriginator,
    #[error("record by {0:?} has a malformed chain")]
    MalformedChain(PeerId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("blocks refer to different documents")]
    DocRefMismatch,
    #[error("conflicting records by {0:?}")]
    ConflictingRecord(PeerId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockDecodeError {
    #[error("block encoding truncated")]
    Truncated,
    #[error("{0} trailing bytes after block")]
    TrailingBytes(usize),
    #[error("records not in canonical signer order")]
    NotCanonical,
}

/// Lookup of public keys by peer id.
pub trait KeyDirectory {
    fn public_key(&self, id: &PeerId) -> Option<PublicKey>;
}

impl KeyDirectory for HashMap<PeerId, PublicKey> {
    fn public_key(&self, id: &PeerId) -> Option<PublicKey> {
        self.get(id).copied()
    }
}

impl KeyDirectory for BTreeMap<PeerId, PublicKey> {
    fn public_key(&self, id: &PeerId) -> Option<PublicKey> {
        self.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignatureRecord {
    pub signer: PeerId,
    /// Originator first, immediate parent last; empty for the originator.
    pub chain: Vec<PeerId>,
    pub sig: SignatureBytes,
}

impl SignatureRecord {
    pub fn is_originator(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn parent(&self) -> Option<PeerId> {
        self.chain.last().copied()
    }
}

/// Canonical bytes signed by a record: content digest, path, version, size,
/// then each ancestor signature in chain order. Integers are big-endian;
/// variable-length fields carry a u16 length prefix.
pub fn signing_payload(
    doc_ref: &DocRef,
    chain: &[PeerId],
    chain_sigs: &[&SignatureBytes],
) -> Result<Vec<u8>, SignatureError> {
    if chain.len() != chain_sigs.len() {
        return Err(SignatureError::LengthMismatch {
            chain: chain.len(),
            sigs: chain_sigs.len(),
        });
    }
    let path = doc_ref.path.as_str().as_bytes();
    let mut out = Vec::with_capacity(32 + 2 + path.len() + 16 + chain_sigs.len() * 66);
    out.extend_from_slice(doc_ref.digest.as_bytes());
    out.extend_from_slice(&(path.len() as u16).to_be_bytes());
    out.extend_from_slice(path);
    out.extend_from_slice(&doc_ref.version.to_be_bytes());
    out.extend_from_slice(&doc_ref.size.to_be_bytes());
    for sig in chain_sigs {
        out.extend_from_slice(&(sig.0.len() as u16).to_be_bytes());
        out.extend_from_slice(&sig.0);
    }
    Ok(out)
}

/// The merged set of signature records known for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureBlock {
    doc_ref: DocRef,
    records: BTreeMap<PeerId, SignatureRecord>,
}

impl SignatureBlock {
    pub fn new(doc_ref: DocRef) -> Self {
        SignatureBlock {
            doc_ref,
            records: BTreeMap::new(),
        }
    }

    pub fn doc_ref(&self) -> &DocRef {
        &self.doc_ref
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, signer: &PeerId) -> Option<&SignatureRecord> {
        self.records.get(signer)
    }

    pub fn contains(&self, signer: &PeerId) -> bool {
        self.records.contains_key(signer)
    }

    /// Records in canonical (signer fingerprint) order.
    pub fn records(&self) -> impl Iterator<Item = &SignatureRecord> {
        self.records.values()
    }

    pub fn signers(&self) -> BTreeSet<PeerId> {
        self.records.keys().copied().collect()
    }

    pub fn originator(&self) -> Option<&SignatureRecord> {
        self.records.values().find(|r| r.is_originator())
    }

    /// True if every record of `other` is also in `self`.
    pub fn covers(&self, other: &SignatureBlock) -> bool {
        other
            .records
            .iter()
            .all(|(k, r)| self.records.get(k) == Some(r))
    }

    /// Adds a record without verification.
    pub fn insert(&mut self, record: SignatureRecord) -> Result<(), SignatureError> {
        if self.records.contains_key(&record.signer) {
            return Err(SignatureError::AlreadySigned(record.signer));
        }
        self.records.insert(record.signer, record);
        Ok(())
    }

    /// Removes a record, returning it. Used to model tampering.
    pub fn remove(&mut self, signer: &PeerId) -> Option<SignatureRecord> {
        self.records.remove(signer)
    }

    pub fn record_mut(&mut self, signer: &PeerId) -> Option<&mut SignatureRecord> {
        self.records.get_mut(signer)
    }

    /// The smallest sub-block holding `keep` and every record their chains need.
    pub fn closure_of(&self, keep: impl IntoIterator<Item = PeerId>) -> SignatureBlock {
        let mut out = SignatureBlock::new(self.doc_ref.clone());
        for id in keep {
            let Some(rec) = self.records.get(&id) else {
                continue;
            };
            for c in rec.chain.iter().chain(std::iter::once(&id)) {
                if let Some(r) = self.records.get(c) {
                    out.records.entry(*c).or_insert_with(|| r.clone());
                }
            }
        }
        out
    }

    fn chain_sigs(&self, chain: &[PeerId]) -> Option<Vec<&SignatureBytes>> {
        chain
            .iter()
            .map(|c| self.records.get(c).map(|r| &r.sig))
            .collect()
    }

    /// Payload the given record should have signed, if its ancestors are present.
    pub fn payload_for(&self, record: &SignatureRecord) -> Option<Vec<u8>> {
        let sigs = self.chain_sigs(&record.chain)?;
        signing_payload(&self.doc_ref, &record.chain, &sigs).ok()
    }

    /// Canonical encoding: `u32 count`, then per record in signer order the
    /// 32-byte signer, `u16` chain length, chain ids, `u16` signature length
    /// and signature bytes. Big-endian. The document reference is not included.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.records.len() * (32 + 2 + 2 + 64 + 64));
        out.extend_from_slice(&(self.records.len() as u32).to_be_bytes());
        for rec in self.records.values() {
            out.extend_from_slice(rec.signer.as_bytes());
            out.extend_from_slice(&(rec.chain.len() as u16).to_be_bytes());
            for c in &rec.chain {
                out.extend_from_slice(c.as_bytes());
            }
            out.extend_from_slice(&(rec.sig.0.len() as u16).to_be_bytes());
            out.extend_from_slice(&rec.sig.0);
        }
        out
    }

    pub fn decode(doc_ref: DocRef, bytes: &[u8]) -> Result<SignatureBlock, BlockDecodeError> {
        let mut r = Reader { buf: bytes };
        let count = u32::from_be_bytes(r.take::<4>()?);
        let mut block = SignatureBlock::new(doc_ref);
        let mut last: Option<PeerId> = None;
        for _ in 0..count {
            let signer = PeerId(r.take::<32>()?);
            if last.is_some_and(|l| l >= signer) {
                return Err(BlockDecodeError::NotCanonical);
            }
            last = Some(signer);
            let chain_len = u16::from_be_bytes(r.take::<2>()?) as usize;
            let mut chain = Vec::with_capacity(chain_len.min(256));
            for _ in 0..chain_len {
                chain.push(PeerId(r.take::<32>()?));
            }
            let sig_len = u16::from_be_bytes(r.take::<2>()?) as usize;
            let sig = SignatureBytes(r.slice(sig_len)?.to_vec());
            block.records.insert(signer, SignatureRecord { signer, chain, sig });
        }
        if !r.buf.is_empty() {
            return Err(BlockDecodeError::TrailingBytes(r.buf.len()));
        }
        Ok(block)
    }

    /// Digest of the canonical encoding together with the document reference.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.doc_ref.digest.as_bytes());
        h.update(self.doc_ref.path.as_str().as_bytes());
        h.update(self.doc_ref.version.to_be_bytes());
        h.update(self.doc_ref.size.to_be_bytes());
        h.update(self.encode());
        h.finalize().into()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&mut self, n: usize) -> Result<&'a [u8], BlockDecodeError> {
        if self.buf.len() < n {
            return Err(BlockDecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], BlockDecodeError> {
        Ok(self.slice(N)?.try_into().expect("length checked"))
    }
}

/// Creates `kp`'s record for a document. With a parent, the chain is the
/// parent's chain extended by the parent; without one, `kp` is the originator.
pub fn sign_document(
    kp: &KeyPair,
    doc_ref: &DocRef,
    parent_block: Option<&SignatureBlock>,
    parent: Option<PeerId>,
) -> Result<SignatureRecord, SignatureError> {
    let me = kp.peer_id();
    if let Some(block) = parent_block {
        if block.doc_ref() != doc_ref {
            return Err(SignatureError::DocRefMismatch);
        }
        if block.contains(&me) {
            return Err(SignatureError::AlreadySigned(me));
        }
    }
    let (chain, payload) = match parent {
        Some(p) => {
            let block = parent_block.ok_or(SignatureError::ParentUnknown(Some(p)))?;
            let parent_rec = block.record(&p).ok_or(SignatureError::ParentUnknown(Some(p)))?;
            let mut chain = parent_rec.chain.clone();
            chain.push(p);
            let sigs = block
                .chain_sigs(&chain)
                .ok_or(SignatureError::ParentUnknown(Some(p)))?;
            let payload = signing_payload(doc_ref, &chain, &sigs)?;
            (chain, payload)
        }
        None => {
            if parent_block.is_some_and(|b| b.originator().is_some()) {
                return Err(SignatureError::OriginatorExists);
            }
            (Vec::new(), signing_payload(doc_ref, &[], &[])?)
        }
    };
    Ok(SignatureRecord {
        signer: me,
        chain,
        sig: crypto::sign(kp, &payload),
    })
}

/// Summary of a block that passed verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedBlock {
    pub originator: PeerId,
    pub signers: BTreeSet<PeerId>,
}

/// Remembers records that already verified so repeated offers of a growing
/// block only pay for new signatures.
#[derive(Debug, Default, Clone)]
pub struct VerifyCache {
    verified: HashSet<[u8; 32]>,
}

impl VerifyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.verified.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verified.is_empty()
    }

    fn key(rec: &SignatureRecord, payload: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(rec.signer.as_bytes());
        h.update(&rec.sig.0);
        h.update(payload);
        h.finalize().into()
    }
}

pub fn verify_block(
    doc: Option<&Document>,
    block: &SignatureBlock,
    directory: &dyn KeyDirectory,
) -> Result<VerifiedBlock, VerifyError> {
    verify_block_cached(doc, block, directory, None)
}

pub fn verify_block_cached(
    doc: Option<&Document>,
    block: &SignatureBlock,
    directory: &dyn KeyDirectory,
    mut cache: Option<&mut VerifyCache>,
) -> Result<VerifiedBlock, VerifyError> {
    if let Some(doc) = doc {
        if &doc.doc_ref() != block.doc_ref() {
            return Err(VerifyError::DigestMismatch);
        }
    }
    let mut keys = BTreeMap::new();
    for rec in block.records() {
        let key = directory
            .public_key(&rec.signer)
            .ok_or(VerifyError::UnknownSigner(rec.signer))?;
        keys.insert(rec.signer, key);
        let mut seen = BTreeSet::new();
        if rec.chain.contains(&rec.signer) || !rec.chain.iter().all(|c| seen.insert(*c)) {
            return Err(VerifyError::MalformedChain(rec.signer));
        }
        if let Some(missing) = rec.chain.iter().find(|c| !block.contains(c)) {
            return Err(VerifyError::MissingChainRecord(*missing));
        }
        if let Some((parent, prefix)) = rec.chain.split_last() {
            if block.records[parent].chain != prefix {
                return Err(VerifyError::MalformedChain(rec.signer));
            }
        }
    }

    let mut originators = block.records().filter(|r| r.is_originator());
    let originator = originators.next().ok_or(VerifyError::NoOriginator)?.signer;
    if originators.next().is_some() {
        return Err(VerifyError::MultipleOriginators);
    }

    // Ancestors first, so a damaged signature is blamed on its owner rather
    // than on the descendants whose payloads embed it.
    let mut ordered: Vec<&SignatureRecord> = block.records().collect();
    ordered.sort_by_key(|r| (r.chain.len(), r.signer));
    for rec in ordered {
        let payload = block
            .payload_for(rec)
            .ok_or(VerifyError::MissingChainRecord(rec.signer))?;
        let key = VerifyCache::key(rec, &payload);
        if cache.as_ref().is_some_and(|c| c.verified.contains(&key)) {
            continue;
        }
        match crypto::verify(&keys[&rec.signer].0, &payload, &rec.sig.0) {
            Ok(true) => {
                if let Some(c) = cache.as_deref_mut() {
                    c.verified.insert(key);
                }
            }
            _ => return Err(VerifyError::BadSignature(rec.signer)),
        }
    }

    Ok(VerifiedBlock {
        originator,
        signers: block.signers(),
    })
}

/// Union of two blocks for the same document. `newly_learned` lists signers
/// present in `b` but not in `a`.
pub fn merge_blocks(
    a: &SignatureBlock,
    b: &SignatureBlock,
) -> Result<(SignatureBlock, BTreeSet<PeerId>), MergeError> {
    if a.doc_ref != b.doc_ref {
        return Err(MergeError::DocRefMismatch);
    }
    let mut merged = a.clone();
    let mut learned = BTreeSet::new();
    for (signer, rec) in &b.records {
        match a.records.get(signer) {
            Some(existing) if existing != rec => return Err(MergeError::ConflictingRecord(*signer)),
            Some(_) => {}
            None => {
                merged.records.insert(*signer, rec.clone());
                learned.insert(*signer);
            }
        }
    }
    Ok((merged, learned))
}

pub fn unsigned_peers(block: &SignatureBlock, group: &BTreeSet<PeerId>) -> BTreeSet<PeerId> {
    group.iter().filter(|p| !block.contains(p)).copied().collect()
}
