//! Proof that an originator signed two different documents under one name.

use thiserror::Error;

use crate::crypto::PeerId;
use crate::document::{Digest, DocPath, DocRef, DocumentId};
use crate::signature::{verify_block, KeyDirectory, SignatureBlock};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvidenceError {
    #[error("blocks name different documents")]
    DifferentIds,
    #[error("blocks have the same content digest")]
    SameDigest,
    #[error("blocks have different originators")]
    DifferentOriginators,
    #[error("originator signature does not verify")]
    BadSignature,
    #[error("malformed evidence encoding")]
    Malformed,
}

/// Two originator records for the same `(path, version)` over different
/// content. Verifiable by anyone holding the offender's public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    offender: PeerId,
    first: SignatureBlock,
    second: SignatureBlock,
}

impl Evidence {
    /// Builds evidence from two blocks, keeping only the originator records.
    /// The blocks are ordered by digest so both detectors produce equal values.
    pub fn from_blocks(a: &SignatureBlock, b: &SignatureBlock) -> Result<Self, EvidenceError> {
        if a.doc_ref().id() != b.doc_ref().id() {
            return Err(EvidenceError::DifferentIds);
        }
        if a.doc_ref().digest == b.doc_ref().digest {
            return Err(EvidenceError::SameDigest);
        }
        let (oa, ob) = match (a.originator(), b.originator()) {
            (Some(oa), Some(ob)) if oa.signer == ob.signer => (oa.signer, ob.signer),
            _ => return Err(EvidenceError::DifferentOriginators),
        };
        let (mut first, mut second) = (a.closure_of([oa]), b.closure_of([ob]));
        if first.doc_ref().digest > second.doc_ref().digest {
            std::mem::swap(&mut first, &mut second);
        }
        Ok(Evidence {
            offender: oa,
            first,
            second,
        })
    }

    pub fn offender(&self) -> PeerId {
        self.offender
    }

    pub fn id(&self) -> DocumentId {
        self.first.doc_ref().id()
    }

    pub fn blocks(&self) -> [&SignatureBlock; 2] {
        [&self.first, &self.second]
    }

    pub fn verify(&self, directory: &dyn KeyDirectory) -> Result<(), EvidenceError> {
        for block in self.blocks() {
            let v = verify_block(None, block, directory).map_err(|_| EvidenceError::BadSignature)?;
            if v.originator != self.offender {
                return Err(EvidenceError::DifferentOriginators);
            }
        }
        Evidence::from_blocks(&self.first, &self.second).map(|_| ())
    }

    /// Text header lines plus canonical block bytes, one section per block.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for block in self.blocks() {
            let r = block.doc_ref();
            let enc = block.encode();
            out.extend_from_slice(
                format!(
                    "{} {} {} {} {}\n",
                    hex::encode(r.path.as_str()),
                    r.version,
                    r.size,
                    r.digest.to_hex(),
                    enc.len()
                )
                .as_bytes(),
            );
            out.extend_from_slice(&enc);
        }
        out
    }

    pub fn decode(mut bytes: &[u8]) -> Result<Self, EvidenceError> {
        let mut blocks = Vec::new();
        for _ in 0..2 {
            let nl = bytes.iter().position(|&b| b == b'\n').ok_or(EvidenceError::Malformed)?;
            let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| EvidenceError::Malformed)?;
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 5 {
                return Err(EvidenceError::Malformed);
            }
            let path = hex::decode(f[0])
                .ok()
                .and_then(|p| String::from_utf8(p).ok())
                .and_then(|p| DocPath::new(p).ok())
                .ok_or(EvidenceError::Malformed)?;
            let num = |s: &str| s.parse::<u64>().map_err(|_| EvidenceError::Malformed);
            let doc_ref = DocRef {
                path,
                version: num(f[1])?,
                size: num(f[2])?,
                digest: Digest::from_hex(f[3]).ok_or(EvidenceError::Malformed)?,
            };
            let len = num(f[4])? as usize;
            let rest = &bytes[nl + 1..];
            if rest.len() < len {
                return Err(EvidenceError::Malformed);
            }
            blocks.push(SignatureBlock::decode(doc_ref, &rest[..len]).map_err(|_| EvidenceError::Malformed)?);
            bytes = &rest[len..];
        }
        if !bytes.is_empty() {
            return Err(EvidenceError::Malformed);
        }
        Evidence::from_blocks(&blocks[0], &blocks[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, PublicKey};
    use crate::document::make_document;
    use crate::signature::sign_document;
    use std::collections::BTreeMap;

    fn block(kp: &crate::crypto::KeyPair, body: &[u8]) -> SignatureBlock {
        let doc = make_document("/e", 4, body.to_vec()).unwrap();
        let mut b = SignatureBlock::new(doc.doc_ref());
        b.insert(sign_document(kp, &doc.doc_ref(), None, None).unwrap()).unwrap();
        b
    }

    #[test]
    fn builds_verifies_and_round_trips() {
        let bad = generate_keypair(Some(&[5; 32])).unwrap();
        let other = generate_keypair(Some(&[6; 32])).unwrap();
        let dir: BTreeMap<PeerId, PublicKey> = [
            (bad.peer_id(), *bad.public()),
            (other.peer_id(), *other.public()),
        ]
        .into();
        let (x, y) = (block(&bad, b"x"), block(&bad, b"y"));
        let ev = Evidence::from_blocks(&x, &y).unwrap();
        assert_eq!(ev, Evidence::from_blocks(&y, &x).unwrap());
        assert_eq!(ev.offender(), bad.peer_id());
        ev.verify(&dir).unwrap();
        assert_eq!(Evidence::decode(&ev.encode()).unwrap(), ev);

        assert_eq!(Evidence::from_blocks(&x, &x), Err(EvidenceError::SameDigest));
        assert_eq!(
            Evidence::from_blocks(&x, &block(&other, b"y")),
            Err(EvidenceError::DifferentOriginators)
        );
        assert!(Evidence::decode(b"junk").is_err());
    }
}
