//! Replicated document notarization: immutable versioned documents certified
//! by hierarchical overlapping signatures and replicated by a push/pull
//! epidemic protocol among mutually untrusting peers.

pub mod crypto;
pub mod document;
pub mod engine;
pub mod evidence;
pub mod policy;
pub mod signature;
pub mod store;
pub mod testkit;
pub mod wire;

pub use crypto::{generate_keypair, KeyPair, PeerId, PublicKey, SignatureBytes};
pub use document::{
    make_document, path_match, version_order, DocPath, DocRef, Document, DocumentId,
    DocumentStatus, PathPattern, VersionSel,
};
pub use signature::{
    merge_blocks, sign_document, signing_payload, unsigned_peers, verify_block, SignatureBlock,
    SignatureRecord,
};
pub use engine::{Action, Engine, EngineConfig, EngineError, FetchError, FetchId, Via};
pub use evidence::Evidence;
pub use policy::{Peerlist, PeerEntry, PolicyError, Role};
pub use store::{DiskStore, DocumentStore, MemoryStore, StoreError, StoredDocument};
pub use wire::{Codec, FrameDecoder, GetAnswer, HeadStatus, Message, Tag};
