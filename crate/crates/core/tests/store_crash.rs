use ddnfs_core::signature::verify_block;
use ddnfs_core::{
    generate_keypair, make_document, sign_document, DiskStore, DocPath, DocumentId, DocumentStatus, DocumentStore,
    KeyPair, PeerId, PublicKey, SignatureBlock, StoredDocument, VersionSel,
};
use std::collections::BTreeMap;

struct Fixture {
    keys: Vec<KeyPair>,
    directory: BTreeMap<PeerId, PublicKey>,
}

fn fixture() -> Fixture {
    let keys: Vec<KeyPair> = (0..3).map(|i| generate_keypair(Some(&[70 + i; 32])).unwrap()).collect();
    let directory = keys.iter().map(|k| (k.peer_id(), *k.public())).collect();
    Fixture { keys, directory }
}

fn stored(f: &Fixture, path: &str, version: u64, body: &str, signers: usize) -> StoredDocument {
    let doc = make_document(path, version, body.as_bytes().to_vec()).unwrap();
    let mut block = SignatureBlock::new(doc.doc_ref());
    block.insert(sign_document(&f.keys[0], &doc.doc_ref(), None, None).unwrap()).unwrap();
    for k in &f.keys[1..signers] {
        let rec = sign_document(k, &doc.doc_ref(), Some(&block), Some(f.keys[0].peer_id())).unwrap();
        block.insert(rec).unwrap();
    }
    StoredDocument::new(doc, block, 1_000, f.keys[0].peer_id())
}

/// Every stored document still verifies against its block and at most one
/// version per path is active.
fn assert_consistent(store: &DiskStore, f: &Fixture) {
    let mut active: BTreeMap<DocPath, u64> = BTreeMap::new();
    for id in store.document_ids() {
        let sd = store.get_exact(&id).unwrap();
        verify_block(Some(&sd.document), &sd.block, &f.directory).unwrap();
        if sd.status == DocumentStatus::Active {
            assert!(active.insert(id.path.clone(), id.version).is_none(), "two active versions of {}", id.path);
        }
    }
}

#[test]
fn reopen_after_any_interrupted_put_is_consistent() {
    let f = fixture();
    let v1 = stored(&f, "/etc/motd", 1, "one", 1);
    let mut v2 = stored(&f, "/etc/motd", 2, "two", 3);
    v2.status = DocumentStatus::Active;

    let probe = tempfile::tempdir().unwrap();
    let steps = {
        let mut s = DiskStore::open(probe.path()).unwrap();
        s.put(v1.clone()).unwrap();
        s.activate(v1.id()).unwrap();
        s.put_step_count(&v2).unwrap()
    };
    assert!(steps >= 3);

    for cut in 0..=steps {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = DiskStore::open(dir.path()).unwrap();
            s.put(v1.clone()).unwrap();
            s.activate(v1.id()).unwrap();
            s.put_interrupted(v2.clone(), cut).unwrap();
        }
        let s = DiskStore::open(dir.path()).unwrap();
        assert_consistent(&s, &f);
        assert_eq!(s.get_exact(v1.id()).unwrap().document, v1.document, "cut {cut}");
        match s.get_exact(v2.id()) {
            Some(sd) => assert_eq!(sd.document, v2.document),
            None => assert!(cut < steps, "complete put lost at cut {cut}"),
        }
        if cut == steps {
            let active = s.get(&DocPath::new("/etc/motd").unwrap(), VersionSel::Active).unwrap();
            assert_eq!(active.id().version, 2);
            assert_eq!(s.get_exact(v1.id()).unwrap().status, DocumentStatus::Superseded);
        }
    }
}

#[test]
fn block_growth_survives_reopen() {
    let f = fixture();
    let small = stored(&f, "/a", 1, "x", 1);
    let big = stored(&f, "/a", 1, "x", 3);
    let dir = tempfile::tempdir().unwrap();
    {
        let mut s = DiskStore::open(dir.path()).unwrap();
        s.put(small).unwrap();
        s.update_block(big.block.clone()).unwrap();
    }
    let s = DiskStore::open(dir.path()).unwrap();
    let id = DocumentId::new(DocPath::new("/a").unwrap(), 1).unwrap();
    assert_eq!(s.get_exact(&id).unwrap().block.len(), 3);
}

#[test]
fn torn_journal_tail_is_dropped() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let v1 = stored(&f, "/b", 1, "y", 1);
    {
        let mut s = DiskStore::open(dir.path()).unwrap();
        s.put(v1.clone()).unwrap();
    }
    let journal = dir.path().join("journal");
    let mut bytes = std::fs::read(&journal).unwrap();
    bytes.extend_from_slice(b"12345 /b 1 pend");
    std::fs::write(&journal, bytes).unwrap();
    let s = DiskStore::open(dir.path()).unwrap();
    assert_eq!(s.get_exact(v1.id()).unwrap().status, DocumentStatus::Pending);
}
