use std::collections::{BTreeMap, BTreeSet};

use ddnfs_core::signature::{verify_block, VerifyError};
use ddnfs_core::{
    generate_keypair, make_document, merge_blocks, sign_document, KeyPair, PeerId, PublicKey, SignatureBlock,
};
use proptest::prelude::*;

struct Group {
    keys: Vec<KeyPair>,
    directory: BTreeMap<PeerId, PublicKey>,
}

fn group(n: usize) -> Group {
    let keys: Vec<KeyPair> = (0..n)
        .map(|i| generate_keypair(Some(&[i as u8 + 1; 32])).unwrap())
        .collect();
    let directory = keys.iter().map(|k| (k.peer_id(), *k.public())).collect();
    Group { keys, directory }
}

/// One step of honest distribution: a fresh peer signs a copy of a signer's
/// view, or one signer passes its view to another who merges it.
#[derive(Debug, Clone)]
enum Step {
    Sign { who: usize, parent: usize },
    Gossip { from: usize, to: usize },
}

/// Per-peer views after replaying `steps`; index 0 originates.
fn grow(g: &Group, content: &[u8], steps: &[Step]) -> BTreeMap<usize, SignatureBlock> {
    let doc = make_document("/t/doc", 1, content.to_vec()).unwrap();
    let mut origin = SignatureBlock::new(doc.doc_ref());
    origin
        .insert(sign_document(&g.keys[0], &doc.doc_ref(), None, None).unwrap())
        .unwrap();
    let mut views = BTreeMap::from([(0, origin)]);
    for step in steps {
        match *step {
            Step::Sign { who, parent } => {
                if views.contains_key(&who) || !views.contains_key(&parent) {
                    continue;
                }
                let mut view = views[&parent].clone();
                let rec = sign_document(&g.keys[who], &doc.doc_ref(), Some(&view), Some(g.keys[parent].peer_id()))
                    .unwrap();
                view.insert(rec).unwrap();
                views.insert(who, view);
            }
            Step::Gossip { from, to } => {
                if let (Some(a), Some(b)) = (views.get(&from), views.get(&to)) {
                    let (merged, _) = merge_blocks(b, a).unwrap();
                    views.insert(to, merged);
                }
            }
        }
    }
    views
}

fn records(b: &SignatureBlock) -> BTreeSet<(PeerId, Vec<PeerId>, Vec<u8>)> {
    b.records()
        .map(|r| (r.signer, r.chain.clone(), r.sig.0.clone()))
        .collect()
}

fn scenario() -> impl Strategy<Value = (usize, Vec<u8>, Vec<Step>)> {
    (2usize..=12, prop::collection::vec(any::<u8>(), 0..64)).prop_flat_map(|(n, content)| {
        let step = prop_oneof![
            3 => (1..n, 0..n).prop_map(|(who, parent)| Step::Sign { who, parent }),
            1 => (0..n, 0..n).prop_map(|(from, to)| Step::Gossip { from, to }),
        ];
        (Just(n), Just(content), prop::collection::vec(step, 0..3 * n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn merge_laws_and_honest_blocks_verify((n, content, steps) in scenario(), picks in prop::array::uniform3(any::<prop::sample::Index>())) {
        let g = group(n);
        let views = grow(&g, &content, &steps);
        let all: Vec<&SignatureBlock> = views.values().collect();
        let [a, b, c] = picks.map(|i| all[i.index(all.len())]);

        for v in &all {
            prop_assert!(verify_block(None, v, &g.directory).is_ok());
        }
        let (ab, _) = merge_blocks(a, b).unwrap();
        let (ba, _) = merge_blocks(b, a).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(&merge_blocks(a, a).unwrap().0, a);
        let (ab_c, _) = merge_blocks(&ab, c).unwrap();
        let (bc, _) = merge_blocks(b, c).unwrap();
        let (a_bc, _) = merge_blocks(a, &bc).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);

        let union: BTreeSet<_> = records(a).union(&records(b)).cloned().collect();
        prop_assert_eq!(records(&ab), union);
        prop_assert!(verify_block(None, &ab_c, &g.directory).is_ok());
    }

    #[test]
    fn newly_learned_is_set_difference((n, content, steps) in scenario()) {
        let g = group(n);
        let views = grow(&g, &content, &steps);
        for a in views.values() {
            for b in views.values() {
                let (_, learned) = merge_blocks(a, b).unwrap();
                let expected: BTreeSet<PeerId> = b.signers().difference(&a.signers()).copied().collect();
                prop_assert_eq!(learned, expected);
            }
        }
    }

    #[test]
    fn removing_a_chain_record_breaks_verification((n, content, steps) in scenario()) {
        let g = group(n);
        let views = grow(&g, &content, &steps);
        let full = views.values().fold(views[&0].clone(), |acc, v| merge_blocks(&acc, v).unwrap().0);
        let referenced: BTreeSet<PeerId> = full.records().flat_map(|r| r.chain.iter().copied()).collect();
        for signer in full.signers() {
            let mut cut = full.clone();
            cut.remove(&signer);
            let result = verify_block(None, &cut, &g.directory);
            if referenced.contains(&signer) {
                prop_assert_eq!(result, Err(VerifyError::MissingChainRecord(signer)));
            } else if cut.is_empty() {
                prop_assert_eq!(result, Err(VerifyError::NoOriginator));
            } else {
                prop_assert!(result.is_ok());
            }
        }
    }
}

#[test]
fn tampered_signature_is_blamed_on_its_signer() {
    let g = group(4);
    let views = grow(
        &g,
        b"x",
        &[Step::Sign { who: 1, parent: 0 }, Step::Sign { who: 2, parent: 1 }],
    );
    let mut block = views[&2].clone();
    let mid = g.keys[1].peer_id();
    block.record_mut(&mid).unwrap().sig.0[0] ^= 1;
    assert_eq!(verify_block(None, &block, &g.directory), Err(VerifyError::BadSignature(mid)));
}

#[test]
fn document_mismatch_is_rejected() {
    let g = group(2);
    let views = grow(&g, b"x", &[]);
    let other = make_document("/t/doc", 1, b"y".to_vec()).unwrap();
    assert_eq!(
        verify_block(Some(&other), &views[&0], &g.directory),
        Err(VerifyError::DigestMismatch)
    );
}

#[test]
fn unknown_signer_is_rejected() {
    let g = group(3);
    let views = grow(&g, b"x", &[Step::Sign { who: 2, parent: 0 }]);
    let mut directory = g.directory.clone();
    directory.remove(&g.keys[2].peer_id());
    assert_eq!(
        verify_block(None, &views[&2], &directory),
        Err(VerifyError::UnknownSigner(g.keys[2].peer_id()))
    );
}
