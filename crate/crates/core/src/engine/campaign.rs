//! Offer campaigns: repeated rounds of IHAVE messages for one document.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::crypto::PeerId;
use crate::signature::SignatureBlock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Campaign {
    pub round: u32,
    /// Record count of the block last offered to each target. Blocks only
    /// grow, so a smaller count means the target has not seen the current one.
    pub offered: BTreeMap<PeerId, usize>,
    pub next_due: u64,
    /// Set when every eligible peer has been offered the current block.
    pub dormant_since: Option<u64>,
    /// Catch-up campaigns run once over the group even for active documents.
    pub brief: bool,
    pub first_fanout: usize,
}

impl Campaign {
    pub fn new(first_fanout: usize, brief: bool, now: u64) -> Self {
        Campaign {
            round: 0,
            offered: BTreeMap::new(),
            next_due: now,
            dormant_since: None,
            brief,
            first_fanout,
        }
    }

    pub fn has_seen_current(&self, peer: &PeerId, block: &SignatureBlock) -> bool {
        self.offered.get(peer) == Some(&block.len())
    }
}

/// Orders candidates for the next offer round: peers that have neither signed
/// nor been offered the document, then unsigned peers, then signed peers.
/// Peers already offered the current block are skipped. Ties are shuffled.
pub fn select_targets<R: Rng>(
    candidates: impl IntoIterator<Item = PeerId>,
    block: &SignatureBlock,
    offered: &BTreeMap<PeerId, usize>,
    k: usize,
    rng: &mut R,
) -> Vec<PeerId> {
    let mut tiers: [Vec<PeerId>; 3] = Default::default();
    for p in candidates {
        if offered.get(&p) == Some(&block.len()) {
            continue;
        }
        let tier = match (block.contains(&p), offered.contains_key(&p)) {
            (false, false) => 0,
            (false, true) => 1,
            (true, _) => 2,
        };
        tiers[tier].push(p);
    }
    let mut out = Vec::with_capacity(k);
    for mut tier in tiers {
        if out.len() >= k {
            break;
        }
        tier.shuffle(rng);
        out.extend(tier.into_iter().take(k - out.len()));
    }
    out
}
