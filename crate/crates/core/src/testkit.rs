//! Deterministic peer groups for tests and simulations.

use crate::crypto::{generate_keypair, KeyPair, PeerId};
use crate::policy::{Peerlist, PeerEntry, PolicyError, Role};

/// Keys and a peerlist for `peers` ordinary peers and `admins` administrators.
/// Peers are named `P1..`, admins `A1..`; keys derive from `seed`.
#[derive(Debug, Clone)]
pub struct Group {
    pub peers: Vec<KeyPair>,
    pub admins: Vec<KeyPair>,
    pub peerlist: Peerlist,
}

impl Group {
    pub fn new(peers: usize, admins: usize, policy: &str, seed: u64) -> Result<Self, PolicyError> {
        let key = |role: u8, i: usize| {
            let mut s = [0u8; 32];
            s[..8].copy_from_slice(&seed.to_le_bytes());
            s[8] = role;
            s[9..17].copy_from_slice(&(i as u64).to_le_bytes());
            generate_keypair(Some(&s)).expect("32-byte seed")
        };
        let peer_keys: Vec<KeyPair> = (0..peers).map(|i| key(1, i)).collect();
        let admin_keys: Vec<KeyPair> = (0..admins).map(|i| key(2, i)).collect();
        let mut entries = Vec::new();
        for (i, k) in peer_keys.iter().enumerate() {
            entries.push(PeerEntry {
                id: k.peer_id(),
                public_key: *k.public(),
                role: Role::Peer,
                address: Some(format!("127.0.0.1:{}", 17000 + i)),
                name: Some(format!("P{}", i + 1)),
            });
        }
        for (i, k) in admin_keys.iter().enumerate() {
            entries.push(PeerEntry {
                id: k.peer_id(),
                public_key: *k.public(),
                role: Role::Admin,
                address: None,
                name: Some(format!("A{}", i + 1)),
            });
        }
        let peerlist = Peerlist::new(1, entries, policy)?;
        Ok(Group {
            peers: peer_keys,
            admins: admin_keys,
            peerlist,
        })
    }

    pub fn peer_ids(&self) -> Vec<PeerId> {
        self.peers.iter().map(|k| k.peer_id()).collect()
    }
}
