//! Peer identities and the signing contract.
//!
//! Signatures are Ed25519 (deterministic, 64 bytes) over caller-supplied
//! canonical payloads. A peer is identified by the SHA-256 fingerprint of its
//! public key.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const SIGNATURE_ALGORITHM: &str = "ed25519";
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const MIN_SEED_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("seed must be at least {MIN_SEED_LEN} bytes, got {0}")]
    SeedTooShort(usize),
    #[error("malformed public key")]
    MalformedKey,
    #[error("malformed signature")]
    MalformedSignature,
}

/// Fingerprint of a public key; the identity of a peer or administrator.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub [u8; 32]);

impl PeerId {
    pub fn of_key(key: &PublicKey) -> Self {
        PeerId(Sha256::digest(key.0).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(PeerId(out))
    }

    /// First eight hex digits, for logs and reports.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeerId({})", self.short())
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::MalformedKey)?;
        Ok(PublicKey(arr))
    }

    pub fn peer_id(&self) -> PeerId {
        PeerId::of_key(self)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..4]))
    }
}

/// Raw signature bytes. Length is not checked until verification so that
/// malformed signatures received off the wire can still be represented.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignatureBytes(pub Vec<u8>);

impl SignatureBytes {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.len().min(4);
        write!(f, "Sig({}..)", hex::encode(&self.0[..n]))
    }
}

pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&secret);
        let public = PublicKey(signing.verifying_key().to_bytes());
        KeyPair { signing, public }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn peer_id(&self) -> PeerId {
        self.public.peer_id()
    }

    pub fn sign(&self, payload: &[u8]) -> SignatureBytes {
        SignatureBytes(self.signing.sign(payload).to_bytes().to_vec())
    }
}

impl Clone for KeyPair {
    fn clone(&self) -> Self {
        KeyPair::from_secret(self.secret_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("peer", &self.peer_id())
            .finish_non_exhaustive()
    }
}

/// Seeded generation is deterministic; the seed is hashed down to the secret.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair, CryptoError> {
    let secret = match seed {
        Some(seed) if seed.len() < MIN_SEED_LEN => return Err(CryptoError::SeedTooShort(seed.len())),
        Some(seed) => Sha256::digest(seed).into(),
        None => {
            let mut secret = [0u8; 32];
            rand::rngs::OsRng.fill_bytes(&mut secret);
            secret
        }
    };
    Ok(KeyPair::from_secret(secret))
}

pub fn sign(kp: &KeyPair, payload: &[u8]) -> SignatureBytes {
    kp.sign(payload)
}

/// `Ok(false)` means well-formed inputs that do not verify.
pub fn verify(public: &[u8], payload: &[u8], sig: &[u8]) -> Result<bool, CryptoError> {
    let key_bytes: [u8; PUBLIC_KEY_LEN] = public.try_into().map_err(|_| CryptoError::MalformedKey)?;
    let key = VerifyingKey::from_bytes(&key_bytes).map_err(|_| CryptoError::MalformedKey)?;
    let sig_bytes: [u8; SIGNATURE_LEN] = sig.try_into().map_err(|_| CryptoError::MalformedSignature)?;
    let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
    Ok(key.verify(payload, &sig).is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = generate_keypair(Some(&[0u8; 32])).unwrap();
        let b = generate_keypair(Some(&[0u8; 32])).unwrap();
        assert_eq!(a.public(), b.public());
        assert_eq!(a.secret_bytes(), b.secret_bytes());
        let c = generate_keypair(Some(&[1u8; 32])).unwrap();
        assert_ne!(a.public(), c.public());
    }

    #[test]
    fn short_seed_rejected() {
        assert_eq!(
            generate_keypair(Some(&[0u8; 4])).unwrap_err(),
            CryptoError::SeedTooShort(4)
        );
    }

    #[test]
    fn fresh_pair_round_trips() {
        let kp = generate_keypair(None).unwrap();
        let sig = sign(&kp, b"x");
        assert!(verify(&kp.public().0, b"x", sig.as_bytes()).unwrap());
    }

    #[test]
    fn sign_verify_examples() {
        let kp = generate_keypair(Some(&[7u8; 32])).unwrap();
        let other = generate_keypair(Some(&[8u8; 32])).unwrap();
        let payload = b"document payload".to_vec();
        let sig = sign(&kp, &payload);
        assert!(verify(&kp.public().0, &payload, sig.as_bytes()).unwrap());

        let mut flipped = payload.clone();
        flipped[3] ^= 0x01;
        assert!(!verify(&kp.public().0, &flipped, sig.as_bytes()).unwrap());
        assert!(!verify(&other.public().0, &payload, sig.as_bytes()).unwrap());
    }

    #[test]
    fn malformed_inputs_are_errors() {
        let kp = generate_keypair(Some(&[7u8; 32])).unwrap();
        let sig = sign(&kp, b"m");
        assert_eq!(verify(&[1, 2, 3], b"m", sig.as_bytes()), Err(CryptoError::MalformedKey));
        assert_eq!(
            verify(&kp.public().0, b"m", &sig.as_bytes()[..10]),
            Err(CryptoError::MalformedSignature)
        );
    }

    #[test]
    fn fingerprints_are_injective_over_corpus() {
        let ids: HashSet<PeerId> = (0u8..=200)
            .map(|i| generate_keypair(Some(&[i; 32])).unwrap().peer_id())
            .collect();
        assert_eq!(ids.len(), 201);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn only_the_signer_verifies(seed_a in any::<[u8; 32]>(), seed_b in any::<[u8; 32]>(),
                                    msg in proptest::collection::vec(any::<u8>(), 0..128)) {
            let a = generate_keypair(Some(&seed_a)).unwrap();
            let b = generate_keypair(Some(&seed_b)).unwrap();
            let sig = a.sign(&msg);
            prop_assert!(verify(&a.public().0, &msg, sig.as_bytes()).unwrap());
            if seed_a != seed_b {
                prop_assert!(!verify(&b.public().0, &msg, sig.as_bytes()).unwrap());
            }
        }
    }
}
