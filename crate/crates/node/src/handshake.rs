//! Connection authentication.
//!
//! Both sides send, without waiting for the other:
//!
//! ```text
//! ddnfs/1 sha256 ed25519\r\n
//! HELLO <peer id hex> <nonce hex>\r\n
//! AUTH <base64 signature over "ddnfs-auth", the other side's nonce and own id>\r\n
//! ```
//!
//! The AUTH line is written after the other side's HELLO is read. A side
//! whose id is not in the local peerlist, or whose signature fails, is dropped.

use base64::Engine as _;
use ddnfs_core::wire::{banner, check_banner};
use ddnfs_core::{KeyPair, PeerId, Peerlist};
use rand::RngCore;
use thiserror::Error;
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt};

const AUTH_CONTEXT: &[u8] = b"ddnfs-auth";
const MAX_LINE: usize = 1024;

#[derive(Debug, Error)]
pub enum HandshakeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("protocol banner mismatch: {0:?}")]
    Banner(String),
    #[error("malformed handshake line {0:?}")]
    Malformed(String),
    #[error("peer {0} is not in the peerlist")]
    UnknownPeer(PeerId),
    #[error("expected peer {expected}, got {actual}")]
    WrongPeer { expected: PeerId, actual: PeerId },
    #[error("authentication of {0} failed")]
    BadAuth(PeerId),
    #[error("connection closed during handshake")]
    Closed,
}

async fn read_line<R: AsyncBufRead + Unpin>(r: &mut R) -> Result<String, HandshakeError> {
    let mut buf = Vec::new();
    let n = (&mut *r).take(MAX_LINE as u64).read_until(b'\n', &mut buf).await?;
    if n == 0 {
        return Err(HandshakeError::Closed);
    }
    let line = String::from_utf8(buf).map_err(|_| HandshakeError::Malformed("non-utf8".into()))?;
    line.strip_suffix("\r\n")
        .map(str::to_string)
        .ok_or(HandshakeError::Malformed(line))
}

fn auth_payload(nonce: &[u8], signer: &PeerId) -> Vec<u8> {
    [AUTH_CONTEXT, nonce, signer.as_bytes()].concat()
}

/// Authenticates the remote side and returns its peer id.
pub async fn handshake<R, W>(
    reader: &mut R,
    writer: &mut W,
    keys: &KeyPair,
    peerlist: &Peerlist,
    expected: Option<PeerId>,
) -> Result<PeerId, HandshakeError>
where
    R: AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin,
{
    let mut nonce = [0u8; 32];
    rand::thread_rng().fill_bytes(&mut nonce);
    let hello = format!("{}HELLO {} {}\r\n", banner(), keys.peer_id().to_hex(), hex::encode(nonce));
    writer.write_all(hello.as_bytes()).await?;
    writer.flush().await?;

    let line = read_line(reader).await?;
    check_banner(&line).map_err(|_| HandshakeError::Banner(line.clone()))?;
    let line = read_line(reader).await?;
    let words: Vec<&str> = line.split(' ').collect();
    let (peer, their_nonce) = match words.as_slice() {
        ["HELLO", id, n] => (
            PeerId::from_hex(id).ok_or_else(|| HandshakeError::Malformed(line.clone()))?,
            hex::decode(n).map_err(|_| HandshakeError::Malformed(line.clone()))?,
        ),
        _ => return Err(HandshakeError::Malformed(line)),
    };
    if let Some(expected) = expected {
        if expected != peer {
            return Err(HandshakeError::WrongPeer { expected, actual: peer });
        }
    }
    let entry = peerlist.entry(&peer).ok_or(HandshakeError::UnknownPeer(peer))?;

    let sig = keys.sign(&auth_payload(&their_nonce, &keys.peer_id()));
    let auth = format!("AUTH {}\r\n", base64::engine::general_purpose::STANDARD.encode(sig.as_bytes()));
    writer.write_all(auth.as_bytes()).await?;
    writer.flush().await?;

    let line = read_line(reader).await?;
    let sig = line
        .strip_prefix("AUTH ")
        .and_then(|s| base64::engine::general_purpose::STANDARD.decode(s).ok())
        .ok_or_else(|| HandshakeError::Malformed(line.clone()))?;
    let ok = ddnfs_core::crypto::verify(&entry.public_key.0, &auth_payload(&nonce, &peer), &sig).unwrap_or(false);
    if !ok {
        return Err(HandshakeError::BadAuth(peer));
    }
    Ok(peer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddnfs_core::testkit::Group;
    use tokio::io::{duplex, split, BufReader};

    async fn run_pair(a: KeyPair, b: KeyPair, pl_a: Peerlist, pl_b: Peerlist) -> (Result<PeerId, HandshakeError>, Result<PeerId, HandshakeError>) {
        let (x, y) = duplex(4096);
        let (xr, mut xw) = split(x);
        let (yr, mut yw) = split(y);
        let left = async move { handshake(&mut BufReader::new(xr), &mut xw, &a, &pl_a, None).await };
        let right = async move { handshake(&mut BufReader::new(yr), &mut yw, &b, &pl_b, None).await };
        tokio::join!(left, right)
    }

    #[tokio::test]
    async fn members_authenticate_each_other() {
        let g = Group::new(2, 0, "", 1).unwrap();
        let (a, b) = (g.peers[0].clone(), g.peers[1].clone());
        let (ra, rb) = run_pair(a.clone(), b.clone(), g.peerlist.clone(), g.peerlist.clone()).await;
        assert_eq!(ra.unwrap(), b.peer_id());
        assert_eq!(rb.unwrap(), a.peer_id());
    }

    #[tokio::test]
    async fn outsiders_are_rejected() {
        let g = Group::new(2, 0, "", 1).unwrap();
        let other = Group::new(1, 0, "", 2).unwrap();
        let (ra, _) = run_pair(g.peers[0].clone(), other.peers[0].clone(), g.peerlist.clone(), other.peerlist.clone()).await;
        assert!(matches!(ra, Err(HandshakeError::UnknownPeer(_))));
    }
}
