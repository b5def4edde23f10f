//! Key, public key and peerlist files.
//!
//! ```text
//! ddnfs-key v1          ddnfs-pub v1           version 3
//! <hex secret seed>     <base64 public key>    ddnfs-peerlist v1
//!                                              ...
//! ```

use std::path::Path;

use base64::Engine as _;
use ddnfs_core::{KeyPair, Peerlist, PublicKey};
use thiserror::Error;

const KEY_HEADER: &str = "ddnfs-key v1";
const PUB_HEADER: &str = "ddnfs-pub v1";

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn read(path: &Path) -> Result<String, FileError> {
    std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write(path: &Path, text: &str) -> Result<(), FileError> {
    std::fs::write(path, text).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn format_err(path: &Path, message: impl Into<String>) -> FileError {
    FileError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn render_key(kp: &KeyPair) -> String {
    format!("{KEY_HEADER}\n{}\n", hex::encode(kp.secret_bytes()))
}

pub fn render_public(key: &PublicKey) -> String {
    format!("{PUB_HEADER}\n{}\n", base64::engine::general_purpose::STANDARD.encode(key.0))
}

pub fn load_key(path: &Path) -> Result<KeyPair, FileError> {
    let text = read(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(KEY_HEADER) {
        return Err(format_err(path, "not a key file"));
    }
    let secret: [u8; 32] = lines
        .next()
        .and_then(|l| hex::decode(l.trim()).ok())
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| format_err(path, "bad secret"))?;
    Ok(KeyPair::from_secret(secret))
}

/// Reads a public key file, or derives the public key from a key file.
pub fn load_public(path: &Path) -> Result<PublicKey, FileError> {
    let text = read(path)?;
    match text.lines().next() {
        Some(KEY_HEADER) => load_key(path).map(|k| *k.public()),
        Some(PUB_HEADER) => text
            .lines()
            .nth(1)
            .and_then(|l| base64::engine::general_purpose::STANDARD.decode(l.trim()).ok())
            .and_then(|b| PublicKey::from_slice(&b).ok())
            .ok_or_else(|| format_err(path, "bad public key")),
        _ => Err(format_err(path, "neither a key nor a public key file")),
    }
}

pub fn render_peerlist(pl: &Peerlist) -> String {
    format!("version {}\n{}", pl.version, pl.render())
}

pub fn parse_peerlist(text: &str) -> Result<Peerlist, String> {
    let (first, body) = text.split_once('\n').ok_or("empty peerlist file")?;
    let version = first
        .strip_prefix("version ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or("first line must be `version <n>`")?;
    Peerlist::parse(version, body).map_err(|e| e.to_string())
}

pub fn load_peerlist(path: &Path) -> Result<Peerlist, FileError> {
    parse_peerlist(&read(path)?).map_err(|m| format_err(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddnfs_core::generate_keypair;

    #[test]
    fn key_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kp = generate_keypair(Some(&[3; 32])).unwrap();
        let (k, p) = (dir.path().join("k"), dir.path().join("k.pub"));
        write(&k, &render_key(&kp)).unwrap();
        write(&p, &render_public(kp.public())).unwrap();
        assert_eq!(load_key(&k).unwrap().peer_id(), kp.peer_id());
        assert_eq!(load_public(&p).unwrap(), *kp.public());
        assert_eq!(load_public(&k).unwrap(), *kp.public());
        assert!(load_key(&p).is_err());
    }

    #[test]
    fn peerlist_file_round_trip() {
        let g = ddnfs_core::testkit::Group::new(2, 1, "", 9).unwrap();
        let text = render_peerlist(&g.peerlist);
        let back = parse_peerlist(&text).unwrap();
        assert_eq!(back.version, 1);
        assert_eq!(back.render(), g.peerlist.render());
        assert!(parse_peerlist("ddnfs-peerlist v1\n").is_err());
    }
}
