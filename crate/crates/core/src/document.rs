//! Immutable versioned documents, their identities and lifecycle status.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Name of the content digest algorithm, announced in the connection banner.
pub const DIGEST_ALGORITHM: &str = "sha256";

/// Reserved path of the group configuration document.
pub const PEERLIST_PATH: &str = "/peerlist";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("invalid version {0}: versions start at 1")]
    InvalidVersion(u64),
    #[error("invalid path pattern {0:?}")]
    InvalidPattern(String),
    #[error("invalid version selector {0:?}")]
    InvalidSelector(String),
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition {
        from: DocumentStatus,
        to: DocumentStatus,
    },
}

/// A 256-bit content digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
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
        Some(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A validated absolute document path such as `/logs/host1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocPath(String);

impl DocPath {
    pub fn new(path: impl Into<String>) -> Result<Self, DocumentError> {
        let path = path.into();
        if !valid_segments(&path, |_, _| true) {
            return Err(DocumentError::InvalidPath(path));
        }
        Ok(DocPath(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0[1..].split('/')
    }

    pub fn is_peerlist(&self) -> bool {
        self.0 == PEERLIST_PATH
    }

    pub fn peerlist() -> Self {
        DocPath(PEERLIST_PATH.to_string())
    }
}

impl fmt::Display for DocPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for DocPath {
    type Err = DocumentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DocPath::new(s)
    }
}

fn valid_segments(path: &str, mut extra: impl FnMut(usize, &str) -> bool) -> bool {
    let Some(rest) = path.strip_prefix('/') else {
        return false;
    };
    let count = rest.split('/').count();
    rest.split('/').enumerate().all(|(i, seg)| {
        !seg.is_empty() && seg != "." && seg != ".." && extra(count - 1 - i, seg)
    })
}

/// Name and version of a document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocumentId {
    pub path: DocPath,
    pub version: u64,
}

impl DocumentId {
    pub fn new(path: DocPath, version: u64) -> Result<Self, DocumentError> {
        if version == 0 {
            return Err(DocumentError::InvalidVersion(version));
        }
        Ok(DocumentId { path, version })
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.path, self.version)
    }
}

/// Everything a signature commits to about a document, without its content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocRef {
    pub path: DocPath,
    pub version: u64,
    pub size: u64,
    pub digest: Digest,
}

impl DocRef {
    pub fn id(&self) -> DocumentId {
        DocumentId {
            path: self.path.clone(),
            version: self.version,
        }
    }
}

/// An immutable document. Fields are private so size and digest always
/// describe the content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: DocumentId,
    content: Vec<u8>,
    digest: Digest,
}

impl Document {
    pub fn id(&self) -> &DocumentId {
        &self.id
    }

    pub fn path(&self) -> &DocPath {
        &self.id.path
    }

    pub fn version(&self) -> u64 {
        self.id.version
    }

    pub fn content(&self) -> &[u8] {
        &self.content
    }

    pub fn size(&self) -> u64 {
        self.content.len() as u64
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn doc_ref(&self) -> DocRef {
        DocRef {
            path: self.id.path.clone(),
            version: self.id.version,
            size: self.size(),
            digest: self.digest,
        }
    }

    pub fn from_parts(id: DocumentId, content: Vec<u8>) -> Self {
        let digest = Digest::of(&content);
        Document {
            id,
            content,
            digest,
        }
    }
}

pub fn make_document(
    path: &str,
    version: u64,
    content: impl Into<Vec<u8>>,
) -> Result<Document, DocumentError> {
    let id = DocumentId::new(DocPath::new(path)?, version)?;
    Ok(Document::from_parts(id, content.into()))
}

/// `Greater` means `a` supersedes `b`.
pub fn version_order(a: u64, b: u64) -> Ordering {
    a.cmp(&b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DocumentStatus {
    Pending,
    Active,
    Superseded,
}

impl DocumentStatus {
    pub fn can_transition(self, to: DocumentStatus) -> bool {
        use DocumentStatus::*;
        matches!(
            (self, to),
            (Pending, Active) | (Active, Superseded) | (Pending, Superseded)
        )
    }

    pub fn transition(self, to: DocumentStatus) -> Result<DocumentStatus, DocumentError> {
        if self.can_transition(to) {
            Ok(to)
        } else {
            Err(DocumentError::IllegalTransition { from: self, to })
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DocumentStatus::Pending => "pending",
            DocumentStatus::Active => "active",
            DocumentStatus::Superseded => "superseded",
        }
    }
}

impl fmt::Display for DocumentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DocumentStatus {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(DocumentStatus::Pending),
            "active" => Ok(DocumentStatus::Active),
            "superseded" => Ok(DocumentStatus::Superseded),
            _ => Err(()),
        }
    }
}

/// Version selector used by GET, HEAD and store lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VersionSel {
    Exact(u64),
    /// Highest known version.
    Any,
    /// The currently active version.
    Active,
}

impl fmt::Display for VersionSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionSel::Exact(v) => write!(f, "{v}"),
            VersionSel::Any => f.write_str("*"),
            VersionSel::Active => f.write_str("@"),
        }
    }
}

impl std::str::FromStr for VersionSel {
    type Err = DocumentError;

    /// `@`, `*` or a decimal version number greater than zero.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "@" => Ok(VersionSel::Active),
            "*" => Ok(VersionSel::Any),
            _ => match s.parse::<u64>() {
                Ok(v) if v > 0 => Ok(VersionSel::Exact(v)),
                _ => Err(DocumentError::InvalidSelector(s.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum PatternSegment {
    Literal(String),
    /// `*`: exactly one segment.
    One,
    /// trailing `**`: one or more segments.
    Rest,
}

/// A path glob: `*` matches one segment, a trailing `**` one or more.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathPattern {
    source: String,
    segments: Vec<PatternSegment>,
}

impl PathPattern {
    pub fn new(pattern: &str) -> Result<Self, DocumentError> {
        let mut segments = Vec::new();
        let ok = valid_segments(pattern, |remaining, seg| {
            segments.push(match seg {
                "*" => PatternSegment::One,
                "**" if remaining == 0 => PatternSegment::Rest,
                "**" => return false,
                lit => PatternSegment::Literal(lit.to_string()),
            });
            true
        });
        if !ok {
            return Err(DocumentError::InvalidPattern(pattern.to_string()));
        }
        Ok(PathPattern {
            source: pattern.to_string(),
            segments,
        })
    }

    /// Pattern matching every document.
    pub fn everything() -> Self {
        PathPattern::new("/**").expect("static pattern")
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn matches(&self, path: &DocPath) -> bool {
        let mut segs = path.segments();
        for (i, pat) in self.segments.iter().enumerate() {
            match pat {
                PatternSegment::Rest => {
                    debug_assert_eq!(i, self.segments.len() - 1);
                    return segs.next().is_some();
                }
                PatternSegment::One => {
                    if segs.next().is_none() {
                        return false;
                    }
                }
                PatternSegment::Literal(lit) => {
                    if segs.next() != Some(lit.as_str()) {
                        return false;
                    }
                }
            }
        }
        segs.next().is_none()
    }
}

impl fmt::Display for PathPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

pub fn path_match(pattern: &str, path: &str) -> Result<bool, DocumentError> {
    let pattern = PathPattern::new(pattern)?;
    let path = DocPath::new(path)?;
    Ok(pattern.matches(&path))
}
