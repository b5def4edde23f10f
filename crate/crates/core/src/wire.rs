//! Tagged message codec.
//!
//! Every frame starts with an ASCII header line `<tag> <VERB> <args…>\r\n`,
//! optionally followed by length-prefixed binary sections:
//!
//! ```text
//! a1 IHAVE <path> <version> <size> <digest> <blocklen>\r\n<block>
//! a2 GET <path> <version|*|@>\r\n
//! a2 GETANSWER ok <path> <version> <blocklen> <bodylen>\r\n<block><body>
//! a2 GETANSWER notfound\r\n
//! a3 HEAD <pattern> <version|*|@>\r\n
//! a3 HEADANSWER <ok|truncated|denied> <count>\r\n
//!    then per entry: <path> <version> <size> <digest> <blocklen>\r\n<block>
//! ```
//!
//! Paths are percent-encoded so they never contain spaces or control bytes.

use std::fmt;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use thiserror::Error;

use crate::crypto::SIGNATURE_ALGORITHM;
use crate::document::{Digest, DocPath, DocRef, Document, DocumentId, PathPattern, VersionSel, DIGEST_ALGORITHM};
use crate::signature::{BlockDecodeError, SignatureBlock};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_MAX_BODY: usize = 16 * 1024 * 1024;
pub const MAX_HEADER_LINE: usize = 8 * 1024;

const PATH_ESCAPES: &AsciiSet = &CONTROLS.add(b' ').add(b'%');

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("incomplete frame")]
    NeedMoreData,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("binary section does not match its declared length")]
    BodyLengthMismatch,
    #[error("section of {len} bytes exceeds the {cap}-byte limit")]
    OversizeBody { len: usize, cap: usize },
    #[error("banner mismatch: expected {expected:?}, got {got:?}")]
    BannerMismatch { expected: String, got: String },
}

fn malformed(msg: impl Into<String>) -> WireError {
    WireError::Malformed(msg.into())
}

/// Request/response correlation token: a lowercase letter and a counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(String);

impl Tag {
    pub fn new(prefix: char, counter: u64) -> Self {
        debug_assert!(prefix.is_ascii_lowercase());
        Tag(format!("{prefix}{counter}"))
    }

    pub fn parse(s: &str) -> Result<Self, WireError> {
        let mut chars = s.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && is_canonical_decimal(chars.as_str());
        if ok {
            Ok(Tag(s.to_string()))
        } else {
            Err(malformed(format!("bad tag {s:?}")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-connection tag source: `a1`, `a2`, …
#[derive(Debug, Clone)]
pub struct TagAllocator {
    prefix: char,
    counter: u64,
}

impl TagAllocator {
    pub fn new(prefix: char) -> Self {
        TagAllocator { prefix, counter: 0 }
    }

    pub fn next_tag(&mut self) -> Tag {
        self.counter += 1;
        Tag::new(self.prefix, self.counter)
    }
}

impl Default for TagAllocator {
    fn default() -> Self {
        TagAllocator::new('a')
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GetStatus {
    Ok,
    NotFound,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadStatus {
    Ok,
    /// More entries matched than the responder's cap; re-query narrower.
    Truncated,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Unsolicited offer; never answered.
    IHave(SignatureBlock),
    Get { path: DocPath, version: VersionSel },
    GetAnswer(GetAnswer),
    Head { pattern: PathPattern, version: VersionSel },
    HeadAnswer { status: HeadStatus, entries: Vec<SignatureBlock> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GetAnswer {
    Ok { document: Document, block: SignatureBlock },
    NotFound,
    Denied,
}

impl GetAnswer {
    pub fn status(&self) -> GetStatus {
        match self {
            GetAnswer::Ok { .. } => GetStatus::Ok,
            GetAnswer::NotFound => GetStatus::NotFound,
            GetAnswer::Denied => GetStatus::Denied,
        }
    }
}

impl Message {
    pub fn verb(&self) -> &'static str {
        match self {
            Message::IHave(_) => "IHAVE",
            Message::Get { .. } => "GET",
            Message::GetAnswer(_) => "GETANSWER",
            Message::Head { .. } => "HEAD",
            Message::HeadAnswer { .. } => "HEADANSWER",
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self, Message::Get { .. } | Message::Head { .. })
    }
}

fn is_canonical_decimal(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'))
}

fn parse_u64(s: &str, what: &str) -> Result<u64, WireError> {
    if !is_canonical_decimal(s) {
        return Err(malformed(format!("bad {what} {s:?}")));
    }
    s.parse().map_err(|_| malformed(format!("{what} out of range")))
}

fn parse_len(s: &str, what: &str, cap: usize) -> Result<usize, WireError> {
    let n = parse_u64(s, what)?;
    let n = usize::try_from(n).map_err(|_| malformed(format!("{what} out of range")))?;
    if n > cap {
        return Err(WireError::OversizeBody { len: n, cap });
    }
    Ok(n)
}

fn encode_path(p: &str) -> String {
    utf8_percent_encode(p, PATH_ESCAPES).to_string()
}

fn decode_path_text(s: &str) -> Result<String, WireError> {
    let decoded = percent_decode_str(s)
        .decode_utf8()
        .map_err(|_| malformed("path is not UTF-8"))?
        .into_owned();
    if encode_path(&decoded) != s {
        return Err(malformed(format!("non-canonical path encoding {s:?}")));
    }
    Ok(decoded)
}

fn parse_path(s: &str) -> Result<DocPath, WireError> {
    DocPath::new(decode_path_text(s)?).map_err(|e| malformed(e.to_string()))
}

fn parse_sel(s: &str) -> Result<VersionSel, WireError> {
    match s {
        "*" => Ok(VersionSel::Any),
        "@" => Ok(VersionSel::Active),
        _ => Ok(VersionSel::Exact(parse_version(s)?)),
    }
}

fn parse_version(s: &str) -> Result<u64, WireError> {
    match parse_u64(s, "version")? {
        0 => Err(malformed("version 0")),
        v => Ok(v),
    }
}

fn parse_digest(s: &str) -> Result<Digest, WireError> {
    if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(malformed("bad digest"));
    }
    Digest::from_hex(s).ok_or_else(|| malformed("bad digest"))
}

fn decode_block(doc_ref: DocRef, bytes: &[u8]) -> Result<SignatureBlock, WireError> {
    SignatureBlock::decode(doc_ref, bytes).map_err(|e| match e {
        BlockDecodeError::Truncated | BlockDecodeError::TrailingBytes(_) => WireError::BodyLengthMismatch,
        BlockDecodeError::NotCanonical => malformed("non-canonical signature block"),
    })
}

/// Encoder/decoder with a cap on binary section sizes.
#[derive(Debug, Clone, Copy)]
pub struct Codec {
    pub max_body: usize,
}

impl Default for Codec {
    fn default() -> Self {
        Codec {
            max_body: DEFAULT_MAX_BODY,
        }
    }
}

impl Codec {
    pub fn new(max_body: usize) -> Self {
        Codec { max_body }
    }

    fn check(&self, len: usize) -> Result<(), WireError> {
        if len > self.max_body {
            Err(WireError::OversizeBody {
                len,
                cap: self.max_body,
            })
        } else {
            Ok(())
        }
    }

    pub fn encode(&self, tag: &Tag, msg: &Message) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        let head = |out: &mut Vec<u8>, args: String| {
            out.extend_from_slice(format!("{tag} {} {args}\r\n", msg.verb()).as_bytes());
        };
        match msg {
            Message::IHave(block) => {
                let enc = block.encode();
                self.check(enc.len())?;
                head(&mut out, entry_line(block, enc.len()));
                out.extend_from_slice(&enc);
            }
            Message::Get { path, version } => head(&mut out, format!("{} {version}", encode_path(path.as_str()))),
            Message::Head { pattern, version } => {
                head(&mut out, format!("{} {version}", encode_path(pattern.as_str())))
            }
            Message::GetAnswer(GetAnswer::Ok { document, block }) => {
                let enc = block.encode();
                self.check(enc.len())?;
                self.check(document.content().len())?;
                head(
                    &mut out,
                    format!(
                        "ok {} {} {} {}",
                        encode_path(document.path().as_str()),
                        document.version(),
                        enc.len(),
                        document.content().len()
                    ),
                );
                out.extend_from_slice(&enc);
                out.extend_from_slice(document.content());
            }
            Message::GetAnswer(GetAnswer::NotFound) => head(&mut out, "notfound".into()),
            Message::GetAnswer(GetAnswer::Denied) => head(&mut out, "denied".into()),
            Message::HeadAnswer { status, entries } => {
                let status = match status {
                    HeadStatus::Ok => "ok",
                    HeadStatus::Truncated => "truncated",
                    HeadStatus::Denied => "denied",
                };
                head(&mut out, format!("{status} {}", entries.len()));
                for block in entries {
                    let enc = block.encode();
                    self.check(enc.len())?;
                    out.extend_from_slice(entry_line(block, enc.len()).as_bytes());
                    out.extend_from_slice(b"\r\n");
                    out.extend_from_slice(&enc);
                }
            }
        }
        Ok(out)
    }

    /// Decodes one frame from the front of `buf`. On `NeedMoreData` nothing
    /// is consumed and the caller should retry with more bytes.
    pub fn decode(&self, buf: &[u8]) -> Result<(Tag, Message, usize), WireError> {
        let mut cur = Cursor { buf, pos: 0 };
        let line = cur.line()?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() < 2 {
            return Err(malformed(format!("short header {line:?}")));
        }
        let tag = Tag::parse(fields[0])?;
        let args = &fields[2..];
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(malformed(format!("{} takes {n} arguments, got {}", fields[1], args.len())))
            }
        };
        let msg = match fields[1] {
            "IHAVE" => {
                arity(5)?;
                let block = self.entry(&mut cur, args)?;
                Message::IHave(block)
            }
            "GET" => {
                arity(2)?;
                Message::Get {
                    path: parse_path(args[0])?,
                    version: parse_sel(args[1])?,
                }
            }
            "HEAD" => {
                arity(2)?;
                let pattern = PathPattern::new(&decode_path_text(args[0])?)
                    .map_err(|e| malformed(e.to_string()))?;
                Message::Head {
                    pattern,
                    version: parse_sel(args[1])?,
                }
            }
            "GETANSWER" => match args.first().copied() {
                Some("ok") => {
                    arity(5)?;
                    let path = parse_path(args[1])?;
                    let version = parse_version(args[2])?;
                    let blocklen = parse_len(args[3], "block length", self.max_body)?;
                    let bodylen = parse_len(args[4], "body length", self.max_body)?;
                    let block_bytes = cur.take(blocklen)?;
                    let body = cur.take(bodylen)?.to_vec();
                    let id = DocumentId::new(path, version).map_err(|e| malformed(e.to_string()))?;
                    let document = Document::from_parts(id, body);
                    let block = decode_block(document.doc_ref(), block_bytes)?;
                    Message::GetAnswer(GetAnswer::Ok { document, block })
                }
                Some("notfound") => {
                    arity(1)?;
                    Message::GetAnswer(GetAnswer::NotFound)
                }
                Some("denied") => {
                    arity(1)?;
                    Message::GetAnswer(GetAnswer::Denied)
                }
                other => return Err(malformed(format!("bad GETANSWER status {other:?}"))),
            },
            "HEADANSWER" => {
                arity(2)?;
                let status = match args[0] {
                    "ok" => HeadStatus::Ok,
                    "truncated" => HeadStatus::Truncated,
                    "denied" => HeadStatus::Denied,
                    s => return Err(malformed(format!("bad HEADANSWER status {s:?}"))),
                };
                let count = parse_u64(args[1], "entry count")?;
                let mut entries = Vec::new();
                for _ in 0..count {
                    let line = cur.line()?;
                    let f: Vec<&str> = line.split(' ').collect();
                    if f.len() != 5 {
                        return Err(malformed(format!("bad HEADANSWER entry {line:?}")));
                    }
                    entries.push(self.entry(&mut cur, &f)?);
                }
                Message::HeadAnswer { status, entries }
            }
            verb => return Err(malformed(format!("unknown verb {verb:?}"))),
        };
        Ok((tag, msg, cur.pos))
    }

    /// `<path> <version> <size> <digest> <blocklen>` followed by the block.
    fn entry(&self, cur: &mut Cursor<'_>, f: &[&str]) -> Result<SignatureBlock, WireError> {
        let path = parse_path(f[0])?;
        let version = parse_version(f[1])?;
        let size = parse_u64(f[2], "size")?;
        let digest = parse_digest(f[3])?;
        let blocklen = parse_len(f[4], "block length", self.max_body)?;
        let bytes = cur.take(blocklen)?;
        decode_block(
            DocRef {
                path,
                version,
                size,
                digest,
            },
            bytes,
        )
    }
}

fn entry_line(block: &SignatureBlock, blocklen: usize) -> String {
    let r = block.doc_ref();
    format!(
        "{} {} {} {} {blocklen}",
        encode_path(r.path.as_str()),
        r.version,
        r.size,
        r.digest.to_hex()
    )
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str, WireError> {
        let rest = &self.buf[self.pos..];
        let window = &rest[..rest.len().min(MAX_HEADER_LINE + 2)];
        match window.windows(2).position(|w| w == b"\r\n") {
            Some(end) => {
                let line = std::str::from_utf8(&rest[..end])
                    .ok()
                    .filter(|l| l.is_ascii())
                    .ok_or_else(|| malformed("header is not ASCII"))?;
                self.pos += end + 2;
                Ok(line)
            }
            None if rest.len() > MAX_HEADER_LINE + 1 => Err(malformed("header line too long")),
            None => Err(WireError::NeedMoreData),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::NeedMoreData);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

pub fn encode(tag: &Tag, msg: &Message) -> Result<Vec<u8>, WireError> {
    Codec::default().encode(tag, msg)
}

pub fn decode(buf: &[u8]) -> Result<(Tag, Message, usize), WireError> {
    Codec::default().decode(buf)
}

/// Buffers a byte stream and yields complete frames in order.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    codec: Codec,
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new(codec: Codec) -> Self {
        FrameDecoder {
            codec,
            buf: Vec::new(),
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// `Ok(None)` when more bytes are needed. After an error the stream is
    /// unusable and the connection should be dropped.
    pub fn next_frame(&mut self) -> Result<Option<(Tag, Message)>, WireError> {
        match self.codec.decode(&self.buf) {
            Ok((tag, msg, used)) => {
                self.buf.drain(..used);
                Ok(Some((tag, msg)))
            }
            Err(WireError::NeedMoreData) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

pub fn banner() -> String {
    format!("ddnfs/{PROTOCOL_VERSION} {DIGEST_ALGORITHM} {SIGNATURE_ALGORITHM}\r\n")
}

/// Compares a received banner line (with or without the trailing CRLF).
pub fn check_banner(line: &str) -> Result<(), WireError> {
    let expected = banner();
    let got = line.trim_end_matches(['\r', '\n']);
    if got == expected.trim_end() {
        Ok(())
    } else {
        Err(WireError::BannerMismatch {
            expected: expected.trim_end().to_string(),
            got: got.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use crate::document::make_document;
    use crate::signature::sign_document;

    fn signed(path: &str, version: u64, body: &[u8], signers: u8) -> (Document, SignatureBlock) {
        let doc = make_document(path, version, body.to_vec()).unwrap();
        let mut block = SignatureBlock::new(doc.doc_ref());
        let mut parent = None;
        for i in 0..signers {
            let kp = generate_keypair(Some(&[i + 1; 32])).unwrap();
            let rec = sign_document(&kp, &doc.doc_ref(), Some(&block), parent).unwrap();
            parent = Some(kp.peer_id());
            block.insert(rec).unwrap();
        }
        (doc, block)
    }

    fn tag(s: &str) -> Tag {
        Tag::parse(s).unwrap()
    }

    #[test]
    fn get_and_head_headers() {
        let get = Message::Get {
            path: DocPath::new("/a/b").unwrap(),
            version: VersionSel::Exact(3),
        };
        assert_eq!(encode(&tag("a1"), &get).unwrap(), b"a1 GET /a/b 3\r\n");
        let head = Message::Head {
            pattern: PathPattern::new("/a/**").unwrap(),
            version: VersionSel::Active,
        };
        assert_eq!(encode(&tag("b2"), &head).unwrap(), b"b2 HEAD /a/** @\r\n");
        let any = Message::Get {
            path: DocPath::new("/a b/%").unwrap(),
            version: VersionSel::Any,
        };
        assert_eq!(encode(&tag("c9"), &any).unwrap(), b"c9 GET /a%20b/%25 *\r\n");
        assert_eq!(decode(b"c9 GET /a%20b/%25 *\r\n").unwrap(), (tag("c9"), any, 21));
    }

    #[test]
    fn tags_count_up() {
        let mut t = TagAllocator::default();
        assert_eq!(t.next_tag().as_str(), "a1");
        assert_eq!(t.next_tag().as_str(), "a2");
        for _ in 0..7 {
            t.next_tag();
        }
        assert_eq!(t.next_tag().as_str(), "a10");
        assert!(Tag::parse("A1").is_err());
        assert!(Tag::parse("a01").is_err());
        assert!(Tag::parse("a").is_err());
    }

    #[test]
    fn answers_round_trip() {
        let (doc, block) = signed("/x/y", 2, b"hello\r\nworld", 3);
        let (_, empty_block) = signed("/x/e", 1, b"", 1);
        let msgs = vec![
            Message::IHave(block.clone()),
            Message::GetAnswer(GetAnswer::Ok {
                document: doc.clone(),
                block: block.clone(),
            }),
            Message::GetAnswer(GetAnswer::NotFound),
            Message::GetAnswer(GetAnswer::Denied),
            Message::HeadAnswer {
                status: HeadStatus::Truncated,
                entries: vec![block, empty_block],
            },
            Message::HeadAnswer {
                status: HeadStatus::Denied,
                entries: vec![],
            },
        ];
        for m in msgs {
            let bytes = encode(&tag("q7"), &m).unwrap();
            let (t, back, used) = decode(&bytes).unwrap();
            assert_eq!((t, &back, used), (tag("q7"), &m, bytes.len()));
        }
        assert_eq!(
            encode(&tag("a4"), &Message::GetAnswer(GetAnswer::NotFound)).unwrap(),
            b"a4 GETANSWER notfound\r\n"
        );
    }

    #[test]
    fn partial_input_needs_more_data() {
        let (doc, block) = signed("/x", 1, b"0123456789", 2);
        let bytes = encode(&tag("a1"), &Message::GetAnswer(GetAnswer::Ok { document: doc, block })).unwrap();
        for cut in 0..bytes.len() {
            assert_eq!(decode(&bytes[..cut]), Err(WireError::NeedMoreData), "cut at {cut}");
        }
        let mut extended = bytes.clone();
        extended.extend_from_slice(b"garbage");
        let (_, _, used) = decode(&extended).unwrap();
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(decode(b"a1 GET /a 1 x y z\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 GET /a 01\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 GET /a +1\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 GET /a 0\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 GET a 1\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 FETCH /a 1\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 GETANSWER maybe\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1  GET /a 1\r\n"), Err(WireError::Malformed(_))));
        assert!(matches!(decode(b"a1 GET /a%2 1\r\n"), Err(WireError::Malformed(_))));
        let long = vec![b'a'; MAX_HEADER_LINE + 10];
        assert!(matches!(decode(&long), Err(WireError::Malformed(_))));
    }

    #[test]
    fn block_length_mismatch() {
        let (_, block) = signed("/x", 1, b"abc", 2);
        let enc = block.encode();
        let r = block.doc_ref();
        // declared one byte longer than the block; the extra byte is inside the section
        let mut frame = format!(
            "a1 IHAVE /x 1 {} {} {}\r\n",
            r.size,
            r.digest.to_hex(),
            enc.len() + 1
        )
        .into_bytes();
        frame.extend_from_slice(&enc);
        frame.push(0);
        assert_eq!(decode(&frame), Err(WireError::BodyLengthMismatch));
    }

    #[test]
    fn oversize_sections() {
        let (doc, block) = signed("/x", 1, &[7u8; 100], 1);
        let small = Codec::new(50);
        let msg = Message::GetAnswer(GetAnswer::Ok { document: doc, block });
        assert!(matches!(small.encode(&tag("a1"), &msg), Err(WireError::OversizeBody { .. })));
        let bytes = Codec::default().encode(&tag("a1"), &msg).unwrap();
        assert!(matches!(small.decode(&bytes), Err(WireError::OversizeBody { .. })));
    }

    #[test]
    fn frame_decoder_handles_byte_at_a_time() {
        let (doc, block) = signed("/x", 1, b"payload", 2);
        let msgs = [
            Message::IHave(block.clone()),
            Message::GetAnswer(GetAnswer::Ok { document: doc, block }),
            Message::GetAnswer(GetAnswer::Denied),
        ];
        let mut stream = Vec::new();
        for (i, m) in msgs.iter().enumerate() {
            stream.extend(encode(&Tag::new('z', i as u64 + 1), m).unwrap());
        }
        let mut dec = FrameDecoder::default();
        let mut out = Vec::new();
        for b in stream {
            dec.push(&[b]);
            while let Some(f) = dec.next_frame().unwrap() {
                out.push(f);
            }
        }
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].0.as_str(), "z3");
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn banner_check() {
        assert_eq!(banner(), "ddnfs/1 sha256 ed25519\r\n");
        assert!(check_banner("ddnfs/1 sha256 ed25519\r\n").is_ok());
        assert!(matches!(
            check_banner("ddnfs/1 sha512 ed25519"),
            Err(WireError::BannerMismatch { .. })
        ));
    }
}
