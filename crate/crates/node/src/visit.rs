//! Short-lived peer sessions for administrator keys, which run no daemon.

use std::time::Duration;

use anyhow::{anyhow, bail, Result};
use ddnfs_core::signature::verify_block;
use ddnfs_core::wire::TagAllocator;
use ddnfs_core::{
    sign_document, Codec, DocPath, Document, DocumentId, FrameDecoder, GetAnswer, KeyPair, Message, PeerId, Peerlist,
    SignatureBlock, VersionSel,
};
use tokio::io::{AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tracing::info;

use crate::daemon::{DIAL_TIMEOUT, HANDSHAKE_TIMEOUT};
use crate::handshake::handshake;

/// Lets queued frames reach the daemon before the socket closes.
const DRAIN: Duration = Duration::from_millis(200);

struct Session {
    peer: PeerId,
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
    codec: Codec,
    tags: TagAllocator,
    decoder: FrameDecoder,
}

impl Session {
    async fn open(addr: &str, keys: &KeyPair, peerlist: &Peerlist) -> Result<Session> {
        let stream = tokio::time::timeout(DIAL_TIMEOUT, TcpStream::connect(addr)).await??;
        let (r, mut writer) = stream.into_split();
        let mut reader = BufReader::new(r);
        let peer =
            tokio::time::timeout(HANDSHAKE_TIMEOUT, handshake(&mut reader, &mut writer, keys, peerlist, None)).await??;
        Ok(Session {
            peer,
            reader,
            writer,
            codec: Codec::default(),
            tags: TagAllocator::new('t'),
            decoder: FrameDecoder::default(),
        })
    }

    async fn send(&mut self, message: &Message) -> Result<ddnfs_core::Tag> {
        let tag = self.tags.next_tag();
        self.writer.write_all(&self.codec.encode(&tag, message)?).await?;
        Ok(tag)
    }

    /// Next frame, or `None` on timeout or EOF.
    async fn next(&mut self, deadline: tokio::time::Instant) -> Result<Option<(ddnfs_core::Tag, Message)>> {
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            if let Some(frame) = self.decoder.next_frame()? {
                return Ok(Some(frame));
            }
            let read = tokio::select! {
                r = self.reader.read(&mut buf) => r?,
                _ = tokio::time::sleep_until(deadline) => return Ok(None),
            };
            if read == 0 {
                return Ok(None);
            }
            self.decoder.push(&buf[..read]);
        }
    }
}

/// Offers a signed document to one daemon and serves its GET for it.
pub async fn offer_once(
    addr: &str,
    keys: &KeyPair,
    peerlist: &Peerlist,
    document: Document,
    block: SignatureBlock,
    wait: Duration,
) -> Result<()> {
    let mut s = Session::open(addr, keys, peerlist).await?;
    s.send(&Message::IHave(block.clone())).await?;
    let deadline = tokio::time::Instant::now() + wait;
    while let Some((tag, message)) = s.next(deadline).await? {
        let Message::Get { path, .. } = message else { continue };
        let answer = if &path == document.path() {
            GetAnswer::Ok {
                document: document.clone(),
                block: block.clone(),
            }
        } else {
            GetAnswer::NotFound
        };
        let served = matches!(answer, GetAnswer::Ok { .. });
        s.writer.write_all(&s.codec.encode(&tag, &Message::GetAnswer(answer))?).await?;
        if served {
            tokio::time::sleep(DRAIN).await;
            info!(peer = %s.peer.short(), "document fetched");
            return Ok(());
        }
    }
    bail!("{} never requested the document", s.peer.short())
}

/// Fetches a document from a daemon, adds this key's signature with the
/// originator as parent, and offers the grown block back.
pub async fn countersign(
    addr: &str,
    keys: &KeyPair,
    peerlist: &Peerlist,
    path: DocPath,
    version: VersionSel,
    wait: Duration,
) -> Result<DocumentId> {
    let mut s = Session::open(addr, keys, peerlist).await?;
    let asked = s.send(&Message::Get { path: path.clone(), version }).await?;
    let deadline = tokio::time::Instant::now() + wait;
    let (document, mut block) = loop {
        let (tag, message) = s
            .next(deadline)
            .await?
            .ok_or_else(|| anyhow!("{} did not answer", s.peer.short()))?;
        match message {
            Message::GetAnswer(answer) if tag == asked => match answer {
                GetAnswer::Ok { document, block } => break (document, block),
                GetAnswer::NotFound => bail!("{path} not found at {}", s.peer.short()),
                GetAnswer::Denied => bail!("{} denied the request", s.peer.short()),
            },
            _ => continue,
        }
    };
    let verified = verify_block(Some(&document), &block, peerlist)?;
    if block.contains(&keys.peer_id()) {
        info!(id = %document.id(), "already signed");
        return Ok(document.id().clone());
    }
    let record = sign_document(keys, block.doc_ref(), Some(&block), Some(verified.originator))?;
    block.insert(record)?;
    s.send(&Message::IHave(block)).await?;
    tokio::time::sleep(DRAIN).await;
    Ok(document.id().clone())
}
