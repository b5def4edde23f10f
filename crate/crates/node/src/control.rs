//! Loopback control channel between the admin tool and a running daemon.
//!
//! A request is one JSON line. The reply is `OK <len>\r\n` or `ERR <len>\r\n`
//! followed by `len` bytes of payload, after which the daemon closes the
//! connection.

use std::net::SocketAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

pub const MAX_REQUEST: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "kebab-case")]
pub enum Request {
    /// `content` is base64.
    Inject { path: String, content: String },
    /// Without `rogues` the local copy is used when present.
    Get { path: String, sel: String, rogues: Option<usize> },
    Head { pattern: String, sel: String },
    Status { path: String, sel: String },
    Reconcile { peer: String },
    BlacklistShow,
    Shutdown,
}

pub type Reply = Result<Vec<u8>, String>;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("cannot reach daemon at {addr}: {source}")]
    Connect { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed control message: {0}")]
    Malformed(String),
}

pub async fn read_request<R: AsyncBufRead + Unpin>(r: &mut R) -> Result<Request, ControlError> {
    let mut line = Vec::new();
    (&mut *r).take(MAX_REQUEST as u64).read_until(b'\n', &mut line).await?;
    serde_json::from_slice(&line).map_err(|e| ControlError::Malformed(e.to_string()))
}

pub async fn write_reply<W: AsyncWrite + Unpin>(w: &mut W, reply: &Reply) -> std::io::Result<()> {
    let (status, body) = match reply {
        Ok(b) => ("OK", b.as_slice()),
        Err(m) => ("ERR", m.as_bytes()),
    };
    w.write_all(format!("{status} {}\r\n", body.len()).as_bytes()).await?;
    w.write_all(body).await?;
    w.flush().await
}

pub async fn read_reply<R: AsyncBufRead + Unpin>(r: &mut R) -> Result<Reply, ControlError> {
    let mut header = String::new();
    r.read_line(&mut header).await?;
    let (status, len) = header
        .trim_end()
        .split_once(' ')
        .ok_or_else(|| ControlError::Malformed(header.clone()))?;
    let len: usize = len.parse().map_err(|_| ControlError::Malformed(header.clone()))?;
    if len > MAX_REQUEST {
        return Err(ControlError::Malformed("reply too large".into()));
    }
    let mut body = vec![0; len];
    r.read_exact(&mut body).await?;
    match status {
        "OK" => Ok(Ok(body)),
        "ERR" => Ok(Err(String::from_utf8_lossy(&body).into_owned())),
        _ => Err(ControlError::Malformed(header)),
    }
}

/// Sends one request to the daemon and waits for its reply.
pub async fn call(addr: SocketAddr, request: &Request) -> Result<Reply, ControlError> {
    let stream = TcpStream::connect(addr)
        .await
        .map_err(|source| ControlError::Connect { addr, source })?;
    let (r, mut w) = stream.into_split();
    let mut line = serde_json::to_vec(request).map_err(|e| ControlError::Malformed(e.to_string()))?;
    line.push(b'\n');
    w.write_all(&line).await?;
    w.flush().await?;
    read_reply(&mut BufReader::new(r)).await
}
