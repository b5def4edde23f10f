//! Daemon configuration file: `key = value` lines, `#` comments.
//!
//! ```text
//! key = p1.key
//! peerlist = group.peerlist
//! store = data/p1
//! listen = 127.0.0.1:7001
//! control = 127.0.0.1:7101
//! round_ms = 1000
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ddnfs_core::EngineConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing setting {0:?}")]
    Missing(&'static str),
    #[error("control address {0} is not a loopback address")]
    ControlNotLoopback(SocketAddr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub key: PathBuf,
    pub peerlist: PathBuf,
    pub store: PathBuf,
    pub listen: SocketAddr,
    pub control: SocketAddr,
    pub engine: EngineConfig,
    /// Peer connections without traffic for this long are closed.
    pub idle_timeout_ms: u64,
    pub startup_reconcile: bool,
}

impl NodeConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut key = None;
        let mut peerlist = None;
        let mut store = None;
        let mut listen = None;
        let mut control = None;
        let mut engine = EngineConfig::default();
        let mut idle_timeout_ms = 60_000;
        let mut startup_reconcile = true;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Parse { line: line_no, message };
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected key = value".into()))?;
            fn num<T: FromStr>(v: &str, line: usize) -> Result<T, ConfigError> {
                v.parse().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("bad value {v:?}"),
                })
            }
            match k {
                "key" => key = Some(base.join(v)),
                "peerlist" => peerlist = Some(base.join(v)),
                "store" => store = Some(base.join(v)),
                "listen" => listen = Some(num(v, line_no)?),
                "control" => control = Some(num(v, line_no)?),
                "fanout" => engine.fanout = num(v, line_no)?,
                "initial_fanout" => engine.initial_fanout = num(v, line_no)?,
                "round_ms" => engine.round_ms = num(v, line_no)?,
                "bucket" => engine.bucket_capacity = num(v, line_no)?,
                "refill" => engine.refill_per_window = num(v, line_no)?,
                "rate_window_ms" => engine.rate_window_ms = num(v, line_no)?,
                "get_timeout_ms" => engine.get_timeout_ms = num(v, line_no)?,
                "idle_timeout_ms" => idle_timeout_ms = num(v, line_no)?,
                "startup_reconcile" => startup_reconcile = num(v, line_no)?,
                _ => return Err(err(format!("unknown setting {k:?}"))),
            }
        }
        let listen: SocketAddr = listen.ok_or(ConfigError::Missing("listen"))?;
        let control = control.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], listen.port().wrapping_add(100))));
        if !control.ip().is_loopback() {
            return Err(ConfigError::ControlNotLoopback(control));
        }
        Ok(NodeConfig {
            key: key.ok_or(ConfigError::Missing("key"))?,
            peerlist: peerlist.ok_or(ConfigError::Missing("peerlist"))?,
            store: store.ok_or(ConfigError::Missing("store"))?,
            listen,
            control,
            engine,
            idle_timeout_ms,
            startup_reconcile,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = "key = k\npeerlist = /etc/pl\nstore = s # data\nlisten = 127.0.0.1:7001\nround_ms = 200\n";
        let c = NodeConfig::parse(text, Path::new("/srv")).unwrap();
        assert_eq!(c.key, PathBuf::from("/srv/k"));
        assert_eq!(c.peerlist, PathBuf::from("/etc/pl"));
        assert_eq!(c.control.to_string(), "127.0.0.1:7101");
        assert_eq!(c.engine.round_ms, 200);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(matches!(NodeConfig::parse("key = k\n", base), Err(ConfigError::Missing("listen"))));
        assert!(matches!(NodeConfig::parse("bogus\n", base), Err(ConfigError::Parse { line: 1, .. })));
        let remote = "key=k\npeerlist=p\nstore=s\nlisten=0.0.0.0:1\ncontrol=10.0.0.1:2\n";
        assert!(matches!(NodeConfig::parse(remote, base), Err(ConfigError::ControlNotLoopback(_))));
    }
}
