//! Helpers for driving the `ddnfs` binary in tests.

#![allow(dead_code)]

use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub const BIN: &str = env!("CARGO_BIN_EXE_ddnfs");

pub fn ddnfs(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run ddnfs")
}

/// Runs `ddnfs` and panics with its stderr unless it exits 0.
pub fn ddnfs_ok(dir: &Path, args: &[&str]) -> String {
    let out = ddnfs(dir, args);
    assert!(
        out.status.success(),
        "ddnfs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

pub fn free_addr() -> SocketAddr {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

/// A group of `peers` daemon configurations plus one admin key, all in one
/// temporary directory.
pub struct Group {
    pub dir: tempfile::TempDir,
    pub configs: Vec<PathBuf>,
    pub listen: Vec<SocketAddr>,
}

impl Group {
    pub fn new(peers: usize, round_ms: u64) -> Group {
        Group::with_policy(peers, round_ms, None)
    }

    pub fn with_policy(peers: usize, round_ms: u64, policy: Option<&str>) -> Group {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut make = vec!["peerlist-make".to_string()];
        let mut listen = Vec::new();
        for i in 1..=peers {
            ddnfs_ok(d, &["keygen", "--out", &format!("p{i}.key")]);
            let addr = free_addr();
            make.extend(["--peer".into(), format!("P{i},peer,{addr},p{i}.key")]);
            listen.push(addr);
        }
        ddnfs_ok(d, &["keygen", "--out", "a1.key", "--pub", "a1.pub"]);
        make.extend(["--peer".into(), "A1,admin,-,a1.pub".into()]);
        if let Some(text) = policy {
            std::fs::write(d.join("group.policy"), text).unwrap();
            make.extend(["--policy".into(), "group.policy".into()]);
        }
        make.extend(["--out".into(), "group.peerlist".into()]);
        let args: Vec<&str> = make.iter().map(String::as_str).collect();
        ddnfs_ok(d, &args);

        let configs = (1..=peers)
            .map(|i| {
                let path = d.join(format!("n{i}.conf"));
                let text = format!(
                    "key = p{i}.key\npeerlist = group.peerlist\nstore = store{i}\nlisten = {}\ncontrol = {}\nround_ms = {round_ms}\n",
                    listen[i - 1],
                    free_addr()
                );
                std::fs::write(&path, text).unwrap();
                path
            })
            .collect();
        Group { dir, configs, listen }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Runs a client command against node `i` (0-based).
    pub fn client(&self, i: usize, args: &[&str]) -> Output {
        let mut full = vec!["--config", self.configs[i].to_str().unwrap()];
        full.extend_from_slice(args);
        ddnfs(self.path(), &full)
    }

    pub fn spawn(&self, i: usize) -> Daemon {
        let child = Command::new(BIN)
            .current_dir(self.path())
            .args(["--config", self.configs[i].to_str().unwrap(), "daemon"])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn daemon");
        let daemon = Daemon(child);
        let deadline = Instant::now() + Duration::from_secs(5);
        while Instant::now() < deadline {
            if self.client(i, &["blacklist-show"]).status.success() {
                return daemon;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        panic!("daemon {i} did not come up");
    }
}

/// Kills the process if the test did not shut it down.
pub struct Daemon(pub Child);

impl Daemon {
    /// Waits up to `limit` for the process to exit on its own.
    pub fn wait_exit(&mut self, limit: Duration) -> bool {
        let deadline = Instant::now() + limit;
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.0.try_wait() {
                return true;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        false
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}
