mod common;

use std::time::{Duration, Instant};

use common::{ddnfs, ddnfs_ok, Group};

fn wait_until(limit: Duration, mut f: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + limit;
    while Instant::now() < deadline {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
    false
}

#[test]
fn keygen_prints_fingerprint_and_refuses_garbage_keys() {
    let dir = tempfile::tempdir().unwrap();
    let id = ddnfs_ok(dir.path(), &["keygen", "--out", "k", "--pub", "k.pub"]);
    assert_eq!(id.trim().len(), 64);
    std::fs::write(dir.path().join("bad.key"), "ddnfs-key v1\nnothex\n").unwrap();
    let out = ddnfs(
        dir.path(),
        &["peerlist-make", "--peer", "P1,peer,127.0.0.1:1,bad.key", "--out", "pl"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ddnfs(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(ddnfs(dir.path(), &["get"]).status.code(), Some(2));
}

#[test]
fn client_without_daemon_fails() {
    let g = Group::new(1, 100);
    let out = g.client(0, &["head", "/**"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn daemon_refuses_listen_address_missing_from_peerlist() {
    let g = Group::new(1, 100);
    let conf = std::fs::read_to_string(&g.configs[0]).unwrap();
    let other = common::free_addr();
    let conf = conf.replace(&format!("listen = {}", g.listen[0]), &format!("listen = {other}"));
    std::fs::write(&g.configs[0], conf).unwrap();
    let out = ddnfs(g.path(), &["--config", g.configs[0].to_str().unwrap(), "daemon"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("peerlist"));
}

#[test]
fn non_admin_cannot_sign_peerlist() {
    let g = Group::new(2, 100);
    ddnfs_ok(
        g.path(),
        &[
            "peerlist-make", "--version", "2",
            "--peer", &format!("P1,peer,{},p1.key", g.listen[0]),
            "--peer", "A1,admin,-,a1.pub",
            "--out", "v2.peerlist",
        ],
    );
    let out = ddnfs(
        g.path(),
        &["peerlist-sign", "--key", "p2.key", "--current", "group.peerlist", "--candidate", "v2.peerlist"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("administrator"));
}

#[test]
fn single_peer_serves_its_own_documents() {
    let g = Group::new(1, 100);
    let _d = g.spawn(0);
    std::fs::write(g.path().join("a"), "first\n").unwrap();
    std::fs::write(g.path().join("b"), "second\n").unwrap();
    assert_eq!(ddnfs_ok(g.path(), &["--config", g.configs[0].to_str().unwrap(), "inject", "/x", "a"]).trim(), "/x@1");
    assert_eq!(g.client(0, &["inject", "/x", "b"]).status.code(), Some(0));

    assert_eq!(g.client(0, &["get", "/x", "1"]).stdout, b"first\n");
    assert_eq!(g.client(0, &["get", "/x", "@"]).stdout, b"second\n");
    let head = String::from_utf8(g.client(0, &["head", "/**", "*"]).stdout).unwrap();
    assert!(head.contains("/x 1 superseded"), "{head}");
    assert!(head.contains("/x 2 active"), "{head}");
    let status = String::from_utf8(g.client(0, &["status", "/x", "2"]).stdout).unwrap();
    assert!(status.contains("active: yes"), "{status}");

    let missing = g.client(0, &["get", "/nope"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(g.client(0, &["shutdown"]).status.success());
}

#[test]
fn admin_update_reaches_both_daemons_and_changes_authorship() {
    let g = Group::new(2, 100);
    let _d1 = g.spawn(0);
    let _d2 = g.spawn(1);
    std::fs::write(g.path().join("policy"), "path /logs/** { authors: P1; active: signed(P1); }\n").unwrap();
    ddnfs_ok(
        g.path(),
        &[
            "peerlist-make", "--version", "2",
            "--peer", &format!("P1,peer,{},p1.key", g.listen[0]),
            "--peer", &format!("P2,peer,{},p2.key", g.listen[1]),
            "--peer", "A1,admin,-,a1.pub",
            "--policy", "policy",
            "--out", "v2.peerlist",
        ],
    );
    ddnfs_ok(
        g.path(),
        &[
            "peerlist-sign", "--key", "a1.key", "--current", "group.peerlist", "--candidate", "v2.peerlist",
            "--connect", &g.listen[0].to_string(),
        ],
    );
    let installed = |i: usize| {
        let out = g.client(i, &["status", "/peerlist", "@"]);
        out.status.success() && String::from_utf8_lossy(&out.stdout).contains("version 2")
    };
    assert!(wait_until(Duration::from_secs(10), || installed(0) && installed(1)));

    std::fs::write(g.path().join("entry"), "boot\n").unwrap();
    assert_eq!(g.client(1, &["inject", "/logs/boot", "entry"]).status.code(), Some(1));
    assert!(g.client(0, &["inject", "/logs/boot", "entry"]).status.success());
    assert!(wait_until(Duration::from_secs(5), || g.client(1, &["get", "/logs/boot"]).stdout == b"boot\n"));
}

#[test]
fn restarted_daemon_keeps_its_documents() {
    let g = Group::new(1, 100);
    std::fs::write(g.path().join("a"), "persisted\n").unwrap();
    {
        let mut d = g.spawn(0);
        assert!(g.client(0, &["inject", "/keep", "a"]).status.success());
        assert!(g.client(0, &["shutdown"]).status.success());
        assert!(d.wait_exit(Duration::from_secs(5)));
    }
    let _d = g.spawn(0);
    assert_eq!(g.client(0, &["get", "/keep"]).stdout, b"persisted\n");
}

#[test]
fn admin_countersignature_activates_release() {
    let g = Group::with_policy(2, 100, Some("path /release/** { authors: any; active: admin(A1); }\n"));
    let _d1 = g.spawn(0);
    let _d2 = g.spawn(1);
    std::fs::write(g.path().join("r"), "v1.0\n").unwrap();
    assert!(g.client(0, &["inject", "/release/app", "r"]).status.success());
    let active_at = |i: usize| {
        let out = g.client(i, &["status", "/release/app", "1"]);
        String::from_utf8_lossy(&out.stdout).contains("status: active")
    };
    assert!(wait_until(Duration::from_secs(5), || g.client(1, &["get", "/release/app", "1"]).status.success()));
    assert!(!active_at(0) && !active_at(1));

    let out = ddnfs_ok(
        g.path(),
        &["countersign", "--key", "a1.key", "--current", "group.peerlist", "--connect", &g.listen[0].to_string(), "/release/app"],
    );
    assert_eq!(out.trim(), "/release/app@1");
    assert!(wait_until(Duration::from_secs(5), || active_at(0) && active_at(1)));

    let refused = ddnfs(
        g.path(),
        &["countersign", "--key", "p2.key", "--current", "group.peerlist", "--connect", &g.listen[0].to_string(), "/nope"],
    );
    assert_eq!(refused.status.code(), Some(1));
}
