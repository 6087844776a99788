//! The `ibnmp` binary as a user runs it.

use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use ibn_core::crypto::StaticKeypair;
use ibn_node::keys::{read_32, KeyDir, STATIC_KEY, STATIC_PUB};
use ibn_node::provision::{labelled_seed, provision};

const BIN: &str = env!("CARGO_BIN_EXE_ibnmp");

fn ibnmp(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("IBNMP_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn help_everywhere_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let commands: &[&[&str]] = &[
        &[],
        &["ibnsc"],
        &["ibnsc", "serve"],
        &["ibnsc", "intent"],
        &["ibnsc", "intent", "show"],
        &["ibnsc", "intent", "list"],
        &["ibnsc", "peers"],
        &["ibnsc", "audit"],
        &["ibnsc", "audit", "tail"],
        &["ibnsc", "token"],
        &["ibnsc", "revoke"],
        &["peer"],
        &["peer", "run"],
        &["peer", "enroll"],
        &["peer", "submit"],
        &["peer", "status"],
        &["bench"],
        &["bench", "throughput"],
        &["bench", "rtt"],
        &["keygen"],
        &["demo"],
        &["demo", "up"],
    ];
    for c in commands {
        let mut args = c.to_vec();
        args.push("--help");
        let o = ibnmp(dir.path(), &args);
        assert!(o.status.success(), "{args:?}: {}", text(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage: ibnmp"), "{args:?}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn keygen_refuses_overwrite_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("k");
    let k = keys.to_str().unwrap();
    assert!(ibnmp(dir.path(), &["keygen", "--out", k]).status.success());
    let first = std::fs::read(keys.join(STATIC_KEY)).unwrap();

    let again = ibnmp(dir.path(), &["keygen", "--out", k]);
    assert_eq!(again.status.code(), Some(1));
    assert!(text(&again).contains("--force"));
    assert_eq!(std::fs::read(keys.join(STATIC_KEY)).unwrap(), first);

    assert!(ibnmp(dir.path(), &["keygen", "--out", k, "--force"]).status.success());
    assert_ne!(std::fs::read(keys.join(STATIC_KEY)).unwrap(), first);

    let seed = "42".repeat(32);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = ibnmp(dir.path(), &["keygen", "--out", d.to_str().unwrap(), "--seed", &seed, "--ibnsc"]);
        assert!(o.status.success(), "{}", text(&o));
    }
    for f in [STATIC_KEY, STATIC_PUB, "ca.key", "enroll.master"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let private = read_32(&a.join(STATIC_KEY)).unwrap();
    let public = read_32(&a.join(STATIC_PUB)).unwrap();
    assert_eq!(StaticKeypair::from_entropy(private).public().as_bytes(), &public);

    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(a.join(STATIC_KEY)).unwrap().permissions().mode();
        assert_eq!(mode & 0o077, 0, "private key readable by others: {mode:o}");
    }

    let bad = ibnmp(dir.path(), &["keygen", "--out", k, "--seed", "abc"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ibnmp(dir.path(), &["peer", "status"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("not found"));

    std::fs::write(dir.path().join("node.conf"), "role = csc\nlisten_upd = 127.0.0.1:1\n").unwrap();
    let o = ibnmp(dir.path(), &["peer", "status"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("listen_upd"));

    std::fs::write(dir.path().join("node.conf"), "log_level = warn\n").unwrap();
    let o = ibnmp(dir.path(), &["peer", "run"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn controller_commands() {
    let dir = tempfile::tempdir().unwrap();
    let base = ibnmp::demo::free_base_port().unwrap();
    let d = provision(dir.path(), base, labelled_seed([9; 32]), |_| {}).unwrap();
    d.write_configs().unwrap();
    let conf = d.config_path(ibn_core::pki::StakeholderRole::Ibnsc);
    let conf = conf.to_str().unwrap();

    let mut serve = Command::new(BIN)
        .args(["ibnsc", "serve", "--config", conf])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let peers = loop {
        let o = ibnmp(dir.path(), &["ibnsc", "peers", "--json", "--config", conf]);
        if o.status.success() {
            break o;
        }
        assert!(start.elapsed() < Duration::from_secs(5), "{}", text(&o));
        std::thread::sleep(Duration::from_millis(50));
    };
    let v: serde_json::Value = serde_json::from_slice(&peers.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);

    let busy = ibnmp(dir.path(), &["ibnsc", "serve", "--config", conf]);
    assert_eq!(busy.status.code(), Some(3), "{}", text(&busy));

    let token = ibnmp(dir.path(), &["ibnsc", "token", "csc", "--config", conf]);
    let expected = std::fs::read_to_string(KeyDir::new(&d.peers[&ibn_core::pki::StakeholderRole::Csc].key_dir).path("enroll.token")).unwrap();
    assert_eq!(String::from_utf8_lossy(&token.stdout).trim(), expected.trim());

    let missing = ibnmp(dir.path(), &["ibnsc", "revoke", "999", "--config", conf]);
    assert_eq!(missing.status.code(), Some(1), "{}", text(&missing));

    let unknown = ibnmp(dir.path(), &["ibnsc", "intent", "show", &"ab".repeat(16), "--config", conf]);
    assert_eq!(unknown.status.code(), Some(1));
    let o = ibnmp(dir.path(), &["ibnsc", "audit", "tail", "-n", "5", "--config", conf]);
    assert!(o.status.success());

    // SAFETY: signal to a child we spawned and have not reaped.
    unsafe { libc::kill(serve.id() as libc::pid_t, libc::SIGTERM) };
    let status = serve.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    std::fs::remove_file(KeyDir::new(&d.ibnsc.key_dir).path(STATIC_KEY)).unwrap();
    let o = ibnmp(dir.path(), &["ibnsc", "serve", "--config", conf]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("missing key material"));
}

#[test]
fn demo_up_is_hermetic_and_fast() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let start = Instant::now();
    let o = ibnmp(dir.path(), &["demo", "up", "--workdir", work.to_str().unwrap()]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", text(&o));
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
    let out = String::from_utf8_lossy(&o.stdout);
    for scope in ["Intent-CSC", "Intent-CSP", "Intent-NOP"] {
        assert!(out.contains(scope), "{out}");
    }
    assert_eq!(out.matches("assured").count(), 3 + 3, "{out}");
    let top: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec![std::ffi::OsString::from("work")]);

    let again = ibnmp(dir.path(), &["demo", "up", "--workdir", work.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn demo_port_conflict_and_revocation() {
    let dir = tempfile::tempdir().unwrap();
    let base = ibnmp::demo::free_base_port().unwrap();
    let hold = std::net::UdpSocket::bind(("127.0.0.1", base)).unwrap();
    let o = ibnmp(dir.path(), &["demo", "up", "--base-port", &base.to_string()]);
    drop(hold);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(text(&o).contains("cannot bind"));

    let o = ibnmp(dir.path(), &["demo", "up", "--revoke-csp"]);
    assert_eq!(o.status.code(), Some(4), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("Parked") && t.contains("still parked"), "{t}");
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = ibnmp(
        dir.path(),
        &["bench", "throughput", "--duration", "0.2", "--runs", "1", "--payload", "512", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("mode,metric,timestamp_ms,value\n"));
    assert!(csv.contains("tunnel,overhead_bytes_per_packet,"));
    assert!(csv.contains("plaintext,throughput_mbps,"));
    assert!(out.join("plotdata.txt").exists());

    let o = ibnmp(dir.path(), &["bench", "rtt", "--payload", "70000", "--runs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
