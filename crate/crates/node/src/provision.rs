//! Lays out a complete local deployment under one directory: controller key
//! material, one key directory per peer holding the CA key and its derived
//! enrollment token, and a config file per node.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use ibn_core::pki::{enrollment_token, StakeholderRole};

use crate::config::Config;
use crate::keys::{write_hex, KeyDir, KeyError, ENROLL_MASTER, ENROLL_TOKEN};

pub const CONFIG_FILE: &str = "node.conf";

#[derive(Debug, Clone)]
pub struct Deployment {
    pub root: PathBuf,
    pub ibnsc: Config,
    pub peers: BTreeMap<StakeholderRole, Config>,
}

impl Deployment {
    pub fn config_path(&self, role: StakeholderRole) -> PathBuf {
        self.root.join(role.as_str()).join(CONFIG_FILE)
    }

    /// Points every peer at the controller's actual addresses.
    pub fn set_controller(&mut self, udp: SocketAddr, http: SocketAddr) {
        self.ibnsc.listen_udp = udp;
        self.ibnsc.listen_http = http;
        for p in self.peers.values_mut() {
            p.ibnsc_udp = udp;
            p.ibnsc_http = http;
        }
    }

    /// Writes each node's config file.
    pub fn write_configs(&self) -> std::io::Result<()> {
        std::fs::write(self.config_path(StakeholderRole::Ibnsc), self.ibnsc.to_file_string())?;
        for (role, cfg) in &self.peers {
            std::fs::write(self.config_path(*role), cfg.to_file_string())?;
        }
        Ok(())
    }
}

fn loopback(port: u16) -> SocketAddr {
    SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), port)
}

/// Ports are assigned from `base_port` upward, two per node; a base of 0
/// leaves every port to the OS. Seeds make key material reproducible.
pub fn provision(
    root: &Path,
    base_port: u16,
    seed: impl Fn(&str) -> [u8; 32],
    tweak: impl Fn(&mut Config),
) -> Result<Deployment, KeyError> {
    let port = |i: u16| if base_port == 0 { 0 } else { base_port + i };
    let node_dir = |r: StakeholderRole| root.join(r.as_str());

    let dir = node_dir(StakeholderRole::Ibnsc);
    let keys = KeyDir::new(dir.join("keys"));
    keys.write_static(seed("ibnsc-static"), false)?;
    let ca = keys.write_ca(seed("ca"), false)?;
    let master = seed("enroll-master");
    write_hex(&keys.path(ENROLL_MASTER), &master, true, false)?;
    let mut ibnsc = Config {
        listen_udp: loopback(port(0)),
        listen_http: loopback(port(1)),
        key_dir: keys.0.clone(),
        data_dir: dir.join("data"),
        ..Config::default()
    };
    tweak(&mut ibnsc);

    let mut peers = BTreeMap::new();
    for (i, role) in StakeholderRole::PEERS.into_iter().enumerate() {
        let dir = node_dir(role);
        let keys = KeyDir::new(dir.join("keys"));
        write_hex(&keys.path(crate::keys::CA_PUB), &ca.public_key().0, false, false)?;
        write_hex(&keys.path(ENROLL_TOKEN), &enrollment_token(&master, role), true, false)?;
        let i = 2 + 2 * i as u16;
        let mut cfg = Config {
            listen_udp: loopback(port(i)),
            listen_http: loopback(port(i + 1)),
            key_dir: keys.0.clone(),
            data_dir: dir.join("data"),
            role: Some(role),
            ibnsc_udp: ibnsc.listen_udp,
            ibnsc_http: ibnsc.listen_http,
            ..Config::default()
        };
        tweak(&mut cfg);
        peers.insert(role, cfg);
    }
    Ok(Deployment { root: root.to_path_buf(), ibnsc, peers })
}

/// Seed derivation for fixtures: each label gets an independent 32-byte value.
pub fn labelled_seed(master: [u8; 32]) -> impl Fn(&str) -> [u8; 32] {
    move |label| ibn_core::crypto::hash_parts(&[&master, label.as_bytes()])
}
