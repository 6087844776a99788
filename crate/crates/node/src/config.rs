//! `key = value` configuration shared by the controller and the peer agents.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may be
//! overridden by an environment variable named `IBNMP_<KEY>` in upper case,
//! e.g. `IBNMP_LISTEN_UDP=127.0.0.1:6000`. Relative paths are resolved against
//! the directory holding the config file.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ibn_core::pki::StakeholderRole;
use ibn_core::tunnel::replay::{MAX_WINDOW, MIN_WINDOW};
use ibn_core::tunnel::RekeyPolicy;
use thiserror::Error;

pub const ENV_PREFIX: &str = "IBNMP_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    MissingFile(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub listen_udp: SocketAddr,
    pub listen_http: SocketAddr,
    pub key_dir: PathBuf,
    pub data_dir: PathBuf,
    pub log_level: String,
    pub rekey_after_secs: f64,
    pub replay_window: usize,
    pub park_capacity: usize,
    pub role: Option<StakeholderRole>,
    pub ibnsc_udp: SocketAddr,
    pub ibnsc_http: SocketAddr,
    pub rules_path: Option<PathBuf>,
    pub fulfill_delay_ms: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen_udp: "127.0.0.1:51820".parse().unwrap(),
            listen_http: "127.0.0.1:8080".parse().unwrap(),
            key_dir: PathBuf::from("keys"),
            data_dir: PathBuf::from("data"),
            log_level: "info".into(),
            rekey_after_secs: 120.0,
            replay_window: 64,
            park_capacity: 1024,
            role: None,
            ibnsc_udp: "127.0.0.1:51820".parse().unwrap(),
            ibnsc_http: "127.0.0.1:8080".parse().unwrap(),
            rules_path: None,
            fulfill_delay_ms: 200,
        }
    }
}

pub const KEYS: [&str; 13] = [
    "listen_udp",
    "listen_http",
    "key_dir",
    "data_dir",
    "log_level",
    "rekey_after_secs",
    "replay_window",
    "park_capacity",
    "role",
    "ibnsc_udp",
    "ibnsc_http",
    "rules_path",
    "fulfill_delay_ms",
];

impl Config {
    pub fn rekey_policy(&self) -> RekeyPolicy {
        RekeyPolicy::with_rekey_after(Duration::from_secs_f64(self.rekey_after_secs))
    }

    /// Renders the config back into file form.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("listen_udp", self.listen_udp.to_string());
        put("listen_http", self.listen_http.to_string());
        put("key_dir", self.key_dir.display().to_string());
        put("data_dir", self.data_dir.display().to_string());
        put("log_level", self.log_level.clone());
        put("rekey_after_secs", self.rekey_after_secs.to_string());
        put("replay_window", self.replay_window.to_string());
        put("park_capacity", self.park_capacity.to_string());
        if let Some(r) = self.role {
            put("role", r.as_str().into());
        }
        put("ibnsc_udp", self.ibnsc_udp.to_string());
        put("ibnsc_http", self.ibnsc_http.to_string());
        if let Some(p) = &self.rules_path {
            put("rules_path", p.display().to_string());
        }
        put("fulfill_delay_ms", self.fulfill_delay_ms.to_string());
        s
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e: T::Err| ConfigError::Invalid { key: key.into(), msg: e.to_string() })
        }
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "listen_udp" => self.listen_udp = parse(key, value)?,
            "listen_http" => self.listen_http = parse(key, value)?,
            "key_dir" => self.key_dir = path(value),
            "data_dir" => self.data_dir = path(value),
            "log_level" => self.log_level = value.to_string(),
            "rekey_after_secs" => {
                let v: f64 = parse(key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(ConfigError::Invalid { key: key.into(), msg: "must be positive".into() });
                }
                self.rekey_after_secs = v;
            }
            "replay_window" => {
                let v: usize = parse(key, value)?;
                if !(MIN_WINDOW..=MAX_WINDOW).contains(&v) {
                    return Err(ConfigError::Invalid {
                        key: key.into(),
                        msg: format!("must be within {MIN_WINDOW}..={MAX_WINDOW}"),
                    });
                }
                self.replay_window = v;
            }
            "park_capacity" => self.park_capacity = parse(key, value)?,
            "role" => self.role = Some(parse(key, value)?),
            "ibnsc_udp" => self.ibnsc_udp = parse(key, value)?,
            "ibnsc_http" => self.ibnsc_http = parse(key, value)?,
            "rules_path" => self.rules_path = Some(path(value)),
            "fulfill_delay_ms" => self.fulfill_delay_ms = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

/// Parses config text. `base` anchors relative paths.
pub fn parse_config(
    text: &str,
    base: &Path,
    env: &HashMap<String, String>,
) -> Result<Config, ConfigError> {
    let mut cfg = Config {
        key_dir: base.join("keys"),
        data_dir: base.join("data"),
        ..Config::default()
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
        cfg.set(k.trim(), v.trim(), base)?;
    }
    for key in KEYS {
        if let Some(v) = env.get(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
            cfg.set(key, v.trim(), base)?;
        }
    }
    Ok(cfg)
}

/// Reads and parses the config at `path`, applying overrides from `env`.
pub fn load_config(path: &Path, env: &HashMap<String, String>) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ConfigError::MissingFile(path.to_path_buf()),
        _ => ConfigError::Io { path: path.to_path_buf(), source: e },
    })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parse_config(&text, base, env)
}

/// The process environment restricted to override variables.
pub fn process_env() -> HashMap<String, String> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}
