//! On-disk key material. Every file holds one value as lowercase hex followed
//! by a newline. Secret files are created with mode 0600.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use ibn_core::crypto::{PublicKey, StaticKeypair};
use ibn_core::pki::{ca_init, CaPublicKey, Certificate, CertificateAuthority};
use thiserror::Error;

pub const STATIC_KEY: &str = "static.key";
pub const STATIC_PUB: &str = "static.pub";
pub const CA_KEY: &str = "ca.key";
pub const CA_PUB: &str = "ca.pub";
pub const ENROLL_MASTER: &str = "enroll.master";
pub const ENROLL_TOKEN: &str = "enroll.token";
pub const CERTIFICATE: &str = "cert";

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("missing key material: {0}")]
    Missing(PathBuf),
    #[error("{0} already exists (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("{path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KeyError + '_ {
    move |source| KeyError::Io { path: path.to_path_buf(), source }
}

/// Writes `hex + "\n"`. Refuses to replace an existing file unless `force`.
pub fn write_hex(path: &Path, bytes: &[u8], secret: bool, force: bool) -> Result<(), KeyError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(if secret { 0o600 } else { 0o644 });
    }
    let mut f = opts.open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => KeyError::Exists(path.to_path_buf()),
        _ => KeyError::Io { path: path.to_path_buf(), source: e },
    })?;
    #[cfg(unix)]
    if secret {
        use std::os::unix::fs::PermissionsExt;
        f.set_permissions(fs::Permissions::from_mode(0o600)).map_err(io_err(path))?;
    }
    writeln!(f, "{}", hex::encode(bytes)).map_err(io_err(path))
}

pub fn read_hex(path: &Path) -> Result<Vec<u8>, KeyError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => KeyError::Missing(path.to_path_buf()),
        _ => KeyError::Io { path: path.to_path_buf(), source: e },
    })?;
    hex::decode(text.trim()).map_err(|e| KeyError::Corrupt { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn read_32(path: &Path) -> Result<[u8; 32], KeyError> {
    read_hex(path)?
        .try_into()
        .map_err(|_| KeyError::Corrupt { path: path.to_path_buf(), msg: "expected 32 bytes".into() })
}

/// Key file locations under one key directory.
#[derive(Debug, Clone)]
pub struct KeyDir(pub PathBuf);

impl KeyDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self(dir.into())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn load_static(&self) -> Result<StaticKeypair, KeyError> {
        Ok(StaticKeypair::from_entropy(read_32(&self.path(STATIC_KEY))?))
    }

    /// Writes a static keypair. The public half is recomputed from the private.
    pub fn write_static(&self, entropy: [u8; 32], force: bool) -> Result<StaticKeypair, KeyError> {
        let kp = StaticKeypair::from_entropy(entropy);
        write_hex(&self.path(STATIC_KEY), kp.private().as_bytes(), true, force)?;
        write_hex(&self.path(STATIC_PUB), kp.public().as_bytes(), false, true)?;
        Ok(kp)
    }

    pub fn load_ca(&self) -> Result<CertificateAuthority, KeyError> {
        Ok(ca_init(read_32(&self.path(CA_KEY))?))
    }

    pub fn write_ca(&self, seed: [u8; 32], force: bool) -> Result<CertificateAuthority, KeyError> {
        let ca = ca_init(seed);
        write_hex(&self.path(CA_KEY), &seed, true, force)?;
        write_hex(&self.path(CA_PUB), &ca.public_key().0, false, true)?;
        Ok(ca)
    }

    pub fn load_ca_pub(&self) -> Result<CaPublicKey, KeyError> {
        Ok(CaPublicKey(read_32(&self.path(CA_PUB))?))
    }

    pub fn load_master(&self) -> Result<[u8; 32], KeyError> {
        read_32(&self.path(ENROLL_MASTER))
    }

    pub fn load_token(&self) -> Result<[u8; 32], KeyError> {
        read_32(&self.path(ENROLL_TOKEN))
    }

    pub fn load_certificate(&self) -> Result<Certificate, KeyError> {
        let path = self.path(CERTIFICATE);
        Certificate::decode(&read_hex(&path)?).map_err(|e| KeyError::Corrupt { path, msg: e.to_string() })
    }

    pub fn write_certificate(&self, cert: &Certificate) -> Result<(), KeyError> {
        write_hex(&self.path(CERTIFICATE), &cert.encode(), false, true)
    }

    pub fn load_static_pub(&self) -> Result<PublicKey, KeyError> {
        Ok(PublicKey(read_32(&self.path(STATIC_PUB))?))
    }
}
