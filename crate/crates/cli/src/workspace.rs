//! On-disk layout.
//!
//! ```text
//! <root>/zt5g.toml                    parameter profile shared by all users
//! <root>/private/<id>/profile.toml    challenge bits, signature tree height
//! <root>/private/<id>/seed            32-byte master seed (keys, silicon)
//! <root>/private/<id>/signer          signing state incl. next unused leaf
//! <root>/public/identities/<id>.pub   composite public key
//! <root>/public/images/<id>.img       hashed HRA image
//! <root>/public/certdb.hkdb           HAKF database
//! <root>/results/                     simulation output
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zt5g_core::handshake::Credentials;
use zt5g_core::hra::HraImage;
use zt5g_core::{CertificateDb, KemParams, SignKeyPair};

use crate::failure::{fail, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Default,
    Toy,
}

impl Profile {
    pub fn params(self) -> KemParams {
        match self {
            Profile::Default => KemParams::default_profile(),
            // The lossy toy profile fails to decrypt too often for a demo.
            Profile::Toy => KemParams::toy_noiseless(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkspaceConfig {
    params: Profile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserProfile {
    user_id: String,
    challenge_bits: u8,
    sign_height: u8,
}

pub struct Workspace {
    root: PathBuf,
}

/// Writes via a temporary file and a rename so readers never see half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())).into())
}

pub fn check_user_id(id: &str) -> anyhow::Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        fail("invalid-id", format!("user id {id:?} must be 1-64 characters from [A-Za-z0-9._-]"))
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    fn config_path(&self) -> PathBuf {
        self.root.join("zt5g.toml")
    }

    fn private_dir(&self, id: &str) -> PathBuf {
        self.root.join("private").join(id)
    }

    pub fn public_dir(&self) -> PathBuf {
        self.root.join("public")
    }

    fn identity_path(&self, id: &str) -> PathBuf {
        self.public_dir().join("identities").join(format!("{id}.pub"))
    }

    pub fn images_dir(&self) -> PathBuf {
        self.public_dir().join("images")
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.images_dir().join(format!("{id}.img"))
    }

    pub fn db_path(&self) -> PathBuf {
        self.public_dir().join("certdb.hkdb")
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn profile(&self) -> anyhow::Result<Option<Profile>> {
        let path = self.config_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = String::from_utf8(read(&path)?).context("zt5g.toml is not UTF-8")?;
        let cfg: WorkspaceConfig =
            toml::from_str(&text).map_err(|e| Failure::new("workspace", format!("zt5g.toml: {e}")))?;
        Ok(Some(cfg.params))
    }

    /// The workspace profile, which must exist.
    pub fn params(&self) -> anyhow::Result<KemParams> {
        match self.profile()? {
            Some(p) => Ok(p.params()),
            None => fail("workspace", format!("{} has no enrolled users", self.root.display())),
        }
    }

    pub fn is_enrolled(&self, id: &str) -> bool {
        self.private_dir(id).exists() || self.identity_path(id).exists()
    }

    /// Creates key material, device and image for a new user.
    pub fn enroll(&self, id: &str, seed: [u8; 32], challenge_bits: u8, sign_height: u8, profile: Profile) -> anyhow::Result<Credentials> {
        check_user_id(id)?;
        match self.profile()? {
            Some(p) if p != profile => {
                return fail(
                    "params-mismatch",
                    format!("workspace uses {p:?} parameters, enrollment asked for {profile:?}"),
                )
            }
            Some(_) => {}
            None => {
                fs::create_dir_all(&self.root)?;
                let cfg = toml::to_string(&WorkspaceConfig { params: profile })?;
                write_atomic(&self.config_path(), cfg.as_bytes())?;
            }
        }
        if self.is_enrolled(id) {
            return fail("duplicate-id", format!("{id} is already enrolled"));
        }
        let params = profile.params();
        let creds = Credentials::generate(id, &seed, challenge_bits, sign_height, &params)
            .map_err(|e| Failure::new("credential", e.to_string()))?;
        let image = creds
            .device
            .enumerate_image(id)
            .map_err(|e| Failure::new("credential", e.to_string()))?;

        let dir = self.private_dir(id);
        fs::create_dir_all(&dir)?;
        let profile = toml::to_string(&UserProfile {
            user_id: id.to_owned(),
            challenge_bits,
            sign_height,
        })?;
        write_atomic(&dir.join("profile.toml"), profile.as_bytes())?;
        write_atomic(&dir.join("seed"), &seed)?;
        self.save_signer(id, &creds.signer)?;
        fs::create_dir_all(self.images_dir())?;
        fs::create_dir_all(self.identity_path(id).parent().expect("has parent"))?;
        write_atomic(&self.identity_path(id), &creds.identity.public_key_bytes())?;
        write_atomic(&self.image_path(id), &image.to_bytes())?;
        Ok(creds)
    }

    pub fn save_signer(&self, id: &str, signer: &SignKeyPair) -> anyhow::Result<()> {
        write_atomic(&self.private_dir(id).join("signer"), &signer.to_secret_bytes())
    }

    /// Loads a user's credentials with the signing state from disk.
    pub fn load(&self, id: &str) -> anyhow::Result<Credentials> {
        check_user_id(id)?;
        let dir = self.private_dir(id);
        if !dir.exists() {
            return fail("unknown-id", format!("{id} is not enrolled in {}", self.root.display()));
        }
        let params = self.params()?;
        let text = String::from_utf8(read(&dir.join("profile.toml"))?).context("profile.toml is not UTF-8")?;
        let profile: UserProfile =
            toml::from_str(&text).map_err(|e| Failure::new("workspace", format!("{id}/profile.toml: {e}")))?;
        let seed: [u8; 32] = read(&dir.join("seed"))?
            .try_into()
            .map_err(|_| Failure::new("workspace", format!("{id}/seed must be 32 bytes")))?;
        let signer = SignKeyPair::from_secret_bytes(&read(&dir.join("signer"))?)
            .map_err(|e| Failure::new("workspace", format!("{id}/signer: {e}")))?;
        let creds = Credentials::with_signer(id, &seed, profile.challenge_bits, signer, &params)
            .map_err(|e| Failure::new("credential", e.to_string()))?;
        if creds.identity.public_key_bytes() != read(&self.identity_path(id))? {
            return fail("workspace", format!("{id}: private material does not match the published identity"));
        }
        Ok(creds)
    }

    /// Marks the next `count` leaves as used on disk before they are
    /// spent, so a crash mid-run cannot lead to leaf reuse.
    pub fn reserve_signatures(&self, creds: &Credentials, count: u64) -> anyhow::Result<()> {
        let available = creds.signer.remaining_signatures();
        if available < count {
            return fail(
                "signer-exhausted",
                format!("{} has {available} signatures left, this command needs {count}", creds.user_id()),
            );
        }
        let mut bytes = creds.signer.to_secret_bytes();
        let next = creds.signer.next_leaf() + count;
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&next.to_be_bytes());
        write_atomic(&self.private_dir(creds.user_id()).join("signer"), &bytes)
    }

    /// Reads every image under `public/images`, sorted by user ID.
    pub fn images(&self) -> anyhow::Result<Vec<HraImage>> {
        let dir = self.images_dir();
        let mut images = Vec::new();
        if dir.exists() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            paths.retain(|p| p.extension().is_some_and(|e| e == "img"));
            paths.sort();
            for p in paths {
                let image = HraImage::from_bytes(&read(&p)?)
                    .map_err(|e| Failure::new("workspace", format!("{}: {e}", p.display())))?;
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                if image.user_id() != stem {
                    return fail(
                        "workspace",
                        format!("{} holds the image of {}", p.display(), image.user_id()),
                    );
                }
                images.push(image);
            }
        }
        Ok(images)
    }

    /// Builds the HAKF database from all images and writes it.
    pub fn init_db(&self) -> anyhow::Result<CertificateDb> {
        let images = self.images()?;
        if images.is_empty() {
            return fail("empty-workspace", format!("no enrolled users in {}", self.root.display()));
        }
        let mut db = CertificateDb::new();
        for image in images {
            let id = image.user_id().to_owned();
            db.register_user(&id, image)
                .map_err(|e| Failure::new("workspace", format!("{id}: {e}")))?;
        }
        write_atomic(&self.db_path(), &db.to_bytes())?;
        Ok(db)
    }

    pub fn load_db(&self) -> anyhow::Result<CertificateDb> {
        let path = self.db_path();
        if !path.exists() {
            return fail("no-database", "no HAKF database; run init-db first");
        }
        CertificateDb::from_bytes(&read(&path)?).map_err(|e| Failure::new("workspace", format!("certdb.hkdb: {e}")).into())
    }
}

/// Seed for a user: random, or derived from `--seed` and the ID.
pub fn user_seed(seed: Option<u64>, id: &str) -> [u8; 32] {
    match seed {
        Some(s) => Sha256::new()
            .chain_update(b"zt5g-cli-enroll")
            .chain_update(s.to_le_bytes())
            .chain_update(id.as_bytes())
            .finalize()
            .into(),
        None => rand::random(),
    }
}
