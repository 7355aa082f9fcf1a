use std::collections::BTreeMap;

use crate::certs::Reader;
use crate::hra::{HraImage, ResponseHash};

use super::HakfError;

const DB_MAGIC: &[u8; 4] = b"HKDB";
const DB_VERSION: u8 = 1;

/// Outcome of a row lookup. Absent users are distinguishable from present
/// rows here; the verifier collapses both into a `false` verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup<'a> {
    Found(&'a ResponseHash),
    UnknownUser,
    ChallengeOutOfRange,
}

/// Hashed HRA images keyed by user ID.
///
/// Registration takes `&mut self`, lookups `&self`: wrap in a `RwLock` for
/// a shared single-writer, many-reader deployment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CertificateDb {
    users: BTreeMap<String, HraImage>,
}

impl CertificateDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_user(&mut self, user_id: &str, image: HraImage) -> Result<(), HakfError> {
        if image.user_id() != user_id {
            return Err(HakfError::UserIdMismatch {
                expected: user_id.to_owned(),
                found: image.user_id().to_owned(),
            });
        }
        if self.users.contains_key(user_id) {
            return Err(HakfError::DuplicateUser(user_id.to_owned()));
        }
        self.users.insert(user_id.to_owned(), image);
        Ok(())
    }

    pub fn lookup(&self, user_id: &str, challenge: u32) -> Lookup<'_> {
        match self.users.get(user_id) {
            None => Lookup::UnknownUser,
            Some(img) => img.row(challenge).map_or(Lookup::ChallengeOutOfRange, Lookup::Found),
        }
    }

    /// Challenge width registered for `user_id`.
    pub fn challenge_bits(&self, user_id: &str) -> Option<u8> {
        self.users.get(user_id).map(|i| i.challenge_bits())
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.users.contains_key(user_id)
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn row_count(&self) -> usize {
        self.users.values().map(|i| i.entries().len()).sum()
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    /// `"HKDB" || version || count (4) || index || images`, where each index
    /// entry is `id-len (1) || id || offset (8) || length (8)` into the image
    /// section and images use the HRA image file format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let images: Vec<Vec<u8>> = self.users.values().map(HraImage::to_bytes).collect();
        let mut out = Vec::new();
        out.extend_from_slice(DB_MAGIC);
        out.push(DB_VERSION);
        out.extend_from_slice(&(self.users.len() as u32).to_be_bytes());
        let mut offset = 0u64;
        for (id, img) in self.users.keys().zip(&images) {
            out.push(id.len() as u8);
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&offset.to_be_bytes());
            out.extend_from_slice(&(img.len() as u64).to_be_bytes());
            offset += img.len() as u64;
        }
        for img in images {
            out.extend_from_slice(&img);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HakfError> {
        let bad = |why: &str| HakfError::DbFormat(why.to_owned());
        let mut r = Reader::new(bytes);
        if r.take(4) != Some(DB_MAGIC.as_slice()) {
            return Err(bad("missing magic"));
        }
        if r.u8() != Some(DB_VERSION) {
            return Err(bad("unsupported version"));
        }
        let count = r.u32().ok_or_else(|| bad("truncated header"))?;
        let mut index = Vec::new();
        for _ in 0..count {
            let len = r.u8().ok_or_else(|| bad("truncated index"))? as usize;
            let id = r.take(len).ok_or_else(|| bad("truncated index"))?;
            let id = std::str::from_utf8(id).map_err(|_| bad("user id is not utf-8"))?;
            let off = r.u64().ok_or_else(|| bad("truncated index"))?;
            let n = r.u64().ok_or_else(|| bad("truncated index"))?;
            index.push((id.to_owned(), off as usize, n as usize));
        }
        let images = r.rest();
        let mut db = CertificateDb::new();
        let mut expected_off = 0usize;
        for (id, off, len) in index {
            if off != expected_off || off.checked_add(len).is_none_or(|end| end > images.len()) {
                return Err(bad("index does not match image section"));
            }
            let img = HraImage::from_bytes(&images[off..off + len])
                .map_err(|e| HakfError::DbFormat(e.to_string()))?;
            db.register_user(&id, img)?;
            expected_off = off + len;
        }
        if expected_off != images.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(db)
    }
}
