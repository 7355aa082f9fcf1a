//! HRA authentication and keying function.
//!
//! Holds the database of hashed HRA images and answers certificate
//! verification requests. Every answer is sealed to the requester: a KEM
//! encapsulation to the requester's key, then ChaCha20-Poly1305 under a key
//! derived from the shared secret. The sealed payload carries the verdict and
//! the digest of the request it answers, so a captured answer cannot be
//! replayed against a different request.

mod db;

pub use db::{CertificateDb, Lookup};

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certs::{verify_signature, CertError, Certificate, Reader};
use crate::hra::challenge_of;
use crate::lattice_kem::{
    decapsulate, encapsulate, Ciphertext, KemError, KemParams, KemPrivateKey, KemPublicKey,
};

/// Simulated HAKF service time per request, in seconds.
pub const DEFAULT_SERVICE_TIME_S: f64 = 0.005;
const RESPONSE_VERSION: u8 = 0x01;
const SEALED_PLAINTEXT: usize = 33;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HakfError {
    #[error("user {0} is already registered")]
    DuplicateUser(String),
    #[error("image belongs to {found}, not {expected}")]
    UserIdMismatch { expected: String, found: String },
    #[error("database file: {0}")]
    DbFormat(String),
    #[error("requester certificate failed signature verification")]
    RequesterRejected,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("sealed response failed authentication")]
    Authentication,
    #[error("response answers a different request")]
    DigestMismatch,
    #[error(transparent)]
    Kem(#[from] KemError),
}

impl From<CertError> for HakfError {
    fn from(e: CertError) -> Self {
        HakfError::Protocol(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationRequest {
    /// The certificate being verified.
    pub subject_cert: Certificate,
    /// The asking party, so the reply can be sealed to its key.
    pub requester_cert: Certificate,
}

impl VerificationRequest {
    /// Both certificate frames back to back.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.subject_cert.encode();
        out.extend_from_slice(&self.requester_cert.encode());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, HakfError> {
        let (subject_cert, used) = Certificate::decode_prefix(bytes)?;
        let requester_cert = Certificate::decode(&bytes[used..])?;
        Ok(VerificationRequest {
            subject_cert,
            requester_cert,
        })
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::new()
            .chain_update(b"zt5g-verification-request")
            .chain_update(self.encode())
            .finalize()
            .into()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationResponse {
    pub kem_ct: Ciphertext,
    pub sealed: Vec<u8>,
}

impl VerificationResponse {
    /// `version (1) || ct-len (2) || ct || sealed-len (2) || sealed`.
    pub fn encode(&self) -> Vec<u8> {
        let ct = self.kem_ct.to_bytes();
        let mut out = Vec::with_capacity(5 + ct.len() + self.sealed.len());
        out.push(RESPONSE_VERSION);
        out.extend_from_slice(&(ct.len() as u16).to_be_bytes());
        out.extend_from_slice(&ct);
        out.extend_from_slice(&(self.sealed.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.sealed);
        out
    }

    pub fn decode(bytes: &[u8], params: &KemParams) -> Result<Self, HakfError> {
        let bad = |why: &str| HakfError::Protocol(format!("verification response: {why}"));
        let mut r = Reader::new(bytes);
        if r.u8() != Some(RESPONSE_VERSION) {
            return Err(bad("version"));
        }
        let ct_len = r.u16().ok_or_else(|| bad("truncated"))? as usize;
        let kem_ct = Ciphertext::from_bytes(r.take(ct_len).ok_or_else(|| bad("truncated"))?, params)?;
        let sealed_len = r.u16().ok_or_else(|| bad("truncated"))? as usize;
        let sealed = r.take(sealed_len).ok_or_else(|| bad("truncated"))?.to_vec();
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(VerificationResponse { kem_ct, sealed })
    }
}

fn seal_cipher(secret: &[u8; 32], ct_bytes: &[u8]) -> ChaCha20Poly1305 {
    let hk = Hkdf::<Sha256>::new(Some(b"zt5g-hakf-seal"), secret);
    let mut key = [0u8; 32];
    hk.expand(ct_bytes, &mut key).expect("32 bytes is a valid hkdf length");
    ChaCha20Poly1305::new(&key.into())
}

/// Seals `(verdict, request_digest)` to `requester`. Deterministic in `coins`.
pub fn seal_response(
    requester: &KemPublicKey,
    verdict: bool,
    request_digest: &[u8; 32],
    coins: &[u8; 32],
) -> Result<VerificationResponse, HakfError> {
    let (kem_ct, ss) = encapsulate(requester, coins)?;
    let ct_bytes = kem_ct.to_bytes();
    let mut pt = [0u8; SEALED_PLAINTEXT];
    pt[0] = verdict as u8;
    pt[1..].copy_from_slice(request_digest);
    // Each key is used for exactly one message, so a fixed nonce is safe.
    let sealed = seal_cipher(ss.as_bytes(), &ct_bytes)
        .encrypt(Nonce::from_slice(&[0u8; 12]), Payload { msg: &pt, aad: &ct_bytes })
        .expect("chacha20poly1305 encryption is infallible for small inputs");
    Ok(VerificationResponse { kem_ct, sealed })
}

/// Opens a sealed response and checks that it answers `expected_digest`.
pub fn open_response(
    sk: &KemPrivateKey,
    resp: &VerificationResponse,
    expected_digest: &[u8; 32],
) -> Result<bool, HakfError> {
    let ss = decapsulate(sk, &resp.kem_ct)?;
    let ct_bytes = resp.kem_ct.to_bytes();
    let pt = seal_cipher(ss.as_bytes(), &ct_bytes)
        .decrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: &resp.sealed,
                aad: &ct_bytes,
            },
        )
        .map_err(|_| HakfError::Authentication)?;
    if pt.len() != SEALED_PLAINTEXT || pt[0] > 1 {
        return Err(HakfError::Authentication);
    }
    if pt[1..] != expected_digest[..] {
        return Err(HakfError::DigestMismatch);
    }
    Ok(pt[0] == 1)
}

/// The verification authority.
#[derive(Debug, Clone)]
pub struct Hakf {
    db: CertificateDb,
    params: KemParams,
}

impl Hakf {
    pub fn new(db: CertificateDb, params: KemParams) -> Self {
        Hakf { db, params }
    }

    pub fn db(&self) -> &CertificateDb {
        &self.db
    }

    pub fn params(&self) -> &KemParams {
        &self.params
    }

    /// True iff the certificate's signature verifies and its HRA hash equals
    /// the stored row for `challenge_of(id, key)`.
    pub fn check_subject(&self, cert: &Certificate) -> bool {
        let Some(m) = self.db.challenge_bits(&cert.user_id) else {
            return false;
        };
        let challenge = challenge_of(&cert.user_id, &cert.public_key_bytes, m);
        let hash_ok = match self.db.lookup(&cert.user_id, challenge) {
            Lookup::Found(stored) => stored == &cert.hra_hash,
            Lookup::UnknownUser | Lookup::ChallengeOutOfRange => false,
        };
        hash_ok && verify_signature(cert)
    }

    /// Answers a verification request.
    ///
    /// A requester whose own certificate does not verify gets no sealed
    /// response at all. Unknown subjects and hash mismatches both produce a
    /// sealed `false` of identical shape.
    pub fn verify<R: RngCore + CryptoRng>(
        &self,
        req: &VerificationRequest,
        rng: &mut R,
    ) -> Result<VerificationResponse, HakfError> {
        if !verify_signature(&req.requester_cert) {
            return Err(HakfError::RequesterRejected);
        }
        let requester_pk = req.requester_cert.kem_public_key(&self.params)?;
        let verdict = self.check_subject(&req.subject_cert);
        let mut coins = [0u8; 32];
        rng.fill_bytes(&mut coins);
        seal_response(&requester_pk, verdict, &req.digest(), &coins)
    }
}
