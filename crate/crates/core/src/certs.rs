//! Certificates binding an identity, its composite public key, a signature
//! over that key and the hashed HRA response to the key-derived challenge.
//!
//! Wire frame:
//!
//! ```text
//! version (1) || id-len (1) || id || pk-len (2) || pk || sig-len (2) || sig
//!   || hra_hash (32) || zero padding to a multiple of 1024 bytes
//! ```
//!
//! Lengths are big-endian. Padding must be zero and minimal, so every
//! certificate has exactly one encoding.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hra::{challenge_of, hash_response, HraDevice, HraError, ResponseHash};
use crate::lattice_kem::{KemError, KemParams, KemPublicKey};
use crate::pqc_sign::{self, SignError, SignKeyPair, Signature};

pub const CERT_VERSION: u8 = 0x01;
pub const FRAME_BYTES: usize = 1024;
pub const MAX_USER_ID_BYTES: usize = 64;
const COMPOSITE_TAG: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("user id must be 1..={MAX_USER_ID_BYTES} bytes")]
    InvalidUserId,
    #[error("signing key does not match the identity's verification key")]
    KeyMismatch,
    #[error(transparent)]
    Hra(#[from] HraError),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Kem(#[from] KemError),
    #[error("malformed certificate: {0}")]
    Decode(&'static str),
}

/// A user's public identity: ID plus the composite key
/// (encapsulation key and signature verification key).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserIdentity {
    pub user_id: String,
    pub kem_pk: KemPublicKey,
    pub sig_pk: Vec<u8>,
}

impl UserIdentity {
    /// `tag (1) || kem-len (2) || kem key || sig-len (2) || verification key`.
    pub fn public_key_bytes(&self) -> Vec<u8> {
        encode_composite(&self.kem_pk.to_bytes(), &self.sig_pk)
    }

    pub fn from_public_key_bytes(user_id: &str, bytes: &[u8], params: &KemParams) -> Result<Self, CertError> {
        let (kem, sig) = split_composite(bytes).ok_or(CertError::Decode("composite key"))?;
        Ok(UserIdentity {
            user_id: user_id.to_owned(),
            kem_pk: KemPublicKey::from_bytes(kem, params)?,
            sig_pk: sig.to_vec(),
        })
    }
}

fn encode_composite(kem: &[u8], sig: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + kem.len() + sig.len());
    out.push(COMPOSITE_TAG);
    out.extend_from_slice(&(kem.len() as u16).to_be_bytes());
    out.extend_from_slice(kem);
    out.extend_from_slice(&(sig.len() as u16).to_be_bytes());
    out.extend_from_slice(sig);
    out
}

/// Splits an encoded composite key into `(kem key, verification key)`.
pub fn split_composite(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let mut r = Reader::new(bytes);
    if r.u8()? != COMPOSITE_TAG {
        return None;
    }
    let kl = r.u16()? as usize;
    let kem = r.take(kl)?;
    let sl = r.u16()? as usize;
    let sig = r.take(sl)?;
    r.is_empty().then_some((kem, sig))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Certificate {
    pub user_id: String,
    pub public_key_bytes: Vec<u8>,
    pub signature: Signature,
    pub hra_hash: ResponseHash,
}

/// Signs the identity's composite key and binds it to the device response
/// for the challenge derived from `(user_id, key)`. Consumes one signature.
pub fn issue_certificate(
    identity: &UserIdentity,
    sign_kp: &mut SignKeyPair,
    device: &HraDevice,
) -> Result<Certificate, CertError> {
    if identity.user_id.is_empty() || identity.user_id.len() > MAX_USER_ID_BYTES {
        return Err(CertError::InvalidUserId);
    }
    if sign_kp.public() != identity.sig_pk.as_slice() {
        return Err(CertError::KeyMismatch);
    }
    let pk = identity.public_key_bytes();
    let challenge = challenge_of(&identity.user_id, &pk, device.challenge_bits());
    let hra_hash = hash_response(&device.respond(challenge)?);
    let signature = sign_kp.sign(&pk)?;
    Ok(Certificate {
        user_id: identity.user_id.clone(),
        public_key_bytes: pk,
        signature,
        hra_hash,
    })
}

/// Checks the signature over `public_key_bytes` under the embedded
/// verification key. The HRA hash is not checked here.
pub fn verify_signature(cert: &Certificate) -> bool {
    match split_composite(&cert.public_key_bytes) {
        Some((_, sig_pk)) => pqc_sign::verify(sig_pk, &cert.public_key_bytes, &cert.signature),
        None => false,
    }
}

impl Certificate {
    pub fn verification_key(&self) -> Option<&[u8]> {
        split_composite(&self.public_key_bytes).map(|(_, s)| s)
    }

    pub fn kem_public_key(&self, params: &KemParams) -> Result<KemPublicKey, CertError> {
        let (kem, _) = split_composite(&self.public_key_bytes).ok_or(CertError::Decode("composite key"))?;
        Ok(KemPublicKey::from_bytes(kem, params)?)
    }

    fn content_len(&self) -> usize {
        1 + 1 + self.user_id.len() + 2 + self.public_key_bytes.len() + 2 + self.signature.as_bytes().len() + 32
    }

    /// Length of the padded frame.
    pub fn encoded_len(&self) -> usize {
        self.content_len().div_ceil(FRAME_BYTES).max(1) * FRAME_BYTES
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(CERT_VERSION);
        out.push(self.user_id.len() as u8);
        out.extend_from_slice(self.user_id.as_bytes());
        out.extend_from_slice(&(self.public_key_bytes.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.public_key_bytes);
        let sig = self.signature.as_bytes();
        out.extend_from_slice(&(sig.len() as u16).to_be_bytes());
        out.extend_from_slice(sig);
        out.extend_from_slice(&self.hra_hash);
        out.resize(self.encoded_len(), 0);
        out
    }

    /// Parses one certificate frame from the front of `bytes`.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), CertError> {
        let mut r = Reader::new(bytes);
        let trunc = CertError::Decode("truncated");
        if r.u8().ok_or(trunc.clone())? != CERT_VERSION {
            return Err(CertError::Decode("unknown version"));
        }
        let id_len = r.u8().ok_or(trunc.clone())? as usize;
        if id_len == 0 || id_len > MAX_USER_ID_BYTES {
            return Err(CertError::Decode("user id length"));
        }
        let user_id = std::str::from_utf8(r.take(id_len).ok_or(trunc.clone())?)
            .map_err(|_| CertError::Decode("user id is not utf-8"))?
            .to_owned();
        let pk_len = r.u16().ok_or(trunc.clone())? as usize;
        let public_key_bytes = r.take(pk_len).ok_or(trunc.clone())?.to_vec();
        let sig_len = r.u16().ok_or(trunc.clone())? as usize;
        let signature = Signature::from_bytes(r.take(sig_len).ok_or(trunc.clone())?.to_vec());
        let hra_hash: ResponseHash = r.take(32).ok_or(trunc.clone())?.try_into().unwrap();
        let cert = Certificate {
            user_id,
            public_key_bytes,
            signature,
            hra_hash,
        };
        let frame = cert.encoded_len();
        if bytes.len() < frame {
            return Err(trunc);
        }
        if bytes[cert.content_len()..frame].iter().any(|&b| b != 0) {
            return Err(CertError::Decode("non-zero padding"));
        }
        Ok((cert, frame))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let (cert, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(CertError::Decode("over-long frame"));
        }
        Ok(cert)
    }

    /// SHA-256 of the encoded frame.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.encode()).into()
    }
}

/// Minimal cursor over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Some(head)
    }

    pub(crate) fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub(crate) fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_be_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_kem::keygen;
    use proptest::prelude::*;

    fn setup(id: &str, seed: u8, params: &KemParams) -> (UserIdentity, SignKeyPair, HraDevice) {
        let (kem_pk, _) = keygen(&[seed; 64], params).unwrap();
        let kp = SignKeyPair::generate(&[seed; 32], 4).unwrap();
        let ident = UserIdentity {
            user_id: id.into(),
            kem_pk,
            sig_pk: kp.public().to_vec(),
        };
        (ident, kp, HraDevice::new([seed; 32], 8).unwrap())
    }

    #[test]
    fn issued_certificate_verifies() {
        let (id, mut kp, dev) = setup("alice", 1, &KemParams::default_profile());
        let cert = issue_certificate(&id, &mut kp, &dev).unwrap();
        assert!(verify_signature(&cert));
        assert_eq!(kp.remaining_signatures(), 15);
    }

    #[test]
    fn hra_hash_matches_recomputation() {
        let (id, mut kp, dev) = setup("alice", 2, &KemParams::default_profile());
        let cert = issue_certificate(&id, &mut kp, &dev).unwrap();
        let c = challenge_of("alice", &id.public_key_bytes(), 8);
        let expected: [u8; 32] = Sha256::digest(dev.respond(c).unwrap()).into();
        assert_eq!(cert.hra_hash, expected);
    }

    #[test]
    fn same_id_different_device_different_hash() {
        let p = KemParams::default_profile();
        let (id, mut kp, _) = setup("alice", 3, &p);
        let a = issue_certificate(&id, &mut kp, &HraDevice::new([1; 32], 8).unwrap()).unwrap();
        let b = issue_certificate(&id, &mut kp, &HraDevice::new([2; 32], 8).unwrap()).unwrap();
        assert_ne!(a.hra_hash, b.hra_hash);
    }

    #[test]
    fn key_flip_breaks_signature() {
        let (id, mut kp, dev) = setup("bob", 4, &KemParams::toy());
        let cert = issue_certificate(&id, &mut kp, &dev).unwrap();
        for i in 0..cert.public_key_bytes.len() {
            let mut c = cert.clone();
            c.public_key_bytes[i] ^= 0x01;
            assert!(!verify_signature(&c), "byte {i}");
        }
    }

    #[test]
    fn transplanted_signature_rejected() {
        let p = KemParams::toy();
        let (a_id, mut a_kp, a_dev) = setup("a", 5, &p);
        let (b_id, mut b_kp, b_dev) = setup("b", 6, &p);
        let a = issue_certificate(&a_id, &mut a_kp, &a_dev).unwrap();
        let mut b = issue_certificate(&b_id, &mut b_kp, &b_dev).unwrap();
        b.signature = a.signature.clone();
        assert!(!verify_signature(&b));
    }

    #[test]
    fn mismatched_signing_key_refused() {
        let p = KemParams::toy();
        let (id, _, dev) = setup("a", 7, &p);
        let mut other = SignKeyPair::generate(&[99; 32], 2).unwrap();
        assert_eq!(issue_certificate(&id, &mut other, &dev), Err(CertError::KeyMismatch));
    }

    #[test]
    fn tampered_device_refused() {
        let (id, mut kp, mut dev) = setup("a", 8, &KemParams::toy());
        dev.set_tampered();
        assert_eq!(
            issue_certificate(&id, &mut kp, &dev),
            Err(CertError::Hra(HraError::Tampered))
        );
        // nothing was signed
        assert_eq!(kp.remaining_signatures(), 16);
    }

    #[test]
    fn encode_decode_and_framing() {
        let (id, mut kp, dev) = setup("carol", 9, &KemParams::default_profile());
        let cert = issue_certificate(&id, &mut kp, &dev).unwrap();
        let bytes = cert.encode();
        assert_eq!(bytes.len() % FRAME_BYTES, 0);
        assert_eq!(Certificate::decode(&bytes).unwrap(), cert);
        assert!(Certificate::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.extend_from_slice(&[0u8; FRAME_BYTES]);
        assert!(Certificate::decode(&long).is_err());
        let mut dirty = bytes.clone();
        *dirty.last_mut().unwrap() = 1;
        assert!(Certificate::decode(&dirty).is_err());
    }

    #[test]
    fn composite_key_round_trip() {
        let p = KemParams::default_profile();
        let (id, _, _) = setup("dan", 10, &p);
        let back = UserIdentity::from_public_key_bytes("dan", &id.public_key_bytes(), &p).unwrap();
        assert_eq!(back, id);
        assert!(split_composite(&id.public_key_bytes()[1..]).is_none());
    }

    fn arb_cert() -> impl Strategy<Value = Certificate> {
        (
            "[a-z0-9]{1,64}",
            prop::collection::vec(any::<u8>(), 0..3000),
            prop::collection::vec(any::<u8>(), 0..2600),
            any::<[u8; 32]>(),
        )
            .prop_map(|(user_id, pk, sig, hra_hash)| Certificate {
                user_id,
                public_key_bytes: pk,
                signature: Signature::from_bytes(sig),
                hra_hash,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encoding_round_trips(c in arb_cert()) {
            let bytes = c.encode();
            prop_assert_eq!(bytes.len() % FRAME_BYTES, 0);
            prop_assert_eq!(Certificate::decode(&bytes).unwrap(), c);
        }

        #[test]
        fn encoding_is_injective(a in arb_cert(), b in arb_cert()) {
            prop_assume!(a != b);
            prop_assert_ne!(a.encode(), b.encode());
        }
    }
}
