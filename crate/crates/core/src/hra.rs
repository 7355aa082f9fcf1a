//! Simulated hardware root of authentication.
//!
//! A device is a keyed pseudorandom function over a challenge space of
//! `2^m` indices. Responses are noiseless; a fault hook exists for negative
//! tests. Only hashes of responses ever leave this module in serialized form.

use std::sync::atomic::{AtomicU64, Ordering};

use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest challenge space whose full image may be enumerated.
pub const MAX_IMAGE_BITS: u8 = 24;
pub const DEFAULT_CHALLENGE_BITS: u8 = 8;
pub const HASH_SHA256: u8 = 0x01;
const IMAGE_MAGIC: &[u8; 4] = b"HRAI";
const IMAGE_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HraError {
    #[error("device has been tampered with; responses are permanently unavailable")]
    Tampered,
    #[error("challenge bits {0} outside 1..=32")]
    InvalidChallengeBits(u8),
    #[error("challenge {0} outside the device challenge space")]
    ChallengeOutOfRange(u32),
    #[error("challenge space of 2^{0} rows is too large to enumerate")]
    ImageTooLarge(u8),
    #[error("malformed image: {0}")]
    MalformedImage(String),
}

pub type Response = [u8; 32];
pub type ResponseHash = [u8; 32];

/// `H(.)` applied to HRA responses.
pub fn hash_response(r: &Response) -> ResponseHash {
    Sha256::digest(r).into()
}

/// Reduces `(user_id, public key)` to a challenge index in `[0, 2^m)`.
pub fn challenge_of(user_id: &str, public_key_bytes: &[u8], m: u8) -> u32 {
    assert!((1..=32).contains(&m), "challenge bits must be in 1..=32");
    let d = Sha256::new()
        .chain_update(b"zt5g-challenge")
        .chain_update((user_id.len() as u16).to_be_bytes())
        .chain_update(user_id.as_bytes())
        .chain_update(public_key_bytes)
        .finalize();
    let word = u32::from_be_bytes(d[..4].try_into().unwrap());
    if m == 32 {
        word
    } else {
        word >> (32 - m)
    }
}

/// Deterministic corruption of responses, for negative tests only.
#[derive(Debug)]
pub enum FaultHook {
    /// Flips one bit of every response.
    FlipBit(u8),
    /// Flips each bit with probability `ber`, fresh draws on every read.
    Noise { ber: f64, seed: u64, reads: AtomicU64 },
}

impl FaultHook {
    pub fn noise(ber: f64, seed: u64) -> Self {
        FaultHook::Noise {
            ber,
            seed,
            reads: AtomicU64::new(0),
        }
    }

    fn apply(&self, r: &mut Response) {
        match self {
            FaultHook::FlipBit(bit) => r[(*bit as usize / 8) % 32] ^= 1 << (bit % 8),
            FaultHook::Noise { ber, seed, reads } => {
                use rand::{Rng, SeedableRng};
                let read = reads.fetch_add(1, Ordering::Relaxed);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ read.rotate_left(17));
                for byte in r.iter_mut() {
                    for b in 0..8 {
                        if rng.gen_bool(*ber) {
                            *byte ^= 1 << b;
                        }
                    }
                }
            }
        }
    }
}

pub struct HraDevice {
    device_secret: [u8; 32],
    challenge_bits: u8,
    tampered: bool,
    fault: Option<FaultHook>,
}

impl std::fmt::Debug for HraDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HraDevice")
            .field("challenge_bits", &self.challenge_bits)
            .field("tampered", &self.tampered)
            .finish_non_exhaustive()
    }
}

impl HraDevice {
    /// Models a freshly manufactured device. `silicon` stands in for the
    /// physical variation that makes the device unique.
    pub fn new(silicon: [u8; 32], challenge_bits: u8) -> Result<Self, HraError> {
        if !(1..=32).contains(&challenge_bits) {
            return Err(HraError::InvalidChallengeBits(challenge_bits));
        }
        Ok(HraDevice {
            device_secret: silicon,
            challenge_bits,
            tampered: false,
            fault: None,
        })
    }

    pub fn with_fault(mut self, hook: FaultHook) -> Self {
        self.fault = Some(hook);
        self
    }

    pub fn challenge_bits(&self) -> u8 {
        self.challenge_bits
    }

    pub fn is_tampered(&self) -> bool {
        self.tampered
    }

    /// The silicon model, for persisting the simulated device itself.
    ///
    /// This is the device, not data produced by it: it belongs with the
    /// device's private state and never in images, certificates or traffic.
    pub fn silicon(&self) -> &[u8; 32] {
        &self.device_secret
    }

    pub fn respond(&self, challenge: u32) -> Result<Response, HraError> {
        if self.tampered {
            return Err(HraError::Tampered);
        }
        if self.challenge_bits < 32 && challenge >> self.challenge_bits != 0 {
            return Err(HraError::ChallengeOutOfRange(challenge));
        }
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&self.device_secret)
            .expect("hmac accepts any key length");
        mac.update(b"zt5g-hra");
        mac.update(&challenge.to_be_bytes());
        let mut r: Response = mac.finalize().into_bytes().into();
        if let Some(f) = &self.fault {
            f.apply(&mut r);
        }
        Ok(r)
    }

    /// Irreversibly disables the device. Idempotent.
    pub fn set_tampered(&mut self) {
        self.tampered = true;
    }

    /// Walks the entire challenge space and keeps only hashed responses.
    pub fn enumerate_image(&self, user_id: &str) -> Result<HraImage, HraError> {
        if self.tampered {
            return Err(HraError::Tampered);
        }
        if self.challenge_bits > MAX_IMAGE_BITS {
            return Err(HraError::ImageTooLarge(self.challenge_bits));
        }
        let entries = (0..1u32 << self.challenge_bits)
            .map(|c| self.respond(c).map(|r| hash_response(&r)))
            .collect::<Result<_, _>>()?;
        Ok(HraImage {
            user_id: user_id.to_owned(),
            challenge_bits: self.challenge_bits,
            entries,
        })
    }
}

/// Hashed image of one device: row `j` is `H(f(j))`.
///
/// File format: `"HRAI" || version (1) || hash tag (1) || m (1) ||
/// id length (1) || id || 2^m rows of 32 bytes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HraImage {
    user_id: String,
    challenge_bits: u8,
    entries: Vec<ResponseHash>,
}

impl HraImage {
    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn challenge_bits(&self) -> u8 {
        self.challenge_bits
    }

    pub fn entries(&self) -> &[ResponseHash] {
        &self.entries
    }

    pub fn row(&self, challenge: u32) -> Option<&ResponseHash> {
        self.entries.get(challenge as usize)
    }

    pub fn from_parts(user_id: String, challenge_bits: u8, entries: Vec<ResponseHash>) -> Result<Self, HraError> {
        if !(1..=MAX_IMAGE_BITS).contains(&challenge_bits) {
            return Err(HraError::MalformedImage(format!("challenge bits {challenge_bits}")));
        }
        if entries.len() != 1usize << challenge_bits {
            return Err(HraError::MalformedImage(format!(
                "{} rows for m = {challenge_bits}",
                entries.len()
            )));
        }
        if user_id.is_empty() || user_id.len() > 64 {
            return Err(HraError::MalformedImage("user id must be 1..=64 bytes".into()));
        }
        Ok(HraImage {
            user_id,
            challenge_bits,
            entries,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.user_id.len() + 32 * self.entries.len());
        out.extend_from_slice(IMAGE_MAGIC);
        out.push(IMAGE_VERSION);
        out.push(HASH_SHA256);
        out.push(self.challenge_bits);
        out.push(self.user_id.len() as u8);
        out.extend_from_slice(self.user_id.as_bytes());
        for e in &self.entries {
            out.extend_from_slice(e);
        }
        out
    }

    /// Parses one image from the front of `bytes`, returning bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), HraError> {
        let bad = |why: &str| HraError::MalformedImage(why.to_owned());
        if bytes.len() < 8 || &bytes[..4] != IMAGE_MAGIC {
            return Err(bad("missing magic"));
        }
        if bytes[4] != IMAGE_VERSION {
            return Err(bad("unsupported version"));
        }
        if bytes[5] != HASH_SHA256 {
            return Err(bad("unsupported hash algorithm"));
        }
        let m = bytes[6];
        if !(1..=MAX_IMAGE_BITS).contains(&m) {
            return Err(bad("challenge bits out of range"));
        }
        let id_len = bytes[7] as usize;
        let rows = 1usize << m;
        let total = 8 + id_len + 32 * rows;
        if bytes.len() < total {
            return Err(bad("truncated"));
        }
        let user_id = std::str::from_utf8(&bytes[8..8 + id_len])
            .map_err(|_| bad("user id is not utf-8"))?
            .to_owned();
        let entries = bytes[8 + id_len..total]
            .chunks_exact(32)
            .map(|c| c.try_into().unwrap())
            .collect();
        Ok((Self::from_parts(user_id, m, entries)?, total))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HraError> {
        let (img, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(HraError::MalformedImage("trailing bytes".into()));
        }
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn device(seed: u8, m: u8) -> HraDevice {
        HraDevice::new([seed; 32], m).unwrap()
    }

    #[test]
    fn challenge_is_deterministic_and_bounded() {
        let a = challenge_of("alice", b"key", 8);
        assert_eq!(a, challenge_of("alice", b"key", 8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let key: [u8; 40] = std::array::from_fn(|_| rng.gen());
            assert!(challenge_of("u", &key, 8) < 256);
        }
    }

    #[test]
    fn challenge_covers_every_bucket() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hit = [false; 256];
        for _ in 0..10_000 {
            let key: [u8; 32] = rng.gen();
            hit[challenge_of("u", &key, 8) as usize] = true;
        }
        assert!(hit.iter().all(|&h| h));
    }

    #[test]
    fn id_and_key_are_not_confusable() {
        // length prefix keeps ("ab", "c..") and ("a", "bc..") apart
        assert_ne!(challenge_of("ab", b"c", 32), challenge_of("a", b"bc", 32));
    }

    #[test]
    fn respond_is_deterministic() {
        let d = device(1, 8);
        assert_eq!(d.respond(7).unwrap(), d.respond(7).unwrap());
    }

    #[test]
    fn distinct_devices_distinct_responses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = HraDevice::new(rng.gen(), 8).unwrap();
            let b = HraDevice::new(rng.gen(), 8).unwrap();
            assert_ne!(a.respond(42).unwrap(), b.respond(42).unwrap());
        }
    }

    #[test]
    fn tamper_disables_device() {
        let mut d = device(2, 4);
        assert!(d.respond(1).is_ok());
        d.set_tampered();
        assert_eq!(d.respond(1), Err(HraError::Tampered));
        assert_eq!(d.enumerate_image("x"), Err(HraError::Tampered));
        d.set_tampered();
        assert!(d.is_tampered());
        assert_eq!(d.respond(1), Err(HraError::Tampered));
    }

    #[test]
    fn out_of_range_challenge() {
        assert_eq!(device(1, 4).respond(16), Err(HraError::ChallengeOutOfRange(16)));
        assert!(HraDevice::new([0; 32], 0).is_err());
        assert!(HraDevice::new([0; 32], 33).is_err());
    }

    #[test]
    fn image_rows_are_hashed_responses() {
        let d = device(3, 4);
        let img = d.enumerate_image("bob").unwrap();
        assert_eq!(img.entries().len(), 16);
        for j in 0..16u32 {
            let r = d.respond(j).unwrap();
            let expected: [u8; 32] = Sha256::digest(r).into();
            assert_eq!(img.row(j), Some(&expected));
        }
    }

    #[test]
    fn images_differ_rowwise_between_devices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = HraDevice::new(rng.gen(), 4).unwrap().enumerate_image("u").unwrap();
            let b = HraDevice::new(rng.gen(), 4).unwrap().enumerate_image("u").unwrap();
            for (x, y) in a.entries().iter().zip(b.entries()) {
                assert_ne!(x, y);
            }
        }
    }

    #[test]
    fn no_response_collisions_across_devices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let d = HraDevice::new(rng.gen(), 8).unwrap();
            for c in 0..16 {
                assert!(seen.insert(d.respond(c).unwrap()));
            }
        }
    }

    #[test]
    fn serialized_image_has_no_raw_responses() {
        let d = device(6, 4);
        let bytes = d.enumerate_image("carol").unwrap().to_bytes();
        for j in 0..16 {
            let r = d.respond(j).unwrap();
            assert!(!bytes.windows(32).any(|w| w == r));
        }
        assert!(!bytes.windows(32).any(|w| w == d.silicon()));
        assert!(!format!("{d:?}").contains(&format!("{:?}", d.silicon())));
    }

    #[test]
    fn image_file_round_trip_and_rejects_truncation() {
        let img = device(7, 4).enumerate_image("dave").unwrap();
        let bytes = img.to_bytes();
        assert_eq!(HraImage::from_bytes(&bytes).unwrap(), img);
        assert!(HraImage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(HraImage::from_bytes(&extra).is_err());
    }

    #[test]
    fn fault_hook_breaks_exact_match() {
        let clean = device(8, 4);
        let faulty = device(8, 4).with_fault(FaultHook::FlipBit(0));
        assert_ne!(clean.respond(3).unwrap(), faulty.respond(3).unwrap());
        let noisy = device(8, 4).with_fault(FaultHook::noise(0.05, 1));
        assert_ne!(noisy.respond(3).unwrap(), noisy.respond(3).unwrap());
    }
}
