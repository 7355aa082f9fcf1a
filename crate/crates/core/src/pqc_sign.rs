//! Post-quantum signatures.
//!
//! The reference scheme is a stateful Merkle tree of Winternitz one-time keys
//! (w = 16, SHA-256, tweaked hashes keyed by a public seed). `SchemeId`
//! reserves a tag for an externally supplied lattice signature.
//!
//! Encodings:
//!
//! * verification key: `scheme (1) || height (1) || public seed (32) || root (32)`
//! * signature: `scheme (1) || leaf index (4, BE) || 67 chain values || auth path`

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

const N: usize = 32;
const W: u32 = 16;
const LEN1: usize = 64;
const LEN2: usize = 3;
/// Chains per one-time signature.
pub const WOTS_LEN: usize = LEN1 + LEN2;
pub const MAX_HEIGHT: u8 = 20;
pub const DEFAULT_HEIGHT: u8 = 10;
pub const PUBLIC_KEY_BYTES: usize = 2 + 2 * N;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SchemeId {
    MerkleWots = 0x01,
    /// Reserved for a lattice signature plug-in. Not implemented.
    Dilithium = 0x02,
}

impl SchemeId {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(SchemeId::MerkleWots),
            0x02 => Some(SchemeId::Dilithium),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignError {
    #[error("signing key exhausted: all {0} one-time leaves used")]
    Exhausted(u64),
    #[error("tree height {0} outside 0..={MAX_HEIGHT}")]
    InvalidHeight(u8),
    #[error("malformed key encoding")]
    MalformedKey,
}

type Hash = [u8; N];

fn h(parts: &[&[u8]]) -> Hash {
    let mut d = Sha256::new();
    for p in parts {
        d.update(p);
    }
    d.finalize().into()
}

fn chain(pub_seed: &Hash, leaf: u32, idx: u16, x: &Hash, start: u32, steps: u32) -> Hash {
    let mut v = *x;
    for s in start..start + steps {
        v = h(&[
            &[0x01],
            pub_seed,
            &leaf.to_be_bytes(),
            &idx.to_be_bytes(),
            &[s as u8],
            &v,
        ]);
    }
    v
}

/// Base-16 digits of the message digest followed by the checksum digits.
fn digits(digest: &Hash) -> [u32; WOTS_LEN] {
    let mut out = [0u32; WOTS_LEN];
    for (i, b) in digest.iter().enumerate() {
        out[2 * i] = (b >> 4) as u32;
        out[2 * i + 1] = (b & 0x0f) as u32;
    }
    let csum: u32 = out[..LEN1].iter().map(|d| W - 1 - d).sum();
    out[LEN1] = (csum >> 8) & 0xf;
    out[LEN1 + 1] = (csum >> 4) & 0xf;
    out[LEN1 + 2] = csum & 0xf;
    out
}

fn message_digest(pub_seed: &Hash, root: &Hash, leaf: u32, msg: &[u8]) -> Hash {
    h(&[&[0x04], pub_seed, root, &leaf.to_be_bytes(), msg])
}

fn chain_secret(sk_seed: &Hash, leaf: u32, idx: u16) -> Hash {
    h(&[&[0x00], sk_seed, &leaf.to_be_bytes(), &idx.to_be_bytes()])
}

fn leaf_from_ends(pub_seed: &Hash, leaf: u32, ends: &[Hash]) -> Hash {
    let mut d = Sha256::new();
    d.update([0x02]);
    d.update(pub_seed);
    d.update(leaf.to_be_bytes());
    for e in ends {
        d.update(e);
    }
    d.finalize().into()
}

fn node(pub_seed: &Hash, level: u8, index: u32, left: &Hash, right: &Hash) -> Hash {
    h(&[&[0x03], pub_seed, &[level], &index.to_be_bytes(), left, right])
}

fn wots_leaf(sk_seed: &Hash, pub_seed: &Hash, leaf: u32) -> Hash {
    let ends: Vec<Hash> = (0..WOTS_LEN as u16)
        .map(|i| chain(pub_seed, leaf, i, &chain_secret(sk_seed, leaf, i), 0, W - 1))
        .collect();
    leaf_from_ends(pub_seed, leaf, &ends)
}

/// Stateful signing key with its cached Merkle tree.
///
/// Signing needs exclusive access: every call consumes one leaf.
#[derive(Clone)]
pub struct SignKeyPair {
    public: Vec<u8>,
    secret: Hash,
    scheme_id: SchemeId,
    height: u8,
    next_leaf: u64,
    sk_seed: Hash,
    pub_seed: Hash,
    /// `levels[0]` are the leaves, `levels[height]` is the root.
    levels: Vec<Vec<Hash>>,
}

impl std::fmt::Debug for SignKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SignKeyPair")
            .field("scheme_id", &self.scheme_id)
            .field("height", &self.height)
            .field("remaining", &self.remaining_signatures())
            .finish_non_exhaustive()
    }
}

impl SignKeyPair {
    pub fn generate(seed: &[u8; 32], height: u8) -> Result<Self, SignError> {
        Self::restore(seed, height, 0)
    }

    fn restore(seed: &[u8; 32], height: u8, next_leaf: u64) -> Result<Self, SignError> {
        if height > MAX_HEIGHT {
            return Err(SignError::InvalidHeight(height));
        }
        let sk_seed = h(&[b"zt5g-wots-sk", seed]);
        let pub_seed = h(&[b"zt5g-wots-pub", seed]);
        let leaves: Vec<Hash> = (0..1u32 << height)
            .into_par_iter()
            .map(|i| wots_leaf(&sk_seed, &pub_seed, i))
            .collect();
        let mut levels = vec![leaves];
        for level in 1..=height {
            let prev = &levels[level as usize - 1];
            let next = prev
                .chunks_exact(2)
                .enumerate()
                .map(|(i, pair)| node(&pub_seed, level, i as u32, &pair[0], &pair[1]))
                .collect();
            levels.push(next);
        }
        let root = levels[height as usize][0];
        let mut public = Vec::with_capacity(PUBLIC_KEY_BYTES);
        public.push(SchemeId::MerkleWots as u8);
        public.push(height);
        public.extend_from_slice(&pub_seed);
        public.extend_from_slice(&root);
        Ok(SignKeyPair {
            public,
            secret: *seed,
            scheme_id: SchemeId::MerkleWots,
            height,
            next_leaf: next_leaf.min(1 << height),
            sk_seed,
            pub_seed,
            levels,
        })
    }

    pub fn public(&self) -> &[u8] {
        &self.public
    }

    pub fn scheme_id(&self) -> SchemeId {
        self.scheme_id
    }

    pub fn height(&self) -> u8 {
        self.height
    }

    pub fn remaining_signatures(&self) -> u64 {
        (1u64 << self.height) - self.next_leaf
    }

    /// Index of the leaf the next signature will use.
    pub fn next_leaf(&self) -> u64 {
        self.next_leaf
    }

    /// Secret state for storage: `seed (32) || height (1) || next leaf (8, BE)`.
    pub fn to_secret_bytes(&self) -> Vec<u8> {
        let mut out = self.secret.to_vec();
        out.push(self.height);
        out.extend_from_slice(&self.next_leaf.to_be_bytes());
        out
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, SignError> {
        if bytes.len() != 41 {
            return Err(SignError::MalformedKey);
        }
        let seed: [u8; 32] = bytes[..32].try_into().unwrap();
        let next = u64::from_be_bytes(bytes[33..41].try_into().unwrap());
        if bytes[32] <= MAX_HEIGHT && next > 1u64 << bytes[32] {
            return Err(SignError::MalformedKey);
        }
        Self::restore(&seed, bytes[32], next)
    }

    /// Signs `message` with the next unused leaf.
    pub fn sign(&mut self, message: &[u8]) -> Result<Signature, SignError> {
        if self.remaining_signatures() == 0 {
            return Err(SignError::Exhausted(1 << self.height));
        }
        let leaf = self.next_leaf as u32;
        self.next_leaf += 1;

        let root = self.levels[self.height as usize][0];
        let d = digits(&message_digest(&self.pub_seed, &root, leaf, message));
        let mut bytes = Vec::with_capacity(signature_len(self.height));
        bytes.push(self.scheme_id as u8);
        bytes.extend_from_slice(&leaf.to_be_bytes());
        for (i, &digit) in d.iter().enumerate() {
            let sk = chain_secret(&self.sk_seed, leaf, i as u16);
            bytes.extend_from_slice(&chain(&self.pub_seed, leaf, i as u16, &sk, 0, digit));
        }
        let mut idx = leaf as usize;
        for level in 0..self.height as usize {
            bytes.extend_from_slice(&self.levels[level][idx ^ 1]);
            idx >>= 1;
        }
        Ok(Signature { bytes })
    }
}

pub fn signature_len(height: u8) -> usize {
    1 + 4 + WOTS_LEN * N + height as usize * N
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    bytes: Vec<u8>,
}

impl Signature {
    /// Wraps raw bytes. No validation; `verify` rejects malformed input.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Signature { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn scheme_id(&self) -> Option<SchemeId> {
        self.bytes.first().and_then(|&b| SchemeId::from_byte(b))
    }

    pub fn leaf_index(&self) -> Option<u32> {
        self.bytes
            .get(1..5)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }
}

/// Checks `sig` over `message` under the encoded verification key.
///
/// Any malformed key or signature yields `false`.
pub fn verify(public: &[u8], message: &[u8], sig: &Signature) -> bool {
    if public.len() != PUBLIC_KEY_BYTES || public[0] != SchemeId::MerkleWots as u8 {
        return false;
    }
    let height = public[1];
    if height > MAX_HEIGHT {
        return false;
    }
    let pub_seed: Hash = public[2..2 + N].try_into().unwrap();
    let root: Hash = public[2 + N..].try_into().unwrap();
    let bytes = sig.as_bytes();
    if bytes.len() != signature_len(height) || bytes[0] != SchemeId::MerkleWots as u8 {
        return false;
    }
    let leaf = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
    if (leaf as u64) >> height != 0 {
        return false;
    }
    let d = digits(&message_digest(&pub_seed, &root, leaf, message));
    let ots = &bytes[5..5 + WOTS_LEN * N];
    let ends: Vec<Hash> = ots
        .chunks_exact(N)
        .zip(d.iter())
        .enumerate()
        .map(|(i, (c, &digit))| {
            chain(&pub_seed, leaf, i as u16, c.try_into().unwrap(), digit, W - 1 - digit)
        })
        .collect();
    let mut acc = leaf_from_ends(&pub_seed, leaf, &ends);
    let mut idx = leaf;
    for (level, sib) in bytes[5 + WOTS_LEN * N..].chunks_exact(N).enumerate() {
        let sib: Hash = sib.try_into().unwrap();
        acc = if idx & 1 == 0 {
            node(&pub_seed, level as u8 + 1, idx >> 1, &acc, &sib)
        } else {
            node(&pub_seed, level as u8 + 1, idx >> 1, &sib, &acc)
        };
        idx >>= 1;
    }
    acc == root
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn deterministic_keygen() {
        let a = SignKeyPair::generate(&[1u8; 32], 3).unwrap();
        let b = SignKeyPair::generate(&[1u8; 32], 3).unwrap();
        assert_eq!(a.public(), b.public());
        assert_eq!(a.public().len(), PUBLIC_KEY_BYTES);
    }

    #[test]
    fn height_two_has_four_leaves() {
        let kp = SignKeyPair::generate(&[0u8; 32], 2).unwrap();
        assert_eq!(kp.remaining_signatures(), 4);
    }

    #[test]
    fn distinct_seeds_distinct_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = HashSet::new();
        for _ in 0..100 {
            let kp = SignKeyPair::generate(&rng.gen(), 1).unwrap();
            assert!(seen.insert(kp.public().to_vec()));
        }
    }

    #[test]
    fn sign_verify_and_exhaust() {
        let mut kp = SignKeyPair::generate(&[2u8; 32], 2).unwrap();
        for i in 0..4 {
            let sig = kp.sign(b"hello").unwrap();
            assert_eq!(sig.leaf_index(), Some(i));
            assert!(verify(kp.public(), b"hello", &sig));
        }
        assert_eq!(kp.sign(b"hello"), Err(SignError::Exhausted(4)));
    }

    #[test]
    fn same_message_uses_distinct_leaves() {
        let mut kp = SignKeyPair::generate(&[3u8; 32], 4).unwrap();
        let a = kp.sign(b"m").unwrap();
        let b = kp.sign(b"m").unwrap();
        assert_ne!(a.leaf_index(), b.leaf_index());
        assert_ne!(a, b);
    }

    #[test]
    fn bit_flip_in_message_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut kp = SignKeyPair::generate(&[4u8; 32], 10).unwrap();
        for _ in 0..1000 {
            let mut msg = vec![0u8; 48];
            rng.fill(&mut msg[..]);
            let sig = kp.sign(&msg).unwrap();
            let bit = rng.gen_range(0..msg.len() * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(kp.public(), &msg, &sig));
        }
    }

    #[test]
    fn cross_key_rejected() {
        let mut a = SignKeyPair::generate(&[5u8; 32], 3).unwrap();
        let b = SignKeyPair::generate(&[6u8; 32], 3).unwrap();
        for _ in 0..8 {
            let sig = a.sign(b"msg").unwrap();
            assert!(!verify(b.public(), b"msg", &sig));
        }
    }

    #[test]
    fn malformed_inputs_are_false() {
        let mut kp = SignKeyPair::generate(&[7u8; 32], 2).unwrap();
        let sig = kp.sign(b"x").unwrap();
        let mut short = sig.as_bytes().to_vec();
        short.pop();
        assert!(!verify(kp.public(), b"x", &Signature::from_bytes(short)));
        assert!(!verify(kp.public(), b"x", &Signature::from_bytes(vec![])));
        assert!(!verify(&kp.public()[1..], b"x", &sig));
        let mut wrong_scheme = sig.as_bytes().to_vec();
        wrong_scheme[0] = SchemeId::Dilithium as u8;
        assert!(!verify(kp.public(), b"x", &Signature::from_bytes(wrong_scheme)));
        let mut out_of_range = sig.as_bytes().to_vec();
        out_of_range[1..5].copy_from_slice(&9u32.to_be_bytes());
        assert!(!verify(kp.public(), b"x", &Signature::from_bytes(out_of_range)));
    }

    #[test]
    fn secret_state_round_trip_preserves_counter() {
        let mut kp = SignKeyPair::generate(&[8u8; 32], 3).unwrap();
        kp.sign(b"a").unwrap();
        kp.sign(b"b").unwrap();
        let restored = SignKeyPair::from_secret_bytes(&kp.to_secret_bytes()).unwrap();
        assert_eq!(restored.public(), kp.public());
        assert_eq!(restored.next_leaf(), 2);
        assert!(SignKeyPair::from_secret_bytes(&[0u8; 10]).is_err());
    }

    #[test]
    fn checksum_digits_in_range() {
        let d = digits(&[0u8; 32]);
        assert!(d.iter().all(|&x| x < W));
        // all-zero digest: checksum = 64 * 15 = 960 = 0x3c0
        assert_eq!(&d[LEN1..], &[3, 12, 0]);
    }
}
