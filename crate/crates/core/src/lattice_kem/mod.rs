//! Module-LWE key encapsulation.
//!
//! A Kyber-style construction: a CPA-secure public-key encryption over
//! `R_q^k` lifted to an IND-CCA KEM with a Fujisaki-Okamoto re-encryption
//! check and implicit rejection.
//!
//! Byte layouts (all versioned with [`FORMAT_TAG`]):
//!
//! * public key: `tag || rho (32 B) || packed t`
//! * ciphertext: `tag || packed u || packed v`
//!
//! Packing is little-endian at the bit level, one polynomial per byte-aligned
//! block of `n * d` bits.

mod compress;
mod params;
mod pke;
mod poly;
mod sampling;

pub use compress::{centered_distance, compress, decompress, error_bound};
pub use params::KemParams;
pub use pke::{pke_decrypt, pke_encrypt, pke_keygen};
pub use poly::RingElement;
pub use sampling::{cbd_poly, expand_matrix, sample_noise};

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Digest, Sha3_256, Sha3_512, Shake256};
use thiserror::Error;

pub const FORMAT_TAG: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KemError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("corrupt key material: {0}")]
    CorruptKey(String),
    #[error("corrupt ciphertext: {0}")]
    CorruptCiphertext(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KemPublicKey {
    pub(crate) params: KemParams,
    pub(crate) rho: [u8; 32],
    /// Compressed coefficients of `t`, one vector per module component.
    pub(crate) t: Vec<Vec<u32>>,
}

impl KemPublicKey {
    pub fn params(&self) -> &KemParams {
        &self.params
    }

    pub fn rho(&self) -> &[u8; 32] {
        &self.rho
    }

    pub fn t_compressed(&self) -> &[Vec<u32>] {
        &self.t
    }

    /// Builds a key from raw parts. Shape is checked on use, not here.
    pub fn from_parts(params: KemParams, rho: [u8; 32], t: Vec<Vec<u32>>) -> Self {
        KemPublicKey { params, rho, t }
    }

    fn check_shape(&self) -> Result<(), KemError> {
        let p = &self.params;
        if self.t.len() != p.k || self.t.iter().any(|c| c.len() != p.n) {
            return Err(KemError::CorruptKey(format!(
                "expected {} components of {} coefficients",
                p.k, p.n
            )));
        }
        if self.t.iter().flatten().any(|&c| c >= 1 << p.d_t) {
            return Err(KemError::CorruptKey("coefficient exceeds d_t bits".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.public_key_bytes());
        out.push(FORMAT_TAG);
        out.extend_from_slice(&self.rho);
        for poly in &self.t {
            pack_into(&mut out, poly, self.params.d_t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &KemParams) -> Result<Self, KemError> {
        params.validate()?;
        if bytes.len() != params.public_key_bytes() {
            return Err(KemError::CorruptKey(format!(
                "public key is {} bytes, expected {}",
                bytes.len(),
                params.public_key_bytes()
            )));
        }
        if bytes[0] != FORMAT_TAG {
            return Err(KemError::CorruptKey(format!("unknown format tag {:#04x}", bytes[0])));
        }
        let rho: [u8; 32] = bytes[1..33].try_into().unwrap();
        let block = params.packed_poly_bytes(params.d_t);
        let t = bytes[33..]
            .chunks_exact(block)
            .map(|c| unpack(c, params.n, params.d_t))
            .collect();
        Ok(KemPublicKey {
            params: *params,
            rho,
            t,
        })
    }

    /// SHA3-256 of the encoded key.
    pub fn digest(&self) -> [u8; 32] {
        Sha3_256::digest(self.to_bytes()).into()
    }
}

/// Decapsulation key. `s` is regenerable from `sigma`.
#[derive(Clone, PartialEq, Eq)]
pub struct KemPrivateKey {
    s: Vec<RingElement>,
    sigma: [u8; 32],
    /// Implicit-rejection secret, derived from `sigma`.
    z: [u8; 32],
    public: KemPublicKey,
}

impl std::fmt::Debug for KemPrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KemPrivateKey")
            .field("params", &self.public.params)
            .finish_non_exhaustive()
    }
}

impl KemPrivateKey {
    pub fn secret_vector(&self) -> &[RingElement] {
        &self.s
    }

    pub fn sigma(&self) -> &[u8; 32] {
        &self.sigma
    }

    pub fn public_key(&self) -> &KemPublicKey {
        &self.public
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub(crate) params: KemParams,
    pub(crate) u: Vec<Vec<u32>>,
    pub(crate) v: Vec<u32>,
}

impl Ciphertext {
    pub fn params(&self) -> &KemParams {
        &self.params
    }

    pub fn u_compressed(&self) -> &[Vec<u32>] {
        &self.u
    }

    pub fn v_compressed(&self) -> &[u32] {
        &self.v
    }

    pub fn from_parts(params: KemParams, u: Vec<Vec<u32>>, v: Vec<u32>) -> Self {
        Ciphertext { params, u, v }
    }

    fn check_shape(&self, params: &KemParams) -> Result<(), KemError> {
        if self.params != *params {
            return Err(KemError::CorruptCiphertext("parameter mismatch".into()));
        }
        if self.u.len() != params.k
            || self.u.iter().any(|c| c.len() != params.n)
            || self.v.len() != params.n
        {
            return Err(KemError::CorruptCiphertext("dimension mismatch".into()));
        }
        if self.u.iter().flatten().any(|&c| c >= 1 << params.d_u)
            || self.v.iter().any(|&c| c >= 1 << params.d_v)
        {
            return Err(KemError::CorruptCiphertext("coefficient out of range".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.ciphertext_bytes());
        out.push(FORMAT_TAG);
        for poly in &self.u {
            pack_into(&mut out, poly, self.params.d_u);
        }
        pack_into(&mut out, &self.v, self.params.d_v);
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &KemParams) -> Result<Self, KemError> {
        params.validate()?;
        if bytes.len() != params.ciphertext_bytes() {
            return Err(KemError::CorruptCiphertext(format!(
                "ciphertext is {} bytes, expected {}",
                bytes.len(),
                params.ciphertext_bytes()
            )));
        }
        if bytes[0] != FORMAT_TAG {
            return Err(KemError::CorruptCiphertext(format!(
                "unknown format tag {:#04x}",
                bytes[0]
            )));
        }
        let ub = params.packed_poly_bytes(params.d_u);
        let (u_bytes, v_bytes) = bytes[1..].split_at(params.k * ub);
        let u = u_bytes
            .chunks_exact(ub)
            .map(|c| unpack(c, params.n, params.d_u))
            .collect();
        let v = unpack(v_bytes, params.n, params.d_v);
        Ok(Ciphertext {
            params: *params,
            u,
            v,
        })
    }
}

/// 32-byte KEM output. Never written to the wire.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedSecret([u8; 32]);

impl SharedSecret {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

fn pack_into(out: &mut Vec<u8>, values: &[u32], d: u32) {
    let start = out.len();
    out.resize(start + (values.len() * d as usize).div_ceil(8), 0);
    let buf = &mut out[start..];
    for (j, &val) in values.iter().enumerate() {
        for b in 0..d as usize {
            if (val >> b) & 1 == 1 {
                let pos = j * d as usize + b;
                buf[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
}

fn unpack(bytes: &[u8], n: usize, d: u32) -> Vec<u32> {
    (0..n)
        .map(|j| {
            (0..d as usize).fold(0u32, |acc, b| {
                let pos = j * d as usize + b;
                acc | ((((bytes[pos / 8] >> (pos % 8)) & 1) as u32) << b)
            })
        })
        .collect()
}

/// Deterministic key pair from a 64-byte seed split as `rho || sigma`.
pub fn keygen(seed: &[u8; 64], params: &KemParams) -> Result<(KemPublicKey, KemPrivateKey), KemError> {
    params.validate()?;
    let rho: [u8; 32] = seed[..32].try_into().unwrap();
    let sigma: [u8; 32] = seed[32..].try_into().unwrap();
    let (pk, s) = pke_keygen(&rho, &sigma, params);
    let mut z = [0u8; 32];
    let mut xof = Shake256::default();
    xof.update(b"zt5g-kem-reject");
    xof.update(&sigma);
    xof.finalize_xof().read(&mut z);
    let sk = KemPrivateKey {
        s,
        sigma,
        z,
        public: pk.clone(),
    };
    Ok((pk, sk))
}

fn derive_message(coins: &[u8; 32], params: &KemParams) -> Vec<u8> {
    let mut m = vec![0u8; params.message_bytes()];
    let mut xof = Shake256::default();
    xof.update(b"zt5g-kem-msg");
    xof.update(coins);
    xof.finalize_xof().read(&mut m);
    if !params.n.is_multiple_of(8) {
        let last = m.len() - 1;
        m[last] &= (1u8 << (params.n % 8)) - 1;
    }
    m
}

/// `(K, r) = G(m || H(pk))`.
fn derive_key_and_coins(m: &[u8], pk_digest: &[u8; 32]) -> ([u8; 32], [u8; 32]) {
    let g = Sha3_512::new().chain_update(m).chain_update(pk_digest).finalize();
    (g[..32].try_into().unwrap(), g[32..].try_into().unwrap())
}

/// Encapsulates a fresh secret to `pk`. Deterministic in `(pk, coins)`.
pub fn encapsulate(pk: &KemPublicKey, coins: &[u8; 32]) -> Result<(Ciphertext, SharedSecret), KemError> {
    pk.params.validate()?;
    pk.check_shape()?;
    let m = derive_message(coins, &pk.params);
    let (key, r) = derive_key_and_coins(&m, &pk.digest());
    Ok((pke_encrypt(pk, &m, &r), SharedSecret(key)))
}

/// Recovers the encapsulated secret.
///
/// Always decrypts, re-encrypts and derives the rejection key, then selects
/// the result with a branch-free mask; the amount of work does not depend on
/// whether the ciphertext was valid.
pub fn decapsulate(sk: &KemPrivateKey, ct: &Ciphertext) -> Result<SharedSecret, KemError> {
    let pk = &sk.public;
    ct.check_shape(&pk.params)?;
    let m = pke_decrypt(&sk.s, ct);
    let (key, r) = derive_key_and_coins(&m, &pk.digest());
    let ct_bytes = ct.to_bytes();
    let again = pke_encrypt(pk, &m, &r).to_bytes();

    let mut reject = [0u8; 32];
    let mut xof = Shake256::default();
    xof.update(&sk.z);
    xof.update(&ct_bytes);
    xof.finalize_xof().read(&mut reject);

    let diff = ct_bytes
        .iter()
        .zip(&again)
        .fold(0u8, |acc, (a, b)| acc | (a ^ b));
    // 0xff when equal, 0x00 otherwise.
    let mask = ((diff as u16).wrapping_sub(1) >> 8) as u8;
    let mut out = [0u8; 32];
    for i in 0..32 {
        out[i] = (key[i] & mask) | (reject[i] & !mask);
    }
    Ok(SharedSecret(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn keygen_is_deterministic() {
        let p = KemParams::default_profile();
        let (pk1, sk1) = keygen(&[5u8; 64], &p).unwrap();
        let (pk2, sk2) = keygen(&[5u8; 64], &p).unwrap();
        assert_eq!(pk1.to_bytes(), pk2.to_bytes());
        assert_eq!(sk1, sk2);
    }

    #[test]
    fn private_key_regenerates_from_sigma() {
        let p = KemParams::default_profile();
        let (_, sk) = keygen(&[8u8; 64], &p).unwrap();
        let (s, _) = sample_noise(sk.sigma(), &p);
        assert_eq!(s, sk.secret_vector());
    }

    #[test]
    fn distinct_public_keys() {
        let p = KemParams::default_profile();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let mut seed = [0u8; 64];
            rng.fill(&mut seed[..]);
            assert!(seen.insert(keygen(&seed, &p).unwrap().0.to_bytes()));
        }
    }

    #[test]
    fn encapsulate_is_deterministic() {
        let p = KemParams::default_profile();
        let (pk, _) = keygen(&[1u8; 64], &p).unwrap();
        let a = encapsulate(&pk, &[2u8; 32]).unwrap();
        let b = encapsulate(&pk, &[2u8; 32]).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.to_bytes().len(), p.ciphertext_bytes());
    }

    #[test]
    fn round_trip_default() {
        let p = KemParams::default_profile();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut seed = [0u8; 64];
            rng.fill(&mut seed[..]);
            let (pk, sk) = keygen(&seed, &p).unwrap();
            let (ct, ss) = encapsulate(&pk, &rng.gen()).unwrap();
            assert_eq!(decapsulate(&sk, &ct).unwrap(), ss);
        }
    }

    #[test]
    fn noiseless_toy_is_exact_for_every_message() {
        let p = KemParams::toy_noiseless();
        let (pk, sk) = keygen(&[4u8; 64], &p).unwrap();
        for m in 0u8..16 {
            let ct = pke_encrypt(&pk, &[m], &[0u8; 32]);
            assert_eq!(pke_decrypt(sk.secret_vector(), &ct), vec![m]);
        }
    }

    #[test]
    fn zero_ciphertext_decodes_zero_message() {
        let p = KemParams::toy_noiseless();
        let (_, sk) = keygen(&[4u8; 64], &p).unwrap();
        let ct = Ciphertext::from_parts(p, vec![vec![0; 4]], vec![0; 4]);
        assert_eq!(pke_decrypt(sk.secret_vector(), &ct), vec![0]);
    }

    #[test]
    fn tampered_ciphertext_changes_secret() {
        let p = KemParams::default_profile();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (pk, sk) = keygen(&[6u8; 64], &p).unwrap();
        for _ in 0..1000 {
            let (mut ct, ss) = encapsulate(&pk, &rng.gen()).unwrap();
            if rng.gen_bool(0.5) {
                let i = rng.gen_range(0..p.k);
                let j = rng.gen_range(0..p.n);
                ct.u[i][j] ^= 1 << rng.gen_range(0..p.d_u);
            } else {
                let j = rng.gen_range(0..p.n);
                ct.v[j] ^= 1 << rng.gen_range(0..p.d_v);
            }
            assert_ne!(decapsulate(&sk, &ct).unwrap(), ss);
        }
    }

    #[test]
    fn malformed_public_key_is_rejected() {
        let p = KemParams::default_profile();
        let (mut pk, _) = keygen(&[1u8; 64], &p).unwrap();
        pk.t.pop();
        assert!(matches!(encapsulate(&pk, &[0u8; 32]), Err(KemError::CorruptKey(_))));
    }

    #[test]
    fn mismatched_ciphertext_dimensions() {
        let p = KemParams::default_profile();
        let (pk, sk) = keygen(&[1u8; 64], &p).unwrap();
        let (mut ct, _) = encapsulate(&pk, &[0u8; 32]).unwrap();
        ct.v.truncate(10);
        assert!(matches!(decapsulate(&sk, &ct), Err(KemError::CorruptCiphertext(_))));
    }

    #[test]
    fn byte_layout_rejects_wrong_tag_and_length() {
        let p = KemParams::default_profile();
        let (pk, _) = keygen(&[1u8; 64], &p).unwrap();
        let mut bytes = pk.to_bytes();
        assert_eq!(KemPublicKey::from_bytes(&bytes, &p).unwrap(), pk);
        bytes[0] = 0x7f;
        assert!(KemPublicKey::from_bytes(&bytes, &p).is_err());
        assert!(KemPublicKey::from_bytes(&pk.to_bytes()[1..], &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ciphertext_bytes_round_trip(seed in any::<[u8; 32]>(), coins in any::<[u8; 32]>()) {
            let p = KemParams::default_profile();
            let mut full = [0u8; 64];
            full[..32].copy_from_slice(&seed);
            let (pk, _) = keygen(&full, &p).unwrap();
            let (ct, _) = encapsulate(&pk, &coins).unwrap();
            prop_assert_eq!(Ciphertext::from_bytes(&ct.to_bytes(), &p).unwrap(), ct);
            prop_assert_eq!(KemPublicKey::from_bytes(&pk.to_bytes(), &p).unwrap(), pk);
        }
    }
}
