use super::KemError;

/// Parameter set of the Module-LWE scheme.
///
/// All parties of one network share a single parameter set, picked by the
/// administrator at initialization. Encodings therefore do not carry the
/// parameters; decoders take them as an argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KemParams {
    /// Ring dimension, a power of two.
    pub n: usize,
    /// Module rank.
    pub k: usize,
    /// Prime modulus, below 2^16.
    pub q: u32,
    /// Centered binomial noise width.
    pub eta: u32,
    pub d_t: u32,
    pub d_u: u32,
    pub d_v: u32,
}

impl KemParams {
    /// n=256, q=3329, k=3, eta=2 with `t` left uncompressed.
    pub const fn default_profile() -> Self {
        KemParams {
            n: 256,
            k: 3,
            q: 3329,
            eta: 2,
            d_t: 12,
            d_u: 10,
            d_v: 4,
        }
    }

    /// Tiny lossy profile for oracle tests. Decryption failures are frequent.
    pub const fn toy() -> Self {
        KemParams {
            n: 4,
            k: 2,
            q: 17,
            eta: 1,
            d_t: 3,
            d_u: 4,
            d_v: 3,
        }
    }

    /// Tiny noiseless, lossless profile. Round trips are exact; offers no
    /// security whatsoever and exists for demos and exhaustive checks.
    pub const fn toy_noiseless() -> Self {
        KemParams {
            n: 4,
            k: 1,
            q: 17,
            eta: 0,
            d_t: 5,
            d_u: 5,
            d_v: 5,
        }
    }

    /// `ceil(log2 q)`.
    pub fn q_bits(&self) -> u32 {
        32 - (self.q - 1).leading_zeros()
    }

    pub fn validate(&self) -> Result<(), KemError> {
        let bad = |why: &'static str| Err(KemError::InvalidParams(why));
        if self.n == 0 || !self.n.is_power_of_two() {
            return bad("ring dimension must be a power of two");
        }
        if self.k == 0 {
            return bad("module rank must be at least 1");
        }
        if self.q < 3 || self.q >= 1 << 16 || !is_prime(self.q) {
            return bad("modulus must be an odd prime below 2^16");
        }
        let qb = self.q_bits();
        for d in [self.d_t, self.d_u, self.d_v] {
            // d == ceil(log2 q) is the lossless setting.
            if d == 0 || d > qb {
                return bad("compression width out of range");
            }
        }
        if self.eta > 8 {
            return bad("noise width too large");
        }
        Ok(())
    }

    /// Bytes of a message (one bit per ring coefficient).
    pub fn message_bytes(&self) -> usize {
        self.n.div_ceil(8)
    }

    pub fn packed_poly_bytes(&self, d: u32) -> usize {
        (self.n * d as usize).div_ceil(8)
    }

    /// Encoded public key length, including the format tag.
    pub fn public_key_bytes(&self) -> usize {
        1 + 32 + self.k * self.packed_poly_bytes(self.d_t)
    }

    /// Encoded ciphertext length, including the format tag.
    pub fn ciphertext_bytes(&self) -> usize {
        1 + self.k * self.packed_poly_bytes(self.d_u) + self.packed_poly_bytes(self.d_v)
    }
}

impl Default for KemParams {
    fn default() -> Self {
        Self::default_profile()
    }
}

fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut i = 2u32;
    while i * i <= q {
        if q.is_multiple_of(i) {
            return false;
        }
        i += 1;
    }
    true
}
