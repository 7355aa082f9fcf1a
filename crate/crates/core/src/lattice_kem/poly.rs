//! Arithmetic in `R_q = Z_q[X]/(X^n + 1)`.
//!
//! Schoolbook convolution is the reference multiplication. For n=256, q=3329
//! a number-theoretic transform is used instead; the two are bit-equivalent.

use std::sync::OnceLock;

use super::KemParams;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RingElement {
    coeffs: Vec<u32>,
}

impl RingElement {
    pub fn zero(n: usize) -> Self {
        RingElement { coeffs: vec![0; n] }
    }

    /// Reduces every coefficient into `[0, q)`.
    pub fn from_coeffs(coeffs: Vec<u32>, q: u32) -> Self {
        RingElement {
            coeffs: coeffs.into_iter().map(|c| c % q).collect(),
        }
    }

    /// Maps signed values into `[0, q)`.
    pub fn from_signed(coeffs: &[i32], q: u32) -> Self {
        RingElement {
            coeffs: coeffs
                .iter()
                .map(|&c| c.rem_euclid(q as i32) as u32)
                .collect(),
        }
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Self, q: u32) -> Self {
        RingElement {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a + b) % q)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self, q: u32) -> Self {
        RingElement {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a + q - b) % q)
                .collect(),
        }
    }

    /// Product in `R_q`, using the NTT when the parameters allow it.
    pub fn mul(&self, other: &Self, params: &KemParams) -> Self {
        if params.n == 256 && params.q == ntt::Q {
            ntt::mul(self, other)
        } else {
            self.mul_schoolbook(other, params.q)
        }
    }

    /// Negacyclic schoolbook convolution.
    pub fn mul_schoolbook(&self, other: &Self, q: u32) -> Self {
        let n = self.coeffs.len();
        let q64 = q as u64;
        let mut acc = vec![0u64; n];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                let p = (a as u64 * b as u64) % q64;
                let idx = i + j;
                if idx < n {
                    acc[idx] = (acc[idx] + p) % q64;
                } else {
                    acc[idx - n] = (acc[idx - n] + q64 - p) % q64;
                }
            }
        }
        RingElement {
            coeffs: acc.into_iter().map(|c| c as u32).collect(),
        }
    }
}

/// Inner product of two module vectors.
pub(crate) fn dot(a: &[RingElement], b: &[RingElement], params: &KemParams) -> RingElement {
    let mut acc = RingElement::zero(params.n);
    for (x, y) in a.iter().zip(b) {
        acc = acc.add(&x.mul(y, params), params.q);
    }
    acc
}

pub(crate) mod ntt {
    use super::*;

    pub const Q: u32 = 3329;
    const N: usize = 256;
    const ZETA: u32 = 17;
    /// 128^-1 mod q.
    const INV_128: u32 = 3303;

    struct Tables {
        zetas: [u32; 128],
        gammas: [u32; 128],
    }

    fn pow_mod(mut b: u32, mut e: u32) -> u32 {
        let mut r = 1u32;
        b %= Q;
        while e > 0 {
            if e & 1 == 1 {
                r = r * b % Q;
            }
            b = b * b % Q;
            e >>= 1;
        }
        r
    }

    fn bitrev7(i: u32) -> u32 {
        (i as u8).reverse_bits() as u32 >> 1
    }

    fn tables() -> &'static Tables {
        static T: OnceLock<Tables> = OnceLock::new();
        T.get_or_init(|| {
            let mut zetas = [0u32; 128];
            let mut gammas = [0u32; 128];
            for i in 0..128u32 {
                zetas[i as usize] = pow_mod(ZETA, bitrev7(i));
                gammas[i as usize] = pow_mod(ZETA, 2 * bitrev7(i) + 1);
            }
            Tables { zetas, gammas }
        })
    }

    pub fn forward(f: &mut [u32]) {
        let z = &tables().zetas;
        let mut k = 1;
        let mut len = 128;
        while len >= 2 {
            let mut start = 0;
            while start < N {
                let zeta = z[k];
                k += 1;
                for j in start..start + len {
                    let t = zeta * f[j + len] % Q;
                    f[j + len] = (f[j] + Q - t) % Q;
                    f[j] = (f[j] + t) % Q;
                }
                start += 2 * len;
            }
            len /= 2;
        }
    }

    pub fn inverse(f: &mut [u32]) {
        let z = &tables().zetas;
        let mut k = 127;
        let mut len = 2;
        while len <= 128 {
            let mut start = 0;
            while start < N {
                let zeta = z[k];
                k -= 1;
                for j in start..start + len {
                    let t = f[j];
                    f[j] = (t + f[j + len]) % Q;
                    f[j + len] = zeta * ((f[j + len] + Q - t) % Q) % Q;
                }
                start += 2 * len;
            }
            len *= 2;
        }
        for c in f.iter_mut() {
            *c = *c * INV_128 % Q;
        }
    }

    pub fn mul(a: &RingElement, b: &RingElement) -> RingElement {
        let g = &tables().gammas;
        let mut fa = a.coeffs.clone();
        let mut fb = b.coeffs.clone();
        forward(&mut fa);
        forward(&mut fb);
        let mut out = vec![0u32; N];
        for i in 0..128 {
            let (a0, a1) = (fa[2 * i], fa[2 * i + 1]);
            let (b0, b1) = (fb[2 * i], fb[2 * i + 1]);
            out[2 * i] = (a0 * b0 % Q + a1 * b1 % Q * g[i]) % Q;
            out[2 * i + 1] = (a0 * b1 % Q + a1 * b0 % Q) % Q;
        }
        inverse(&mut out);
        RingElement { coeffs: out }
    }
}
