//! Seed expansion: uniform matrices from `rho`, centered binomial noise from
//! `sigma`. Both are SHAKE-based with a distinct domain byte per use.

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Shake128, Shake256};

use super::{KemParams, RingElement};

const DOMAIN_MATRIX: u8 = 0x4d;
const DOMAIN_NOISE: u8 = 0x4e;

/// Uniform element of `R_q` by rejection sampling on the XOF stream.
fn uniform_poly(rho: &[u8; 32], row: u8, col: u8, params: &KemParams) -> RingElement {
    let mut xof = Shake128::default();
    xof.update(&[DOMAIN_MATRIX]);
    xof.update(rho);
    xof.update(&[row, col]);
    let mut reader = xof.finalize_xof();
    let mask = (1u32 << params.q_bits()) - 1;
    let mut coeffs = Vec::with_capacity(params.n);
    let mut buf = [0u8; 2];
    while coeffs.len() < params.n {
        reader.read(&mut buf);
        let c = u16::from_le_bytes(buf) as u32 & mask;
        if c < params.q {
            coeffs.push(c);
        }
    }
    RingElement::from_coeffs(coeffs, params.q)
}

/// Expands `rho` into the public `k x k` matrix, row-major.
pub fn expand_matrix(rho: &[u8; 32], params: &KemParams) -> Vec<Vec<RingElement>> {
    (0..params.k)
        .map(|i| {
            (0..params.k)
                .map(|j| uniform_poly(rho, i as u8, j as u8, params))
                .collect()
        })
        .collect()
}

/// One polynomial with centered-binomial coefficients, keyed by `(seed, nonce)`.
pub fn cbd_poly(seed: &[u8; 32], nonce: u8, params: &KemParams) -> RingElement {
    let eta = params.eta as usize;
    if eta == 0 {
        return RingElement::zero(params.n);
    }
    let mut xof = Shake256::default();
    xof.update(&[DOMAIN_NOISE]);
    xof.update(seed);
    xof.update(&[nonce]);
    let mut bytes = vec![0u8; (params.n * 2 * eta).div_ceil(8)];
    xof.finalize_xof().read(&mut bytes);
    let bit = |i: usize| ((bytes[i / 8] >> (i % 8)) & 1) as i32;
    let coeffs: Vec<i32> = (0..params.n)
        .map(|c| {
            let base = c * 2 * eta;
            let a: i32 = (0..eta).map(|b| bit(base + b)).sum();
            let b: i32 = (0..eta).map(|b| bit(base + eta + b)).sum();
            a - b
        })
        .collect();
    RingElement::from_signed(&coeffs, params.q)
}

/// Samples the secret `s` (nonces `0..k`) and error `e` (nonces `k..2k`).
pub fn sample_noise(sigma: &[u8; 32], params: &KemParams) -> (Vec<RingElement>, Vec<RingElement>) {
    let k = params.k;
    let s = (0..k).map(|i| cbd_poly(sigma, i as u8, params)).collect();
    let e = (0..k).map(|i| cbd_poly(sigma, (k + i) as u8, params)).collect();
    (s, e)
}
