//! The underlying chosen-plaintext-secure public-key encryption.

use super::compress::{compress, compress_poly, decompress, decompress_poly};
use super::poly::dot;
use super::sampling::{cbd_poly, expand_matrix, sample_noise};
use super::{Ciphertext, KemParams, KemPublicKey, RingElement};

/// Deterministic key generation from `rho || sigma`.
///
/// Returns the public key and the secret vector `s`.
pub fn pke_keygen(rho: &[u8; 32], sigma: &[u8; 32], params: &KemParams) -> (KemPublicKey, Vec<RingElement>) {
    let a = expand_matrix(rho, params);
    let (s, e) = sample_noise(sigma, params);
    let t = a
        .iter()
        .zip(&e)
        .map(|(row, e_i)| compress_poly(&dot(row, &s, params).add(e_i, params.q), params.d_t, params.q))
        .collect();
    let pk = KemPublicKey {
        params: *params,
        rho: *rho,
        t,
    };
    (pk, s)
}

/// Encodes one message bit per coefficient as `0` or `round(q/2)`.
pub fn message_to_poly(msg: &[u8], params: &KemParams) -> RingElement {
    let coeffs = (0..params.n)
        .map(|i| {
            let bit = (msg[i / 8] >> (i % 8)) & 1;
            decompress(bit as u32, 1, params.q)
        })
        .collect();
    RingElement::from_coeffs(coeffs, params.q)
}

pub fn poly_to_message(w: &RingElement, params: &KemParams) -> Vec<u8> {
    let mut msg = vec![0u8; params.message_bytes()];
    for (i, &c) in w.coeffs().iter().enumerate() {
        msg[i / 8] |= (compress(c, 1, params.q) as u8) << (i % 8);
    }
    msg
}

/// Encrypts an `n`-bit message under `pk` with explicit coins.
///
/// `r` uses nonces `0..k`, `e1` uses `k..2k` and `e2` uses `2k`.
pub fn pke_encrypt(pk: &KemPublicKey, msg: &[u8], coins: &[u8; 32]) -> Ciphertext {
    let params = &pk.params;
    let k = params.k;
    let q = params.q;
    let a = expand_matrix(&pk.rho, params);
    let r: Vec<RingElement> = (0..k).map(|i| cbd_poly(coins, i as u8, params)).collect();
    let e1: Vec<RingElement> = (0..k).map(|i| cbd_poly(coins, (k + i) as u8, params)).collect();
    let e2 = cbd_poly(coins, (2 * k) as u8, params);

    let u = (0..k)
        .map(|j| {
            let col: Vec<RingElement> = a.iter().map(|row| row[j].clone()).collect();
            compress_poly(&dot(&col, &r, params).add(&e1[j], q), params.d_u, q)
        })
        .collect();
    let t: Vec<RingElement> = pk.t.iter().map(|c| decompress_poly(c, params.d_t, q)).collect();
    let v = dot(&t, &r, params)
        .add(&e2, q)
        .add(&message_to_poly(msg, params), q);
    Ciphertext {
        params: *params,
        u,
        v: compress_poly(&v, params.d_v, q),
    }
}

pub fn pke_decrypt(s: &[RingElement], ct: &Ciphertext) -> Vec<u8> {
    let params = &ct.params;
    let q = params.q;
    let u: Vec<RingElement> = ct.u.iter().map(|c| decompress_poly(c, params.d_u, q)).collect();
    let v = decompress_poly(&ct.v, params.d_v, q);
    let w = v.sub(&dot(s, &u, params), q);
    poly_to_message(&w, params)
}
