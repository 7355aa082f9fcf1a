//! Checks the KEM against a from-scratch reference written with plain
//! integer arithmetic: negacyclic schoolbook products, float-rounded
//! compression and explicit matrix indexing.

mod common;

use common::{check_against_oracle, oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use zt5g_core::lattice_kem::{
    centered_distance, compress, decapsulate, decompress, encapsulate, error_bound, keygen, KemParams, RingElement,
};

#[test]
fn toy_pipeline_matches_oracle_for_all_byte_seeds() {
    let p = KemParams::toy();
    for seed in 0..=255u8 {
        check_against_oracle(&p, seed);
    }
}

#[test]
fn noiseless_toy_matches_oracle() {
    let p = KemParams::toy_noiseless();
    for seed in 0..=255u8 {
        check_against_oracle(&p, seed);
    }
}

#[test]
fn default_profile_fast_path_matches_oracle() {
    let p = KemParams::default_profile();
    for seed in 0..4u8 {
        check_against_oracle(&p, seed);
    }
}

#[test]
fn ring_multiplication_matches_oracle_at_default_size() {
    let p = KemParams::default_profile();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..16 {
        let a: Vec<u32> = (0..256).map(|_| rng.gen_range(0..3329)).collect();
        let b: Vec<u32> = (0..256).map(|_| rng.gen_range(0..3329)).collect();
        let (ra, rb) = (RingElement::from_coeffs(a, 3329), RingElement::from_coeffs(b, 3329));
        let got: Vec<i64> = ra.mul(&rb, &p).coeffs().iter().map(|&c| c as i64).collect();
        assert_eq!(got, oracle::mul(&oracle::lift(&ra), &oracle::lift(&rb), 3329));
    }
}

#[test]
fn compression_matches_oracle_exhaustively_at_q17() {
    for d in 1..=5 {
        for x in 0..17u32 {
            assert_eq!(compress(x, d, 17), oracle::compress(x as i64, d, 17));
        }
        for y in 0..1u32 << d {
            assert_eq!(decompress(y, d, 17) as i64, oracle::decompress(y, d, 17));
        }
    }
}

#[test]
fn compression_matches_oracle_at_q3329() {
    for d in 1..=12 {
        for x in 0..3329u32 {
            assert_eq!(compress(x, d, 3329), oracle::compress(x as i64, d, 3329), "x={x} d={d}");
        }
    }
}

#[test]
fn compression_error_bound_exhaustive_q17() {
    for d in 1..=5 {
        let bound = (17.0 / (1u32 << (d + 1)) as f64).round() as u32;
        assert_eq!(error_bound(d, 17), bound);
        for x in 0..17 {
            assert!(centered_distance(decompress(compress(x, d, 17), d, 17), x, 17) <= bound, "x={x} d={d}");
        }
    }
}

#[test]
fn kem_round_trips_default() {
    let p = KemParams::default_profile();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    for _ in 0..500 {
        let mut seed = [0u8; 64];
        rng.fill(&mut seed[..]);
        let (pk, sk) = keygen(&seed, &p).unwrap();
        let (ct, ss) = encapsulate(&pk, &rng.gen()).unwrap();
        assert_eq!(decapsulate(&sk, &ct).unwrap(), ss);
    }
}
