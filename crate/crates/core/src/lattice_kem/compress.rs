//! Lossy rounding of `Z_q` values to `d` bits.

use super::RingElement;

/// `round(2^d * x / q) mod 2^d`, rounding halves up.
pub fn compress(x: u32, d: u32, q: u32) -> u32 {
    debug_assert!(x < q);
    let num = (x as u64) << (d + 1);
    let r = (num + q as u64) / (2 * q as u64);
    (r & ((1u64 << d) - 1)) as u32
}

/// `round(q * y / 2^d)`, rounding halves up.
pub fn decompress(y: u32, d: u32, q: u32) -> u32 {
    let num = 2 * q as u64 * y as u64 + (1u64 << d);
    (num >> (d + 1)) as u32
}

/// Worst-case reconstruction error `round(q / 2^(d+1))`.
pub fn error_bound(d: u32, q: u32) -> u32 {
    ((q as u64 + (1u64 << d)) >> (d + 1)) as u32
}

/// Distance between two residues, measured in the centered representative.
pub fn centered_distance(a: u32, b: u32, q: u32) -> u32 {
    let diff = (a + q - b) % q;
    diff.min(q - diff)
}

pub fn compress_poly(p: &RingElement, d: u32, q: u32) -> Vec<u32> {
    p.coeffs().iter().map(|&c| compress(c, d, q)).collect()
}

pub fn decompress_poly(c: &[u32], d: u32, q: u32) -> RingElement {
    RingElement::from_coeffs(c.iter().map(|&y| decompress(y, d, q)).collect(), q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_fixed() {
        for q in [17, 3329] {
            for d in 1..=12 {
                assert_eq!(compress(0, d, q), 0);
            }
        }
    }

    #[test]
    fn known_value() {
        // round(1024 * 1664 / 3329) = round(511.85) = 512
        assert_eq!(compress(1664, 10, 3329), 512);
    }

    #[test]
    fn toy_modulus_d4_within_one() {
        for x in 0..17 {
            let y = decompress(compress(x, 4, 17), 4, 17);
            assert!(centered_distance(x, y, 17) <= 1, "x={x} y={y}");
        }
        assert_eq!(error_bound(4, 17), 1);
    }

    #[test]
    fn lossless_width_is_exact() {
        for x in 0..3329 {
            assert_eq!(decompress(compress(x, 12, 3329), 12, 3329), x);
        }
        for x in 0..17 {
            assert_eq!(decompress(compress(x, 5, 17), 5, 17), x);
        }
    }

    #[test]
    fn wraps_near_q() {
        // 2*16/17 rounds to 2 which wraps to 0 at one bit, still close mod q.
        assert_eq!(compress(16, 1, 17), 0);
        assert!(centered_distance(16, decompress(0, 1, 17), 17) <= error_bound(1, 17));
    }

    #[test]
    fn output_range() {
        for d in 1..=12 {
            for x in (0..3329).step_by(7) {
                assert!(compress(x, d, 3329) < 1 << d);
                assert!(decompress(compress(x, d, 3329), d, 3329) < 3329);
            }
        }
    }
}
