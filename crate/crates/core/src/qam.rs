//! Gray-coded square 16-QAM and the QPSK alphabet used for training and
//! pilot content.
//!
//! Per rail the bit pairs map as 00→−3, 01→−1, 11→+1, 10→+3. The first two
//! bits drive I and the last two Q, all scaled by 1/√10 for unit mean energy.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{param_err, Result};

const SCALE: f64 = 0.316_227_766_016_837_94; // 1/√10

fn level(b0: bool, b1: bool) -> f64 {
    match (b0, b1) {
        (false, false) => -3.0,
        (false, true) => -1.0,
        (true, true) => 1.0,
        (true, false) => 3.0,
    }
}

fn decide(v: f64) -> (bool, bool) {
    if v < -2.0 {
        (false, false)
    } else if v < 0.0 {
        (false, true)
    } else if v < 2.0 {
        (true, true)
    } else {
        (true, false)
    }
}

pub fn qam16_map(bits: [bool; 4]) -> Complex64 {
    Complex64::new(level(bits[0], bits[1]), level(bits[2], bits[3])) * SCALE
}

/// Hard nearest-point decision. Non-finite components fall on the outer-positive
/// side, which is as good as any choice for a sample that carries no information.
pub fn qam16_demap(symbol: Complex64) -> [bool; 4] {
    let (b0, b1) = decide(symbol.re / SCALE);
    let (b2, b3) = decide(symbol.im / SCALE);
    [b0, b1, b2, b3]
}

/// Maps a bit slice (length a multiple of four) to 16-QAM symbols.
pub fn map_bits(bits: &[bool]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(4) {
        return param_err(format!("bit count {} is not a multiple of 4", bits.len()));
    }
    Ok(bits
        .chunks_exact(4)
        .map(|c| qam16_map([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn demap_symbols(symbols: &[Complex64]) -> Vec<bool> {
    symbols.iter().flat_map(|&s| qam16_demap(s)).collect()
}

/// Unit-amplitude QPSK point chosen uniformly.
pub fn random_qpsk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = if rng.random::<bool>() { s } else { -s };
    let im = if rng.random::<bool>() { s } else { -s };
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(n: u8) -> [bool; 4] {
        [n & 8 != 0, n & 4 != 0, n & 2 != 0, n & 1 != 0]
    }

    #[test]
    fn corner_points() {
        let p = qam16_map([false; 4]);
        assert!((p - Complex64::new(-3.0, -3.0) / 10f64.sqrt()).norm() < 1e-15);
        let p = qam16_map([true, false, true, false]);
        assert!((p - Complex64::new(3.0, 3.0) / 10f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn unit_mean_energy() {
        let e: f64 = (0..16).map(|n| qam16_map(word(n)).norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exhaustive_round_trip() {
        for n in 0..16 {
            assert_eq!(qam16_demap(qam16_map(word(n))), word(n));
        }
    }

    #[test]
    fn nearest_neighbour_region() {
        let s = Complex64::new(-2.9, -3.2) / 10f64.sqrt();
        assert_eq!(qam16_demap(s), [false; 4]);
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for a in 0..16u8 {
            for b in 0..16u8 {
                let d = (qam16_map(word(a)) - qam16_map(word(b))).norm() * 10f64.sqrt();
                if (d - 2.0).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn map_bits_rejects_ragged_input() {
        assert!(map_bits(&[true, false, true]).is_err());
    }
}
