//! Binary de Bruijn sequences, used as the transmit bit source.

use crate::error::{param_err, Result};
use crate::rng::derive_seed;

pub const MAX_ORDER: u32 = 24;

/// A binary de Bruijn cycle of length `2^order`, rotated by a seed-dependent
/// offset so that different streams start at different points of the cycle.
///
/// Every binary word of length `order` appears exactly once as a cyclic
/// substring. Seed 0 returns the lexicographically smallest cycle unrotated.
pub fn debruijn_bits(order: u32, seed: u64) -> Result<Vec<bool>> {
    if !(1..=MAX_ORDER).contains(&order) {
        return param_err(format!("de Bruijn order must be in 1..={MAX_ORDER}, got {order}"));
    }
    let mut seq = lyndon_concatenation(order as usize);
    if seed != 0 {
        let offset = (derive_seed(seed, 0xDB) % seq.len() as u64) as usize;
        seq.rotate_left(offset);
    }
    Ok(seq)
}

// Fredricksen–Kessler–Maiorana: concatenate, in lexicographic order, the
// binary Lyndon words whose length divides `n`.
fn lyndon_concatenation(n: usize) -> Vec<bool> {
    let mut seq = Vec::with_capacity(1 << n);
    let mut word: Vec<u8> = vec![0];
    loop {
        if n.is_multiple_of(word.len()) {
            seq.extend(word.iter().map(|&b| b == 1));
        }
        let period = word.len();
        while word.len() < n {
            word.push(word[word.len() - period]);
        }
        while word.last() == Some(&1) {
            word.pop();
        }
        match word.last_mut() {
            Some(last) => *last = 1,
            None => break,
        }
    }
    seq
}

/// Repeats `seq` cyclically until `len` bits are available.
pub fn cycle_to_len(seq: &[bool], len: usize) -> Vec<bool> {
    seq.iter().copied().cycle().take(len).collect()
}
