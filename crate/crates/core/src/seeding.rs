//! Deterministic seed derivation.
//!
//! Every randomized stage draws from its own stream derived from the global
//! run seed, so stages can run in any order (or in parallel) without
//! perturbing each other's draws.

/// Mixes a list of values into one well-spread 64-bit seed.
pub fn mix64(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
    for &p in parts {
        for b in p.to_le_bytes() {
            acc ^= b as u64;
            acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    splitmix64(acc)
}

/// Derives a stage-scoped seed from the global seed and a stage label.
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
    for b in global.to_le_bytes() {
        acc ^= b as u64;
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for b in stage.bytes() {
        acc ^= b as u64;
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(acc)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
