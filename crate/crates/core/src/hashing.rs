//! Stable integer hashing for seeded, order-independent decisions.

/// splitmix64 finalizer applied to `seed ^ golden·(value+1)`.
pub fn mix(seed: u64, value: u64) -> u64 {
    let mut z = seed ^ value.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for a named stream.
pub fn derive(seed: u64, stream: &str) -> u64 {
    stream.bytes().fold(mix(seed, 0), |acc, b| mix(acc, b as u64))
}
