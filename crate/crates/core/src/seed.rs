//! Counter-based seed derivation.

/// Seed for stream `stream` of `master`. Each output is a SplitMix64 hash of
/// `master + (stream + 1) * golden`, so streams can be generated in any order.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
