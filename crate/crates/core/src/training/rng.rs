use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::sha256;

/// Independent generator for `(root seed, label, index)`.
///
/// The 32-byte ChaCha seed is the SHA-256 of the little-endian root seed, the
/// label bytes and the little-endian index. Every random draw in training,
/// evaluation and data generation goes through a stream keyed this way, so
/// results do not depend on scheduling or thread count.
pub fn rng_stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut bytes = Vec::with_capacity(16 + label.len() + 2);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(label.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(sha256(&bytes))
}
