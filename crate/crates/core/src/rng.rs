use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for an independent stream derived from `seed`.
///
/// Streams let per-item work (one trajectory, one network) draw from its own
/// sequence so results do not depend on evaluation order.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
