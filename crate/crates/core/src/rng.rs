//! Counter-based random streams.
//!
//! Every Monte Carlo replicate gets its own ChaCha8 stream keyed by
//! `(seed, namespace)` and selected by the replicate index, so a replicate's
//! draws never depend on which thread ran it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream namespace for null-distribution replicates.
pub const NULL_NAMESPACE: u64 = 0;

/// Independent generator for replicate `index` of `(seed, namespace)`.
pub fn replicate_rng(seed: u64, namespace: u64, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"bumpscan/replicate");
    hasher.update(seed.to_le_bytes());
    hasher.update(namespace.to_le_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&hasher.finalize());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// `n` sorted i.i.d. U[0, 1) draws.
pub fn sorted_uniforms<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    u
}
