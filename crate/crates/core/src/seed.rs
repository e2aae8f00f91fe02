//! Deterministic seed derivation.
//!
//! All parallel or indexed randomness in the pipeline (per-sample network
//! drops, model initialization, epoch shuffling) derives its seed through
//! [`mix_seed`], so every artifact is a pure function of one master seed
//! regardless of worker count or evaluation order.

/// Mixes a master seed with an index into an independent 64-bit seed.
///
/// SplitMix64 finalizer applied to `master + (index + 1) * golden_gamma`.
/// The `+ 1` keeps index 0 from degenerating into a plain finalizer of the
/// master seed.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
