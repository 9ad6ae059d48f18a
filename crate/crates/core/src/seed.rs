//! Deterministic seed derivation for independent streams.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub const TRAIN_EPISODES: u64 = 0x0074_7261_696e;
pub const EVAL_EPISODES: u64 = 0x6576_616c;
pub const SWEEP_REALIZATIONS: u64 = 0x0073_7765_6570;
pub const POLICY_INIT: u64 = 0x696e_6974;
