//! Deterministic derivation of independent RNG seeds from a base seed and a
//! path of tags, so per-day and per-purpose streams never depend on the order
//! in which other streams were consumed.

pub const ACTION_STREAM: u64 = 0xA11C;
pub const STATE_NOISE_STREAM: u64 = 0x5E7E;
pub const INIT_STREAM: u64 = 0x1417;
pub const TRAIN_STREAM: u64 = 0x7EA1;
pub const MARKET_STREAM: u64 = 0x3A2C;
pub const PLAN_STREAM: u64 = 0x97A4;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}
