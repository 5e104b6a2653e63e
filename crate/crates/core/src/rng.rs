use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids keep the mobility, channel and policy generators of one run
/// independent while sharing a single user-facing seed.
pub mod stream {
    pub const MOBILITY: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const PARAMS: u64 = 4;
    pub const FUZZ: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
