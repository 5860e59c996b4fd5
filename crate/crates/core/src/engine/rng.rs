use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one path: the key is `(master_seed, salt)` and
/// the ChaCha stream id is the path index, so paths never share keystream
/// and the draw sequence of a path does not depend on scheduling.
pub fn path_rng(master_seed: u64, salt: u64, path: usize) -> ChaCha8Rng {
    let key = if salt == 0 {
        master_seed
    } else {
        splitmix64(master_seed ^ splitmix64(salt))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(path as u64);
    rng
}
