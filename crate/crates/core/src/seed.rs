//! Named random substreams derived from one master seed.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the substream named by `path`, stable across platforms.
pub fn substream(seed: u64, path: &[&str]) -> u64 {
    // FNV-1a over the path components, separated by 0xff.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in path {
        for &b in part.as_bytes().iter().chain(std::iter::once(&0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    splitmix64(seed ^ splitmix64(h))
}
