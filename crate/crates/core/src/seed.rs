//! Child seed derivation from a master seed.
//!
//! Every random stream in a study is keyed by (master seed, role, three
//! indices) and mixed with SplitMix64, so streams are independent of
//! evaluation order and of each other.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedRole {
    Tsne,
    Cluster,
    RandomGrouping,
    Bootstrap,
}

impl SeedRole {
    fn tag(self) -> u64 {
        match self {
            SeedRole::Tsne => 0x7473_6e65,
            SeedRole::Cluster => 0x636c_7573,
            SeedRole::RandomGrouping => 0x726e_6467,
            SeedRole::Bootstrap => 0x626f_6f74,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, role: SeedRole, a: u64, b: u64, c: u64) -> u64 {
    [role.tag(), a, b, c]
        .into_iter()
        .fold(splitmix64(master), |h, x| splitmix64(h ^ x))
}
