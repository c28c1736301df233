//! Fixed, platform-independent hashing used wherever a value must be
//! reproducible across runs and implementations (sub-counter routing,
//! synthetic storage values).

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, finished with the splitmix64 finalizer so that the
/// low bits are well mixed (routing takes `hash % len`).
pub(crate) fn mix64(bytes: &[u8]) -> u64 {
    finalize(fnv1a(FNV_OFFSET, bytes))
}

pub(crate) fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

pub(crate) fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Incremental builder over the same FNV-1a state.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Mixer(u64);

impl Mixer {
    pub(crate) fn new() -> Self {
        Mixer(FNV_OFFSET)
    }

    pub(crate) fn bytes(mut self, bytes: &[u8]) -> Self {
        self.0 = fnv1a(self.0, bytes);
        // field separator so ("ab","c") and ("a","bc") differ
        self.0 = fnv1a(self.0, &[0xff]);
        self
    }

    pub(crate) fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn i64(self, v: i64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn finish(self) -> u64 {
        finalize(self.0)
    }
}
