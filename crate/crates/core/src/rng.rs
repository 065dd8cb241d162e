//! Counter-based Gaussian source (Philox4x32-10 with Box-Muller).
//!
//! Every normal variate is a pure function of `(seed, path, step, channel)`,
//! so ensemble members and refinement levels can be generated in any order.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// Open-interval uniform from 53 random bits.
#[inline]
fn unit(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 21) ^ (lo as u64 >> 11);
    ((bits & ((1u64 << 53) - 1)) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard-normal stream addressed by path, step and channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    key: [u32; 2],
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream { key: [seed as u32, (seed >> 32) as u32] }
    }

    /// Two independent standard normals from counter `(k, path, block)`.
    #[inline]
    fn pair(&self, path: u32, k: u64, block: u32) -> [f64; 2] {
        let r = philox4x32([k as u32, (k >> 32) as u32, path, block], self.key);
        let u1 = unit(r[0], r[1]);
        let u2 = unit(r[2], r[3]);
        let rad = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        [rad * c, rad * s]
    }

    /// Standard normal for one `channel` at one `step`. Consecutive even/odd
    /// steps of a channel share one generator block.
    #[inline]
    pub fn normal(&self, path: u32, step: u64, channel: u32) -> f64 {
        self.pair(path, step >> 1, channel)[(step & 1) as usize]
    }

    /// Normals of channel `channel` for steps `2k` and `2k + 1`.
    #[inline]
    pub fn step_pair(&self, path: u32, k: u64, channel: u32) -> [f64; 2] {
        self.pair(path, k, channel)
    }
}

/// Per-path seed derived from a base seed, used when paths run under
/// independent keys.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let r = philox4x32([index as u32, (index >> 32) as u32, 0x5EED, 0], [base as u32, (base >> 32) as u32]);
    ((r[0] as u64) << 32) | r[1] as u64
}
