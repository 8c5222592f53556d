//! Counter-based random streams (Philox4x32-10).
//!
//! Every output block is a pure function of
//! `(master_seed, stream_id, substream, block index)`, so replicate `i` can
//! be simulated on any thread without advancing a shared generator. The
//! simulator opens one substream per generation, which keeps the draws of
//! generation `k` independent of how many numbers generation `k - 1` consumed.

use rand_core::RngCore;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

#[inline(always)]
fn round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for i in 0..10 {
        if i > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        ctr = round(ctr, key);
    }
    ctr
}

/// A single-owner random stream identified by `(master_seed, stream_id)`.
///
/// Counter layout: word 0 is the block index, word 1 the substream, words
/// 2 and 3 the stream id. The key is the master seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: [u32; 2],
    stream_id: u64,
    substream: u32,
    block: u32,
    buf: [u32; 4],
    pos: usize,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::with_substream(master_seed, stream_id, 0)
    }

    fn with_substream(master_seed: u64, stream_id: u64, substream: u32) -> Self {
        Self {
            key: [master_seed as u32, (master_seed >> 32) as u32],
            stream_id,
            substream,
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    pub fn master_seed(&self) -> u64 {
        u64::from(self.key[0]) | (u64::from(self.key[1]) << 32)
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream over substream `sub` of the same `(seed, stream_id)`.
    pub fn substream(&self, sub: u32) -> Self {
        Self::with_substream(self.master_seed(), self.stream_id, sub)
    }

    #[inline]
    fn refill(&mut self) {
        let ctr = [self.block, self.substream, self.stream_id as u32, (self.stream_id >> 32) as u32];
        self.buf = philox4x32_10(ctr, self.key);
        // 2^32 blocks per substream is 64 GiB of output; never reached here.
        self.block = self.block.wrapping_add(1);
        self.pos = 0;
    }

    /// Uniform on the open interval `(0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.pos >= 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.pos > 2 {
            self.refill();
        }
        let lo = u64::from(self.buf[self.pos]);
        let hi = u64::from(self.buf[self.pos + 1]);
        self.pos += 2;
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let v = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
