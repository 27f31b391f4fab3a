//! Correlated multi-jittered sample patterns (Kensler 2013).
//!
//! Every `(seed, pixel, dimension pair)` gets its own hashed permutation, so
//! the `spp` samples of one pixel are stratified in each 2D projection
//! while different pixels and dimensions stay decorrelated. Values depend
//! only on the key, never on evaluation order or thread.

use crate::math::{hash_combine, mix64, unit_f64};

/// Hash-driven permutation of `0..len` (Kensler's `permute`).
fn permute(mut i: u32, len: u32, p: u32) -> u32 {
    let mut w = len - 1;
    w |= w >> 1;
    w |= w >> 2;
    w |= w >> 4;
    w |= w >> 8;
    w |= w >> 16;
    loop {
        i ^= p;
        i = i.wrapping_mul(0xe170_893d);
        i ^= p >> 16;
        i ^= (i & w) >> 4;
        i ^= p >> 8;
        i = i.wrapping_mul(0x0929_eb3f);
        i ^= p >> 23;
        i ^= (i & w) >> 1;
        i = i.wrapping_mul(1 | p >> 27);
        i = i.wrapping_mul(0x6935_fa69);
        i ^= (i & w) >> 11;
        i = i.wrapping_mul(0x74dc_b303);
        i ^= (i & w) >> 2;
        i = i.wrapping_mul(0x9e50_1cc3);
        i ^= (i & w) >> 2;
        i = i.wrapping_mul(0xc860_a3df);
        i &= w;
        i ^= i >> 5;
        if i < len {
            break;
        }
    }
    ((i as u64 + p as u64) % len as u64) as u32
}

/// Sample stream for one pixel sample. Dimensions are consumed in pairs.
#[derive(Debug, Clone)]
pub struct PixelSampler {
    key: u64,
    index: u32,
    count: u32,
    m: u32,
    n: u32,
    dim: u64,
}

impl PixelSampler {
    pub fn new(seed: u64, pixel: u64, index: u32, count: u32) -> Self {
        let count = count.max(1);
        let m = (count as f64).sqrt().ceil() as u32;
        let n = count.div_ceil(m);
        PixelSampler { key: hash_combine(mix64(seed), pixel), index, count, m, n, dim: 0 }
    }

    /// Next 2D point, stratified across the pixel's samples.
    pub fn next_2d(&mut self) -> [f64; 2] {
        let p64 = hash_combine(self.key, self.dim);
        self.dim += 1;
        let p = (p64 >> 32) as u32 ^ p64 as u32;
        let (m, n) = (self.m, self.n);
        // Each pair draws its own cell for this sample, so pairs are
        // decorrelated and every cell is equally likely even when
        // `count < m·n`.
        let s = permute(self.index, m * n, p.wrapping_mul(0x5163_3e2d));
        let sx = permute(s % m, m, p.wrapping_mul(0xa511_e9b3));
        let sy = permute(s / m, n, p.wrapping_mul(0x63d8_3595));
        let jx = unit_f64(hash_combine(p64, 2 * s as u64));
        let jy = unit_f64(hash_combine(p64, 2 * s as u64 + 1));
        let x = ((s % m) as f64 + (sy as f64 + jx) / n as f64) / m as f64;
        let y = ((s / m) as f64 + (sx as f64 + jy) / m as f64) / n as f64;
        [x.min(1.0 - f64::EPSILON / 2.0), y.min(1.0 - f64::EPSILON / 2.0)]
    }

    /// Next 1D value, stratified across the pixel's samples.
    pub fn next_1d(&mut self) -> f64 {
        let p64 = hash_combine(self.key, self.dim);
        self.dim += 1;
        let p = (p64 >> 32) as u32 ^ p64 as u32;
        let stratum = permute(self.index, self.count, p);
        let j = unit_f64(hash_combine(p64, self.index as u64));
        ((stratum as f64 + j) / self.count as f64).min(1.0 - f64::EPSILON / 2.0)
    }
}
