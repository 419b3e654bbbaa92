//! Adaptive binary range coder with 11-bit probabilities.

const PROB_BITS: u32 = 11;
const PROB_INIT: u16 = 1 << (PROB_BITS - 1);
const MOVE_BITS: u32 = 5;
const TOP: u32 = 1 << 24;

/// Adaptive model for symbols of `bits` bits, coded MSB first through a binary tree.
#[derive(Clone, Debug)]
pub(crate) struct BitTree {
    bits: u32,
    probs: Vec<u16>,
}

impl BitTree {
    pub fn new(bits: u32) -> Self {
        Self {
            bits,
            probs: vec![PROB_INIT; 1 << bits],
        }
    }
}

pub(crate) struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn bit(&mut self, prob: &mut u16, bit: bool) {
        let bound = (self.range >> PROB_BITS) * u32::from(*prob);
        if bit {
            self.low += u64::from(bound);
            self.range -= bound;
            *prob -= *prob >> MOVE_BITS;
        } else {
            self.range = bound;
            *prob += ((1 << PROB_BITS) - *prob) >> MOVE_BITS;
        }
        self.normalize();
    }

    pub fn direct(&mut self, value: u32, count: u32) {
        for i in (0..count).rev() {
            self.range >>= 1;
            if (value >> i) & 1 == 1 {
                self.low += u64::from(self.range);
            }
            self.normalize();
        }
    }

    pub fn tree(&mut self, model: &mut BitTree, symbol: u32) {
        let mut m = 1usize;
        for i in (0..model.bits).rev() {
            let b = (symbol >> i) & 1 == 1;
            self.bit(&mut model.probs[m], b);
            m = (m << 1) | b as usize;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub(crate) struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
    overrun: bool,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = Self {
            data,
            pos: 1,
            range: u32::MAX,
            code: 0,
            overrun: data.len() < 5,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        match self.data.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                b
            }
            None => {
                self.overrun = true;
                0
            }
        }
    }

    /// True once the decoder has read past the end of its input.
    pub fn overrun(&self) -> bool {
        self.overrun
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte());
        }
    }

    pub fn bit(&mut self, prob: &mut u16) -> bool {
        let bound = (self.range >> PROB_BITS) * u32::from(*prob);
        let bit = if self.code < bound {
            self.range = bound;
            *prob += ((1 << PROB_BITS) - *prob) >> MOVE_BITS;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            *prob -= *prob >> MOVE_BITS;
            true
        };
        self.normalize();
        bit
    }

    pub fn direct(&mut self, count: u32) -> u32 {
        let mut v = 0;
        for _ in 0..count {
            self.range >>= 1;
            let b = self.code >= self.range;
            if b {
                self.code -= self.range;
            }
            v = (v << 1) | b as u32;
            self.normalize();
        }
        v
    }

    pub fn tree(&mut self, model: &mut BitTree) -> u32 {
        let mut m = 1usize;
        for _ in 0..model.bits {
            m = (m << 1) | self.bit(&mut model.probs[m]) as usize;
        }
        (m - (1 << model.bits)) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixed_symbols_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let syms: Vec<(u32, u32, bool)> = (0..5000)
            .map(|_| {
                let skew = rng.gen_bool(0.9);
                let s = if skew { rng.gen_range(0..4) } else { rng.gen_range(0..256) };
                (s, rng.gen_range(0..1 << 13), rng.gen_bool(0.02))
            })
            .collect();
        let mut enc = Encoder::new();
        let mut tree = BitTree::new(8);
        let mut p = PROB_INIT;
        for &(s, d, b) in &syms {
            enc.tree(&mut tree, s);
            enc.direct(d, 13);
            enc.bit(&mut p, b);
        }
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes);
        let mut tree = BitTree::new(8);
        let mut p = PROB_INIT;
        for &(s, d, b) in &syms {
            assert_eq!(dec.tree(&mut tree), s);
            assert_eq!(dec.direct(13), d);
            assert_eq!(dec.bit(&mut p), b);
        }
        assert!(!dec.overrun());
    }

    #[test]
    fn skewed_source_compresses() {
        let mut enc = Encoder::new();
        let mut p = PROB_INIT;
        for _ in 0..10_000 {
            enc.bit(&mut p, false);
        }
        assert!(enc.finish().len() < 40);
    }
}
