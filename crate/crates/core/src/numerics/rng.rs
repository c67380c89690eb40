use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids. Each consumer of randomness owns one so that adding a
/// consumer never shifts another's sequence.
pub mod streams {
    pub const INIT: u64 = 0x01;
    pub const SAMPLER: u64 = 0x02;
    pub const RNC: u64 = 0x03;
    pub const DATA: u64 = 0x04;
    pub const EVAL_DATA: u64 = 0x05;
    pub const BASIS: u64 = 0x06;
}

/// Handle on a ChaCha8 keystream identified by `(seed, stream)`.
///
/// ChaCha is counter based: the 64-bit seed is expanded into the key and the
/// stream id selects the nonce, so distinct streams never overlap. The same
/// pair produces the same sequence on every platform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rng {
    seed: u64,
    stream: u64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream keyed by `tag` (an epoch, iteration or worker index).
    pub fn derive(&self, tag: u64) -> Rng {
        Rng {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x9e37_79b9))),
        }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut g = ChaCha8Rng::seed_from_u64(self.seed);
        g.set_stream(self.stream);
        g
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `dim` i.i.d. coordinates uniform on the unit interval.
pub fn uniform_noise(dim: usize, rng: &Rng) -> Vec<f64> {
    let mut g = rng.generator();
    (0..dim).map(|_| g.random::<f64>()).collect()
}
