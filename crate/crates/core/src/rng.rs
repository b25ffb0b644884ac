//! Counter-based, splittable random streams.
//!
//! Every draw in a simulation comes from a stream whose key is a pure function
//! of `(master seed, parameter name, scenario index)`, so output never depends
//! on how scenarios are sharded across workers.
//!
//! ```text
//! GAMMA = 0x9E3779B97F4A7C15
//! mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!            return z ^ (z >> 31)                       (wrapping u64 arithmetic)
//! fnv1a64(bytes): h = 0xCBF29CE484222325; for b: h = (h ^ b) * 0x100000001B3
//!
//! key(seed, name, i) = mix64(mix64(seed ^ fnv1a64(utf8(name))) + (i + 1) * GAMMA)
//! stream(key).next_u64():  counter += 1; return mix64(key + counter * GAMMA)
//! open_unit(x) = ((x >> 12) + 0.5) * 2^-52                 in (0, 1)
//! ```

pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Per-parameter base key; combine with a scenario index via [`scenario_key`].
#[inline]
pub fn parameter_key(seed: u64, name: &str) -> u64 {
    mix64(seed ^ fnv1a64(name.as_bytes()))
}

#[inline]
pub fn scenario_key(parameter_key: u64, scenario: u64) -> u64 {
    mix64(parameter_key.wrapping_add(scenario.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Stream for one `(seed, parameter, scenario)` triple.
#[inline]
pub fn substream(seed: u64, name: &str, scenario: u64) -> RandomStream {
    RandomStream::new(scenario_key(parameter_key(seed, name), scenario))
}

/// A keyed counter generator: output `n` is `mix64(key + n * GAMMA)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub const fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn next_open_unit(&mut self) -> f64 {
        open_unit(self.next_u64())
    }

    /// Independent child stream labelled by `tag`.
    pub fn split(&self, tag: u64) -> RandomStream {
        RandomStream::new(mix64(self.key ^ mix64(tag.wrapping_add(GAMMA))))
    }
}

#[inline]
pub fn open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}
