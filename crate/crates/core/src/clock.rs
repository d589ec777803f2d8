//! Fixed-step simulation time and seeded randomness.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Error;

/// Default simulation step: 100 Hz.
pub const DEFAULT_DT: f64 = 0.01;

/// Monotonic fixed-step clock. Time is `ticks · dt`, never a running sum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimClock {
    ticks: u64,
    dt: f64,
}

impl SimClock {
    /// Clock at t = 0 with step `dt` seconds.
    pub fn new(dt: f64) -> Result<Self, Error> {
        if dt.is_finite() && dt > 0.0 {
            Ok(SimClock { ticks: 0, dt })
        } else {
            Err(Error::InvalidInput("dt must be positive and finite"))
        }
    }

    /// Current time in seconds.
    pub fn now(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    /// Step length in seconds.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Ticks elapsed since t = 0.
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Advances by one step.
    pub fn tick(&mut self) {
        self.ticks += 1;
    }

    /// Number of whole ticks covering `seconds`, rounding to the nearest tick.
    pub fn ticks_for(&self, seconds: f64) -> u64 {
        libm::round(seconds / self.dt).max(0.0) as u64
    }
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock { ticks: 0, dt: DEFAULT_DT }
    }
}

/// Seed of a deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Independent child seed for sub-stream `stream` (splitmix64 finalizer).
    pub fn derive(self, stream: u64) -> RngSeed {
        let mut z = self.0 ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }

    /// Generator for this seed.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub(crate) fn unit_interval(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
