//! Ornstein-Uhlenbeck noise: exact discrete simulation and theoretical spectra.
//!
//! The process `nu' = -nu / tau + sigma * white_noise` is sampled at unit
//! steps with the exact recurrence
//!
//! ```text
//! nu(t+1) = a nu(t) + sqrt(sigma^2 tau / 2 (1 - a^2)) u_t,   a = exp(-1/tau)
//! ```
//!
//! Normal variates `u_t` are drawn from a ChaCha8 generator seeded with
//! `Seed` (via `SeedableRng::seed_from_u64`) and transformed with the
//! ziggurat `StandardNormal` of `rand_distr`. The stream is part of the
//! reproducibility contract: the same parameters, length and seed always
//! produce the same bits.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::timeseries::LogSeries;

/// Relaxation time, or the non-mean-reverting Wiener limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Finite(f64),
    Infinite,
}

impl Tau {
    /// `f64::INFINITY` maps to [`Tau::Infinite`].
    pub fn from_f64(tau: f64) -> Result<Self> {
        if tau == f64::INFINITY {
            Ok(Tau::Infinite)
        } else if tau.is_finite() && tau > 0.0 {
            Ok(Tau::Finite(tau))
        } else {
            Err(Error::invalid(format!("tau must be > 0, got {tau}")))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Tau::Finite(t) => t,
            Tau::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Finite(t) => write!(f, "{t}"),
            Tau::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Tau {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Tau::Finite(t) => s.serialize_f64(*t),
            Tau::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Tau {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Tau::from_f64(t).map_err(serde::de::Error::custom),
            Raw::Text(s) if matches!(s.as_str(), "infinite" | "inf" | "Infinity") => {
                Ok(Tau::Infinite)
            }
            Raw::Text(s) => Err(serde::de::Error::custom(format!("bad tau {s:?}"))),
        }
    }
}

/// Relaxation time and diffusion constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub tau: Tau,
    pub sigma: f64,
}

impl OuParams {
    pub fn new(tau: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            tau: Tau::from_f64(tau)?,
            sigma,
        })
    }

    pub fn wiener(sigma: f64) -> Result<Self> {
        Self::new(f64::INFINITY, sigma)
    }

    /// Per-step autoregressive coefficient `exp(-1/tau)`; 1 in the Wiener limit.
    pub fn decay(&self) -> f64 {
        match self.tau {
            Tau::Finite(t) => (-1.0 / t).exp(),
            Tau::Infinite => 1.0,
        }
    }

    /// `1 / (2 pi tau)`.
    pub fn cutoff_frequency(&self) -> f64 {
        match self.tau {
            Tau::Finite(t) => 1.0 / (2.0 * PI * t),
            Tau::Infinite => 0.0,
        }
    }

    /// `sigma^2 tau / 2`; infinite in the Wiener limit.
    pub fn stationary_variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.tau {
            Tau::Finite(t) => s2 * t / 2.0,
            Tau::Infinite if s2 == 0.0 => 0.0,
            Tau::Infinite => f64::INFINITY,
        }
    }

    /// Standard deviation of the innovation in the one-step recurrence.
    pub fn increment_std(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.tau {
            // 1 - exp(-2/tau) via expm1 so large tau does not cancel
            Tau::Finite(t) => (s2 * t / 2.0 * -(-2.0 / t).exp_m1()).sqrt(),
            Tau::Infinite => self.sigma,
        }
    }
}

/// PRNG seed for reproducible simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    /// Independent seed for replicate `index` of a study seeded with `self`.
    pub fn replicate(self, index: u64) -> Seed {
        // splitmix64 finalizer over (base, index)
        let mut z = self
            .0
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// How `nu(0)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    /// Draw from the stationary law `N(0, sigma^2 tau / 2)`. Starts at 0 in
    /// the Wiener limit, which has no stationary law.
    Stationary,
    /// Start from the given level.
    Fixed(f64),
}

/// Simulates `n >= 2` samples of the process.
pub fn ou_simulate(p: &OuParams, n: usize, seed: Seed, init: InitialState) -> Result<LogSeries> {
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2 samples, got {n}")));
    }
    let mut rng = seed.rng();
    let a = p.decay();
    let step = p.increment_std();
    let nu0 = match init {
        InitialState::Fixed(v) => v,
        InitialState::Stationary => match p.tau {
            Tau::Finite(_) => {
                let z: f64 = rng.sample(StandardNormal);
                p.stationary_variance().sqrt() * z
            }
            Tau::Infinite => 0.0,
        },
    };
    let mut values = Vec::with_capacity(n);
    let mut nu = nu0;
    values.push(nu);
    for _ in 1..n {
        let u: f64 = rng.sample(StandardNormal);
        nu = nu * a + step * u;
        values.push(nu);
    }
    LogSeries::new(values)
}

fn sin_sq_pi(f: f64) -> f64 {
    // 1 - cos(2 pi f) = 2 sin^2(pi f), without cancellation near f = 0
    let s = (PI * f).sin();
    s * s
}

/// Discrete-time spectrum `sigma^2 tau/2 (1 - a^2) / (1 - 2a cos 2 pi f + a^2)`.
/// Falls back to [`ou_psd_wiener_limit`] for infinite `tau`.
pub fn ou_psd_discrete(p: &OuParams, f: f64) -> f64 {
    let s2 = p.sigma * p.sigma;
    match p.tau {
        Tau::Finite(t) => {
            let a = (-1.0 / t).exp();
            let one_minus_a = -(-1.0 / t).exp_m1();
            let one_minus_a2 = -(-2.0 / t).exp_m1();
            // 1 - 2a cos + a^2 = (1 - a)^2 + 4a sin^2(pi f)
            let denom = one_minus_a * one_minus_a + 4.0 * a * sin_sq_pi(f);
            s2 * t / 2.0 * one_minus_a2 / denom
        }
        Tau::Infinite => ou_psd_wiener_limit(s2, f),
    }
}

/// Continuous-time spectrum `sigma^2 tau^2 / (1 + 4 pi^2 tau^2 f^2)`.
pub fn ou_psd_continuous(p: &OuParams, f: f64) -> f64 {
    let s2 = p.sigma * p.sigma;
    match p.tau {
        Tau::Finite(t) => s2 * t * t / (1.0 + 4.0 * PI * PI * t * t * f * f),
        Tau::Infinite if f == 0.0 => f64::INFINITY,
        Tau::Infinite => s2 / (4.0 * PI * PI * f * f),
    }
}

/// Wiener-limit spectrum `sigma^2 / (2 (1 - cos 2 pi f))`, and `sigma^2` at `f = 0`.
pub fn ou_psd_wiener_limit(sigma2: f64, f: f64) -> f64 {
    if f == 0.0 {
        sigma2
    } else {
        sigma2 / (4.0 * sin_sq_pi(f))
    }
}
