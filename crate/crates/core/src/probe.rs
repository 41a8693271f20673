//! Exploration signal injected during the first seconds of an episode.
//!
//! Each channel receives a sum of sinusoids with irrational frequency ratios.
//! Channel `c` scales every frequency by `1 + channel_spread · c` so the three
//! strategies are not excited coherently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub amplitude: f64,
    /// Seconds; the probe is zero for `t >= duration`.
    pub duration: f64,
    /// Base angular frequencies in rad/s.
    pub frequencies: Vec<f64>,
    pub channel_spread: f64,
    /// Inject only the change in the probe into incremental laws, so the
    /// accumulated signal carries the probe itself rather than its running
    /// sum, and no offset remains once probing stops.
    pub difference_increments: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            duration: 5.0,
            frequencies: vec![1.0, 2f64.sqrt(), 3f64.sqrt()],
            channel_spread: 0.5,
            difference_increments: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::config("learning.probe.amplitude", "must be finite and >= 0"));
        }
        if !(self.duration >= 0.0) {
            return Err(Error::config("learning.probe.duration", "must be >= 0"));
        }
        if self.frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("learning.probe.frequencies", "must be finite and > 0"));
        }
        if !(self.channel_spread >= 0.0) {
            return Err(Error::config("learning.probe.channel_spread", "must be >= 0"));
        }
        Ok(())
    }

    /// Phases are `0.7 · j` for seed 0 and uniform on `[0, 2π)` otherwise.
    pub fn build(&self, seed: u64) -> Probe {
        let phases = if seed == 0 {
            (0..self.frequencies.len()).map(|j| 0.7 * j as f64).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..self.frequencies.len())
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect()
        };
        Probe {
            config: self.clone(),
            phases,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    config: ProbeConfig,
    phases: Vec<f64>,
}

impl Probe {
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn config(&self) -> &ProbeConfig {
        &self.config
    }

    pub fn is_active(&self, t: f64) -> bool {
        t < self.config.duration && self.config.amplitude > 0.0
    }

    /// Probe value on `channel` at time `t`.
    pub fn value(&self, t: f64, channel: usize) -> f64 {
        if !self.is_active(t) {
            return 0.0;
        }
        let scale = 1.0 + self.config.channel_spread * channel as f64;
        let sum: f64 = self
            .config
            .frequencies
            .iter()
            .zip(&self.phases)
            .map(|(w, ph)| (w * scale * t + ph).sin())
            .sum();
        self.config.amplitude * sum
    }

    /// Term added to an incremental law at time `t`, given the probe total
    /// `applied` that earlier increments have already injected. With
    /// differencing the running sum equals `value(t)`, and returns to zero
    /// once the probe ends.
    pub fn increment(&self, applied: f64, t: f64, channel: usize) -> f64 {
        if self.config.difference_increments {
            self.value(t, channel) - applied
        } else {
            self.value(t, channel)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_phases_and_cutoff() {
        let p = ProbeConfig::default().build(0);
        assert_eq!(p.phases(), &[0.0, 0.7, 1.4]);
        let expected = 0.1 * (0.0f64.sin() + 0.7f64.sin() + 1.4f64.sin());
        assert!((p.value(0.0, 0) - expected).abs() < 1e-15);
        assert_eq!(p.value(5.0, 0), 0.0);
        assert_eq!(p.value(7.0, 2), 0.0);
    }

    #[test]
    fn differenced_increments_track_the_probe() {
        let p = ProbeConfig::default().build(0);
        let dt = 0.01;
        let mut acc = 0.0;
        for k in 2..=300 {
            acc += p.increment(acc, k as f64 * dt, 1);
            assert!((acc - p.value(k as f64 * dt, 1)).abs() < 1e-15);
        }
        for k in 301..=600 {
            acc += p.increment(acc, k as f64 * dt, 1);
        }
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn raw_increments_accumulate() {
        let cfg = ProbeConfig {
            difference_increments: false,
            ..ProbeConfig::default()
        };
        let p = cfg.build(0);
        assert_eq!(p.increment(123.0, 1.0, 0), p.value(1.0, 0));
    }

    #[test]
    fn seeded_phases_are_reproducible() {
        let cfg = ProbeConfig::default();
        assert_eq!(cfg.build(7), cfg.build(7));
        assert_ne!(cfg.build(7).phases(), cfg.build(8).phases());
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let cfg = ProbeConfig {
            amplitude: 0.0,
            ..ProbeConfig::default()
        };
        let p = cfg.build(0);
        assert_eq!(p.value(1.0, 0), 0.0);
        assert_eq!(p.increment(0.0, 1.01, 2), 0.0);
    }
}
