//! Free-space optical link budget and receiver noise.
//!
//! All decibel figures are `10 log10` of power quantities (dBW for powers).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::signal::ComplexSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_watts: f64,
    pub distance_m: f64,
    /// Range rate in metres per sample; `d(n) = distance_m + drift_m_per_sample * n`.
    #[serde(default)]
    pub drift_m_per_sample: f64,
    pub wavelength_m: f64,
    pub tx_aperture_m: f64,
    pub rx_aperture_m: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    pub jitter_rad: f64,
    pub divergence_rad: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_power_watts: 0.5,
            distance_m: 500e3,
            drift_m_per_sample: 0.0,
            wavelength_m: 1500e-9,
            tx_aperture_m: 0.1,
            rx_aperture_m: 0.2,
            tx_efficiency: 1.0,
            rx_efficiency: 1.0,
            jitter_rad: 0.002,
            divergence_rad: 0.02,
        }
    }
}

/// Individual link-budget terms, all in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBreakdownDb {
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub tx_efficiency: f64,
    pub rx_efficiency: f64,
    pub path_loss: f64,
    pub pointing_loss: f64,
}

impl GainBreakdownDb {
    pub fn total(&self) -> f64 {
        self.tx_gain
            + self.rx_gain
            + self.tx_efficiency
            + self.rx_efficiency
            + self.path_loss
            + self.pointing_loss
    }
}

pub fn db(power_ratio: f64) -> f64 {
    10.0 * power_ratio.log10()
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tx_power_watts", self.tx_power_watts),
            ("distance_m", self.distance_m),
            ("wavelength_m", self.wavelength_m),
            ("tx_aperture_m", self.tx_aperture_m),
            ("rx_aperture_m", self.rx_aperture_m),
            ("divergence_rad", self.divergence_rad),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CpaError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("tx_efficiency", self.tx_efficiency), ("rx_efficiency", self.rx_efficiency)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CpaError::InvalidConfig(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.jitter_rad >= 0.0 && self.jitter_rad.is_finite()) {
            return Err(CpaError::InvalidConfig("jitter_rad must be >= 0".into()));
        }
        Ok(())
    }

    pub fn distance_at(&self, n: usize) -> f64 {
        self.distance_m + self.drift_m_per_sample * n as f64
    }

    pub fn aperture_gain(&self, aperture_m: f64) -> f64 {
        (PI * aperture_m / self.wavelength_m).powi(2)
    }

    pub fn path_loss(&self, n: usize) -> f64 {
        (self.wavelength_m / (4.0 * PI * self.distance_at(n))).powi(2)
    }

    pub fn pointing_loss(&self) -> f64 {
        (-8.0 * self.jitter_rad.powi(2) / self.divergence_rad.powi(2)).exp()
    }

    pub fn breakdown_db(&self, n: usize) -> GainBreakdownDb {
        GainBreakdownDb {
            tx_gain: db(self.aperture_gain(self.tx_aperture_m)),
            rx_gain: db(self.aperture_gain(self.rx_aperture_m)),
            tx_efficiency: db(self.tx_efficiency),
            rx_efficiency: db(self.rx_efficiency),
            path_loss: db(self.path_loss(n)),
            pointing_loss: db(self.pointing_loss()),
        }
    }

    /// Received power `P h(n)^2` in dBW.
    pub fn received_power_dbw(&self, n: usize) -> f64 {
        db(self.tx_power_watts * channel_gain(self, n).powi(2))
    }
}

/// Amplitude gain `h(n) = sqrt(Gt Gr ηt ηr Lpath(n) Lpoint)`.
pub fn channel_gain(link: &LinkBudget, n: usize) -> f64 {
    (link.aperture_gain(link.tx_aperture_m)
        * link.aperture_gain(link.rx_aperture_m)
        * link.tx_efficiency
        * link.rx_efficiency
        * link.path_loss(n)
        * link.pointing_loss())
    .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub variance_dbw: f64,
}

impl NoiseConfig {
    pub fn new(variance_dbw: f64) -> Self {
        NoiseConfig { variance_dbw }
    }

    pub fn linear_variance(&self) -> f64 {
        10f64.powf(self.variance_dbw / 10.0)
    }
}

/// Circularly-symmetric complex Gaussian noise, `E|w|^2 = sigma^2`.
pub fn awgn<R: Rng + ?Sized>(length: usize, noise: &NoiseConfig, rng: &mut R) -> ComplexSeries {
    let sigma = (noise.linear_variance() / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite noise std");
    ComplexSeries(
        (0..length)
            .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
            .collect(),
    )
}
