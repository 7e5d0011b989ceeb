//! Threat grading from network outputs.
//!
//! | intent \ capability | High | Moderate | Low |
//! |---------------------|------|----------|-----|
//! | non-adversarial     | 2    | 1        | 0   |
//! | disruptive          | 4    | 3        | 3   |
//! | deceptive           | 5    | 6        | 7   |
//!
//! BER thresholds default to `1e-2` and `1e-4`; a BER exactly on a threshold
//! is Moderate. Argmax ties resolve toward the lower class index, i.e. toward
//! Deceptive.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::threat::ThreatKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BerCategory {
    High,
    Moderate,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CapabilityState {
    High,
    Moderate,
    Low,
}

impl CapabilityState {
    pub const ALL: [CapabilityState; 3] = [CapabilityState::High, CapabilityState::Moderate, CapabilityState::Low];

    /// `[S1 S2 S3]` for `{High, Moderate, Low}`.
    pub fn one_hot(self) -> [u8; 3] {
        let mut s = [0u8; 3];
        s[self as usize] = 1;
        s
    }

    pub fn from_one_hot(s: &[u8]) -> Result<Self> {
        match s {
            [1, 0, 0] => Ok(CapabilityState::High),
            [0, 1, 0] => Ok(CapabilityState::Moderate),
            [0, 0, 1] => Ok(CapabilityState::Low),
            other => Err(CpaError::MalformedOneHot(other.to_vec())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CapabilityState::High => "high",
            CapabilityState::Moderate => "moderate",
            CapabilityState::Low => "low",
        }
    }
}

impl fmt::Display for CapabilityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerThresholds {
    pub high: f64,
    pub low: f64,
}

impl Default for BerThresholds {
    fn default() -> Self {
        BerThresholds { high: 1e-2, low: 1e-4 }
    }
}

impl BerThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low <= self.high && self.high < 1.0) {
            return Err(CpaError::InvalidConfig(format!(
                "BER thresholds need 0 < low <= high < 1, got low {} high {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Categorizes a predicted `log10` BER.
pub fn categorize_ber(rho_hat: f64, t: &BerThresholds) -> BerCategory {
    let ber = 10f64.powf(rho_hat);
    if ber > t.high {
        BerCategory::High
    } else if ber < t.low {
        BerCategory::Low
    } else {
        BerCategory::Moderate
    }
}

/// High BER is strong capability for jammers and the clean link, but weak
/// capability for a spoofer whose payload then arrives corrupted.
pub fn capability_state(category: BerCategory, intent: ThreatKind) -> CapabilityState {
    match (intent, category) {
        (_, BerCategory::Moderate) => CapabilityState::Moderate,
        (ThreatKind::Deceptive, BerCategory::High) => CapabilityState::Low,
        (ThreatKind::Deceptive, BerCategory::Low) => CapabilityState::High,
        (_, BerCategory::High) => CapabilityState::High,
        (_, BerCategory::Low) => CapabilityState::Low,
    }
}

pub fn scale_of(intent: ThreatKind, capability: CapabilityState) -> u8 {
    use CapabilityState as S;
    match (intent, capability) {
        (ThreatKind::NonAdversarial, S::High) => 2,
        (ThreatKind::NonAdversarial, S::Moderate) => 1,
        (ThreatKind::NonAdversarial, S::Low) => 0,
        (ThreatKind::Disruptive, S::High) => 4,
        (ThreatKind::Disruptive, S::Moderate | S::Low) => 3,
        (ThreatKind::Deceptive, S::High) => 5,
        (ThreatKind::Deceptive, S::Moderate) => 6,
        (ThreatKind::Deceptive, S::Low) => 7,
    }
}

/// Table lookup on one-hot encodings.
pub fn threat_scale(intent: &[u8], capability: &[u8]) -> Result<u8> {
    Ok(scale_of(ThreatKind::from_one_hot(intent)?, CapabilityState::from_one_hot(capability)?))
}

/// Index of the largest entry; the first maximum wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreatAssessment {
    pub intent: ThreatKind,
    pub capability: CapabilityState,
    pub scale: u8,
    pub rho_hat: f64,
}

impl ThreatAssessment {
    pub fn from_parts(intent: ThreatKind, rho_hat: f64, t: &BerThresholds) -> Self {
        let capability = capability_state(categorize_ber(rho_hat, t), intent);
        ThreatAssessment { intent, capability, scale: scale_of(intent, capability), rho_hat }
    }

    pub fn ber_estimate(&self) -> f64 {
        10f64.powf(self.rho_hat)
    }

    pub fn csv_header() -> &'static str {
        "sample,intent,capability,scale,rho_hat,ber_hat"
    }

    pub fn csv_line(&self, sample: usize) -> String {
        format!(
            "{sample},{},{},{},{:e},{:e}",
            self.intent.name(),
            self.capability.name(),
            self.scale,
            self.rho_hat,
            self.ber_estimate()
        )
    }
}

/// Grades one sample from its class probabilities (ordered by
/// [`ThreatKind::index`]) and predicted `log10` BER.
pub fn assess(class_probs: &[f64], rho_hat: f64, t: &BerThresholds) -> Result<ThreatAssessment> {
    if class_probs.len() != 3 {
        return Err(CpaError::InputSize { expected: 3, got: class_probs.len() });
    }
    let intent = ThreatKind::from_index(argmax(class_probs)).expect("three classes");
    Ok(ThreatAssessment::from_parts(intent, rho_hat, t))
}

/// The label-side assessment: true intent and the measured BER.
pub fn ground_truth(kind: ThreatKind, rho: f64, t: &BerThresholds) -> ThreatAssessment {
    ThreatAssessment::from_parts(kind, rho, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    const T: BerThresholds = BerThresholds { high: 1e-2, low: 1e-4 };

    #[test]
    fn categorize_examples() {
        assert_eq!(categorize_ber(-1.0, &T), BerCategory::High);
        assert_eq!(categorize_ber(-3.0, &T), BerCategory::Moderate);
        assert_eq!(categorize_ber(-2.0, &T), BerCategory::Moderate);
        assert_eq!(categorize_ber(-4.0, &T), BerCategory::Moderate);
        assert_eq!(categorize_ber(-4.0001, &T), BerCategory::Low);
        assert_eq!(categorize_ber(-1.9999, &T), BerCategory::High);
    }

    #[test]
    fn capability_inverts_only_for_deceptive() {
        assert_eq!(capability_state(BerCategory::High, ThreatKind::Disruptive), CapabilityState::High);
        assert_eq!(capability_state(BerCategory::High, ThreatKind::Deceptive), CapabilityState::Low);
        assert_eq!(capability_state(BerCategory::Low, ThreatKind::Deceptive), CapabilityState::High);
        assert_eq!(capability_state(BerCategory::Low, ThreatKind::NonAdversarial), CapabilityState::Low);
        for k in ThreatKind::ALL {
            assert_eq!(capability_state(BerCategory::Moderate, k), CapabilityState::Moderate);
        }
    }

    #[test]
    fn table_on_all_nine_cells() {
        let expected = [
            (ThreatKind::NonAdversarial, [2, 1, 0]),
            (ThreatKind::Disruptive, [4, 3, 3]),
            (ThreatKind::Deceptive, [5, 6, 7]),
        ];
        for (kind, row) in expected {
            for (s, want) in CapabilityState::ALL.into_iter().zip(row) {
                assert_eq!(threat_scale(&kind.one_hot(), &s.one_hot()).unwrap(), want);
            }
        }
    }

    #[test]
    fn only_scale_three_has_two_preimages() {
        let mut pre: HashMap<u8, usize> = HashMap::new();
        for k in ThreatKind::ALL {
            for s in CapabilityState::ALL {
                *pre.entry(scale_of(k, s)).or_default() += 1;
            }
        }
        assert_eq!(pre.len(), 8);
        for (scale, count) in pre {
            assert_eq!(count, if scale == 3 { 2 } else { 1 }, "scale {scale}");
        }
    }

    #[test]
    fn malformed_one_hots() {
        assert!(threat_scale(&[1, 1, 0], &[1, 0, 0]).is_err());
        assert!(threat_scale(&[0, 0, 1], &[0, 0, 0]).is_err());
        assert!(threat_scale(&[0, 1], &[1, 0, 0]).is_err());
    }

    #[test]
    fn assess_examples() {
        let a = assess(&[0.1, 0.2, 0.7], -1.0, &T).unwrap();
        assert_eq!((a.intent, a.capability, a.scale), (ThreatKind::NonAdversarial, CapabilityState::High, 2));
        let b = assess(&[0.9, 0.05, 0.05], -5.0, &T).unwrap();
        assert_eq!((b.intent, b.capability, b.scale), (ThreatKind::Deceptive, CapabilityState::High, 5));
        let third = 1.0 / 3.0;
        assert_eq!(assess(&[third; 3], -3.0, &T).unwrap().intent, ThreatKind::Deceptive);
        assert_eq!(assess(&[0.2, 0.4, 0.4], -3.0, &T).unwrap().intent, ThreatKind::Disruptive);
        assert!(assess(&[1.0], -3.0, &T).is_err());
    }

    #[test]
    fn csv_line_shape() {
        let a = assess(&[0.0, 1.0, 0.0], -1.0, &T).unwrap();
        let line = a.csv_line(7);
        assert!(line.starts_with("7,disruptive,high,4,"));
        assert_eq!(line.split(',').count(), ThreatAssessment::csv_header().split(',').count());
    }

    proptest! {
        #[test]
        fn monotone_rescaling_keeps_assessment(
            p in prop::array::uniform3(0.0f64..1.0),
            rho in -7.0f64..0.0,
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let base = assess(&p, rho, &T).unwrap();
            let affine: Vec<f64> = p.iter().map(|v| a * v + b).collect();
            let cubed: Vec<f64> = p.iter().map(|v| v.powi(3)).collect();
            prop_assert_eq!(assess(&affine, rho, &T).unwrap(), base);
            prop_assert_eq!(assess(&cubed, rho, &T).unwrap(), base);
        }
    }
}
