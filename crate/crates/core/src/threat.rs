//! Intent-driven threat models and the labeling policy.
//!
//! Every random component of a sample (legitimate bits, noise, jammer
//! waveform, obfuscation mask, malicious bits) draws from its own stream
//! derived from the sample seed, so two scenarios that share a component
//! share it bit for bit.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{awgn, channel_gain, LinkBudget, NoiseConfig};
use crate::error::{CpaError, Result};
use crate::seed::{stream_rng, Stream};
use crate::signal::{
    compute_ber, ofdm_demodulate, ofdm_modulate, qam_demodulate, qam_modulate, remove_cp,
    ComplexSeries, FrameConfig,
};

/// Intent classes, in one-hot column order `F = [F1 F2 F3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThreatKind {
    Deceptive,
    Disruptive,
    NonAdversarial,
}

impl ThreatKind {
    pub const ALL: [ThreatKind; 3] = [
        ThreatKind::Deceptive,
        ThreatKind::Disruptive,
        ThreatKind::NonAdversarial,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<ThreatKind> {
        Self::ALL.get(index).copied()
    }

    pub fn one_hot(self) -> [u8; 3] {
        let mut f = [0u8; 3];
        f[self.index()] = 1;
        f
    }

    pub fn from_one_hot(f: &[u8]) -> Result<ThreatKind> {
        if f.len() != 3 || f.iter().filter(|&&b| b == 1).count() != 1 || f.iter().any(|&b| b > 1) {
            return Err(CpaError::MalformedOneHot(f.to_vec()));
        }
        let i = f.iter().position(|&b| b == 1).unwrap_or_default();
        Ok(ThreatKind::ALL[i])
    }

    pub fn name(self) -> &'static str {
        match self {
            ThreatKind::Deceptive => "deceptive",
            ThreatKind::Disruptive => "disruptive",
            ThreatKind::NonAdversarial => "non-adversarial",
        }
    }
}

impl std::fmt::Display for ThreatKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatScenario {
    pub kind: ThreatKind,
    pub legit_link: LinkBudget,
    pub adversary_link: Option<LinkBudget>,
    /// Bernoulli probability of the jammer's on/off mask (disruptive only).
    pub obfuscation_prob: f64,
    /// Relative error of the spoofer's legitimate-channel estimate (deceptive only).
    pub estimation_error: f64,
    pub noise: NoiseConfig,
    pub frame: FrameConfig,
}

impl ThreatScenario {
    pub fn non_adversarial(legit_link: LinkBudget, noise: NoiseConfig, frame: FrameConfig) -> Self {
        ThreatScenario {
            kind: ThreatKind::NonAdversarial,
            legit_link,
            adversary_link: None,
            obfuscation_prob: 0.5,
            estimation_error: 0.3,
            noise,
            frame,
        }
    }

    pub fn with_adversary(mut self, kind: ThreatKind, adversary_link: LinkBudget) -> Self {
        self.kind = kind;
        self.adversary_link = Some(adversary_link);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.legit_link.validate()?;
        if !(0.0..=1.0).contains(&self.obfuscation_prob) {
            return Err(CpaError::InvalidConfig("obfuscation_prob must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.estimation_error) {
            return Err(CpaError::InvalidConfig("estimation_error must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn adversary(&self) -> Result<&LinkBudget> {
        self.adversary_link
            .as_ref()
            .ok_or(CpaError::MissingAdversary(self.kind.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub seed: u64,
    pub scenario: ThreatScenario,
    pub legit_rx_power_dbw: f64,
    pub adversary_rx_power_dbw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// Received series with cyclic prefixes intact.
    pub received: ComplexSeries,
    pub kind: ThreatKind,
    pub rho: f64,
    pub raw_ber: f64,
    pub metadata: SampleMetadata,
}

impl LabeledSample {
    pub fn intent(&self) -> [u8; 3] {
        self.kind.one_hot()
    }
}

/// Capability label `log10(max(ber, 1 / bits_per_sample))`.
pub fn label_rho(ber: f64, frame: &FrameConfig) -> f64 {
    let floor = 1.0 / frame.bits_per_sample() as f64;
    ber.clamp(0.0, 1.0).max(floor).log10()
}

fn random_bits<R: Rng>(count: usize, rng: &mut R) -> Vec<u8> {
    (0..count).map(|_| rng.random_range(0..2u8)).collect()
}

struct Waveform {
    bits: Vec<u8>,
    series: ComplexSeries,
}

fn waveform(frame: &FrameConfig, seed: u64, stream: Stream) -> Result<Waveform> {
    let bits = random_bits(frame.bits_per_sample(), &mut stream_rng(seed, stream));
    let series = ofdm_modulate(&qam_modulate(&bits, frame)?, frame)?;
    Ok(Waveform { bits, series })
}

fn gain_profile(link: &LinkBudget, len: usize) -> Vec<f64> {
    if link.drift_m_per_sample == 0.0 {
        vec![channel_gain(link, 0); len]
    } else {
        (0..len).map(|n| channel_gain(link, n)).collect()
    }
}

/// Amplitude `sqrt(P) h(n)` for every sample index.
fn amplitude_profile(link: &LinkBudget, len: usize) -> Vec<f64> {
    let root_p = link.tx_power_watts.sqrt();
    gain_profile(link, len).into_iter().map(|h| root_p * h).collect()
}

/// Equalizer tap: the amplitude at the frame midpoint.
fn equalizer_tap(link: &LinkBudget, len: usize) -> Complex64 {
    Complex64::new(link.tx_power_watts.sqrt() * channel_gain(link, len / 2), 0.0)
}

fn legit_plus_noise(s: &ThreatScenario, x: &ComplexSeries, seed: u64) -> Vec<Complex64> {
    let w = awgn(x.len(), &s.noise, &mut stream_rng(seed, Stream::Noise));
    let amp = amplitude_profile(&s.legit_link, x.len());
    x.samples()
        .iter()
        .zip(&amp)
        .zip(w.samples())
        .map(|((xn, a), wn)| xn * *a + wn)
        .collect()
}

fn decode_ber(
    y: &ComplexSeries,
    tap: Complex64,
    reference_bits: &[u8],
    frame: &FrameConfig,
) -> Result<f64> {
    let grid = ofdm_demodulate(&remove_cp(y, frame)?, tap, frame)?;
    compute_ber(reference_bits, &qam_demodulate(&grid, frame)?)
}

fn metadata(s: &ThreatScenario, seed: u64) -> SampleMetadata {
    SampleMetadata {
        seed,
        scenario: s.clone(),
        legit_rx_power_dbw: s.legit_link.received_power_dbw(0),
        adversary_rx_power_dbw: match s.kind {
            ThreatKind::NonAdversarial => None,
            _ => s.adversary_link.map(|l| l.received_power_dbw(0)),
        },
    }
}

fn finish(s: &ThreatScenario, seed: u64, received: ComplexSeries, ber: f64) -> LabeledSample {
    LabeledSample {
        received,
        kind: s.kind,
        rho: label_rho(ber, &s.frame),
        raw_ber: ber,
        metadata: metadata(s, seed),
    }
}

fn expect_kind(s: &ThreatScenario, kind: ThreatKind) -> Result<()> {
    if s.kind != kind {
        return Err(CpaError::InvalidConfig(format!(
            "scenario kind {} passed to the {} generator",
            s.kind, kind
        )));
    }
    s.validate()
}

/// `y = h x + w`, labeled with the legitimate BER.
pub fn gen_non_adversarial(s: &ThreatScenario, seed: u64) -> Result<LabeledSample> {
    expect_kind(s, ThreatKind::NonAdversarial)?;
    let legit = waveform(&s.frame, seed, Stream::LegitBits)?;
    let y = ComplexSeries(legit_plus_noise(s, &legit.series, seed));
    let ber = decode_ber(&y, equalizer_tap(&s.legit_link, y.len()), &legit.bits, &s.frame)?;
    Ok(finish(s, seed, y, ber))
}

/// `y = h x + h_j alpha(n) j(n) + w`, labeled with the legitimate BER.
pub fn gen_disruptive(s: &ThreatScenario, seed: u64) -> Result<LabeledSample> {
    expect_kind(s, ThreatKind::Disruptive)?;
    let jam_link = s.adversary()?;
    jam_link.validate()?;
    let legit = waveform(&s.frame, seed, Stream::LegitBits)?;
    let mut y = legit_plus_noise(s, &legit.series, seed);

    let mask = Bernoulli::new(s.obfuscation_prob)
        .map_err(|e| CpaError::InvalidConfig(e.to_string()))?;
    let mut mask_rng = stream_rng(seed, Stream::Obfuscation);
    let mut jam_rng = stream_rng(seed, Stream::Jammer);
    // j(n) ~ CN(0, P_adv); the link geometry enters through h_j(n)
    let jam_std = (jam_link.tx_power_watts / 2.0).sqrt();
    let normal = Normal::new(0.0, jam_std).map_err(|e| CpaError::InvalidConfig(e.to_string()))?;
    let hj = gain_profile(jam_link, y.len());
    for (n, yn) in y.iter_mut().enumerate() {
        let j = Complex64::new(normal.sample(&mut jam_rng), normal.sample(&mut jam_rng));
        if mask.sample(&mut mask_rng) {
            *yn += j * hj[n];
        }
    }

    let y = ComplexSeries(y);
    let ber = decode_ber(&y, equalizer_tap(&s.legit_link, y.len()), &legit.bits, &s.frame)?;
    Ok(finish(s, seed, y, ber))
}

fn deceptive_received(s: &ThreatScenario, seed: u64) -> Result<(ComplexSeries, Waveform)> {
    let spoof_link = s.adversary()?;
    spoof_link.validate_allow_zero_power()?;
    let legit = waveform(&s.frame, seed, Stream::LegitBits)?;
    let spoof = waveform(&s.frame, seed, Stream::SpoofBits)?;
    let w = awgn(legit.series.len(), &s.noise, &mut stream_rng(seed, Stream::Noise));
    let len = legit.series.len();
    let h_l = amplitude_profile(&s.legit_link, len);
    let h_s = amplitude_profile(spoof_link, len);
    let y = (0..len)
        .map(|n| {
            let x = legit.series.0[n];
            let h_hat = h_l[n] * (1.0 - s.estimation_error);
            let x_s = spoof.series.0[n] * h_s[n] - x * h_hat;
            x * h_l[n] + x_s + w.0[n]
        })
        .collect();
    Ok((ComplexSeries(y), spoof))
}

/// `y = h x + (h_s s - h_hat x) + w` with `h_hat = h (1 - xi)`, labeled with
/// the adversary's BER: the receiver equalizes with `h_s` and errors are
/// counted against the malicious bits.
pub fn gen_deceptive(s: &ThreatScenario, seed: u64) -> Result<LabeledSample> {
    expect_kind(s, ThreatKind::Deceptive)?;
    let (y, spoof) = deceptive_received(s, seed)?;
    let spoof_link = s.adversary()?;
    let ber = decode_ber(&y, equalizer_tap(spoof_link, y.len()), &spoof.bits, &s.frame)?;
    Ok(finish(s, seed, y, ber))
}

/// Received series of a scenario without labeling. Unlike the generators this
/// accepts a zero-power adversary.
pub fn received_signal(s: &ThreatScenario, seed: u64) -> Result<ComplexSeries> {
    s.validate()?;
    match s.kind {
        ThreatKind::NonAdversarial => Ok(gen_non_adversarial(s, seed)?.received),
        ThreatKind::Disruptive => Ok(gen_disruptive(s, seed)?.received),
        ThreatKind::Deceptive => Ok(deceptive_received(s, seed)?.0),
    }
}

/// Dispatches to the generator for `s.kind`.
pub fn generate(s: &ThreatScenario, seed: u64) -> Result<LabeledSample> {
    match s.kind {
        ThreatKind::NonAdversarial => gen_non_adversarial(s, seed),
        ThreatKind::Disruptive => gen_disruptive(s, seed),
        ThreatKind::Deceptive => gen_deceptive(s, seed),
    }
}

impl LinkBudget {
    fn validate_allow_zero_power(&self) -> Result<()> {
        let probe = LinkBudget {
            tx_power_watts: if self.tx_power_watts == 0.0 { 1.0 } else { self.tx_power_watts },
            ..*self
        };
        probe.validate()
    }
}

/// Value sets that per-sample scenarios are drawn from, uniformly and
/// independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSets {
    pub legit_powers_w: Vec<f64>,
    pub legit_distances_km: Vec<f64>,
    pub adversary_powers_w: Vec<f64>,
    pub adversary_distances_km: Vec<f64>,
    pub noise_dbw: Vec<f64>,
    /// Optics shared by every link; power and distance are overwritten per sample.
    pub optics: LinkBudget,
    pub obfuscation_prob: f64,
    pub estimation_error: f64,
}

impl Default for ParameterSets {
    fn default() -> Self {
        ParameterSets {
            legit_powers_w: vec![0.5],
            legit_distances_km: vec![500.0, 750.0, 1500.0],
            adversary_powers_w: vec![0.25, 0.5],
            adversary_distances_km: vec![750.0, 1500.0, 3000.0],
            noise_dbw: vec![-56.0, -57.0],
            optics: LinkBudget::default(),
            obfuscation_prob: 0.5,
            estimation_error: 0.3,
        }
    }
}

impl ParameterSets {
    pub fn validate(&self) -> Result<()> {
        for (name, set) in [
            ("legit_powers_w", &self.legit_powers_w),
            ("legit_distances_km", &self.legit_distances_km),
            ("adversary_powers_w", &self.adversary_powers_w),
            ("adversary_distances_km", &self.adversary_distances_km),
            ("noise_dbw", &self.noise_dbw),
        ] {
            if set.is_empty() {
                return Err(CpaError::InvalidConfig(format!("{name} must not be empty")));
            }
        }
        self.optics.validate()
    }

    /// Draws the scenario for one sample from its seed.
    pub fn sample_scenario(&self, kind: ThreatKind, frame: FrameConfig, seed: u64) -> ThreatScenario {
        let mut rng = stream_rng(seed, Stream::Scenario);
        let mut pick = |set: &[f64]| set[rng.random_range(0..set.len())];
        let legit_link = LinkBudget {
            tx_power_watts: pick(&self.legit_powers_w),
            distance_m: pick(&self.legit_distances_km) * 1e3,
            ..self.optics
        };
        let adversary = LinkBudget {
            tx_power_watts: pick(&self.adversary_powers_w),
            distance_m: pick(&self.adversary_distances_km) * 1e3,
            ..self.optics
        };
        let noise = NoiseConfig::new(pick(&self.noise_dbw));
        ThreatScenario {
            kind,
            legit_link,
            adversary_link: (kind != ThreatKind::NonAdversarial).then_some(adversary),
            obfuscation_prob: self.obfuscation_prob,
            estimation_error: self.estimation_error,
            noise,
            frame,
        }
    }
}
