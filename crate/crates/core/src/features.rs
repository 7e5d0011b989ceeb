//! Spectrogram and disk-morphology feature maps.
//!
//! A CP-stripped sample of `M` OFDM symbols yields an `M × N` magnitude
//! spectrogram (one frame per symbol, `N` bins). Grayscale dilation and
//! erosion over the disk `u² + v² ≤ R²` give the local supremum and infimum
//! maps; the neighborhood is clipped at the borders. The three maps are
//! stacked channel-last as `(S, S_sup, S_inf)`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::signal::{remove_cp, ComplexSeries, FrameConfig};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub disk_radius: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { disk_radius: 3 }
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CpaError::InputSize {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `S(k, m) = |Σ_n y(n + kN) e^{-j2π mn/N}|` over a CP-free series.
pub fn spectrogram(y: &ComplexSeries, frame: &FrameConfig) -> Result<RealMatrix> {
    let n = frame.n_subcarriers;
    if y.is_empty() || y.len() % n != 0 {
        return Err(CpaError::InputSize {
            expected: (y.len() / n).max(1) * n,
            got: y.len(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let frames = y.len() / n;
    let mut buf: Vec<Complex64> = y.samples().to_vec();
    for block in buf.chunks_exact_mut(n) {
        fft.process(block);
    }
    RealMatrix::new(frames, n, buf.iter().map(|z| z.norm()).collect())
}

/// Half-widths of the disk's horizontal chords, indexed by row offset `|u|`.
pub fn disk_chords(radius: usize) -> Vec<usize> {
    let r2 = (radius * radius) as i64;
    (0..=radius as i64)
        .map(|u| {
            let mut w = 0i64;
            while (w + 1) * (w + 1) + u * u <= r2 {
                w += 1;
            }
            w as usize
        })
        .collect()
}

/// Extreme over `[i - w, i + w]` clipped to the row, for every `i`, with a
/// monotone deque.
fn sliding_extreme(row: &[f64], w: usize, out: &mut [f64], prefer: fn(f64, f64) -> bool) {
    let len = row.len();
    let mut deque = std::collections::VecDeque::with_capacity(2 * w + 1);
    let mut next = 0;
    for i in 0..len {
        let hi = (i + w).min(len - 1);
        while next <= hi {
            while let Some(&back) = deque.back() {
                if prefer(row[next], row[back]) || row[next] == row[back] {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(w);
        while let Some(&front) = deque.front() {
            if front < lo {
                deque.pop_front();
            } else {
                break;
            }
        }
        out[i] = row[*deque.front().expect("window is never empty")];
    }
}

fn disk_filter(s: &RealMatrix, radius: usize, prefer: fn(f64, f64) -> bool) -> RealMatrix {
    let chords = disk_chords(radius);
    let (rows, cols) = (s.rows, s.cols);
    // per chord width, the row-wise running extreme of every row
    let mut widths: Vec<usize> = chords.clone();
    widths.sort_unstable();
    widths.dedup();
    let mut running: Vec<Vec<f64>> = Vec::with_capacity(widths.len());
    for &w in &widths {
        let mut plane = vec![0.0; rows * cols];
        for r in 0..rows {
            sliding_extreme(s.row(r), w, &mut plane[r * cols..(r + 1) * cols], prefer);
        }
        running.push(plane);
    }
    let plane_of = |w: usize| &running[widths.binary_search(&w).expect("width precomputed")];

    let mut out = s.data.clone();
    for (u, &w) in chords.iter().enumerate() {
        let plane = plane_of(w);
        for r in 0..rows {
            for src in [r.checked_sub(u), (r + u < rows).then_some(r + u)]
                .into_iter()
                .flatten()
            {
                let dst = &mut out[r * cols..(r + 1) * cols];
                for (d, &v) in dst.iter_mut().zip(&plane[src * cols..(src + 1) * cols]) {
                    if prefer(v, *d) {
                        *d = v;
                    }
                }
            }
        }
    }
    RealMatrix {
        rows,
        cols,
        data: out,
    }
}

/// Grayscale dilation and erosion of `s` over the disk of the given radius.
pub fn local_extrema(s: &RealMatrix, radius: usize) -> (RealMatrix, RealMatrix) {
    if s.data.is_empty() {
        return (s.clone(), s.clone());
    }
    (
        disk_filter(s, radius, |a, b| a > b),
        disk_filter(s, radius, |a, b| a < b),
    )
}

/// Per-channel value range used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRanges {
    pub min: [f64; CHANNELS],
    pub max: [f64; CHANNELS],
}

impl ChannelRanges {
    /// Smallest range covering every input range, channel by channel.
    pub fn cover<'a>(ranges: impl IntoIterator<Item = &'a ChannelRanges>) -> Option<ChannelRanges> {
        let mut it = ranges.into_iter();
        let mut acc = *it.next()?;
        for r in it {
            for c in 0..CHANNELS {
                acc.min[c] = acc.min[c].min(r.min[c]);
                acc.max[c] = acc.max[c].max(r.max[c]);
            }
        }
        Some(acc)
    }

    /// Maps a value normalized against `own` onto this range.
    pub fn rescale(&self, value: f64, channel: usize, own: &ChannelRanges) -> f64 {
        let raw = value * (own.max[channel] - own.min[channel]) + own.min[channel];
        let span = self.max[channel] - self.min[channel];
        if span > 0.0 {
            (raw - self.min[channel]) / span
        } else {
            0.0
        }
    }
}

/// How stored per-sample features become network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Per-sample min-max features as stored.
    PerSample,
    /// Per-sample scaling undone through the recorded ranges, then one
    /// per-channel range shared by the whole training set.
    #[default]
    Shared,
}

/// `frames × bins × 3` tensor, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn from_raw(frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bins * CHANNELS {
            return Err(CpaError::InputSize {
                expected: frames * bins * CHANNELS,
                got: data.len(),
            });
        }
        Ok(FeatureTensor { frames, bins, data })
    }

    pub fn stack(s: &RealMatrix, sup: &RealMatrix, inf: &RealMatrix) -> Result<Self> {
        if (s.rows, s.cols) != (sup.rows, sup.cols) || (s.rows, s.cols) != (inf.rows, inf.cols) {
            return Err(CpaError::ShapeMismatch("feature maps differ in shape".into()));
        }
        let data = (0..s.data.len())
            .flat_map(|i| [s.data[i], sup.data[i], inf.data[i]])
            .collect();
        Ok(FeatureTensor {
            frames: s.rows,
            bins: s.cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.bins, CHANNELS)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> f64 {
        self.data[(frame * self.bins + bin) * CHANNELS + channel]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> RealMatrix {
        RealMatrix {
            rows: self.frames,
            cols: self.bins,
            data: self.data.iter().skip(c).step_by(CHANNELS).copied().collect(),
        }
    }

    /// Channel-first copy, the layout the network consumes.
    pub fn to_chw(&self) -> Vec<f64> {
        let plane = self.frames * self.bins;
        let mut out = vec![0.0; plane * CHANNELS];
        for (i, px) in self.data.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                out[c * plane + i] = px[c];
            }
        }
        out
    }

    pub fn ranges(&self) -> ChannelRanges {
        let mut min = [f64::INFINITY; CHANNELS];
        let mut max = [f64::NEG_INFINITY; CHANNELS];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                min[c] = min[c].min(px[c]);
                max[c] = max[c].max(px[c]);
            }
        }
        ChannelRanges { min, max }
    }

    /// Scales each channel to `[0, 1]`; a flat channel maps to 0.
    pub fn normalize(&self) -> (FeatureTensor, ChannelRanges) {
        let ranges = self.ranges();
        let data = self
            .data
            .chunks_exact(CHANNELS)
            .flat_map(|px| {
                (0..CHANNELS).map(move |c| {
                    let span = ranges.max[c] - ranges.min[c];
                    if span > 0.0 {
                        (px[c] - ranges.min[c]) / span
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        (
            FeatureTensor {
                frames: self.frames,
                bins: self.bins,
                data,
            },
            ranges,
        )
    }

    pub fn denormalize(&self, ranges: &ChannelRanges) -> FeatureTensor {
        let data = self
            .data
            .chunks_exact(CHANNELS)
            .flat_map(|px| {
                (0..CHANNELS).map(move |c| px[c] * (ranges.max[c] - ranges.min[c]) + ranges.min[c])
            })
            .collect();
        FeatureTensor {
            frames: self.frames,
            bins: self.bins,
            data,
        }
    }

    /// Nearest-neighbour resample to `side × side`, for experiments that want
    /// a square input.
    pub fn resize_square(&self, side: usize) -> FeatureTensor {
        let mut data = Vec::with_capacity(side * side * CHANNELS);
        for r in 0..side {
            let src_r = r * self.frames / side;
            for c in 0..side {
                let src_c = c * self.bins / side;
                let base = (src_r * self.bins + src_c) * CHANNELS;
                data.extend_from_slice(&self.data[base..base + CHANNELS]);
            }
        }
        FeatureTensor {
            frames: side,
            bins: side,
            data,
        }
    }
}

/// Un-normalized `(S, S_sup, S_inf)` stack of a CP-intact received series.
pub fn raw_feature_tensor(
    y: &ComplexSeries,
    frame: &FrameConfig,
    fcfg: &FeatureConfig,
) -> Result<FeatureTensor> {
    let stripped = remove_cp(y, frame)?;
    let s = spectrogram(&stripped, frame)?;
    let (sup, inf) = local_extrema(&s, fcfg.disk_radius);
    FeatureTensor::stack(&s, &sup, &inf)
}

/// Full feature pipeline: CP removal, spectrogram, disk extrema, stacking and
/// per-channel min-max scaling.
pub fn feature_tensor(
    y: &ComplexSeries,
    frame: &FrameConfig,
    fcfg: &FeatureConfig,
) -> Result<(FeatureTensor, ChannelRanges)> {
    Ok(raw_feature_tensor(y, frame, fcfg)?.normalize())
}

/// Channel-first network input for one received series; with `shared`, the
/// per-sample scaling is replaced by the shared range.
pub fn network_input(
    y: &ComplexSeries,
    frame: &FrameConfig,
    fcfg: &FeatureConfig,
    shared: Option<&ChannelRanges>,
) -> Result<Vec<f64>> {
    let (tensor, own) = feature_tensor(y, frame, fcfg)?;
    let mut chw = tensor.to_chw();
    if let Some(r) = shared {
        let plane = tensor.frames() * tensor.bins();
        for (i, v) in chw.iter_mut().enumerate() {
            *v = r.rescale(*v, i / plane, &own);
        }
    }
    Ok(chw)
}
