//! MFCC front end.
//!
//! Processing chain per frame: pre-emphasis, periodic Hann window, zero-padded
//! DFT, power spectrum, triangular mel filterbank spanning 0 Hz to Nyquist,
//! natural log with a floor, orthonormal DCT-II. The first `n_coeffs`
//! coefficients are kept, including c0.

mod dct;
mod mel;
mod wav;

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dct::{dct_ortho, idct_ortho};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use wav::{read_wav, write_wav};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    fn check_finite(&self) -> Result<()> {
        match self.samples.iter().position(|s| !s.is_finite()) {
            Some(i) => Err(Error::InvalidAudio(format!("sample {i} is not finite"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mel_filters: usize,
    /// DFT length; `None` picks the smallest power of two covering the window.
    pub fft_size: Option<usize>,
    pub preemphasis: f64,
    pub log_floor: f64,
    /// Per-utterance mean/variance normalization of each coefficient.
    pub normalize: bool,
    /// Keep the pre-DCT mel energies in the output for inspection.
    pub debug_mel: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 20,
            window_ms: 25.0,
            hop_ms: 10.0,
            n_mel_filters: 40,
            fft_size: None,
            preemphasis: 0.97,
            log_floor: 1e-10,
            normalize: false,
            debug_mel: false,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_rate(&self) -> f64 {
        1000.0 / self.hop_ms
    }

    pub fn fft_len(&self, sample_rate: u32) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.window_samples(sample_rate).next_power_of_two())
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if sample_rate == 0 {
            return bad("sample rate must be positive");
        }
        if !(self.window_ms > 0.0 && self.hop_ms > 0.0) {
            return bad("window and hop must be positive");
        }
        if self.hop_ms > self.window_ms {
            return bad("hop_ms must not exceed window_ms");
        }
        if self.n_coeffs == 0 || self.n_mel_filters == 0 {
            return bad("coefficient and filter counts must be positive");
        }
        if self.n_coeffs > self.n_mel_filters {
            return bad("n_coeffs must not exceed n_mel_filters");
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad("preemphasis must lie in [0, 1)");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        let w = self.window_samples(sample_rate);
        if w == 0 || self.hop_samples(sample_rate) == 0 {
            return bad("window or hop shorter than one sample");
        }
        let n = self.fft_len(sample_rate);
        if !n.is_power_of_two() || n < w {
            return bad("fft_size must be a power of two no smaller than the window");
        }
        Ok(())
    }
}

/// Row-major `n_frames x n_coeffs` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub n_frames: usize,
    pub n_coeffs: usize,
    pub frame_rate: f64,
    /// Row-major `n_frames x n_mel_filters` mel energies, only when `debug_mel` is set.
    pub mel_energies: Option<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_frames: usize, n_coeffs: usize, frame_rate: f64) -> Result<Self> {
        if data.len() != n_frames * n_coeffs {
            return Err(Error::InvalidInput(format!(
                "feature data has {} values, expected {n_frames} x {n_coeffs}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "feature matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            data,
            n_frames,
            n_coeffs,
            frame_rate,
            mel_energies: None,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_coeffs..(t + 1) * self.n_coeffs]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_coeffs.max(1))
    }

    /// Time-averaged coefficient vector.
    pub fn mean_frame(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_coeffs];
        for f in self.frames() {
            m.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= self.n_frames as f64);
        m
    }
}

/// Number of full frames for `n` samples, window `w` and hop `h`.
pub fn frame_count(n: usize, w: usize, h: usize) -> usize {
    if n < w {
        0
    } else {
        (n - w) / h + 1
    }
}

pub(crate) fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Splits a clip into pre-emphasized, Hann-windowed frames.
pub fn frame_signal(clip: &AudioClip, config: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    config.validate(clip.sample_rate)?;
    let w = config.window_samples(clip.sample_rate);
    let h = config.hop_samples(clip.sample_rate);
    if clip.samples.len() < w {
        return Err(Error::InsufficientAudio {
            samples: clip.samples.len(),
            window: w,
        });
    }
    Ok(frames_with(&clip.samples, &hann(w), h, config.preemphasis))
}

fn frames_with(samples: &[f64], window: &[f64], h: usize, preemphasis: f64) -> Vec<Vec<f64>> {
    let w = window.len();
    (0..frame_count(samples.len(), w, h))
        .map(|i| window_frame(&samples[i * h..i * h + w], window, preemphasis))
        .collect()
}

fn window_frame(raw: &[f64], window: &[f64], preemphasis: f64) -> Vec<f64> {
    let mut prev = raw[0];
    raw.iter()
        .zip(window)
        .map(|(&x, &win)| {
            let y = x - preemphasis * prev;
            prev = x;
            y * win
        })
        .collect()
}

/// Reusable extractor for a fixed (config, sample rate) pair.
pub struct Mfcc {
    config: MfccConfig,
    sample_rate: u32,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl Mfcc {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        config.validate(sample_rate)?;
        let fft_len = config.fft_len(sample_rate);
        let filterbank = MelFilterbank::new(config.n_mel_filters, fft_len, sample_rate);
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Ok(Self {
            window: hann(config.window_samples(sample_rate)),
            config,
            sample_rate,
            filterbank,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// One-sided power spectrum of an already windowed frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.fft.len();
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        self.fft.process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Mel-band energies (before the log) per frame, row-major.
    pub fn mel_energies(&self, clip: &AudioClip) -> Result<Vec<Vec<f64>>> {
        self.check_clip(clip)?;
        let w = self.window.len();
        if clip.samples.len() < w {
            return Err(Error::InsufficientAudio {
                samples: clip.samples.len(),
                window: w,
            });
        }
        let hop = self.config.hop_samples(self.sample_rate);
        let frames = frames_with(&clip.samples, &self.window, hop, self.config.preemphasis);
        Ok(frames
            .iter()
            .map(|f| self.filterbank.apply(&self.power_spectrum(f)))
            .collect())
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        let mel = self.mel_energies(clip)?;
        let n_frames = mel.len();
        let k = self.config.n_coeffs;
        let mut data = Vec::with_capacity(n_frames * k);
        for energies in &mel {
            let logs: Vec<f64> = energies
                .iter()
                .map(|&e| e.max(self.config.log_floor).ln())
                .collect();
            data.extend_from_slice(&dct_ortho(&logs)[..k]);
        }
        if self.config.normalize {
            normalize_columns(&mut data, k);
        }
        let mut fm = FeatureMatrix::new(data, n_frames, k, self.config.frame_rate())?;
        if self.config.debug_mel {
            fm.mel_energies = Some(mel.concat());
        }
        Ok(fm)
    }

    fn check_clip(&self, clip: &AudioClip) -> Result<()> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::InvalidAudio(format!(
                "clip sample rate {} differs from extractor rate {}",
                clip.sample_rate, self.sample_rate
            )));
        }
        clip.check_finite()
    }
}

fn normalize_columns(data: &mut [f64], k: usize) {
    let n = (data.len() / k) as f64;
    for c in 0..k {
        let mean = data.iter().skip(c).step_by(k).sum::<f64>() / n;
        let var = data
            .iter()
            .skip(c)
            .step_by(k)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        data.iter_mut()
            .skip(c)
            .step_by(k)
            .for_each(|v| *v = (*v - mean) / sd);
    }
}

pub fn mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<FeatureMatrix> {
    Mfcc::new(config.clone(), clip.sample_rate)?.extract(clip)
}

/// Extracts features for many clips in parallel. Output is sorted by id.
pub fn extract_batch<I: AsRef<str> + Sync>(
    clips: &[(I, AudioClip)],
    config: &MfccConfig,
) -> Result<Vec<(String, FeatureMatrix)>> {
    let mut out = clips
        .par_iter()
        .map(|(id, clip)| Ok((id.as_ref().to_string(), mfcc(clip, config)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(n: usize) -> AudioClip {
        AudioClip::new(vec![0.0; n], 16000).unwrap()
    }

    #[test]
    fn framing_counts() {
        let cfg = MfccConfig::default();
        assert_eq!(frame_signal(&clip(16000), &cfg).unwrap().len(), 98);
        assert_eq!(frame_signal(&clip(400), &cfg).unwrap().len(), 1);
        assert!(matches!(
            frame_signal(&clip(399), &cfg),
            Err(Error::InsufficientAudio {
                samples: 399,
                window: 400
            })
        ));
    }

    #[test]
    fn default_geometry() {
        let cfg = MfccConfig::default();
        assert_eq!(cfg.window_samples(16000), 400);
        assert_eq!(cfg.hop_samples(16000), 160);
        assert_eq!(cfg.fft_len(16000), 512);
        assert_eq!(cfg.frame_rate(), 100.0);
    }

    #[test]
    fn rejects_non_finite_samples() {
        let mut c = clip(800);
        c.samples[10] = f64::INFINITY;
        assert!(matches!(
            mfcc(&c, &MfccConfig::default()),
            Err(Error::InvalidAudio(_))
        ));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = MfccConfig {
            hop_ms: 30.0,
            ..Default::default()
        };
        assert!(cfg.validate(16000).is_err());
        cfg = MfccConfig {
            n_coeffs: 41,
            ..Default::default()
        };
        assert!(cfg.validate(16000).is_err());
        cfg = MfccConfig {
            fft_size: Some(256),
            ..Default::default()
        };
        assert!(cfg.validate(16000).is_err());
        cfg = MfccConfig {
            preemphasis: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate(16000).is_err());
    }

    #[test]
    fn hann_is_periodic() {
        let w = hann(4);
        assert_eq!(w[0], 0.0);
        assert!((w[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_flag_zero_means_columns() {
        let samples: Vec<f64> = (0..8000)
            .map(|i| (i as f64 * 0.07).sin() * 0.3 + (i as f64 * 0.011).cos() * 0.1)
            .collect();
        let c = AudioClip::new(samples, 16000).unwrap();
        let cfg = MfccConfig {
            normalize: true,
            ..Default::default()
        };
        let fm = mfcc(&c, &cfg).unwrap();
        for m in fm.mean_frame() {
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn batch_is_sorted_by_id() {
        let clips = vec![("b", clip(800)), ("a", clip(1600))];
        let out = extract_batch(&clips, &MfccConfig::default()).unwrap();
        assert_eq!(out[0].0, "a");
        assert_eq!(out[0].1.n_frames, 8);
        assert_eq!(out[1].1.n_frames, 3);
    }
}
