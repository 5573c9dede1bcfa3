use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::AudioClip;

/// Shortest clip the default MFCC front-end can frame (25 ms).
const MIN_WINDOW_S: f64 = 0.025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

/// A synthetic voice: a harmonic source shaped by resonances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub f0_hz: f64,
    pub resonances: Vec<Resonance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioSpec {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub sample_rate: u32,
    /// Standard deviation of additive white noise.
    pub noise_level: f64,
    /// Explicit voices; when empty, `n_speakers` voices are drawn from the seed.
    pub voices: Vec<VoiceParams>,
    pub seed: u64,
}

impl Default for AudioSpec {
    fn default() -> Self {
        Self {
            n_speakers: 8,
            utterances_per_speaker: 20,
            min_duration_s: 0.5,
            max_duration_s: 1.0,
            sample_rate: 16_000,
            noise_level: 1e-3,
            voices: Vec::new(),
            seed: 0,
        }
    }
}

impl AudioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        let n = if self.voices.is_empty() {
            self.n_speakers
        } else {
            self.voices.len()
        };
        if n == 0 || self.utterances_per_speaker == 0 {
            return bad("need at least one speaker and one utterance".into());
        }
        if !(self.min_duration_s <= self.max_duration_s && self.max_duration_s.is_finite()) {
            return bad(format!(
                "duration range {}..{} is invalid",
                self.min_duration_s, self.max_duration_s
            ));
        }
        let samples = (self.min_duration_s * self.sample_rate as f64)
            .floor()
            .max(0.0) as usize;
        let window = (MIN_WINDOW_S * self.sample_rate as f64).round() as usize;
        if samples < window {
            return Err(Error::InsufficientAudio { samples, window });
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad("noise_level must be non-negative".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for v in &self.voices {
            if !(v.f0_hz > 0.0 && v.f0_hz < nyquist) {
                return bad(format!("f0 {} Hz outside (0, {nyquist})", v.f0_hz));
            }
            for r in &v.resonances {
                if !(r.center_hz > 0.0 && r.center_hz < nyquist && r.bandwidth_hz > 0.0) {
                    return bad(format!(
                        "resonance at {} Hz (bandwidth {}) outside (0, {nyquist})",
                        r.center_hz, r.bandwidth_hz
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub utterance_id: String,
    pub speaker_id: String,
    pub speaker_index: usize,
    pub clip: AudioClip,
}

fn random_voice(rng: &mut ChaCha8Rng, nyquist: f64) -> VoiceParams {
    let bands = [(250.0, 900.0), (900.0, 2400.0), (2400.0, 3800.0)];
    VoiceParams {
        f0_hz: rng.random_range(90.0..260.0),
        resonances: bands
            .iter()
            .filter(|(lo, _)| *lo < nyquist)
            .map(|&(lo, hi)| Resonance {
                center_hz: rng.random_range(lo..f64::min(hi, nyquist * 0.95)),
                bandwidth_hz: rng.random_range(60.0..160.0),
            })
            .collect(),
    }
}

/// Spectral envelope: a sum of Lorentzian peaks over a small floor.
fn envelope(voice: &VoiceParams, f: f64, warp: f64) -> f64 {
    0.02 + voice
        .resonances
        .iter()
        .map(|r| {
            let x = (f - r.center_hz * warp) / r.bandwidth_hz;
            1.0 / (1.0 + x * x)
        })
        .sum::<f64>()
}

fn render(voice: &VoiceParams, n: usize, sr: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // per-utterance variation: pitch, resonance warp, slow syllable-rate envelope
    let f0 = voice.f0_hz * rng.random_range(0.95..1.05);
    let warp = rng.random_range(0.97..1.03);
    let glide = rng.random_range(-0.08..0.08);
    let syllable_hz = rng.random_range(3.0..6.0);
    let syllable_phase = rng.random_range(0.0..TAU);
    let limit = 0.45 * sr;
    let n_harm = (limit / (f0 * 1.1)).floor().max(1.0) as usize;
    let harmonics: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|k| {
            let fk = k as f64 * f0;
            (
                k as f64,
                envelope(voice, fk, warp),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0;
    for t in 0..n {
        let time = t as f64 / sr;
        let inst_f0 = f0 * (1.0 + glide * time);
        phase += TAU * inst_f0 / sr;
        let mut s = 0.0;
        for &(k, amp, ph) in &harmonics {
            if k * inst_f0 < limit {
                s += amp * (k * phase + ph).sin();
            }
        }
        let env = 0.6 + 0.4 * (TAU * syllable_hz * time + syllable_phase).sin();
        out.push(s * env);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let gain = rng.random_range(0.3..0.6) / peak;
    for v in out.iter_mut() {
        *v = *v * gain
            + noise * {
                let z: f64 = StandardNormal.sample(rng);
                z
            };
        *v = v.clamp(-1.0, 1.0);
    }
    out
}

/// Generates `utterances_per_speaker` clips for every voice, returning the
/// clips (speaker-major order) and the voices used.
pub fn gen_audio(spec: &AudioSpec) -> Result<(Vec<SyntheticClip>, Vec<VoiceParams>)> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let voices = if spec.voices.is_empty() {
        (0..spec.n_speakers)
            .map(|_| random_voice(&mut rng, sr / 2.0))
            .collect()
    } else {
        spec.voices.clone()
    };
    let mut clips = Vec::with_capacity(voices.len() * spec.utterances_per_speaker);
    for (s, voice) in voices.iter().enumerate() {
        for u in 0..spec.utterances_per_speaker {
            let dur = if spec.max_duration_s > spec.min_duration_s {
                rng.random_range(spec.min_duration_s..=spec.max_duration_s)
            } else {
                spec.min_duration_s
            };
            let n = (dur * sr).floor() as usize;
            let samples = render(voice, n, sr, spec.noise_level, &mut rng);
            clips.push(SyntheticClip {
                utterance_id: format!("s{s:02}-u{u:04}"),
                speaker_id: format!("s{s:02}"),
                speaker_index: s,
                clip: AudioClip::new(samples, spec.sample_rate)?,
            });
        }
    }
    Ok((clips, voices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> AudioSpec {
        AudioSpec {
            n_speakers: 2,
            utterances_per_speaker: 2,
            min_duration_s: 0.1,
            max_duration_s: 0.2,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, va) = gen_audio(&tiny()).unwrap();
        let (b, vb) = gen_audio(&tiny()).unwrap();
        assert_eq!(a, b);
        assert_eq!(va, vb);
        assert_eq!(a.len(), 4);
        assert!(a
            .iter()
            .all(|c| c.clip.samples.iter().all(|v| v.abs() <= 1.0)));
    }

    #[test]
    fn too_short_is_rejected() {
        let spec = AudioSpec {
            min_duration_s: 0.02,
            ..tiny()
        };
        assert!(matches!(
            gen_audio(&spec),
            Err(Error::InsufficientAudio { .. })
        ));
    }

    #[test]
    fn resonance_above_nyquist_is_rejected() {
        let spec = AudioSpec {
            voices: vec![VoiceParams {
                f0_hz: 100.0,
                resonances: vec![Resonance {
                    center_hz: 9000.0,
                    bandwidth_hz: 100.0,
                }],
            }],
            ..tiny()
        };
        assert!(matches!(gen_audio(&spec), Err(Error::InvalidConfig(_))));
    }
}
