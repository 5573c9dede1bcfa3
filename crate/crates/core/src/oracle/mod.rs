//! Synthetic ground truth: bilingual embedding spaces with known cluster
//! structure, and toy multi-speaker audio.

mod audio;
mod space;

pub use audio::{gen_audio, AudioSpec, Resonance, SyntheticClip, VoiceParams};
pub use space::{gen_space, LanguageSlot, OracleSpeaker, SpaceSpec, SpaceTruth};
