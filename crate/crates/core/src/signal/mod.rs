//! Waveforms, synthetic speakers, spectral features and feature augmentation.

mod augment;
mod features;
mod synth;
mod waveform;
pub mod wav;

pub use augment::{random_crop, spec_augment};
pub use features::{extract_features, mean_normalize, FeatureConfig, FeatureExtractor, FeatureMatrix, LOG_FLOOR};
pub use synth::{
    generate_pool, parse_manifest, synth_utterance, write_manifest, Component, PoolConfig, SpeakerProfile,
    SynthConfig, MAX_RMS, MIN_RMS,
};
pub use waveform::Waveform;
