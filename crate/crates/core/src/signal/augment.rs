use ndarray::s;
use rand::Rng as _;

use super::{FeatureMatrix, Waveform};
use crate::seed;

/// Masks one frequency span and one time span with the matrix mean.
///
/// Draw order from `seed`: frequency width in `0..=max_freq_mask`, frequency
/// start in `0..=F-width`, time width in `0..=max_time_mask`, time start in
/// `0..=T-width`. Mask maxima larger than the matrix are clamped to it.
pub fn spec_augment(f: &FeatureMatrix, max_freq_mask: usize, max_time_mask: usize, seed: u64) -> FeatureMatrix {
    let (t, nf) = f.frames().dim();
    let mut rng = seed::rng(seed);
    let wf = rng.gen_range(0..=max_freq_mask.min(nf));
    let f0 = rng.gen_range(0..=nf - wf);
    let wt = rng.gen_range(0..=max_time_mask.min(t));
    let t0 = rng.gen_range(0..=t - wt);

    let mut frames = f.frames().clone();
    let fill = frames.mean().unwrap_or(0.0);
    frames.slice_mut(s![.., f0..f0 + wf]).fill(fill);
    frames.slice_mut(s![t0..t0 + wt, ..]).fill(fill);
    f.map_frames(frames)
}

/// Crops `crop_s` seconds at a seeded offset, tiling the input first when it
/// is shorter than the crop.
pub fn random_crop(w: &Waveform, crop_s: f64, seed: u64) -> Waveform {
    let n_out = ((crop_s * w.sample_rate() as f64).round() as usize).max(1);
    let src = w.samples();
    if src.len() == n_out {
        return w.clone();
    }
    let tiled: Vec<f64>;
    let src = if src.len() < n_out {
        let reps = n_out.div_ceil(src.len());
        tiled = src.repeat(reps);
        &tiled[..]
    } else {
        src
    };
    let start = seed::rng(seed).gen_range(0..=src.len() - n_out);
    w.with_samples(src[start..start + n_out].to_vec())
}
