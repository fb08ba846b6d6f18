//! EEG preprocessing: re-referencing, zero-phase band-pass and notch
//! filtering, anti-aliased downsampling, amplitude normalization, epoching,
//! and deterministic dataset splits.

pub mod filter;
pub mod resample;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectClass {
    Expert,
    Novice,
}

/// Multichannel EEG time series in millivolts, channel-major.
#[derive(Clone, Debug)]
pub struct EegClip {
    pub channels: usize,
    /// channels * samples_per_channel values, channel-major
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub subject_class: SubjectClass,
    pub condition_id: u8,
    /// set once the full preprocessing chain has run
    pub processed: bool,
}

impl EegClip {
    pub fn new(
        channels: usize,
        samples: Vec<f64>,
        sample_rate_hz: f64,
        subject_class: SubjectClass,
        condition_id: u8,
    ) -> Result<Self> {
        if channels == 0 || samples.len() % channels != 0 {
            return Err(Error::Input(format!(
                "sample count {} not divisible by {} channels",
                samples.len(),
                channels
            )));
        }
        if !(1..=14).contains(&condition_id) {
            return Err(Error::Input(format!("condition_id {condition_id} outside 1..=14")));
        }
        Ok(EegClip {
            channels,
            samples,
            sample_rate_hz,
            subject_class,
            condition_id,
            processed: false,
        })
    }

    pub fn samples_per_channel(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn duration_s(&self) -> f64 {
        self.samples_per_channel() as f64 / self.sample_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let t = self.samples_per_channel();
        &self.samples[c * t..(c + 1) * t]
    }

    fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> EegClip {
        let t = self.samples_per_channel();
        let mut out = Vec::with_capacity(self.samples.len());
        for c in 0..self.channels {
            let filtered = f(&self.samples[c * t..(c + 1) * t]);
            assert_eq!(filtered.len(), t);
            out.extend(filtered);
        }
        EegClip { samples: out, ..self.clone() }
    }
}

/// Subtract the mean of two reference channels from every channel.
pub fn rereference(x: &EegClip, ref_channels: (usize, usize)) -> Result<EegClip> {
    let (r1, r2) = ref_channels;
    if r1 >= x.channels || r2 >= x.channels {
        return Err(Error::Input(format!(
            "reference channels ({r1}, {r2}) out of range for {} channels",
            x.channels
        )));
    }
    if r1 == r2 {
        return Err(Error::Input(format!("reference channels must be distinct, got {r1}")));
    }
    let t = x.samples_per_channel();
    let ref_mean: Vec<f64> = (0..t)
        .map(|i| 0.5 * (x.channel(r1)[i] + x.channel(r2)[i]))
        .collect();
    let mut out = x.clone();
    for c in 0..x.channels {
        for i in 0..t {
            out.samples[c * t + i] -= ref_mean[i];
        }
    }
    Ok(out)
}

/// Zero-phase 4th-order Butterworth band-pass per channel.
pub fn bandpass(x: &EegClip, low_hz: f64, high_hz: f64) -> Result<EegClip> {
    let sections = filter::butter_bandpass(low_hz, high_hz, x.sample_rate_hz)?;
    Ok(x.map_channels(|ch| filter::filtfilt(&sections, ch)))
}

/// Zero-phase second-order notch per channel.
pub fn notch(x: &EegClip, freq_hz: f64, q: f64) -> Result<EegClip> {
    let biquad = filter::notch(freq_hz, q, x.sample_rate_hz)?;
    Ok(x.map_channels(|ch| filter::filtfilt(&[biquad], ch)))
}

/// Anti-aliased downsampling to `target_hz`.
pub fn resample(x: &EegClip, target_hz: f64) -> Result<EegClip> {
    let mut out = x.map_channels_fallible(|ch| resample::resample(ch, x.sample_rate_hz, target_hz))?;
    out.sample_rate_hz = target_hz;
    Ok(out)
}

impl EegClip {
    fn map_channels_fallible(
        &self,
        f: impl Fn(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<EegClip> {
        let t = self.samples_per_channel();
        let mut out = Vec::new();
        let mut new_t = None;
        for c in 0..self.channels {
            let mapped = f(&self.samples[c * t..(c + 1) * t])?;
            match new_t {
                None => new_t = Some(mapped.len()),
                Some(nt) => assert_eq!(nt, mapped.len()),
            }
            out.extend(mapped);
        }
        Ok(EegClip { samples: out, ..self.clone() })
    }
}

/// Scale from millivolts into [-1, 1] by dividing by 0.1 mV. Values beyond
/// 10 post-normalization flag corrupt input.
pub fn normalize_amplitude(x: &EegClip) -> Result<EegClip> {
    let mut out = x.clone();
    for v in &mut out.samples {
        *v /= 0.1;
        if v.abs() > 10.0 {
            return Err(Error::Input(format!(
                "normalized amplitude {v:.3} exceeds 10; input looks corrupt (expected millivolts)"
            )));
        }
    }
    Ok(out)
}

/// Cut into consecutive non-overlapping windows of `window_s` seconds; a
/// shorter trailing remainder becomes its own clip. Metadata is inherited.
pub fn epoch(x: &EegClip, window_s: f64) -> Result<Vec<EegClip>> {
    if window_s <= 0.0 {
        return Err(Error::Input(format!("window {window_s} s must be positive")));
    }
    let t = x.samples_per_channel();
    let win = (window_s * x.sample_rate_hz).round() as usize;
    if win == 0 {
        return Err(Error::Input(format!(
            "window {window_s} s is below one sample at {} Hz",
            x.sample_rate_hz
        )));
    }
    let mut clips = Vec::new();
    let mut start = 0;
    while start < t {
        let len = win.min(t - start);
        let mut samples = Vec::with_capacity(x.channels * len);
        for c in 0..x.channels {
            samples.extend_from_slice(&x.samples[c * t + start..c * t + start + len]);
        }
        clips.push(EegClip { channels: x.channels, samples, ..x.clone() });
        start += len;
    }
    Ok(clips)
}

/// Run the full chain in the fixed order:
/// rereference -> bandpass -> notch -> resample -> normalize -> epoch.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PrepConfig {
    pub ref_channels: Option<(usize, usize)>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub target_hz: f64,
    pub window_s: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            ref_channels: None,
            low_hz: 0.1,
            high_hz: 50.0,
            notch_hz: 50.0,
            notch_q: 30.0,
            target_hz: 200.0,
            window_s: 2.0,
        }
    }
}

pub fn preprocess(x: &EegClip, cfg: &PrepConfig) -> Result<Vec<EegClip>> {
    if x.processed {
        return Err(Error::Input(
            "clip is already processed; re-processing would repeat the amplitude division".into(),
        ));
    }
    let stage = match cfg.ref_channels {
        Some(refs) => rereference(x, refs)?,
        None => x.clone(),
    };
    let stage = bandpass(&stage, cfg.low_hz, cfg.high_hz)?;
    let stage = notch(&stage, cfg.notch_hz, cfg.notch_q)?;
    let stage = resample(&stage, cfg.target_hz)?;
    let stage = normalize_amplitude(&stage)?;
    let mut clips = epoch(&stage, cfg.window_s)?;
    for c in &mut clips {
        c.processed = true;
    }
    Ok(clips)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Deterministic shuffled split. Train and val sizes use floor allocation;
/// the remainder goes to test.
pub fn split(ids: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if ids.is_empty() {
        return Err(Error::Input("cannot split an empty id list".into()));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("split ratios {ratios:?} must sum to 1")));
    }
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n = shuffled.len();
    let n_train = (ratios[0] * n as f64).floor() as usize;
    let n_val = (ratios[1] * n as f64).floor() as usize;
    let val_end = (n_train + n_val).min(n);
    Ok(SplitManifest {
        seed,
        ratios,
        train: shuffled[..n_train].to_vec(),
        val: shuffled[n_train..val_end].to_vec(),
        test: shuffled[val_end..].to_vec(),
    })
}

#[derive(Serialize, Deserialize)]
struct ClipHeader {
    channels: usize,
    sample_rate_hz: f64,
    subject_class: SubjectClass,
    condition_id: u8,
    processed: bool,
}

/// Clip file format: "EEG1" magic, u32 LE header length, JSON header,
/// little-endian f64 payload (channel-major).
pub fn write_clip(path: &Path, clip: &EegClip) -> Result<()> {
    let header = serde_json::to_vec(&ClipHeader {
        channels: clip.channels,
        sample_rate_hz: clip.sample_rate_hz,
        subject_class: clip.subject_class,
        condition_id: clip.condition_id,
        processed: clip.processed,
    })?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = File::create(path)?;
    f.write_all(b"EEG1")?;
    f.write_all(&(header.len() as u32).to_le_bytes())?;
    f.write_all(&header)?;
    for v in &clip.samples {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_clip(path: &Path) -> Result<EegClip> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != b"EEG1" {
        return Err(Error::Format(format!("{}: not an EEG clip file", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::Format(format!("{}: truncated header", path.display())));
    }
    let header: ClipHeader = serde_json::from_slice(&bytes[8..8 + hlen])?;
    let payload = &bytes[8 + hlen..];
    if payload.len() % 8 != 0 {
        return Err(Error::Format(format!("{}: ragged payload", path.display())));
    }
    let samples: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut clip = EegClip::new(
        header.channels,
        samples,
        header.sample_rate_hz,
        header.subject_class,
        header.condition_id,
    )?;
    clip.processed = header.processed;
    Ok(clip)
}
