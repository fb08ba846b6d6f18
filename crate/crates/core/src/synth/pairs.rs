//! Paired video/EEG samples drawn from a shared latent state.
//!
//! Both modalities are deterministic functions of the same latent vector
//! (plus optional noise), so pair correspondence is recoverable by
//! construction and usable as ground truth in retrieval tests.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{EegClip, SubjectClass};

/// Frame sequence tensor, frame-major [f][y][x][ch], values in [0, 1].
#[derive(Clone, Debug)]
pub struct VideoClip {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub fps: f64,
}

impl VideoClip {
    pub fn numel(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }
}

#[derive(Clone, Debug)]
pub struct PairedSample {
    pub id: String,
    pub video: VideoClip,
    pub eeg: EegClip,
    /// hidden generator state, kept for oracle tests only
    pub latent: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairGenConfig {
    pub n: usize,
    pub d_latent: usize,
    pub noise: f64,
    pub seed: u64,
}

impl PairGenConfig {
    pub fn new(n: usize, d_latent: usize, noise: f64, seed: u64) -> Self {
        PairGenConfig { n, d_latent, noise, seed }
    }
}

const CHANNELS: usize = 8;
const EEG_HZ: f64 = 1000.0;
const DURATION_S: f64 = 2.0;
const FRAMES: usize = 4;
const SIDE: usize = 32;
const FPS: f64 = 2.0;
const EEG_SCALE_MV: f64 = 0.03;
const BLOBS: usize = 2;

/// Fixed per-dataset structure: EEG readout bases and video patterns.
pub struct PairGenerator {
    cfg: PairGenConfig,
    /// carrier frequency per latent dim, Hz
    freqs: Vec<f64>,
    /// channel x latent readout weights
    readout: Vec<f64>,
    /// channel x latent carrier phases
    phases: Vec<f64>,
    /// latent x frame spatial pattern parameters (kx, ky, phase, amp)
    patterns: Vec<[f64; 4]>,
}

impl PairGenerator {
    pub fn new(cfg: PairGenConfig) -> Self {
        let d = cfg.d_latent;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xC0FFEE));
        let freqs: Vec<f64> = (0..d)
            .map(|j| 3.0 + 36.0 * (j as f64 + rng.gen::<f64>() * 0.5) / d as f64)
            .collect();
        let readout: Vec<f64> = (0..CHANNELS * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt())
            .collect();
        let phases: Vec<f64> = (0..CHANNELS * d)
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        let patterns: Vec<[f64; 4]> = (0..d * FRAMES)
            .map(|_| {
                [
                    rng.gen_range(1.0..3.0f64).round(),
                    rng.gen_range(1.0..3.0f64).round(),
                    rng.gen::<f64>() * std::f64::consts::TAU,
                    rng.gen_range(0.6..1.0) / (d as f64).sqrt(),
                ]
            })
            .collect();
        PairGenerator { cfg, freqs, readout, phases, patterns }
    }

    pub fn latent(&self, index: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (index as u64 + 1));
        (0..self.cfg.d_latent)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Noise-free EEG readout of a latent vector (channel-major, mV).
    pub fn clean_eeg(&self, latent: &[f64]) -> Vec<f64> {
        let t_len = (EEG_HZ * DURATION_S) as usize;
        let d = self.cfg.d_latent;
        let mut out = vec![0.0; CHANNELS * t_len];
        for c in 0..CHANNELS {
            for j in 0..d {
                let w = self.readout[c * d + j] * latent[j];
                if w == 0.0 {
                    continue;
                }
                let omega = std::f64::consts::TAU * self.freqs[j] / EEG_HZ;
                let phase = self.phases[c * d + j];
                for t in 0..t_len {
                    out[c * t_len + t] += w * (omega * t as f64 + phase).sin();
                }
            }
        }
        for v in &mut out {
            *v *= EEG_SCALE_MV;
        }
        out
    }

    pub fn render_video(&self, latent: &[f64]) -> VideoClip {
        let d = self.cfg.d_latent;
        let mut data = vec![0.0; FRAMES * SIDE * SIDE];
        for f in 0..FRAMES {
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let (fx, fy) = (x as f64 / SIDE as f64, y as f64 / SIDE as f64);
                    let mut s = 0.0;
                    for j in 0..d {
                        let [kx, ky, ph, amp] = self.patterns[j * FRAMES + f];
                        s += latent[j]
                            * amp
                            * (std::f64::consts::TAU * (kx * fx + ky * fy) + ph).sin();
                    }
                    // moving blobs driven by the leading latent dims
                    for b in 0..BLOBS {
                        let (pj, vj) = (2 * b % d, (2 * b + 1) % d);
                        let cx = 0.5 + 0.25 * latent[pj].tanh() + 0.1 * latent[vj].tanh() * f as f64 / FRAMES as f64;
                        let cy = 0.5 + 0.25 * latent[vj].tanh() - 0.1 * latent[pj].tanh() * f as f64 / FRAMES as f64;
                        let d2 = (fx - cx).powi(2) + (fy - cy).powi(2);
                        s += 1.2 * (-d2 / 0.02).exp();
                    }
                    data[(f * SIDE + y) * SIDE + x] = 0.5 + 0.5 * (0.8 * s).tanh();
                }
            }
        }
        VideoClip {
            frames: FRAMES,
            height: SIDE,
            width: SIDE,
            channels: 1,
            data,
            fps: FPS,
        }
    }

    pub fn sample(&self, index: usize) -> PairedSample {
        let latent = self.latent(index);
        let video = self.render_video(&latent);
        let mut samples = self.clean_eeg(&latent);
        if self.cfg.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(
                (self.cfg.seed ^ (index as u64 + 1)).wrapping_add(0xBADA55),
            );
            // band-limited noise: a handful of random in-band carriers
            let t_len = (EEG_HZ * DURATION_S) as usize;
            for c in 0..CHANNELS {
                for _ in 0..4 {
                    let freq = rng.gen_range(2.0..40.0);
                    let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                    let amp = self.cfg.noise * EEG_SCALE_MV * rng.gen_range(0.5..1.0);
                    let omega = std::f64::consts::TAU * freq / EEG_HZ;
                    for t in 0..t_len {
                        samples[c * t_len + t] += amp * (omega * t as f64 + phase).sin();
                    }
                }
            }
        }
        let subject = if index % 2 == 0 { SubjectClass::Expert } else { SubjectClass::Novice };
        let condition = (index % 14 + 1) as u8;
        let eeg = EegClip::new(CHANNELS, samples, EEG_HZ, subject, condition)
            .expect("generator produced a consistent clip");
        PairedSample { id: format!("pair{index:05}"), video, eeg, latent }
    }
}

pub fn gen_pairs(cfg: &PairGenConfig) -> Result<Vec<PairedSample>> {
    if cfg.n < 2 {
        return Err(Error::Input(format!("need at least 2 pairs, requested {}", cfg.n)));
    }
    if cfg.d_latent == 0 {
        return Err(Error::Input("d_latent must be positive".into()));
    }
    let g = PairGenerator::new(cfg.clone());
    Ok((0..cfg.n).map(|i| g.sample(i)).collect())
}

#[derive(Serialize, Deserialize)]
struct VideoHeader {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    fps: f64,
}

/// Video file format: "VID1" magic, u32 LE header length, JSON header,
/// little-endian f64 payload (frame-major).
pub fn write_video(path: &Path, clip: &VideoClip) -> Result<()> {
    let header = serde_json::to_vec(&VideoHeader {
        frames: clip.frames,
        height: clip.height,
        width: clip.width,
        channels: clip.channels,
        fps: clip.fps,
    })?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = File::create(path)?;
    f.write_all(b"VID1")?;
    f.write_all(&(header.len() as u32).to_le_bytes())?;
    f.write_all(&header)?;
    for v in &clip.data {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_video(path: &Path) -> Result<VideoClip> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != b"VID1" {
        return Err(Error::Format(format!("{}: not a video clip file", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::Format(format!("{}: truncated header", path.display())));
    }
    let header: VideoHeader = serde_json::from_slice(&bytes[8..8 + hlen])?;
    let data: Vec<f64> = bytes[8 + hlen..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let clip = VideoClip {
        frames: header.frames,
        height: header.height,
        width: header.width,
        channels: header.channels,
        data,
        fps: header.fps,
    };
    if clip.numel() != clip.data.len() {
        return Err(Error::Format(format!("{}: payload length mismatch", path.display())));
    }
    Ok(clip)
}
