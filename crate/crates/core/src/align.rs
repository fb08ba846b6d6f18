//! Stage-1 contrastive alignment: a trainable video branch learned against a
//! frozen EEG encoder with a symmetric InfoNCE objective over paired batches.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::EegClip;
use crate::synth::VideoClip;
use crate::tensor::nn::{dropout, Linear};
use crate::tensor::optim::{Optimizer, Parameter};
use crate::tensor::Tensor;

pub const SHARED_DIM: usize = 200;
/// log-temperature init, ln(1/0.07)
pub const BETA_INIT: f64 = 2.6592600369327783;

const PATCH: usize = 8;
const FRAME_SIDE: usize = 32;
const PATCHES_PER_FRAME: usize = (FRAME_SIDE / PATCH) * (FRAME_SIDE / PATCH);
const PATCH_DIM: usize = PATCH * PATCH;
/// per-patch feature width; frames see the concatenation of all patches so
/// spatially fine structure is not averaged away
const PATCH_FEAT: usize = 16;
const FRAME_DIM: usize = 64;
const STUB_IN: usize = 8 * 400;
const STUB_SEED: u64 = 0x5EED_EEC5;

/// Frozen EEG embedding: a fixed seeded linear readout with tanh, unit
/// normalized. No gradient ever flows here; the weights are plain floats.
pub struct EegEncoderStub {
    pub d: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl EegEncoderStub {
    pub fn new(d: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(STUB_SEED);
        let scale = 1.0 / (STUB_IN as f64).sqrt();
        let w: Vec<f64> = (0..d * STUB_IN)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        let b: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
        EegEncoderStub { d, w, b }
    }

    pub fn weights(&self) -> (&[f64], &[f64]) {
        (&self.w, &self.b)
    }

    /// Unit d-vector for one processed clip (200 Hz, ≤ 2 s, 8 channels).
    pub fn embed(&self, clip: &EegClip) -> Result<Vec<f64>> {
        if !clip.processed {
            return Err(Error::Input("EEG clip has not been preprocessed".into()));
        }
        if clip.sample_rate_hz != 200.0 {
            return Err(Error::Input(format!(
                "expected a 200 Hz clip, got {} Hz",
                clip.sample_rate_hz
            )));
        }
        if clip.channels != 8 {
            return Err(Error::Input(format!("expected 8 channels, got {}", clip.channels)));
        }
        let t = clip.samples_per_channel();
        if t > 400 {
            return Err(Error::Input(format!("clip has {t} samples per channel, max 400")));
        }
        // shorter clips are zero padded to the fixed input width
        let mut x = vec![0.0; STUB_IN];
        for c in 0..clip.channels {
            x[c * 400..c * 400 + t].copy_from_slice(clip.channel(c));
        }
        let mut y: Vec<f64> = (0..self.d)
            .map(|k| {
                let row = &self.w[k * STUB_IN..(k + 1) * STUB_IN];
                let dot: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                (dot + self.b[k]).tanh()
            })
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::Input("EEG embedding collapsed to zero".into()));
        }
        for v in &mut y {
            *v /= norm;
        }
        Ok(y)
    }
}

/// Trainable video branch: patch embedding concatenated per frame, a frame
/// MLP, mask-aware temporal mean pooling, then a two-layer projection head
/// to the shared space, unit normalized.
pub struct VideoEncoder {
    pub d: usize,
    pub dropout: f64,
    pub patch: Linear,
    pub frame_mlp: Linear,
    pub proj1: Linear,
    pub proj2: Linear,
}

impl VideoEncoder {
    pub fn new(seed: u64, d: usize, dropout: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoEncoder {
            d,
            dropout,
            patch: Linear::new(&mut rng, PATCH_DIM, PATCH_FEAT),
            frame_mlp: Linear::new(&mut rng, PATCHES_PER_FRAME * PATCH_FEAT, FRAME_DIM),
            proj1: Linear::new(&mut rng, FRAME_DIM, d),
            proj2: Linear::new(&mut rng, d, d),
        }
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![
            Parameter::new("video.patch.w", self.patch.w.clone()),
            Parameter::new("video.patch.b", self.patch.b.clone()),
            Parameter::new("video.frame.w", self.frame_mlp.w.clone()),
            Parameter::new("video.frame.b", self.frame_mlp.b.clone()),
            Parameter::new("video.proj1.w", self.proj1.w.clone()),
            Parameter::new("video.proj1.b", self.proj1.b.clone()),
            Parameter::new("video.proj2.w", self.proj2.w.clone()),
            Parameter::new("video.proj2.b", self.proj2.b.clone()),
        ]
    }

    pub fn frozen_params(&self) -> Vec<Parameter> {
        self.params()
            .into_iter()
            .map(|mut p| {
                p.frozen = true;
                p
            })
            .collect()
    }

    /// Batched forward. `valid_frames[i]` marks how many leading frames of
    /// clip i are real; later frames are padding and get zero pool weight.
    pub fn forward(
        &self,
        clips: &[&VideoClip],
        valid_frames: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        if clips.is_empty() || clips.len() != valid_frames.len() {
            return Err(Error::Input("empty batch or valid_frames length mismatch".into()));
        }
        for (clip, &valid) in clips.iter().zip(valid_frames) {
            if valid == 0 || valid > clip.frames {
                return Err(Error::Input(format!(
                    "valid frame count {valid} outside 1..={}",
                    clip.frames
                )));
            }
            if clip.height != FRAME_SIDE || clip.width != FRAME_SIDE || clip.channels != 1 {
                return Err(Error::Input(format!(
                    "expected {FRAME_SIDE}x{FRAME_SIDE}x1 frames, got {}x{}x{}",
                    clip.height, clip.width, clip.channels
                )));
            }
        }
        let total_frames: usize = clips.iter().map(|c| c.frames).sum();
        let mut patches = vec![0.0; total_frames * PATCHES_PER_FRAME * PATCH_DIM];
        let mut row = 0;
        for clip in clips {
            for f in 0..clip.frames {
                let frame = &clip.data[f * FRAME_SIDE * FRAME_SIDE..(f + 1) * FRAME_SIDE * FRAME_SIDE];
                for py in 0..FRAME_SIDE / PATCH {
                    for px in 0..FRAME_SIDE / PATCH {
                        let base = row * PATCH_DIM;
                        for dy in 0..PATCH {
                            for dx in 0..PATCH {
                                patches[base + dy * PATCH + dx] =
                                    frame[(py * PATCH + dy) * FRAME_SIDE + px * PATCH + dx];
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        let x = Tensor::new(vec![total_frames * PATCHES_PER_FRAME, PATCH_DIM], patches)?;

        // constant pooling matrix: frames -> clips, padded frames weighted 0
        let mut pool_q = vec![0.0; clips.len() * total_frames];
        let mut offset = 0;
        for (i, clip) in clips.iter().enumerate() {
            for f in 0..valid_frames[i] {
                pool_q[i * total_frames + offset + f] = 1.0 / valid_frames[i] as f64;
            }
            offset += clip.frames;
        }
        let pool_q = Tensor::new(vec![clips.len(), total_frames], pool_q)?;

        let h = self.patch.forward(&x)?.tanh();
        let frames = h.reshape(vec![total_frames, PATCHES_PER_FRAME * PATCH_FEAT])?;
        let frames = self.frame_mlp.forward(&frames)?.tanh();
        let pooled = pool_q.matmul(&frames)?;
        let z = self.proj1.forward(&pooled)?.tanh();
        let z = dropout(&z, self.dropout, rng)?;
        let z = self.proj2.forward(&z)?;
        Ok(z.l2_normalize(1, 1e-12)?)
    }

    /// Single-clip eval-mode embedding, unit norm.
    pub fn embed(&self, clip: &VideoClip) -> Result<Tensor> {
        if clip.frames == 0 {
            return Err(Error::Input("video clip has no frames".into()));
        }
        self.forward(&[clip], &[clip.frames], None)
    }
}

pub struct TemperatureParam {
    pub beta: Tensor,
}

impl TemperatureParam {
    pub fn new() -> Self {
        let beta = Tensor::scalar(BETA_INIT);
        beta.set_requires_grad(true);
        TemperatureParam { beta }
    }

    pub fn param(&self) -> Parameter {
        Parameter::new("beta", self.beta.clone())
    }

    pub fn value(&self) -> f64 {
        self.beta.item()
    }
}

impl Default for TemperatureParam {
    fn default() -> Self {
        Self::new()
    }
}

/// S[i][j] = e^beta * <zv[i], ze[j]> for unit-normalized batches.
pub fn similarity_matrix(zv: &Tensor, ze: &Tensor, temp: &TemperatureParam) -> Result<Tensor> {
    if zv.shape() != ze.shape() {
        return Err(Error::Input(format!(
            "batch shapes differ: video {:?} vs eeg {:?}",
            zv.shape(),
            ze.shape()
        )));
    }
    zv.matmul(&ze.transpose()?)?.mul(&temp.beta.exp())
}

/// Symmetric contrastive loss: average of the row-wise and column-wise
/// mean cross-entropies against the diagonal pairing.
pub fn infonce_loss(s: &Tensor) -> Result<Tensor> {
    let shape = s.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Input(format!("similarity matrix must be square, got {shape:?}")));
    }
    let diag = s.take_diag()?;
    let l_v = s.logsumexp(1)?.sub(&diag)?.mean_all();
    let l_e = s.logsumexp(0)?.transpose()?.sub(&diag)?.mean_all();
    Ok(l_v.add(&l_e)?.scale(0.5))
}

/// Run raw paired EEG through the standard preprocessing chain and keep
/// the first 2 s epoch per pair, ready for the frozen encoder.
pub fn prep_pairs(pairs: &[crate::synth::PairedSample]) -> Result<(Vec<&VideoClip>, Vec<EegClip>)> {
    let cfg = crate::signal::PrepConfig::default();
    let mut videos = Vec::with_capacity(pairs.len());
    let mut clips = Vec::with_capacity(pairs.len());
    for p in pairs {
        videos.push(&p.video);
        let mut processed = crate::signal::preprocess(&p.eeg, &cfg)?;
        clips.push(processed.remove(0));
    }
    Ok((videos, clips))
}

#[derive(Clone, Debug)]
pub struct Stage1Config {
    pub d: usize,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// stop once val top-1 and val loss both beat these thresholds
    pub stop_at: Option<(f64, f64)>,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            d: SHARED_DIM,
            batch: 16,
            epochs: 120,
            lr: 2e-5,
            weight_decay: 1e-5,
            dropout: 0.01,
            seed: 0,
            val_fraction: 0.25,
            stop_at: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    pub beta: f64,
}

pub struct Stage1Result {
    pub encoder: VideoEncoder,
    pub temperature: TemperatureParam,
    pub stub: EegEncoderStub,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_top1,beta\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.train_loss, e.val_loss, e.val_top1, e.beta
        ));
    }
    out
}

/// Precompute frozen EEG embeddings for a set of processed clips.
fn embed_eeg_batch(stub: &EegEncoderStub, clips: &[EegClip]) -> Result<Vec<Vec<f64>>> {
    clips.iter().map(|c| stub.embed(c)).collect()
}

struct Batch<'a> {
    clips: Vec<&'a VideoClip>,
    valid: Vec<usize>,
    ze: Tensor,
}

fn assemble<'a>(
    idx: &[usize],
    videos: &'a [&VideoClip],
    eeg_embeds: &[Vec<f64>],
    d: usize,
) -> Result<Batch<'a>> {
    let clips: Vec<&VideoClip> = idx.iter().map(|&i| videos[i]).collect();
    let valid: Vec<usize> = clips.iter().map(|c| c.frames).collect();
    let mut ze = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        ze.extend_from_slice(&eeg_embeds[i]);
    }
    Ok(Batch { clips, valid, ze: Tensor::new(vec![idx.len(), d], ze)? })
}

fn eval_split(
    encoder: &VideoEncoder,
    temp: &TemperatureParam,
    idx: &[usize],
    videos: &[&VideoClip],
    eeg_embeds: &[Vec<f64>],
    batch: usize,
    d: usize,
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut batches = 0usize;
    for chunk in idx.chunks(batch) {
        if chunk.len() < 2 {
            continue;
        }
        let b = assemble(chunk, videos, eeg_embeds, d)?;
        let zv = encoder.forward(&b.clips, &b.valid, None)?;
        let s = similarity_matrix(&zv, &b.ze, temp)?;
        loss_sum += infonce_loss(&s)?.item();
        batches += 1;
        let n = chunk.len();
        s.with_data(|data| {
            for i in 0..n {
                let row = &data[i * n..(i + 1) * n];
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                if argmax == i {
                    hits += 1;
                }
                total += 1;
            }
        });
    }
    if batches == 0 {
        return Err(Error::Input("validation split has no usable batch".into()));
    }
    Ok((loss_sum / batches as f64, hits as f64 / total as f64))
}

/// Train the video branch against frozen EEG embeddings. The returned
/// encoder and temperature carry the best-validation-epoch weights
/// (highest top-1 retrieval, ties broken by lower loss).
pub fn stage1_train(
    videos: &[&VideoClip],
    eeg: &[EegClip],
    cfg: &Stage1Config,
) -> Result<Stage1Result> {
    let n = videos.len();
    if n != eeg.len() {
        return Err(Error::Input(format!("{n} videos but {} EEG clips", eeg.len())));
    }
    if n < 2 * cfg.batch {
        return Err(Error::Input(format!(
            "need at least {} pairs for batch size {}, got {n}",
            2 * cfg.batch,
            cfg.batch
        )));
    }
    let stub = EegEncoderStub::new(cfg.d);
    let eeg_embeds = embed_eeg_batch(&stub, eeg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.val_fraction) as usize).max(2);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let encoder = VideoEncoder::new(cfg.seed.wrapping_add(1), cfg.d, cfg.dropout);
    let temperature = TemperatureParam::new();
    let mut params = encoder.params();
    params.push(temperature.param());
    let mut opt = Optimizer::adam(cfg.lr, cfg.weight_decay);

    let mut log = Vec::new();
    let mut best: Option<(f64, f64, usize, Vec<Vec<f64>>)> = None;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut batches = 0;
        for chunk in train_idx.chunks(cfg.batch) {
            if chunk.len() < 2 {
                continue;
            }
            let b = assemble(chunk, videos, &eeg_embeds, cfg.d)?;
            let zv = encoder.forward(&b.clips, &b.valid, Some(&mut rng))?;
            let s = similarity_matrix(&zv, &b.ze, &temperature)?;
            let loss = infonce_loss(&s)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged to {value} at epoch {epoch}"
                )));
            }
            loss.backward()?;
            opt.step(&params)?;
            train_loss += value;
            batches += 1;
        }
        let train_loss = train_loss / batches as f64;
        let (val_loss, val_top1) =
            eval_split(&encoder, &temperature, &val_idx, videos, &eeg_embeds, cfg.batch, cfg.d)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss diverged at epoch {epoch}")));
        }
        log.push(EpochLog { epoch, train_loss, val_loss, val_top1, beta: temperature.value() });
        let better = match &best {
            None => true,
            Some((top1, loss, _, _)) => {
                val_top1 > *top1 || (val_top1 == *top1 && val_loss < *loss)
            }
        };
        if better {
            let snapshot = params.iter().map(|p| p.tensor.data()).collect();
            best = Some((val_top1, val_loss, epoch, snapshot));
        }
        if let Some((stop_top1, stop_loss)) = cfg.stop_at {
            if val_top1 >= stop_top1 && val_loss < stop_loss {
                break;
            }
        }
    }
    let (_, _, best_epoch, snapshot) = best.expect("at least one epoch ran");
    for (p, data) in params.iter().zip(snapshot) {
        p.tensor.set_data(data);
        p.tensor.zero_grad();
    }
    Ok(Stage1Result { encoder, temperature, stub, log, best_epoch })
}

#[cfg(test)]
mod tests;
