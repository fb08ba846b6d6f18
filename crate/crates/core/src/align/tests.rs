use super::*;
use crate::fdcheck;
use crate::signal::SubjectClass;
use crate::synth::{gen_pairs, PairGenConfig};

fn processed_clip(d_samples: usize, fill: impl Fn(usize) -> f64) -> EegClip {
    let samples: Vec<f64> = (0..8 * d_samples).map(fill).collect();
    let mut clip = EegClip::new(8, samples, 200.0, SubjectClass::Expert, 1).unwrap();
    clip.processed = true;
    clip
}

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = Tensor::new(vec![n, d], data).unwrap();
    t.l2_normalize(1, 1e-12).unwrap().detach()
}

#[test]
fn eeg_stub_unit_norm_and_deterministic() {
    let stub = EegEncoderStub::new(32);
    let clip = processed_clip(400, |i| (i as f64 * 0.01).sin());
    let a = stub.embed(&clip).unwrap();
    let b = stub.embed(&clip).unwrap();
    assert_eq!(a, b);
    let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-9);
}

#[test]
fn eeg_stub_zero_signal_hits_bias_path() {
    let stub = EegEncoderStub::new(16);
    let zero = processed_clip(400, |_| 0.0);
    let a = stub.embed(&zero).unwrap();
    assert_eq!(a, stub.embed(&zero).unwrap());
    assert!(a.iter().any(|v| v.abs() > 1e-6));
}

#[test]
fn eeg_stub_rejects_unprocessed_and_wrong_rate() {
    let stub = EegEncoderStub::new(16);
    let mut clip = processed_clip(400, |_| 0.1);
    clip.processed = false;
    assert!(stub.embed(&clip).is_err());
    let mut wrong_rate = processed_clip(400, |_| 0.1);
    wrong_rate.sample_rate_hz = 1000.0;
    assert!(stub.embed(&wrong_rate).is_err());
}

#[test]
fn eeg_stub_pads_short_clips() {
    let stub = EegEncoderStub::new(16);
    let short = processed_clip(300, |i| (i as f64 * 0.03).cos());
    assert!(stub.embed(&short).is_ok());
    assert!(stub.embed(&processed_clip(500, |_| 0.0)).is_err());
}

#[test]
fn video_embedding_is_unit_norm_and_deterministic() {
    let pairs = gen_pairs(&PairGenConfig::new(2, 8, 0.0, 1)).unwrap();
    let enc = VideoEncoder::new(3, 24, 0.0);
    let a = enc.embed(&pairs[0].video).unwrap();
    let b = enc.embed(&pairs[0].video).unwrap();
    assert_eq!(a.data(), b.data());
    let norm: f64 = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-9);
}

#[test]
fn video_masked_padding_matches_unpadded_forward() {
    let pairs = gen_pairs(&PairGenConfig::new(2, 8, 0.0, 9)).unwrap();
    let enc = VideoEncoder::new(5, 24, 0.0);
    let mut short = pairs[0].video.clone();
    short.frames = 2;
    short.data.truncate(2 * 32 * 32);
    let mut padded = short.clone();
    padded.frames = 4;
    padded.data.extend(vec![0.0; 2 * 32 * 32]);
    let a = enc.forward(&[&short], &[2], None).unwrap();
    let b = enc.forward(&[&padded], &[2], None).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn video_encoder_rejects_bad_input() {
    let enc = VideoEncoder::new(1, 16, 0.0);
    let empty = crate::synth::VideoClip {
        frames: 0,
        height: 32,
        width: 32,
        channels: 1,
        data: vec![],
        fps: 2.0,
    };
    assert!(enc.embed(&empty).is_err());
}

#[test]
fn similarity_orthonormal_identity_and_scaling() {
    let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let temp = TemperatureParam::new();
    temp.beta.set_data(vec![0.0]);
    let s = similarity_matrix(&eye, &eye, &temp).unwrap();
    assert_eq!(s.data(), eye.data());
    temp.beta.set_data(vec![2f64.ln()]);
    let s2 = similarity_matrix(&eye, &eye, &temp).unwrap();
    for (a, b) in s2.data().iter().zip(eye.data()) {
        assert!((a - 2.0 * b).abs() < 1e-12);
    }
}

#[test]
fn similarity_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, d) = (5, 7);
    let zv = unit_rows(&mut rng, n, d);
    let ze = unit_rows(&mut rng, n, d);
    let temp = TemperatureParam::new();
    let s = similarity_matrix(&zv, &ze, &temp).unwrap();
    let (dv, de, ds) = (zv.data(), ze.data(), s.data());
    let scale = temp.value().exp();
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..d).map(|k| dv[i * d + k] * de[j * d + k]).sum();
            assert!((ds[i * n + j] - scale * dot).abs() < 1e-12);
        }
    }
}

#[test]
fn similarity_rejects_batch_mismatch() {
    let temp = TemperatureParam::new();
    let a = Tensor::zeros(vec![3, 4]);
    let b = Tensor::zeros(vec![2, 4]);
    assert!(similarity_matrix(&a, &b, &temp).is_err());
}

#[test]
fn infonce_single_pair_is_exactly_zero() {
    let s = Tensor::new(vec![1, 1], vec![3.7]).unwrap();
    assert_eq!(infonce_loss(&s).unwrap().item(), 0.0);
}

#[test]
fn infonce_uniform_similarities_give_ln_n() {
    let s = Tensor::new(vec![4, 4], vec![0.42; 16]).unwrap();
    let loss = infonce_loss(&s).unwrap().item();
    assert!((loss - 4f64.ln()).abs() < 1e-9, "{loss}");
}

#[test]
fn infonce_two_orthonormal_pairs_closed_form() {
    let s = Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
    let loss = infonce_loss(&s).unwrap().item();
    let expect = (1.0 + (-1f64).exp()).ln();
    assert!((loss - expect).abs() < 1e-6, "{loss} vs {expect}");
}

#[test]
fn infonce_is_symmetric_and_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<f64> = (0..25).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let s = Tensor::new(vec![5, 5], data.clone()).unwrap();
    let st = s.transpose().unwrap();
    let a = infonce_loss(&s).unwrap().item();
    let b = infonce_loss(&st).unwrap().item();
    assert!((a - b).abs() < 1e-12);
    assert!(a >= 0.0);

    // jointly permute rows and columns
    let perm = [3usize, 0, 4, 1, 2];
    let mut permuted = vec![0.0; 25];
    for i in 0..5 {
        for j in 0..5 {
            permuted[i * 5 + j] = data[perm[i] * 5 + perm[j]];
        }
    }
    let sp = Tensor::new(vec![5, 5], permuted).unwrap();
    let c = infonce_loss(&sp).unwrap().item();
    assert!((a - c).abs() < 1e-12);
}

#[test]
fn infonce_beta_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let zv = unit_rows(&mut rng, 4, 6);
    let ze = unit_rows(&mut rng, 4, 6);
    let temp = TemperatureParam::new();
    let s = similarity_matrix(&zv, &ze, &temp).unwrap();
    infonce_loss(&s).unwrap().backward().unwrap();
    let analytic = temp.beta.grad().unwrap()[0];
    let numeric = fdcheck::finite_diff(
        |b| {
            let t = TemperatureParam::new();
            t.beta.set_data(vec![b[0]]);
            let s = similarity_matrix(&zv, &ze, &t).unwrap();
            infonce_loss(&s).unwrap().item()
        },
        &[BETA_INIT],
        1e-5,
    );
    assert!(fdcheck::rel_err(analytic, numeric[0]) < 1e-5);
}

fn tiny_cfg() -> Stage1Config {
    Stage1Config {
        d: 16,
        batch: 4,
        epochs: 3,
        lr: 1e-3,
        weight_decay: 0.0,
        dropout: 0.0,
        seed: 0,
        val_fraction: 0.25,
        stop_at: None,
    }
}

#[test]
fn stage1_zero_lr_keeps_parameters_and_val_loss_constant() {
    let pairs = gen_pairs(&PairGenConfig::new(16, 8, 0.0, 6)).unwrap();
    let (videos, eeg) = prep_pairs(&pairs).unwrap();
    let mut cfg = tiny_cfg();
    cfg.lr = 0.0;
    let result = stage1_train(&videos, &eeg, &cfg).unwrap();
    let val: Vec<f64> = result.log.iter().map(|e| e.val_loss).collect();
    assert!(val.iter().all(|&v| v == val[0]), "val losses {val:?}");
    let fresh = VideoEncoder::new(cfg.seed.wrapping_add(1), cfg.d, cfg.dropout);
    assert_eq!(result.encoder.patch.w.data(), fresh.patch.w.data());
    assert_eq!(result.temperature.value(), BETA_INIT);
}

#[test]
fn stage1_frozen_stub_and_learning_smoke() {
    let pairs = gen_pairs(&PairGenConfig::new(24, 8, 0.05, 5)).unwrap();
    let (videos, eeg) = prep_pairs(&pairs).unwrap();
    let cfg = Stage1Config { epochs: 12, ..tiny_cfg() };
    let before = EegEncoderStub::new(cfg.d);
    let result = stage1_train(&videos, &eeg, &cfg).unwrap();
    let (w0, b0) = before.weights();
    let (w1, b1) = result.stub.weights();
    assert_eq!(w0, w1);
    assert_eq!(b0, b1);
    let first = result.log.first().unwrap().train_loss;
    let last = result.log.last().unwrap().train_loss;
    assert!(last < first, "no learning signal: {first} -> {last}");
    assert_eq!(result.log.len(), 12);
}

#[test]
fn stage1_rejects_too_few_pairs() {
    let pairs = gen_pairs(&PairGenConfig::new(4, 8, 0.0, 1)).unwrap();
    let (videos, eeg) = prep_pairs(&pairs).unwrap();
    assert!(stage1_train(&videos, &eeg, &tiny_cfg()).is_err());
}

#[test]
fn log_csv_has_header_and_rows() {
    let log = vec![EpochLog { epoch: 0, train_loss: 1.0, val_loss: 2.0, val_top1: 0.5, beta: 2.6 }];
    let csv = log_to_csv(&log);
    assert!(csv.starts_with("epoch,train_loss,val_loss,val_top1,beta\n"));
    assert_eq!(csv.lines().count(), 2);
}
