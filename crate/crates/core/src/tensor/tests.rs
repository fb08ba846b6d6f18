use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{attention, dropout, sample_field, LayerNorm, Linear};
use super::optim::{Optimizer, Parameter};
use super::Tensor;
use crate::fdcheck::{finite_diff, max_rel_err, rel_err};

fn randn(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn matmul_identity() {
    let i = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let m = Tensor::new(vec![2, 2], vec![3.0, -1.0, 2.0, 5.0]).unwrap();
    assert_eq!(i.matmul(&m).unwrap().data(), m.data());
}

#[test]
fn matmul_hand_arithmetic() {
    let a = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let b = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
    assert_eq!(a.matmul(&b).unwrap().data(), vec![11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let a = Tensor::zeros(vec![2, 3]);
    let b = Tensor::zeros(vec![4, 2]);
    let err = a.matmul(&b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a0 = randn(&mut rng, vec![3, 4]);
    let b0 = randn(&mut rng, vec![4, 2]);
    let loss_of = |av: &[f64]| {
        let a = Tensor::new(vec![3, 4], av.to_vec()).unwrap();
        a.matmul(&b0).unwrap().sum_all().item()
    };
    let fd = finite_diff(loss_of, &a0.data(), 1e-5);
    a0.set_requires_grad(true);
    a0.matmul(&b0).unwrap().sum_all().backward().unwrap();
    assert!(max_rel_err(&a0.grad().unwrap(), &fd) < 1e-6);
}

#[test]
fn matmul_batched_matches_per_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = randn(&mut rng, vec![2, 3, 4]);
    let b = randn(&mut rng, vec![4, 2]);
    let out = a.matmul(&b).unwrap();
    assert_eq!(out.shape(), vec![2, 3, 2]);
    for t in 0..2 {
        let at = Tensor::new(vec![3, 4], a.data()[t * 12..(t + 1) * 12].to_vec()).unwrap();
        let expect = at.matmul(&b).unwrap().data();
        assert_eq!(&out.data()[t * 6..(t + 1) * 6], &expect[..]);
    }
    // gradient through the broadcast side sums over batch
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    let fd = finite_diff(
        |bv| {
            let bt = Tensor::new(vec![4, 2], bv.to_vec()).unwrap();
            a.detach().matmul(&bt).unwrap().sum_all().item()
        },
        &b.data(),
        1e-5,
    );
    a.matmul(&b).unwrap().sum_all().backward().unwrap();
    assert!(max_rel_err(&b.grad().unwrap(), &fd) < 1e-6);
}

#[test]
fn softmax_uniform_and_stability() {
    let x = Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap();
    for v in x.softmax(1).unwrap().data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = Tensor::new(vec![1, 2], vec![1000.0, 0.0]).unwrap();
    let y = x.softmax(1).unwrap().data();
    assert!(y[0] > 1.0 - 1e-12 && y[1] < 1e-12 && y.iter().all(|v| v.is_finite()));
}

#[test]
fn softmax_closed_form() {
    let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = x.softmax(1).unwrap().data();
    let expect = [0.09003057, 0.24472847, 0.66524096];
    for (a, b) in y.iter().zip(expect) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = randn(&mut rng, vec![6, 9]);
    for axis in [0, 1] {
        let y = x.softmax(axis).unwrap();
        let sums = y.sum_axis(axis).unwrap().data();
        for s in sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn l2_normalize_cases() {
    let x = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
    assert_eq!(x.l2_normalize(1, 1e-12).unwrap().data(), vec![0.6, 0.8]);
    // unit vector is a fixed point
    let u = Tensor::new(vec![1, 2], vec![0.6, 0.8]).unwrap();
    let y = u.l2_normalize(1, 1e-12).unwrap().data();
    assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15);
    // zero row stays zero
    let z = Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap();
    assert_eq!(z.l2_normalize(1, 1e-12).unwrap().data(), vec![0.0; 3]);
}

#[test]
fn l2_normalize_norms_are_unit() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = randn(&mut rng, vec![5, 7]);
    let y = x.l2_normalize(1, 1e-12).unwrap();
    let d = y.data();
    for i in 0..5 {
        let norm: f64 = d[i * 7..(i + 1) * 7].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn backward_square_and_reuse() {
    let x = Tensor::scalar(3.0);
    x.set_requires_grad(true);
    x.square().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);

    let x = Tensor::scalar(1.0);
    x.set_requires_grad(true);
    x.add(&x).unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0]);
}

#[test]
fn backward_rejects_non_scalar_root() {
    let x = Tensor::zeros(vec![2, 2]);
    x.set_requires_grad(true);
    assert!(x.backward().is_err());
}

#[test]
fn backward_random_graph_matches_finite_differences() {
    // five-op graph: y = mean(tanh(A x) * sigmoid(x) + x^2)
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = randn(&mut rng, vec![4, 4]);
    let x0 = randn(&mut rng, vec![4, 1]);
    let run = |xv: &[f64], grad: bool| -> (f64, Option<Vec<f64>>) {
        let x = Tensor::new(vec![4, 1], xv.to_vec()).unwrap();
        x.set_requires_grad(grad);
        let y = a
            .matmul(&x)
            .unwrap()
            .tanh()
            .mul(&x.sigmoid())
            .unwrap()
            .add(&x.square())
            .unwrap()
            .mean_all();
        if grad {
            y.backward().unwrap();
            (y.item(), x.grad())
        } else {
            (y.item(), None)
        }
    };
    let fd = finite_diff(|xv| run(xv, false).0, &x0.data(), 1e-5);
    let (_, g) = run(&x0.data(), true);
    assert!(max_rel_err(&g.unwrap(), &fd) < 1e-5);
}

#[test]
fn attention_single_key_returns_value() {
    let q = Tensor::new(vec![1, 4], vec![0.3, -2.0, 0.7, 1.1]).unwrap();
    let k = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let v = Tensor::new(vec![1, 4], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
    let out = attention(&q, &k, &v, 1, 0.0, None, None, None).unwrap();
    assert_eq!(out.data(), v.data());
}

#[test]
fn attention_two_identical_keys_average_values() {
    let q = Tensor::new(vec![1, 2], vec![0.5, -0.5]).unwrap();
    let k = Tensor::new(vec![2, 2], vec![1.0, 2.0, 1.0, 2.0]).unwrap();
    let v = Tensor::new(vec![2, 2], vec![2.0, 10.0, 4.0, 20.0]).unwrap();
    let out = attention(&q, &k, &v, 1, 0.0, None, None, None).unwrap();
    assert!((out.data()[0] - 3.0).abs() < 1e-12);
    assert!((out.data()[1] - 15.0).abs() < 1e-12);
}

#[test]
fn attention_head_divisibility_error() {
    let q = Tensor::zeros(vec![1, 6]);
    assert!(attention(&q, &q, &q, 4, 0.0, None, None, None).is_err());
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let shapes: [(&str, Vec<usize>); 5] = [
        ("q", vec![2, 4]),
        ("k", vec![3, 4]),
        ("v", vec![3, 4]),
        ("q_pos", vec![2, 4]),
        ("k_pos", vec![3, 4]),
    ];
    let tensors: Vec<Tensor> = shapes.iter().map(|(_, s)| randn(&mut rng, s.clone())).collect();
    let forward = |vals: &[Vec<f64>]| -> Vec<Tensor> {
        shapes
            .iter()
            .zip(vals)
            .map(|((_, s), v)| Tensor::new(s.clone(), v.clone()).unwrap())
            .collect()
    };
    let loss = |ts: &[Tensor]| {
        attention(&ts[0], &ts[1], &ts[2], 2, 0.0, None, Some(&ts[3]), Some(&ts[4]))
            .unwrap()
            .square()
            .mean_all()
    };
    for t in &tensors {
        t.set_requires_grad(true);
    }
    loss(&tensors).backward().unwrap();
    let base: Vec<Vec<f64>> = tensors.iter().map(|t| t.data()).collect();
    for (idx, t) in tensors.iter().enumerate() {
        let fd = finite_diff(
            |xv| {
                let mut vals = base.clone();
                vals[idx] = xv.to_vec();
                loss(&forward(&vals)).item()
            },
            &base[idx],
            1e-5,
        );
        assert!(
            max_rel_err(&t.grad().unwrap(), &fd) < 1e-5,
            "input {} gradient mismatch",
            shapes[idx].0
        );
    }
}

#[test]
fn optimizer_frozen_parameter_is_bitwise_unchanged() {
    let w = Tensor::new(vec![2], vec![1.25, -0.5]).unwrap();
    let mut p = Parameter::new("w", w);
    p.frozen = true;
    let before = p.tensor.data();
    p.tensor.set_grad(vec![10.0, -3.0]);
    let mut opt = Optimizer::adam(0.1, 1e-2);
    for _ in 0..5 {
        opt.step(std::slice::from_ref(&p)).unwrap();
    }
    let after = p.tensor.data();
    assert_eq!(before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               after.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(!opt.has_moments_for("w"));
}

#[test]
fn optimizer_sgd_hand_arithmetic() {
    let p = Parameter::new("w", Tensor::scalar(1.0));
    p.tensor.set_grad(vec![2.0]);
    let mut opt = Optimizer::sgd(0.1);
    opt.step(std::slice::from_ref(&p)).unwrap();
    assert!((p.tensor.data()[0] - 0.8).abs() < 1e-15);
    assert!(p.tensor.grad().is_none());
}

#[test]
fn optimizer_adam_first_step_magnitude() {
    for g in [0.01, 2.0, 500.0] {
        let p = Parameter::new("w", Tensor::scalar(0.0));
        p.tensor.set_grad(vec![g]);
        let mut opt = Optimizer::adam(0.05, 0.0);
        opt.step(std::slice::from_ref(&p)).unwrap();
        assert!(rel_err(p.tensor.data()[0].abs(), 0.05) < 1e-6, "g={g}");
    }
}

#[test]
fn optimizer_missing_gradient_is_usage_error() {
    let p = Parameter::new("w", Tensor::scalar(1.0));
    let mut opt = Optimizer::adam(0.1, 0.0);
    assert!(opt.step(std::slice::from_ref(&p)).is_err());
}

#[test]
fn optimizer_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Parameter::new("w", randn(&mut rng, vec![3, 3]));
        let x = randn(&mut rng, vec![3, 3]);
        let mut opt = Optimizer::adam(1e-2, 1e-5);
        for _ in 0..10 {
            let loss = p.tensor.matmul(&x).unwrap().square().mean_all();
            loss.backward().unwrap();
            opt.step(std::slice::from_ref(&p)).unwrap();
        }
        p.tensor.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ln = LayerNorm::new(5);
    let x = randn(&mut rng, vec![3, 5]);
    x.set_requires_grad(true);
    ln.forward(&x).unwrap().square().mean_all().backward().unwrap();
    let fd = finite_diff(
        |xv| {
            let xt = Tensor::new(vec![3, 5], xv.to_vec()).unwrap();
            ln.forward(&xt).unwrap().square().mean_all().item()
        },
        &x.data(),
        1e-5,
    );
    assert!(max_rel_err(&x.grad().unwrap(), &fd) < 1e-5);
}

#[test]
fn dropout_eval_is_identity_and_train_preserves_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x = Tensor::new(vec![1, 1000], vec![1.0; 1000]).unwrap();
    assert_eq!(dropout(&x, 0.5, None).unwrap().data(), x.data());
    let y = dropout(&x, 0.5, Some(&mut rng)).unwrap().data();
    let mean: f64 = y.iter().sum::<f64>() / 1000.0;
    assert!((mean - 1.0).abs() < 0.1);
}

#[test]
fn sample_field_values_and_gradient() {
    // 2x2 field: bilinear surface v(x,y) = x + 2y on the unit cell
    let field = [0.0, 1.0, 2.0, 3.0];
    let pts = Tensor::new(vec![1, 2], vec![0.25, 0.5]).unwrap();
    pts.set_requires_grad(true);
    let out = sample_field(&pts, &field, 2, 2).unwrap();
    assert!((out.data()[0] - 1.25).abs() < 1e-12);
    out.sum_all().backward().unwrap();
    let g = pts.grad().unwrap();
    assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12);
}

#[test]
fn linear_forward_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = Linear::new(&mut rng, 4, 3);
    let x = randn(&mut rng, vec![5, 4]);
    assert_eq!(l.forward(&x).unwrap().shape(), vec![5, 3]);
    let z = Linear::new_zeroed(4, 3);
    assert_eq!(z.forward(&x).unwrap().data(), vec![0.0; 15]);
}

#[test]
fn checkpoint_round_trip() {
    use super::checkpoint;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.ckpt");
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut p1 = Parameter::new("a.w", randn(&mut rng, vec![2, 3]));
    p1.frozen = true;
    let p2 = Parameter::new("b.w", randn(&mut rng, vec![4]));
    checkpoint::save(&path, &[p1.clone(), p2.clone()], 99).unwrap();
    let ck = checkpoint::load(&path).unwrap();
    assert_eq!(ck.seed, 99);
    assert!(ck.get("a.w").unwrap().0.frozen);
    let fresh = [
        Parameter::new("a.w", Tensor::zeros(vec![2, 3])),
        Parameter::new("b.w", Tensor::zeros(vec![4])),
    ];
    ck.load_into(&fresh).unwrap();
    assert_eq!(fresh[0].tensor.data(), p1.tensor.data());
    // shape mismatch is a config error naming the parameter
    let bad = [Parameter::new("a.w", Tensor::zeros(vec![3, 2]))];
    let err = ck.load_into(&bad).unwrap_err().to_string();
    assert!(err.contains("a.w") && err.contains("[2, 3]"), "{err}");
}
