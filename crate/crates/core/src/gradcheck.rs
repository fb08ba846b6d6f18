//! Finite-difference verification of the autodiff graph, from single ops up
//! to the full planner graphs. Each family compares analytic gradients of a
//! scalar loss against central differences at randomly sampled coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{infonce_loss, similarity_matrix, TemperatureParam};
use crate::error::Result;
use crate::fdcheck::rel_err;
use crate::fusion::{Framework, FusionCfg, Planner};
use crate::synth::{gen_scenes, Command, Difficulty};
use crate::tensor::nn::attention;
use crate::tensor::optim::Parameter;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub family: String,
    pub max_rel_err: f64,
}

const FD_STEP: f64 = 1e-5;
/// coordinates sampled per parameter; every parameter is touched
const COORDS_PER_PARAM: usize = 3;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

fn leaf(rng: &mut ChaCha8Rng, name: &str, shape: Vec<usize>) -> Parameter {
    Parameter::new(name, rand_tensor(rng, shape))
}

/// Weighted sum to a scalar; the fixed random weights make every output
/// coordinate contribute a distinct gradient signal.
fn weighted(out: &Tensor, w: &Tensor) -> Result<Tensor> {
    Ok(out.mul(w)?.sum_all())
}

fn check(
    family: &str,
    params: &[Parameter],
    rng: &mut ChaCha8Rng,
    eval: impl Fn() -> Result<Tensor>,
) -> Result<GradReport> {
    for p in params {
        p.tensor.zero_grad();
    }
    let loss = eval()?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.tensor.grad().unwrap_or_else(|| vec![0.0; p.tensor.numel()]))
        .collect();
    let mut worst = 0.0f64;
    for (p, grad) in params.iter().zip(&analytic) {
        let n = p.tensor.numel();
        let k = n.min(COORDS_PER_PARAM);
        let mut idx: Vec<usize> = (0..n).collect();
        for pick in 0..k {
            let j = rng.gen_range(pick..n);
            idx.swap(pick, j);
        }
        for &i in &idx[..k] {
            let mut data = p.tensor.data();
            let orig = data[i];
            data[i] = orig + FD_STEP;
            p.tensor.set_data(data.clone());
            let fp = eval()?.item();
            data[i] = orig - FD_STEP;
            p.tensor.set_data(data.clone());
            let fm = eval()?.item();
            data[i] = orig;
            p.tensor.set_data(data);
            let fd = (fp - fm) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grad[i], fd));
        }
    }
    Ok(GradReport { family: family.into(), max_rel_err: worst })
}

fn small_cfg() -> FusionCfg {
    FusionCfg {
        h: 16,
        w: 16,
        c: 8,
        n_s: 4,
        heads: 2,
        layers: 1,
        dropout: 0.0,
        d: 16,
        vt_tokens: 4,
        n_q: 1,
        t: 6,
    }
}

fn check_planner(
    family: &str,
    framework: Framework,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport> {
    let cfg = small_cfg();
    let planner = Planner::new(seed ^ 0x9E37, framework, cfg.clone());
    // the waypoint head starts zeroed, which would zero every upstream
    // gradient; give it small random weights so the whole graph is live
    planner.head.fc2.w.set_data(
        (0..planner.head.fc2.w.numel()).map(|_| rng.gen_range(-0.1..0.1)).collect(),
    );
    planner.head.fc2.b.set_data(
        (0..planner.head.fc2.b.numel()).map(|_| rng.gen_range(-0.1..0.1)).collect(),
    );
    let scene = gen_scenes(1, seed, Difficulty::Medium)?.remove(0);
    let v_t = leaf(rng, "v_t", vec![1, cfg.d]);
    let w = rand_tensor(rng, vec![cfg.t, 2]);
    let mut params = planner.params();
    if framework != Framework::Baseline {
        params.push(v_t.clone());
    }
    check(family, &params, rng, || weighted(&planner.forward(&scene, &v_t.tensor, None)?, &w))
}

/// Runs every gradient family at the given seed. A healthy engine keeps
/// every `max_rel_err` well under 1e-4.
pub fn run_gradcheck(seed: u64) -> Result<Vec<GradReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    {
        let a = leaf(&mut rng, "a", vec![3, 4]);
        let b = leaf(&mut rng, "b", vec![4, 2]);
        let w = rand_tensor(&mut rng, vec![3, 2]);
        out.push(check("matmul", &[a.clone(), b.clone()], &mut rng, || {
            weighted(&a.tensor.matmul(&b.tensor)?, &w)
        })?);
    }
    {
        let x = leaf(&mut rng, "x", vec![3, 5]);
        let w = rand_tensor(&mut rng, vec![3, 5]);
        out.push(check("softmax", &[x.clone()], &mut rng, || {
            weighted(&x.tensor.softmax(1)?, &w)
        })?);
    }
    {
        let x = leaf(&mut rng, "x", vec![3, 6]);
        let w = rand_tensor(&mut rng, vec![3, 6]);
        out.push(check("normalize", &[x.clone()], &mut rng, || {
            weighted(&x.tensor.l2_normalize(1, 1e-12)?, &w)
        })?);
    }
    {
        let q = leaf(&mut rng, "q", vec![2, 8]);
        let k = leaf(&mut rng, "k", vec![3, 8]);
        let v = leaf(&mut rng, "v", vec![3, 8]);
        let q_pos = leaf(&mut rng, "q_pos", vec![2, 8]);
        let k_pos = leaf(&mut rng, "k_pos", vec![3, 8]);
        let w = rand_tensor(&mut rng, vec![2, 8]);
        let params = [q.clone(), k.clone(), v.clone(), q_pos.clone(), k_pos.clone()];
        out.push(check("attention", &params, &mut rng, || {
            let y = attention(
                &q.tensor,
                &k.tensor,
                &v.tensor,
                2,
                0.0,
                None,
                Some(&q_pos.tensor),
                Some(&k_pos.tensor),
            )?;
            weighted(&y, &w)
        })?);
    }
    {
        let cfg = small_cfg();
        let planner = Planner::new(seed ^ 0xA11, Framework::F1, cfg.clone());
        let gate = planner.gate.as_ref().unwrap();
        let b_t = leaf(&mut rng, "b_t", vec![6, cfg.c]);
        let v_t = leaf(&mut rng, "v_t", vec![1, cfg.d]);
        let w = rand_tensor(&mut rng, vec![6, cfg.c]);
        let mut params = vec![b_t.clone(), v_t.clone()];
        for p in planner.params() {
            if p.name.starts_with("gate.") {
                params.push(p);
            }
        }
        out.push(check("attn_gate", &params, &mut rng, || {
            let (gated, _) = gate.forward(&b_t.tensor, &v_t.tensor)?;
            weighted(&gated, &w)
        })?);
    }
    {
        let cfg = small_cfg();
        let planner = Planner::new(seed ^ 0xB22, Framework::F1, cfg.clone());
        let sparse = planner.sparse.as_ref().unwrap();
        let b_brain = leaf(&mut rng, "b_brain", vec![10, cfg.c]);
        let w = rand_tensor(&mut rng, vec![cfg.n_s, cfg.c]);
        let mut params = vec![b_brain.clone()];
        for p in planner.params() {
            if p.name.starts_with("sparse.") {
                params.push(p);
            }
        }
        out.push(check("sparse_tokens", &params, &mut rng, || {
            let (refined, _, _) = sparse.forward(&b_brain.tensor, None)?;
            weighted(&refined, &w)
        })?);
    }
    {
        let zv = leaf(&mut rng, "zv", vec![4, 6]);
        let ze = rand_tensor(&mut rng, vec![4, 6]).l2_normalize(1, 1e-12)?.detach();
        let temp = TemperatureParam::new();
        let params = [zv.clone(), temp.param()];
        out.push(check("infonce", &params, &mut rng, || {
            let s = similarity_matrix(&zv.tensor.l2_normalize(1, 1e-12)?, &ze, &temp)?;
            infonce_loss(&s)
        })?);
    }
    {
        let cfg = small_cfg();
        let planner = Planner::new(seed ^ 0xC33, Framework::Baseline, cfg.clone());
        planner.head.fc2.w.set_data(
            (0..planner.head.fc2.w.numel()).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        );
        let f_plan = leaf(&mut rng, "f_plan", vec![2, cfg.c]);
        let w = rand_tensor(&mut rng, vec![cfg.t, 2]);
        let mut params = vec![f_plan.clone()];
        for p in planner.params() {
            if p.name.starts_with("head.") {
                params.push(p);
            }
        }
        out.push(check("plan_head", &params, &mut rng, || {
            weighted(&planner.head.forward(&f_plan.tensor, Command::TurnLeft)?, &w)
        })?);
    }
    out.push(check_planner("full_baseline", Framework::Baseline, seed, &mut rng)?);
    out.push(check_planner("full_f1", Framework::F1, seed, &mut rng)?);
    out.push(check_planner("full_f2", Framework::F2, seed, &mut rng)?);
    out.push(check_planner("full_f3", Framework::F3, seed, &mut rng)?);
    Ok(out)
}

pub fn format_reports(reports: &[GradReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&format!("{:<14} max_rel_err {:.3e}\n", r.family, r.max_rel_err));
    }
    out
}

#[cfg(test)]
mod tests;
