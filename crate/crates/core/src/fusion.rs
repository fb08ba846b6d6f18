//! Stage-2 planner: a minimal BEV feature extractor, ego query, and
//! waypoint head, plus three ways of injecting the frozen cognition feature
//! V_t (gated sparse tokens, ego-query rewriting, decoder refinement).
//! Everything here runs per scene (batch of one) on 2-D tensors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::VideoEncoder;
use crate::error::{Error, Result};
use crate::synth::{render_camera, Command, Scene, HISTORY_POSES};
use crate::tensor::nn::{attention, LayerNorm, Linear};
use crate::tensor::optim::{Optimizer, Parameter};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Baseline,
    F1,
    F2,
    F3,
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Framework::Baseline),
            "f1" => Ok(Framework::F1),
            "f2" => Ok(Framework::F2),
            "f3" => Ok(Framework::F3),
            other => Err(Error::Usage(format!(
                "unknown framework {other:?} (expected baseline, f1, f2, or f3)"
            ))),
        }
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Framework::Baseline => "baseline",
            Framework::F1 => "f1",
            Framework::F2 => "f2",
            Framework::F3 => "f3",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FusionCfg {
    /// BEV cell map is h x w with c channels per cell
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// sparse token count (framework 1)
    pub n_s: usize,
    pub heads: usize,
    /// decoder layers (framework 3) or rewrite layers (framework 2)
    pub layers: usize,
    pub dropout: f64,
    /// cognition feature width; must match the Stage-1 shared dim
    pub d: usize,
    /// token count the cognition vector is split into for the framework-3
    /// decoder; must divide d (a single token would starve the positional
    /// encodings of gradient)
    pub vt_tokens: usize,
    pub n_q: usize,
    /// planned waypoints
    pub t: usize,
}

impl FusionCfg {
    pub fn for_framework(framework: Framework, d: usize) -> Self {
        let layers = match framework {
            Framework::F3 => 4,
            Framework::F2 => 1,
            _ => 0,
        };
        FusionCfg {
            h: 16,
            w: 16,
            c: 32,
            n_s: 8,
            heads: 4,
            layers,
            dropout: 0.1,
            d,
            vt_tokens: 8,
            n_q: 1,
            t: 6,
        }
    }
}

const PATCH_CELLS: usize = 4;
const BEV_TOKENS: usize = 16;
const VT_GATE_DIM: usize = 16;
const CMD_DIM: usize = 16;

fn ones(rows: usize, cols: usize, v: f64) -> Tensor {
    Tensor::new(vec![rows, cols], vec![v; rows * cols]).unwrap()
}

/// BEV feature extractor over the occupancy grid plus a rasterized history
/// channel; also emits a pooled token summary V_t^s.
pub struct BevEncoder {
    pub patch: Linear,
    pub token: Linear,
    h: usize,
    w: usize,
}

impl BevEncoder {
    fn new(rng: &mut ChaCha8Rng, cfg: &FusionCfg) -> Self {
        let in_dim = 2 * PATCH_CELLS * PATCH_CELLS;
        BevEncoder {
            patch: Linear::new(rng, in_dim, cfg.c),
            token: Linear::new(rng, cfg.c, cfg.c),
            h: cfg.h,
            w: cfg.w,
        }
    }

    /// Returns (B_t [h*w, c], V_t^s [16, c]).
    pub fn forward(&self, scene: &Scene) -> Result<(Tensor, Tensor)> {
        let grid = &scene.grid;
        if grid.width != self.w * PATCH_CELLS || grid.height != self.h * PATCH_CELLS {
            return Err(Error::Input(format!(
                "grid {}x{} does not match the {}x{} BEV layout",
                grid.width,
                grid.height,
                self.w * PATCH_CELLS,
                self.h * PATCH_CELLS
            )));
        }
        // second channel: soft markers at the history poses
        let mut history = vec![0.0; grid.width * grid.height];
        for row in 0..grid.height {
            for col in 0..grid.width {
                let (cx, cy) = grid.cell_center(col, row);
                let mut v: f64 = 0.0;
                for pose in &scene.ego_history {
                    let d2 = (cx - pose[0]).powi(2) + (cy - pose[1]).powi(2);
                    v = v.max((-d2 / 1.0).exp());
                }
                history[row * grid.width + col] = v;
            }
        }
        let hw = self.h * self.w;
        let in_dim = 2 * PATCH_CELLS * PATCH_CELLS;
        let mut cells = vec![0.0; hw * in_dim];
        for py in 0..self.h {
            for px in 0..self.w {
                let base = (py * self.w + px) * in_dim;
                for dy in 0..PATCH_CELLS {
                    for dx in 0..PATCH_CELLS {
                        let g = (py * PATCH_CELLS + dy) * grid.width + px * PATCH_CELLS + dx;
                        let k = dy * PATCH_CELLS + dx;
                        cells[base + k] = grid.occupancy[g] as u8 as f64;
                        cells[base + PATCH_CELLS * PATCH_CELLS + k] = history[g];
                    }
                }
            }
        }
        let x = Tensor::new(vec![hw, in_dim], cells)?;
        let b_t = self.patch.forward(&x)?.tanh();

        // 4x4 blocks of the 16x16 cell map pool down to 16 summary tokens
        let block = 4;
        let mut pool = vec![0.0; BEV_TOKENS * hw];
        for ty in 0..self.h / block {
            for tx in 0..self.w / block {
                let t = ty * (self.w / block) + tx;
                for dy in 0..block {
                    for dx in 0..block {
                        let cell = (ty * block + dy) * self.w + tx * block + dx;
                        pool[t * hw + cell] = 1.0 / (block * block) as f64;
                    }
                }
            }
        }
        let pool = Tensor::new(vec![BEV_TOKENS, hw], pool)?;
        let v_ts = self.token.forward(&pool.matmul(&b_t)?)?.tanh();
        Ok((b_t, v_ts))
    }
}

/// Ego query from the flattened history poses alone.
pub struct EgoQueryNet {
    pub fc1: Linear,
    pub fc2: Linear,
    n_q: usize,
    c: usize,
}

impl EgoQueryNet {
    fn new(rng: &mut ChaCha8Rng, cfg: &FusionCfg) -> Self {
        let in_dim = 3 * HISTORY_POSES;
        EgoQueryNet {
            fc1: Linear::new(rng, in_dim, 32),
            fc2: Linear::new(rng, 32, cfg.n_q * cfg.c),
            n_q: cfg.n_q,
            c: cfg.c,
        }
    }

    pub fn forward(&self, scene: &Scene) -> Result<Tensor> {
        if scene.ego_history.len() != HISTORY_POSES {
            return Err(Error::Input(format!(
                "expected {HISTORY_POSES} history poses, got {}",
                scene.ego_history.len()
            )));
        }
        // positions span tens of meters; compress for conditioning
        let flat: Vec<f64> = scene
            .ego_history
            .iter()
            .flat_map(|p| [p[0] / 10.0, p[1] / 10.0, p[2]])
            .collect();
        let x = Tensor::new(vec![1, flat.len()], flat)?;
        let h = self.fc1.forward(&x)?.tanh();
        self.fc2.forward(&h)?.reshape(vec![self.n_q, self.c])
    }
}

/// Per-cell scalar gate driven by the channel-max of the BEV feature and a
/// projection of the cognition feature.
pub struct AttnGate {
    pub vt_proj: Linear,
    pub fc1: Linear,
    pub fc2: Linear,
    /// test hook: replace the learned gate logits with a constant
    pub logit_override: Option<f64>,
}

impl AttnGate {
    fn new(rng: &mut ChaCha8Rng, cfg: &FusionCfg) -> Self {
        AttnGate {
            vt_proj: Linear::new(rng, cfg.d, VT_GATE_DIM),
            fc1: Linear::new(rng, 1 + VT_GATE_DIM, 32),
            fc2: Linear::new(rng, 32, 1),
            logit_override: None,
        }
    }

    /// Returns (gated BEV [hw, c], gate [hw, 1]).
    pub fn forward(&self, b_t: &Tensor, v_t: &Tensor) -> Result<(Tensor, Tensor)> {
        let hw = b_t.shape()[0];
        let pooled = b_t.max_axis1()?;
        let vt_small = self.vt_proj.forward(v_t)?.tanh();
        let vt_rows = ones(hw, 1, 1.0).matmul(&vt_small)?;
        let logits = match self.logit_override {
            Some(v) => ones(hw, 1, v),
            None => {
                let x = Tensor::concat(&[pooled, vt_rows], 1)?;
                self.fc2.forward(&self.fc1.forward(&x)?.relu())?
            }
        };
        let gate = logits.sigmoid();
        Ok((b_t.mul(&gate)?, gate))
    }
}

/// Pre-projected multi-head attention with its four linear maps.
pub struct CrossAttnBlock {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    heads: usize,
    dropout: f64,
}

impl CrossAttnBlock {
    fn new(rng: &mut ChaCha8Rng, dq: usize, dkv: usize, c: usize, heads: usize, p: f64) -> Self {
        CrossAttnBlock {
            wq: Linear::new(rng, dq, c),
            wk: Linear::new(rng, dkv, c),
            wv: Linear::new(rng, dkv, c),
            wo: Linear::new(rng, c, c),
            heads,
            dropout: p,
        }
    }

    pub fn forward(
        &self,
        q: &Tensor,
        kv: &Tensor,
        q_pos: Option<&Tensor>,
        k_pos: Option<&Tensor>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        let qp = self.wq.forward(q)?;
        let kp = self.wk.forward(kv)?;
        let vp = self.wv.forward(kv)?;
        let out = attention(&qp, &kp, &vp, self.heads, self.dropout, rng, q_pos, k_pos)?;
        self.wo.forward(&out)
    }

    fn params(&self, prefix: &str, out: &mut Vec<Parameter>) {
        out.push(Parameter::new(format!("{prefix}.wq.w"), self.wq.w.clone()));
        out.push(Parameter::new(format!("{prefix}.wq.b"), self.wq.b.clone()));
        out.push(Parameter::new(format!("{prefix}.wk.w"), self.wk.w.clone()));
        out.push(Parameter::new(format!("{prefix}.wk.b"), self.wk.b.clone()));
        out.push(Parameter::new(format!("{prefix}.wv.w"), self.wv.w.clone()));
        out.push(Parameter::new(format!("{prefix}.wv.b"), self.wv.b.clone()));
        out.push(Parameter::new(format!("{prefix}.wo.w"), self.wo.w.clone()));
        out.push(Parameter::new(format!("{prefix}.wo.b"), self.wo.b.clone()));
    }
}

/// Attention-weighted spatial aggregation into n_s tokens, then one
/// self-attention layer with residual.
pub struct SparseTokens {
    pub sel: Linear,
    pub self_attn: CrossAttnBlock,
}

impl SparseTokens {
    fn new(rng: &mut ChaCha8Rng, cfg: &FusionCfg) -> Self {
        SparseTokens {
            sel: Linear::new(rng, cfg.c, cfg.n_s),
            self_attn: CrossAttnBlock::new(rng, cfg.c, cfg.c, cfg.c, cfg.heads, cfg.dropout),
        }
    }

    /// Returns (S_t [n_s, c], pooled tokens before self-attention, spatial
    /// weights [n_s, hw] whose rows sum to 1).
    pub fn forward(
        &self,
        b_brain: &Tensor,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let logits = self.sel.forward(b_brain)?;
        let weights = logits.transpose()?.softmax(1)?;
        let pooled = weights.matmul(b_brain)?;
        let refined = pooled.add(&self.self_attn.forward(&pooled, &pooled, None, None, rng)?)?;
        Ok((refined, pooled, weights))
    }
}

/// Waypoint head: pooled planning feature plus a learned command embedding
/// decode to per-step offsets; cumulative sum yields waypoints.
pub struct PlanHead {
    pub cmd_embed: Tensor,
    pub fc1: Linear,
    pub fc2: Linear,
    t: usize,
}

impl PlanHead {
    fn new(rng: &mut ChaCha8Rng, cfg: &FusionCfg) -> Self {
        let embed = Linear::new(rng, 3, CMD_DIM);
        PlanHead {
            cmd_embed: embed.w,
            fc1: Linear::new(rng, cfg.c + CMD_DIM, 64),
            fc2: Linear::new_zeroed(64, 2 * cfg.t),
            t: cfg.t,
        }
    }

    pub fn forward(&self, f_plan: &Tensor, command: Command) -> Result<Tensor> {
        let n = f_plan.shape()[0];
        let pooled = f_plan.sum_axis(0)?.scale(1.0 / n as f64);
        let mut onehot = vec![0.0; 3];
        onehot[command.index()] = 1.0;
        let cmd = Tensor::new(vec![1, 3], onehot)?.matmul(&self.cmd_embed)?;
        let x = Tensor::concat(&[pooled, cmd], 1)?;
        let offsets = self.fc2.forward(&self.fc1.forward(&x)?.relu())?;
        offsets.reshape(vec![self.t, 2])?.cumsum_rows()
    }
}

/// One pre-norm decoder layer: self-attention over the plan tokens,
/// cross-attention to the cognition feature, then a feed-forward block.
pub struct DecoderLayer {
    pub ln1: LayerNorm,
    pub self_attn: CrossAttnBlock,
    pub ln2: LayerNorm,
    pub cross_attn: CrossAttnBlock,
    pub ln3: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl DecoderLayer {
    fn new(rng: &mut ChaCha8Rng, cfg: &FusionCfg) -> Self {
        DecoderLayer {
            ln1: LayerNorm::new(cfg.c),
            self_attn: CrossAttnBlock::new(rng, cfg.c, cfg.c, cfg.c, cfg.heads, cfg.dropout),
            ln2: LayerNorm::new(cfg.c),
            cross_attn: CrossAttnBlock::new(
                rng,
                cfg.c,
                cfg.d / cfg.vt_tokens,
                cfg.c,
                cfg.heads,
                cfg.dropout,
            ),
            ln3: LayerNorm::new(cfg.c),
            ff1: Linear::new(rng, cfg.c, 2 * cfg.c),
            ff2: Linear::new(rng, 2 * cfg.c, cfg.c),
        }
    }

    fn forward(
        &self,
        q: &Tensor,
        v_t: &Tensor,
        q_pos: &Tensor,
        k_pos: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        let n = self.ln1.forward(q)?;
        let q = q.add(&self.self_attn.forward(&n, &n, Some(q_pos), Some(q_pos), rng.as_deref_mut())?)?;
        let n = self.ln2.forward(&q)?;
        let q = q.add(&self.cross_attn.forward(&n, v_t, Some(q_pos), Some(k_pos), rng.as_deref_mut())?)?;
        let n = self.ln3.forward(&q)?;
        q.add(&self.ff2.forward(&self.ff1.forward(&n)?.relu())?)
    }
}

pub struct Planner {
    pub cfg: FusionCfg,
    pub framework: Framework,
    pub bev: BevEncoder,
    pub ego: EgoQueryNet,
    /// Q_ego attending the BEV token summary; shared by every framework
    pub base_cross: CrossAttnBlock,
    pub head: PlanHead,
    pub gate: Option<AttnGate>,
    pub sparse: Option<SparseTokens>,
    pub f1_cross: Option<CrossAttnBlock>,
    pub f1_merge: Option<Linear>,
    pub f2_cross: Option<CrossAttnBlock>,
    pub f3_layers: Vec<DecoderLayer>,
    pub f3_q_pos: Option<Tensor>,
    pub f3_k_pos: Option<Tensor>,
}

impl Planner {
    /// Shared components draw from the RNG first so that frameworks share
    /// initialization; framework extras only consume randomness afterward.
    pub fn new(seed: u64, framework: Framework, cfg: FusionCfg) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bev = BevEncoder::new(&mut rng, &cfg);
        let ego = EgoQueryNet::new(&mut rng, &cfg);
        let base_cross = CrossAttnBlock::new(&mut rng, cfg.c, cfg.c, cfg.c, cfg.heads, cfg.dropout);
        let head = PlanHead::new(&mut rng, &cfg);
        let mut planner = Planner {
            bev,
            ego,
            base_cross,
            head,
            gate: None,
            sparse: None,
            f1_cross: None,
            f1_merge: None,
            f2_cross: None,
            f3_layers: Vec::new(),
            f3_q_pos: None,
            f3_k_pos: None,
            framework,
            cfg,
        };
        let cfg = &planner.cfg;
        match framework {
            Framework::Baseline => {}
            Framework::F1 => {
                planner.gate = Some(AttnGate::new(&mut rng, cfg));
                planner.sparse = Some(SparseTokens::new(&mut rng, cfg));
                planner.f1_cross = Some(CrossAttnBlock::new(
                    &mut rng, cfg.c, cfg.c, cfg.c, cfg.heads, cfg.dropout,
                ));
                planner.f1_merge = Some(Linear::new(&mut rng, 2 * cfg.c, cfg.c));
            }
            Framework::F2 => {
                planner.f2_cross = Some(CrossAttnBlock::new(
                    &mut rng, cfg.c, cfg.d, cfg.c, cfg.heads, cfg.dropout,
                ));
            }
            Framework::F3 => {
                if cfg.layers > 0 {
                    let q_pos = Linear::new(&mut rng, cfg.n_q, cfg.c).w;
                    let k_pos = Linear::new(&mut rng, cfg.vt_tokens, cfg.c).w;
                    planner.f3_q_pos = Some(q_pos);
                    planner.f3_k_pos = Some(k_pos);
                    planner.f3_layers =
                        (0..cfg.layers).map(|_| DecoderLayer::new(&mut rng, cfg)).collect();
                }
            }
        }
        planner
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut out = Vec::new();
        let lin = |name: &str, l: &Linear, out: &mut Vec<Parameter>| {
            out.push(Parameter::new(format!("{name}.w"), l.w.clone()));
            out.push(Parameter::new(format!("{name}.b"), l.b.clone()));
        };
        lin("bev.patch", &self.bev.patch, &mut out);
        lin("bev.token", &self.bev.token, &mut out);
        lin("ego.fc1", &self.ego.fc1, &mut out);
        lin("ego.fc2", &self.ego.fc2, &mut out);
        self.base_cross.params("base_cross", &mut out);
        out.push(Parameter::new("head.cmd_embed", self.head.cmd_embed.clone()));
        lin("head.fc1", &self.head.fc1, &mut out);
        lin("head.fc2", &self.head.fc2, &mut out);
        if let Some(g) = &self.gate {
            lin("gate.vt_proj", &g.vt_proj, &mut out);
            lin("gate.fc1", &g.fc1, &mut out);
            lin("gate.fc2", &g.fc2, &mut out);
        }
        if let Some(s) = &self.sparse {
            lin("sparse.sel", &s.sel, &mut out);
            s.self_attn.params("sparse.self_attn", &mut out);
        }
        if let Some(c) = &self.f1_cross {
            c.params("f1_cross", &mut out);
        }
        if let Some(m) = &self.f1_merge {
            lin("f1_merge", m, &mut out);
        }
        if let Some(c) = &self.f2_cross {
            c.params("f2_cross", &mut out);
        }
        if let Some(p) = &self.f3_q_pos {
            out.push(Parameter::new("f3.q_pos", p.clone()));
        }
        if let Some(p) = &self.f3_k_pos {
            out.push(Parameter::new("f3.k_pos", p.clone()));
        }
        for (i, layer) in self.f3_layers.iter().enumerate() {
            let p = format!("f3.layer{i}");
            out.push(Parameter::new(format!("{p}.ln1.gain"), layer.ln1.gain.clone()));
            out.push(Parameter::new(format!("{p}.ln1.bias"), layer.ln1.bias.clone()));
            layer.self_attn.params(&format!("{p}.self_attn"), &mut out);
            out.push(Parameter::new(format!("{p}.ln2.gain"), layer.ln2.gain.clone()));
            out.push(Parameter::new(format!("{p}.ln2.bias"), layer.ln2.bias.clone()));
            layer.cross_attn.params(&format!("{p}.cross_attn"), &mut out);
            out.push(Parameter::new(format!("{p}.ln3.gain"), layer.ln3.gain.clone()));
            out.push(Parameter::new(format!("{p}.ln3.bias"), layer.ln3.bias.clone()));
            lin(&format!("{p}.ff1"), &layer.ff1, &mut out);
            lin(&format!("{p}.ff2"), &layer.ff2, &mut out);
        }
        out
    }

    /// Predicted waypoints [t, 2] in meters.
    pub fn forward(
        &self,
        scene: &Scene,
        v_t: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        if self.framework != Framework::Baseline && v_t.shape() != vec![1, self.cfg.d] {
            return Err(Error::Input(format!(
                "cognition feature shape {:?}, expected [1, {}]",
                v_t.shape(),
                self.cfg.d
            )));
        }
        let (b_t, v_ts) = self.bev.forward(scene)?;
        let q_ego = self.ego.forward(scene)?;
        let f_plan = match self.framework {
            Framework::Baseline => {
                self.base_cross.forward(&q_ego, &v_ts, None, None, rng.as_deref_mut())?
            }
            Framework::F1 => {
                let (b_brain, _) = self.gate.as_ref().unwrap().forward(&b_t, v_t)?;
                let (s_t, _, _) =
                    self.sparse.as_ref().unwrap().forward(&b_brain, rng.as_deref_mut())?;
                let f_b = self.f1_cross.as_ref().unwrap().forward(
                    &q_ego,
                    &s_t,
                    None,
                    None,
                    rng.as_deref_mut(),
                )?;
                let f_s =
                    self.base_cross.forward(&q_ego, &v_ts, None, None, rng.as_deref_mut())?;
                let merged = Tensor::concat(&[f_s, f_b], 1)?;
                self.f1_merge.as_ref().unwrap().forward(&merged)?
            }
            Framework::F2 => {
                let q_new = self.f2_cross.as_ref().unwrap().forward(
                    &q_ego,
                    v_t,
                    None,
                    None,
                    rng.as_deref_mut(),
                )?;
                self.base_cross.forward(&q_new, &v_ts, None, None, rng.as_deref_mut())?
            }
            Framework::F3 => {
                let mut f =
                    self.base_cross.forward(&q_ego, &v_ts, None, None, rng.as_deref_mut())?;
                if !self.f3_layers.is_empty() {
                    if self.cfg.d % self.cfg.vt_tokens != 0 {
                        return Err(Error::Config(format!(
                            "vt_tokens {} must divide the cognition dim {}",
                            self.cfg.vt_tokens, self.cfg.d
                        )));
                    }
                    let tokens =
                        v_t.reshape(vec![self.cfg.vt_tokens, self.cfg.d / self.cfg.vt_tokens])?;
                    let q_pos = self.f3_q_pos.as_ref().unwrap();
                    let k_pos = self.f3_k_pos.as_ref().unwrap();
                    for layer in &self.f3_layers {
                        f = layer.forward(&f, &tokens, q_pos, k_pos, rng.as_deref_mut())?;
                    }
                }
                f
            }
        };
        self.head.forward(&f_plan, scene.command)
    }
}

/// Frozen cognition feature for a scene: the Stage-1 encoder applied to the
/// rendered camera view, detached so no gradient can reach it.
pub fn cognition_feature(encoder: &VideoEncoder, scene: &Scene) -> Result<Tensor> {
    Ok(encoder.embed(&render_camera(scene))?.detach())
}

#[derive(Clone, Debug)]
pub struct Stage2Config {
    pub framework: Framework,
    pub fusion: FusionCfg,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// weight of the soft collision penalty next to the unit-weight L2 term
    pub collision_weight: f64,
    /// stop once val L2 falls to this fraction of the first epoch's value
    pub stop_at_fraction: Option<f64>,
    /// ablation arm: also update the Stage-1 video encoder instead of
    /// treating its output as a fixed feature
    pub unfreeze_encoder: bool,
}

impl Stage2Config {
    pub fn new(framework: Framework, d: usize, seed: u64) -> Self {
        Stage2Config {
            framework,
            fusion: FusionCfg::for_framework(framework, d),
            lr: 1e-3,
            weight_decay: 0.0,
            epochs: 50,
            batch: 8,
            seed,
            val_fraction: 0.2,
            collision_weight: 0.5,
            stop_at_fraction: None,
            unfreeze_encoder: false,
        }
    }
}

pub struct Stage2Result {
    pub planner: Planner,
    /// (train loss, val average L2) per epoch; entry 0 is pre-training
    pub log: Vec<(f64, f64)>,
    pub init_val_l2: f64,
    pub final_val_l2: f64,
}

fn scene_loss(
    planner: &Planner,
    scene: &Scene,
    v_t: &Tensor,
    collision_weight: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor> {
    let pred = planner.forward(scene, v_t, rng)?;
    let target: Vec<f64> = scene.expert_traj.iter().flatten().copied().collect();
    let target = Tensor::new(vec![planner.cfg.t, 2], target)?;
    let mse = pred.sub(&target)?.square().mean_all();
    if collision_weight == 0.0 {
        return Ok(mse);
    }
    let grid = &scene.grid;
    // waypoints in continuous cell coordinates for occupancy sampling
    let origin = Tensor::new(vec![1, 2], vec![grid.origin.0, grid.origin.1])?;
    let cells = pred.sub(&origin)?.scale(1.0 / grid.resolution).add_scalar(-0.5);
    let field: Vec<f64> = grid.occupancy.iter().map(|&b| b as u8 as f64).collect();
    let occ = crate::tensor::nn::sample_field(&cells, &field, grid.height, grid.width)?;
    mse.add(&occ.sum_all().scale(collision_weight))
}

fn avg_l2(planner: &Planner, scenes: &[&Scene], v_ts: &[Tensor]) -> Result<f64> {
    let mut total = 0.0;
    for (scene, v_t) in scenes.iter().zip(v_ts) {
        let pred = planner.forward(scene, v_t, None)?;
        let data = pred.data();
        let mut per_scene = 0.0;
        for (k, wp) in scene.expert_traj.iter().enumerate() {
            per_scene +=
                ((data[2 * k] - wp[0]).powi(2) + (data[2 * k + 1] - wp[1]).powi(2)).sqrt();
        }
        total += per_scene / scene.expert_traj.len() as f64;
    }
    Ok(total / scenes.len() as f64)
}

/// Imitation training of the planner against expert waypoints. Unless
/// `unfreeze_encoder` is set, the Stage-1 encoder only provides detached
/// precomputed cognition features, so its parameters cannot change.
pub fn stage2_train(
    scenes: &[Scene],
    encoder: &VideoEncoder,
    cfg: &Stage2Config,
) -> Result<Stage2Result> {
    if scenes.len() < 5 {
        return Err(Error::Input(format!("need at least 5 scenes, got {}", scenes.len())));
    }
    if cfg.fusion.d != encoder.d {
        return Err(Error::Config(format!(
            "fusion dim {} does not match the Stage-1 encoder dim {}",
            cfg.fusion.d, encoder.d
        )));
    }
    let cameras: Vec<crate::synth::VideoClip> = scenes.iter().map(render_camera).collect();
    // with a frozen encoder the cognition features are fixed, compute once
    let frozen_vts: Vec<Tensor> = cameras
        .iter()
        .map(|c| Ok(encoder.embed(c)?.detach()))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((scenes.len() as f64 * cfg.val_fraction) as usize).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_scenes: Vec<&Scene> = val_idx.iter().map(|&i| &scenes[i]).collect();
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let planner = Planner::new(cfg.seed.wrapping_add(1), cfg.framework, cfg.fusion.clone());
    let mut params = planner.params();
    if cfg.unfreeze_encoder {
        params.extend(encoder.params());
    }
    let mut opt = Optimizer::adam(cfg.lr, cfg.weight_decay);

    // unfrozen eval features must track the current encoder weights
    let eval_vts = |enc: &VideoEncoder| -> Result<Vec<Tensor>> {
        if cfg.unfreeze_encoder {
            val_idx.iter().map(|&i| Ok(enc.embed(&cameras[i])?.detach())).collect()
        } else {
            Ok(val_idx.iter().map(|&i| frozen_vts[i].clone()).collect())
        }
    };
    let val_vts = eval_vts(encoder)?;

    let init_val_l2 = avg_l2(&planner, &val_scenes, &val_vts)?;
    let mut log = vec![(f64::NAN, init_val_l2)];
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut batches = 0;
        for chunk in train_idx.chunks(cfg.batch) {
            let mut losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let v_t = if cfg.unfreeze_encoder {
                    encoder.embed(&cameras[i])?
                } else {
                    frozen_vts[i].clone()
                };
                losses.push(scene_loss(
                    &planner,
                    &scenes[i],
                    &v_t,
                    cfg.collision_weight,
                    Some(&mut rng),
                )?);
            }
            let stacked = Tensor::concat(
                &losses.iter().map(|l| l.reshape(vec![1, 1])).collect::<Result<Vec<_>>>()?,
                0,
            )?;
            let loss = stacked.mean_all();
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Training(format!("loss diverged to {value} at epoch {epoch}")));
            }
            loss.backward()?;
            opt.step(&params)?;
            train_loss += value;
            batches += 1;
        }
        let val_l2 = avg_l2(&planner, &val_scenes, &eval_vts(encoder)?)?;
        if !val_l2.is_finite() {
            return Err(Error::Training(format!("validation L2 diverged at epoch {epoch}")));
        }
        log.push((train_loss / batches as f64, val_l2));
        if best.as_ref().map_or(true, |(b, _)| val_l2 < *b) {
            best = Some((val_l2, params.iter().map(|p| p.tensor.data()).collect()));
        }
        if let Some(frac) = cfg.stop_at_fraction {
            if val_l2 <= frac * init_val_l2 {
                break;
            }
        }
    }
    let (final_val_l2, snapshot) = best.expect("at least one epoch ran");
    for (p, data) in params.iter().zip(snapshot) {
        p.tensor.set_data(data);
        p.tensor.zero_grad();
    }
    Ok(Stage2Result { planner, log, init_val_l2, final_val_l2 })
}
