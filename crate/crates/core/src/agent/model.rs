use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState};
use crate::error::{Error, Result};
use crate::nn::{dropout, BoundParams, Init, LayerNorm, Linear, LstmCell, Mode, ParamId, ParamSet, PointwiseConv, RngStream, TemporalConv};
use crate::perception::{et_features, nt_features, ot_features, ThinkingInputs, ET_FEATURES, NT_FEATURES, OT_FEATURES};
use crate::tensor::{Reduction, Tape, Tensor, Var};

use super::target::TargetCode;

pub const THINKING_NAMES: [&str; 5] = ["IT", "ST", "NT", "ET", "OT"];
const IT: usize = 0;
const ST: usize = 1;
const NT: usize = 2;
const ET: usize = 3;
const OT: usize = 4;
const TCN_KERNELS: [usize; 3] = [1, 3, 5];

/// Which thinking branches a model carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Thinkings {
    pub it: bool,
    pub st: bool,
    pub nt: bool,
    pub et: bool,
    pub ot: bool,
}

impl Default for Thinkings {
    fn default() -> Self {
        Thinkings::ALL
    }
}

impl Thinkings {
    pub const ALL: Thinkings = Thinkings {
        it: true,
        st: true,
        nt: true,
        et: true,
        ot: true,
    };
    pub const IT_ONLY: Thinkings = Thinkings {
        it: true,
        st: false,
        nt: false,
        et: false,
        ot: false,
    };

    pub fn as_array(&self) -> [bool; 5] {
        [self.it, self.st, self.nt, self.et, self.ot]
    }

    pub fn count(&self) -> usize {
        self.as_array().iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_i: usize,
    pub d_s: usize,
    pub d_n: usize,
    pub d_e: usize,
    pub d_o: usize,
    pub d_z: usize,
    pub d_g: usize,
    pub lstm_hidden: usize,
    /// Output channels of the intuition encoder's pointwise convolution.
    pub it_channels: usize,
    /// Hidden width of the target gating network in navigation thinking.
    pub fe_hidden: usize,
    pub dropout: f64,
    /// Width of the fixed per-class appearance vectors in object rows.
    pub appearance_dim: usize,
    pub appearance_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_i: 64,
            d_s: 64,
            d_n: 64,
            d_e: 64,
            d_o: 64,
            d_z: 128,
            d_g: 256,
            lstm_hidden: 256,
            it_channels: 16,
            fe_hidden: 64,
            dropout: 0.3,
            appearance_dim: 16,
            appearance_seed: 0x5eed,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_i", self.d_i),
            ("d_s", self.d_s),
            ("d_n", self.d_n),
            ("d_e", self.d_e),
            ("d_o", self.d_o),
            ("d_z", self.d_z),
            ("d_g", self.d_g),
            ("lstm_hidden", self.lstm_hidden),
            ("it_channels", self.it_channels),
            ("fe_hidden", self.fe_hidden),
            ("appearance_dim", self.appearance_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d < 2) {
            return Err(Error::Config(format!("model dimension {name} must be at least 2")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.d_i, self.d_s, self.d_n, self.d_e, self.d_o]
    }
}

/// Structural choices that distinguish ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variant {
    pub thinkings: Thinkings,
    pub mtc: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Variant {
            thinkings: Thinkings::ALL,
            mtc: true,
        }
    }
}

#[derive(Clone, Debug)]
struct Intuition {
    conv: PointwiseConv,
    proj: Linear,
}

#[derive(Clone, Debug)]
struct Search {
    w: Linear,
    logits: ParamId,
}

#[derive(Clone, Debug)]
struct Navigation {
    tcn: Vec<TemporalConv>,
    f_nt: Linear,
    fe1: Linear,
    fe2: Linear,
}

#[derive(Clone, Debug)]
struct PoseMlp {
    l1: Linear,
    l2: Linear,
}

#[derive(Clone, Debug)]
struct Collaboration {
    z: Linear,
    gates: [Option<Linear>; 5],
}

/// Encoder outputs for one step. Disabled branches are `None`.
#[derive(Clone, Copy, Debug)]
pub struct ThinkingOutputs {
    pub raw: [Option<Var>; 5],
    pub gates: [Option<Var>; 5],
    pub recalibrated: [Option<Var>; 5],
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// `[1 × 6]` in [`Action::ALL`] order.
    pub logits: Var,
    pub value: Var,
    pub h: Var,
    pub c: Var,
    pub thinking: ThinkingOutputs,
}

/// The multiple-thinking actor-critic. Holds parameter handles only; the
/// values live in the [`ParamSet`] returned by [`MtModel::new`].
#[derive(Clone, Debug)]
pub struct MtModel {
    cfg: ModelConfig,
    variant: Variant,
    n_classes: usize,
    grid_channels: usize,
    intuition: Option<Intuition>,
    search: Option<Search>,
    navigation: Option<Navigation>,
    exploration: Option<PoseMlp>,
    obstacle: Option<PoseMlp>,
    mtc: Option<Collaboration>,
    norm: LayerNorm,
    fuse: Linear,
    lstm: LstmCell,
    actor: Linear,
    critic: Linear,
}

impl MtModel {
    pub fn new(cfg: &ModelConfig, variant: Variant, n_classes: usize, grid_channels: usize, seed: u64) -> Result<(MtModel, ParamSet)> {
        cfg.validate()?;
        if variant.thinkings.count() == 0 {
            return Err(Error::Config("at least one thinking branch must be enabled".into()));
        }
        if n_classes == 0 || grid_channels < 3 {
            return Err(Error::Config(format!(
                "model needs classes and a grid with at least 3 channels (got {n_classes}, {grid_channels})"
            )));
        }
        let mut params = ParamSet::new();
        let mut rng = RngStream::new(seed);
        let mut init = Init::new(&mut params, &mut rng);
        let on = variant.thinkings.as_array();
        let dims = cfg.dims();
        let cells = crate::env::GRID_SIZE * crate::env::GRID_SIZE;

        let intuition = if on[IT] {
            Some(Intuition {
                conv: PointwiseConv::new(&mut init, "it.conv", grid_channels, cfg.it_channels)?,
                proj: Linear::new(&mut init, "it.proj", cfg.it_channels * cells, cfg.d_i, true)?,
            })
        } else {
            None
        };
        let search = if on[ST] {
            Some(Search {
                w: Linear::new(&mut init, "st.embed", cfg.appearance_dim + 6, cfg.d_s, false)?,
                logits: init.zeros("st.attention", &[n_classes, n_classes])?,
            })
        } else {
            None
        };
        let navigation = if on[NT] {
            Some(Navigation {
                tcn: TCN_KERNELS
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| TemporalConv::new(&mut init, &format!("nt.tcn{j}"), NT_FEATURES, k))
                    .collect::<Result<_>>()?,
                f_nt: Linear::new(&mut init, "nt.f_nt", NT_FEATURES, cfg.d_n, true)?,
                fe1: Linear::new(&mut init, "nt.f_e1", n_classes, cfg.fe_hidden, true)?,
                fe2: Linear::new(&mut init, "nt.f_e2", cfg.fe_hidden, cfg.d_n, true)?,
            })
        } else {
            None
        };
        let exploration = if on[ET] {
            Some(PoseMlp {
                l1: Linear::new(&mut init, "et.l1", ET_FEATURES, cfg.d_e, true)?,
                l2: Linear::new(&mut init, "et.l2", cfg.d_e, cfg.d_e, true)?,
            })
        } else {
            None
        };
        let obstacle = if on[OT] {
            Some(PoseMlp {
                l1: Linear::new(&mut init, "ot.l1", OT_FEATURES, cfg.d_o, true)?,
                l2: Linear::new(&mut init, "ot.l2", cfg.d_o, cfg.d_o, true)?,
            })
        } else {
            None
        };
        let width: usize = (0..5).filter(|&k| on[k]).map(|k| dims[k]).sum();
        let mtc = if variant.mtc {
            let z = Linear::new(&mut init, "mtc.z", width, cfg.d_z, true)?;
            let mut gates: [Option<Linear>; 5] = Default::default();
            for k in (0..5).filter(|&k| on[k]) {
                let name = format!("mtc.gate_{}", THINKING_NAMES[k].to_lowercase());
                gates[k] = Some(Linear::new(&mut init, &name, cfg.d_z, dims[k], true)?);
            }
            Some(Collaboration { z, gates })
        } else {
            None
        };
        let norm = LayerNorm::new(&mut init, "policy.norm", width)?;
        let fuse = Linear::new(&mut init, "policy.fuse", width, cfg.d_g, true)?;
        let lstm = LstmCell::new(&mut init, "policy.lstm", cfg.d_g + n_classes, cfg.lstm_hidden)?;
        let actor = Linear::new(&mut init, "policy.actor", cfg.lstm_hidden, Action::COUNT, true)?;
        let critic = Linear::new(&mut init, "policy.critic", cfg.lstm_hidden, 1, true)?;
        let model = MtModel {
            cfg: cfg.clone(),
            variant,
            n_classes,
            grid_channels,
            intuition,
            search,
            navigation,
            exploration,
            obstacle,
            mtc,
            norm,
            fuse,
            lstm,
            actor,
            critic,
        };
        Ok((model, params))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn grid_channels(&self) -> usize {
        self.grid_channels
    }

    /// Zero recurrent state `(h, c)`.
    pub fn initial_state(&self) -> (Tensor, Tensor) {
        let z = Tensor::zeros(&[1, self.cfg.lstm_hidden]);
        (z.clone(), z)
    }

    /// `δ(Conv(IT_i))`, flattened and projected to `d_I`.
    pub fn encode_intuition(&self, tape: &mut Tape, p: &BoundParams, it: &Tensor, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        let enc = self.intuition.as_ref().ok_or_else(|| disabled("IT"))?;
        let x = tape.constant(it.clone());
        let y = enc.conv.forward(tape, p, x)?;
        let y = tape.relu(y);
        let n = tape.value(y).numel();
        let flat = tape.reshape(y, &[1, n])?;
        let o = enc.proj.forward(tape, p, flat)?;
        let o = tape.relu(o);
        dropout(tape, o, self.cfg.dropout, mode, rng)
    }

    /// Object rows encoded by `δ(ST_i W)` and summed with target-conditioned
    /// attention weights.
    pub fn encode_search(&self, tape: &mut Tape, p: &BoundParams, st: &Tensor, target: &TargetCode, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        let enc = self.search.as_ref().ok_or_else(|| disabled("ST"))?;
        let coef = self.attention_coefficients(tape, p, target)?;
        let x = tape.constant(st.clone());
        let e = enc.w.forward(tape, p, x)?;
        let e = tape.relu(e);
        let o = tape.matmul(coef, e)?;
        dropout(tape, o, self.cfg.dropout, mode, rng)
    }

    /// `[1 × N]` attention over object rows for the given target: the
    /// target's row of the row-softmaxed logits, or a similarity-weighted
    /// mixture of rows with negative similarities clamped to zero.
    pub fn attention_coefficients(&self, tape: &mut Tape, p: &BoundParams, target: &TargetCode) -> Result<Var> {
        let enc = self.search.as_ref().ok_or_else(|| disabled("ST"))?;
        let pos: Vec<f64> = target.vector.iter().map(|&s| s.max(0.0)).collect();
        let total: f64 = pos.iter().sum();
        if total <= 0.0 {
            return Err(Error::Contract("target code has no positive similarity".into()));
        }
        let mix = tape.constant(Tensor::row(pos.iter().map(|s| s / total).collect())?);
        let att = tape.softmax_rows(p[enc.logits])?;
        tape.matmul(mix, att)
    }

    /// `Hᵀ·F_NT(ÑT_i) ⊙ F_E(E)`, zero when nothing has been sighted.
    #[allow(clippy::too_many_arguments)]
    pub fn encode_navigation(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        nt: &[[f64; crate::perception::NT_RAW]],
        current: &AgentState,
        target: Var,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Var> {
        let enc = self.navigation.as_ref().ok_or_else(|| disabled("NT"))?;
        let Some(feat) = nt_features(nt, current) else {
            return Ok(tape.constant(Tensor::zeros(&[1, self.cfg.d_n])));
        };
        let x = tape.constant(feat);
        let mut h = enc.tcn[0].forward(tape, p, x)?;
        for conv in &enc.tcn[1..] {
            let hj = conv.forward(tape, p, x)?;
            h = tape.add(h, hj)?;
        }
        let f = enc.f_nt.forward(tape, p, x)?;
        let f = tape.relu(f);
        let ht = tape.transpose(h)?;
        let agg = tape.matmul(ht, f)?;
        let g = enc.fe1.forward(tape, p, target)?;
        let g = tape.relu(g);
        let g = enc.fe2.forward(tape, p, g)?;
        let g = tape.sigmoid(g);
        let o = tape.mul(agg, g)?;
        dropout(tape, o, self.cfg.dropout, mode, rng)
    }

    /// Row mean of a two-layer network over polar, egocentric history rows.
    pub fn encode_exploration(&self, tape: &mut Tape, p: &BoundParams, et: &[[f64; 4]], current: &AgentState) -> Result<Var> {
        let enc = self.exploration.as_ref().ok_or_else(|| disabled("ET"))?;
        let feat = et_features(et, current)?;
        pose_mlp_mean(tape, p, enc, feat)
    }

    /// As exploration, over blocked-cell positions; zero with no collisions.
    pub fn encode_obstacle(&self, tape: &mut Tape, p: &BoundParams, ot: &[[f64; 2]], current: &AgentState) -> Result<Var> {
        let enc = self.obstacle.as_ref().ok_or_else(|| disabled("OT"))?;
        match ot_features(ot, current) {
            Some(feat) => pose_mlp_mean(tape, p, enc, feat),
            None => Ok(tape.constant(Tensor::zeros(&[1, self.cfg.d_o]))),
        }
    }

    /// Runs every enabled encoder.
    #[allow(clippy::too_many_arguments)]
    pub fn encode(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        inputs: &ThinkingInputs,
        current: &AgentState,
        target: &TargetCode,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<[Option<Var>; 5]> {
        let on = self.variant.thinkings.as_array();
        let mut raw = [None; 5];
        if on[IT] {
            raw[IT] = Some(self.encode_intuition(tape, p, &inputs.it, mode, rng)?);
        }
        if on[ST] {
            raw[ST] = Some(self.encode_search(tape, p, &inputs.st, target, mode, rng)?);
        }
        if on[NT] {
            let t = tape.constant(target.as_row());
            raw[NT] = Some(self.encode_navigation(tape, p, &inputs.nt, current, t, mode, rng)?);
        }
        if on[ET] {
            raw[ET] = Some(self.encode_exploration(tape, p, &inputs.et, current)?);
        }
        if on[OT] {
            raw[OT] = Some(self.encode_obstacle(tape, p, &inputs.ot, current)?);
        }
        Ok(raw)
    }

    /// Holistic feature `Z` and per-branch sigmoid gates; without the
    /// collaboration module the outputs pass through unchanged.
    pub fn recalibrate(&self, tape: &mut Tape, p: &BoundParams, raw: [Option<Var>; 5]) -> Result<ThinkingOutputs> {
        let Some(mtc) = &self.mtc else {
            return Ok(ThinkingOutputs {
                raw,
                gates: [None; 5],
                recalibrated: raw,
            });
        };
        let parts: Vec<Var> = raw.iter().flatten().copied().collect();
        let cat = tape.concat(&parts, 1)?;
        let z = mtc.z.forward(tape, p, cat)?;
        let z = tape.relu(z);
        let mut gates = [None; 5];
        let mut recalibrated = [None; 5];
        for k in 0..5 {
            if let (Some(x), Some(lin)) = (raw[k], &mtc.gates[k]) {
                let g = lin.forward(tape, p, z)?;
                let g = tape.sigmoid(g);
                gates[k] = Some(g);
                recalibrated[k] = Some(tape.mul(x, g)?);
            }
        }
        Ok(ThinkingOutputs {
            raw,
            gates,
            recalibrated,
        })
    }

    /// Fusion, recurrent step and the actor and critic heads.
    pub fn policy(&self, tape: &mut Tape, p: &BoundParams, out: &ThinkingOutputs, target: &TargetCode, h: Var, c: Var) -> Result<(Var, Var, Var, Var)> {
        let parts: Vec<Var> = out.recalibrated.iter().flatten().copied().collect();
        let cat = tape.concat(&parts, 1)?;
        let normed = self.norm.forward(tape, p, cat)?;
        let g = self.fuse.forward(tape, p, normed)?;
        let g = tape.relu(g);
        let t = tape.constant(target.as_row());
        let x = tape.concat(&[g, t], 1)?;
        let (h2, c2) = self.lstm.step(tape, p, x, h, c)?;
        let logits = self.actor.forward(tape, p, h2)?;
        let value = self.critic.forward(tape, p, h2)?;
        Ok((logits, value, h2, c2))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        inputs: &ThinkingInputs,
        current: &AgentState,
        target: &TargetCode,
        h: Var,
        c: Var,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<StepOutput> {
        if target.vector.len() != self.n_classes {
            return Err(Error::dim(
                "forward",
                format!("target code has {} entries for {} classes", target.vector.len(), self.n_classes),
            ));
        }
        let raw = self.encode(tape, p, inputs, current, target, mode, rng)?;
        let thinking = self.recalibrate(tape, p, raw)?;
        let (logits, value, h, c) = self.policy(tape, p, &thinking, target, h, c)?;
        Ok(StepOutput {
            logits,
            value,
            h,
            c,
            thinking,
        })
    }
}

fn pose_mlp_mean(tape: &mut Tape, p: &BoundParams, enc: &PoseMlp, feat: Tensor) -> Result<Var> {
    let x = tape.constant(feat);
    let y = enc.l1.forward(tape, p, x)?;
    let y = tape.relu(y);
    let y = enc.l2.forward(tape, p, y)?;
    let m = tape.reduce(y, 0, Reduction::Mean)?;
    let d = tape.value(m).numel();
    tape.reshape(m, &[1, d])
}

fn disabled(name: &str) -> Error {
    Error::Contract(format!("{name} thinking is disabled in this model"))
}

/// Mean of each recalibrated output in `IT, ST, NT, ET, OT` order; disabled
/// branches report 0.
pub fn activation_means(tape: &Tape, out: &ThinkingOutputs) -> [f64; 5] {
    let mut means = [0.0; 5];
    for (k, v) in out.recalibrated.iter().enumerate() {
        if let Some(v) = v {
            let d = tape.value(*v).data();
            means[k] = d.iter().sum::<f64>() / d.len() as f64;
        }
    }
    means
}
