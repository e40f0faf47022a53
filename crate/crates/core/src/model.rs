//! Trainable model stacks: a declarative kind plus a built tape, parameter
//! store, and loss graph.
//!
//! Single-module kinds (two inputs, one output) cover the multiplication
//! benchmark; the stacked kind (additive selection into a two-wide
//! multiplicative head) covers the subset-sum product benchmark. Each model
//! owns one static graph with input leaves for the batch, the target, the
//! regularisation scale, and (when stochastic) the per-step noise draws, so
//! a training step is bind-forward-backward with no graph rebuilding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    build_mlp, build_nau, build_nmu, build_reg_penalty, build_snmu, clamp_weights, init_weights,
    mlp_forward, nau_forward, nmu_forward, sample_noise_shaped, MlpParams, NoiseConfig, WeightInit,
};
use crate::matrix::Matrix;
use crate::stochastic::STG_SIGMA;
use crate::tape::{Bindings, Gradients, NodeId, Tape};

/// Width of the additive layer in the stacked kinds: two windows are summed
/// and their sums multiplied.
pub const STACK_HIDDEN: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Plain multiplicative unit.
    Nmu,
    /// Stochastic denoising multiplicative unit.
    Snmu { noise: NoiseConfig },
    /// Multiplicative unit with stochastic-gate weights and an L0 penalty.
    StgNmu { lambda_l0: f64 },
    /// One-hidden-layer ReLU baseline.
    Mlp { width: usize },
    /// Additive selection layer into a multiplicative head.
    NauNmu,
    /// Same stack with the stochastic head.
    NauSnmu { noise: NoiseConfig },
}

impl ModelKind {
    /// Stable identifier used in file names and summary keys.
    pub fn id(&self) -> String {
        match self {
            ModelKind::Nmu => "nmu".to_string(),
            ModelKind::Snmu { noise } => format!("snmu_{}", noise_slug(noise)),
            ModelKind::StgNmu { lambda_l0 } => format!("stgnmu_{}", num_slug(*lambda_l0)),
            ModelKind::Mlp { width } => format!("mlp{}", width),
            ModelKind::NauNmu => "nau_nmu".to_string(),
            ModelKind::NauSnmu { noise } => format!("nau_snmu_{}", noise_slug(noise)),
        }
    }

    pub fn noise(&self) -> NoiseConfig {
        match self {
            ModelKind::Snmu { noise } | ModelKind::NauSnmu { noise } => *noise,
            _ => NoiseConfig::None,
        }
    }

    /// Identity noise makes the stochastic unit mathematically equal to the
    /// plain unit, so those kinds build the plain graph (exact semantics,
    /// and the equal-trace property holds bit for bit).
    fn noise_is_identity(&self) -> bool {
        match self.noise() {
            NoiseConfig::None => true,
            NoiseConfig::Fixed { lo, hi } => lo == 1.0 && hi == 1.0,
            NoiseConfig::BatchStat => false,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Nmu => write!(f, "nmu"),
            ModelKind::Snmu { noise } => write!(f, "snmu({})", noise),
            ModelKind::StgNmu { lambda_l0 } => write!(f, "stgnmu(l0={})", lambda_l0),
            ModelKind::Mlp { width } => write!(f, "mlp({})", width),
            ModelKind::NauNmu => write!(f, "nau-nmu"),
            ModelKind::NauSnmu { noise } => write!(f, "nau-snmu({})", noise),
        }
    }
}

fn noise_slug(n: &NoiseConfig) -> String {
    match n {
        NoiseConfig::None => "none".to_string(),
        NoiseConfig::Fixed { lo, hi } => format!("u{}_{}", num_slug(*lo), num_slug(*hi)),
        NoiseConfig::BatchStat => "batch".to_string(),
    }
}

fn num_slug(v: f64) -> String {
    let s = format!("{}", v);
    s.replace('-', "m").replace('.', "p")
}

/// One stored parameter: current value, its clamp interval (applied after
/// every optimizer step), and its leaf on the tape.
#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Matrix,
    pub clamp: Option<(f64, f64)>,
    pub node: NodeId,
}

/// A built model: tape, leaves, and parameter store.
pub struct Model {
    pub kind: ModelKind,
    pub input_size: usize,
    pub params: Vec<ParamEntry>,
    tape: Tape,
    /// Noise leaf for the stochastic unit (bound per step).
    noise: Option<NodeId>,
    /// Shape of the noise matrix: (batch-like, columns) where batch-like
    /// follows the batch dimension of the noise's layer input.
    noise_cols: usize,
    /// Gate-noise leaf for the stochastic-gate unit.
    eps: Option<NodeId>,
    /// Node evaluated as the prediction.
    pred: NodeId,
    mse: NodeId,
    loss: NodeId,
}

pub struct StepOutput {
    pub loss: f64,
    pub mse: f64,
    pub grads: Gradients,
}

impl Model {
    /// Build the graph and draw initial parameters.
    pub fn init(kind: ModelKind, input_size: usize, rng: &mut impl rand::Rng) -> Result<Model> {
        let mut t = Tape::new();
        let x = t.input("x");
        let target = t.input("target");
        let lambda = t.input("lambda");
        let mut params = Vec::new();
        let mut noise = None;
        let mut noise_cols = 0;
        let mut eps = None;
        let mut reg_nodes: Vec<NodeId> = Vec::new();
        let mut extra_penalty: Option<NodeId> = None;

        let pred = match kind {
            ModelKind::Nmu => {
                let w = t.param("w");
                params.push(ParamEntry {
                    name: "w".to_string(),
                    value: init_weights(input_size, 1, WeightInit::Uniform { lo: 0.25, hi: 0.75 }, rng),
                    clamp: Some((0.0, 1.0)),
                    node: w,
                });
                reg_nodes.push(w);
                build_nmu(&mut t, x, w, 1)
            }
            ModelKind::Snmu { .. } => {
                let w = t.param("w");
                params.push(ParamEntry {
                    name: "w".to_string(),
                    value: init_weights(input_size, 1, WeightInit::Uniform { lo: 0.25, hi: 0.75 }, rng),
                    clamp: Some((0.0, 1.0)),
                    node: w,
                });
                reg_nodes.push(w);
                if kind.noise_is_identity() {
                    build_nmu(&mut t, x, w, 1)
                } else {
                    let n = t.input("noise");
                    noise = Some(n);
                    noise_cols = input_size;
                    build_snmu(&mut t, x, w, n, 1)
                }
            }
            ModelKind::StgNmu { .. } => {
                let mu = t.param("w_mu");
                // Gate means start at the midpoint; they are never clamped,
                // only the effective weight is.
                params.push(ParamEntry {
                    name: "w_mu".to_string(),
                    value: Matrix::filled(input_size, 1, 0.5),
                    clamp: None,
                    node: mu,
                });
                let e = t.input("eps");
                eps = Some(e);
                let shifted = t.add(mu, e);
                let w_eff = t.clamp(shifted, 0.0, 1.0);
                reg_nodes.push(w_eff);
                // Expected-open-gates penalty: sum Phi(mu / sigma).
                let scaled = t.mul_scalar(mu, 1.0 / STG_SIGMA);
                let phi = t.norm_cdf(scaled);
                let col = t.sum_rows(phi);
                let tot = t.sum_cols(col);
                let l0 = match kind {
                    ModelKind::StgNmu { lambda_l0 } => t.mul_scalar(tot, lambda_l0),
                    _ => unreachable!(),
                };
                extra_penalty = Some(l0);
                build_nmu(&mut t, x, w_eff, 1)
            }
            ModelKind::Mlp { width } => {
                let w1 = t.param("w1");
                let b1 = t.param("b1");
                let w2 = t.param("w2");
                let b2 = t.param("b2");
                params.push(ParamEntry {
                    name: "w1".to_string(),
                    value: init_weights(input_size, width, WeightInit::XavierUniform, rng),
                    clamp: None,
                    node: w1,
                });
                params.push(ParamEntry {
                    name: "b1".to_string(),
                    value: Matrix::zeros(1, width),
                    clamp: None,
                    node: b1,
                });
                params.push(ParamEntry {
                    name: "w2".to_string(),
                    value: init_weights(width, 1, WeightInit::XavierUniform, rng),
                    clamp: None,
                    node: w2,
                });
                params.push(ParamEntry {
                    name: "b2".to_string(),
                    value: Matrix::zeros(1, 1),
                    clamp: None,
                    node: b2,
                });
                build_mlp(&mut t, x, w1, b1, w2, b2)
            }
            ModelKind::NauNmu | ModelKind::NauSnmu { .. } => {
                let wa = t.param("w_nau");
                let wm = t.param("w_nmu");
                params.push(ParamEntry {
                    name: "w_nau".to_string(),
                    value: init_weights(input_size, STACK_HIDDEN, WeightInit::XavierUniform, rng),
                    clamp: Some((-1.0, 1.0)),
                    node: wa,
                });
                params.push(ParamEntry {
                    name: "w_nmu".to_string(),
                    value: init_weights(STACK_HIDDEN, 1, WeightInit::Uniform { lo: 0.25, hi: 0.75 }, rng),
                    clamp: Some((0.0, 1.0)),
                    node: wm,
                });
                reg_nodes.push(wa);
                reg_nodes.push(wm);
                let z = build_nau(&mut t, x, wa);
                if matches!(kind, ModelKind::NauNmu) || kind.noise_is_identity() {
                    build_nmu(&mut t, z, wm, 1)
                } else {
                    let n = t.input("noise");
                    noise = Some(n);
                    noise_cols = STACK_HIDDEN;
                    build_snmu(&mut t, z, wm, n, 1)
                }
            }
        };

        // Loss = MSE + lambda * sum of per-matrix discretisation penalties
        // (+ the gate penalty when present).
        let diff = t.sub(pred, target);
        let sq = t.mul(diff, diff);
        let mse = t.mean_all(sq);
        let mut loss = mse;
        if !reg_nodes.is_empty() {
            let mut pen: Option<NodeId> = None;
            for &w in &reg_nodes {
                let p = build_reg_penalty(&mut t, w);
                pen = Some(match pen {
                    None => p,
                    Some(acc) => t.add(acc, p),
                });
            }
            let scaled = t.mul(lambda, pen.expect("non-empty"));
            loss = t.add(loss, scaled);
        }
        if let Some(p) = extra_penalty {
            loss = t.add(loss, p);
        }
        t.set_output(loss);

        Ok(Model {
            kind,
            input_size,
            params,
            tape: t,
            noise,
            noise_cols,
            eps,
            pred,
            mse,
            loss,
        })
    }

    pub fn needs_noise(&self) -> bool {
        self.noise.is_some()
    }

    pub fn needs_gate_noise(&self) -> bool {
        self.eps.is_some()
    }

    /// The layer input the batch-statistic noise reads its spread from:
    /// the raw batch for single-module kinds, the additive layer's output
    /// for the stacked kind.
    pub fn noise_layer_input(&self, x: &Matrix) -> Result<Matrix> {
        match self.kind {
            ModelKind::NauSnmu { .. } => nau_forward(x, &self.param("w_nau")?.value),
            _ => Ok(x.clone()),
        }
    }

    fn param(&self, name: &str) -> Result<&ParamEntry> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }

    /// One training step's forward and backward pass. `noise` and `eps` must
    /// be provided exactly when the model declares it needs them.
    pub fn step(
        &mut self,
        x: &Matrix,
        y: &Matrix,
        lambda: f64,
        noise: Option<Matrix>,
        eps: Option<Matrix>,
    ) -> Result<StepOutput> {
        let mut b = Bindings::new()
            .set("x", x.clone())
            .set("target", y.clone())
            .set("lambda", Matrix::filled(1, 1, lambda));
        match (self.noise, noise) {
            (Some(_), Some(n)) => {
                b.insert("noise", n);
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::invalid("model needs a noise matrix")),
            (None, Some(_)) => return Err(Error::invalid("model takes no noise matrix")),
        }
        match (self.eps, eps) {
            (Some(_), Some(e)) => {
                b.insert("eps", e);
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::invalid("model needs gate noise")),
            (None, Some(_)) => return Err(Error::invalid("model takes no gate noise")),
        }
        for p in &self.params {
            b.insert(&p.name, p.value.clone());
        }
        let loss_val = self.tape.forward(&b)?;
        let loss = loss_val.at(0, 0);
        let mse = self
            .tape
            .value(self.mse)
            .ok_or(Error::NoForwardState)?
            .at(0, 0);
        let grads = self.tape.backward(self.loss)?;
        Ok(StepOutput { loss, mse, grads })
    }

    /// Sample the stochastic unit's noise for one step, shaped for the
    /// current batch. For batch-statistic noise the spread is taken from the
    /// layer's own input (the additive output in the stacked kind).
    pub fn sample_step_noise(
        &self,
        x: &Matrix,
        rng: &mut impl rand::Rng,
    ) -> Result<Option<Matrix>> {
        if self.noise.is_none() {
            return Ok(None);
        }
        let cfg = self.kind.noise();
        let layer_input = match cfg {
            NoiseConfig::BatchStat => Some(self.noise_layer_input(x)?),
            _ => None,
        };
        Ok(Some(sample_noise_shaped(
            &cfg,
            x.rows(),
            self.noise_cols,
            layer_input.as_ref(),
            rng,
        )))
    }

    /// Inference-mode prediction with the current parameters (stochastic
    /// units act as their plain counterparts, gates use their means).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self.kind {
            ModelKind::Nmu | ModelKind::Snmu { .. } => nmu_forward(x, &self.param("w")?.value),
            ModelKind::StgNmu { .. } => {
                let w = clamp_weights(&self.param("w_mu")?.value, 0.0, 1.0);
                nmu_forward(x, &w)
            }
            ModelKind::Mlp { .. } => {
                let p = MlpParams {
                    w1: self.param("w1")?.value.clone(),
                    b1: self.param("b1")?.value.clone(),
                    w2: self.param("w2")?.value.clone(),
                    b2: self.param("b2")?.value.clone(),
                };
                mlp_forward(x, &p)
            }
            ModelKind::NauNmu | ModelKind::NauSnmu { .. } => {
                let z = nau_forward(x, &self.param("w_nau")?.value)?;
                nmu_forward(&z, &self.param("w_nmu")?.value)
            }
        }
    }

    pub fn mse_against(&self, x: &Matrix, y: &Matrix) -> Result<f64> {
        let pred = self.predict(x)?;
        let diff = pred.zip_map(y, "mse_against", |a, b| {
            let d = a - b;
            d * d
        })?;
        Ok(diff.mean_all())
    }

    /// The weight matrices whose entries should be discrete, as reported for
    /// sparsity measurement. Gate units report their clamped means; the MLP
    /// has none.
    pub fn nalm_weights(&self) -> Vec<(String, Matrix)> {
        match self.kind {
            ModelKind::Nmu | ModelKind::Snmu { .. } => self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
            ModelKind::StgNmu { .. } => vec![(
                "w".to_string(),
                clamp_weights(&self.params[0].value, 0.0, 1.0),
            )],
            ModelKind::Mlp { .. } => Vec::new(),
            ModelKind::NauNmu | ModelKind::NauSnmu { .. } => self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// All parameters by name (for snapshots).
    pub fn snapshot(&self) -> Vec<(String, Matrix)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Restore parameters from a snapshot. Every stored parameter must be
    /// present with its original shape.
    pub fn load_weights(&mut self, weights: &[(String, Matrix)]) -> Result<()> {
        for p in &mut self.params {
            let (_, value) = weights
                .iter()
                .find(|(name, _)| *name == p.name)
                .ok_or_else(|| Error::invalid(format!("snapshot is missing parameter {}", p.name)))?;
            if value.shape() != p.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter {} is {}x{} in the snapshot, expected {}x{}",
                    p.name,
                    value.rows(),
                    value.cols(),
                    p.value.rows(),
                    p.value.cols()
                )));
            }
            p.value = value.clone();
        }
        Ok(())
    }

    /// Node evaluated as the model output (exposed for analysis tooling).
    pub fn pred_node(&self) -> NodeId {
        self.pred
    }
}
