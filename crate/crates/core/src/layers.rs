//! Arithmetic layers.
//!
//! Four module kinds share one calling convention (batch-rows in, units-cols
//! out):
//!
//! - additive unit: `a_o = sum_i W[i,o] * x_i` — a plain matrix product;
//! - multiplicative unit: `m_o = prod_i (W[i,o] * x_i + 1 - W[i,o])`, so a
//!   weight of 0 gates an input out (factor 1) and a weight of 1 passes it
//!   through;
//! - stochastic denoising multiplicative unit: during training each input is
//!   scaled by multiplicative noise `n_i >= 1` before the product, and the
//!   result is divided by the same product applied to a constant-1 input:
//!   `prod_i (n_i x_i W[i,o] + 1 - W[i,o]) / prod_i (n_i W[i,o] + 1 - W[i,o])`.
//!   With binary weights the noise cancels exactly; away from binary weights
//!   it penalises solutions that rely on non-discrete weights. At inference
//!   the layer is exactly the plain multiplicative unit;
//! - MLP baseline: one ReLU hidden layer with biases.
//!
//! Each layer exists twice: a plain forward on matrices (used for evaluation
//! and analysis) and a graph builder that composes tape primitives (used for
//! training), which keeps the gradient path testable against both finite
//! differences and the closed-form expressions in `analysis`.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats::population_std;
use crate::tape::{NodeId, Tape};

// ── configuration ────────────────────────────────────────────────────────

/// Multiplicative-noise source for the stochastic denoising unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseConfig {
    /// No noise; the layer degenerates to the plain multiplicative unit.
    None,
    /// i.i.d. U[lo, hi) per element per step. `Fixed { lo: 1.0, hi: 1.0 }`
    /// produces an all-ones matrix.
    Fixed { lo: f64, hi: f64 },
    /// U[1, 1 + 1/sigma) where sigma is the standard deviation of the whole
    /// input batch (all elements pooled). sigma is floored at 0.01, capping
    /// the upper bound at 101; a non-finite sigma falls back to all-ones.
    BatchStat,
}

impl NoiseConfig {
    pub fn is_active(&self) -> bool {
        !matches!(self, NoiseConfig::None)
    }
}

impl std::fmt::Display for NoiseConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseConfig::None => write!(f, "none"),
            NoiseConfig::Fixed { lo, hi } => write!(f, "u[{},{}]", lo, hi),
            NoiseConfig::BatchStat => write!(f, "batch"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Nau,
    Nmu,
    Snmu,
    Mlp,
}

/// Weight initialisation. Multiplicative units start inside (0, 1) so every
/// gate is half-open; additive and MLP weights use the fan-balanced uniform
/// range, biases start at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightInit {
    Uniform { lo: f64, hi: f64 },
    XavierUniform,
}

/// Declarative description of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_size: usize,
    pub out_size: usize,
    /// Hidden width, MLP only.
    pub hidden: Option<usize>,
    /// Noise source, stochastic unit only.
    pub noise: NoiseConfig,
    pub init: WeightInit,
}

impl LayerSpec {
    pub fn nau(in_size: usize, out_size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Nau,
            in_size,
            out_size,
            hidden: None,
            noise: NoiseConfig::None,
            init: WeightInit::XavierUniform,
        }
    }

    pub fn nmu(in_size: usize, out_size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Nmu,
            in_size,
            out_size,
            hidden: None,
            noise: NoiseConfig::None,
            init: WeightInit::Uniform { lo: 0.25, hi: 0.75 },
        }
    }

    pub fn snmu(in_size: usize, out_size: usize, noise: NoiseConfig) -> Self {
        LayerSpec {
            kind: LayerKind::Snmu,
            in_size,
            out_size,
            hidden: None,
            noise,
            init: WeightInit::Uniform { lo: 0.25, hi: 0.75 },
        }
    }

    pub fn mlp(in_size: usize, hidden: usize, out_size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Mlp,
            in_size,
            out_size,
            hidden: Some(hidden),
            noise: NoiseConfig::None,
            init: WeightInit::XavierUniform,
        }
    }
}

/// Draw a weight matrix for the given fan-in/fan-out.
pub fn init_weights(rows: usize, cols: usize, init: WeightInit, rng: &mut impl Rng) -> Matrix {
    let dist = match init {
        WeightInit::Uniform { lo, hi } => Uniform::new(lo, hi),
        WeightInit::XavierUniform => {
            let r = (6.0 / (rows + cols) as f64).sqrt();
            Uniform::new(-r, r)
        }
    };
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = dist.sample(rng);
    }
    m
}

// ── plain forwards ───────────────────────────────────────────────────────

/// Additive unit: `x (B x I) * w (I x O) -> B x O`.
pub fn nau_forward(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    x.matmul(w)
}

/// Multiplicative unit: `out[b,o] = prod_i (w[i,o] * x[b,i] + 1 - w[i,o])`.
pub fn nmu_forward(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() {
        return Err(Error::Shape {
            op: "nmu_forward",
            detail: format!("x is {}x{}, w is {}x{}", x.rows(), x.cols(), w.rows(), w.cols()),
        });
    }
    let (b, i_n, o_n) = (x.rows(), x.cols(), w.cols());
    let mut out = Matrix::zeros(b, o_n);
    for r in 0..b {
        let xr = x.row(r);
        for o in 0..o_n {
            let mut p = 1.0;
            for i in 0..i_n {
                let wi = w.at(i, o);
                p *= wi * xr[i] + 1.0 - wi;
            }
            out.set(r, o, p);
        }
    }
    Ok(out)
}

/// Stochastic denoising multiplicative unit.
///
/// `training = true` applies the noising/denoising quotient with the given
/// noise matrix (same shape as `x`, entries must be positive and are sampled
/// >= 1); `training = false` ignores the noise and is exactly [`nmu_forward`].
pub fn snmu_forward(x: &Matrix, w: &Matrix, noise: &Matrix, training: bool) -> Result<Matrix> {
    if !training {
        return nmu_forward(x, w);
    }
    if x.cols() != w.rows() {
        return Err(Error::Shape {
            op: "snmu_forward",
            detail: format!("x is {}x{}, w is {}x{}", x.rows(), x.cols(), w.rows(), w.cols()),
        });
    }
    if noise.shape() != x.shape() {
        return Err(Error::Shape {
            op: "snmu_forward",
            detail: format!(
                "noise is {}x{}, expected input shape {}x{}",
                noise.rows(),
                noise.cols(),
                x.rows(),
                x.cols()
            ),
        });
    }
    if noise.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::invalid("snmu_forward: noise entries must be positive"));
    }
    let (b, i_n, o_n) = (x.rows(), x.cols(), w.cols());
    let mut out = Matrix::zeros(b, o_n);
    for r in 0..b {
        let xr = x.row(r);
        let nr = noise.row(r);
        for o in 0..o_n {
            let mut num = 1.0;
            let mut den = 1.0;
            for i in 0..i_n {
                let wi = w.at(i, o);
                num *= nr[i] * xr[i] * wi + 1.0 - wi;
                den *= nr[i] * wi + 1.0 - wi;
            }
            out.set(r, o, num / den);
        }
    }
    Ok(out)
}

/// One-hidden-layer ReLU MLP parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

pub fn mlp_forward(x: &Matrix, p: &MlpParams) -> Result<Matrix> {
    let mut h = x.matmul(&p.w1)?;
    for r in 0..h.rows() {
        for c in 0..h.cols() {
            let v = h.at(r, c) + p.b1.at(0, c);
            h.set(r, c, if v > 0.0 { v } else { 0.0 });
        }
    }
    let mut out = h.matmul(&p.w2)?;
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            out.set(r, c, out.at(r, c) + p.b2.at(0, c));
        }
    }
    Ok(out)
}

// ── noise sampling ───────────────────────────────────────────────────────

/// Sample a noise matrix shaped like `x` for one training step.
pub fn sample_noise(cfg: &NoiseConfig, x: &Matrix, rng: &mut impl Rng) -> Matrix {
    sample_noise_shaped(cfg, x.rows(), x.cols(), Some(x), rng)
}

/// Shape-driven variant: `input` is only consulted for `BatchStat`.
pub fn sample_noise_shaped(
    cfg: &NoiseConfig,
    rows: usize,
    cols: usize,
    input: Option<&Matrix>,
    rng: &mut impl Rng,
) -> Matrix {
    match cfg {
        NoiseConfig::None => Matrix::filled(rows, cols, 1.0),
        NoiseConfig::Fixed { lo, hi } => {
            if lo == hi {
                return Matrix::filled(rows, cols, *lo);
            }
            let dist = Uniform::new(*lo, *hi);
            let mut m = Matrix::zeros(rows, cols);
            for v in m.data_mut() {
                *v = dist.sample(rng);
            }
            m
        }
        NoiseConfig::BatchStat => {
            let sigma = input
                .map(|m| population_std(m.data()))
                .unwrap_or(f64::NAN);
            if !sigma.is_finite() {
                return Matrix::filled(rows, cols, 1.0);
            }
            let hi = 1.0 + 1.0 / sigma.max(0.01);
            let dist = Uniform::new(1.0, hi);
            let mut m = Matrix::zeros(rows, cols);
            for v in m.data_mut() {
                *v = dist.sample(rng);
            }
            m
        }
    }
}

// ── weight maintenance ───────────────────────────────────────────────────

/// Clamp every weight into [lo, hi]; applied to stored parameters after each
/// optimizer step, never inside the forward graph.
pub fn clamp_weights(w: &Matrix, lo: f64, hi: f64) -> Matrix {
    w.map(|v| v.max(lo).min(hi))
}

/// Mean distance to the nearest discrete weight:
/// `(1/(I*O)) * sum min(|w|, |1 - w|)`. Zero exactly at weights in {0, 1}.
pub fn reg_penalty(w: &Matrix) -> f64 {
    w.iter().map(|&v| v.abs().min((1.0 - v).abs())).sum::<f64>() / w.len() as f64
}

/// Ramped regularisation scale: 0 before `start`, linear up to `lambda_hat`
/// at `end`, constant after.
pub fn reg_lambda(iteration: u64, lambda_hat: f64, start: u64, end: u64) -> f64 {
    debug_assert!(start < end, "lambda ramp requires start < end");
    let t = (iteration.saturating_sub(start)) as f64 / (end - start) as f64;
    lambda_hat * t.clamp(0.0, 1.0)
}

// ── graph builders ───────────────────────────────────────────────────────

/// Additive unit on the tape.
pub fn build_nau(t: &mut Tape, x: NodeId, w: NodeId) -> NodeId {
    t.matmul(x, w)
}

/// `1 - w` broadcast alongside `w` broadcast, shared by the multiplicative
/// builders: returns (w_row_expanded, one_minus_w_expanded) for column `o`.
fn broadcast_weight_col(t: &mut Tape, w: NodeId, o: usize, like: NodeId) -> (NodeId, NodeId) {
    let col = t.slice_col(w, o);
    let row = t.transpose(col);
    let wb = t.expand_rows(row, like);
    let neg = t.mul_scalar(wb, -1.0);
    let one_minus = t.add_scalar(neg, 1.0);
    (wb, one_minus)
}

/// Multiplicative unit on the tape: per output column, the row-product of
/// `w*x + 1 - w`.
pub fn build_nmu(t: &mut Tape, x: NodeId, w: NodeId, out_size: usize) -> NodeId {
    let mut cols = Vec::with_capacity(out_size);
    for o in 0..out_size {
        let (wb, one_minus) = broadcast_weight_col(t, w, o, x);
        let xw = t.mul(x, wb);
        let factors = t.add(xw, one_minus);
        cols.push(t.prod_rows(factors));
    }
    if cols.len() == 1 {
        cols[0]
    } else {
        t.concat_cols(cols)
    }
}

/// Stochastic denoising multiplicative unit on the tape (training mode).
/// `noise` must be bound to a matrix shaped like `x`; the same node feeds
/// both the noising product and the denoising denominator, which is what
/// makes the noise cancel exactly at binary weights.
pub fn build_snmu(t: &mut Tape, x: NodeId, w: NodeId, noise: NodeId, out_size: usize) -> NodeId {
    let noisy_x = t.mul(noise, x);
    let mut cols = Vec::with_capacity(out_size);
    for o in 0..out_size {
        let (wb, one_minus) = broadcast_weight_col(t, w, o, x);
        let num_xw = t.mul(noisy_x, wb);
        let num_factors = t.add(num_xw, one_minus);
        let num = t.prod_rows(num_factors);

        let den_nw = t.mul(noise, wb);
        let den_factors = t.add(den_nw, one_minus);
        let den = t.prod_rows(den_factors);

        cols.push(t.div(num, den));
    }
    if cols.len() == 1 {
        cols[0]
    } else {
        t.concat_cols(cols)
    }
}

/// One-hidden-layer ReLU MLP on the tape.
pub fn build_mlp(t: &mut Tape, x: NodeId, w1: NodeId, b1: NodeId, w2: NodeId, b2: NodeId) -> NodeId {
    let z1 = t.matmul(x, w1);
    let b1e = t.expand_rows(b1, z1);
    let pre = t.add(z1, b1e);
    let h = t.relu(pre);
    let z2 = t.matmul(h, w2);
    let b2e = t.expand_rows(b2, z2);
    t.add(z2, b2e)
}

/// Discretisation penalty of one weight matrix on the tape, as a 1x1 node:
/// mean of `min(|w|, 1-|w|)`, written as `0.5 - ||w| - 0.5|` so it stays in
/// the whole-matrix op set. The two forms agree for all w, and the gradient
/// is the correct subgradient on both branches.
pub fn build_reg_penalty(t: &mut Tape, w: NodeId) -> NodeId {
    let a = t.abs(w);
    let centered = t.add_scalar(a, -0.5);
    let d = t.abs(centered);
    let neg = t.mul_scalar(d, -1.0);
    let elems = t.add_scalar(neg, 0.5);
    t.mean_all(elems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Bindings;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a}");
    }

    #[test]
    fn nau_case_study_intermediates() {
        // Converged selection: z1 = x2 + x3, z2 = x3 + x4.
        let x = Matrix::row_vector(&[1.11, 1.12, 1.13, 1.14]);
        let w = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let z = nau_forward(&x, &w).unwrap();
        assert_close(z.at(0, 0), 2.25, 1e-12);
        assert_close(z.at(0, 1), 2.27, 1e-12);
    }

    #[test]
    fn nmu_identity_weights_multiply() {
        let x = Matrix::row_vector(&[-2.0, -1.8]);
        let w = Matrix::col_vector(&[1.0, 1.0]);
        let out = nmu_forward(&x, &w).unwrap();
        assert_eq!(out.at(0, 0), 3.6);
    }

    #[test]
    fn nmu_zero_weights_give_one() {
        let x = Matrix::row_vector(&[5.0, -3.0, 100.0]);
        let w = Matrix::col_vector(&[0.0, 0.0, 0.0]);
        assert_eq!(nmu_forward(&x, &w).unwrap().at(0, 0), 1.0);
    }

    #[test]
    fn snmu_hand_values() {
        // x=[2,4], w=[0.5,1], n=[2,3]:
        // num = (2*2*0.5 + 0.5)(3*4*1 + 0) = 2.5 * 12 = 30
        // den = (2*0.5 + 0.5)(3*1 + 0) = 1.5 * 3 = 4.5
        let x = Matrix::row_vector(&[2.0, 4.0]);
        let w = Matrix::col_vector(&[0.5, 1.0]);
        let n = Matrix::row_vector(&[2.0, 3.0]);
        let out = snmu_forward(&x, &w, &n, true).unwrap();
        assert_close(out.at(0, 0), 30.0 / 4.5, 1e-12);

        // Inference ignores the noise entirely.
        let inf = snmu_forward(&x, &w, &n, false).unwrap();
        let plain = nmu_forward(&x, &w).unwrap();
        assert_eq!(inf, plain);
        assert_eq!(plain.at(0, 0), 6.0);
    }

    #[test]
    fn snmu_binary_weights_cancel_noise() {
        // x=[2,3], w=[1,0], n=[9,17] -> 18/9 = 2 = x1, exactly.
        let x = Matrix::row_vector(&[2.0, 3.0]);
        let w = Matrix::col_vector(&[1.0, 0.0]);
        let n = Matrix::row_vector(&[9.0, 17.0]);
        let out = snmu_forward(&x, &w, &n, true).unwrap();
        assert_eq!(out.at(0, 0), 2.0);
    }

    #[test]
    fn snmu_rejects_nonpositive_noise() {
        let x = Matrix::row_vector(&[2.0, 3.0]);
        let w = Matrix::col_vector(&[1.0, 0.0]);
        let n = Matrix::row_vector(&[1.0, 0.0]);
        assert!(snmu_forward(&x, &w, &n, true).is_err());
    }

    #[test]
    fn mlp_forward_hand_values() {
        // h = relu([1,-1] * [[1,0],[0,1]] + [0.5, -2]) = [1.5, 0]
        // out = 1.5*2 + 0*3 + 1 = 4
        let x = Matrix::row_vector(&[1.0, -1.0]);
        let p = MlpParams {
            w1: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            b1: Matrix::row_vector(&[0.5, -2.0]),
            w2: Matrix::col_vector(&[2.0, 3.0]),
            b2: Matrix::row_vector(&[1.0]),
        };
        assert_eq!(mlp_forward(&x, &p).unwrap().at(0, 0), 4.0);
    }

    #[test]
    fn fixed_unit_noise_is_all_ones() {
        let mut rng = crate::rng::stream(0, "noise");
        let cfg = NoiseConfig::Fixed { lo: 1.0, hi: 1.0 };
        let n = sample_noise_shaped(&cfg, 3, 2, None, &mut rng);
        assert!(n.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fixed_noise_respects_bounds() {
        let mut rng = crate::rng::stream(1, "noise");
        let cfg = NoiseConfig::Fixed { lo: 1.0, hi: 5.0 };
        let n = sample_noise_shaped(&cfg, 64, 4, None, &mut rng);
        assert!(n.iter().all(|&v| (1.0..5.0).contains(&v)));
    }

    #[test]
    fn batchstat_noise_uses_global_sigma() {
        let mut rng = crate::rng::stream(2, "noise");
        // sigma of [0,2,0,2,...] is 1 -> upper bound 2.
        let x = Matrix::from_vec(4, 2, vec![0.0, 2.0, 0.0, 2.0, 0.0, 2.0, 0.0, 2.0]).unwrap();
        let n = sample_noise(&NoiseConfig::BatchStat, &x, &mut rng);
        assert!(n.iter().all(|&v| (1.0..2.0).contains(&v)));
    }

    #[test]
    fn batchstat_sigma_floor_caps_the_range() {
        let mut rng = crate::rng::stream(3, "noise");
        // Constant input: sigma = 0 -> floored to 0.01 -> U[1, 101).
        let x = Matrix::filled(8, 2, 3.0);
        let n = sample_noise(&NoiseConfig::BatchStat, &x, &mut rng);
        assert!(n.iter().all(|&v| (1.0..101.0).contains(&v)));
        let spread = n.iter().cloned().fold(f64::MIN, f64::max);
        assert!(spread > 2.0, "floored sigma should allow large factors");
    }

    #[test]
    fn batchstat_nonfinite_sigma_falls_back_to_ones() {
        let mut rng = crate::rng::stream(4, "noise");
        let x = Matrix::from_vec(1, 2, vec![f64::INFINITY, 1.0]).unwrap();
        let n = sample_noise(&NoiseConfig::BatchStat, &x, &mut rng);
        assert!(n.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn clamp_weights_bounds() {
        let w = Matrix::row_vector(&[-0.5, 0.3, 1.7]);
        let c = clamp_weights(&w, 0.0, 1.0);
        assert_eq!(c.data(), &[0.0, 0.3, 1.0]);
        let c2 = clamp_weights(&w, -1.0, 1.0);
        assert_eq!(c2.data(), &[-0.5, 0.3, 1.0]);
    }

    #[test]
    fn reg_penalty_hand_value() {
        // mean(min(0.9, 0.1), min(0.2, 0.8)) = mean(0.1, 0.2) = 0.15
        let w = Matrix::col_vector(&[0.9, 0.2]);
        assert_close(reg_penalty(&w), 0.15, 1e-15);
    }

    #[test]
    fn reg_penalty_zero_at_discrete_weights() {
        let w = Matrix::row_vector(&[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(reg_penalty(&w), 0.0);
        let mid = Matrix::row_vector(&[0.5]);
        assert_eq!(reg_penalty(&mid), 0.5);
    }

    #[test]
    fn reg_lambda_ramp() {
        assert_eq!(reg_lambda(0, 10.0, 20_000, 35_000), 0.0);
        assert_eq!(reg_lambda(20_000, 10.0, 20_000, 35_000), 0.0);
        assert_close(reg_lambda(27_500, 10.0, 20_000, 35_000), 5.0, 1e-12);
        assert_eq!(reg_lambda(35_000, 10.0, 20_000, 35_000), 10.0);
        assert_eq!(reg_lambda(50_000, 10.0, 20_000, 35_000), 10.0);
    }

    #[test]
    fn graph_builders_match_plain_forwards() {
        let mut rng = crate::rng::stream(11, "test");
        let x = init_weights(5, 3, WeightInit::Uniform { lo: -2.0, hi: 2.0 }, &mut rng);
        let w = init_weights(3, 2, WeightInit::Uniform { lo: 0.0, hi: 1.0 }, &mut rng);
        let n = init_weights(5, 3, WeightInit::Uniform { lo: 1.0, hi: 5.0 }, &mut rng);

        // NMU graph vs plain.
        let mut t = Tape::new();
        let xn = t.input("x");
        let wn = t.param("w");
        let out = build_nmu(&mut t, xn, wn, 2);
        t.set_output(out);
        let got = t
            .forward(&Bindings::new().set("x", x.clone()).set("w", w.clone()))
            .unwrap();
        let want = nmu_forward(&x, &w).unwrap();
        for i in 0..got.len() {
            assert_close(got.data()[i], want.data()[i], 1e-14);
        }

        // sNMU graph vs plain (training mode).
        let mut t = Tape::new();
        let xn = t.input("x");
        let wn = t.param("w");
        let nn = t.input("noise");
        let out = build_snmu(&mut t, xn, wn, nn, 2);
        t.set_output(out);
        let got = t
            .forward(
                &Bindings::new()
                    .set("x", x.clone())
                    .set("w", w.clone())
                    .set("noise", n.clone()),
            )
            .unwrap();
        let want = snmu_forward(&x, &w, &n, true).unwrap();
        for i in 0..got.len() {
            assert_close(got.data()[i], want.data()[i], 1e-14);
        }

        // NAU graph vs plain.
        let mut t = Tape::new();
        let xn = t.input("x");
        let wn = t.param("w");
        let out = build_nau(&mut t, xn, wn);
        t.set_output(out);
        let got = t
            .forward(&Bindings::new().set("x", x.clone()).set("w", w.clone()))
            .unwrap();
        assert_eq!(got, nau_forward(&x, &w).unwrap());

        // MLP graph vs plain.
        let p = MlpParams {
            w1: init_weights(3, 4, WeightInit::XavierUniform, &mut rng),
            b1: init_weights(1, 4, WeightInit::Uniform { lo: -0.5, hi: 0.5 }, &mut rng),
            w2: init_weights(4, 1, WeightInit::XavierUniform, &mut rng),
            b2: init_weights(1, 1, WeightInit::Uniform { lo: -0.5, hi: 0.5 }, &mut rng),
        };
        let mut t = Tape::new();
        let xn = t.input("x");
        let w1 = t.param("w1");
        let b1 = t.param("b1");
        let w2 = t.param("w2");
        let b2 = t.param("b2");
        let out = build_mlp(&mut t, xn, w1, b1, w2, b2);
        t.set_output(out);
        let got = t
            .forward(
                &Bindings::new()
                    .set("x", x.clone())
                    .set("w1", p.w1.clone())
                    .set("b1", p.b1.clone())
                    .set("w2", p.w2.clone())
                    .set("b2", p.b2.clone()),
            )
            .unwrap();
        let want = mlp_forward(&x, &p).unwrap();
        for i in 0..got.len() {
            assert_close(got.data()[i], want.data()[i], 1e-12);
        }
    }

    #[test]
    fn reg_penalty_graph_matches_plain() {
        let w = Matrix::from_rows(&[vec![0.9, -0.3], vec![0.2, 1.4]]).unwrap();
        let mut t = Tape::new();
        let wn = t.param("w");
        let pen = build_reg_penalty(&mut t, wn);
        t.set_output(pen);
        let got = t.forward(&Bindings::new().set("w", w.clone())).unwrap();
        // plain form uses min(|w|, |1-w|); the graph form 0.5 - ||w|-0.5|
        // matches min(|w|, 1-|w|), which agrees on [0,1] and is what the
        // penalty means once weights are clamped. Outside [0,1] both forms
        // penalise, with the graph form symmetric in |w|.
        let want: f64 = w
            .iter()
            .map(|&v| 0.5 - (v.abs() - 0.5).abs())
            .sum::<f64>()
            / w.len() as f64;
        assert_close(got.at(0, 0), want, 1e-15);
    }

    #[test]
    fn xavier_init_range() {
        let mut rng = crate::rng::stream(5, "init");
        let w = init_weights(100, 2, WeightInit::XavierUniform, &mut rng);
        let r = (6.0 / 102.0f64).sqrt();
        assert!(w.iter().all(|&v| v > -r && v < r));
    }

    proptest! {
        /// The multiplicative unit is affine in each single weight: the value
        /// at the midpoint of two weight settings is the mean of the values.
        #[test]
        fn nmu_is_multilinear_in_weights(
            seed in 0u64..1000,
            idx in 0usize..3,
            a in -1.5f64..1.5,
            b in -1.5f64..1.5,
        ) {
            let mut rng = crate::rng::stream(seed, "prop");
            let x = init_weights(1, 3, WeightInit::Uniform { lo: -3.0, hi: 3.0 }, &mut rng);
            let mut w = init_weights(3, 1, WeightInit::Uniform { lo: 0.0, hi: 1.0 }, &mut rng);

            let eval = |wv: f64, w: &mut Matrix| {
                w.set(idx, 0, wv);
                nmu_forward(&x, w).unwrap().at(0, 0)
            };
            let fa = eval(a, &mut w);
            let fb = eval(b, &mut w);
            let fm = eval((a + b) / 2.0, &mut w);
            let scale = fa.abs().max(fb.abs()).max(1.0);
            prop_assert!(((fa + fb) / 2.0 - fm).abs() <= 1e-10 * scale);
        }

        /// Noise sampled under any config is >= 1 wherever active, and the
        /// stochastic unit collapses to the plain unit at binary weights.
        #[test]
        fn snmu_training_matches_nmu_at_binary_weights(
            seed in 0u64..1000,
            w0 in 0u8..2,
            w1 in 0u8..2,
        ) {
            let mut rng = crate::rng::stream(seed, "prop-noise");
            let x = init_weights(4, 2, WeightInit::Uniform { lo: -100.0, hi: 100.0 }, &mut rng);
            let w = Matrix::col_vector(&[w0 as f64, w1 as f64]);
            let n = sample_noise(&NoiseConfig::Fixed { lo: 1.0, hi: 5.0 }, &x, &mut rng);
            let noisy = snmu_forward(&x, &w, &n, true).unwrap();
            let plain = nmu_forward(&x, &w).unwrap();
            for r in 0..4 {
                prop_assert!((noisy.at(r, 0) - plain.at(r, 0)).abs() <= 1e-9);
            }
        }
    }
}
