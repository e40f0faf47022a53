//! Landscape and oracle tooling: static loss grids over the two weights of a
//! multiplicative unit, learned-function surfaces on binned grids,
//! closed-form gradients for the stacked add-multiply models (used to
//! cross-check the tape), and a hand-sized selection failure case study.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::nmu_forward;
use crate::matrix::Matrix;
use crate::metrics::selection_product;
use crate::tape::{Bindings, Tape};
use crate::tasks::RangeSpec;

// ── grids ────────────────────────────────────────────────────────────────

/// Rectangular grid of values over two coordinate axes. `values` is
/// `|axis1| x |axis2|`, row index following axis1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Matrix,
    /// Free-form description of what was evaluated (sample or model).
    pub metadata: String,
}

impl Grid2D {
    pub fn new(
        axis1: Vec<f64>,
        axis2: Vec<f64>,
        values: Matrix,
        metadata: impl Into<String>,
    ) -> Result<Self> {
        for axis in [&axis1, &axis2] {
            if axis.is_empty() {
                return Err(Error::invalid("grid axes must be non-empty"));
            }
            if axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid("grid axes must be strictly increasing"));
            }
        }
        if values.shape() != (axis1.len(), axis2.len()) {
            return Err(Error::invalid(format!(
                "grid values are {}x{}, expected {}x{}",
                values.rows(),
                values.cols(),
                axis1.len(),
                axis2.len()
            )));
        }
        Ok(Grid2D {
            axis1,
            axis2,
            values,
            metadata: metadata.into(),
        })
    }

    /// Cells in row-major order as (axis1 value, axis2 value, cell value),
    /// the long form used for CSV export.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.axis1.iter().enumerate().flat_map(move |(i, &a)| {
            self.axis2
                .iter()
                .enumerate()
                .map(move |(j, &b)| (a, b, self.values.at(i, j)))
        })
    }

    /// Grid coordinates of every cell strictly smaller than all of its
    /// existing 8-neighbours.
    pub fn local_minima(&self) -> Vec<(usize, usize)> {
        let (rows, cols) = self.values.shape();
        let mut out = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                let v = self.values.at(i, j);
                let mut is_min = true;
                'scan: for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= rows as i64 || nj >= cols as i64 {
                            continue;
                        }
                        if self.values.at(ni as usize, nj as usize) <= v {
                            is_min = false;
                            break 'scan;
                        }
                    }
                }
                if is_min {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Largest absolute cell difference between two grids over the same axes.
pub fn max_abs_diff(a: &Grid2D, b: &Grid2D) -> Result<f64> {
    if a.axis1 != b.axis1 || a.axis2 != b.axis2 {
        return Err(Error::invalid("grids cover different axes"));
    }
    Ok(a.values
        .data()
        .iter()
        .zip(b.values.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

// ── single-sample loss landscape ─────────────────────────────────────────

/// Default landscape axes: [-1.0, 1.5] in steps of 0.01 (251 points),
/// covering both known optima of the reference sample and the clamp region.
pub fn default_axes() -> Vec<f64> {
    (0..251).map(|k| -1.0 + k as f64 * 0.01).collect()
}

/// The single sample whose loss surface has a second optimum outside the
/// clamp region: x = (-2, -1.8), y = 3.6.
pub fn reference_sample() -> ([f64; 2], f64) {
    let x = [-2.0, -1.8];
    (x, x[0] * x[1])
}

/// Squared-error surface of a 2-input, 1-output multiplicative unit on one
/// sample, over explicit weight axes. Weights are taken as given: clamping
/// is bypassed so the surface extends outside [0,1].
pub fn loss_grid(x: [f64; 2], y: f64, w1_axis: &[f64], w2_axis: &[f64]) -> Result<Grid2D> {
    let xm = Matrix::row_vector(&x);
    let mut w = Matrix::zeros(2, 1);
    let mut values = Matrix::zeros(w1_axis.len(), w2_axis.len());
    for (i, &w1) in w1_axis.iter().enumerate() {
        for (j, &w2) in w2_axis.iter().enumerate() {
            w.set(0, 0, w1);
            w.set(1, 0, w2);
            let pred = nmu_forward(&xm, &w)?.at(0, 0);
            let diff = y - pred;
            values.set(i, j, diff * diff);
        }
    }
    Grid2D::new(
        w1_axis.to_vec(),
        w2_axis.to_vec(),
        values,
        format!("squared error of a 2-weight multiplicative unit on x=({},{}), y={}", x[0], x[1], y),
    )
}

// ── learned-function surfaces ────────────────────────────────────────────

/// Bin-centre coordinates of `bins` equal cells over [lo, hi].
pub fn bin_centers(domain: RangeSpec, bins: usize) -> Vec<f64> {
    let width = (domain.hi - domain.lo) / bins as f64;
    (0..bins)
        .map(|k| domain.lo + (k as f64 + 0.5) * width)
        .collect()
}

/// Evaluate a two-input scalar function on the bins x bins grid of bin
/// centres over the two domains.
pub fn function_surface(
    mut f: impl FnMut(f64, f64) -> f64,
    domain1: RangeSpec,
    domain2: RangeSpec,
    bins: usize,
    metadata: impl Into<String>,
) -> Result<Grid2D> {
    if bins == 0 {
        return Err(Error::invalid("surface needs at least one bin"));
    }
    if !(domain1.lo < domain1.hi) || !(domain2.lo < domain2.hi) {
        return Err(Error::invalid("surface domains must have positive width"));
    }
    let axis1 = bin_centers(domain1, bins);
    let axis2 = bin_centers(domain2, bins);
    let mut values = Matrix::zeros(bins, bins);
    for (i, &a) in axis1.iter().enumerate() {
        for (j, &b) in axis2.iter().enumerate() {
            values.set(i, j, f(a, b));
        }
    }
    Grid2D::new(axis1, axis2, values, metadata)
}

/// The target surface of the multiplication task: x1 * x2.
pub fn golden_surface(domain1: RangeSpec, domain2: RangeSpec, bins: usize) -> Result<Grid2D> {
    function_surface(|a, b| a * b, domain1, domain2, bins, "golden surface x1*x2")
}

// ── closed-form gradients for the stacked models ─────────────────────────

fn check_stack_shapes(
    x: &Matrix,
    y: &Matrix,
    w_nau: &Matrix,
    w_prod: &Matrix,
) -> Result<(usize, usize, usize)> {
    if w_prod.cols() != 1 {
        return Err(Error::invalid(format!(
            "product output size must be 1, got {}",
            w_prod.cols()
        )));
    }
    let (batch, inputs) = x.shape();
    if y.shape() != (batch, 1) {
        return Err(Error::invalid(format!(
            "targets are {}x{}, expected {}x1",
            y.rows(),
            y.cols(),
            batch
        )));
    }
    if w_nau.rows() != inputs || w_nau.cols() != w_prod.rows() {
        return Err(Error::invalid(format!(
            "weight shapes {}x{} and {}x{} do not chain for {} inputs",
            w_nau.rows(),
            w_nau.cols(),
            w_prod.rows(),
            w_prod.cols(),
            inputs
        )));
    }
    Ok((batch, inputs, w_nau.cols()))
}

/// Closed-form gradients of the summed squared error of the stacked
/// additive-multiplicative model, written directly from the generalised
/// partial derivatives: with z = x W^A and per-term t_j = W^M_j z_j + 1 -
/// W^M_j,
///
///   dL/dW^A_{i,l} = sum_b -2 (y - yhat) W^M_l x_i prod_{j != l} t_j
///   dL/dW^M_l     = sum_b -2 (y - yhat) (z_l - 1) prod_{j != l} t_j
pub fn analytic_grad_nau_nmu(
    x: &Matrix,
    y: &Matrix,
    w_nau: &Matrix,
    w_nmu: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let (batch, inputs, hidden) = check_stack_shapes(x, y, w_nau, w_nmu)?;
    let z = crate::layers::nau_forward(x, w_nau)?;
    let mut d_nau = Matrix::zeros(inputs, hidden);
    let mut d_nmu = Matrix::zeros(hidden, 1);
    for s in 0..batch {
        let t: Vec<f64> = (0..hidden)
            .map(|j| {
                let w = w_nmu.at(j, 0);
                w * z.at(s, j) + 1.0 - w
            })
            .collect();
        let yhat: f64 = t.iter().product();
        let resid = y.at(s, 0) - yhat;
        for l in 0..hidden {
            let others: f64 = t
                .iter()
                .enumerate()
                .filter_map(|(j, &v)| (j != l).then_some(v))
                .product();
            let wl = w_nmu.at(l, 0);
            for i in 0..inputs {
                let g = -2.0 * resid * wl * x.at(s, i) * others;
                d_nau.set(i, l, d_nau.at(i, l) + g);
            }
            let gm = -2.0 * resid * (z.at(s, l) - 1.0) * others;
            d_nmu.set(l, 0, d_nmu.at(l, 0) + gm);
        }
    }
    Ok((d_nau, d_nmu))
}

/// Closed-form gradients for the stacked model with the stochastic
/// (noised/denoised) product layer. With per-term numerators
/// t_j = N_j W^M_j z_j + 1 - W^M_j and denominators u_j = N_j W^M_j + 1 -
/// W^M_j, D = prod_j u_j, A_l = prod_{j != l} t_j:
///
///   dL/dW^A_{i,l} = sum_b -2 (y - yhat) (A_l / D) W^M_l N_l x_i
///   dL/dW^M_l     = sum_b -2 (y - yhat) (A_l / D^2)
///                     [ D (N_l z_l - 1) - t_l (N_l - 1) prod_{j != l} u_j ]
pub fn analytic_grad_nau_snmu(
    x: &Matrix,
    y: &Matrix,
    w_nau: &Matrix,
    w_snmu: &Matrix,
    noise: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let (batch, inputs, hidden) = check_stack_shapes(x, y, w_nau, w_snmu)?;
    if noise.shape() != (batch, hidden) {
        return Err(Error::invalid(format!(
            "noise is {}x{}, expected {}x{}",
            noise.rows(),
            noise.cols(),
            batch,
            hidden
        )));
    }
    if noise.data().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("noise must be strictly positive"));
    }
    let z = crate::layers::nau_forward(x, w_nau)?;
    let mut d_nau = Matrix::zeros(inputs, hidden);
    let mut d_snmu = Matrix::zeros(hidden, 1);
    for s in 0..batch {
        // Same association as the layer forward so residuals cancel exactly.
        let t: Vec<f64> = (0..hidden)
            .map(|j| {
                let w = w_snmu.at(j, 0);
                noise.at(s, j) * z.at(s, j) * w + 1.0 - w
            })
            .collect();
        let u: Vec<f64> = (0..hidden)
            .map(|j| {
                let w = w_snmu.at(j, 0);
                noise.at(s, j) * w + 1.0 - w
            })
            .collect();
        let d: f64 = u.iter().product();
        let yhat: f64 = t.iter().product::<f64>() / d;
        let resid = y.at(s, 0) - yhat;
        for l in 0..hidden {
            let a_l: f64 = t
                .iter()
                .enumerate()
                .filter_map(|(j, &v)| (j != l).then_some(v))
                .product();
            let u_l: f64 = u
                .iter()
                .enumerate()
                .filter_map(|(j, &v)| (j != l).then_some(v))
                .product();
            let wl = w_snmu.at(l, 0);
            let nl = noise.at(s, l);
            let zl = z.at(s, l);
            for i in 0..inputs {
                let g = -2.0 * resid * (a_l / d) * wl * nl * x.at(s, i);
                d_nau.set(i, l, d_nau.at(i, l) + g);
            }
            let bracket = d * (nl * zl - 1.0) - t[l] * (nl - 1.0) * u_l;
            let gm = -2.0 * resid * (a_l / (d * d)) * bracket;
            d_snmu.set(l, 0, d_snmu.at(l, 0) + gm);
        }
    }
    Ok((d_nau, d_snmu))
}

/// Reverse-mode gradients of the same summed squared error, obtained by
/// building the stack on a fresh tape. This is the production gradient path
/// the closed forms above are cross-checked against.
pub fn tape_grad_stack(
    x: &Matrix,
    y: &Matrix,
    w_nau: &Matrix,
    w_prod: &Matrix,
    noise: Option<&Matrix>,
) -> Result<(Matrix, Matrix)> {
    let (batch, _, hidden) = check_stack_shapes(x, y, w_nau, w_prod)?;
    if let Some(n) = noise {
        if n.shape() != (batch, hidden) {
            return Err(Error::invalid(format!(
                "noise is {}x{}, expected {}x{}",
                n.rows(),
                n.cols(),
                batch,
                hidden
            )));
        }
    }
    let mut t = Tape::new();
    let xn = t.input("x");
    let yn = t.input("y");
    let wan = t.param("wa");
    let wmn = t.param("wm");
    let z = crate::layers::build_nau(&mut t, xn, wan);
    let pred = match noise {
        Some(_) => {
            let nn = t.input("n");
            crate::layers::build_snmu(&mut t, z, wmn, nn, 1)
        }
        None => crate::layers::build_nmu(&mut t, z, wmn, 1),
    };
    let diff = t.sub(yn, pred);
    let sq = t.mul(diff, diff);
    let mean = t.mean_all(sq);
    let loss = t.mul_scalar(mean, batch as f64);
    t.set_output(loss);
    let mut binds = Bindings::new()
        .set("x", x.clone())
        .set("y", y.clone())
        .set("wa", w_nau.clone())
        .set("wm", w_prod.clone());
    if let Some(n) = noise {
        binds.insert("n", n.clone());
    }
    t.forward(&binds)?;
    let mut g = t.backward(loss)?;
    let ga = g.take(wan).expect("wa is a parameter leaf");
    let gm = g.take(wmn).expect("wm is a parameter leaf");
    Ok((ga, gm))
}

// ── selection failure case study ─────────────────────────────────────────

/// One row of the selection failure table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub input: &'static str,
    pub case: &'static str,
    pub output: f64,
    pub abs_error: f64,
}

/// A 4-input toy instance of the subset task (windows {1,2} and {2,3})
/// evaluated under three selection matrices: fully correct, correct support
/// with one weight at 0.9, and a shifted support with one weight at 0.9.
/// Shows how a large-magnitude input hides a selection error that a
/// near-one-magnitude input exposes.
pub fn failure_case_study() -> Vec<CaseStudyRow> {
    let inputs: [(&'static str, [f64; 4]); 2] = [
        ("i1", [1.0, 2.0, 3.0, 4.0]),
        ("i2", [1.11, 1.12, 1.13, 1.14]),
    ];
    let cases: [(&'static str, [[f64; 2]; 4]); 3] = [
        (
            "selection ok, weights ok",
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        ),
        (
            "selection ok, weights off",
            [[0.0, 0.0], [0.9, 0.0], [1.0, 1.0], [0.0, 1.0]],
        ),
        (
            "selection off, weights off",
            [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.9, 1.0]],
        ),
    ];
    let mut out = Vec::with_capacity(6);
    for (input_name, x) in inputs {
        let y = (x[1] + x[2]) * (x[2] + x[3]);
        for (case_name, rows) in &cases {
            let w = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
                .expect("static case matrices are rectangular");
            let output = selection_product(&w, &x);
            out.push(CaseStudyRow {
                input: input_name,
                case: case_name,
                output,
                abs_error: (y - output).abs(),
            });
        }
    }
    out
}
