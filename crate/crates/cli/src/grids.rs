//! Grid exports: the static two-weight loss landscape around a reference
//! product, and learned-function surfaces over a square input domain. Both
//! write a long-form CSV plus a JSON sidecar with the interesting numbers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nalm_lab::analysis::{golden_surface, function_surface, loss_grid, max_abs_diff, Grid2D};
use nalm_lab::model::{Model, ModelKind};
use nalm_lab::rng::stream;
use nalm_lab::tasks::{RangeSpec, TaskKind};
use nalm_lab::trainer::RunRecord;
use nalm_lab::Matrix;

use crate::io::{csv_line, fmt_f64, write_atomic, write_json_pretty};
use crate::{CliError, CliResult};

/// Cells below this count as a recovered optimum in the landscape sidecar.
pub const NEAR_ZERO_LOSS: f64 = 1e-12;
const MAX_AXIS_POINTS: usize = 4_096;

#[derive(Clone, Debug)]
pub struct LandscapeArgs {
    pub x1: f64,
    pub x2: f64,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub out: PathBuf,
    pub name: String,
}

impl Default for LandscapeArgs {
    fn default() -> Self {
        // Matches the default axes of the analysis module: [-1, 1.5] in
        // steps of 0.01 around the sample (-2, -1.8).
        LandscapeArgs {
            x1: -2.0,
            x2: -1.8,
            lo: -1.0,
            hi: 1.5,
            step: 0.01,
            out: PathBuf::from("results"),
            name: "landscape".to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LandscapeMeta {
    pub name: String,
    pub sample: [f64; 2],
    pub target: f64,
    pub axis_lo: f64,
    pub axis_hi: f64,
    pub axis_step: f64,
    pub axis_points: usize,
    pub min_value: f64,
    pub min_at: [f64; 2],
    pub near_zero_cells: usize,
    pub local_minima: Vec<[f64; 2]>,
}

fn axis_points(lo: f64, hi: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && lo < hi) {
        return Err(CliError::Usage(format!(
            "bad axis: lo {lo}, hi {hi}, step {step}; need finite lo < hi and step > 0"
        )));
    }
    let n = ((hi - lo) / step).floor() as usize + 1;
    if n > MAX_AXIS_POINTS {
        return Err(CliError::Usage(format!(
            "axis would have {n} points (cap {MAX_AXIS_POINTS}); increase --step"
        )));
    }
    // The additive form keeps grid points exact where lo and step are exact
    // (the default grid hits 0.0 and 1.0 bit for bit).
    Ok((0..n).map(|k| lo + k as f64 * step).collect())
}

fn grid_argmin(grid: &Grid2D) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for (i, _) in grid.axis1.iter().enumerate() {
        for (j, _) in grid.axis2.iter().enumerate() {
            let v = grid.values.at(i, j);
            if v < best.2 {
                best = (i, j, v);
            }
        }
    }
    best
}

fn write_grid_csv(path: &Path, grid: &Grid2D, header: [&str; 3]) -> CliResult<()> {
    let mut text = String::new();
    text.push_str(&csv_line(&[
        header[0].to_string(),
        header[1].to_string(),
        header[2].to_string(),
    ]));
    text.push('\n');
    for (a, b, v) in grid.rows() {
        text.push_str(&csv_line(&[fmt_f64(a), fmt_f64(b), fmt_f64(v)]));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

fn grids_dir(out: &Path) -> CliResult<PathBuf> {
    let dir = out.join("grids");
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Export the loss grid of a single product sample over the two weights of a
/// plain multiplicative unit. Returns the sidecar for inspection.
pub fn cmd_landscape(args: &LandscapeArgs) -> CliResult<LandscapeMeta> {
    if !(args.x1.is_finite() && args.x2.is_finite()) {
        return Err(CliError::Usage("sample coordinates must be finite".to_string()));
    }
    let axes = axis_points(args.lo, args.hi, args.step)?;
    let target = args.x1 * args.x2;
    let grid = loss_grid([args.x1, args.x2], target, &axes, &axes)
        .map_err(|e| CliError::Usage(format!("cannot build landscape: {e}")))?;

    let (mi, mj, min_value) = grid_argmin(&grid);
    let near_zero_cells = grid.values.iter().filter(|&&v| v < NEAR_ZERO_LOSS).count();
    let local_minima: Vec<[f64; 2]> = grid
        .local_minima()
        .into_iter()
        .take(16)
        .map(|(i, j)| [grid.axis1[i], grid.axis2[j]])
        .collect();
    let meta = LandscapeMeta {
        name: args.name.clone(),
        sample: [args.x1, args.x2],
        target,
        axis_lo: args.lo,
        axis_hi: args.hi,
        axis_step: args.step,
        axis_points: axes.len(),
        min_value,
        min_at: [grid.axis1[mi], grid.axis2[mj]],
        near_zero_cells,
        local_minima,
    };

    let dir = grids_dir(&args.out)?;
    write_grid_csv(&dir.join(format!("{}.csv", args.name)), &grid, ["w1", "w2", "loss"])?;
    write_json_pretty(&dir.join(format!("{}.meta.json", args.name)), &meta)?;
    Ok(meta)
}

/// What to evaluate on the surface grid.
#[derive(Clone, Debug)]
pub enum SurfaceSource {
    /// The target function x1 * x2 itself.
    Golden,
    /// A freshly initialised (untrained) model.
    Init { kind: ModelKind, seed: u64 },
    /// Weights from a stored run record.
    Run { path: PathBuf, which: Which },
}

/// Which checkpoint of a run to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    /// Lowest-validation-error checkpoint.
    Best,
    /// Weights after the last iteration.
    Final,
}

#[derive(Clone, Debug)]
pub struct SurfaceArgs {
    pub source: SurfaceSource,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub out: PathBuf,
    pub name: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceMeta {
    pub name: String,
    pub source: String,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub bins: usize,
    pub min_value: f64,
    pub max_value: f64,
    /// Worst cell disagreement with the exact product surface.
    pub max_abs_diff_vs_golden: f64,
}

fn surface_of_model(model: &Model, desc: &str, domain: RangeSpec, bins: usize) -> CliResult<Grid2D> {
    let surface = function_surface(
        |a, b| {
            let x = Matrix::from_vec(1, 2, vec![a, b]).expect("1x2 point");
            model
                .predict(&x)
                .expect("two-input model accepts a 1x2 point")
                .at(0, 0)
        },
        domain,
        domain,
        bins,
        desc,
    );
    surface.map_err(|e| CliError::Usage(format!("cannot evaluate surface: {e}")))
}

fn model_from_run(path: &Path, which: Which) -> CliResult<(Model, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read run {}: {e}", path.display())))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("corrupt run record {}: {e}", path.display())))?;
    if record.task != TaskKind::Smt {
        return Err(CliError::Usage(format!(
            "the surface export needs a two-input model; run {} is on task {}",
            path.display(),
            record.task
        )));
    }
    let mut init_rng = stream(record.seed, "init");
    let mut model = Model::init(record.kind, 2, &mut init_rng)
        .map_err(|e| CliError::Usage(format!("cannot rebuild model: {e}")))?;
    let weights = match which {
        Which::Final => &record.final_weights,
        Which::Best => {
            &record
                .best
                .as_ref()
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "run {} has no best checkpoint (it aborted before the first evaluation); use --which final",
                        path.display()
                    ))
                })?
                .weights
        }
    };
    model
        .load_weights(weights)
        .map_err(|e| CliError::Usage(format!("stored weights do not fit the model: {e}")))?;
    let desc = format!(
        "run {} ({}, seed {}, {:?} weights)",
        record.run_id(),
        record.kind,
        record.seed,
        which
    );
    Ok((model, desc))
}

/// Export a prediction surface (or the golden product surface) over the
/// square domain, with the deviation from the golden surface in the sidecar.
pub fn cmd_surface(args: &SurfaceArgs) -> CliResult<SurfaceMeta> {
    if !(args.lo.is_finite() && args.hi.is_finite() && args.lo < args.hi) {
        return Err(CliError::Usage(format!(
            "bad domain [{},{}]; need finite lo < hi",
            args.lo, args.hi
        )));
    }
    if args.bins == 0 || args.bins > 2_048 {
        return Err(CliError::Usage(format!(
            "bins must be in 1..=2048, got {}",
            args.bins
        )));
    }
    let domain = RangeSpec::new(args.lo, args.hi);
    let (grid, source_desc) = match &args.source {
        SurfaceSource::Golden => {
            let g = golden_surface(domain, domain, args.bins)
                .map_err(|e| CliError::Usage(format!("cannot evaluate surface: {e}")))?;
            (g, "golden x1*x2".to_string())
        }
        SurfaceSource::Init { kind, seed } => {
            let mut rng = stream(*seed, "init");
            let model = Model::init(*kind, 2, &mut rng)
                .map_err(|e| CliError::Usage(format!("cannot initialise model: {e}")))?;
            let desc = format!("untrained {} (seed {seed})", kind);
            let g = surface_of_model(&model, &desc, domain, args.bins)?;
            (g, desc)
        }
        SurfaceSource::Run { path, which } => {
            let (model, desc) = model_from_run(path, *which)?;
            let g = surface_of_model(&model, &desc, domain, args.bins)?;
            (g, desc)
        }
    };

    let golden = golden_surface(domain, domain, args.bins)
        .map_err(|e| CliError::Usage(format!("cannot evaluate surface: {e}")))?;
    let diff = max_abs_diff(&grid, &golden).expect("same axes by construction");
    let min_value = grid.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_value = grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let meta = SurfaceMeta {
        name: args.name.clone(),
        source: source_desc,
        domain_lo: args.lo,
        domain_hi: args.hi,
        bins: args.bins,
        min_value,
        max_value,
        max_abs_diff_vs_golden: diff,
    };

    let dir = grids_dir(&args.out)?;
    write_grid_csv(&dir.join(format!("{}.csv", args.name)), &grid, ["x1", "x2", "y"])?;
    write_json_pretty(&dir.join(format!("{}.meta.json", args.name)), &meta)?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalm_lab::layers::NoiseConfig;

    fn tmp_out() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        (dir, path)
    }

    #[test]
    fn default_landscape_recovers_both_minima() {
        let (_keep, out) = tmp_out();
        let args = LandscapeArgs {
            out: out.clone(),
            ..Default::default()
        };
        let meta = cmd_landscape(&args).unwrap();
        // On the default 0.01 grid only the clamp-region optimum (1,1) lands
        // exactly on a grid point.
        assert_eq!(meta.near_zero_cells, 1);
        assert_eq!(meta.min_at, [1.0, 1.0]);
        assert!(meta.min_value < NEAR_ZERO_LOSS);
        assert!(out.join("grids/landscape.csv").exists());
        assert!(out.join("grids/landscape.meta.json").exists());
        let text = fs::read_to_string(out.join("grids/landscape.csv")).unwrap();
        assert_eq!(text.lines().count(), 251 * 251 + 1);
        assert!(text.starts_with("w1,w2,loss\n"));
    }

    #[test]
    fn landscape_rejects_bad_axes() {
        let (_keep, out) = tmp_out();
        let bad_step = LandscapeArgs {
            step: 0.0,
            out: out.clone(),
            ..Default::default()
        };
        assert_eq!(cmd_landscape(&bad_step).unwrap_err().exit_code(), 2);
        let too_fine = LandscapeArgs {
            step: 1e-9,
            out,
            ..Default::default()
        };
        assert_eq!(cmd_landscape(&too_fine).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn golden_surface_is_exact() {
        let (_keep, out) = tmp_out();
        let args = SurfaceArgs {
            source: SurfaceSource::Golden,
            lo: -6.0,
            hi: 6.0,
            bins: 8,
            out: out.clone(),
            name: "golden".to_string(),
        };
        let meta = cmd_surface(&args).unwrap();
        assert_eq!(meta.max_abs_diff_vs_golden, 0.0);
        let text = fs::read_to_string(out.join("grids/golden.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,y"));
        for line in lines {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells[0] * cells[1], cells[2]);
        }
    }

    #[test]
    fn untrained_product_surface_is_bounded_by_factor_ranges() {
        let (_keep, out) = tmp_out();
        let args = SurfaceArgs {
            source: SurfaceSource::Init {
                kind: ModelKind::Nmu,
                seed: 3,
            },
            lo: -6.0,
            hi: 6.0,
            bins: 10,
            out,
            name: "init".to_string(),
        };
        let meta = cmd_surface(&args).unwrap();
        // Each factor w*x + 1 - w with w in [0,1], |x| <= 6 lies in [-6, 7],
        // so the two-factor product is within [-42, 49].
        assert!(meta.min_value >= -42.0 && meta.max_value <= 49.0);
        assert!(meta.max_abs_diff_vs_golden > 0.0, "untrained model is not the product");
    }

    #[test]
    fn snmu_surface_uses_inference_semantics() {
        let (_keep, out) = tmp_out();
        let noisy = SurfaceArgs {
            source: SurfaceSource::Init {
                kind: ModelKind::Snmu {
                    noise: NoiseConfig::Fixed { lo: 1.0, hi: 5.0 },
                },
                seed: 11,
            },
            lo: -2.0,
            hi: 2.0,
            bins: 5,
            out: out.clone(),
            name: "snmu".to_string(),
        };
        let plain = SurfaceArgs {
            source: SurfaceSource::Init {
                kind: ModelKind::Nmu,
                seed: 11,
            },
            lo: -2.0,
            hi: 2.0,
            bins: 5,
            out,
            name: "nmu".to_string(),
        };
        // Same seed -> same initial weights; inference ignores noise, so the
        // surfaces agree exactly.
        let a = cmd_surface(&noisy).unwrap();
        let b = cmd_surface(&plain).unwrap();
        assert_eq!(a.min_value, b.min_value);
        assert_eq!(a.max_value, b.max_value);
        assert_eq!(a.max_abs_diff_vs_golden, b.max_abs_diff_vs_golden);
    }

    #[test]
    fn surface_rejects_bad_domains() {
        let (_keep, out) = tmp_out();
        let args = SurfaceArgs {
            source: SurfaceSource::Golden,
            lo: 2.0,
            hi: -2.0,
            bins: 4,
            out,
            name: "bad".to_string(),
        };
        assert_eq!(cmd_surface(&args).unwrap_err().exit_code(), 2);
    }
}
