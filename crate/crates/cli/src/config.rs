//! Experiment files and their resolution against built-in defaults.
//!
//! The file is TOML. A complete example:
//!
//! ```toml
//! task = "smt"                     # smt | adt
//! output_dir = "results/snmu"      # or pass --out
//! seeds = 10                       # 0..10; or an explicit list: [3, 17, 40]
//! ranges = ["[1,2)", "[-2,-1)"]    # built-in names; omit for all nine
//!
//! [[models]]
//! kind = "snmu"                    # nmu | snmu | stgnmu | mlp | nau_nmu | nau_snmu
//! noise = "u[1,5]"                 # stochastic kinds: "u[lo,hi]" | "batch" | "none"
//!
//! [[models]]
//! kind = "mlp"
//! width = 100
//!
//! [train]                          # optional per-field overrides
//! iterations = 50000
//!
//! [[custom_ranges]]                # explicit pairs instead of or next to names
//! name = "[3,4)"
//! train = [[3.0, 4.0]]
//! test = [[4.0, 8.0]]
//! ```
//!
//! Training defaults come from the task (`--preset desk`, the default) or
//! the full published budget (`--preset paper`); `[train]` entries override
//! either, field by field.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nalm_lab::layers::NoiseConfig;
use nalm_lab::model::ModelKind;
use nalm_lab::tasks::{builtin_range, builtin_ranges, ExtrapolationPair, RangeSpec, RangeUnion, TaskKind};
use nalm_lab::trainer::TrainConfig;

use crate::{CliError, CliResult};

/// Training-scale preset selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Desk-scale budgets (the default): full budget for the two-input task,
    /// shortened budget for the subset task.
    Desk,
    /// Published budgets for both tasks (the subset task grows to 5M
    /// iterations).
    Paper,
}

/// The experiment file as written by the user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub task: String,
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<SeedSpec>,
    pub ranges: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub custom_ranges: Vec<CustomRange>,
    pub models: Vec<ModelSpec>,
    pub train: Option<TrainOverrides>,
}

/// Either a count (seeds 0..n) or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

/// An explicit interpolation/extrapolation pairing; each side is a union of
/// half-open [lo, hi) intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomRange {
    pub name: String,
    pub train: Vec<[f64; 2]>,
    pub test: Vec<[f64; 2]>,
}

/// One model entry. Fields apply only to the kinds that use them and are
/// rejected elsewhere, so typos fail loudly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    pub noise: Option<String>,
    pub width: Option<usize>,
    pub lambda_l0: Option<f64>,
}

/// Optional per-field overrides of the preset training configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub iterations: Option<u64>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub lambda_start: Option<u64>,
    pub lambda_end: Option<u64>,
    pub eval_every: Option<u64>,
    pub val_samples: Option<usize>,
    pub test_samples: Option<usize>,
    pub grad_noise_eta: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations.unwrap_or(base.iterations),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lr: self.lr.unwrap_or(base.lr),
            lambda_hat: self.lambda_hat.unwrap_or(base.lambda_hat),
            lambda_start: self.lambda_start.unwrap_or(base.lambda_start),
            lambda_end: self.lambda_end.unwrap_or(base.lambda_end),
            eval_every: self.eval_every.unwrap_or(base.eval_every),
            val_samples: self.val_samples.unwrap_or(base.val_samples),
            test_samples: self.test_samples.unwrap_or(base.test_samples),
            grad_noise_eta: self.grad_noise_eta.or(base.grad_noise_eta),
        }
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides<'a> {
    pub out: Option<&'a Path>,
    pub seeds: Option<u64>,
    pub preset: Option<Preset>,
}

/// A fully resolved experiment: everything a sweep needs, plus the hash that
/// identifies it in result files.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub task: TaskKind,
    pub models: Vec<ModelKind>,
    pub pairs: Vec<ExtrapolationPair>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub config_hash: String,
}

pub fn load_experiment(path: &Path, overrides: &Overrides) -> CliResult<Experiment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: ExperimentFile = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config parse error in {}: {e}", path.display())))?;
    resolve(&file, overrides)
}

pub fn resolve(file: &ExperimentFile, overrides: &Overrides) -> CliResult<Experiment> {
    let task = parse_task(&file.task)?;
    if file.models.is_empty() {
        return Err(CliError::Usage("config lists no models".to_string()));
    }
    let models: Vec<ModelKind> = file
        .models
        .iter()
        .map(model_kind)
        .collect::<CliResult<_>>()?;
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|other| other.id() == m.id()) {
            return Err(CliError::Usage(format!(
                "duplicate model entry {}; run ids would collide",
                m.id()
            )));
        }
    }

    let pairs = resolve_ranges(file)?;
    let seeds = resolve_seeds(file, overrides)?;

    let preset = overrides.preset.unwrap_or(Preset::Desk);
    let base = match (task, preset) {
        (TaskKind::Smt, _) => TrainConfig::smt_default(),
        (TaskKind::Adt, Preset::Desk) => TrainConfig::adt_desk(),
        (TaskKind::Adt, Preset::Paper) => TrainConfig::adt_paper(),
    };
    let train = file.train.unwrap_or_default().apply(base);
    train
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid training configuration: {e}")))?;

    let output_dir = overrides
        .out
        .map(Path::to_path_buf)
        .or_else(|| file.output_dir.clone())
        .ok_or_else(|| {
            CliError::Usage("no output directory: set output_dir in the config or pass --out".to_string())
        })?;

    let config_hash = config_hash(task, &models, &pairs, &seeds, &train);
    Ok(Experiment {
        task,
        models,
        pairs,
        seeds,
        train,
        output_dir,
        config_hash,
    })
}

fn parse_task(s: &str) -> CliResult<TaskKind> {
    match s {
        "smt" => Ok(TaskKind::Smt),
        "adt" => Ok(TaskKind::Adt),
        other => Err(CliError::Usage(format!(
            "unknown task {other:?}; expected \"smt\" or \"adt\""
        ))),
    }
}

/// Default noise for stochastic units when the entry gives none.
const DEFAULT_NOISE: NoiseConfig = NoiseConfig::Fixed { lo: 1.0, hi: 5.0 };
const DEFAULT_MLP_WIDTH: usize = 100;
const DEFAULT_LAMBDA_L0: f64 = 0.01;

pub fn model_kind(spec: &ModelSpec) -> CliResult<ModelKind> {
    let reject = |field: &str| -> CliResult<()> {
        Err(CliError::Usage(format!(
            "model {:?} does not take {field}",
            spec.kind
        )))
    };
    match spec.kind.as_str() {
        "nmu" | "nau_nmu" => {
            if spec.noise.is_some() {
                reject("noise")?;
            }
            if spec.width.is_some() {
                reject("width")?;
            }
            if spec.lambda_l0.is_some() {
                reject("lambda_l0")?;
            }
            Ok(if spec.kind == "nmu" {
                ModelKind::Nmu
            } else {
                ModelKind::NauNmu
            })
        }
        "snmu" | "nau_snmu" => {
            if spec.width.is_some() {
                reject("width")?;
            }
            if spec.lambda_l0.is_some() {
                reject("lambda_l0")?;
            }
            let noise = match &spec.noise {
                Some(s) => parse_noise(s)?,
                None => DEFAULT_NOISE,
            };
            Ok(if spec.kind == "snmu" {
                ModelKind::Snmu { noise }
            } else {
                ModelKind::NauSnmu { noise }
            })
        }
        "stgnmu" => {
            if spec.noise.is_some() {
                reject("noise")?;
            }
            if spec.width.is_some() {
                reject("width")?;
            }
            let lambda_l0 = spec.lambda_l0.unwrap_or(DEFAULT_LAMBDA_L0);
            if !(lambda_l0 >= 0.0) {
                return Err(CliError::Usage(format!(
                    "lambda_l0 must be nonnegative, got {lambda_l0}"
                )));
            }
            Ok(ModelKind::StgNmu { lambda_l0 })
        }
        "mlp" => {
            if spec.noise.is_some() {
                reject("noise")?;
            }
            if spec.lambda_l0.is_some() {
                reject("lambda_l0")?;
            }
            let width = spec.width.unwrap_or(DEFAULT_MLP_WIDTH);
            if width == 0 {
                return Err(CliError::Usage("mlp width must be positive".to_string()));
            }
            Ok(ModelKind::Mlp { width })
        }
        other => Err(CliError::Usage(format!(
            "unknown model kind {other:?}; expected nmu, snmu, stgnmu, mlp, nau_nmu, or nau_snmu"
        ))),
    }
}

/// Noise strings: "none", "batch", or "u[lo,hi]" with 0 < lo <= hi.
pub fn parse_noise(s: &str) -> CliResult<NoiseConfig> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "none" => return Ok(NoiseConfig::None),
        "batch" => return Ok(NoiseConfig::BatchStat),
        _ => {}
    }
    let bad = || CliError::Usage(format!("bad noise {s:?}; expected \"u[lo,hi]\", \"batch\", or \"none\""));
    let body = t
        .strip_prefix("u[")
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(bad)?;
    let (lo_s, hi_s) = body.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo_s.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi_s.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(CliError::Usage(format!(
            "noise bounds must satisfy 0 < lo <= hi, got [{lo},{hi}]"
        )));
    }
    Ok(NoiseConfig::Fixed { lo, hi })
}

fn resolve_ranges(file: &ExperimentFile) -> CliResult<Vec<ExtrapolationPair>> {
    let mut pairs: Vec<ExtrapolationPair> = Vec::new();
    match &file.ranges {
        None if file.custom_ranges.is_empty() => pairs = builtin_ranges(),
        None => {}
        Some(names) => {
            for name in names {
                let pair = builtin_range(name).ok_or_else(|| {
                    let known: Vec<String> =
                        builtin_ranges().into_iter().map(|p| p.name).collect();
                    CliError::Usage(format!(
                        "unknown range {name:?}; built-ins: {}",
                        known.join(", ")
                    ))
                })?;
                pairs.push(pair);
            }
        }
    }
    for custom in &file.custom_ranges {
        pairs.push(custom_pair(custom)?);
    }
    if pairs.is_empty() {
        return Err(CliError::Usage("config lists no ranges".to_string()));
    }
    for (i, p) in pairs.iter().enumerate() {
        if pairs[..i].iter().any(|q| q.name == p.name) {
            return Err(CliError::Usage(format!("duplicate range {:?}", p.name)));
        }
    }
    Ok(pairs)
}

fn parts_of(name: &str, side: &str, raw: &[[f64; 2]]) -> CliResult<Vec<RangeSpec>> {
    if raw.is_empty() {
        return Err(CliError::Usage(format!(
            "custom range {name:?} has an empty {side} interval list"
        )));
    }
    raw.iter()
        .map(|&[lo, hi]| {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::Usage(format!(
                    "custom range {name:?} {side} interval [{lo},{hi}) needs finite lo < hi"
                )));
            }
            Ok(RangeSpec::new(lo, hi))
        })
        .collect()
}

fn custom_pair(custom: &CustomRange) -> CliResult<ExtrapolationPair> {
    let train = parts_of(&custom.name, "train", &custom.train)?;
    let test = parts_of(&custom.name, "test", &custom.test)?;
    for a in &train {
        for b in &test {
            if a.lo < b.hi && b.lo < a.hi {
                return Err(CliError::Usage(format!(
                    "custom range {:?}: train {a} overlaps test {b}; interpolation and extrapolation intervals must be disjoint",
                    custom.name
                )));
            }
        }
    }
    Ok(ExtrapolationPair {
        name: custom.name.clone(),
        train: RangeUnion::of(train),
        test: RangeUnion::of(test),
    })
}

fn resolve_seeds(file: &ExperimentFile, overrides: &Overrides) -> CliResult<Vec<u64>> {
    let spec = match (overrides.seeds, &file.seeds) {
        (Some(n), _) => SeedSpec::Count(n),
        (None, Some(s)) => s.clone(),
        (None, None) => {
            return Err(CliError::Usage(
                "no seeds: set seeds in the config or pass --seeds".to_string(),
            ))
        }
    };
    let seeds = match spec {
        SeedSpec::Count(n) => (0..n).collect::<Vec<u64>>(),
        SeedSpec::List(list) => list,
    };
    if seeds.is_empty() {
        return Err(CliError::Usage("seed list is empty".to_string()));
    }
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(CliError::Usage(format!("duplicate seed {s}")));
        }
    }
    Ok(seeds)
}

/// What the hash covers: everything that changes the results, nothing that
/// merely relocates them (output_dir, worker count).
#[derive(Serialize)]
struct HashView<'a> {
    task: TaskKind,
    models: &'a [ModelKind],
    pairs: &'a [ExtrapolationPair],
    seeds: &'a [u64],
    train: &'a TrainConfig,
}

pub fn config_hash(
    task: TaskKind,
    models: &[ModelKind],
    pairs: &[ExtrapolationPair],
    seeds: &[u64],
    train: &TrainConfig,
) -> String {
    let view = HashView {
        task,
        models,
        pairs,
        seeds,
        train,
    };
    let bytes = serde_json::to_vec(&view).expect("hash view serialises");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(16);
    for b in &digest[..8] {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentFile {
        toml::from_str(
            r#"
            task = "smt"
            seeds = 2
            ranges = ["[1,2)"]
            [[models]]
            kind = "nmu"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_file_resolves_with_defaults() {
        let file = minimal();
        let exp = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exp.task, TaskKind::Smt);
        assert_eq!(exp.models, vec![ModelKind::Nmu]);
        assert_eq!(exp.seeds, vec![0, 1]);
        assert_eq!(exp.pairs.len(), 1);
        assert_eq!(exp.train, TrainConfig::smt_default());
        assert_eq!(exp.config_hash.len(), 16);
    }

    #[test]
    fn omitted_ranges_mean_all_builtins() {
        let mut file = minimal();
        file.ranges = None;
        let exp = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exp.pairs.len(), 9);
    }

    #[test]
    fn file_round_trips_through_toml() {
        let text = r#"
            task = "adt"
            output_dir = "results/mix"
            seeds = [3, 17]
            ranges = ["[-2,2)"]

            [[models]]
            kind = "nau_snmu"
            noise = "batch"

            [[models]]
            kind = "nau_nmu"

            [train]
            iterations = 1000
            lambda_start = 100
            lambda_end = 200

            [[custom_ranges]]
            name = "wide"
            train = [[-3.0, 3.0]]
            test = [[-9.0, -3.0], [3.0, 9.0]]
        "#;
        let file: ExperimentFile = toml::from_str(text).unwrap();
        let reprinted = toml::to_string(&file).unwrap();
        let again: ExperimentFile = toml::from_str(&reprinted).unwrap();
        assert_eq!(file, again);
    }

    #[test]
    fn unknown_fields_and_kinds_are_rejected() {
        assert!(toml::from_str::<ExperimentFile>(
            r#"
            task = "smt"
            typo = true
            [[models]]
            kind = "nmu"
            "#
        )
        .is_err());
        let spec = ModelSpec {
            kind: "nalu".to_string(),
            noise: None,
            width: None,
            lambda_l0: None,
        };
        assert!(model_kind(&spec).is_err());
    }

    #[test]
    fn model_fields_are_kind_checked() {
        let bad = ModelSpec {
            kind: "nmu".to_string(),
            noise: Some("u[1,5]".to_string()),
            width: None,
            lambda_l0: None,
        };
        assert!(model_kind(&bad).is_err());
        let ok = ModelSpec {
            kind: "snmu".to_string(),
            noise: None,
            width: None,
            lambda_l0: None,
        };
        assert_eq!(
            model_kind(&ok).unwrap(),
            ModelKind::Snmu {
                noise: NoiseConfig::Fixed { lo: 1.0, hi: 5.0 }
            }
        );
        let mlp = ModelSpec {
            kind: "mlp".to_string(),
            noise: None,
            width: None,
            lambda_l0: None,
        };
        assert_eq!(model_kind(&mlp).unwrap(), ModelKind::Mlp { width: 100 });
    }

    #[test]
    fn noise_strings_parse_and_validate() {
        assert_eq!(parse_noise("none").unwrap(), NoiseConfig::None);
        assert_eq!(parse_noise("batch").unwrap(), NoiseConfig::BatchStat);
        assert_eq!(
            parse_noise("u[1, 5]").unwrap(),
            NoiseConfig::Fixed { lo: 1.0, hi: 5.0 }
        );
        assert_eq!(
            parse_noise("U[1.5,1.5]").unwrap(),
            NoiseConfig::Fixed { lo: 1.5, hi: 1.5 }
        );
        assert!(parse_noise("u[0,5]").is_err());
        assert!(parse_noise("u[5,1]").is_err());
        assert!(parse_noise("gauss").is_err());
    }

    #[test]
    fn seed_resolution_prefers_cli_and_rejects_duplicates() {
        let mut file = minimal();
        file.seeds = Some(SeedSpec::List(vec![5, 6]));
        let exp = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                seeds: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exp.seeds, vec![0, 1, 2]);

        file.seeds = Some(SeedSpec::List(vec![5, 5]));
        assert!(resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            }
        )
        .is_err());

        file.seeds = None;
        assert!(resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn custom_ranges_reject_overlap() {
        let bad = CustomRange {
            name: "x".to_string(),
            train: vec![[1.0, 3.0]],
            test: vec![[2.0, 4.0]],
        };
        assert!(custom_pair(&bad).is_err());
        let ok = CustomRange {
            name: "x".to_string(),
            train: vec![[-2.0, 2.0]],
            test: vec![[-6.0, -2.0], [2.0, 6.0]],
        };
        let pair = custom_pair(&ok).unwrap();
        assert_eq!(pair.test.parts.len(), 2);
    }

    #[test]
    fn preset_and_overrides_shape_the_train_config() {
        let mut file = minimal();
        file.task = "adt".to_string();
        let desk = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(desk.train, TrainConfig::adt_desk());

        let paper = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                preset: Some(Preset::Paper),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(paper.train, TrainConfig::adt_paper());

        file.train = Some(TrainOverrides {
            iterations: Some(1_000),
            lambda_start: Some(100),
            lambda_end: Some(200),
            ..Default::default()
        });
        let tweaked = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(tweaked.train.iterations, 1_000);
        assert_eq!(tweaked.train.batch_size, TrainConfig::adt_desk().batch_size);
    }

    #[test]
    fn invalid_override_combination_is_a_usage_error() {
        let mut file = minimal();
        // Ramp end past the iteration budget.
        file.train = Some(TrainOverrides {
            iterations: Some(1_000),
            ..Default::default()
        });
        let err = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("out")),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_tracks_results_not_location() {
        let file = minimal();
        let a = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("a")),
                ..Default::default()
            },
        )
        .unwrap();
        let b = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("b")),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.config_hash, b.config_hash);

        let c = resolve(
            &file,
            &Overrides {
                out: Some(Path::new("a")),
                seeds: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.config_hash, c.config_hash);
    }
}
