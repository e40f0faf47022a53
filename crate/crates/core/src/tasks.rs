//! Synthetic arithmetic tasks and their sampling ranges.
//!
//! Two tasks:
//!
//! - simple multiplication: inputs `x = (x1, x2)`, target `y = x1 * x2`;
//! - subset products of sums: inputs are `I` values; two (possibly
//!   overlapping) index windows of length `round(0.25 * I)` are summed and
//!   the sums multiplied. The window placement is drawn once per run and
//!   then fixed, so a run must discover which inputs matter.
//!
//! Training samples come from an interpolation range, evaluation additionally
//! from a disjoint extrapolation range; a model that memorises the training
//! range fails the extrapolation check unless it learned the arithmetic.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

// ── ranges ───────────────────────────────────────────────────────────────

/// Half-open sampling interval [lo, hi).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
}

impl RangeSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        RangeSpec { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        Uniform::new(self.lo, self.hi).sample(rng)
    }
}

impl std::fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{})", self.lo, self.hi)
    }
}

/// One or more disjoint intervals, sampled width-proportionally: the chance
/// of landing in an interval equals its share of the total width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeUnion {
    pub parts: Vec<RangeSpec>,
}

impl RangeUnion {
    pub fn single(lo: f64, hi: f64) -> Self {
        RangeUnion {
            parts: vec![RangeSpec::new(lo, hi)],
        }
    }

    pub fn of(parts: Vec<RangeSpec>) -> Self {
        RangeUnion { parts }
    }

    pub fn total_width(&self) -> f64 {
        self.parts.iter().map(|p| p.width()).sum()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.parts.len() == 1 {
            return self.parts[0].sample(rng);
        }
        // Map one uniform draw over the summed width back into the parts;
        // one draw (not two) keeps the stream consumption shape-stable.
        let total = self.total_width();
        let mut u = rng.gen::<f64>() * total;
        for p in &self.parts {
            if u < p.width() {
                return p.lo + u;
            }
            u -= p.width();
        }
        // Fall through only on u == total boundary rounding.
        let last = self.parts.last().expect("non-empty union");
        last.lo + last.width() * (1.0 - f64::EPSILON)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.parts.iter().any(|p| v >= p.lo && v < p.hi)
    }
}

impl std::fmt::Display for RangeUnion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", s.join("u"))
    }
}

/// A named train-range / extrapolation-range pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationPair {
    pub name: String,
    pub train: RangeUnion,
    pub test: RangeUnion,
}

impl ExtrapolationPair {
    fn simple(lo: f64, hi: f64, tlo: f64, thi: f64) -> Self {
        ExtrapolationPair {
            name: format!("[{},{})", lo, hi),
            train: RangeUnion::single(lo, hi),
            test: RangeUnion::single(tlo, thi),
        }
    }
}

/// The benchmark's nine interpolation/extrapolation range pairs. Names key
/// off the training interval.
pub fn builtin_ranges() -> Vec<ExtrapolationPair> {
    vec![
        ExtrapolationPair::simple(-20.0, -10.0, -40.0, -20.0),
        ExtrapolationPair::simple(-2.0, -1.0, -6.0, -2.0),
        ExtrapolationPair::simple(-1.2, -1.1, -6.1, -1.2),
        ExtrapolationPair::simple(-0.2, -0.1, -2.0, -0.2),
        ExtrapolationPair {
            name: "[-2,2)".to_string(),
            train: RangeUnion::single(-2.0, 2.0),
            test: RangeUnion::of(vec![RangeSpec::new(-6.0, -2.0), RangeSpec::new(2.0, 6.0)]),
        },
        ExtrapolationPair::simple(0.1, 0.2, 0.2, 2.0),
        ExtrapolationPair::simple(1.0, 2.0, 2.0, 6.0),
        ExtrapolationPair::simple(1.1, 1.2, 1.2, 6.0),
        ExtrapolationPair::simple(10.0, 20.0, 20.0, 40.0),
    ]
}

pub fn builtin_range(name: &str) -> Option<ExtrapolationPair> {
    builtin_ranges().into_iter().find(|p| p.name == name)
}

// ── simple multiplication ────────────────────────────────────────────────

/// Batch of the two-input multiplication task: `x` is `n x 2`, `y = x1*x2`
/// as `n x 1`.
pub fn gen_smt_batch(n: usize, range: &RangeUnion, rng: &mut impl Rng) -> (Matrix, Matrix) {
    let mut x = Matrix::zeros(n, 2);
    let mut y = Matrix::zeros(n, 1);
    for r in 0..n {
        let a = range.sample(rng);
        let b = range.sample(rng);
        x.set(r, 0, a);
        x.set(r, 1, b);
        y.set(r, 0, a * b);
    }
    (x, y)
}

// ── subset products of sums ──────────────────────────────────────────────

/// Fixed window placement for one run of the subset task. Both windows have
/// the same length; the overlap is realised by the second window starting
/// inside the first (direction chosen at spec time).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdtSpec {
    pub input_size: usize,
    pub subset_len: usize,
    pub overlap_len: usize,
    /// Start of the first window.
    pub s1: usize,
    /// Start of the second window.
    pub s2: usize,
}

impl AdtSpec {
    pub fn window1(&self) -> std::ops::Range<usize> {
        self.s1..self.s1 + self.subset_len
    }

    pub fn window2(&self) -> std::ops::Range<usize> {
        self.s2..self.s2 + self.subset_len
    }
}

/// Window geometry for the given ratios: length `round(subset_ratio * I)`,
/// overlap `floor(overlap_ratio * len)`.
pub fn adt_geometry(input_size: usize, subset_ratio: f64, overlap_ratio: f64) -> (usize, usize) {
    let subset_len = (subset_ratio * input_size as f64).round() as usize;
    let overlap_len = (overlap_ratio * subset_len as f64).floor() as usize;
    (subset_len, overlap_len)
}

/// Draw a window placement: the first start uniform over feasible positions,
/// the second shifted left or right (uniform) by `len - overlap` so the
/// required overlap holds, falling back to the feasible direction when the
/// preferred one would leave the index range.
pub fn gen_adt_spec(
    input_size: usize,
    subset_ratio: f64,
    overlap_ratio: f64,
    rng: &mut impl Rng,
) -> Result<AdtSpec> {
    if !(0.0..=1.0).contains(&subset_ratio) || !(0.0..=1.0).contains(&overlap_ratio) {
        return Err(Error::invalid(format!(
            "ratios must lie in [0,1], got subset {subset_ratio}, overlap {overlap_ratio}"
        )));
    }
    let (subset_len, overlap_len) = adt_geometry(input_size, subset_ratio, overlap_ratio);
    if subset_len == 0 {
        return Err(Error::invalid(format!(
            "input_size {input_size} with subset ratio {subset_ratio} gives an empty window"
        )));
    }
    let shift = subset_len - overlap_len;
    if subset_len + shift > input_size {
        return Err(Error::invalid(format!(
            "input_size {input_size} cannot fit two windows of {subset_len} with overlap {overlap_len}"
        )));
    }
    let s1_max = input_size - subset_len; // inclusive
    let s1 = rng.gen_range(0..=s1_max);
    let go_right = rng.gen_bool(0.5);
    let right_ok = s1 + shift <= s1_max;
    let left_ok = s1 >= shift;
    let s2 = match (go_right, right_ok, left_ok) {
        (true, true, _) => s1 + shift,
        (false, _, true) => s1 - shift,
        (true, false, true) => s1 - shift,
        (false, true, false) => s1 + shift,
        (_, false, false) => unreachable!("feasibility checked above"),
    };
    Ok(AdtSpec {
        input_size,
        subset_len,
        overlap_len,
        s1,
        s2,
    })
}

/// Target for one input row under a fixed placement: the product of the two
/// window sums. Sums run in index order so recomputation is bit-identical.
pub fn adt_target(spec: &AdtSpec, row: &[f64]) -> f64 {
    let sum = |r: std::ops::Range<usize>| -> f64 {
        let mut s = 0.0;
        for i in r {
            s += row[i];
        }
        s
    };
    sum(spec.window1()) * sum(spec.window2())
}

/// Batch of the subset task: `x` is `n x I` sampled from `range`, `y` the
/// window-sum product.
pub fn gen_adt_batch(
    n: usize,
    spec: &AdtSpec,
    range: &RangeUnion,
    rng: &mut impl Rng,
) -> (Matrix, Matrix) {
    let mut x = Matrix::zeros(n, spec.input_size);
    let mut y = Matrix::zeros(n, 1);
    for r in 0..n {
        for c in 0..spec.input_size {
            x.set(r, c, range.sample(rng));
        }
        y.set(r, 0, adt_target(spec, x.row(r)));
    }
    (x, y)
}

/// Which task a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Smt,
    Adt,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskKind::Smt => write!(f, "smt"),
            TaskKind::Adt => write!(f, "adt"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn builtin_ranges_are_the_nine_benchmark_pairs() {
        let rs = builtin_ranges();
        assert_eq!(rs.len(), 9);
        let by_name = |n: &str| builtin_range(n).unwrap();
        let p = by_name("[1,2)");
        assert_eq!(p.train.parts[0], RangeSpec::new(1.0, 2.0));
        assert_eq!(p.test.parts[0], RangeSpec::new(2.0, 6.0));
        let p = by_name("[-2,2)");
        assert_eq!(p.test.parts.len(), 2);
        assert_eq!(p.test.parts[0], RangeSpec::new(-6.0, -2.0));
        assert_eq!(p.test.parts[1], RangeSpec::new(2.0, 6.0));
        let p = by_name("[-1.2,-1.1)");
        assert_eq!(p.test.parts[0], RangeSpec::new(-6.1, -1.2));
        assert!(builtin_range("[3,4)").is_none());
    }

    #[test]
    fn union_sampling_is_width_proportional() {
        let mut rng = stream(20, "test");
        // Widths 4 and 4: expect close to an even split.
        let u = RangeUnion::of(vec![RangeSpec::new(-6.0, -2.0), RangeSpec::new(2.0, 6.0)]);
        let n = 20_000;
        let mut neg = 0usize;
        for _ in 0..n {
            let v = u.sample(&mut rng);
            assert!(u.contains(v));
            if v < 0.0 {
                neg += 1;
            }
        }
        let frac = neg as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "negative fraction {frac}");

        // Widths 1 and 3: expect 25/75.
        let u = RangeUnion::of(vec![RangeSpec::new(0.0, 1.0), RangeSpec::new(10.0, 13.0)]);
        let mut low = 0usize;
        for _ in 0..n {
            if u.sample(&mut rng) < 5.0 {
                low += 1;
            }
        }
        let frac = low as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.02, "low fraction {frac}");
    }

    #[test]
    fn smt_batch_targets_are_products() {
        let mut rng = stream(21, "train-data");
        let range = RangeUnion::single(1.0, 2.0);
        let (x, y) = gen_smt_batch(64, &range, &mut rng);
        assert_eq!(x.shape(), (64, 2));
        assert_eq!(y.shape(), (64, 1));
        for r in 0..64 {
            assert_eq!(y.at(r, 0), x.at(r, 0) * x.at(r, 1));
            assert!(range.contains(x.at(r, 0)));
            assert!(range.contains(x.at(r, 1)));
        }
    }

    #[test]
    fn adt_geometry_at_benchmark_size() {
        let (len, ov) = adt_geometry(100, 0.25, 0.5);
        assert_eq!(len, 25);
        assert_eq!(ov, 12);
        // Small sizes round half-up: 0.25 * 10 = 2.5 -> 3.
        assert_eq!(adt_geometry(10, 0.25, 0.5), (3, 1));
        assert_eq!(adt_geometry(2, 0.25, 0.5), (1, 0));
    }

    #[test]
    fn adt_spec_windows_overlap_as_declared() {
        let mut rng = stream(22, "task-spec");
        for _ in 0..500 {
            let spec = gen_adt_spec(100, 0.25, 0.5, &mut rng).unwrap();
            assert_eq!(spec.subset_len, 25);
            assert_eq!(spec.overlap_len, 12);
            let w1 = spec.window1();
            let w2 = spec.window2();
            assert!(w1.end <= 100 && w2.end <= 100);
            let overlap = w1.start.max(w2.start)..w1.end.min(w2.end);
            assert_eq!(overlap.len(), 12, "spec {spec:?}");
        }
    }

    #[test]
    fn adt_spec_rejects_impossible_sizes() {
        let mut rng = stream(23, "task-spec");
        // I=1: window length round(0.25) = 0.
        assert!(gen_adt_spec(1, 0.25, 0.5, &mut rng).is_err());
    }

    #[test]
    fn adt_target_hand_value() {
        let spec = AdtSpec {
            input_size: 6,
            subset_len: 2,
            overlap_len: 1,
            s1: 1,
            s2: 2,
        };
        // windows [1,3) and [2,4): (2+3) * (3+4) = 35
        let row = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(adt_target(&spec, &row), 35.0);
    }

    #[test]
    fn adt_batch_targets_match_recomputation() {
        let mut rng = stream(24, "train-data");
        let spec = gen_adt_spec(100, 0.25, 0.5, &mut stream(24, "task-spec")).unwrap();
        let range = RangeUnion::single(-2.0, 2.0);
        let (x, y) = gen_adt_batch(16, &spec, &range, &mut rng);
        for r in 0..16 {
            assert_eq!(y.at(r, 0), adt_target(&spec, x.row(r)));
        }
    }

    #[test]
    fn same_seed_reproduces_batches() {
        let range = builtin_range("[1,2)").unwrap();
        let (x1, y1) = gen_smt_batch(32, &range.train, &mut stream(5, "train-data"));
        let (x2, y2) = gen_smt_batch(32, &range.train, &mut stream(5, "train-data"));
        assert_eq!(x1, x2);
        assert_eq!(y1, y2);
    }

    proptest! {
        #[test]
        fn adt_spec_is_always_feasible(input_size in 2usize..200, seed in 0u64..500) {
            let mut rng = stream(seed, "task-spec");
            let spec = gen_adt_spec(input_size, 0.25, 0.5, &mut rng).unwrap();
            prop_assert!(spec.window1().end <= input_size);
            prop_assert!(spec.window2().end <= input_size);
            let w1 = spec.window1();
            let w2 = spec.window2();
            let overlap = w1.start.max(w2.start)..w1.end.min(w2.end);
            prop_assert_eq!(overlap.len(), spec.overlap_len);
        }

        #[test]
        fn union_samples_stay_inside(seed in 0u64..200) {
            let mut rng = stream(seed, "test");
            for pair in builtin_ranges() {
                for _ in 0..50 {
                    let v = pair.train.sample(&mut rng);
                    prop_assert!(pair.train.contains(v), "{} not in {}", v, pair.train);
                    let v = pair.test.sample(&mut rng);
                    prop_assert!(pair.test.contains(v), "{} not in {}", v, pair.test);
                }
            }
        }
    }
}
