//! The linear-model world: labels carried by a fixed signal direction `u`,
//! `D` dimensions of pure Gaussian noise, a classifier trained by a single
//! pass of unit-rate gradient steps from zero, and the decision rules of a
//! single-point membership adversary and of a dataset-level ownership test.
//!
//! The closed forms are exposed next to Monte Carlo estimators that run the
//! same sampling, training and decision code, so every closed form can be
//! checked against simulation.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derived_rng, rng_from, stream, Rng};
use crate::stats::std_normal_cdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Signal dimensions.
    pub k: usize,
    /// Noise dimensions.
    pub d: usize,
    pub sigma: f64,
    /// Fixed signal direction, length `k`.
    pub u: Vec<f64>,
    /// Training-set size.
    pub m: usize,
}

impl TheoryParams {
    pub fn new(k: usize, d: usize, sigma: f64, u: Vec<f64>, m: usize) -> Result<Self> {
        if k == 0 || d == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "K, D and m must be positive (K={k}, D={d}, m={m})"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if u.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: u.len() });
        }
        let norm2: f64 = u.iter().map(|v| v * v).sum();
        if !(norm2 > 0.0 && norm2.is_finite()) {
            return Err(Error::InvalidParameter("signal direction u must be nonzero".into()));
        }
        Ok(Self { k, d, sigma, u, m })
    }

    /// `u` is the all-ones vector scaled to unit length.
    pub fn with_unit_u(k: usize, d: usize, sigma: f64, m: usize) -> Result<Self> {
        let v = 1.0 / (k.max(1) as f64).sqrt();
        Self::new(k, d, sigma, vec![v; k], m)
    }

    pub fn u_norm_sq(&self) -> f64 {
        self.u.iter().map(|v| v * v).sum()
    }

    pub fn with_m(&self, m: usize) -> Result<Self> {
        Self::new(self.k, self.d, self.sigma, self.u.clone(), m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// -1 or +1
    pub y: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryDataset {
    pub points: Vec<TheoryPoint>,
    pub params: TheoryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    /// Deterministic part of every margin, `w1 . u = m |u|^2`.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiDecisionConfig {
    pub t: f64,
}

impl MiDecisionConfig {
    pub fn midpoint(params: &TheoryParams) -> Self {
        Self { t: params.d as f64 * params.sigma * params.sigma / 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiDecisionConfig {
    pub lambda: f64,
}

impl DiDecisionConfig {
    /// `lambda = D sigma^2 / 2`
    pub fn optimal(params: &TheoryParams) -> Self {
        Self { lambda: params.d as f64 * params.sigma * params.sigma / 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiDecision {
    Member,
    Nonmember,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiDecision {
    Stolen,
    NotStolen,
}

fn sample_point(params: &TheoryParams, rng: &mut Rng) -> TheoryPoint {
    let y: i8 = if rng.random::<bool>() { 1 } else { -1 };
    let yf = f64::from(y);
    let x1 = params.u.iter().map(|v| yf * v).collect();
    let x2 = (0..params.d)
        .map(|_| params.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    TheoryPoint { x1, x2, y }
}

fn sample_points(params: &TheoryParams, n: usize, rng: &mut Rng) -> Vec<TheoryPoint> {
    (0..n).map(|_| sample_point(params, rng)).collect()
}

fn sample_with(params: &TheoryParams, n: usize, rng: &mut Rng) -> TheoryDataset {
    TheoryDataset { points: sample_points(params, n, rng), params: params.clone() }
}

/// Draws `params.m` i.i.d. points. Deterministic given `seed`.
pub fn sample_theory_dataset(params: &TheoryParams, seed: u64) -> TheoryDataset {
    let mut rng = rng_from(seed);
    sample_with(params, params.m, &mut rng)
}

/// One pass over the data with learning rate 1 from zero weights, maximizing
/// `y f(x)`: every point adds `y x` to the weights.
pub fn train_one_pass(data: &TheoryDataset) -> Result<LinearClassifier> {
    if data.points.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let p = &data.params;
    let mut w1 = vec![0.0; p.k];
    let mut w2 = vec![0.0; p.d];
    for pt in &data.points {
        let y = f64::from(pt.y);
        for (w, x) in w1.iter_mut().zip(&pt.x1) {
            *w += y * x;
        }
        for (w, x) in w2.iter_mut().zip(&pt.x2) {
            *w += y * x;
        }
    }
    let c = dot(&w1, &p.u);
    Ok(LinearClassifier { w1, w2, c })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y (w1 . x1 + w2 . x2)`
pub fn margin(f: &LinearClassifier, p: &TheoryPoint) -> Result<f64> {
    if f.w1.len() != p.x1.len() {
        return Err(Error::DimensionMismatch { expected: f.w1.len(), got: p.x1.len() });
    }
    if f.w2.len() != p.x2.len() {
        return Err(Error::DimensionMismatch { expected: f.w2.len(), got: p.x2.len() });
    }
    Ok(f64::from(p.y) * (dot(&f.w1, &p.x1) + dot(&f.w2, &p.x2)))
}

/// Member iff `margin - c >= t`.
pub fn mi_decide(f: &LinearClassifier, p: &TheoryPoint, cfg: MiDecisionConfig) -> Result<MiDecision> {
    Ok(if margin(f, p)? - f.c >= cfg.t { MiDecision::Member } else { MiDecision::Nonmember })
}

fn mean_margin(f: &LinearClassifier, points: &[TheoryPoint]) -> Result<f64> {
    let mut s = 0.0;
    for p in points {
        s += margin(f, p)?;
    }
    Ok(s / points.len() as f64)
}

/// Stolen iff the candidate set's mean margin exceeds the reference set's by
/// more than `lambda`.
pub fn di_decide(
    f: &LinearClassifier,
    candidate: &TheoryDataset,
    reference: &TheoryDataset,
    cfg: DiDecisionConfig,
) -> Result<DiDecision> {
    if candidate.points.len() != reference.points.len() {
        return Err(Error::SizeMismatch(format!(
            "candidate has {} points, reference {}",
            candidate.points.len(),
            reference.points.len()
        )));
    }
    if candidate.points.is_empty() {
        return Err(Error::Empty("candidate set".into()));
    }
    let gap = mean_margin(f, &candidate.points)? - mean_margin(f, &reference.points)?;
    Ok(if gap > cfg.lambda { DiDecision::Stolen } else { DiDecision::NotStolen })
}

/// Expected train-minus-test margin gap, `D sigma^2`.
pub fn theorem1_gap(d: usize, sigma: f64) -> f64 {
    d as f64 * sigma * sigma
}

/// `1 - Phi(-sqrt(D / 2m))`: the probability that a random member's margin
/// exceeds a random non-member's.
pub fn theorem2_mi_success(d: usize, m: usize) -> f64 {
    1.0 - std_normal_cdf(-(d as f64 / (2.0 * m as f64)).sqrt())
}

/// `1 - Phi(-sqrt(D) / (2 sqrt 2))`, independent of `m`.
pub fn theorem3_di_success(d: usize) -> f64 {
    1.0 - std_normal_cdf(-(d as f64).sqrt() / (2.0 * std::f64::consts::SQRT_2))
}

/// Large-`D` accuracy of the single-point rule thresholded at `D sigma^2 / 2`:
/// both margin distributions have variance `m D sigma^4`, so the midpoint
/// rule succeeds with `Phi(sqrt(D / 4m))`.
pub fn midpoint_rule_mi_success(d: usize, m: usize) -> f64 {
    std_normal_cdf((d as f64 / (4.0 * m as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub empirical_gap: f64,
    pub margin_samples: usize,
}

/// Train-minus-test mean margin gap averaged over `trials` fresh worlds,
/// each with a training set and an equally large test set.
pub fn simulate_margin_gap(params: &TheoryParams, trials: usize, seed: u64) -> Result<GapEstimate> {
    let gaps = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(seed, stream::THEORY_GAP, i as u64);
            let train = sample_with(params, params.m, &mut rng);
            let test = sample_with(params, params.m, &mut rng);
            let f = train_one_pass(&train)?;
            Ok(mean_margin(&f, &train.points)? - mean_margin(&f, &test.points)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GapEstimate {
        empirical_gap: gaps.iter().sum::<f64>() / trials as f64,
        margin_samples: trials * params.m,
    })
}

/// Number of thresholds swept over `[0, D sigma^2]` for the best-threshold adversary.
pub const MI_THRESHOLD_GRID: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Accuracy of the `t = D sigma^2 / 2` rule on a 50/50 member/non-member mix.
    pub midpoint_rule: f64,
    /// Best accuracy over the threshold grid.
    pub best_threshold: f64,
    pub best_t: f64,
    /// Fraction of trials in which the member's margin exceeds the non-member's.
    pub paired: f64,
}

/// Each trial trains a fresh classifier and shows the adversary one member
/// and one non-member, which is the 50/50 mix evaluated in expectation.
pub fn simulate_mi(params: &TheoryParams, trials: usize, seed: u64) -> Result<MiEstimate> {
    let cfg = MiDecisionConfig::midpoint(params);
    let rows = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(seed, stream::THEORY_MI, i as u64);
            let train = sample_with(params, params.m, &mut rng);
            let f = train_one_pass(&train)?;
            let member = &train.points[rng.random_range(0..params.m)];
            let fresh = sample_point(params, &mut rng);
            let hits = u8::from(mi_decide(&f, member, cfg)? == MiDecision::Member)
                + u8::from(mi_decide(&f, &fresh, cfg)? == MiDecision::Nonmember);
            Ok((margin(&f, member)? - f.c, margin(&f, &fresh)? - f.c, hits))
        })
        .collect::<Result<Vec<(f64, f64, u8)>>>()?;

    let n = trials as f64;
    let midpoint_rule = rows.iter().map(|r| f64::from(r.2)).sum::<f64>() / (2.0 * n);
    let paired = rows.iter().filter(|r| r.0 > r.1).count() as f64 / n;
    let top = theorem1_gap(params.d, params.sigma);
    let (mut best_threshold, mut best_t) = (f64::NEG_INFINITY, 0.0);
    for g in 0..MI_THRESHOLD_GRID {
        let t = top * g as f64 / (MI_THRESHOLD_GRID - 1) as f64;
        let hits: usize = rows
            .iter()
            .map(|r| usize::from(r.0 >= t) + usize::from(r.1 < t))
            .sum();
        let acc = hits as f64 / (2.0 * n);
        if acc > best_threshold {
            best_threshold = acc;
            best_t = t;
        }
    }
    Ok(MiEstimate { midpoint_rule, best_threshold, best_t, paired })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiEstimate {
    /// Mean of the two per-arm success rates (uniform hidden bit).
    pub accuracy: f64,
    /// Rate of `stolen` when the suspect was trained on the victim's set.
    pub stolen_arm: f64,
    /// Rate of `not_stolen` when the suspect was trained on its own set.
    pub independent_arm: f64,
}

/// Each trial evaluates both values of the hidden bit: a suspect trained on
/// the victim's set, and one trained on an independent draw of equal size.
pub fn simulate_di(params: &TheoryParams, trials: usize, seed: u64) -> Result<DiEstimate> {
    let cfg = DiDecisionConfig::optimal(params);
    let rows = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(seed, stream::THEORY_DI, i as u64);
            let victim = sample_with(params, params.m, &mut rng);
            let reference = sample_with(params, params.m, &mut rng);
            let other = sample_with(params, params.m, &mut rng);
            let stolen = train_one_pass(&victim)?;
            let honest = train_one_pass(&other)?;
            Ok((
                di_decide(&stolen, &victim, &reference, cfg)? == DiDecision::Stolen,
                di_decide(&honest, &victim, &reference, cfg)? == DiDecision::NotStolen,
            ))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;
    let n = trials as f64;
    let stolen_arm = rows.iter().filter(|r| r.0).count() as f64 / n;
    let independent_arm = rows.iter().filter(|r| r.1).count() as f64 / n;
    Ok(DiEstimate { accuracy: 0.5 * (stolen_arm + independent_arm), stolen_arm, independent_arm })
}

/// Empirical versus closed-form values for all three results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub empirical_gap: f64,
    pub closed_gap: f64,
    pub gap_abs_deviation: f64,
    pub empirical_mi: f64,
    pub closed_mi: f64,
    pub mi_abs_deviation: f64,
    pub empirical_di: f64,
    pub closed_di: f64,
    pub di_abs_deviation: f64,
    pub trials: usize,
    pub params: TheoryParams,
    pub seed: u64,
    pub margin_samples: usize,
    pub mi_best_threshold: f64,
    pub mi_best_t: f64,
    pub mi_paired: f64,
    pub closed_mi_midpoint_rule: f64,
    pub di_stolen_arm: f64,
    pub di_independent_arm: f64,
}

pub fn monte_carlo_verify(params: &TheoryParams, trials: usize, seed: u64) -> Result<TheoryReport> {
    if trials < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 trials, got {trials}")));
    }
    let gap = simulate_margin_gap(params, trials, seed)?;
    let mi = simulate_mi(params, trials, seed)?;
    let di = simulate_di(params, trials, seed)?;
    let closed_gap = theorem1_gap(params.d, params.sigma);
    let closed_mi = theorem2_mi_success(params.d, params.m);
    let closed_di = theorem3_di_success(params.d);
    Ok(TheoryReport {
        empirical_gap: gap.empirical_gap,
        closed_gap,
        gap_abs_deviation: (gap.empirical_gap - closed_gap).abs(),
        empirical_mi: mi.midpoint_rule,
        closed_mi,
        mi_abs_deviation: (mi.midpoint_rule - closed_mi).abs(),
        empirical_di: di.accuracy,
        closed_di,
        di_abs_deviation: (di.accuracy - closed_di).abs(),
        trials,
        params: params.clone(),
        seed,
        margin_samples: gap.margin_samples,
        mi_best_threshold: mi.best_threshold,
        mi_best_t: mi.best_t,
        mi_paired: mi.paired,
        closed_mi_midpoint_rule: midpoint_rule_mi_success(params.d, params.m),
        di_stolen_arm: di.stolen_arm,
        di_independent_arm: di.independent_arm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn point(x1: f64, x2: f64, y: i8) -> TheoryPoint {
        TheoryPoint { x1: vec![x1], x2: vec![x2], y }
    }

    fn tiny_params(m: usize) -> TheoryParams {
        TheoryParams::new(1, 1, 1.0, vec![1.0], m).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(TheoryParams::new(0, 1, 1.0, vec![], 1).is_err());
        assert!(TheoryParams::new(1, 1, 0.0, vec![1.0], 1).is_err());
        assert!(TheoryParams::new(1, 1, 1.0, vec![0.0], 1).is_err());
        assert!(TheoryParams::new(2, 1, 1.0, vec![1.0], 1).is_err());
        let p = TheoryParams::with_unit_u(4, 3, 0.5, 10).unwrap();
        assert_abs_diff_eq!(p.u_norm_sq(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn near_zero_noise_sampling() {
        let p = TheoryParams::new(1, 1, 1e-12, vec![1.0], 4).unwrap();
        let data = sample_theory_dataset(&p, 3);
        assert_eq!(data.points.len(), 4);
        for pt in &data.points {
            assert!(pt.x2[0].abs() < 1e-9);
            assert_eq!(pt.x1[0], f64::from(pt.y));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = TheoryParams::with_unit_u(3, 5, 1.0, 20).unwrap();
        assert_eq!(sample_theory_dataset(&p, 9), sample_theory_dataset(&p, 9));
        assert_ne!(sample_theory_dataset(&p, 9), sample_theory_dataset(&p, 10));
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let p = TheoryParams::with_unit_u(2, 1000, 1.0, 5000).unwrap();
        let data = sample_theory_dataset(&p, 1);
        let n = (p.d * p.m) as f64;
        let all = data.points.iter().flat_map(|pt| pt.x2.iter());
        let mean = all.clone().sum::<f64>() / n;
        let var = all.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn one_pass_training_hand_example() {
        let data = TheoryDataset {
            points: vec![point(1.0, 0.5, 1), point(-1.0, 0.2, -1)],
            params: tiny_params(2),
        };
        let f = train_one_pass(&data).unwrap();
        assert_eq!(f.w1, vec![2.0]);
        assert_abs_diff_eq!(f.w2[0], 0.3, epsilon = 1e-15);
        assert_eq!(f.c, 2.0);
    }

    #[test]
    fn one_pass_zero_noise_and_shuffle() {
        let p = TheoryParams::with_unit_u(3, 4, 1.0, 50).unwrap();
        let mut data = sample_theory_dataset(&p, 5);
        let f = train_one_pass(&data).unwrap();
        for (w, u) in f.w1.iter().zip(&p.u) {
            assert_abs_diff_eq!(*w, 50.0 * u, epsilon = 1e-12);
        }
        data.points.reverse();
        let g = train_one_pass(&data).unwrap();
        for (a, b) in f.w2.iter().zip(&g.w2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for pt in &mut data.points {
            pt.x2.iter_mut().for_each(|v| *v = 0.0);
        }
        assert!(train_one_pass(&data).unwrap().w2.iter().all(|w| *w == 0.0));
        let empty = TheoryDataset { points: vec![], params: p };
        assert!(train_one_pass(&empty).is_err());
    }

    #[test]
    fn margin_examples() {
        let f = LinearClassifier { w1: vec![2.0], w2: vec![0.3], c: 2.0 };
        assert_abs_diff_eq!(margin(&f, &point(1.0, 0.5, 1)).unwrap(), 2.15, epsilon = 1e-12);
        // noise-free point sits exactly at c
        assert_eq!(margin(&f, &point(-1.0, 0.0, -1)).unwrap(), f.c);
        // negating y and x1 together
        let a = margin(&f, &point(1.0, 0.0, 1)).unwrap();
        let b = margin(&f, &point(-1.0, 0.0, -1)).unwrap();
        assert_eq!(a, b);
        let bad = TheoryPoint { x1: vec![1.0, 1.0], x2: vec![0.0], y: 1 };
        assert!(margin(&f, &bad).is_err());
    }

    #[test]
    fn mi_rule_boundaries() {
        let f = LinearClassifier { w1: vec![2.0], w2: vec![1.0], c: 2.0 };
        // margin exactly c at t = 0 is a member
        assert_eq!(
            mi_decide(&f, &point(1.0, 0.0, 1), MiDecisionConfig { t: 0.0 }).unwrap(),
            MiDecision::Member
        );
        // D sigma^2 = 1; margin = c + 0.5 against t = 1
        assert_eq!(
            mi_decide(&f, &point(1.0, 0.5, 1), MiDecisionConfig { t: 1.0 }).unwrap(),
            MiDecision::Nonmember
        );
    }

    #[test]
    fn di_same_sets_never_stolen() {
        let p = TheoryParams::with_unit_u(2, 10, 1.0, 30).unwrap();
        let s = sample_theory_dataset(&p, 1);
        let f = train_one_pass(&s).unwrap();
        assert_eq!(
            di_decide(&f, &s, &s, DiDecisionConfig { lambda: 1e-9 }).unwrap(),
            DiDecision::NotStolen
        );
        let short = TheoryDataset { points: s.points[..5].to_vec(), params: p };
        assert!(di_decide(&f, &s, &short, DiDecisionConfig::optimal(&s.params)).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(theorem1_gap(100, 0.5), 25.0);
        assert_eq!(theorem1_gap(7, 0.0), 0.0);
        assert_eq!(theorem2_mi_success(0, 10), 0.5);
        assert_abs_diff_eq!(theorem2_mi_success(200, 100), 0.841_344_746, epsilon = 1e-7);
        assert_abs_diff_eq!(theorem2_mi_success(900, 50_000), 0.5378, epsilon = 1e-4);
        assert_eq!(theorem3_di_success(0), 0.5);
        assert_abs_diff_eq!(theorem3_di_success(8), 0.841_344_746, epsilon = 1e-7);
        // 1 - 1.4e-26 rounds to 1 in double precision; the tail itself is checked in stats
        assert_eq!(theorem3_di_success(900), 1.0);
        // the 0.526 example value is the midpoint-rule accuracy
        assert_abs_diff_eq!(midpoint_rule_mi_success(900, 50_000), 0.5268, epsilon = 1e-4);
    }

    #[test]
    fn monte_carlo_requires_enough_trials() {
        let p = TheoryParams::with_unit_u(2, 4, 1.0, 5).unwrap();
        assert!(monte_carlo_verify(&p, 99, 0).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let p = TheoryParams::with_unit_u(2, 8, 1.0, 20).unwrap();
        let a = monte_carlo_verify(&p, 100, 4).unwrap();
        let b = monte_carlo_verify(&p, 100, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paired_mi_tracks_closed_form() {
        // The closed form is the member-beats-non-member probability.
        let p = TheoryParams::with_unit_u(10, 100, 1.0, 50).unwrap();
        let est = simulate_mi(&p, 4000, 11).unwrap();
        assert!((est.paired - theorem2_mi_success(100, 50)).abs() < 0.02, "{est:?}");
        assert!((est.midpoint_rule - midpoint_rule_mi_success(100, 50)).abs() < 0.03, "{est:?}");
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn one_pass_weights_are_exact(k in 1usize..5, d in 1usize..8, m in 1usize..40, seed in any::<u64>()) {
                let p = TheoryParams::with_unit_u(k, d, 0.7, m).unwrap();
                let data = sample_theory_dataset(&p, seed);
                let f = train_one_pass(&data).unwrap();
                // m * u accumulated in the same order is exact
                let mut expect_w1 = vec![0.0; k];
                for pt in &data.points {
                    for (w, x) in expect_w1.iter_mut().zip(&pt.x1) { *w += f64::from(pt.y) * x; }
                }
                prop_assert_eq!(&f.w1, &expect_w1);
                for (i, w) in f.w1.iter().enumerate() {
                    prop_assert!((w - m as f64 * p.u[i]).abs() <= 1e-12 * m as f64);
                }
                let mut expect_w2 = vec![0.0; d];
                for pt in &data.points {
                    for (w, x) in expect_w2.iter_mut().zip(&pt.x2) { *w += f64::from(pt.y) * x; }
                }
                prop_assert_eq!(&f.w2, &expect_w2);
            }

            #[test]
            fn success_probabilities_in_range(d in 0usize..5000, m in 1usize..100_000) {
                let a = theorem2_mi_success(d, m);
                let b = theorem3_di_success(d);
                prop_assert!((0.5..=1.0).contains(&a));
                prop_assert!((0.5..=1.0).contains(&b));
            }
        }
    }
}
