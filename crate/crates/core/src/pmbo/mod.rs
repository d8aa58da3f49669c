//! Parallel model-based optimization of the bi-objective architecture
//! search: software cost `1 - f1` versus hardware cost (trainable
//! parameter count).

pub mod meta;
pub mod search;
pub mod space;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use meta::{train_meta, MetaNetwork, MetaNetworkConfig};
pub use search::{
    load_search_log, run_search, surrogate_objective, SearchConfig, SearchOutcome,
};
pub use space::{HyperParams, HyperSpace};

/// A completed experiment: a hyperparameter set with its measured costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Experiment {
    pub params: HyperParams,
    /// `1 - f1`, in [0, 1].
    pub software_cost: f64,
    /// Trainable parameter count.
    pub hardware_cost: u64,
}

impl Experiment {
    pub fn costs(&self) -> (f64, u64) {
        (self.software_cost, self.hardware_cost)
    }
}

/// Strict Pareto domination for this minimization problem: better on both
/// costs.
pub fn dominates(a: (f64, u64), b: (f64, u64)) -> bool {
    a.0 < b.0 && a.1 < b.1
}

/// The set of completed experiments.
#[derive(Debug, Clone, Default)]
pub struct MetaDataset {
    experiments: Vec<Experiment>,
}

impl MetaDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_experiments(experiments: Vec<Experiment>) -> Self {
        let mut ds = Self::new();
        for e in experiments {
            ds.push(e);
        }
        ds
    }

    /// Appends unless the hyperparameter set was already tested.
    /// Returns whether the experiment was inserted.
    pub fn push(&mut self, e: Experiment) -> bool {
        if self.contains_params(&e.params) {
            return false;
        }
        self.experiments.push(e);
        true
    }

    pub fn contains_params(&self, h: &HyperParams) -> bool {
        self.experiments.iter().any(|e| &e.params == h)
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn min_software_cost(&self) -> Option<f64> {
        self.experiments.iter().map(|e| e.software_cost).min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Non-dominated members, sorted by hardware cost.
    pub fn pareto_front(&self) -> Vec<&Experiment> {
        let mut front: Vec<&Experiment> = self
            .experiments
            .iter()
            .filter(|e| {
                !self.experiments.iter().any(|other| dominates(other.costs(), e.costs()))
            })
            .collect();
        front.sort_by_key(|e| e.hardware_cost);
        front
    }
}

/// `(D, d)`: how many members the candidate dominates, and how many
/// dominate it. The dataset must be non-empty.
pub fn domination_counts(candidate: (f64, u64), dataset: &MetaDataset) -> Result<(usize, usize)> {
    if dataset.is_empty() {
        return Err(Error::Contract("domination counts need a non-empty meta dataset".into()));
    }
    let dominated =
        dataset.experiments.iter().filter(|e| dominates(candidate, e.costs())).count();
    let dominating =
        dataset.experiments.iter().filter(|e| dominates(e.costs(), candidate)).count();
    Ok((dominated, dominating))
}

/// Candidate sampling parameters.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerConfig {
    /// Candidates evaluated per proposal (m).
    pub candidates_per_proposal: usize,
    /// Fraction of candidates drawn uniformly over the whole space
    /// instead of around the last completed experiment (noise type 1).
    pub uniform_fraction: f64,
    /// Probability of proposing a random candidate instead of the
    /// efficiency argmax (noise type 2).
    pub random_selection_prob: f64,
    /// Acceptable hardware-cost range.
    pub hardware_range: (u64, u64),
    /// Bins for the hardware-density penalty.
    pub density_bins: usize,
    /// Gaussian proposal sigma as a fraction of each dimension's range.
    pub gaussian_scale: f64,
    /// Resampling attempts per candidate slot before giving up.
    pub resample_cap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            candidates_per_proposal: 200,
            uniform_fraction: 0.25,
            random_selection_prob: 0.1,
            hardware_range: (1000, 80000),
            density_bins: 10,
            gaussian_scale: 0.1,
            resample_cap: 1000,
        }
    }
}

impl SamplerConfig {
    /// Bin index of a hardware cost over the configured range.
    pub fn hardware_bin(&self, hardware_cost: u64) -> usize {
        let (lo, hi) = self.hardware_range;
        let width = (hi - lo) as f64 / self.density_bins as f64;
        let idx = ((hardware_cost.saturating_sub(lo)) as f64 / width).floor() as i64;
        idx.clamp(0, self.density_bins as i64 - 1) as usize
    }
}

/// Heuristic Pareto efficiency of a candidate with predicted software
/// cost `ls_hat` and known hardware cost:
///
/// ```text
/// eta = a + b + s - h
/// a = 1 - d/|E|        (few members dominate it)
/// b = D/|E|            (it dominates many members)
/// s = min_Ls / ls_hat  (better than the best seen software cost)
/// h = bin_fraction * bins  (hardware-density penalty; > 1 in crowded
///                           bins, < 1 in sparse ones)
/// ```
pub fn efficiency(
    ls_hat: f64,
    hardware_cost: u64,
    dataset: &MetaDataset,
    cfg: &SamplerConfig,
) -> Result<f64> {
    let ls_hat = ls_hat.max(1e-6);
    let (dominated, dominating) = domination_counts((ls_hat, hardware_cost), dataset)?;
    let n = dataset.len() as f64;
    let a = 1.0 - dominating as f64 / n;
    let b = dominated as f64 / n;
    let s = dataset.min_software_cost().expect("non-empty") / ls_hat;
    let bin = cfg.hardware_bin(hardware_cost);
    let in_bin = dataset
        .experiments
        .iter()
        .filter(|e| cfg.hardware_bin(e.hardware_cost) == bin)
        .count();
    let h = in_bin as f64 / n * cfg.density_bins as f64;
    Ok(a + b + s - h)
}

/// Area dominated by the front in normalized cost space, with reference
/// point (1, 1): software cost is already in [0, 1] and hardware cost is
/// min-max normalized over `hardware_range`.
pub fn hypervolume(experiments: &[Experiment], hardware_range: (u64, u64)) -> f64 {
    let (lo, hi) = hardware_range;
    let norm_h =
        |lh: u64| ((lh.saturating_sub(lo)) as f64 / (hi - lo) as f64).clamp(0.0, 1.0);
    let mut points: Vec<(f64, f64)> = experiments
        .iter()
        .map(|e| (norm_h(e.hardware_cost), e.software_cost.clamp(0.0, 1.0)))
        .collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Keep the staircase of strictly improving software costs.
    let mut front: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if front.last().map_or(true, |l| p.1 < l.1) {
            front.push(p);
        }
    }
    let mut area = 0.0;
    for (i, &(x, y)) in front.iter().enumerate() {
        let next_x = front.get(i + 1).map_or(1.0, |n| n.0);
        area += (next_x - x) * (1.0 - y);
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp(ls: f64, lh: u64) -> Experiment {
        // Unique params per (ls, lh) pair via the window dimension.
        let mut p = HyperParams::default();
        p.window_size_s = 0.06 + ls * 0.4 + (lh % 977) as f64 * 1e-6;
        p.batch_size = 32 + (lh as usize % 480);
        Experiment { params: p, software_cost: ls, hardware_cost: lh }
    }

    #[test]
    fn domination_is_strict_on_both_axes() {
        assert!(dominates((0.3, 1000), (0.5, 2000)));
        assert!(!dominates((0.3, 2000), (0.5, 1000)));
        assert!(!dominates((0.5, 1000), (0.3, 2000)));
        assert!(!dominates((0.3, 1000), (0.3, 1000)));
        assert!(!dominates((0.3, 1000), (0.3, 2000)));
        assert!(!dominates((0.2, 1000), (0.3, 1000)));
    }

    #[test]
    fn domination_counts_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ds = MetaDataset::new();
        for _ in 0..50 {
            ds.push(exp(rng.gen_range(0.0..1.0), rng.gen_range(1000..80000)));
        }
        for _ in 0..100 {
            let cand = (rng.gen_range(0.0..1.0), rng.gen_range(1000u64..80000));
            let (big_d, small_d) = domination_counts(cand, &ds).unwrap();
            let want_d =
                ds.experiments().iter().filter(|e| dominates(cand, e.costs())).count();
            let want_dom =
                ds.experiments().iter().filter(|e| dominates(e.costs(), cand)).count();
            assert_eq!((big_d, small_d), (want_d, want_dom));
        }
        // Boundary cases.
        let all = ds.experiments().len();
        let (d, dd) = domination_counts((-0.1, 999), &ds).unwrap();
        assert_eq!((d, dd), (all, 0));
        let member = ds.experiments()[0].costs();
        let (_, dom) = domination_counts(member, &ds).unwrap();
        // The member itself counts in neither direction.
        assert!(dom <= all - 1);
    }

    #[test]
    fn empty_dataset_is_a_contract_error() {
        let ds = MetaDataset::new();
        assert!(matches!(domination_counts((0.5, 5000), &ds), Err(Error::Contract(_))));
    }

    #[test]
    fn efficiency_worked_example_eta_3() {
        // One member (0.4, 10000); candidate (0.2, 20000) in an empty bin
        // over 10 bins of [1000, 80000]: a=1, b=0, s=2, h=0 -> eta=3.
        let mut ds = MetaDataset::new();
        ds.push(exp(0.4, 10_000));
        let cfg = SamplerConfig::default();
        assert_eq!(cfg.hardware_bin(10_000), 1);
        assert_eq!(cfg.hardware_bin(20_000), 2);
        let eta = efficiency(0.2, 20_000, &ds, &cfg).unwrap();
        assert!((eta - 3.0).abs() < 1e-12, "eta = {eta}");
    }

    #[test]
    fn efficiency_fully_dominated_in_the_crowded_bin() {
        // Candidate dominated by every member (a=0, b=0) sitting in the
        // bin holding all of the dataset (h = 10 with 10 bins); with
        // ls_hat at twice the best software cost, s = 0.5, so
        // eta = 0 + 0 + 0.5 - 10. (Strict domination by *every* member
        // is incompatible with ls_hat equaling the best cost exactly, so
        // the s = 1 case is checked separately below.)
        let mut ds = MetaDataset::new();
        for i in 0..5 {
            ds.push(exp(0.1 + i as f64 * 0.01, 5000 + i * 100));
        }
        let cfg = SamplerConfig::default();
        assert!((0..5).all(|i| cfg.hardware_bin(5000 + i * 100) == 0));
        assert_eq!(cfg.hardware_bin(7900), 0);
        let eta = efficiency(0.2, 7900, &ds, &cfg).unwrap();
        assert!((eta - (0.5 - 10.0)).abs() < 1e-12, "eta = {eta}");
    }

    #[test]
    fn efficiency_s_term_is_one_at_the_best_cost() {
        let mut ds = MetaDataset::new();
        ds.push(exp(0.25, 50_000));
        ds.push(exp(0.5, 2_000));
        let cfg = SamplerConfig::default();
        // Candidate in an empty bin, dominated by nobody, dominating
        // nobody: eta = 1 + 0 + s - 0, so s == eta - 1 == 1 exactly.
        let eta = efficiency(0.25, 30_000, &ds, &cfg).unwrap();
        assert!((eta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn efficiency_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let exps: Vec<Experiment> =
            (0..30).map(|_| exp(rng.gen_range(0.0..1.0), rng.gen_range(1000..80000))).collect();
        let cfg = SamplerConfig::default();
        let cand = (0.3, 25_000u64);
        let base = efficiency(cand.0, cand.1, &MetaDataset::from_experiments(exps.clone()), &cfg)
            .unwrap();
        for shift in 1..5 {
            let mut rotated = exps.clone();
            rotated.rotate_left(shift * 7 % exps.len());
            let eta =
                efficiency(cand.0, cand.1, &MetaDataset::from_experiments(rotated), &cfg).unwrap();
            assert!((eta - base).abs() < 1e-12);
        }
    }

    #[test]
    fn pareto_front_matches_quadratic_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut ds = MetaDataset::new();
            for _ in 0..200 {
                ds.push(exp(rng.gen_range(0.0..1.0), rng.gen_range(1000..80000)));
            }
            let front = ds.pareto_front();
            // O(n^2) oracle.
            let oracle: Vec<(f64, u64)> = ds
                .experiments()
                .iter()
                .filter(|e| {
                    !ds.experiments().iter().any(|o| dominates(o.costs(), e.costs()))
                })
                .map(|e| e.costs())
                .collect();
            assert_eq!(front.len(), oracle.len());
            for f in &front {
                assert!(oracle.contains(&f.costs()));
            }
            // Internally non-dominated and sorted by hardware cost.
            for a in &front {
                for b in &front {
                    assert!(!dominates(a.costs(), b.costs()));
                }
            }
            assert!(front.windows(2).all(|w| w[0].hardware_cost <= w[1].hardware_cost));
        }
    }

    #[test]
    fn single_experiment_is_its_own_front() {
        let mut ds = MetaDataset::new();
        ds.push(exp(0.4, 5000));
        assert_eq!(ds.pareto_front().len(), 1);
    }

    #[test]
    fn chain_front_is_the_undominated_extreme() {
        let mut ds = MetaDataset::new();
        for i in 0..5u64 {
            // Each later point dominates the previous (both costs lower).
            ds.push(exp(0.5 - i as f64 * 0.05, 10_000 - i * 1000));
        }
        let front = ds.pareto_front();
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].hardware_cost, 6000);
    }

    #[test]
    fn adding_a_dominated_point_never_shrinks_the_front() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let mut ds = MetaDataset::new();
            for _ in 0..40 {
                ds.push(exp(rng.gen_range(0.1..0.9), rng.gen_range(2000..70000)));
            }
            let before: Vec<(f64, u64)> =
                ds.pareto_front().iter().map(|e| e.costs()).collect();
            // A point dominated by an existing member.
            let anchor = ds.experiments()[0].costs();
            ds.push(exp(anchor.0 + 0.05, anchor.1 + 500));
            let after: Vec<(f64, u64)> = ds.pareto_front().iter().map(|e| e.costs()).collect();
            for b in &before {
                assert!(after.contains(b), "front member {b:?} disappeared");
            }
        }
    }

    #[test]
    fn dominates_is_a_strict_partial_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let p = (rng.gen_range(0.0..1.0), rng.gen_range(0u64..100));
            let q = (rng.gen_range(0.0..1.0), rng.gen_range(0u64..100));
            let r = (rng.gen_range(0.0..1.0), rng.gen_range(0u64..100));
            // Irreflexive.
            assert!(!dominates(p, p));
            // Antisymmetric.
            assert!(!(dominates(p, q) && dominates(q, p)));
            // Transitive.
            if dominates(p, q) && dominates(q, r) {
                assert!(dominates(p, r));
            }
        }
    }

    #[test]
    fn hypervolume_of_the_origin_point_is_one() {
        let e = exp(0.0, 1000);
        assert!((hypervolume(&[e], (1000, 80000)) - 1.0).abs() < 1e-12);
        let worst = exp(1.0, 80000);
        assert_eq!(hypervolume(&[worst], (1000, 80000)), 0.0);
    }
}
