//! Reference optimizers: exhaustive grid search, uniform random search, and
//! the threshold-only "static" design over fixed architectures.
//!
//! All three share the observation-record machinery of the BO engine and the
//! per-architecture trace cache, so score data is read once per architecture
//! tuple no matter how many thresholds are swept. Ties on the objective break
//! toward the lowest lattice index, i.e. the lexicographically smallest
//! encoded design, independent of evaluation order.

use crate::bo::{
    IterationProgress, ObservationHistory, ObservationRecord, OptResult, OptimizationProblem,
    RecordSource,
};
use crate::cascade::{theta_sweep, CascadeConfig, TraceCache};
use crate::error::{Error, Result};
use crate::lattice::JointLattice;
use crate::parallel::pmap;
use crate::profile::ProfileDataset;
use crate::space::{HyperParams, SlotSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::time::Instant;

/// Best feasible record with ties broken by lowest lattice index.
fn best_by_lowest_encoding(
    records: &[ObservationRecord],
    bound: f64,
    lattice: &JointLattice,
) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64, u64)> = None;
    for (i, r) in records.iter().enumerate() {
        if r.constraint > bound {
            continue;
        }
        let index = lattice.index_of_config(&r.config)?;
        let better = match best {
            None => true,
            Some((_, u, idx)) => r.objective < u || (r.objective == u && index < idx),
        };
        if better {
            best = Some((i, r.objective, index));
        }
    }
    Ok(best.map(|(i, _, _)| i))
}

/// Evaluates every (architecture, threshold) lattice point and returns the
/// exact feasible optimum. The full history doubles as the (energy, error)
/// cloud for Pareto export.
pub fn grid_search(
    problem: &OptimizationProblem,
    dataset: &ProfileDataset,
    theta_resolution: usize,
) -> Result<OptResult> {
    problem.kind.validate()?;
    let start = Instant::now();
    let lattice = JointLattice::new(&dataset.design_space, theta_resolution)?;
    problem.deployment.validate(dataset.design_space.stages())?;
    let total = lattice.total();
    let arch_total = lattice.arch_total();
    let notes = vec![format!(
        "grid: {arch_total} architectures x {} thresholds = {total} evaluations",
        total / arch_total
    )];

    let arch_indices: Vec<u64> = (0..arch_total).collect();
    let kind = problem.kind;
    let per_arch = pmap(&arch_indices, |&arch| -> Result<Vec<ObservationRecord>> {
        let slots = lattice.slots_at(arch)?;
        let cache =
            TraceCache::build(&slots, &problem.deployment, dataset, problem.image_set)?;
        let sweep = theta_sweep(&cache, theta_resolution, &kind)?;
        Ok(sweep
            .into_iter()
            .map(|(thresholds, eval)| {
                ObservationRecord::from_evaluation(
                    CascadeConfig::new(slots.clone(), thresholds, problem.deployment),
                    &eval,
                    &kind,
                    RecordSource::BoStep,
                )
            })
            .collect())
    });

    let mut history = ObservationHistory::default();
    for batch in per_arch {
        for record in batch? {
            history.push(record);
        }
    }
    let best = best_by_lowest_encoding(history.records(), kind.bound(), &lattice)?;
    Ok(OptResult::from_history(
        history,
        best,
        Vec::new(),
        start.elapsed().as_secs_f64(),
        Vec::new(),
        0,
        arch_total as usize,
        notes,
    ))
}

/// Uniform lattice samples without replacement; deterministic per seed. A
/// budget beyond the lattice size is clamped (noted in the result).
pub fn random_search(
    problem: &OptimizationProblem,
    dataset: &ProfileDataset,
    budget: usize,
    seed: u64,
) -> Result<OptResult> {
    problem.kind.validate()?;
    if budget < 1 {
        return Err(Error::Argument("random search budget must be >= 1".into()));
    }
    let start = Instant::now();
    let lattice = JointLattice::new(&dataset.design_space, dataset.design_space.theta_resolution)?;
    problem.deployment.validate(dataset.design_space.stages())?;
    let total = lattice.total();
    let mut notes = Vec::new();
    let budget = if budget as u64 > total {
        notes.push(format!("budget clamped to lattice size {total}"));
        total as usize
    } else {
        budget
    };

    // sparse Fisher-Yates: draws `budget` distinct indices uniformly
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut swaps: HashMap<u64, u64> = HashMap::new();
    let mut samples = Vec::with_capacity(budget);
    for i in 0..budget as u64 {
        let j = rng.gen_range(i..total);
        let pick = *swaps.get(&j).unwrap_or(&j);
        let keep = *swaps.get(&i).unwrap_or(&i);
        swaps.insert(j, keep);
        samples.push(pick);
    }

    let mut ctx = crate::bo::EvalContext::new(dataset, *problem);
    let mut history = ObservationHistory::default();
    let mut curve = Vec::with_capacity(budget);
    let mut progress = Vec::with_capacity(budget);
    for (i, &index) in samples.iter().enumerate() {
        let config = lattice.config_at(index, &problem.deployment)?;
        let eval = ctx.evaluate(&config)?;
        history.push(ObservationRecord::from_evaluation(
            config,
            &eval,
            &problem.kind,
            RecordSource::BoStep,
        ));
        let best = crate::bo::best_feasible(history.records(), problem.kind.bound())
            .map(|b| history.records()[b].objective);
        curve.push(best);
        let r = &history.records()[history.len() - 1];
        progress.push(IterationProgress {
            iteration: i + 1,
            config: r.config.canonical(),
            objective: r.objective,
            constraint: r.constraint,
            best_so_far: best,
        });
    }
    let best = best_by_lowest_encoding(history.records(), problem.kind.bound(), &lattice)?;
    let distinct = ctx.distinct_architectures();
    Ok(OptResult::from_history(
        history,
        best,
        curve,
        start.elapsed().as_secs_f64(),
        progress,
        0,
        distinct,
        notes,
    ))
}

/// Threshold-only optimization of fixed architectures: sweeps the θ grid over
/// `fixed_slots` and returns the feasible optimum.
pub fn static_design(
    problem: &OptimizationProblem,
    dataset: &ProfileDataset,
    fixed_slots: &[HyperParams],
    theta_resolution: usize,
) -> Result<OptResult> {
    problem.kind.validate()?;
    let start = Instant::now();
    problem.deployment.validate(fixed_slots.len())?;
    let cache =
        TraceCache::build(fixed_slots, &problem.deployment, dataset, problem.image_set)?;
    let kind = problem.kind;
    let sweep = theta_sweep(&cache, theta_resolution, &kind)?;
    let mut history = ObservationHistory::default();
    for (thresholds, eval) in sweep {
        history.push(ObservationRecord::from_evaluation(
            CascadeConfig::new(fixed_slots.to_vec(), thresholds, problem.deployment),
            &eval,
            &kind,
            RecordSource::FineTune,
        ));
    }
    // sweep order is lexicographic in θ, so the earliest tie is the lowest
    // encoding
    let best = crate::bo::best_feasible(history.records(), kind.bound());
    Ok(OptResult::from_history(
        history,
        best,
        Vec::new(),
        start.elapsed().as_secs_f64(),
        Vec::new(),
        0,
        1,
        Vec::new(),
    ))
}

/// Default static architectures: the lattice midpoint of every searchable
/// slot, fixed slots as-is.
pub fn midpoint_slots(dataset: &ProfileDataset) -> Vec<HyperParams> {
    let space = &dataset.design_space;
    (0..space.stages())
        .map(|s| match &space.slots[s] {
            SlotSpec::Fixed(h) => h.clone(),
            SlotSpec::Search(_) => {
                let values: Vec<u32> = space
                    .slot_dimensions(s)
                    .iter()
                    .map(|d| d.range.nearest(f64::from(d.range.min + d.range.max) / 2.0))
                    .collect();
                space.materialize(s, &values).expect("midpoint lies on the lattice")
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{DeploymentModel, ProblemKind};
    use crate::space::{DesignSpace, LayerParams, LayerRanges, ParamRange};
    use crate::synthetic::{generate_synthetic, CapacityModel, SyntheticSpec};

    fn tiny_dataset(arch_points: u32, theta_res: usize) -> ProfileDataset {
        let max_units = 500 + 500 * (arch_points - 1);
        let space = DesignSpace::new(
            vec![
                SlotSpec::Search(vec![LayerRanges::FullyConnected {
                    units: ParamRange::new(500, max_units, 500),
                }]),
                SlotSpec::Fixed(HyperParams::new(vec![LayerParams::FullyConnected {
                    units: 8000,
                }])),
            ],
            theta_res,
        );
        let spec = SyntheticSpec {
            class_count: 5,
            image_count: 60,
            capacity: vec![
                CapacityModel::Affine { base: 0.55, weights: vec![0.4] },
                CapacityModel::Constant(0.92),
            ],
            energy_per_mac_mj: 30.0,
            energy_offset_mj: 3.0,
            noise_scale: 0.2,
            seed: 13,
            platform_tag: "t".into(),
            split_fraction: 0.75,
        };
        generate_synthetic(&spec, &space).unwrap()
    }

    fn problem() -> OptimizationProblem {
        OptimizationProblem::new(
            ProblemKind::EnergyMin { max_degradation: 0.1 },
            DeploymentModel::Local,
        )
    }

    #[test]
    fn grid_is_exhaustive_and_returns_the_minimum() {
        let dataset = tiny_dataset(2, 3);
        let result = grid_search(&problem(), &dataset, 3).unwrap();
        assert_eq!(result.history.len(), 2 * 3);
        let best = result.best.as_ref().unwrap();
        for r in result.history.records() {
            if r.constraint <= 0.1 {
                assert!(best.objective <= r.objective);
            }
        }
    }

    #[test]
    fn grid_covers_static_slice_at_least_as_well() {
        let dataset = tiny_dataset(3, 5);
        let p = problem();
        let grid = grid_search(&p, &dataset, 5).unwrap();
        let slots = midpoint_slots(&dataset);
        let fixed = static_design(&p, &dataset, &slots, 5).unwrap();
        match (&grid.best, &fixed.best) {
            (Some(g), Some(s)) => assert!(g.objective <= s.objective),
            (Some(_), None) => {}
            (None, Some(_)) => panic!("grid missed a feasible point the static slice found"),
            (None, None) => {}
        }
    }

    #[test]
    fn static_over_fixed_space_equals_grid() {
        let mut dataset = tiny_dataset(2, 5);
        // pin the search slot so grid and static walk the same domain
        let fixed_arch = HyperParams::new(vec![LayerParams::FullyConnected { units: 500 }]);
        dataset.design_space.slots[0] = SlotSpec::Fixed(fixed_arch.clone());
        let p = problem();
        let grid = grid_search(&p, &dataset, 101).unwrap();
        let slots = vec![
            fixed_arch,
            HyperParams::new(vec![LayerParams::FullyConnected { units: 8000 }]),
        ];
        let st = static_design(&p, &dataset, &slots, 101).unwrap();
        assert_eq!(grid.history.len(), st.history.len());
        let (g, s) = (grid.best.unwrap(), st.best.unwrap());
        assert_eq!(g.objective, s.objective);
        assert_eq!(g.config, s.config);
    }

    #[test]
    fn loose_bound_makes_theta_zero_optimal() {
        let dataset = tiny_dataset(3, 101);
        let p = OptimizationProblem::new(
            ProblemKind::EnergyMin { max_degradation: 1.0 },
            DeploymentModel::Local,
        );
        let slots = midpoint_slots(&dataset);
        let result = static_design(&p, &dataset, &slots, 101).unwrap();
        let best = result.best.unwrap();
        assert_eq!(best.config.thresholds, vec![0.0]);
        let e1 = dataset.profile(0, &slots[0]).unwrap().energy_mj;
        assert!((best.objective - e1).abs() < 1e-12);
    }

    #[test]
    fn random_with_full_budget_equals_grid() {
        let dataset = tiny_dataset(2, 5);
        let p = problem();
        let grid = grid_search(&p, &dataset, 5).unwrap();
        let rand_full = random_search(&p, &dataset, 10, 99).unwrap();
        assert_eq!(rand_full.history.len(), 10);
        let (g, r) = (grid.best.unwrap(), rand_full.best.unwrap());
        assert_eq!(g.objective, r.objective);
        assert_eq!(g.config, r.config);
    }

    #[test]
    fn random_is_deterministic_and_clamps() {
        let dataset = tiny_dataset(2, 3);
        let p = problem();
        let a = random_search(&p, &dataset, 100, 7).unwrap();
        let b = random_search(&p, &dataset, 100, 7).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 6); // clamped to the lattice size
        assert!(a.notes.iter().any(|n| n.contains("clamped")));
    }

    #[test]
    fn random_budget_one_returns_that_point() {
        let dataset = tiny_dataset(3, 5);
        let p = problem();
        let result = random_search(&p, &dataset, 1, 3).unwrap();
        assert_eq!(result.history.len(), 1);
        let r = &result.history.records()[0];
        match &result.best {
            Some(b) => {
                assert!(r.constraint <= 0.1);
                assert_eq!(b.objective, r.objective);
            }
            None => assert!(r.constraint > 0.1),
        }
        assert!(random_search(&p, &dataset, 0, 3).is_err());
    }

    #[test]
    fn random_samples_are_distinct() {
        let dataset = tiny_dataset(3, 5);
        let p = problem();
        let result = random_search(&p, &dataset, 12, 5).unwrap();
        let lattice = JointLattice::new(&dataset.design_space, 5).unwrap();
        let mut seen = std::collections::HashSet::new();
        for r in result.history.records() {
            assert!(seen.insert(lattice.index_of_config(&r.config).unwrap()));
        }
    }

    #[test]
    fn midpoint_rounds_half_away_from_zero() {
        let dataset = tiny_dataset(2, 3); // units 500..1000 step 500, midpoint 750 -> 1000
        let slots = midpoint_slots(&dataset);
        assert_eq!(slots[0], HyperParams::new(vec![LayerParams::FullyConnected { units: 1000 }]));
        assert_eq!(slots[1], HyperParams::new(vec![LayerParams::FullyConnected { units: 8000 }]));
    }
}
