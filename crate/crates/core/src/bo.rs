//! Constrained Bayesian optimization over the joint (architecture, threshold)
//! lattice, with optional per-iteration threshold fine-tuning.
//!
//! Each iteration fits Gaussian-process surrogates for the objective and the
//! constraint, maximizes expected improvement × probability of feasibility
//! over a seeded candidate pool (plus the incumbent's lattice neighbors),
//! evaluates the winner against the profile dataset, and — when fine-tuning
//! is on — sweeps the full threshold grid of the proposed architectures for
//! nearly free, appending every swept point to the observation history.
//! Threshold sweeps reuse cached per-image traces, so an optimization run
//! only ever profiles as many architecture tuples as it has proposals.

use crate::cascade::{
    evaluate_cascade, theta_sweep, CascadeConfig, DeploymentModel, Evaluation, ProblemKind,
    TraceCache,
};
use crate::error::{Error, Result};
use crate::gp::{encode_config, FitOptions, GpModel, KernelFamily, KernelParams, NoiseSetting};
use crate::lattice::JointLattice;
use crate::numeric::{std_normal_cdf, std_normal_pdf};
use crate::parallel::pmap;
use crate::profile::{ImageSet, ProfileDataset};
use crate::space::HyperParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

/// The optimization task: which constrained problem, where stages run, and
/// which image split supplies the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub kind: ProblemKind,
    pub deployment: DeploymentModel,
    pub image_set: ImageSet,
}

impl OptimizationProblem {
    pub fn new(kind: ProblemKind, deployment: DeploymentModel) -> Self {
        Self { kind, deployment, image_set: ImageSet::Validation }
    }
}

/// How an observation entered the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordSource {
    SeedDesign,
    BoStep,
    FineTune,
}

impl std::fmt::Display for RecordSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecordSource::SeedDesign => "seed-design",
            RecordSource::BoStep => "bo-step",
            RecordSource::FineTune => "fine-tune",
        })
    }
}

/// One observed tuple ⟨z, u, v⟩ plus the evaluation summary it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub config: CascadeConfig,
    /// Objective value u (energy or error, depending on the problem).
    pub objective: f64,
    /// Constraint value v (degradation or energy).
    pub constraint: f64,
    pub source: RecordSource,
    pub energy_mj: f64,
    pub error_rate: f64,
}

impl ObservationRecord {
    pub(crate) fn from_evaluation(
        config: CascadeConfig,
        eval: &Evaluation,
        kind: &ProblemKind,
        source: RecordSource,
    ) -> Self {
        Self {
            config,
            objective: eval.objective(kind),
            constraint: eval.constraint_value,
            source,
            energy_mj: eval.expected_energy_mj,
            error_rate: eval.error_rate,
        }
    }
}

/// Append-only observation dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationHistory {
    records: Vec<ObservationRecord>,
}

impl ObservationHistory {
    pub fn push(&mut self, record: ObservationRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serializes the history as CSV; byte-identical across identical runs.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("index,source,config,objective,constraint,energy_mj,error_rate\n");
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                r.source,
                r.config.canonical(),
                r.objective,
                r.constraint,
                r.energy_mj,
                r.error_rate
            ));
        }
        out
    }
}

/// Minimization-form expected improvement. At σ = 0 this degenerates to the
/// certain improvement max(best − mean, 0).
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    debug_assert!(variance >= 0.0);
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return (best - mean).max(0.0);
    }
    let t = (best - mean) / sigma;
    ((best - mean) * std_normal_cdf(t) + sigma * std_normal_pdf(t)).max(0.0)
}

/// Probability that a Gaussian-distributed constraint lands at or below `c`.
/// At σ = 0 this degenerates to the indicator mean ≤ c.
pub fn prob_feasible(mean: f64, variance: f64, c: f64) -> f64 {
    debug_assert!(variance >= 0.0);
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return if mean <= c { 1.0 } else { 0.0 };
    }
    std_normal_cdf((c - mean) / sigma)
}

/// The feasible record with minimal objective; ties resolve to the earliest
/// record. `None` when nothing satisfies the bound.
pub fn best_feasible(records: &[ObservationRecord], bound: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if r.constraint <= bound {
            match best {
                Some(b) if records[b].objective <= r.objective => {}
                _ => best = Some(i),
            }
        }
    }
    best
}

/// Whether objective observations are modeled on a log scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveScale {
    Linear,
    Log,
}

impl ObjectiveScale {
    /// Default per problem: energies span decades and stay positive, error
    /// rates do not.
    pub fn default_for(kind: &ProblemKind) -> Self {
        match kind {
            ProblemKind::EnergyMin { .. } => ObjectiveScale::Log,
            ProblemKind::ErrorMin { .. } => ObjectiveScale::Linear,
        }
    }

    pub fn to_model(self, u: f64) -> f64 {
        match self {
            ObjectiveScale::Linear => u,
            ObjectiveScale::Log => u.ln(),
        }
    }
}

/// Tuning knobs for [`run_bo`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoOptions {
    pub iterations: usize,
    pub initial_designs: usize,
    pub fine_tune: bool,
    pub theta_resolution: usize,
    pub seed: u64,
    pub candidate_pool: usize,
    /// Kernel hyper-parameters are re-optimized every this many iterations;
    /// in between, the factorization is refreshed with the new data.
    pub refit_interval: usize,
    pub gp_restarts: usize,
    /// Cap on GP training points; past it the oldest fine-tune-derived points
    /// leave the surrogate training subset (the history keeps everything).
    pub max_gp_points: usize,
    pub kernel: KernelFamily,
    /// `None` picks the per-problem default (log for energy objectives).
    pub objective_scale: Option<ObjectiveScale>,
}

impl Default for BoOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            initial_designs: 5,
            fine_tune: true,
            theta_resolution: 101,
            seed: 0,
            candidate_pool: 2000,
            refit_interval: 5,
            gp_restarts: 1,
            max_gp_points: 400,
            kernel: KernelFamily::Matern52,
            objective_scale: None,
        }
    }
}

/// Per-iteration progress, persisted by the CLI as one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationProgress {
    pub iteration: usize,
    pub config: String,
    pub objective: f64,
    pub constraint: f64,
    pub best_so_far: Option<f64>,
}

/// The winning record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub config: CascadeConfig,
    pub objective: f64,
    pub constraint: f64,
}

/// Outcome of one optimization run (BO or a baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Feasible minimizer; absent when nothing satisfied the constraint.
    pub best: Option<BestRecord>,
    pub history: ObservationHistory,
    /// Best feasible objective after each iteration (index 0 = after the
    /// initial designs). Empty for the exhaustive baselines.
    pub curve: Vec<Option<f64>>,
    pub wall_time_s: f64,
    pub progress: Vec<IterationProgress>,
    /// Duplicate proposals skipped (initial designs and fine-tune sweeps).
    pub duplicate_skips: usize,
    /// Architecture tuples whose profiles were actually looked up.
    pub distinct_architectures: usize,
    pub notes: Vec<String>,
}

impl OptResult {
    pub(crate) fn from_history(
        history: ObservationHistory,
        best_index: Option<usize>,
        curve: Vec<Option<f64>>,
        wall_time_s: f64,
        progress: Vec<IterationProgress>,
        duplicate_skips: usize,
        distinct_architectures: usize,
        notes: Vec<String>,
    ) -> Self {
        let best = best_index.map(|i| {
            let r = &history.records()[i];
            BestRecord {
                config: r.config.clone(),
                objective: r.objective,
                constraint: r.constraint,
            }
        });
        Self {
            best,
            history,
            curve,
            wall_time_s,
            progress,
            duplicate_skips,
            distinct_architectures,
            notes,
        }
    }
}

/// Proposes the next lattice point by maximizing EI × PF over a seeded
/// candidate pool plus the incumbent's single-step neighbors. Never returns a
/// point already in the history; ties break toward the lexicographically
/// smallest encoding (= lowest lattice index). A pool size covering the
/// lattice scores every unvisited point.
#[allow(clippy::too_many_arguments)]
pub fn propose_next(
    history: &ObservationHistory,
    model_f: &GpModel,
    model_g: &GpModel,
    lattice: &JointLattice,
    candidate_pool: usize,
    seed: u64,
    problem: &OptimizationProblem,
    scale: ObjectiveScale,
) -> Result<CascadeConfig> {
    let visited = visited_indices(history, lattice);
    let index = propose_index(
        &visited,
        history,
        Some((model_f, model_g)),
        lattice,
        candidate_pool,
        &mut ChaCha8Rng::seed_from_u64(seed),
        problem,
        scale,
    )?;
    lattice.config_at(index, &problem.deployment)
}

fn visited_indices(history: &ObservationHistory, lattice: &JointLattice) -> HashSet<u64> {
    history
        .records()
        .iter()
        .filter_map(|r| lattice.index_of_config(&r.config).ok())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn propose_index(
    visited: &HashSet<u64>,
    history: &ObservationHistory,
    models: Option<(&GpModel, &GpModel)>,
    lattice: &JointLattice,
    candidate_pool: usize,
    rng: &mut ChaCha8Rng,
    problem: &OptimizationProblem,
    scale: ObjectiveScale,
) -> Result<u64> {
    let total = lattice.total();
    if visited.len() as u64 >= total {
        return Err(Error::Exhausted);
    }

    let mut candidates: BTreeSet<u64> = BTreeSet::new();
    if candidate_pool as u64 >= total {
        candidates.extend(0..total);
    } else {
        for _ in 0..candidate_pool {
            candidates.insert(rng.gen_range(0..total));
        }
        if let Some(best) = best_feasible(history.records(), problem.kind.bound()) {
            if let Ok(coords) = lattice.coords_of_config(&history.records()[best].config) {
                for n in lattice.neighbors(&coords) {
                    candidates.insert(lattice.index_of(&n));
                }
            }
        }
    }
    candidates.retain(|i| !visited.contains(i));
    if candidates.is_empty() {
        // fall back to the first unvisited lattice point
        return (0..total).find(|i| !visited.contains(i)).ok_or(Error::Exhausted);
    }

    let Some((model_f, model_g)) = models else {
        // no surrogates yet: deterministic first candidate
        return Ok(*candidates.iter().next().expect("non-empty"));
    };

    let best_u_model = best_feasible(history.records(), problem.kind.bound())
        .map(|i| scale.to_model(history.records()[i].objective));
    let bound = problem.kind.bound();
    let ordered: Vec<u64> = candidates.into_iter().collect();
    let scores = pmap(&ordered, |&index| -> Result<f64> {
        let config = lattice.config_at(index, &problem.deployment)?;
        let x = encode_config(&config, lattice.space())?;
        let (mu_g, var_g) = model_g.predict(&x)?;
        let pf = prob_feasible(mu_g, var_g, bound);
        let alpha = match best_u_model {
            Some(best) => {
                let (mu_f, var_f) = model_f.predict(&x)?;
                expected_improvement(mu_f, var_f, best) * pf
            }
            None => pf,
        };
        Ok(alpha)
    });

    let mut best_index = None;
    let mut best_alpha = f64::NEG_INFINITY;
    for (index, score) in ordered.iter().zip(scores) {
        let alpha = score?;
        // strict comparison keeps the lowest index on ties
        if alpha > best_alpha {
            best_alpha = alpha;
            best_index = Some(*index);
        }
    }
    best_index.ok_or(Error::Exhausted)
}

/// Centered Latin-hypercube sample rounded to the lattice.
fn seed_designs(lattice: &JointLattice, n: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let dims = lattice.dims();
    if dims == 0 {
        return vec![0];
    }
    let sizes: Vec<u64> = {
        let last = lattice.coords_of(lattice.total() - 1);
        last.iter().map(|c| c + 1).collect()
    };
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        strata.push(perm);
    }
    (0..n)
        .map(|i| {
            let coords: Vec<u64> = (0..dims)
                .map(|d| {
                    let v = (strata[d][i] as f64 + 0.5) / n as f64;
                    ((v * (sizes[d] - 1) as f64).round() as u64).min(sizes[d] - 1)
                })
                .collect();
            lattice.index_of(&coords)
        })
        .collect()
}

/// Shared per-run evaluation state: trace caches keyed by architecture tuple,
/// so threshold-only re-evaluations never touch profile data again.
pub(crate) struct EvalContext<'a> {
    dataset: &'a ProfileDataset,
    problem: OptimizationProblem,
    caches: HashMap<Vec<HyperParams>, TraceCache>,
}

impl<'a> EvalContext<'a> {
    pub(crate) fn new(dataset: &'a ProfileDataset, problem: OptimizationProblem) -> Self {
        Self { dataset, problem, caches: HashMap::new() }
    }

    pub(crate) fn cache_for(&mut self, slots: &[HyperParams]) -> Result<&TraceCache> {
        if !self.caches.contains_key(slots) {
            let cache = TraceCache::build(
                slots,
                &self.problem.deployment,
                self.dataset,
                self.problem.image_set,
            )?;
            self.caches.insert(slots.to_vec(), cache);
        }
        Ok(&self.caches[slots])
    }

    pub(crate) fn evaluate(&mut self, config: &CascadeConfig) -> Result<Evaluation> {
        let kind = self.problem.kind;
        self.cache_for(&config.slots)?.evaluate(&config.thresholds, &kind)
    }

    pub(crate) fn distinct_architectures(&self) -> usize {
        self.caches.len()
    }
}

/// Runs the full optimization loop. Deterministic for fixed inputs and seed.
pub fn run_bo(
    problem: &OptimizationProblem,
    dataset: &ProfileDataset,
    options: &BoOptions,
) -> Result<OptResult> {
    problem.kind.validate()?;
    if options.iterations < 1 {
        return Err(Error::Argument("iterations must be >= 1".into()));
    }
    if options.initial_designs < 2 {
        return Err(Error::Argument("initial_designs must be >= 2".into()));
    }
    let start = Instant::now();
    let lattice = JointLattice::new(&dataset.design_space, options.theta_resolution)?;
    problem.deployment.validate(dataset.design_space.stages())?;
    let scale = options
        .objective_scale
        .unwrap_or_else(|| ObjectiveScale::default_for(&problem.kind));
    let bound = problem.kind.bound();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut ctx = EvalContext::new(dataset, *problem);
    let mut history = ObservationHistory::default();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut gp_subset: Vec<usize> = Vec::new();
    let mut duplicate_skips = 0usize;
    let mut notes = Vec::new();
    let mut curve = Vec::new();
    let mut progress = Vec::new();

    // initial space-filling designs
    for index in seed_designs(&lattice, options.initial_designs, &mut rng) {
        if !visited.insert(index) {
            duplicate_skips += 1;
            continue;
        }
        let config = lattice.config_at(index, &problem.deployment)?;
        let eval = ctx.evaluate(&config)?;
        gp_subset.push(history.len());
        history.push(ObservationRecord::from_evaluation(
            config,
            &eval,
            &problem.kind,
            RecordSource::SeedDesign,
        ));
    }
    let best_so_far = |h: &ObservationHistory| {
        best_feasible(h.records(), bound).map(|i| h.records()[i].objective)
    };
    curve.push(best_so_far(&history));

    let mut kernel_f: Option<KernelParams> = None;
    let mut kernel_g: Option<KernelParams> = None;

    for d in 1..=options.iterations {
        if visited.len() as u64 >= lattice.total() {
            notes.push(format!("lattice exhausted after {} observations", history.len()));
            break;
        }

        // surrogate training data from the capped subset
        let max_points = options.max_gp_points.max(options.initial_designs + 2);
        while gp_subset.len() > max_points {
            let drop = gp_subset
                .iter()
                .position(|&i| history.records()[i].source == RecordSource::FineTune)
                .unwrap_or(0);
            gp_subset.remove(drop);
        }
        let mut x = Vec::with_capacity(gp_subset.len());
        let mut y_f = Vec::with_capacity(gp_subset.len());
        let mut y_g = Vec::with_capacity(gp_subset.len());
        for &i in &gp_subset {
            let r = &history.records()[i];
            x.push(encode_config(&r.config, &dataset.design_space)?);
            y_f.push(scale.to_model(r.objective));
            y_g.push(r.constraint);
        }

        let models = if x.len() >= 2 && !x[0].is_empty() {
            let refit = kernel_f.is_none() || (d - 1) % options.refit_interval == 0;
            let fit_f;
            let fit_g;
            if refit {
                let opts = FitOptions {
                    family: options.kernel,
                    restarts: options.gp_restarts,
                    seed: rng.gen(),
                    noise: NoiseSetting::Fitted,
                };
                fit_f = GpModel::fit(&x, &y_f, &opts)?;
                let opts_g = FitOptions { seed: rng.gen(), ..opts };
                fit_g = GpModel::fit(&x, &y_g, &opts_g)?;
                kernel_f = Some(fit_f.params().clone());
                kernel_g = Some(fit_g.params().clone());
            } else {
                fit_f = GpModel::with_params(&x, &y_f, kernel_f.as_ref().expect("fitted"))?;
                fit_g = GpModel::with_params(&x, &y_g, kernel_g.as_ref().expect("fitted"))?;
            }
            Some((fit_f, fit_g))
        } else {
            None
        };

        let proposal_seed: u64 = rng.gen();
        let proposed = match propose_index(
            &visited,
            &history,
            models.as_ref().map(|(f, g)| (f, g)),
            &lattice,
            options.candidate_pool,
            &mut ChaCha8Rng::seed_from_u64(proposal_seed),
            problem,
            scale,
        ) {
            Ok(i) => i,
            Err(Error::Exhausted) => {
                notes.push(format!("lattice exhausted at iteration {d}"));
                break;
            }
            Err(e) => return Err(e),
        };

        visited.insert(proposed);
        let config = lattice.config_at(proposed, &problem.deployment)?;
        let eval = ctx.evaluate(&config)?;
        gp_subset.push(history.len());
        history.push(ObservationRecord::from_evaluation(
            config.clone(),
            &eval,
            &problem.kind,
            RecordSource::BoStep,
        ));

        if options.fine_tune {
            let batch_start = history.len();
            let kind = problem.kind;
            let sweep = {
                let cache = ctx.cache_for(&config.slots)?;
                theta_sweep(cache, options.theta_resolution, &kind)?
            };
            for (thresholds, sweep_eval) in sweep {
                let swept =
                    CascadeConfig::new(config.slots.clone(), thresholds, problem.deployment);
                let index = lattice.index_of_config(&swept)?;
                if !visited.insert(index) {
                    duplicate_skips += 1;
                    continue;
                }
                history.push(ObservationRecord::from_evaluation(
                    swept,
                    &sweep_eval,
                    &problem.kind,
                    RecordSource::FineTune,
                ));
            }
            // keep the batch's best feasible and least-violating points for
            // the surrogates
            let batch = &history.records()[batch_start..];
            let mut keep = Vec::new();
            if let Some(i) = best_feasible(batch, bound) {
                keep.push(batch_start + i);
            }
            if let Some((i, _)) = batch
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.constraint.total_cmp(&b.constraint))
            {
                keep.push(batch_start + i);
            }
            keep.sort_unstable();
            keep.dedup();
            gp_subset.extend(keep);
        }

        let best = best_so_far(&history);
        curve.push(best);
        let last_bo = history
            .records()
            .iter()
            .rfind(|r| r.source == RecordSource::BoStep)
            .expect("just pushed a bo-step record");
        progress.push(IterationProgress {
            iteration: d,
            config: last_bo.config.canonical(),
            objective: last_bo.objective,
            constraint: last_bo.constraint,
            best_so_far: best,
        });
    }

    let best_index = best_feasible(history.records(), bound);
    if best_index.is_none() {
        notes.push("no feasible design found within the iteration budget".into());
    }
    let distinct = ctx.distinct_architectures();
    Ok(OptResult::from_history(
        history,
        best_index,
        curve,
        start.elapsed().as_secs_f64(),
        progress,
        duplicate_skips,
        distinct,
        notes,
    ))
}

/// Re-evaluates every history record and returns the largest |Δ| between the
/// stored (u, v) pair and a fresh evaluation; used by the replay checks.
pub fn replay_history(
    history: &ObservationHistory,
    dataset: &ProfileDataset,
    problem: &OptimizationProblem,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for r in history.records() {
        let eval = evaluate_cascade(&r.config, dataset, problem.image_set, &problem.kind)?;
        worst = worst
            .max((eval.objective(&problem.kind) - r.objective).abs())
            .max((eval.constraint_value - r.constraint).abs());
    }
    Ok(worst)
}
