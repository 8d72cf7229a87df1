//! Adaptive-execution semantics: score margins, exit decisions, per-image
//! cascade simulation, deployment energy models, and the aggregate
//! objective/constraint evaluation.
//!
//! Stages are 0-based in code: stage 0 is the first (cheapest) network. An
//! image consults threshold `i` after stage `i` and continues to stage `i+1`
//! only while its score margin stays below the threshold; the last stage
//! always exits. The accuracy-degradation constraint compares the cascade's
//! error against always running the final stage.

use crate::error::{Error, Result};
use crate::numeric::theta_value;
use crate::parallel::pmap;
use crate::profile::{ImageSet, NetworkProfile, ProfileDataset};
use crate::space::HyperParams;
use serde::{Deserialize, Serialize};

/// Which constrained problem an evaluation is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Minimize expected energy subject to error degradation ≤ `max_degradation`.
    EnergyMin { max_degradation: f64 },
    /// Minimize error subject to expected energy ≤ `max_energy_mj`.
    ErrorMin { max_energy_mj: f64 },
}

impl ProblemKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemKind::EnergyMin { max_degradation } => {
                if !(0.0..=1.0).contains(max_degradation) {
                    return Err(Error::Argument(format!(
                        "degradation bound must lie in [0,1], got {max_degradation}"
                    )));
                }
            }
            ProblemKind::ErrorMin { max_energy_mj } => {
                if !(*max_energy_mj > 0.0) {
                    return Err(Error::Argument(format!(
                        "energy budget must be positive, got {max_energy_mj}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The bound `c` the constraint value is compared against.
    pub fn bound(&self) -> f64 {
        match self {
            ProblemKind::EnergyMin { max_degradation } => *max_degradation,
            ProblemKind::ErrorMin { max_energy_mj } => *max_energy_mj,
        }
    }
}

/// Where the cascade's stages execute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentModel {
    /// Every stage runs on the device; energy is the profile's power × runtime.
    Local,
    /// Stages at or after `remote_from_stage` (1-based, ≥ 2) run on a server
    /// while the device idles at `idle_power_w` for the server runtime plus
    /// the per-image communication time.
    EdgeServer {
        remote_from_stage: usize,
        idle_power_w: f64,
        server_runtime_s: f64,
        comm_time_s: f64,
    },
}

impl DeploymentModel {
    pub fn validate(&self, stages: usize) -> Result<()> {
        if let DeploymentModel::EdgeServer {
            remote_from_stage,
            idle_power_w,
            server_runtime_s,
            comm_time_s,
        } = self
        {
            if *remote_from_stage < 2 || *remote_from_stage > stages {
                return Err(Error::Argument(format!(
                    "remote_from_stage must lie in [2, {stages}], got {remote_from_stage}"
                )));
            }
            for (name, v) in [
                ("idle_power_w", idle_power_w),
                ("server_runtime_s", server_runtime_s),
                ("comm_time_s", comm_time_s),
            ] {
                if !(*v > 0.0) || !v.is_finite() {
                    return Err(Error::Argument(format!("{name} must be finite and > 0")));
                }
            }
        }
        Ok(())
    }

    /// Whether 0-based `stage` executes remotely.
    pub fn is_remote(&self, stage: usize) -> bool {
        match self {
            DeploymentModel::Local => false,
            DeploymentModel::EdgeServer { remote_from_stage, .. } => {
                stage + 1 >= *remote_from_stage
            }
        }
    }
}

/// A full design point: per-stage architectures, the M−1 exit thresholds,
/// and where the stages run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub slots: Vec<HyperParams>,
    pub thresholds: Vec<f64>,
    pub deployment: DeploymentModel,
}

impl CascadeConfig {
    pub fn new(
        slots: Vec<HyperParams>,
        thresholds: Vec<f64>,
        deployment: DeploymentModel,
    ) -> Self {
        Self { slots, thresholds, deployment }
    }

    pub fn stages(&self) -> usize {
        self.slots.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::Argument("cascade needs at least one stage".into()));
        }
        if self.thresholds.len() != self.slots.len() - 1 {
            return Err(Error::Argument(format!(
                "{} thresholds for {} stages (need M-1)",
                self.thresholds.len(),
                self.slots.len()
            )));
        }
        for &t in &self.thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Argument(format!("threshold {t} outside [0,1]")));
            }
        }
        self.deployment.validate(self.slots.len())
    }

    /// Canonical one-line text form used in history files (comma-free so the
    /// CSV writers stay trivial).
    pub fn canonical(&self) -> String {
        let slots: Vec<String> = self.slots.iter().map(|h| h.canonical()).collect();
        let thetas: Vec<String> = self.thresholds.iter().map(|t| format!("{t}")).collect();
        if thetas.is_empty() {
            slots.join("|")
        } else {
            format!("{}|theta={}", slots.join("|"), thetas.join(";"))
        }
    }
}

/// Difference between the largest and second-largest class score.
pub fn score_margin(scores: &[f64]) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::Argument(format!(
            "score margin needs at least 2 classes, got {}",
            scores.len()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &s in scores {
        if s > best {
            second = best;
            best = s;
        } else if s > second {
            second = s;
        }
    }
    Ok(best - second)
}

/// Index of the maximum score; ties resolve to the lowest class index.
pub fn predicted_label(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Argument("cannot take argmax of an empty score vector".into()));
    }
    let mut arg = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[arg] {
            arg = i;
        }
    }
    Ok(arg)
}

/// Exit/continue decision at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Exit,
    Continue,
}

/// Continue to the next stage iff the margin falls below the threshold;
/// a margin equal to the threshold exits, so θ = 0 never escalates.
pub fn decide(margin: f64, theta: f64) -> Decision {
    if margin < theta {
        Decision::Continue
    } else {
        Decision::Exit
    }
}

/// Per-image energy of evaluating 0-based `stage` (mJ). Local stages run at
/// the profile's measured power and runtime; remote stages charge the idle
/// power for server compute plus communication.
pub fn stage_energy(profile: &NetworkProfile, stage: usize, deployment: &DeploymentModel) -> f64 {
    match deployment {
        DeploymentModel::EdgeServer { idle_power_w, server_runtime_s, comm_time_s, .. }
            if deployment.is_remote(stage) =>
        {
            idle_power_w * (server_runtime_s + comm_time_s) * 1000.0
        }
        _ => profile.power_w * profile.runtime_s * 1000.0,
    }
}

/// What happened to one image on its way through the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerImageTrace {
    /// 0-based stage the image exited at.
    pub exit_stage: usize,
    pub predicted_label: usize,
    /// 0-1 loss of the exit stage's prediction.
    pub loss: u8,
    /// Sum of stage energies over every evaluated stage.
    pub energy_mj: f64,
    /// Score margins of the evaluated stages, in order.
    pub margins: Vec<f64>,
}

/// Walks one image through the cascade, accumulating stage energies.
pub fn simulate_image(
    config: &CascadeConfig,
    per_stage_scores: &[&[f64]],
    true_label: u32,
    profiles: &[&NetworkProfile],
) -> Result<PerImageTrace> {
    config.validate()?;
    let stages = config.stages();
    if per_stage_scores.len() != stages || profiles.len() != stages {
        return Err(Error::Argument(format!(
            "need scores and profiles for all {stages} stages"
        )));
    }
    let mut energy_mj = 0.0;
    let mut margins = Vec::with_capacity(stages);
    for stage in 0..stages {
        energy_mj += stage_energy(profiles[stage], stage, &config.deployment);
        let margin = score_margin(per_stage_scores[stage])?;
        margins.push(margin);
        let exits = stage == stages - 1
            || decide(margin, config.thresholds[stage]) == Decision::Exit;
        if exits {
            let predicted = predicted_label(per_stage_scores[stage])?;
            return Ok(PerImageTrace {
                exit_stage: stage,
                predicted_label: predicted,
                loss: u8::from(predicted != true_label as usize),
                energy_mj,
                margins,
            });
        }
    }
    unreachable!("last stage always exits")
}

/// Aggregate result of evaluating a cascade over an image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub expected_energy_mj: f64,
    pub error_rate: f64,
    /// Error degradation vs. the final stage for energy-minimization
    /// problems; expected energy for error-minimization problems.
    pub constraint_value: f64,
    pub feasible: bool,
    /// Fraction of the image set that continued past each threshold.
    pub escalation_rates: Vec<f64>,
}

impl Evaluation {
    /// The objective value under `problem`.
    pub fn objective(&self, problem: &ProblemKind) -> f64 {
        match problem {
            ProblemKind::EnergyMin { .. } => self.expected_energy_mj,
            ProblemKind::ErrorMin { .. } => self.error_rate,
        }
    }
}

/// Per-image margins and losses of a fixed architecture tuple, precomputed
/// once so that threshold sweeps never touch score data again.
#[derive(Debug, Clone)]
pub struct TraceCache {
    /// `margins[stage][j]` for stages 0..M−1 (the last stage never decides).
    margins: Vec<Vec<f64>>,
    /// `losses[stage][j]` for all M stages.
    losses: Vec<Vec<u8>>,
    stage_energies: Vec<f64>,
    image_count: usize,
}

impl TraceCache {
    /// Looks up every slot's profile and precomputes margins, losses, and
    /// per-stage energies over the chosen image set.
    pub fn build(
        slots: &[HyperParams],
        deployment: &DeploymentModel,
        dataset: &ProfileDataset,
        image_set: ImageSet,
    ) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Argument("cascade needs at least one stage".into()));
        }
        deployment.validate(slots.len())?;
        let indices = dataset.indices_of(image_set);
        if indices.is_empty() {
            return Err(Error::Argument(format!("image set {image_set:?} is empty")));
        }
        let stages = slots.len();
        let mut margins = Vec::with_capacity(stages.saturating_sub(1));
        let mut losses = Vec::with_capacity(stages);
        let mut stage_energies = Vec::with_capacity(stages);
        for (stage, params) in slots.iter().enumerate() {
            let profile = dataset.profile(stage, params)?;
            stage_energies.push(stage_energy(profile, stage, deployment));
            let rows = pmap(&indices, |&i| {
                let row = profile.score_row(i);
                let margin = score_margin(row)?;
                let loss =
                    u8::from(predicted_label(row)? != profile.labels[i] as usize);
                Ok::<(f64, u8), Error>((margin, loss))
            });
            let mut stage_margins = Vec::with_capacity(indices.len());
            let mut stage_losses = Vec::with_capacity(indices.len());
            for r in rows {
                let (m, l) = r?;
                stage_margins.push(m);
                stage_losses.push(l);
            }
            if stage < stages - 1 {
                margins.push(stage_margins);
            }
            losses.push(stage_losses);
        }
        Ok(Self { margins, losses, stage_energies, image_count: indices.len() })
    }

    pub fn stages(&self) -> usize {
        self.losses.len()
    }

    pub fn image_count(&self) -> usize {
        self.image_count
    }

    pub fn stage_energies(&self) -> &[f64] {
        &self.stage_energies
    }

    /// Evaluates one threshold vector against the cached traces.
    ///
    /// Expected energy is assembled from per-stage reach counts (`Σ_i E_i ·
    /// reached_i / n`), the error rate from integer loss counts, and the
    /// degradation constraint from the loss-count difference against the
    /// final stage, so repeated evaluations are bit-reproducible.
    pub fn evaluate(&self, thresholds: &[f64], problem: &ProblemKind) -> Result<Evaluation> {
        let stages = self.stages();
        if thresholds.len() != stages - 1 {
            return Err(Error::Argument(format!(
                "{} thresholds for {} stages (need M-1)",
                thresholds.len(),
                stages
            )));
        }
        for &t in thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Argument(format!("threshold {t} outside [0,1]")));
            }
        }
        problem.validate()?;

        let n = self.image_count;
        let mut reached = vec![0u64; stages];
        let mut loss_total: u64 = 0;
        for j in 0..n {
            let mut exit = stages - 1;
            for stage in 0..stages - 1 {
                reached[stage] += 1;
                if decide(self.margins[stage][j], thresholds[stage]) == Decision::Exit {
                    exit = stage;
                    break;
                }
            }
            if exit == stages - 1 {
                reached[stages - 1] += 1;
            }
            loss_total += u64::from(self.losses[exit][j]);
        }

        let n_f = n as f64;
        let expected_energy_mj: f64 = self
            .stage_energies
            .iter()
            .zip(&reached)
            .map(|(e, &c)| e * (c as f64) / n_f)
            .sum();
        let error_rate = loss_total as f64 / n_f;
        let final_loss_total: u64 = self.losses[stages - 1].iter().map(|&l| u64::from(l)).sum();
        let degradation = (loss_total as f64 - final_loss_total as f64) / n_f;
        let escalation_rates: Vec<f64> =
            reached[1..].iter().map(|&c| c as f64 / n_f).collect();

        let (constraint_value, feasible) = match problem {
            ProblemKind::EnergyMin { max_degradation } => {
                (degradation, degradation <= *max_degradation)
            }
            ProblemKind::ErrorMin { max_energy_mj } => {
                (expected_energy_mj, expected_energy_mj <= *max_energy_mj)
            }
        };
        Ok(Evaluation {
            expected_energy_mj,
            error_rate,
            constraint_value,
            feasible,
            escalation_rates,
        })
    }
}

/// Evaluates a full design point over `image_set`.
pub fn evaluate_cascade(
    config: &CascadeConfig,
    dataset: &ProfileDataset,
    image_set: ImageSet,
    problem: &ProblemKind,
) -> Result<Evaluation> {
    config.validate()?;
    let cache = TraceCache::build(&config.slots, &config.deployment, dataset, image_set)?;
    cache.evaluate(&config.thresholds, problem)
}

/// Sweeps the full θ lattice {0, 1/(T−1), …, 1}^(M−1) against cached traces,
/// in lexicographic order. Each returned evaluation is identical to calling
/// [`evaluate_cascade`] at the same point.
pub fn theta_sweep(
    cache: &TraceCache,
    resolution: usize,
    problem: &ProblemKind,
) -> Result<Vec<(Vec<f64>, Evaluation)>> {
    if resolution < 2 {
        return Err(Error::Argument(format!(
            "theta grid resolution must be >= 2, got {resolution}"
        )));
    }
    let dims = cache.stages() - 1;
    let total = (resolution as u64).pow(dims as u32);
    let indices: Vec<u64> = (0..total).collect();
    let results = pmap(&indices, |&flat| {
        let mut rem = flat;
        let mut thresholds = vec![0.0; dims];
        for d in (0..dims).rev() {
            thresholds[d] = theta_value((rem % resolution as u64) as usize, resolution);
            rem /= resolution as u64;
        }
        let eval = cache.evaluate(&thresholds, problem)?;
        Ok::<(Vec<f64>, Evaluation), Error>((thresholds, eval))
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{compute_split, DeploymentConstants, ProfileKey};
    use crate::space::LayerParams;
    use std::collections::BTreeMap;

    fn profile_from(
        units: u32,
        labels: &[u32],
        rows: &[&[f64]],
        energy_mj: f64,
    ) -> NetworkProfile {
        let class_count = rows[0].len();
        let power_w = 5.0;
        NetworkProfile {
            hyperparams: HyperParams::new(vec![LayerParams::FullyConnected { units }]),
            scores: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            labels: labels.to_vec(),
            class_count,
            power_w,
            runtime_s: energy_mj / (power_w * 1000.0),
            energy_mj,
            platform_tag: "test".into(),
        }
    }

    /// Two-stage dataset matching the worked three-image example: stage-0
    /// margins 0.9/0.1/0.4, stage 0 correct on image 0 only, stage 1 correct
    /// everywhere, E1 = 10 mJ, E2 = 100 mJ.
    fn worked_example(stage0_wrong_on_image0: bool) -> (ProfileDataset, CascadeConfig) {
        let labels = [0u32, 1, 2];
        let margin_row = |m: f64, top: usize| -> Vec<f64> {
            // top score minus runner-up equals m; three classes
            let second = (1.0 - m) / 3.0;
            let top_score = second + m;
            let rest = 1.0 - top_score - second;
            let mut row = vec![rest; 3];
            row[top] = top_score;
            row[(top + 1) % 3] = second;
            row
        };
        let n1_rows: Vec<Vec<f64>> = vec![
            margin_row(0.9, if stage0_wrong_on_image0 { 1 } else { 0 }),
            margin_row(0.1, 0), // label 1: wrong
            margin_row(0.4, 0), // label 2: wrong
        ];
        let n2_rows: Vec<Vec<f64>> = vec![margin_row(0.5, 0), margin_row(0.5, 1), margin_row(0.5, 2)];
        let p1 = profile_from(
            100,
            &labels,
            &n1_rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            10.0,
        );
        let p2 = profile_from(
            200,
            &labels,
            &n2_rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
            100.0,
        );
        let space = crate::space::DesignSpace::new(
            vec![
                crate::space::SlotSpec::Fixed(p1.hyperparams.clone()),
                crate::space::SlotSpec::Fixed(p2.hyperparams.clone()),
            ],
            11,
        );
        let mut profiles = BTreeMap::new();
        profiles.insert(ProfileKey::new(0, p1.hyperparams.clone()), p1.clone());
        profiles.insert(ProfileKey::new(1, p2.hyperparams.clone()), p2.clone());
        let mut dataset = ProfileDataset {
            design_space: space,
            profiles,
            image_count: 3,
            class_count: 3,
            split: compute_split(3, 0.5, 1),
            split_seed: 1,
            split_fraction: 0.5,
            platform_tag: "test".into(),
            deployment: DeploymentConstants::default(),
        };
        // evaluate everything on the validation side
        dataset.split = vec![ImageSet::Validation; 3];
        let config = CascadeConfig::new(
            vec![p1.hyperparams.clone(), p2.hyperparams.clone()],
            vec![0.5],
            DeploymentModel::Local,
        );
        (dataset, config)
    }

    #[test]
    fn margin_direct_subtraction() {
        assert!((score_margin(&[0.7, 0.2, 0.1]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(score_margin(&[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(score_margin(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(score_margin(&[1.0]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(predicted_label(&[0.1, 0.8, 0.1]).unwrap(), 1);
        assert_eq!(predicted_label(&[0.5, 0.5]).unwrap(), 0);
        assert!(predicted_label(&[]).is_err());
    }

    #[test]
    fn argmax_is_permutation_equivariant() {
        let scores = [0.05, 0.7, 0.1, 0.15];
        let arg = predicted_label(&scores).unwrap();
        let perm = [2usize, 0, 3, 1]; // image of each index
        let mut permuted = [0.0; 4];
        for (i, &p) in perm.iter().enumerate() {
            permuted[p] = scores[i];
        }
        assert_eq!(predicted_label(&permuted).unwrap(), perm[arg]);
    }

    #[test]
    fn decide_boundary_exits() {
        assert_eq!(decide(0.5, 0.3), Decision::Exit);
        assert_eq!(decide(0.2, 0.3), Decision::Continue);
        assert_eq!(decide(0.3, 0.3), Decision::Exit);
        assert_eq!(decide(0.0, 0.0), Decision::Exit); // θ=0 never escalates
    }

    #[test]
    fn stage_energy_local_and_remote() {
        let p = profile_from(100, &[0], &[&[0.8, 0.1, 0.1]], 50.0);
        assert!((stage_energy(&p, 0, &DeploymentModel::Local) - 50.0).abs() < 1e-12);
        let edge = DeploymentModel::EdgeServer {
            remote_from_stage: 2,
            idle_power_w: 2.0,
            server_runtime_s: 0.02,
            comm_time_s: 0.05,
        };
        // stage 0 stays local under the edge model
        assert!((stage_energy(&p, 0, &edge) - 50.0).abs() < 1e-12);
        // stage 1 runs remotely: 2 W × (0.02 + 0.05) s × 1000 = 140 mJ
        assert!((stage_energy(&p, 1, &edge) - 140.0).abs() < 1e-12);
    }

    #[test]
    fn remote_energy_zero_idle_power_is_zero() {
        let p = profile_from(100, &[0], &[&[0.8, 0.1, 0.1]], 50.0);
        let edge = DeploymentModel::EdgeServer {
            remote_from_stage: 2,
            idle_power_w: 1e-300, // strictly positive, numerically nil
            server_runtime_s: 0.02,
            comm_time_s: 0.05,
        };
        assert!(stage_energy(&p, 1, &edge) < 1e-290);
    }

    #[test]
    fn simulate_immediate_exit_spends_first_stage_only() {
        let (dataset, config) = worked_example(false);
        let p1 = dataset.profile(0, &config.slots[0]).unwrap();
        let p2 = dataset.profile(1, &config.slots[1]).unwrap();
        let trace = simulate_image(
            &config,
            &[p1.score_row(0), p2.score_row(0)],
            p1.labels[0],
            &[p1, p2],
        )
        .unwrap();
        assert_eq!(trace.exit_stage, 0);
        assert!((trace.energy_mj - 10.0).abs() < 1e-12);
        assert_eq!(trace.loss, 0);
    }

    #[test]
    fn simulate_escalation_accumulates_energy() {
        let (dataset, config) = worked_example(false);
        let p1 = dataset.profile(0, &config.slots[0]).unwrap();
        let p2 = dataset.profile(1, &config.slots[1]).unwrap();
        let trace = simulate_image(
            &config,
            &[p1.score_row(1), p2.score_row(1)],
            p1.labels[1],
            &[p1, p2],
        )
        .unwrap();
        assert_eq!(trace.exit_stage, 1);
        assert!((trace.energy_mj - 110.0).abs() < 1e-12);
        assert_eq!(trace.loss, 0);
        assert_eq!(trace.margins.len(), 2);
    }

    #[test]
    fn three_stage_chain_walks_to_the_end() {
        let labels = [0u32];
        let weak = [0.36, 0.34, 0.30]; // margin 0.02
        let p1 = profile_from(100, &labels, &[&weak], 1.0);
        let mut p2 = profile_from(200, &labels, &[&weak], 2.0);
        let mut p3 = profile_from(300, &labels, &[&[0.9, 0.05, 0.05]], 4.0);
        p2.hyperparams = HyperParams::new(vec![LayerParams::FullyConnected { units: 200 }]);
        p3.hyperparams = HyperParams::new(vec![LayerParams::FullyConnected { units: 300 }]);
        let config = CascadeConfig::new(
            vec![p1.hyperparams.clone(), p2.hyperparams.clone(), p3.hyperparams.clone()],
            vec![0.5, 0.5],
            DeploymentModel::Local,
        );
        let trace = simulate_image(
            &config,
            &[p1.score_row(0), p2.score_row(0), p3.score_row(0)],
            0,
            &[&p1, &p2, &p3],
        )
        .unwrap();
        assert_eq!(trace.exit_stage, 2);
        assert!((trace.energy_mj - 7.0).abs() < 1e-12);
    }

    #[test]
    fn worked_three_image_example() {
        let (dataset, config) = worked_example(false);
        let problem = ProblemKind::EnergyMin { max_degradation: 0.01 };
        let eval = evaluate_cascade(&config, &dataset, ImageSet::Validation, &problem).unwrap();
        assert!((eval.expected_energy_mj - (10.0 + 110.0 + 110.0) / 3.0).abs() < 1e-12);
        assert_eq!(eval.error_rate, 0.0);
        assert_eq!(eval.constraint_value, 0.0);
        assert!(eval.feasible);
        assert!((eval.escalation_rates[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn worked_example_with_wrong_exit() {
        let (dataset, config) = worked_example(true);
        let problem = ProblemKind::EnergyMin { max_degradation: 0.01 };
        let eval = evaluate_cascade(&config, &dataset, ImageSet::Validation, &problem).unwrap();
        assert!((eval.error_rate - 1.0 / 3.0).abs() < 1e-15);
        assert!((eval.constraint_value - 1.0 / 3.0).abs() < 1e-15);
        assert!(!eval.feasible);
    }

    #[test]
    fn theta_zero_never_escalates() {
        let (dataset, mut config) = worked_example(true);
        config.thresholds = vec![0.0];
        let problem = ProblemKind::EnergyMin { max_degradation: 1.0 };
        let eval = evaluate_cascade(&config, &dataset, ImageSet::Validation, &problem).unwrap();
        assert!((eval.expected_energy_mj - 10.0).abs() < 1e-12);
        assert!((eval.error_rate - 1.0).abs() < 1e-15); // stage 0 wrong everywhere
        assert_eq!(eval.escalation_rates, vec![0.0]);
        // degradation = error(N1) − error(N2) = 1 − 0
        assert!((eval.constraint_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_profile_names_slot_and_architecture() {
        let (dataset, mut config) = worked_example(false);
        config.slots[1] = HyperParams::new(vec![LayerParams::FullyConnected { units: 999 }]);
        let problem = ProblemKind::EnergyMin { max_degradation: 0.01 };
        let err =
            evaluate_cascade(&config, &dataset, ImageSet::Validation, &problem).unwrap_err();
        match err {
            Error::MissingProfile { slot, params } => {
                assert_eq!(slot, 1);
                assert_eq!(params, "fc-999");
            }
            other => panic!("expected MissingProfile, got {other:?}"),
        }
    }

    #[test]
    fn sweep_counts_and_matches_direct_evaluation() {
        let (dataset, config) = worked_example(true);
        let problem = ProblemKind::EnergyMin { max_degradation: 0.5 };
        let cache =
            TraceCache::build(&config.slots, &config.deployment, &dataset, ImageSet::Validation)
                .unwrap();
        let sweep = theta_sweep(&cache, 101, &problem).unwrap();
        assert_eq!(sweep.len(), 101);
        for (thresholds, eval) in &sweep {
            let mut direct_config = config.clone();
            direct_config.thresholds = thresholds.clone();
            let direct =
                evaluate_cascade(&direct_config, &dataset, ImageSet::Validation, &problem)
                    .unwrap();
            assert_eq!(direct, *eval);
        }
    }

    #[test]
    fn sweep_lattice_size_for_three_stages() {
        let labels = [0u32, 1];
        let rows: Vec<Vec<f64>> = vec![vec![0.5, 0.3, 0.2], vec![0.2, 0.5, 0.3]];
        let row_refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mut p1 = profile_from(100, &labels, &row_refs, 1.0);
        let mut p2 = profile_from(200, &labels, &row_refs, 2.0);
        let mut p3 = profile_from(300, &labels, &row_refs, 3.0);
        p1.hyperparams = HyperParams::new(vec![LayerParams::FullyConnected { units: 100 }]);
        p2.hyperparams = HyperParams::new(vec![LayerParams::FullyConnected { units: 200 }]);
        p3.hyperparams = HyperParams::new(vec![LayerParams::FullyConnected { units: 300 }]);
        let space = crate::space::DesignSpace::new(
            vec![
                crate::space::SlotSpec::Fixed(p1.hyperparams.clone()),
                crate::space::SlotSpec::Fixed(p2.hyperparams.clone()),
                crate::space::SlotSpec::Fixed(p3.hyperparams.clone()),
            ],
            11,
        );
        let mut profiles = BTreeMap::new();
        profiles.insert(ProfileKey::new(0, p1.hyperparams.clone()), p1.clone());
        profiles.insert(ProfileKey::new(1, p2.hyperparams.clone()), p2.clone());
        profiles.insert(ProfileKey::new(2, p3.hyperparams.clone()), p3.clone());
        let dataset = ProfileDataset {
            design_space: space,
            profiles,
            image_count: 2,
            class_count: 3,
            split: vec![ImageSet::Validation; 2],
            split_seed: 1,
            split_fraction: 0.5,
            platform_tag: "test".into(),
            deployment: DeploymentConstants::default(),
        };
        let cache = TraceCache::build(
            &[p1.hyperparams.clone(), p2.hyperparams.clone(), p3.hyperparams.clone()],
            &DeploymentModel::Local,
            &dataset,
            ImageSet::Validation,
        )
        .unwrap();
        let problem = ProblemKind::EnergyMin { max_degradation: 1.0 };
        let sweep = theta_sweep(&cache, 11, &problem).unwrap();
        assert_eq!(sweep.len(), 121);
        assert!(theta_sweep(&cache, 1, &problem).is_err());
    }

    #[test]
    fn deployment_changes_energy_not_error() {
        let (dataset, config) = worked_example(true);
        let problem = ProblemKind::EnergyMin { max_degradation: 0.5 };
        let local = evaluate_cascade(&config, &dataset, ImageSet::Validation, &problem).unwrap();
        let mut edge_config = config.clone();
        edge_config.deployment = DeploymentModel::EdgeServer {
            remote_from_stage: 2,
            idle_power_w: 2.0,
            server_runtime_s: 0.01,
            comm_time_s: 0.03,
        };
        let edge =
            evaluate_cascade(&edge_config, &dataset, ImageSet::Validation, &problem).unwrap();
        assert_eq!(local.error_rate, edge.error_rate);
        assert_eq!(local.constraint_value, edge.constraint_value);
        assert_ne!(local.expected_energy_mj, edge.expected_energy_mj);
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let h = HyperParams::new(vec![LayerParams::FullyConnected { units: 100 }]);
        let bad_thresholds =
            CascadeConfig::new(vec![h.clone(), h.clone()], vec![], DeploymentModel::Local);
        assert!(bad_thresholds.validate().is_err());
        let bad_theta =
            CascadeConfig::new(vec![h.clone(), h.clone()], vec![1.5], DeploymentModel::Local);
        assert!(bad_theta.validate().is_err());
        let bad_remote = CascadeConfig::new(
            vec![h.clone(), h.clone()],
            vec![0.5],
            DeploymentModel::EdgeServer {
                remote_from_stage: 3,
                idle_power_w: 2.0,
                server_runtime_s: 0.01,
                comm_time_s: 0.01,
            },
        );
        assert!(bad_remote.validate().is_err());
        let single = CascadeConfig::new(vec![h], vec![], DeploymentModel::Local);
        assert!(single.validate().is_ok());
    }
}
