//! Seeded synthetic profile generation.
//!
//! Stands in for training and hardware-profiling real networks so the
//! optimizers can be exercised at desk scale. The generator draws one
//! difficulty per image; an architecture classifies an image correctly iff
//! the image's difficulty falls below the architecture's capacity, an affine
//! function of its normalized hyper-parameters clamped to [0.5, 0.99]. Score
//! margins grow with the capacity surplus plus bounded uniform noise, and
//! energy is affine in a MAC-count proxy. Everything is deterministic for a
//! fixed seed (ChaCha8 streams, one per profile).

use crate::error::{Error, Result};
use crate::profile::{
    compute_split, DeploymentConstants, NetworkProfile, ProfileDataset, ProfileKey,
};
use crate::space::{
    enumerate_space, DesignSpace, HyperParams, LayerParams, LayerRanges, ParamRange, SlotSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Synthetic power draw assigned to every profile; runtime is derived so that
/// energy = power × runtime × 1000 holds exactly.
pub const SYNTHETIC_POWER_W: f64 = 5.0;

const CAPACITY_FLOOR: f64 = 0.5;
const CAPACITY_CEIL: f64 = 0.99;

/// Classification capacity of one cascade slot as a function of its
/// (normalized) hyper-parameters. Output is clamped to [0.5, 0.99].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityModel {
    /// `base + Σ weights[d] · x[d]` with `x[d]` the slot's search dimensions
    /// normalized to [0, 1]. Weights must be non-negative so that larger
    /// architectures never classify worse.
    Affine { base: f64, weights: Vec<f64> },
    /// Fixed capacity, for slots pinned to an off-the-shelf architecture.
    Constant(f64),
}

/// Everything the generator needs besides the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub image_count: usize,
    /// One capacity model per cascade slot.
    pub capacity: Vec<CapacityModel>,
    /// Energy per normalized MAC proxy (mJ), the slope `a`.
    pub energy_per_mac_mj: f64,
    /// Energy offset (mJ), the intercept `b`.
    pub energy_offset_mj: f64,
    /// Half-width of the uniform margin noise.
    pub noise_scale: f64,
    pub seed: u64,
    pub platform_tag: String,
    pub split_fraction: f64,
}

impl SyntheticSpec {
    pub fn validate(&self, space: &DesignSpace) -> Result<()> {
        space.validate()?;
        if self.image_count == 0 {
            return Err(Error::Argument("image_count must be positive".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Argument("class_count must be >= 2".into()));
        }
        if self.capacity.len() != space.stages() {
            return Err(Error::Argument(format!(
                "{} capacity models for {} slots",
                self.capacity.len(),
                space.stages()
            )));
        }
        for (slot, model) in self.capacity.iter().enumerate() {
            match model {
                CapacityModel::Affine { base, weights } => {
                    let dims = space.slot_dimensions(slot);
                    if weights.len() != dims.len() {
                        return Err(Error::Argument(format!(
                            "slot {slot}: {} capacity weights for {} dimensions",
                            weights.len(),
                            dims.len()
                        )));
                    }
                    if !base.is_finite() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                        return Err(Error::Argument(format!(
                            "slot {slot}: capacity weights must be finite and non-negative"
                        )));
                    }
                }
                CapacityModel::Constant(c) => {
                    if !c.is_finite() {
                        return Err(Error::Argument(format!(
                            "slot {slot}: capacity must be finite"
                        )));
                    }
                }
            }
        }
        if !(self.energy_per_mac_mj >= 0.0) || !(self.energy_offset_mj > 0.0) {
            return Err(Error::Argument(
                "energy coefficients must satisfy a >= 0, b > 0".into(),
            ));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Argument("noise_scale must be >= 0".into()));
        }
        if !(0.0 < self.split_fraction && self.split_fraction < 1.0) {
            return Err(Error::Argument("split_fraction must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// Capacity of `params` filling `slot`.
    pub fn capacity_of(
        &self,
        space: &DesignSpace,
        slot: usize,
        params: &HyperParams,
    ) -> Result<f64> {
        let raw = match &self.capacity[slot] {
            CapacityModel::Constant(c) => *c,
            CapacityModel::Affine { base, weights } => {
                let dims = space.slot_dimensions(slot);
                let values = space.flatten(slot, params)?;
                let mut c = *base;
                for ((dim, v), w) in dims.iter().zip(&values).zip(weights) {
                    let span = f64::from(dim.range.max - dim.range.min);
                    let x = if span > 0.0 {
                        f64::from(v - dim.range.min) / span
                    } else {
                        0.0
                    };
                    c += w * x;
                }
                c
            }
        };
        Ok(raw.clamp(CAPACITY_FLOOR, CAPACITY_CEIL))
    }
}

/// Core generation rule for one (architecture, image) pair: correct iff
/// `difficulty < capacity`; margin = clamp(0.1 + 1.5·(capacity − difficulty)
/// + noise, 0, 1).
pub fn synth_image(capacity: f64, difficulty: f64, noise: f64) -> (bool, f64) {
    let correct = difficulty < capacity;
    let margin = (0.1 + 1.5 * (capacity - difficulty) + noise).clamp(0.0, 1.0);
    (correct, margin)
}

/// Builds the score row realizing a margin: the intended top class `top` gets
/// the maximum, `second` sits exactly `margin` below it, and the remaining
/// classes split the leftover mass at half the runner-up's score so the
/// argmax tie at margin 0 stays within {top, second}.
fn score_row(class_count: usize, top: usize, second: usize, margin: f64) -> Vec<f64> {
    debug_assert!(top != second && top < class_count && second < class_count);
    let k = class_count as f64;
    let mut row = vec![0.0; class_count];
    if class_count == 2 {
        row[top] = (1.0 + margin) / 2.0;
        row[second] = (1.0 - margin) / 2.0;
        return row;
    }
    let runner_up = 2.0 * (1.0 - margin) / (k + 2.0);
    let rest = runner_up / 2.0;
    for r in row.iter_mut() {
        *r = rest;
    }
    row[top] = runner_up + margin;
    row[second] = runner_up;
    // absorb rounding so the row sums to 1 within far less than 1e-6
    let sum: f64 = row.iter().sum();
    row[top] += 1.0 - sum;
    row
}

fn profile_stream_seed(master: u64, slot: usize, params: &HyperParams) -> u64 {
    // FNV-1a over the canonical encoding, mixed with seed and slot
    let mut h: u64 = 0xcbf29ce484222325;
    for b in params.canonical().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ master.rotate_left(17) ^ (slot as u64).wrapping_mul(0x9e3779b97f4a7c15)
}

/// Largest MAC proxy reachable anywhere in the design space; energies are
/// normalized against it.
fn global_max_proxy(space: &DesignSpace) -> f64 {
    let mut max = 0.0f64;
    for (s, slot) in space.slots.iter().enumerate() {
        let proxy = match slot {
            SlotSpec::Fixed(params) => params.mac_proxy(),
            SlotSpec::Search(_) => {
                let dims = space.slot_dimensions(s);
                let values: Vec<u32> = dims.iter().map(|d| d.range.max).collect();
                space
                    .materialize(s, &values)
                    .map(|h| h.mac_proxy())
                    .unwrap_or(0.0)
            }
        };
        max = max.max(proxy);
    }
    max
}

/// Generates a full profile dataset: one profile per lattice point of every
/// searchable slot plus one per fixed slot. Deterministic for a fixed seed;
/// componentwise-larger architectures never classify worse or cost less.
pub fn generate_synthetic(spec: &SyntheticSpec, space: &DesignSpace) -> Result<ProfileDataset> {
    spec.validate(space)?;
    let n = spec.image_count;
    let k = spec.class_count;

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let difficulties: Vec<f64> = (0..n).map(|_| master.gen_range(0.0..1.0)).collect();
    let labels: Vec<u32> = (0..n).map(|_| master.gen_range(0..k as u32)).collect();

    let max_proxy = global_max_proxy(space);
    if max_proxy <= 0.0 {
        return Err(Error::Argument("design space has zero total complexity".into()));
    }

    let mut profiles = std::collections::BTreeMap::new();
    for (slot_idx, slot) in space.slots.iter().enumerate() {
        let candidates = match slot {
            SlotSpec::Fixed(params) => vec![params.clone()],
            SlotSpec::Search(_) => enumerate_space(space, slot_idx)?,
        };
        for params in candidates {
            let profile = synth_profile(
                spec,
                space,
                slot_idx,
                &params,
                &difficulties,
                &labels,
                max_proxy,
            )?;
            profiles.insert(ProfileKey::new(slot_idx, params), profile);
        }
    }

    let dataset = ProfileDataset {
        design_space: space.clone(),
        profiles,
        image_count: n,
        class_count: k,
        split: compute_split(n, spec.split_fraction, spec.seed),
        split_seed: spec.seed,
        split_fraction: spec.split_fraction,
        platform_tag: spec.platform_tag.clone(),
        deployment: DeploymentConstants::default(),
    };
    dataset.validate()?;
    Ok(dataset)
}

fn synth_profile(
    spec: &SyntheticSpec,
    space: &DesignSpace,
    slot: usize,
    params: &HyperParams,
    difficulties: &[f64],
    labels: &[u32],
    max_proxy: f64,
) -> Result<NetworkProfile> {
    let k = spec.class_count;
    let capacity = spec.capacity_of(space, slot, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile_stream_seed(spec.seed, slot, params));

    let mut scores = Vec::with_capacity(difficulties.len() * k);
    for (&d, &label) in difficulties.iter().zip(labels) {
        let noise = rng.gen_range(-1.0..=1.0) * spec.noise_scale;
        let w1 = draw_class_except(&mut rng, k, &[label as usize]);
        let w2_pool: Vec<usize> = if k >= 3 { vec![label as usize, w1] } else { vec![w1] };
        let w2 = draw_class_except(&mut rng, k, &w2_pool);
        let (correct, margin) = synth_image(capacity, d, noise);
        let (top, second) = if correct { (label as usize, w1) } else { (w1, w2) };
        scores.extend_from_slice(&score_row(k, top, second, margin));
    }

    let energy_mj = spec.energy_per_mac_mj * (params.mac_proxy() / max_proxy) + spec.energy_offset_mj;
    let runtime_s = energy_mj / (SYNTHETIC_POWER_W * 1000.0);
    Ok(NetworkProfile {
        hyperparams: params.clone(),
        scores,
        labels: labels.to_vec(),
        class_count: k,
        power_w: SYNTHETIC_POWER_W,
        runtime_s,
        energy_mj,
        platform_tag: spec.platform_tag.clone(),
    })
}

fn draw_class_except(rng: &mut ChaCha8Rng, class_count: usize, exclude: &[usize]) -> usize {
    let available = class_count - exclude.len();
    debug_assert!(available > 0);
    let mut pick = rng.gen_range(0..available);
    for c in 0..class_count {
        if exclude.contains(&c) {
            continue;
        }
        if pick == 0 {
            return c;
        }
        pick -= 1;
    }
    unreachable!("exclusion list covers all classes")
}

// --- stock instances used by the CLI defaults and the acceptance suite ---

/// Two-stage space: a searchable first stage (840 lattice points over two
/// conv layers' worth of ranges collapsed to one conv + one fc) and a large
/// fixed second stage.
pub fn benchmark_space() -> DesignSpace {
    DesignSpace::new(
        vec![
            SlotSpec::Search(vec![
                LayerRanges::Conv {
                    feature_maps: ParamRange::new(32, 448, 32),
                    kernel_size: ParamRange::new(2, 5, 1),
                },
                LayerRanges::FullyConnected { units: ParamRange::new(500, 4000, 250) },
            ]),
            SlotSpec::Fixed(HyperParams::new(vec![
                LayerParams::Conv { feature_maps: 448, kernel_size: 5 },
                LayerParams::Conv { feature_maps: 448, kernel_size: 5 },
                LayerParams::FullyConnected { units: 4000 },
            ])),
        ],
        101,
    )
}

/// Moderate-noise instance: margins carry real signal, so mixed-threshold
/// cascades genuinely beat single-network designs.
pub fn benchmark_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        class_count: 10,
        image_count: 300,
        capacity: vec![
            CapacityModel::Affine { base: 0.5, weights: vec![0.25, 0.05, 0.18] },
            CapacityModel::Constant(0.93),
        ],
        energy_per_mac_mj: 50.0,
        energy_offset_mj: 5.0,
        noise_scale: 0.25,
        seed,
        platform_tag: "synthetic-benchmark".into(),
        split_fraction: 0.8,
    }
}

/// Instance on the same space where first-stage capacity is driven almost
/// entirely by the fully connected units while energy is dominated by the
/// convolution cost. An off-the-shelf wide-kernel first stage is then
/// expensive yet weak, so threshold-only optimization under a tight
/// degradation bound must escalate most images and ends up costlier than the
/// big network alone.
pub fn static_pathology_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        capacity: vec![
            CapacityModel::Affine { base: 0.5, weights: vec![0.03, 0.01, 0.44] },
            CapacityModel::Constant(0.93),
        ],
        noise_scale: 0.3,
        image_count: 600,
        platform_tag: "synthetic-pathology".into(),
        ..benchmark_spec(seed)
    }
}

/// The fixed architectures the pathology instance is built around: a
/// wide-kernel, few-units first stage (costly, inaccurate under
/// [`static_pathology_spec`]'s capacity weights) ahead of the big fixed
/// second stage.
pub fn static_pathology_slots() -> Vec<HyperParams> {
    vec![
        HyperParams::new(vec![
            LayerParams::Conv { feature_maps: 448, kernel_size: 5 },
            LayerParams::FullyConnected { units: 500 },
        ]),
        HyperParams::new(vec![
            LayerParams::Conv { feature_maps: 448, kernel_size: 5 },
            LayerParams::Conv { feature_maps: 448, kernel_size: 5 },
            LayerParams::FullyConnected { units: 4000 },
        ]),
    ]
}
