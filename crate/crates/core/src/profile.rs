//! Network profiles and the datasets that hold them.
//!
//! A profile is what a trained, hardware-profiled network leaves behind: one
//! class-score vector per image, the true labels, and the measured average
//! power, per-image runtime, and per-image energy. Datasets bundle one
//! profile per (cascade slot, architecture) pair together with the design
//! space, a validation/test split, and the deployment constants of the
//! platform they were measured on.
//!
//! On disk a dataset is a directory: `manifest.json` plus one plain-text
//! record file per profile (header line `power_w runtime_s energy_mj`, then
//! one line per image: true label followed by the K class scores). Floats are
//! written with 17 significant digits so a save/load round trip is bit-exact.

use crate::error::{Error, Result};
use crate::space::{DesignSpace, HyperParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Relative tolerance for the score-row sum and the energy identity.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

/// Which side of the split an image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSet {
    Validation,
    Test,
}

/// Per-image class scores plus hardware measurements for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub hyperparams: HyperParams,
    /// Flattened row-major scores, `image_count × class_count`.
    pub scores: Vec<f64>,
    pub labels: Vec<u32>,
    pub class_count: usize,
    pub power_w: f64,
    pub runtime_s: f64,
    pub energy_mj: f64,
    pub platform_tag: String,
}

impl NetworkProfile {
    pub fn image_count(&self) -> usize {
        self.labels.len()
    }

    /// The K class scores of image `i`.
    pub fn score_row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.hyperparams.canonical();
        if self.class_count < 2 {
            return Err(Error::Validation(format!("{name}: class_count must be >= 2")));
        }
        if self.scores.len() != self.labels.len() * self.class_count {
            return Err(Error::Consistency(format!(
                "{name}: {} scores for {} images x {} classes",
                self.scores.len(),
                self.labels.len(),
                self.class_count
            )));
        }
        for (i, row) in self.scores.chunks(self.class_count).enumerate() {
            let mut sum = 0.0;
            for &v in row {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!(
                        "{name}: score out of [0,1] at image {i}: {v}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "{name}: score row {i} sums to {sum}, expected 1 within {SCORE_SUM_TOLERANCE}"
                )));
            }
        }
        for (i, &label) in self.labels.iter().enumerate() {
            if label as usize >= self.class_count {
                return Err(Error::Validation(format!(
                    "{name}: label {label} at image {i} exceeds class count {}",
                    self.class_count
                )));
            }
        }
        for (field, v) in [
            ("power_w", self.power_w),
            ("runtime_s", self.runtime_s),
            ("energy_mj", self.energy_mj),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Validation(format!("{name}: {field} must be finite and > 0")));
            }
        }
        let expected = self.power_w * self.runtime_s * 1000.0;
        if (self.energy_mj - expected).abs() > SCORE_SUM_TOLERANCE * expected.abs() {
            return Err(Error::Validation(format!(
                "{name}: energy_mj {} != power_w x runtime_s x 1000 = {expected}",
                self.energy_mj
            )));
        }
        Ok(())
    }
}

/// Identifies a profile inside a dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProfileKey {
    pub slot: usize,
    pub params: HyperParams,
}

impl ProfileKey {
    pub fn new(slot: usize, params: HyperParams) -> Self {
        Self { slot, params }
    }
}

/// Platform constants used by the edge-server deployment model; stored with
/// the dataset so runs against the same measurements reuse the same numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConstants {
    pub idle_power_w: f64,
    pub server_runtime_s: f64,
    pub ethernet_comm_s: f64,
    pub wireless_comm_s: f64,
}

impl Default for DeploymentConstants {
    fn default() -> Self {
        Self {
            idle_power_w: 2.0,
            server_runtime_s: 0.002,
            ethernet_comm_s: 0.005,
            wireless_comm_s: 0.050,
        }
    }
}

/// A complete profile dataset: design space, profiles, split.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDataset {
    pub design_space: DesignSpace,
    pub profiles: BTreeMap<ProfileKey, NetworkProfile>,
    pub image_count: usize,
    pub class_count: usize,
    pub split: Vec<ImageSet>,
    pub split_seed: u64,
    pub split_fraction: f64,
    pub platform_tag: String,
    pub deployment: DeploymentConstants,
}

impl ProfileDataset {
    /// Looks up the profile backing `slot` with architecture `params`.
    pub fn profile(&self, slot: usize, params: &HyperParams) -> Result<&NetworkProfile> {
        self.profiles
            .get(&ProfileKey::new(slot, params.clone()))
            .ok_or_else(|| Error::MissingProfile { slot, params: params.canonical() })
    }

    /// Image indices belonging to `set`, ascending.
    pub fn indices_of(&self, set: ImageSet) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == set).then_some(i))
            .collect()
    }

    /// Full machine-check of every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        self.design_space.validate()?;
        if self.split.len() != self.image_count {
            return Err(Error::Consistency(format!(
                "split covers {} images, dataset declares {}",
                self.split.len(),
                self.image_count
            )));
        }
        if !(0.0 < self.split_fraction && self.split_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "split_fraction must lie in (0,1), got {}",
                self.split_fraction
            )));
        }
        let mut reference_labels: Option<(&ProfileKey, &[u32])> = None;
        for (key, profile) in &self.profiles {
            profile.validate()?;
            if key.params != profile.hyperparams {
                return Err(Error::Consistency(format!(
                    "profile keyed {} stores architecture {}",
                    key.params.canonical(),
                    profile.hyperparams.canonical()
                )));
            }
            if key.slot >= self.design_space.stages() {
                return Err(Error::Consistency(format!(
                    "profile slot {} outside the {}-stage design space",
                    key.slot,
                    self.design_space.stages()
                )));
            }
            if profile.image_count() != self.image_count {
                return Err(Error::Consistency(format!(
                    "profile {} has {} images, dataset declares {}",
                    key.params.canonical(),
                    profile.image_count(),
                    self.image_count
                )));
            }
            if profile.class_count != self.class_count {
                return Err(Error::Consistency(format!(
                    "profile {} has {} classes, dataset declares {}",
                    key.params.canonical(),
                    profile.class_count,
                    self.class_count
                )));
            }
            match reference_labels {
                None => reference_labels = Some((key, &profile.labels)),
                Some((ref_key, ref_labels)) => {
                    if profile.labels != ref_labels {
                        return Err(Error::Consistency(format!(
                            "label sequence of {} differs from {}",
                            key.params.canonical(),
                            ref_key.params.canonical()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Deterministically reassigns the validation/test split.
///
/// `|validation| = round(fraction × image_count)` with halves rounded away
/// from zero; the remaining images form the test set. The same seed always
/// produces the same split.
pub fn split_images(
    dataset: &ProfileDataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<ProfileDataset> {
    if dataset.image_count < 2 {
        return Err(Error::Argument("split requires at least 2 images".into()));
    }
    if !(0.0 < validation_fraction && validation_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "validation fraction must lie in (0,1), got {validation_fraction}"
        )));
    }
    let mut out = dataset.clone();
    out.split = compute_split(dataset.image_count, validation_fraction, seed);
    out.split_seed = seed;
    out.split_fraction = validation_fraction;
    Ok(out)
}

/// The split assignment itself; `split_images` and dataset loading share it.
pub(crate) fn compute_split(image_count: usize, fraction: f64, seed: u64) -> Vec<ImageSet> {
    let mut indices: Vec<usize> = (0..image_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    // round half away from zero (fraction and count are non-negative)
    let validation = (fraction * image_count as f64 + 0.5).floor() as usize;
    let validation = validation.min(image_count);
    let mut split = vec![ImageSet::Test; image_count];
    for &i in &indices[..validation] {
        split[i] = ImageSet::Validation;
    }
    split
}

// --- on-disk format ---

#[derive(Serialize, Deserialize)]
struct Manifest {
    class_count: usize,
    image_count: usize,
    platform_tag: String,
    split_seed: u64,
    split_fraction: f64,
    design_space: DesignSpace,
    deployment: DeploymentConstants,
    profiles: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    slot: usize,
    arch: String,
    file: String,
}

fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(text: &str, context: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| Error::Format(format!("{context}: unparsable number {text:?}")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("{context}: non-finite number {text:?}")));
    }
    Ok(v)
}

/// Persists a dataset as a directory (`manifest.json` + one record file per
/// profile). A subsequent [`load_dataset`] reproduces every numeric field
/// bit-exactly.
pub fn save_dataset(dataset: &ProfileDataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(path)?;
    let mut entries = Vec::with_capacity(dataset.profiles.len());
    for (key, profile) in &dataset.profiles {
        let file = format!("slot{}__{}.profile", key.slot, key.params.canonical());
        let mut body = String::new();
        let _ = writeln!(
            body,
            "{} {} {}",
            format_f64(profile.power_w),
            format_f64(profile.runtime_s),
            format_f64(profile.energy_mj)
        );
        for i in 0..profile.image_count() {
            let _ = write!(body, "{}", profile.labels[i]);
            for &s in profile.score_row(i) {
                let _ = write!(body, " {}", format_f64(s));
            }
            body.push('\n');
        }
        fs::write(path.join(&file), body)?;
        entries.push(ManifestEntry { slot: key.slot, arch: key.params.canonical(), file });
    }
    let manifest = Manifest {
        class_count: dataset.class_count,
        image_count: dataset.image_count,
        platform_tag: dataset.platform_tag.clone(),
        split_seed: dataset.split_seed,
        split_fraction: dataset.split_fraction,
        design_space: dataset.design_space.clone(),
        deployment: dataset.deployment,
        profiles: entries,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    fs::write(path.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Loads a dataset directory written by [`save_dataset`], validating every
/// invariant on the way in.
pub fn load_dataset(path: &Path) -> Result<ProfileDataset> {
    let manifest_path = path.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Format(format!("missing manifest {}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("bad manifest: {e}")))?;

    let mut profiles = BTreeMap::new();
    for entry in &manifest.profiles {
        let params = HyperParams::parse_canonical(&entry.arch)?;
        let profile = read_record_file(
            &path.join(&entry.file),
            params.clone(),
            manifest.class_count,
            manifest.image_count,
            &manifest.platform_tag,
        )?;
        let key = ProfileKey::new(entry.slot, params);
        if profiles.insert(key, profile).is_some() {
            return Err(Error::Consistency(format!(
                "duplicate profile entry slot {} {}",
                entry.slot, entry.arch
            )));
        }
    }

    let dataset = ProfileDataset {
        design_space: manifest.design_space,
        profiles,
        image_count: manifest.image_count,
        class_count: manifest.class_count,
        split: compute_split(manifest.image_count, manifest.split_fraction, manifest.split_seed),
        split_seed: manifest.split_seed,
        split_fraction: manifest.split_fraction,
        platform_tag: manifest.platform_tag,
        deployment: manifest.deployment,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn read_record_file(
    path: &Path,
    hyperparams: HyperParams,
    class_count: usize,
    image_count: usize,
    platform_tag: &str,
) -> Result<NetworkProfile> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("missing record file {name}: {e}")))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{name}: empty record file")))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 {
        return Err(Error::Format(format!(
            "{name}: header must be 'power_w runtime_s energy_mj', got {} fields",
            head.len()
        )));
    }
    let power_w = parse_f64(head[0], &format!("{name} header power_w"))?;
    let runtime_s = parse_f64(head[1], &format!("{name} header runtime_s"))?;
    let energy_mj = parse_f64(head[2], &format!("{name} header energy_mj"))?;

    let mut labels = Vec::with_capacity(image_count);
    let mut scores = Vec::with_capacity(image_count * class_count);
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label_text = fields
            .next()
            .ok_or_else(|| Error::Format(format!("{name}: empty row {row}")))?;
        let label: u32 = label_text
            .parse()
            .map_err(|_| Error::Format(format!("{name}: bad label {label_text:?} at row {row}")))?;
        let row_scores: Vec<f64> = fields
            .map(|f| parse_f64(f, &format!("{name} row {row}")))
            .collect::<Result<_>>()?;
        if row_scores.len() != class_count {
            return Err(Error::Consistency(format!(
                "{name}: row {row} has {} scores, manifest declares K={class_count}",
                row_scores.len()
            )));
        }
        labels.push(label);
        scores.extend_from_slice(&row_scores);
    }
    if labels.len() != image_count {
        return Err(Error::Consistency(format!(
            "{name}: {} image rows, manifest declares {image_count}",
            labels.len()
        )));
    }
    let profile = NetworkProfile {
        hyperparams,
        scores,
        labels,
        class_count,
        power_w,
        runtime_s,
        energy_mj,
        platform_tag: platform_tag.to_string(),
    };
    profile.validate()?;
    Ok(profile)
}
