//! Mixed-radix indexing of the joint (architecture × threshold) lattice.
//!
//! The search space is finite: every searchable slot contributes its integer
//! dimensions and every threshold contributes a uniform grid on [0, 1].
//! Lattice index order is lexicographic over (arch dims slot-major, then θ
//! dims), which also matches lexicographic order of the encoded [0, 1]
//! vectors; tie-breaking "by lowest encoding" is therefore tie-breaking by
//! lowest index.

use crate::cascade::{CascadeConfig, DeploymentModel};
use crate::error::{Error, Result};
use crate::numeric::theta_value;
use crate::space::{DesignSpace, Dimension};

#[derive(Debug, Clone)]
pub struct JointLattice {
    space: DesignSpace,
    arch_dims: Vec<Dimension>,
    theta_dims: usize,
    theta_resolution: usize,
    /// Radix of every joint dimension: arch dims first, then θ dims.
    sizes: Vec<u64>,
    total: u64,
}

impl JointLattice {
    pub fn new(space: &DesignSpace, theta_resolution: usize) -> Result<Self> {
        space.validate()?;
        if theta_resolution < 2 {
            return Err(Error::Argument(format!(
                "theta grid resolution must be >= 2, got {theta_resolution}"
            )));
        }
        let arch_dims = space.all_dimensions();
        let theta_dims = space.stages() - 1;
        let mut sizes: Vec<u64> = arch_dims.iter().map(|d| d.range.count()).collect();
        sizes.extend(std::iter::repeat(theta_resolution as u64).take(theta_dims));
        let mut total: u64 = 1;
        for &s in &sizes {
            total = total
                .checked_mul(s)
                .ok_or_else(|| Error::Argument("lattice size overflows u64".into()))?;
        }
        Ok(Self {
            space: space.clone(),
            arch_dims,
            theta_dims,
            theta_resolution,
            sizes,
            total,
        })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct architecture tuples (ignoring thresholds).
    pub fn arch_total(&self) -> u64 {
        self.arch_dims.iter().map(|d| d.range.count()).product()
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn theta_resolution(&self) -> usize {
        self.theta_resolution
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn coords_of(&self, index: u64) -> Vec<u64> {
        debug_assert!(index < self.total);
        let mut coords = vec![0u64; self.sizes.len()];
        let mut rem = index;
        for (d, &size) in self.sizes.iter().enumerate().rev() {
            coords[d] = rem % size;
            rem /= size;
        }
        coords
    }

    pub fn index_of(&self, coords: &[u64]) -> u64 {
        debug_assert_eq!(coords.len(), self.sizes.len());
        let mut index = 0u64;
        for (d, &c) in coords.iter().enumerate() {
            debug_assert!(c < self.sizes[d]);
            index = index * self.sizes[d] + c;
        }
        index
    }

    /// Materializes the design point at `coords`.
    pub fn config_at_coords(
        &self,
        coords: &[u64],
        deployment: &DeploymentModel,
    ) -> Result<CascadeConfig> {
        let mut slots = Vec::with_capacity(self.space.stages());
        let mut cursor = 0;
        for slot in 0..self.space.stages() {
            let n_dims = self.space.slot_dimensions(slot).len();
            let values: Vec<u32> = self.arch_dims[cursor..cursor + n_dims]
                .iter()
                .zip(&coords[cursor..cursor + n_dims])
                .map(|(dim, &c)| dim.range.value_at(c))
                .collect();
            slots.push(self.space.materialize(slot, &values)?);
            cursor += n_dims;
        }
        let thresholds: Vec<f64> = (0..self.theta_dims)
            .map(|t| theta_value(coords[cursor + t] as usize, self.theta_resolution))
            .collect();
        Ok(CascadeConfig::new(slots, thresholds, *deployment))
    }

    pub fn config_at(&self, index: u64, deployment: &DeploymentModel) -> Result<CascadeConfig> {
        self.config_at_coords(&self.coords_of(index), deployment)
    }

    /// Inverse of [`JointLattice::config_at_coords`]; errors when the config
    /// is off the lattice (including thresholds that are not exact grid
    /// values).
    pub fn coords_of_config(&self, config: &CascadeConfig) -> Result<Vec<u64>> {
        if config.stages() != self.space.stages() {
            return Err(Error::Argument(format!(
                "config has {} stages, lattice has {}",
                config.stages(),
                self.space.stages()
            )));
        }
        let mut coords = Vec::with_capacity(self.sizes.len());
        for (slot, params) in config.slots.iter().enumerate() {
            let values = self.space.flatten(slot, params)?;
            let dims = self.space.slot_dimensions(slot);
            for (dim, v) in dims.iter().zip(values) {
                let idx = dim.range.index_of(v).ok_or_else(|| {
                    Error::Argument(format!("{} = {v} off the lattice", dim.name))
                })?;
                coords.push(idx);
            }
        }
        for &t in &config.thresholds {
            let approx = (t * (self.theta_resolution - 1) as f64).round();
            if !(0.0..self.theta_resolution as f64).contains(&approx) {
                return Err(Error::Argument(format!("threshold {t} off the grid")));
            }
            let idx = approx as usize;
            if theta_value(idx, self.theta_resolution) != t {
                return Err(Error::Argument(format!("threshold {t} off the grid")));
            }
            coords.push(idx as u64);
        }
        Ok(coords)
    }

    pub fn index_of_config(&self, config: &CascadeConfig) -> Result<u64> {
        Ok(self.index_of(&self.coords_of_config(config)?))
    }

    /// Architecture tuple at rank `arch_index` of the architecture-only
    /// lattice (threshold dimensions excluded), lexicographic order.
    pub fn slots_at(&self, arch_index: u64) -> Result<Vec<crate::space::HyperParams>> {
        debug_assert!(arch_index < self.arch_total());
        let n_arch = self.arch_dims.len();
        let mut coords = vec![0u64; n_arch];
        let mut rem = arch_index;
        for d in (0..n_arch).rev() {
            let size = self.sizes[d];
            coords[d] = rem % size;
            rem /= size;
        }
        let mut slots = Vec::with_capacity(self.space.stages());
        let mut cursor = 0;
        for slot in 0..self.space.stages() {
            let n_dims = self.space.slot_dimensions(slot).len();
            let values: Vec<u32> = self.arch_dims[cursor..cursor + n_dims]
                .iter()
                .zip(&coords[cursor..cursor + n_dims])
                .map(|(dim, &c)| dim.range.value_at(c))
                .collect();
            slots.push(self.space.materialize(slot, &values)?);
            cursor += n_dims;
        }
        Ok(slots)
    }

    /// All single-step neighbors (±1 in exactly one dimension).
    pub fn neighbors(&self, coords: &[u64]) -> Vec<Vec<u64>> {
        let mut out = Vec::with_capacity(2 * coords.len());
        for d in 0..coords.len() {
            if coords[d] > 0 {
                let mut c = coords.to_vec();
                c[d] -= 1;
                out.push(c);
            }
            if coords[d] + 1 < self.sizes[d] {
                let mut c = coords.to_vec();
                c[d] += 1;
                out.push(c);
            }
        }
        out
    }
}
