//! Hyper-parameter vectors and the discrete design space they live in.
//!
//! A cascade slot is either fixed (an off-the-shelf architecture that the
//! search never touches) or searchable over a lattice of integer
//! hyper-parameters: feature maps and kernel size per convolution layer,
//! units per fully connected layer. Exit thresholds share the space as
//! continuous dimensions snapped to a uniform grid on [0, 1].

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// One layer's hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerParams {
    Conv { feature_maps: u32, kernel_size: u32 },
    FullyConnected { units: u32 },
}

/// An ordered list of layer hyper-parameters following a fixed network
/// template.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HyperParams {
    pub layers: Vec<LayerParams>,
}

impl HyperParams {
    pub fn new(layers: Vec<LayerParams>) -> Self {
        Self { layers }
    }

    /// Canonical text encoding, e.g. `conv1-64_k5_conv2-128_k3_fc-2000`.
    ///
    /// Convolution layers are numbered in order; fully connected layers carry
    /// a number only when the network has more than one.
    pub fn canonical(&self) -> String {
        let fc_total = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerParams::FullyConnected { .. }))
            .count();
        let mut conv_idx = 0;
        let mut fc_idx = 0;
        let mut parts = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                LayerParams::Conv { feature_maps, kernel_size } => {
                    conv_idx += 1;
                    parts.push(format!("conv{conv_idx}-{feature_maps}_k{kernel_size}"));
                }
                LayerParams::FullyConnected { units } => {
                    fc_idx += 1;
                    if fc_total > 1 {
                        parts.push(format!("fc{fc_idx}-{units}"));
                    } else {
                        parts.push(format!("fc-{units}"));
                    }
                }
            }
        }
        parts.join("_")
    }

    /// Parses the canonical encoding produced by [`HyperParams::canonical`].
    pub fn parse_canonical(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("bad architecture encoding {text:?}: {msg}"));
        let mut layers = Vec::new();
        let mut tokens = text.split('_').peekable();
        while let Some(tok) = tokens.next() {
            if let Some(rest) = tok.strip_prefix("conv") {
                let (_, maps) = rest
                    .split_once('-')
                    .ok_or_else(|| bad("conv layer missing '-'"))?;
                let feature_maps: u32 =
                    maps.parse().map_err(|_| bad("unparsable feature map count"))?;
                let ktok = tokens.next().ok_or_else(|| bad("conv layer missing kernel token"))?;
                let kernel = ktok
                    .strip_prefix('k')
                    .ok_or_else(|| bad("expected kernel token 'k<n>'"))?;
                let kernel_size: u32 =
                    kernel.parse().map_err(|_| bad("unparsable kernel size"))?;
                layers.push(LayerParams::Conv { feature_maps, kernel_size });
            } else if let Some(rest) = tok.strip_prefix("fc") {
                let units_text = rest
                    .split_once('-')
                    .map(|(_, u)| u)
                    .or_else(|| rest.strip_prefix('-'))
                    .ok_or_else(|| bad("fc layer missing '-'"))?;
                let units: u32 = units_text.parse().map_err(|_| bad("unparsable unit count"))?;
                layers.push(LayerParams::FullyConnected { units });
            } else {
                return Err(bad("unknown layer token"));
            }
        }
        if layers.is_empty() {
            return Err(bad("no layers"));
        }
        Ok(Self { layers })
    }

    /// Complexity proxy: Σ feature_maps·kernel² over conv layers plus Σ units
    /// over fully connected layers.
    pub fn mac_proxy(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv { feature_maps, kernel_size } => {
                    f64::from(*feature_maps) * f64::from(kernel_size * kernel_size)
                }
                LayerParams::FullyConnected { units } => f64::from(*units),
            })
            .sum()
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Inclusive integer range walked in `step` increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: u32,
    pub max: u32,
    pub step: u32,
}

impl ParamRange {
    pub fn new(min: u32, max: u32, step: u32) -> Self {
        Self { min, max, step }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.min == 0 {
            return Err(Error::Validation(format!("{name}: values must be positive")));
        }
        if self.step == 0 {
            return Err(Error::Validation(format!("{name}: step must be positive")));
        }
        if self.min > self.max {
            return Err(Error::Validation(format!(
                "{name}: min {} > max {}",
                self.min, self.max
            )));
        }
        if (self.max - self.min) % self.step != 0 {
            return Err(Error::Validation(format!(
                "{name}: span {} not divisible by step {}",
                self.max - self.min,
                self.step
            )));
        }
        Ok(())
    }

    /// Number of lattice points: (max − min)/step + 1.
    pub fn count(&self) -> u64 {
        u64::from((self.max - self.min) / self.step) + 1
    }

    pub fn contains(&self, value: u32) -> bool {
        value >= self.min && value <= self.max && (value - self.min) % self.step == 0
    }

    pub fn value_at(&self, index: u64) -> u32 {
        debug_assert!(index < self.count());
        self.min + (index as u32) * self.step
    }

    pub fn index_of(&self, value: u32) -> Option<u64> {
        self.contains(value).then(|| u64::from((value - self.min) / self.step))
    }

    /// Lattice point closest to `value`, ties rounded up.
    pub fn nearest(&self, value: f64) -> u32 {
        let span_steps = (self.max - self.min) / self.step;
        let raw = (value - f64::from(self.min)) / f64::from(self.step);
        let idx = raw.round().clamp(0.0, f64::from(span_steps)) as u32;
        self.min + idx * self.step
    }
}

/// Search ranges for one layer of a searchable slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRanges {
    Conv { feature_maps: ParamRange, kernel_size: ParamRange },
    FullyConnected { units: ParamRange },
}

/// One cascade slot: either pinned to a fixed architecture or searched over
/// per-layer ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotSpec {
    Fixed(HyperParams),
    Search(Vec<LayerRanges>),
}

impl SlotSpec {
    pub fn is_fixed(&self) -> bool {
        matches!(self, SlotSpec::Fixed(_))
    }
}

/// A named scalar search dimension (flattened view of a slot's layer ranges).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimension {
    pub slot: usize,
    pub name: String,
    pub range: ParamRange,
}

/// The joint design space: one spec per cascade slot plus the θ grid
/// resolution shared by all threshold dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub slots: Vec<SlotSpec>,
    /// Number of grid points for each θ ∈ [0, 1] dimension.
    pub theta_resolution: usize,
}

impl DesignSpace {
    pub fn new(slots: Vec<SlotSpec>, theta_resolution: usize) -> Self {
        Self { slots, theta_resolution }
    }

    /// Number of cascade stages M.
    pub fn stages(&self) -> usize {
        self.slots.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::Validation("design space has no slots".into()));
        }
        if self.theta_resolution < 2 {
            return Err(Error::Validation(format!(
                "theta_resolution must be >= 2, got {}",
                self.theta_resolution
            )));
        }
        for dim in self.all_dimensions() {
            dim.range.validate(&dim.name)?;
        }
        for (s, slot) in self.slots.iter().enumerate() {
            if let SlotSpec::Fixed(params) = slot {
                if params.layers.is_empty() {
                    return Err(Error::Validation(format!("slot {s}: fixed slot has no layers")));
                }
            }
        }
        Ok(())
    }

    /// Flattened search dimensions of one slot, in template order.
    pub fn slot_dimensions(&self, slot: usize) -> Vec<Dimension> {
        let SlotSpec::Search(layers) = &self.slots[slot] else {
            return Vec::new();
        };
        let mut dims = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                LayerRanges::Conv { feature_maps, kernel_size } => {
                    dims.push(Dimension {
                        slot,
                        name: format!("s{slot}.conv{}.feature_maps", i + 1),
                        range: *feature_maps,
                    });
                    dims.push(Dimension {
                        slot,
                        name: format!("s{slot}.conv{}.kernel_size", i + 1),
                        range: *kernel_size,
                    });
                }
                LayerRanges::FullyConnected { units } => {
                    dims.push(Dimension {
                        slot,
                        name: format!("s{slot}.fc{}.units", i + 1),
                        range: *units,
                    });
                }
            }
        }
        dims
    }

    /// All search dimensions across slots, slot-major.
    pub fn all_dimensions(&self) -> Vec<Dimension> {
        (0..self.slots.len()).flat_map(|s| self.slot_dimensions(s)).collect()
    }

    /// Number of architecture lattice points for one slot (1 for fixed slots).
    pub fn slot_arch_count(&self, slot: usize) -> u64 {
        match &self.slots[slot] {
            SlotSpec::Fixed(_) => 1,
            SlotSpec::Search(_) => {
                self.slot_dimensions(slot).iter().map(|d| d.range.count()).product()
            }
        }
    }

    /// Materializes a slot's architecture from per-dimension values (template
    /// order).
    pub fn materialize(&self, slot: usize, values: &[u32]) -> Result<HyperParams> {
        match &self.slots[slot] {
            SlotSpec::Fixed(params) => {
                if values.is_empty() {
                    Ok(params.clone())
                } else {
                    Err(Error::Argument(format!("slot {slot} is fixed; no values expected")))
                }
            }
            SlotSpec::Search(layers) => {
                let mut it = values.iter().copied();
                let mut out = Vec::with_capacity(layers.len());
                for layer in layers {
                    match layer {
                        LayerRanges::Conv { .. } => {
                            let feature_maps = it
                                .next()
                                .ok_or_else(|| Error::Argument("too few values".into()))?;
                            let kernel_size = it
                                .next()
                                .ok_or_else(|| Error::Argument("too few values".into()))?;
                            out.push(LayerParams::Conv { feature_maps, kernel_size });
                        }
                        LayerRanges::FullyConnected { .. } => {
                            let units = it
                                .next()
                                .ok_or_else(|| Error::Argument("too few values".into()))?;
                            out.push(LayerParams::FullyConnected { units });
                        }
                    }
                }
                if it.next().is_some() {
                    return Err(Error::Argument(format!(
                        "slot {slot}: more values than dimensions"
                    )));
                }
                Ok(HyperParams::new(out))
            }
        }
    }

    /// Flattens an architecture back to per-dimension values (inverse of
    /// [`DesignSpace::materialize`]). Errors if the architecture is off the
    /// slot's lattice.
    pub fn flatten(&self, slot: usize, params: &HyperParams) -> Result<Vec<u32>> {
        match &self.slots[slot] {
            SlotSpec::Fixed(fixed) => {
                if fixed == params {
                    Ok(Vec::new())
                } else {
                    Err(Error::Argument(format!(
                        "slot {slot} is fixed to {} but got {}",
                        fixed.canonical(),
                        params.canonical()
                    )))
                }
            }
            SlotSpec::Search(_) => {
                let dims = self.slot_dimensions(slot);
                let values = layer_values(params);
                if values.len() != dims.len() {
                    return Err(Error::Argument(format!(
                        "slot {slot}: architecture has {} dimensions, space has {}",
                        values.len(),
                        dims.len()
                    )));
                }
                for (dim, v) in dims.iter().zip(&values) {
                    if !dim.range.contains(*v) {
                        return Err(Error::Argument(format!(
                            "{} = {v} outside lattice [{}..{} step {}]",
                            dim.name, dim.range.min, dim.range.max, dim.range.step
                        )));
                    }
                }
                Ok(values)
            }
        }
    }

    /// Whether `params` is a lattice point of `slot`.
    pub fn contains(&self, slot: usize, params: &HyperParams) -> bool {
        self.flatten(slot, params).is_ok()
    }
}

/// Per-dimension scalar values of an architecture, template order.
pub(crate) fn layer_values(params: &HyperParams) -> Vec<u32> {
    let mut values = Vec::new();
    for layer in &params.layers {
        match layer {
            LayerParams::Conv { feature_maps, kernel_size } => {
                values.push(*feature_maps);
                values.push(*kernel_size);
            }
            LayerParams::FullyConnected { units } => values.push(*units),
        }
    }
    values
}

/// Enumerates every architecture lattice point of a searchable slot exactly
/// once, in lexicographic order over its dimensions.
pub fn enumerate_space(space: &DesignSpace, slot: usize) -> Result<Vec<HyperParams>> {
    if space.slots[slot].is_fixed() {
        return Err(Error::Argument(format!("slot {slot} is fixed, not enumerable")));
    }
    let dims = space.slot_dimensions(slot);
    let total: u64 = dims.iter().map(|d| d.range.count()).product();
    let mut out = Vec::with_capacity(total as usize);
    let mut indices = vec![0u64; dims.len()];
    loop {
        let values: Vec<u32> = dims
            .iter()
            .zip(&indices)
            .map(|(d, &i)| d.range.value_at(i))
            .collect();
        out.push(space.materialize(slot, &values)?);
        // odometer increment, last dimension fastest
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < dims[pos].range.count() {
                break;
            }
            indices[pos] = 0;
        }
    }
}
