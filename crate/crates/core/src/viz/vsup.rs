//! Value-suppressing uncertainty palette.
//!
//! Uncertainty is cut into `levels` equal-width SD bands over `[0, u_max]`.
//! The most uncertain level (0) has a single value bin, and each level
//! towards certainty doubles the bin count, so level L−1 resolves
//! 2^(L−1) value bins. Colours interpolate between two anchors at the bin
//! centre and fade to gray as uncertainty rises.

use serde::{Deserialize, Serialize};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsupPalette {
    pub levels: usize,
    pub value_range: (f64, f64),
    pub uncertainty_max: f64,
    pub low: Rgb,
    pub high: Rgb,
    pub gray: Rgb,
    /// Gray weight at the most uncertain level.
    pub max_fade: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VsupCell {
    pub level: usize,
    pub bin: usize,
    pub color: Rgb,
}

impl VsupPalette {
    pub const DEFAULT_LEVELS: usize = 4;

    pub fn new(levels: usize, value_range: (f64, f64), uncertainty_max: f64) -> Self {
        Self {
            levels: levels.max(1),
            value_range,
            uncertainty_max,
            low: [253, 231, 180],
            high: [140, 20, 60],
            gray: [200, 200, 200],
            max_fade: 0.75,
        }
    }

    /// Palette scaled to the given values and SDs (one figure's worth).
    pub fn fit_to<'a>(levels: usize, cells: impl IntoIterator<Item = &'a (f64, f64)>) -> Self {
        let (mut lo, mut hi, mut u) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for &(v, sd) in cells {
            lo = lo.min(v);
            hi = hi.max(v);
            u = u.max(sd);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        } else if hi - lo <= 0.0 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Self::new(levels, (lo, hi), if u > 0.0 { u } else { 1.0 })
    }

    /// (1, 2, 4, …, 2^(L−1)).
    pub fn value_bins_per_level(&self) -> Vec<usize> {
        (0..self.levels).map(|l| 1 << l).collect()
    }

    pub fn level_of(&self, sd: f64) -> usize {
        let l = self.levels;
        let band = if self.uncertainty_max > 0.0 {
            (sd.max(0.0) / self.uncertainty_max * l as f64).floor()
        } else {
            0.0
        };
        // NaN sd counts as maximally uncertain
        let band = if band.is_nan() { l - 1 } else { (band as usize).min(l - 1) };
        l - 1 - band
    }

    pub fn bin_of(&self, level: usize, value: f64) -> usize {
        let bins = 1usize << level;
        let (lo, hi) = self.value_range;
        let t = if hi > lo { (value - lo) / (hi - lo) } else { 0.0 };
        if t.is_nan() {
            return 0;
        }
        ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }

    pub fn color(&self, level: usize, bin: usize) -> Rgb {
        let bins = 1usize << level;
        let t = (bin as f64 + 0.5) / bins as f64;
        let fade = if self.levels > 1 {
            self.max_fade * (self.levels - 1 - level) as f64 / (self.levels - 1) as f64
        } else {
            0.0
        };
        let mut out = [0u8; 3];
        for k in 0..3 {
            let base = self.low[k] as f64 + t * (self.high[k] as f64 - self.low[k] as f64);
            let mixed = base + fade * (self.gray[k] as f64 - base);
            out[k] = mixed.round().clamp(0.0, 255.0) as u8;
        }
        out
    }

    pub fn quantize(&self, value: f64, sd: f64) -> VsupCell {
        let level = self.level_of(sd);
        let bin = self.bin_of(level, value);
        VsupCell {
            level,
            bin,
            color: self.color(level, bin),
        }
    }

    /// SD interval `[lo, hi)` mapped to `level`.
    pub fn level_band(&self, level: usize) -> (f64, f64) {
        let w = self.uncertainty_max / self.levels as f64;
        let band = self.levels - 1 - level;
        (band as f64 * w, (band + 1) as f64 * w)
    }

    /// Value interval covered by `bin` at `level`.
    pub fn bin_range(&self, level: usize, bin: usize) -> (f64, f64) {
        let (lo, hi) = self.value_range;
        let w = (hi - lo) / (1usize << level) as f64;
        (lo + bin as f64 * w, lo + (bin + 1) as f64 * w)
    }
}

pub fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}
