//! Memory and circuit-depth estimates for a packed model.
//!
//! The depth model counts gate levels of a combinational datapath: an adder
//! tree over the `N` encoding products (two levels per stage), one comparator
//! against the threshold (`ceil(log2(2N + 1))` levels for an accumulation in
//! `[-N, N]`), a popcount tree over `D` similarity bits (two levels per stage)
//! and a tree of `ceil(log2 K)` comparators over `ceil(log2(2D + 1))`-bit
//! scores. Plain sign encoding is a comparison against zero, so it costs the
//! same as a folded threshold.

use serde::{Deserialize, Serialize};

use crate::model::Dims;

/// Gate levels per adder stage.
pub const ADDER_STAGE_DEPTH: u32 = 2;

fn clog2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Bits needed for one threshold in `[-N-1, N+1]`: `ceil(log2(2N + 3)) + 1`.
pub fn threshold_bits(n: usize) -> u32 {
    clog2(2 * n + 3) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub lut_bits: usize,
    pub feature_bits: usize,
    pub class_bits: usize,
    pub threshold_bits: usize,
    pub flag_bits: usize,
}

impl MemoryBreakdown {
    pub fn total_bits(&self) -> usize {
        self.lut_bits + self.feature_bits + self.class_bits + self.threshold_bits + self.flag_bits
    }

    pub fn kb(&self) -> f64 {
        self.total_bits() as f64 / 8192.0
    }

    /// Share of the footprint taken by thresholds and their flags.
    pub fn threshold_overhead(&self) -> f64 {
        (self.threshold_bits + self.flag_bits) as f64 / self.total_bits() as f64
    }
}

pub fn memory_breakdown(dims: Dims, has_thresholds: bool) -> MemoryBreakdown {
    MemoryBreakdown {
        lut_bits: dims.m * dims.d_v,
        feature_bits: dims.n * dims.d,
        class_bits: dims.k * dims.d,
        threshold_bits: if has_thresholds { dims.d * threshold_bits(dims.n) as usize } else { 0 },
        flag_bits: if has_thresholds { 2 * dims.d } else { 0 },
    }
}

/// Footprint in KB (8192 bits).
pub fn memory_footprint(dims: Dims, has_thresholds: bool) -> f64 {
    memory_breakdown(dims, has_thresholds).kb()
}

pub fn cdc_estimate(dims: Dims) -> u32 {
    clog2(dims.n) * ADDER_STAGE_DEPTH
        + clog2(2 * dims.n + 1)
        + clog2(dims.d) * ADDER_STAGE_DEPTH
        + clog2(dims.k) * clog2(2 * dims.d + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareEstimate {
    pub memory_kb: f64,
    pub cdc: u32,
}

pub fn hardware_estimate(dims: Dims, has_thresholds: bool) -> HardwareEstimate {
    HardwareEstimate {
        memory_kb: memory_footprint(dims, has_thresholds),
        cdc: cdc_estimate(dims),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn isolet(d: usize) -> Dims {
        Dims { n: 617, d, d_v: 16, m: 256, k: 26 }
    }

    #[test]
    fn ceil_log2() {
        assert_eq!([1, 2, 3, 4, 5, 64, 65].map(clog2), [0, 1, 2, 2, 3, 6, 7]);
        assert_eq!(threshold_bits(617), 12);
    }

    #[test]
    fn isolet_memory_components() {
        let plain = memory_breakdown(isolet(64), false);
        assert_eq!(plain.total_bits(), 4096 + 39488 + 1664);
        let bn = memory_breakdown(isolet(64), true);
        assert_eq!(bn.total_bits(), plain.total_bits() + 64 * 12 + 128);
    }

    #[test]
    fn doubling_d_doubles_vector_terms() {
        let a = memory_breakdown(isolet(64), true);
        let b = memory_breakdown(Dims { d: 128, ..isolet(64) }, true);
        assert_eq!(b.feature_bits, 2 * a.feature_bits);
        assert_eq!(b.class_bits, 2 * a.class_bits);
        assert_eq!(b.threshold_bits, 2 * a.threshold_bits);
    }

    #[test]
    fn cdc_examples() {
        assert_eq!(cdc_estimate(isolet(64)), 20 + 11 + 12 + 5 * 8);
        assert_eq!(cdc_estimate(Dims { k: 1, ..isolet(64) }), 20 + 11 + 12);
    }
}
