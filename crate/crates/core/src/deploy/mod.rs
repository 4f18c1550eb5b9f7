//! Deployment: threshold folding, bit packing, integer inference, cost
//! estimates and fault injection.
//!
//! Packed model file layout (little-endian): magic `LDCV`, `u16` version,
//! `u32` dims `N, D, D_v, M, K`, a flags byte (bit 0: thresholds present), the
//! value table (`M` rows of `D_v` bits), feature bits (`N` rows of `D` bits) and
//! class bits (`K` rows of `D` bits), each row padded to whole bytes with bit
//! `c` at bit `c % 8` of byte `c / 8`. With thresholds, `D` `i32` thresholds
//! follow, then the flip, constant-mask and constant-sign bitmaps (`D` bits each).

pub mod bits;
pub mod estimate;
pub mod faults;
pub mod fold;
pub mod packed;

pub use bits::BitMatrix;
pub use estimate::{cdc_estimate, hardware_estimate, memory_breakdown, memory_footprint, threshold_bits, HardwareEstimate, MemoryBreakdown};
pub use faults::{inject_bit_errors, packed_accuracy, robustness_curve, RobustnessPoint};
pub use fold::{fold_bn, Thresholds};
pub use packed::{infer_packed, pack_model, PackedModel};
