//! Registration assessment: patch-wise MI maps, overlap scores, uptake
//! curves, overlays and the JSON report.

pub mod overlap;
pub mod overlay;
pub mod pmm;
pub mod report;

pub use overlap::{dice, iou, total_variation, uptake_curve};
pub use overlay::{overlay_checkerboard, overlay_falsecolor, write_png_stack, PixelFormat, SliceImage};
pub use pmm::{hard_bin, histogram_mi, mean_pmm, patchwise_mi_map, slice_means, MiMap, MiMeasure, PmmConfig};
pub use report::{evaluate_pair, EvalInputs, EvalReport, Provenance, REPORT_SCHEMA};
