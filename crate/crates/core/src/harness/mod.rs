//! Experiment runner: parameter grids, likelihood curves and reports.

pub mod curve;
pub mod grid;
pub mod report;

pub use curve::{fwhm, likelihood_curve, CurvePoint, CurveSpec, LikelihoodCurve};
pub use grid::{
    read_rows, run_grid, run_one, write_rows, Experiment, GridSpec, ResultRow, RowKey,
    CONVERGED_PCT, RESULTS_VERSION_LINE,
};
pub use report::{
    format_passes, heatmaps, passes_to_threshold, render_report, summarize, Heatmap, MeanCi,
    SummaryRow,
};
