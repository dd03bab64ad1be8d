//! Aggregate tables and heatmaps over result rows. Every output is a pure
//! function of the rows, so reports are byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::features::{Mode, Strategy};

use super::grid::ResultRow;

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, half_width: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Self { mean, half_width, n }
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.lo() <= other.hi() && other.lo() <= self.hi()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub mode: Mode,
    pub point: MeanCi,
    pub translation: MeanCi,
    pub rotation: MeanCi,
    pub failed: usize,
}

/// Final errors grouped by (strategy, mode). Failed rows are counted but
/// left out of the means.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Strategy, Mode), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.strategy, r.mode)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((strategy, mode), rs)| {
            let ok: Vec<&ResultRow> = rs.iter().copied().filter(|r| !r.failed()).collect();
            let col = |f: fn(&ResultRow) -> f64| {
                MeanCi::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                strategy,
                mode,
                point: col(|r| r.point_error_pct),
                translation: col(|r| r.translation_error_pct),
                rotation: col(|r| r.rotation_error_pct),
                failed: rs.len() - ok.len(),
            }
        })
        .collect()
}

fn ci_cell(m: &MeanCi) -> String {
    format!("{:.2} ± {:.2}", m.mean, m.half_width)
}

pub fn summary_markdown(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "| strategy | mode | n | point error % | translation error % | rotation error % | failed |\n\
         |---|---|---|---|---|---|---|\n",
    );
    for s in summarize(rows) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            s.strategy,
            s.mode.name(),
            s.point.n,
            ci_cell(&s.point),
            ci_cell(&s.translation),
            ci_cell(&s.rotation),
            s.failed
        );
    }
    out
}

pub fn summary_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "strategy,mode,n,point_mean,point_ci95,translation_mean,translation_ci95,rotation_mean,rotation_ci95,failed\n",
    );
    for s in summarize(rows) {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            s.strategy,
            s.mode.name(),
            s.point.n,
            s.point.mean,
            s.point.half_width,
            s.translation.mean,
            s.translation.half_width,
            s.rotation.mean,
            s.rotation.half_width,
            s.failed
        );
    }
    out
}

/// One heatmap per (strategy, mode, n_pts): mean point error for each
/// (n_poses, n_pixels) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub strategy: Strategy,
    pub mode: Mode,
    pub n_pts: usize,
    pub n_poses: Vec<usize>,
    pub n_pixels: Vec<usize>,
    /// `values[i][j]` for `n_poses[i]`, `n_pixels[j]`; NaN when empty.
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn title(&self) -> String {
        format!("{} {} n_pts={}", self.strategy, self.mode.name(), self.n_pts)
    }

    pub fn file_stem(&self) -> String {
        format!("heatmap_{}_{}_pts{}", self.strategy, self.mode.name(), self.n_pts)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_poses\\n_pixels");
        for p in &self.n_pixels {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
        for (i, np) in self.n_poses.iter().enumerate() {
            let _ = write!(out, "{np}");
            for v in &self.values[i] {
                let _ = write!(out, ",{}", fmt_value(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Standalone SVG; darker cells have lower error.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 60;
        const LEFT: usize = 70;
        const TOP: usize = 40;
        let cols = self.n_pixels.len();
        let rows = self.n_poses.len();
        let width = LEFT + CELL * cols + 10;
        let height = TOP + CELL * rows + 40;
        let finite = self.values.iter().flatten().copied().filter(|v| v.is_finite());
        let max = finite.fold(0.0f64, f64::max).max(1e-12);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<text x="{LEFT}" y="20">{}</text>"#, self.title());
        for (i, np) in self.n_poses.iter().enumerate() {
            let y = TOP + i * CELL;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{np}</text>"#,
                LEFT - 6,
                y + CELL / 2 + 4
            );
            for (j, v) in self.values[i].iter().enumerate() {
                let x = LEFT + j * CELL;
                let fill = if v.is_finite() {
                    let shade = (255.0 * (v / max).clamp(0.0, 1.0)).round() as u8;
                    format!("rgb({shade},{shade},255)")
                } else {
                    "rgb(220,220,220)".into()
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="white"/>"#
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="black">{}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4,
                    fmt_value(*v)
                );
            }
        }
        for (j, p) in self.n_pixels.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{p}</text>"#,
                LEFT + j * CELL + CELL / 2,
                TOP + rows * CELL + 16
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">n_pixels (rows: n_poses)</text>"#,
            LEFT + cols * CELL / 2,
            TOP + rows * CELL + 34
        );
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "-".into()
    }
}

pub fn heatmaps(rows: &[ResultRow]) -> Vec<Heatmap> {
    type Cell = BTreeMap<(usize, usize), Vec<f64>>;
    let mut groups: BTreeMap<(Strategy, Mode, usize), Cell> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.failed()) {
        groups
            .entry((r.strategy, r.mode, r.n_pts))
            .or_default()
            .entry((r.n_poses, r.n_pixels))
            .or_default()
            .push(r.point_error_pct);
    }
    groups
        .into_iter()
        .map(|((strategy, mode, n_pts), cells)| {
            let mut n_poses: Vec<usize> = cells.keys().map(|k| k.0).collect();
            let mut n_pixels: Vec<usize> = cells.keys().map(|k| k.1).collect();
            n_poses.dedup();
            n_pixels.sort_unstable();
            n_pixels.dedup();
            let values = n_poses
                .iter()
                .map(|&a| {
                    n_pixels
                        .iter()
                        .map(|&b| cells.get(&(a, b)).map_or(f64::NAN, |v| MeanCi::of(v).mean))
                        .collect()
                })
                .collect();
            Heatmap { strategy, mode, n_pts, n_poses, n_pixels, values }
        })
        .collect()
}

/// Minimum first-crossing forward-pass count among rows that reached
/// `threshold_pct`, per (dataset, strategy, mode). `None` when none did.
pub fn passes_to_threshold(
    rows: &[ResultRow],
    threshold_pct: f64,
) -> BTreeMap<(String, Strategy, Mode), Option<u64>> {
    let mut out: BTreeMap<(String, Strategy, Mode), Option<u64>> = BTreeMap::new();
    for r in rows {
        let entry = out.entry((r.dataset.clone(), r.strategy, r.mode)).or_insert(None);
        if let Some(p) = r.passes_to(threshold_pct) {
            *entry = Some(entry.map_or(p, |q| q.min(p)));
        }
    }
    out
}

/// `816000 → "816k"`, `1_200_000 → "1.2m"`, `None → "-"`.
pub fn format_passes(passes: Option<u64>) -> String {
    let Some(p) = passes else {
        return "-".into();
    };
    let (value, suffix) = if p >= 1_000_000 {
        (p as f64 / 1e6, "m")
    } else if p >= 1_000 {
        (p as f64 / 1e3, "k")
    } else {
        return p.to_string();
    };
    let mut s = format!("{value:.2}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s + suffix
}

pub fn passes_markdown(rows: &[ResultRow], threshold_pct: f64) -> String {
    let mut out = format!(
        "| dataset | strategy | mode | passes to <= {threshold_pct}% |\n|---|---|---|---|\n"
    );
    for ((dataset, strategy, mode), p) in passes_to_threshold(rows, threshold_pct) {
        let _ = writeln!(out, "| {dataset} | {strategy} | {} | {} |", mode.name(), format_passes(p));
    }
    out
}

/// Whole report as (file name, contents) pairs, in a fixed order.
pub fn render_report(rows: &[ResultRow], threshold_pct: f64) -> Vec<(String, String)> {
    let mut files = vec![
        ("summary.md".to_string(), summary_markdown(rows)),
        ("summary.csv".to_string(), summary_csv(rows)),
        ("passes_to_threshold.md".to_string(), passes_markdown(rows, threshold_pct)),
    ];
    for h in heatmaps(rows) {
        files.push((format!("{}.csv", h.file_stem()), h.to_csv()));
        files.push((format!("{}.svg", h.file_stem()), h.to_svg()));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localizer::Resampler;
    use approx::assert_relative_eq;

    pub(crate) fn row(strategy: Strategy, seed: u64, err: f64, trace: &str) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            strategy,
            mode: Mode::Pixel,
            n_pixels: 100,
            n_pts: 16,
            n_poses: 45,
            resampler: Resampler::Cem,
            seed,
            frame: 0,
            max_iter: 4,
            point_error_pct: err,
            translation_error_pct: err / 2.0,
            rotation_error_pct: err / 4.0,
            forward_passes: 4 * 45 * 100 * 16,
            wall_time_ms: seed as f64,
            converged_below_10pct: err <= 10.0,
            first_crossing_passes: None,
            point_error_trace: trace.into(),
            error: String::new(),
        }
    }

    #[test]
    fn mean_ci_matches_hand_computation() {
        let m = MeanCi::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert_relative_eq!(m.half_width, 1.96 * sd / 2.0, epsilon = 1e-12);
        assert_eq!(MeanCi::of(&[7.0]).half_width, 0.0);
        assert!(MeanCi::of(&[]).mean.is_nan());
    }

    #[test]
    fn pass_formatting() {
        assert_eq!(format_passes(None), "-");
        assert_eq!(format_passes(Some(816_000)), "816k");
        assert_eq!(format_passes(Some(1_200_000)), "1.2m");
        assert_eq!(format_passes(Some(800_000)), "800k");
        assert_eq!(format_passes(Some(2_000_000)), "2m");
        assert_eq!(format_passes(Some(999)), "999");
    }

    #[test]
    fn passes_to_threshold_takes_minimum() {
        // 72000 passes per iteration
        let rows = vec![
            row(Strategy::Rand, 0, 5.0, "30;20;9;5"),
            row(Strategy::Rand, 1, 5.0, "8;6;5;5"),
            row(Strategy::Orb, 0, 40.0, "50;45;40;40"),
        ];
        let t = passes_to_threshold(&rows, 10.0);
        assert_eq!(t[&("d".into(), Strategy::Rand, Mode::Pixel)], Some(72_000));
        assert_eq!(t[&("d".into(), Strategy::Orb, Mode::Pixel)], None);
        let md = passes_markdown(&rows, 10.0);
        assert!(md.contains("| d | orb | pixel | - |"));
        assert!(md.contains("| d | rand | pixel | 72k |"));
    }

    #[test]
    fn summary_groups_and_skips_failures() {
        let mut bad = row(Strategy::Rand, 2, f64::NAN, "");
        bad.error = "boom".into();
        let rows = vec![row(Strategy::Rand, 0, 4.0, ""), row(Strategy::Rand, 1, 6.0, ""), bad];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].point.n, 2);
        assert_eq!(s[0].failed, 1);
        assert_relative_eq!(s[0].point.mean, 5.0);
    }

    #[test]
    fn heatmap_layout() {
        let mut a = row(Strategy::Mser, 0, 4.0, "");
        a.n_pixels = 50;
        let mut b = row(Strategy::Mser, 0, 8.0, "");
        b.n_poses = 15;
        let hs = heatmaps(&[a, b]);
        assert_eq!(hs.len(), 1);
        let h = &hs[0];
        assert_eq!(h.n_poses, vec![15, 45]);
        assert_eq!(h.n_pixels, vec![50, 100]);
        assert!(h.values[0][0].is_nan());
        assert_eq!(h.values[0][1], 8.0);
        assert_eq!(h.values[1][0], 4.0);
        let csv = h.to_csv();
        assert_eq!(csv, "n_poses\\n_pixels,50,100\n15,-,8.00\n45,4.00,-\n");
        assert!(h.to_svg().starts_with("<svg"));
    }

    #[test]
    fn report_is_reproducible() {
        let rows = vec![row(Strategy::Rand, 0, 4.0, "4"), row(Strategy::Orb, 1, 6.0, "6")];
        assert_eq!(render_report(&rows, 10.0), render_report(&rows, 10.0));
    }
}
