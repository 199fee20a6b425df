//! Run persistence, comparison CSVs and plot export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{aggregate_all, compare_to_random, AggregateCurve, ComparisonReport, RunDocument, SweepReport};
use crate::domain::RunRecord;
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "qm,step,n_labeled,mean,sd,delta_vs_random";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run_file_name(series: &str, seed: u64) -> String {
    format!("run_{}_seed{seed}.json", series.replace(':', "-"))
}

/// Writes one JSON document per run and returns the paths in input order.
pub fn write_runs(dir: &Path, runs: &[RunDocument]) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    runs.iter()
        .map(|doc| {
            let series = match &doc.variant {
                Some(v) => format!("{}:{v}", doc.qm),
                None => doc.qm.clone(),
            };
            let path = dir.join(run_file_name(&series, doc.seed));
            write(&path, &(serde_json::to_string_pretty(doc)? + "\n"))?;
            Ok(path)
        })
        .collect()
}

pub fn write_sweeps(dir: &Path, sweeps: &[SweepReport]) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    sweeps
        .iter()
        .map(|s| {
            let path = dir.join(format!("sweep_seed{}_{}.json", s.seed, s.loss_weighting.name()));
            write(&path, &(serde_json::to_string_pretty(s)? + "\n"))?;
            Ok(path)
        })
        .collect()
}

/// Reads every `run_*.json` document in `dir`, in file-name order.
pub fn read_runs(dir: &Path) -> Result<Vec<RunDocument>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("run_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!("no run records in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let doc: RunDocument = serde_json::from_str(&text)?;
            doc.record()?;
            Ok(doc)
        })
        .collect()
}

pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    read_runs(dir)?.iter().map(RunDocument::record).collect()
}

/// Baseline first, the remaining series in name order.
fn ordered<'a>(curves: &'a [AggregateCurve], baseline: &str) -> Result<(&'a AggregateCurve, Vec<&'a AggregateCurve>)> {
    let base = curves
        .iter()
        .find(|c| c.series == baseline)
        .ok_or_else(|| Error::Config(format!("baseline series `{baseline}` has no runs")))?;
    Ok((base, curves.iter().filter(|c| c.series != baseline).collect()))
}

pub fn comparisons(curves: &[AggregateCurve], baseline: &str) -> Result<Vec<ComparisonReport>> {
    let (base, rest) = ordered(curves, baseline)?;
    rest.into_iter().map(|c| compare_to_random(c, base)).collect()
}

/// Plot-ready learning curves: one row per (series, step); the baseline's
/// delta column is empty.
pub fn report_csv(curves: &[AggregateCurve], baseline: &str) -> Result<String> {
    let (base, rest) = ordered(curves, baseline)?;
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for p in &base.points {
        writeln!(out, "{},{},{},{},{},", base.series, p.step, p.n_labeled, p.mean, p.sd).expect("string");
    }
    for c in rest {
        let cmp = compare_to_random(c, base)?;
        for (p, d) in c.points.iter().zip(&cmp.step_delta) {
            writeln!(out, "{},{},{},{},{},{}", c.series, p.step, p.n_labeled, p.mean, p.sd, d).expect("string");
        }
    }
    Ok(out)
}

/// Per-seed paired final-step deltas.
pub fn paired_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("qm,baseline,seed,final_delta\n");
    for r in reports {
        for (s, d) in &r.paired_final_delta {
            writeln!(out, "{},{},{s},{d}", r.series, r.baseline).expect("string");
        }
    }
    out
}

pub fn summary_csv(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("qm,baseline,mean_final_delta,area_delta,steps_above,steps_below,steps\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.series,
            r.baseline,
            r.mean_final_delta(),
            r.area_delta,
            r.steps_above,
            r.steps_below,
            r.step_delta.len()
        )
        .expect("string");
    }
    out
}

/// Report files written by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub report: PathBuf,
    pub paired: PathBuf,
    pub summary: PathBuf,
}

/// Writes `report.csv`, `paired.csv` and `summary.csv` into `dir`.
pub fn write_report(dir: &Path, records: &[RunRecord], baseline: &str) -> Result<ReportPaths> {
    ensure_dir(dir)?;
    let curves = aggregate_all(records)?;
    let reps = comparisons(&curves, baseline)?;
    let paths = ReportPaths {
        report: dir.join("report.csv"),
        paired: dir.join("paired.csv"),
        summary: dir.join("summary.csv"),
    };
    write(&paths.report, &report_csv(&curves, baseline)?)?;
    write(&paths.paired, &paired_csv(&reps))?;
    write(&paths.summary, &summary_csv(&reps))?;
    Ok(paths)
}

/// Weighted-vs-plain comparison per query method: `qm:<arm>` against
/// `qm:<baseline_arm>` on the same seeds. Rows: one per (qm, seed) with the
/// final test metric of each arm, then the per-method summary.
pub fn variant_comparison_csv(records: &[RunRecord], arm: &str, baseline_arm: &str) -> Result<String> {
    let curves = aggregate_all(records)?;
    let mut qms: Vec<&str> = records.iter().map(|r| r.qm.as_str()).collect();
    qms.sort_unstable();
    qms.dedup();
    let mut out = String::from("qm,seed,baseline_arm,baseline_final,arm,arm_final,delta\n");
    let mut summary = String::from("qm,baseline_arm,arm,mean_baseline_final,mean_arm_final,mean_delta,area_delta\n");
    let mut found = false;
    for qm in qms {
        let find = |v: &str| curves.iter().find(|c| c.series == format!("{qm}:{v}"));
        let (Some(a), Some(b)) = (find(arm), find(baseline_arm)) else {
            continue;
        };
        found = true;
        let cmp = compare_to_random(a, b)?;
        let (fa, fb) = (a.final_point(), b.final_point());
        for (i, s) in a.seeds.iter().enumerate() {
            writeln!(
                out,
                "{qm},{s},{baseline_arm},{},{arm},{},{}",
                fb.values[i],
                fa.values[i],
                fa.values[i] - fb.values[i]
            )
            .expect("string");
        }
        writeln!(
            summary,
            "{qm},{baseline_arm},{arm},{},{},{},{}",
            fb.mean,
            fa.mean,
            cmp.mean_final_delta(),
            cmp.area_delta
        )
        .expect("string");
    }
    if !found {
        return Err(Error::Config(format!("no query method has both `{arm}` and `{baseline_arm}` runs")));
    }
    Ok(out + "\n" + &summary)
}

/// Wide learning-curve table: `n_labeled` then `<series>_mean,<series>_sd`.
pub fn curves_csv(curves: &[AggregateCurve]) -> Result<String> {
    let first = curves.first().ok_or_else(|| Error::Empty("no curves".into()))?;
    let mut out = String::from("n_labeled");
    for c in curves {
        if c.points.len() != first.points.len() {
            return Err(Error::Invariant("curves use different step grids".into()));
        }
        write!(out, ",{0}_mean,{0}_sd", c.series).expect("string");
    }
    out.push('\n');
    for (i, p) in first.points.iter().enumerate() {
        write!(out, "{}", p.n_labeled).expect("string");
        for c in curves {
            write!(out, ",{},{}", c.points[i].mean, c.points[i].sd).expect("string");
        }
        out.push('\n');
    }
    Ok(out)
}

const PALETTE: [&str; 8] = ["#444444", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"];

/// Mean curves with ±1 SD bands as a standalone SVG.
pub fn plot_svg(curves: &[AggregateCurve], title: &str) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::Empty("no curves to plot".into()));
    }
    let (w, h, ml, mr, mt, mb) = (720.0, 440.0, 60.0, 170.0, 36.0, 48.0);
    let xs = curves.iter().flat_map(|c| c.points.iter().map(|p| p.n_labeled as f64));
    let (x0, x1) = xs.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
    let ys = curves.iter().flat_map(|c| c.points.iter().flat_map(|p| [p.mean - p.sd, p.mean + p.sd]));
    let (mut y0, mut y1) = ys.fold((f64::MAX, f64::MIN), |(a, b), y| (a.min(y), b.max(y)));
    if y1 - y0 < 1e-9 {
        y0 -= 0.05;
        y1 += 0.05;
    }
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| ml + (x - x0) / span_x * (w - ml - mr);
    let py = |y: f64| mt + (y1 - y) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).expect("string");
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).expect("string");
    writeln!(s, r#"<text x="{ml}" y="22" font-size="14">{}</text>"#, escape(title)).expect("string");
    let (bx, by) = (h - mb, w - mr);
    writeln!(s, r#"<line x1="{ml}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#).expect("string");
    writeln!(s, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{bx}" stroke="black"/>"#).expect("string");
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#, ml - 6.0, py(y) + 4.0, y).expect("string");
    }
    for p in &curves[0].points {
        let x = px(p.n_labeled as f64);
        writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#, bx + 16.0, p.n_labeled).expect("string");
    }
    writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">labeled samples</text>"#, (ml + by) / 2.0, h - 10.0).expect("string");
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = c.points.iter().map(|p| format!("{:.2},{:.2}", px(p.n_labeled as f64), py(p.mean + p.sd)));
        let lower = c.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.n_labeled as f64), py(p.mean - p.sd)));
        let band: Vec<String> = upper.chain(lower).collect();
        writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.12" stroke="none"/>"#, band.join(" ")).expect("string");
        let line: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", px(p.n_labeled as f64), py(p.mean))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).expect("string");
        let ly = mt + 16.0 * i as f64 + 8.0;
        writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, by + 12.0, by + 32.0).expect("string");
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, by + 38.0, ly + 4.0, escape(&c.series)).expect("string");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
