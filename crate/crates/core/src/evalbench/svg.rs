//! Self-contained, dependency-free SVG plots. All coordinates are
//! formatted with fixed precision so identical inputs produce identical
//! bytes.

use crate::eae::LdStats;
use crate::error::Result;
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
}

/// Overlays the logit-difference histograms of the seed and non-seed
/// sets, with dashed marker lines at the two means.
pub fn emit_histogram_svg(seed: &LdStats, non_seed: &LdStats, path: &Path) -> Result<()> {
    let mut out = String::new();
    svg_open(&mut out);
    let _ = writeln!(
        out,
        "<text x=\"{MARGIN}\" y=\"20\">logit-difference distribution: seeds vs non-seeds</text>"
    );

    let lo = seed
        .histogram
        .iter()
        .chain(&non_seed.histogram)
        .map(|b| b.lower)
        .fold(f64::INFINITY, f64::min);
    let hi = seed
        .histogram
        .iter()
        .map(|b| b.lower + seed.bin_width)
        .chain(non_seed.histogram.iter().map(|b| b.lower + non_seed.bin_width))
        .fold(f64::NEG_INFINITY, f64::max);
    let max_count = seed
        .histogram
        .iter()
        .chain(&non_seed.histogram)
        .map(|b| b.count)
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |v: f64| MARGIN + (v - lo) / (hi - lo).max(1e-12) * plot_w;
    let y_of = |count: usize| HEIGHT - MARGIN - count as f64 / max_count * plot_h;

    for (stats, fill, label, label_y) in [
        (seed, "#d62728", "seeds (D+)", 34.0),
        (non_seed, "#1f77b4", "non-seeds (D-)", 48.0),
    ] {
        for bin in &stats.histogram {
            if bin.count == 0 {
                continue;
            }
            let x = x_of(bin.lower);
            let w = x_of(bin.lower + stats.bin_width) - x;
            let y = y_of(bin.count);
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
                 fill=\"{fill}\" fill-opacity=\"0.45\"><title>{count}</title></rect>",
                h = HEIGHT - MARGIN - y,
                count = bin.count
            );
        }
        let mx = x_of(stats.mean);
        let _ = writeln!(
            out,
            "<line x1=\"{mx:.2}\" y1=\"{top:.2}\" x2=\"{mx:.2}\" y2=\"{bottom:.2}\" \
             stroke=\"{fill}\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>",
            top = MARGIN,
            bottom = HEIGHT - MARGIN
        );
        let _ = writeln!(
            out,
            "<text x=\"{tx:.2}\" y=\"{label_y:.2}\" fill=\"{fill}\">{label} mean={mean:.2} n={n}</text>",
            tx = MARGIN + 180.0,
            mean = stats.mean,
            n = stats.count
        );
    }

    let _ = writeln!(
        out,
        "<line x1=\"{MARGIN}\" y1=\"{y:.2}\" x2=\"{x2:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>",
        y = HEIGHT - MARGIN,
        x2 = WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        "<text x=\"{MARGIN}\" y=\"{y:.2}\">{lo:.2}</text><text x=\"{x2:.2}\" y=\"{y:.2}\">{hi:.2}</text>",
        y = HEIGHT - MARGIN + 16.0,
        x2 = WIDTH - MARGIN - 30.0
    );
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}

/// One method's row in the benchmark summary plot.
#[derive(Debug, Clone)]
pub struct BenchSummaryRow {
    pub method: String,
    pub sec_per_epoch: f64,
    pub clean_acc: f64,
    pub perturbed_acc: Option<f64>,
    pub param_backward: u64,
    pub input_grad: u64,
}

/// Side-by-side panels: per-epoch time bars on the left, clean/perturbed
/// accuracy bars on the right, with pass counts under each method label.
pub fn emit_bench_svg(rows: &[BenchSummaryRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    svg_open(&mut out);
    let _ = writeln!(out, "<text x=\"{MARGIN}\" y=\"20\">training benchmark summary</text>");

    let n = rows.len().max(1);
    let panel_w = (WIDTH - 3.0 * MARGIN) / 2.0;
    let plot_h = HEIGHT - 2.0 * MARGIN - 30.0;
    let max_time = rows.iter().map(|r| r.sec_per_epoch).fold(1e-12, f64::max);
    let slot = panel_w / n as f64;

    for (i, row) in rows.iter().enumerate() {
        // left panel: seconds per epoch
        let x = MARGIN + i as f64 * slot;
        let h = row.sec_per_epoch / max_time * plot_h;
        let y = HEIGHT - MARGIN - 30.0 - h;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"#9467bd\"/>",
            w = slot * 0.7
        );
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{ty:.2}\">{v:.2}s</text>",
            ty = y - 4.0,
            v = row.sec_per_epoch
        );
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{ty:.2}\">{m}</text>",
            ty = HEIGHT - MARGIN - 16.0,
            m = row.method
        );
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{ty:.2}\" font-size=\"9\">bwd {pb}/{ig}</text>",
            ty = HEIGHT - MARGIN - 4.0,
            pb = row.param_backward,
            ig = row.input_grad
        );

        // right panel: accuracies in [0, 1]
        let rx = 2.0 * MARGIN + panel_w + i as f64 * slot;
        let ch = row.clean_acc.clamp(0.0, 1.0) * plot_h;
        let cy = HEIGHT - MARGIN - 30.0 - ch;
        let _ = writeln!(
            out,
            "<rect x=\"{rx:.2}\" y=\"{cy:.2}\" width=\"{w:.2}\" height=\"{ch:.2}\" fill=\"#2ca02c\"/>",
            w = slot * 0.33
        );
        if let Some(pa) = row.perturbed_acc {
            let ph = pa.clamp(0.0, 1.0) * plot_h;
            let py = HEIGHT - MARGIN - 30.0 - ph;
            let _ = writeln!(
                out,
                "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{w:.2}\" height=\"{ph:.2}\" fill=\"#ff7f0e\"/>",
                px = rx + slot * 0.36,
                w = slot * 0.33
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{rx:.2}\" y=\"{ty:.2}\">{m}</text>",
            ty = HEIGHT - MARGIN - 16.0,
            m = row.method
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x:.2}\" y=\"34\" fill=\"#9467bd\">sec/epoch</text>\
         <text x=\"{x2:.2}\" y=\"34\" fill=\"#2ca02c\">clean</text>\
         <text x=\"{x3:.2}\" y=\"34\" fill=\"#ff7f0e\">perturbed</text>",
        x = MARGIN,
        x2 = 2.0 * MARGIN + panel_w,
        x3 = 2.0 * MARGIN + panel_w + 60.0
    );
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}
