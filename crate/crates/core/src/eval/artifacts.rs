//! Files written for a finished report.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::experiment::{ProjectionData, Report};
use super::ExperimentError;

/// Pretty JSON with every float written to 17 significant digits.
struct SigDigits<'a>(PrettyFormatter<'a>);

impl Formatter for SigDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_17<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| ExperimentError::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn load_report(path: &Path) -> Result<Report, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}

fn write(path: PathBuf, content: &str) -> Result<PathBuf, ExperimentError> {
    std::fs::write(&path, content).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn roc_csv(report: &Report, model: usize) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &report.models[model].roc.points {
        let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
        let _ = writeln!(s, "{t},{},{}", p.fpr, p.tpr);
    }
    s
}

/// Writes `metrics.json`, one ROC CSV per model, the latent scatter and the AUC bar chart.
pub fn emit_artifacts(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut written = vec![write(out_dir.join("metrics.json"), &to_json_17(report)?)?];
    for (i, m) in report.models.iter().enumerate() {
        written.push(write(out_dir.join(format!("roc_{}.csv", m.name)), &roc_csv(report, i))?);
    }
    let p = &report.projection;
    written.push(write(
        out_dir.join(format!("latent_scatter_{}.svg", p.model)),
        &scatter_svg(p, report.model(&p.model).map(|m| m.auc)),
    )?);
    written.push(write(out_dir.join("auc_bar.svg"), &auc_bar_svg(report))?);
    Ok(written)
}

// ---- SVG ----------------------------------------------------------------------

const W: f64 = 640.0;
const H: f64 = 480.0;
const CONTOUR_LEVELS: [f64; 3] = [0.3, 0.5, 0.7];
const GRID: usize = 60;

/// Blue (low) to red (high) through pale yellow.
pub fn ramp(p: f64) -> String {
    let stops = [(0.0, [49, 54, 149]), (0.5, [255, 255, 191]), (1.0, [165, 0, 38])];
    let p = p.clamp(0.0, 1.0);
    let (a, b) = if p <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let t = (p - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (a.1[i] as f64 + t * (b.1[i] as f64 - a.1[i] as f64)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Gaussian-kernel average of the point probabilities on a regular grid.
pub fn smooth_grid(points: &[[f64; 2]], probs: &[f64], lo: [f64; 2], hi: [f64; 2], n: usize) -> Vec<Vec<f64>> {
    let bw = [0.1 * (hi[0] - lo[0]), 0.1 * (hi[1] - lo[1])];
    let mut grid = vec![vec![0.5; n]; n];
    for (gy, row) in grid.iter_mut().enumerate() {
        for (gx, cell) in row.iter_mut().enumerate() {
            let x = lo[0] + (hi[0] - lo[0]) * gx as f64 / (n - 1) as f64;
            let y = lo[1] + (hi[1] - lo[1]) * gy as f64 / (n - 1) as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for (p, &q) in points.iter().zip(probs) {
                let dx = (p[0] - x) / bw[0];
                let dy = (p[1] - y) / bw[1];
                let k = (-0.5 * (dx * dx + dy * dy)).exp();
                num += k * q;
                den += k;
            }
            if den > 1e-300 {
                *cell = num / den;
            }
        }
    }
    grid
}

/// Marching squares: line segments in grid coordinates where `grid` crosses `level`.
pub fn contour_segments(grid: &[Vec<f64>], level: f64) -> Vec<[[f64; 2]; 2]> {
    let mut segs = Vec::new();
    let n = grid.len();
    for gy in 0..n.saturating_sub(1) {
        for gx in 0..grid[gy].len().saturating_sub(1) {
            // corners: (x, y, value), counter-clockwise from bottom-left
            let c = [
                (gx as f64, gy as f64, grid[gy][gx]),
                (gx as f64 + 1.0, gy as f64, grid[gy][gx + 1]),
                (gx as f64 + 1.0, gy as f64 + 1.0, grid[gy + 1][gx + 1]),
                (gx as f64, gy as f64 + 1.0, grid[gy + 1][gx]),
            ];
            let mut cross = Vec::new();
            for e in 0..4 {
                let (a, b) = (c[e], c[(e + 1) % 4]);
                if (a.2 < level) != (b.2 < level) {
                    let t = (level - a.2) / (b.2 - a.2);
                    cross.push([a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)]);
                }
            }
            match cross.len() {
                2 => segs.push([cross[0], cross[1]]),
                4 => {
                    segs.push([cross[0], cross[1]]);
                    segs.push([cross[2], cross[3]]);
                }
                _ => {}
            }
        }
    }
    segs
}

pub fn scatter_svg(p: &ProjectionData, auc: Option<f64>) -> String {
    let title = match auc {
        Some(a) => format!("{} test embeddings, {} projection (AUC {a:.3})", p.model, p.method.to_uppercase()),
        None => format!("{} test embeddings, {} projection", p.model, p.method.to_uppercase()),
    };
    let mut s = svg_open(&title);
    let (left, right, top, bottom) = (60.0, W - 150.0, 40.0, H - 50.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for pt in &p.points {
        for k in 0..2 {
            lo[k] = lo[k].min(pt[k]);
            hi[k] = hi[k].max(pt[k]);
        }
    }
    for k in 0..2 {
        let pad = if hi[k] > lo[k] { 0.05 * (hi[k] - lo[k]) } else { 1.0 };
        lo[k] -= pad;
        hi[k] += pad;
    }
    let sx = |x: f64| left + (x - lo[0]) / (hi[0] - lo[0]) * (right - left);
    let sy = |y: f64| bottom - (y - lo[1]) / (hi[1] - lo[1]) * (bottom - top);

    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        right - left,
        bottom - top
    );
    let grid = smooth_grid(&p.points, &p.probability, lo, hi, GRID);
    let gx = |g: f64| lo[0] + (hi[0] - lo[0]) * g / (GRID - 1) as f64;
    let gy = |g: f64| lo[1] + (hi[1] - lo[1]) * g / (GRID - 1) as f64;
    let dashes = ["4,3", "none", "1,3"];
    for (level, dash) in CONTOUR_LEVELS.iter().zip(dashes) {
        let mut d = String::new();
        for seg in contour_segments(&grid, *level) {
            let _ = write!(
                d,
                "M{:.2},{:.2}L{:.2},{:.2}",
                sx(gx(seg[0][0])),
                sy(gy(seg[0][1])),
                sx(gx(seg[1][0])),
                sy(gy(seg[1][1]))
            );
        }
        if !d.is_empty() {
            let _ = writeln!(
                s,
                r##"<path class="contour-{level}" d="{d}" fill="none" stroke="#222" stroke-width="1.2" stroke-dasharray="{dash}"/>"##
            );
        }
    }
    for ((pt, &q), &l) in p.points.iter().zip(&p.probability).zip(&p.label) {
        let (cx, cy) = (sx(pt[0]), sy(pt[1]));
        let color = ramp(q);
        if l == 1 {
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}" stroke="#333" stroke-width="0.6"/>"##,
                cx - 4.0,
                cy - 4.0
            );
        } else {
            let _ = writeln!(
                s,
                r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="4.2" fill="{color}" stroke="#333" stroke-width="0.6"/>"##
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">component 1</text>"#, (left + right) / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">component 2</text>"#,
        (top + bottom) / 2.0
    );

    // legend: colour ramp, contour levels, marker shapes
    let lx = right + 20.0;
    let _ = writeln!(s, r#"<text x="{lx}" y="{}">predicted p</text>"#, top + 10.0);
    for i in 0..=10 {
        let q = 1.0 - i as f64 / 10.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.1}" width="14" height="10" fill="{}"/>"#,
            top + 18.0 + 10.0 * i as f64,
            ramp(q)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">1.0</text>"#, lx + 18.0, top + 27.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">0.0</text>"#, lx + 18.0, top + 127.0);
    for (i, (level, dash)) in CONTOUR_LEVELS.iter().zip(dashes).enumerate() {
        let y = top + 160.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="#222" stroke-width="1.2" stroke-dasharray="{dash}"/>"##,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">p = {level}</text>"#, lx + 30.0, y + 4.0);
    }
    let my = top + 230.0;
    let _ = writeln!(s, r##"<circle cx="{}" cy="{my}" r="4.2" fill="#bbb" stroke="#333"/>"##, lx + 7.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}">label 0</text>"#, lx + 20.0, my + 4.0);
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="8" height="8" fill="#bbb" stroke="#333"/>"##,
        lx + 3.0,
        my + 14.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">label 1</text>"#, lx + 20.0, my + 22.0);
    s.push_str("</svg>\n");
    s
}

pub fn auc_bar_svg(report: &Report) -> String {
    let mut s = svg_open("Test-set AUC by model");
    let (left, right, top, bottom) = (60.0, W - 20.0, 40.0, H - 90.0);
    let plot_h = bottom - top;
    let y_of = |v: f64| bottom - v * plot_h;
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{0:.2}" x2="{right}" y2="{0:.2}" stroke="#888" stroke-dasharray="5,4"/>"##,
        y_of(0.5)
    );
    let n = report.models.len().max(1);
    let slot = (right - left) / n as f64;
    for (i, m) in report.models.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        let y = y_of(m.auc);
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="{}" stroke="#333"/>"##,
            bottom - y,
            ramp(0.15 + 0.7 * i as f64 / (n - 1).max(1) as f64)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#, x + w / 2.0, y - 5.0, m.auc);
        let _ = writeln!(
            s,
            r#"<text x="{0:.2}" y="{1:.2}" text-anchor="end" transform="rotate(-30 {0:.2} {1:.2})">{2}</text>"#,
            x + w / 2.0,
            bottom + 16.0,
            escape(&m.name)
        );
    }
    if let Some(b) = report.bayes_oracle_auc {
        let y = y_of(b);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#a50026" stroke-dasharray="2,3"/>"##
        );
        let _ = writeln!(s, r##"<text x="{right}" y="{:.2}" text-anchor="end" fill="#a50026">Bayes oracle {b:.3}</text>"##, y - 4.0);
    }
    let _ = writeln!(s, r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="#333"/>"##);
    let _ = writeln!(s, r##"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="#333"/>"##);
    s.push_str("</svg>\n");
    s
}
