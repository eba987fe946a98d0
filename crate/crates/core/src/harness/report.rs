//! Output files: raw CSV, summary JSON, trace CSVs and static SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::inference::logistic;

use super::{ExperimentResult, RawRow, Summary, Trace, SUMMARY_SCHEMA};

pub fn raw_csv_string(rows: &[RawRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let s: Summary = serde_json::from_str(&fs::read_to_string(path)?)?;
    if s.schema != SUMMARY_SCHEMA {
        return Err(Error::Data(format!(
            "summary schema {} is not supported (expected {SUMMARY_SCHEMA})",
            s.schema
        )));
    }
    Ok(s)
}

/// Long-format `(grid_value, policy, t, k, llr, p)` rows for belief panels.
pub fn belief_csv_string(traces: &[Trace]) -> String {
    let mut out = String::from("grid_value,policy,t,k,llr,p\n");
    for tr in traces {
        let g = tr.grid_value.map(|v| v.to_string()).unwrap_or_default();
        if let Some(d) = &tr.record.diagnostics {
            for (step, llr) in d.llr.iter().enumerate() {
                for (k, &l) in llr.iter().enumerate() {
                    let _ = writeln!(out, "{g},{},{},{k},{l},{}", tr.record.policy, step + 1, logistic(l));
                }
            }
        }
    }
    out
}

/// Long-format `(grid_value, policy, t, k, c)` rows for action heatmaps.
pub fn action_csv_string(traces: &[Trace]) -> String {
    let mut out = String::from("grid_value,policy,t,k,c\n");
    for tr in traces {
        let g = tr.grid_value.map(|v| v.to_string()).unwrap_or_default();
        if let Some(d) = &tr.record.diagnostics {
            for (step, c) in d.actions.iter().enumerate() {
                for (k, &v) in c.iter().enumerate() {
                    let _ = writeln!(out, "{g},{},{},{k},{v}", tr.record.policy, step + 1);
                }
            }
        }
    }
    out
}

/// Write `raw.csv`, `summary.json`, charts and (if present) traces.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("raw.csv"), raw_csv_string(&result.rows)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result.summary)?)?;
    write_charts(&result.summary, dir)?;
    if !result.traces.is_empty() {
        fs::write(dir.join("beliefs.csv"), belief_csv_string(&result.traces))?;
        fs::write(dir.join("actions.csv"), action_csv_string(&result.traces))?;
        fs::write(dir.join("traces.json"), serde_json::to_string(&result.traces)?)?;
    }
    Ok(())
}

/// Render every chart the summary supports into `dir`; returns file names.
pub fn write_charts(summary: &Summary, dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    for (idx, g) in summary.grid.iter().enumerate() {
        let name = if summary.grid.len() == 1 { "f1.svg".to_string() } else { format!("f1_{idx}.svg") };
        let title = match g.grid_value {
            Some(v) => format!("{} ({} = {v})", summary.experiment_id, summary.sweep_param.map(|p| p.name()).unwrap_or("grid")),
            None => summary.experiment_id.clone(),
        };
        let mut chart = Chart::new(&title, "samples", "F1");
        for p in summary.policies.iter().filter(|p| p.grid_value == g.grid_value) {
            if let Some(c) = &p.curve {
                chart.series.push(Series {
                    name: p.policy.to_string(),
                    x: c.t.iter().map(|&t| t as f64).collect(),
                    y: c.mean.clone(),
                    band: Some((c.lo.clone(), c.hi.clone())),
                });
            }
        }
        chart.y_range = Some((0.0, 1.0));
        fs::write(dir.join(&name), chart.render(false))?;
        written.push(name);
    }
    if let Some(param) = summary.sweep_param {
        let mut chart = Chart::new(&summary.experiment_id, param.name(), "median samples to threshold");
        let mut kinds: Vec<_> = summary.policies.iter().map(|p| p.policy).collect();
        kinds.dedup();
        kinds.sort();
        kinds.dedup();
        for kind in kinds {
            let pts: Vec<_> = summary
                .policies
                .iter()
                .filter(|p| p.policy == kind)
                .filter_map(|p| Some((p.grid_value?, p.median_samples?, p.median_ci?)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            chart.series.push(Series {
                name: kind.to_string(),
                x: pts.iter().map(|p| p.0).collect(),
                y: pts.iter().map(|p| p.1).collect(),
                band: Some((pts.iter().map(|p| p.2.lo).collect(), pts.iter().map(|p| p.2.hi).collect())),
            });
        }
        fs::write(dir.join("delay.svg"), chart.render(false))?;
        written.push("delay.svg".into());

        let mut scatter = Chart::new(&summary.experiment_id, "Shannon effective rank", "final F1");
        for p in &summary.policies {
            let er = summary.grid.iter().find(|g| g.grid_value == p.grid_value).map(|g| g.spectrum.shannon_er);
            if let (Some(er), Some(f1)) = (er, p.mean_final_f1) {
                match scatter.series.iter_mut().find(|s| s.name == p.policy.to_string()) {
                    Some(s) => {
                        s.x.push(er);
                        s.y.push(f1);
                    }
                    None => scatter.series.push(Series { name: p.policy.to_string(), x: vec![er], y: vec![f1], band: None }),
                }
            }
        }
        scatter.y_range = Some((0.0, 1.0));
        fs::write(dir.join("er_f1.svg"), scatter.render(true))?;
        written.push("er_f1.svg".into());
    }
    Ok(written)
}

const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

/// Minimal static line/scatter chart.
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub y_range: Option<(f64, f64)>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            y_range: None,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &x in &s.x {
                xs = (xs.0.min(x), xs.1.max(x));
            }
            let mut upd = |v: &[f64]| {
                for &y in v.iter().filter(|y| y.is_finite()) {
                    ys = (ys.0.min(y), ys.1.max(y));
                }
            };
            upd(&s.y);
            if let Some((lo, hi)) = &s.band {
                upd(lo);
                upd(hi);
            }
        }
        if let Some(r) = self.y_range {
            ys = r;
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
        }
        if !ys.0.is_finite() {
            ys = (0.0, 1.0);
        }
        if xs.1 <= xs.0 {
            xs.1 = xs.0 + 1.0;
        }
        if ys.1 <= ys.0 {
            ys.1 = ys.0 + 1.0;
        }
        (xs.0, xs.1, ys.0, ys.1)
    }

    pub fn render(&self, scatter: bool) -> String {
        let (w, h) = (720.0, 440.0);
        let (left, right, top, bottom) = (70.0, 170.0, 40.0, 55.0);
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
        let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, xml(&self.title));
        // Axes and ticks.
        let _ = writeln!(
            s,
            r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
            l = left,
            t = top,
            b = h - bottom,
            r = w - right
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(fx), h - bottom + 18.0, tick(fx));
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, py(fy) + 4.0, tick(fy));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (left + w - right) / 2.0, h - 12.0, xml(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (top + h - bottom) / 2.0,
            (top + h - bottom) / 2.0,
            xml(&self.y_label)
        );
        for (idx, series) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            if let Some((lo, hi)) = &series.band {
                let mut d = String::new();
                for (i, (&x, &y)) in series.x.iter().zip(hi).enumerate() {
                    let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(x), py(y));
                }
                for (&x, &y) in series.x.iter().zip(lo).rev() {
                    let _ = write!(d, "L{:.2} {:.2} ", px(x), py(y));
                }
                let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, d);
            }
            if scatter {
                for (&x, &y) in series.x.iter().zip(&series.y) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, px(x), py(y));
                }
            } else {
                let pts: Vec<String> = series
                    .x
                    .iter()
                    .zip(&series.y)
                    .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
                let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
            }
            let ly = top + 10.0 + 18.0 * idx as f64;
            let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="14" height="4" fill="{color}"/>"#, w - right + 12.0, ly - 4.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - right + 32.0, ly + 1.0, xml(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_renders_series() {
        let mut c = Chart::new("t<1>", "x", "y");
        c.series.push(Series { name: "a".into(), x: vec![0.0, 1.0], y: vec![0.0, 1.0], band: Some((vec![0.0, 0.5], vec![0.2, 1.0])) });
        let svg = c.render(false);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("t&lt;1&gt;"));
        assert!(c.render(true).contains("circle"));
    }
}
