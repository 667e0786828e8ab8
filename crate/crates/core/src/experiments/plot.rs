use std::fmt::Write as _;

use super::sweep::{Axis, LearningCurveResult, SweepResult};
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 760.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_log: bool,
    y_log: bool,
    x_ticks: Option<Vec<f64>>,
    series: Vec<Series>,
    /// Horizontal reference lines.
    levels: Vec<(String, f64)>,
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, log: bool, a: f64, b: f64) -> Self {
        let (lo, hi) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
        let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        Scale { lo, hi, log, a, b }
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (lo, hi) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            (lo..=hi).map(|e| 10f64.powi(e)).filter(|t| self.contains(*t)).collect()
        } else {
            let span = self.hi - self.lo;
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(mag * 10.0);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last).map(|k| k as f64 * step).collect()
        }
    }

    fn contains(&self, t: f64) -> bool {
        let v = if self.log { t.log10() } else { t };
        v >= self.lo - 1e-9 && v <= self.hi + 1e-9
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.0e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn render(&self) -> Result<String> {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!self.x_log || x > 0.0) && (!self.y_log || y > 0.0))
            .collect();
        if pts.is_empty() {
            return Err(Error::EmptyResult("nothing to plot".into()));
        }
        let ys = pts.iter().map(|p| p.1).chain(self.levels.iter().map(|l| l.1).filter(|y| !self.y_log || *y > 0.0));
        let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let (x_lo, x_hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (y_lo, y_hi) = if self.y_log {
            (10f64.powf(y_lo.log10().floor()), 10f64.powf(y_hi.log10().ceil()))
        } else {
            (y_lo.min(0.0), y_hi * 1.05)
        };
        let sx = Scale::new(x_lo, x_hi, self.x_log, LEFT, W - RIGHT);
        let sy = Scale::new(y_lo, y_hi, self.y_log, H - BOTTOM, TOP);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            W - RIGHT - LEFT,
            H - BOTTOM - TOP
        );
        let x_ticks = self.x_ticks.clone().unwrap_or_else(|| sx.ticks());
        for t in x_ticks.iter().filter(|t| sx.contains(**t)) {
            let x = sx.map(*t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##, H - BOTTOM);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, fmt_tick(*t));
        }
        for t in sy.ticks() {
            let y = sy.map(t);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, W - RIGHT);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 18.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
            (TOP + H - BOTTOM) / 2.0,
            (TOP + H - BOTTOM) / 2.0,
            escape(&self.y_label)
        );

        let mut legend_y = TOP + 10.0;
        let legend_x = W - RIGHT + 16.0;
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = series
                .points
                .iter()
                .filter(|&&(x, y)| x.is_finite() && y.is_finite() && (!self.x_log || x > 0.0) && (!self.y_log || y > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", sx.map(x), sy.map(y)))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
            for c in &coords {
                let (cx, cy) = c.split_once(',').expect("coordinate pair");
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
            let _ = writeln!(
                s,
                r#"<line x1="{legend_x:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/>"#,
                legend_x + 20.0
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, legend_x + 26.0, legend_y + 4.0, escape(&series.label));
            legend_y += 18.0;
        }
        for (j, (label, level)) in self.levels.iter().enumerate() {
            if self.y_log && *level <= 0.0 {
                continue;
            }
            let color = PALETTE[(self.series.len() + j) % PALETTE.len()];
            let y = sy.map(*level);
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
                W - RIGHT
            );
            let _ = writeln!(
                s,
                r#"<line x1="{legend_x:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
                legend_x + 20.0
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, legend_x + 26.0, legend_y + 4.0, escape(label));
            legend_y += 18.0;
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn series_label(method: &str, pd_count: usize, f_s: Option<f64>) -> String {
    let pds = if pd_count == 1 { "1 PD".to_string() } else { format!("{pd_count} PDs") };
    match (method, f_s) {
        ("ocir-ann", Some(f)) => format!("OCIR-ANN, {pds}, {f} Msps"),
        ("ocir-ann", None) => format!("OCIR-ANN, {pds}"),
        ("dc-rss-ann", _) => format!("DC-RSS ANN, {pds}"),
        ("trilateration", _) => "Trilateration".to_string(),
        (m, _) => m.to_string(),
    }
}

/// Mean RMSE against the swept axis on log-log axes, one polyline per
/// method and detector count. The DC point of a rate sweep is drawn as a
/// dashed level.
pub fn render_sweep(result: &SweepResult) -> Result<String> {
    let summary = result.summary();
    if summary.iter().all(|s| s.mean_rmse_cm.is_none()) {
        return Err(Error::EmptyResult("sweep has no successful points".into()));
    }
    let on_rate_axis = result.plan.axis == Axis::SamplingRate;
    let mut series: Vec<(String, Series)> = Vec::new();
    let mut levels = Vec::new();
    for s in &summary {
        let Some(mean) = s.mean_rmse_cm else { continue };
        if on_rate_axis && s.axis_value == 0.0 {
            levels.push((format!("{} (DC)", series_label(s.method, s.pd_count, None)), mean));
            continue;
        }
        let f_s = if on_rate_axis || s.method != "ocir-ann" { None } else { Some(s.f_s) };
        let label = series_label(s.method, s.pd_count, f_s);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, ser)) => ser.points.push((s.axis_value, mean)),
            None => series.push((label.clone(), Series { label, points: vec![(s.axis_value, mean)] })),
        }
    }
    let mut x_ticks: Vec<f64> = summary.iter().map(|s| s.axis_value).filter(|v| *v > 0.0).collect();
    x_ticks.sort_by(f64::total_cmp);
    x_ticks.dedup();
    Chart {
        title: format!("RMSE vs {}", result.plan.axis.name()),
        x_label: result.plan.axis.label().into(),
        y_label: "RMSE (cm)".into(),
        x_log: true,
        y_log: true,
        x_ticks: Some(x_ticks),
        series: series.into_iter().map(|(_, s)| s).collect(),
        levels,
    }
    .render()
}

/// Validation RMSE per epoch, log RMSE axis.
pub fn render_learning_curves(result: &LearningCurveResult) -> Result<String> {
    if result.curves.is_empty() {
        return Err(Error::EmptyResult("no learning curves".into()));
    }
    let series = result
        .curves
        .iter()
        .map(|c| Series {
            label: format!("{}, {} uJ", series_label("ocir-ann", c.pd_count, None), c.energy_uj),
            points: c.report.val_rmse_cm.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
        })
        .collect();
    Chart {
        title: "Learning curves".into(),
        x_label: "Epoch".into(),
        y_label: "Validation RMSE (cm)".into(),
        x_log: false,
        y_log: true,
        x_ticks: None,
        series,
        levels: Vec::new(),
    }
    .render()
}

#[cfg(test)]
mod tests {
    use super::super::sweep::{Method, SweepPlan, SweepRow};
    use super::*;
    use crate::experiments::{DetectorSet, ExperimentConfig};

    fn result(axis: Axis, rows: Vec<SweepRow>) -> SweepResult {
        let cfg = ExperimentConfig::fast();
        let mut plan = SweepPlan::for_axis(axis, &cfg);
        plan.methods = vec![Method::OcirAnn { detectors: DetectorSet::TwoPd, rate: 500e6 }, Method::Trilateration];
        SweepResult { plan, config_hash: "abc".into(), rows }
    }

    fn row(axis_value: f64, method: &'static str, f_s: f64, rmse: Option<f64>) -> SweepRow {
        SweepRow {
            axis_value,
            method,
            pd_count: if method == "trilateration" { 3 } else { 2 },
            f_s,
            pulse_width_ns: 10.0,
            repeat: 0,
            rmse_cm: rmse,
            error: None,
            report: None,
        }
    }

    #[test]
    fn two_methods_two_polylines() {
        let rows = vec![
            row(0.01, "ocir-ann", 500.0, Some(80.0)),
            row(0.01, "trilateration", 0.0, Some(60.0)),
            row(10.0, "ocir-ann", 500.0, Some(3.0)),
            row(10.0, "trilateration", 0.0, Some(40.0)),
        ];
        let svg = render_sweep(&result(Axis::PulseEnergy, rows)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("Pulse energy (uJ)"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn axes_are_logarithmic() {
        let rows = vec![row(0.01, "ocir-ann", 500.0, Some(100.0)), row(1.0, "ocir-ann", 500.0, Some(1.0)), row(100.0, "ocir-ann", 500.0, Some(0.01))];
        let svg = render_sweep(&result(Axis::PulseEnergy, rows)).unwrap();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts: Vec<(f64, f64)> = line
            .split("points=\"")
            .nth(1)
            .unwrap()
            .trim_end_matches("\"/>")
            .split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect();
        // Equal decades map to equal distances on both axes.
        assert!(((pts[1].0 - pts[0].0) - (pts[2].0 - pts[1].0)).abs() < 0.02);
        assert!(((pts[1].1 - pts[0].1) - (pts[2].1 - pts[1].1)).abs() < 0.02);
    }

    #[test]
    fn output_is_deterministic() {
        let rows = || vec![row(1.0, "ocir-ann", 500.0, Some(5.0)), row(2.0, "ocir-ann", 500.0, Some(4.0))];
        assert_eq!(render_sweep(&result(Axis::PulseWidth, rows())).unwrap(), render_sweep(&result(Axis::PulseWidth, rows())).unwrap());
    }

    #[test]
    fn dc_point_becomes_level() {
        let rows = vec![row(0.0, "ocir-ann", 0.0, Some(30.0)), row(50.0, "ocir-ann", 50.0, Some(10.0)), row(500.0, "ocir-ann", 500.0, Some(5.0))];
        let svg = render_sweep(&result(Axis::SamplingRate, rows)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("(DC)"));
    }

    #[test]
    fn empty_result_is_an_error() {
        assert!(matches!(render_sweep(&result(Axis::PulseEnergy, vec![])), Err(Error::EmptyResult(_))));
        let failed = vec![row(1.0, "ocir-ann", 500.0, None)];
        assert!(matches!(render_sweep(&result(Axis::PulseEnergy, failed)), Err(Error::EmptyResult(_))));
        let lc = LearningCurveResult { config_hash: String::new(), curves: vec![] };
        assert!(render_learning_curves(&lc).is_err());
    }
}
