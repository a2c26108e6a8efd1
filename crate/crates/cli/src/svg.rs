//! Line chart of the rollout error in plain SVG 1.1.

use std::fmt::Write as _;

use ppnn_core::rollout::RolloutReport;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean error per model on a log axis, min/max envelope shaded, and a dashed
/// marker at the training horizon.
pub fn error_chart(reports: &[RolloutReport], title: &str) -> String {
    let n_steps = reports.iter().map(|r| r.n_steps()).max().unwrap_or(1).max(1);
    let positive = reports
        .iter()
        .flat_map(|r| r.stats.iter())
        .filter(|s| s.n_alive > 0)
        .flat_map(|s| [s.min, s.mean, s.max])
        .filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (dlo, dhi) = if lo.is_finite() {
        let (a, b) = (lo.log10().floor(), hi.log10().ceil());
        (a, if b > a { b } else { a + 1.0 })
    } else {
        (-3.0, 0.0)
    };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let x = |step: f64| LEFT + pw * step / n_steps as f64;
    let y = |v: f64| {
        let l = if v > 0.0 { v.log10().clamp(dlo, dhi) } else { dlo };
        TOP + ph * (dhi - l) / (dhi - dlo)
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));

    // decade grid and labels
    let mut d = dlo;
    while d <= dhi + 1e-9 {
        let yy = y(10f64.powf(d));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{}</text>"#, LEFT - 6.0, yy + 4.0, d as i64);
        d += 1.0;
    }
    let tick = nice_tick(n_steps);
    let mut t = 0;
    while t <= n_steps {
        let xx = x(t as f64);
        let _ = writeln!(s, r##"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="#000000"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, TOP + ph + 18.0);
        t += tick;
    }
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>"##);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#, LEFT + pw / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">relative error</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    if let Some(h) = reports.first().map(|r| r.horizon).filter(|&h| h <= n_steps) {
        let xx = x(h as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{xx:.2}" y1="{TOP}" x2="{xx:.2}" y2="{:.2}" stroke="#555555" stroke-dasharray="6,4"/>"##,
            TOP + ph
        );
        let _ = writeln!(s, r##"<text x="{:.2}" y="{:.2}" fill="#555555">training horizon</text>"##, xx + 4.0, TOP + 14.0);
    }

    for (i, r) in reports.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // one envelope polygon per run of consecutive live steps
        for run in live_runs(r) {
            let mut pts: Vec<String> = run.iter().map(|st| format!("{:.2},{:.2}", x(st.step as f64), y(st.max))).collect();
            pts.extend(run.iter().rev().map(|st| format!("{:.2},{:.2}", x(st.step as f64), y(st.min))));
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, pts.join(" "));
            let line: Vec<String> = run.iter().map(|st| format!("{:.2},{:.2}", x(st.step as f64), y(st.mean))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&r.model));
    }
    s.push_str("</svg>\n");
    s
}

fn live_runs(r: &RolloutReport) -> Vec<Vec<ppnn_core::rollout::StepStats>> {
    let mut runs = Vec::new();
    let mut cur = Vec::new();
    for st in &r.stats {
        if st.n_alive > 0 && st.mean.is_finite() {
            cur.push(*st);
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

fn nice_tick(n: usize) -> usize {
    let raw = (n as f64 / 8.0).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    step as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppnn_core::rollout::StepStats;

    fn report(name: &str, means: &[f64]) -> RolloutReport {
        RolloutReport {
            model: name.into(),
            stats: means
                .iter()
                .enumerate()
                .map(|(i, &m)| StepStats { step: i + 1, mean: m, min: m * 0.5, max: m * 2.0, n_alive: usize::from(m.is_finite()) })
                .collect(),
            per_trajectory: vec![],
            diverged_at: vec![None],
            horizon: 2,
            dt_learn: 0.1,
        }
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_tick(100), 20);
        assert_eq!(nice_tick(10), 2);
        assert_eq!(nice_tick(3), 1);
    }

    #[test]
    fn broken_curves_become_separate_runs() {
        let r = report("a<b", &[0.1, f64::NAN, 0.2, 0.3]);
        assert_eq!(live_runs(&r).len(), 2);
        let svg = error_chart(&[r], "t & t");
        assert!(svg.contains("a&lt;b") && svg.contains("t &amp; t"));
        assert!(svg.contains("training horizon"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
