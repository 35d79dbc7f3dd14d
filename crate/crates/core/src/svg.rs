//! Minimal SVG line plots for the transect figure.

use std::fmt::Write;

use crate::simulate::{Fig1Row, PairType};

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 40.0;

fn dash(q: Option<f64>) -> &'static str {
    match q {
        None => "",
        Some(q) if q >= 0.1 - 1e-12 => "",
        Some(q) if q >= 0.05 - 1e-12 => " stroke-dasharray=\"6 3\"",
        Some(_) => " stroke-dasharray=\"2 3\"",
    }
}

fn colour(stat: &str) -> &'static str {
    match stat {
        "lambda_L" => "#c0392b",
        "lambda_U" => "#27ae60",
        _ => "#888888",
    }
}

/// One panel per (model, pair type), lag on the x axis and the statistic on
/// [0, 1]: Spearman's ρ in grey, `λ_L^q` red, `λ_U^q` green, line style by q.
pub fn fig1_svg(rows: &[Fig1Row]) -> String {
    let models = rows.iter().map(|r| r.model).max().unwrap_or(0);
    let max_lag = rows.iter().map(|r| r.lag).max().unwrap_or(1).max(1);
    let width = MARGIN + 3.0 * (PANEL_W + MARGIN);
    let height = MARGIN + models as f64 * (PANEL_H + MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for model in 1..=models {
        for (c, pt) in PairType::ALL.iter().enumerate() {
            let x0 = MARGIN + c as f64 * (PANEL_W + MARGIN);
            let y0 = MARGIN + (model - 1) as f64 * (PANEL_H + MARGIN);
            let px = |lag: usize| x0 + PANEL_W * lag as f64 / max_lag as f64;
            let py = |v: f64| y0 + PANEL_H * (1.0 - v.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"black\"/>"
            );
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">model {model}, {}</text>", x0, y0 - 6.0, pt.label());
            for lag in 0..=max_lag {
                let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{lag}</text>", px(lag), y0 + PANEL_H + 14.0);
            }
            for v in [0.0, 0.5, 1.0] {
                let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v}</text>", x0 - 4.0, py(v) + 4.0);
            }
            let mut series: Vec<(&str, Option<f64>)> = rows
                .iter()
                .filter(|r| r.model == model && r.pair_type == *pt)
                .map(|r| (r.stat.as_str(), r.q))
                .collect();
            series.sort_by(|a, b| a.0.cmp(b.0).then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)));
            series.dedup();
            for (stat, q) in series {
                let mut pts: Vec<(usize, f64)> = rows
                    .iter()
                    .filter(|r| r.model == model && r.pair_type == *pt && r.stat == stat && r.q == q)
                    .map(|r| (r.lag, r.value))
                    .collect();
                pts.sort_by_key(|p| p.0);
                let path: Vec<String> = pts
                    .iter()
                    .filter(|p| p.1.is_finite())
                    .map(|&(l, v)| format!("{:.1},{:.1}", px(l), py(v)))
                    .collect();
                let _ = writeln!(
                    s,
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{} points=\"{}\"/>",
                    colour(stat),
                    dash(q),
                    path.join(" ")
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
