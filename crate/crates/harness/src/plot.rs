//! Minimal SVG rendering of the sweep curves and the search surface.

use std::fmt::Write;

use fdswipt_core::search::SearchResult;

use crate::experiments::SweepRow;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi > lo {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    } else {
        (out_lo + out_hi) / 2.0
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
}

/// Mean secrecy rate against required harvested power, one line per
/// antenna configuration, with one-standard-error bars.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    header(&mut out, "Average secrecy rate vs required harvested power");
    let pts: Vec<&SweepRow> = rows.iter().filter(|r| r.mean_secrecy_nats.is_some()).collect();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in &pts {
        let m = r.mean_secrecy_nats.unwrap_or_default();
        let e = r.std_err.unwrap_or(0.0);
        x_lo = x_lo.min(r.p_req_dbm);
        x_hi = x_hi.max(r.p_req_dbm);
        y_lo = y_lo.min(m - e);
        y_hi = y_hi.max(m + e);
    }
    let px = |x: f64| scale(x, x_lo, x_hi, MARGIN, W - MARGIN);
    let py = |y: f64| scale(y, y_lo, y_hi, H - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{m} {m} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">required harvested power (dBm)</text>"#,
        W / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">secrecy rate (nats/s/Hz)</text>"#,
        H / 2.0,
        H / 2.0
    );
    if x_lo.is_finite() {
        for (x, anchor) in [(x_lo, "start"), (x_hi, "end")] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="{anchor}">{x}</text>"#,
                px(x),
                H - MARGIN + 15.0
            );
        }
        for y in [y_lo, y_hi] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{y:.3}</text>"#,
                MARGIN - 5.0,
                py(y)
            );
        }
    }
    let mut configs: Vec<(usize, usize)> = pts.iter().map(|r| (r.n_a, r.n_b)).collect();
    configs.dedup();
    for (i, (a, b)) in configs.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line: Vec<&&SweepRow> = pts.iter().filter(|r| (r.n_a, r.n_b) == (*a, *b)).collect();
        let d: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let cmd = if j == 0 { 'M' } else { 'L' };
                format!(
                    "{cmd}{:.2} {:.2}",
                    px(r.p_req_dbm),
                    py(r.mean_secrecy_nats.unwrap_or_default())
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{color}" fill="none" stroke-width="2"/>"#,
            d.join(" ")
        );
        for r in &line {
            let (m, e) = (r.mean_secrecy_nats.unwrap_or_default(), r.std_err.unwrap_or(0.0));
            let x = px(r.p_req_dbm);
            let _ = writeln!(
                out,
                r#"<path d="M{x:.2} {:.2} V{:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                py(m - e),
                py(m + e),
                py(m)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">N_a={a}, N_b={b}</text>"#,
            W - MARGIN - 110.0,
            MARGIN + 15.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heat map of the SP-SRM objective over the main grid (`t` by index, since
/// the axis is logarithmic); infeasible cells are grey.
pub fn surface_svg(result: &SearchResult, theta_points: usize) -> String {
    let mut out = String::new();
    header(&mut out, "SP-SRM objective over (theta, t)");
    let rows = result.surface.len() / theta_points.max(1);
    let values: Vec<f64> = result.surface.iter().filter_map(|p| p.value.objective()).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cw = (W - 2.0 * MARGIN) / theta_points as f64;
    let ch = (H - 2.0 * MARGIN) / rows.max(1) as f64;
    for (i, p) in result.surface.iter().enumerate() {
        let (r, c) = (i / theta_points, i % theta_points);
        let fill = match p.value.objective() {
            Some(v) => {
                let s = scale(v, lo, hi, 0.0, 1.0);
                format!("rgb({},{},{})", (255.0 * s) as u8, 64, (255.0 * (1.0 - s)) as u8)
            }
            None => "#cccccc".into(),
        };
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            MARGIN + c as f64 * cw,
            H - MARGIN - (r + 1) as f64 * ch,
            cw + 0.5,
            ch + 0.5
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">theta</text>"#,
        W / 2.0,
        H - MARGIN + 20.0
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">t (log grid index)</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">max {:.4} at theta={:.3}, t={:.4}</text>"#,
        W - MARGIN,
        MARGIN - 10.0,
        result.best_objective,
        result.best_point.theta,
        result.best_point.t
    );
    out.push_str("</svg>\n");
    out
}
