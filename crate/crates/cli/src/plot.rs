//! Log-log convergence chart of feasibility and the stationarity estimate,
//! computed from the text of `trace.csv` alone.

use std::fmt::Write;

use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Series {
    label: &'static str,
    color: &'static str,
    points: Vec<(f64, f64)>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Config(format!("trace has no `{name}` column")))
}

/// `(log10 t, log10 v)` for rows with `t ≥ 1` and finite positive `v`.
fn read_series(csv_text: &str) -> Result<Vec<Series>, CliError> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rd.headers().map_err(|e| CliError::Config(e.to_string()))?.clone();
    let t_col = column(&headers, "t")?;
    let cols = [("feas", "feasibility", "#1f77b4"), ("stat_est", "stationarity estimate", "#d62728")];
    let mut series: Vec<Series> = cols
        .iter()
        .map(|&(_, label, color)| Series {
            label,
            color,
            points: Vec::new(),
        })
        .collect();
    let idx: Vec<usize> = cols.iter().map(|(c, _, _)| column(&headers, c)).collect::<Result<_, _>>()?;
    for row in rd.records() {
        let row = row.map_err(|e| CliError::Config(e.to_string()))?;
        let t: f64 = row[t_col].parse().map_err(|_| CliError::Config(format!("bad t value {:?}", &row[t_col])))?;
        if t < 1.0 {
            continue;
        }
        for (s, &k) in series.iter_mut().zip(&idx) {
            if let Ok(v) = row[k].parse::<f64>() {
                if v > 0.0 && v.is_finite() {
                    s.points.push((t.log10(), v.log10()));
                }
            }
        }
    }
    Ok(series)
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// The SVG document for a trace. Identical input text gives identical output.
pub fn convergence_svg(csv_text: &str) -> Result<String, CliError> {
    let series = read_series(csv_text)?;
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    // One tick per decade; skip labels when the range is wide.
    let every = |span: f64| ((span / 8.0).ceil() as i64).max(1);
    let xe = every(x1 - x0);
    for k in (x0 as i64)..=(x1 as i64) {
        let x = sx(k as f64);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph);
        if (k - x0 as i64) % xe == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#,
                TOP + ph + 16.0
            );
        }
    }
    let ye = every(y1 - y0);
    for k in (y0 as i64)..=(y1 as i64) {
        let y = sy(k as f64);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        if (k - y0 as i64) % ye == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration t</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    for (i, ser) in series.iter().enumerate() {
        if !ser.points.is_empty() {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                ser.color,
                pts.join(" ")
            );
        }
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 170.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            ser.color
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 26.0, ser.label);
    }
    if series.iter().all(|s| s.points.is_empty()) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">no data</text>"#,
            LEFT + pw / 2.0,
            TOP + ph / 2.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
