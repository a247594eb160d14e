//! Minimal line plots written as standalone SVG text.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Tick marks on the rejection-rate axis, `0, 0.05, ..., 1`.
pub const X_TICKS: usize = 21;
const Y_TICKS: usize = 5;

pub struct Series {
    pub name: String,
    /// `(x, y)` with `y = None` leaving a gap.
    pub points: Vec<(f64, Option<f64>)>,
}

fn style(name: &str) -> (&'static str, &'static str) {
    match name {
        "epistemic" => ("#1b9e77", "none"),
        "predictive" => ("#7570b3", "2,3"),
        "propensity_quantiles" => ("#d95f02", "8,4"),
        "propensity_trimming" => ("#1f78b4", "8,3,2,3"),
        "random" => ("#e7298a", "2,2"),
        _ => ("#555555", "none"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Smallest of 1, 2, 2.5, 5 times a power of ten that is at least `v`.
fn nice_ceiling(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let base = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .map(|m| m * base)
        .find(|&c| c >= v * (1.0 - 1e-12))
        .unwrap_or(10.0 * base)
}

/// Plot with the x axis fixed to `[0, 1]`.
pub fn line_plot(title: &str, y_label: &str, series: &[Series]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y_max = nice_ceiling(
        series
            .iter()
            .flat_map(|s| s.points.iter().filter_map(|p| p.1))
            .fold(0.0, f64::max),
    );
    let px = |x: f64| LEFT + x * plot_w;
    let py = |y: f64| TOP + plot_h * (1.0 - y / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..X_TICKS {
        let x = i as f64 / (X_TICKS - 1) as f64;
        let (len, label) = if i % 2 == 0 {
            (6.0, true)
        } else {
            (3.0, false)
        };
        let _ = writeln!(
            s,
            r#"<line class="xtick" x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/>"#,
            px(x),
            TOP + plot_h,
            TOP + plot_h + len
        );
        if label {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x:.1}</text>"#,
                px(x),
                TOP + plot_h + 20.0
            );
        }
    }
    for j in 0..=Y_TICKS {
        let y = y_max * j as f64 / Y_TICKS as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{1:.2}" x2="{LEFT:.2}" y2="{1:.2}" stroke="black"/>"#,
            LEFT - 5.0,
            py(y)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py(y) + 4.0,
            format_tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">rejection rate</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (k, series) in series.iter().enumerate() {
        let (color, dash) = style(&series.name);
        // Split into runs of defined points.
        for run in series
            .points
            .split(|p| p.1.is_none())
            .filter(|r| !r.is_empty())
        {
            let coords: Vec<String> = run
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y.expect("defined point"))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
            lx + 25.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 32.0,
            ly + 4.0,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    let text = format!("{v:.3}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    text.to_string()
}
