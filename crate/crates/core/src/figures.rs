//! Deterministic SVG figures: class-distribution bars, training curves,
//! and confusion-matrix heatmaps. Hand-rolled so the output is plain text
//! that diffs cleanly between runs.

use crate::evaluation::ConfusionMatrix;
use crate::training::TrainingHistory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        ),
        w = WIDTH,
        h = HEIGHT,
        cx = WIDTH / 2.0,
        title = escape(title),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fnum(v: f64) -> String {
    format!("{v:.2}")
}

const PALETTE: [&str; 6] = [
    "#4878a8", "#d1495b", "#66a182", "#edae49", "#8d6cab", "#5f5f5f",
];

/// Bar chart of per-class sample counts.
pub fn distribution_svg(class_names: &[String], counts: &[usize], title: &str) -> String {
    let mut svg = header(title);
    let n = class_names.len().max(1);
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / n as f64;
    let bar_w = slot * 0.6;
    for (i, (name, &count)) in class_names.iter().zip(counts).enumerate() {
        let h = plot_h * count as f64 / max;
        let x = MARGIN + i as f64 * slot + (slot - bar_w) / 2.0;
        let y = HEIGHT - MARGIN - h;
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
            fnum(x),
            fnum(y),
            fnum(bar_w),
            fnum(h),
            color,
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            fnum(x + bar_w / 2.0),
            fnum(y - 6.0),
            count,
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            fnum(x + bar_w / 2.0),
            fnum(HEIGHT - MARGIN + 16.0),
            escape(name),
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    ));
    svg.push_str("</svg>\n");
    svg
}

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn line_chart(title: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let mut svg = header(title);
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    if xs.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (mut y0, mut y1) = (
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    if (y1 - y0).abs() < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| {
        if (x1 - x0).abs() < 1e-12 {
            MARGIN + plot_w / 2.0
        } else {
            MARGIN + (x - x0) / (x1 - x0) * plot_w
        }
    };
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;

    // axes and y-label
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>\n",
        fnum(HEIGHT / 2.0),
        fnum(HEIGHT / 2.0),
        escape(y_label),
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n",
        fnum(WIDTH / 2.0),
        fnum(HEIGHT - 12.0),
    ));
    for (tick, label) in [(y0, fnum(y0)), (y1, fnum(y1))] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fnum(MARGIN - 6.0),
            fnum(sy(tick) + 4.0),
            label,
        ));
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fnum(sx(x)), fnum(sy(y))))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            path.join(" "),
            color,
        ));
        let ly = MARGIN + 16.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{}\"/>\n",
            fnum(WIDTH - MARGIN - 120.0),
            fnum(ly),
            color,
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fnum(WIDTH - MARGIN - 102.0),
            fnum(ly + 5.0),
            escape(s.label),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Accuracy-per-epoch curves (train plus validation when present).
pub fn accuracy_curves_svg(history: &TrainingHistory, title: &str) -> String {
    let mut series = vec![Series {
        label: "train accuracy",
        points: history
            .epochs
            .iter()
            .map(|e| (e.epoch as f64, e.train_acc))
            .collect(),
    }];
    let val: Vec<(f64, f64)> = history
        .epochs
        .iter()
        .filter_map(|e| e.val_acc.map(|a| (e.epoch as f64, a)))
        .collect();
    if !val.is_empty() {
        series.push(Series {
            label: "val accuracy",
            points: val,
        });
    }
    line_chart(title, "accuracy", &series)
}

/// Loss-per-epoch curves (train plus validation when present).
pub fn loss_curves_svg(history: &TrainingHistory, title: &str) -> String {
    let mut series = vec![Series {
        label: "train loss",
        points: history
            .epochs
            .iter()
            .map(|e| (e.epoch as f64, e.train_loss))
            .collect(),
    }];
    let val: Vec<(f64, f64)> = history
        .epochs
        .iter()
        .filter_map(|e| e.val_loss.map(|l| (e.epoch as f64, l)))
        .collect();
    if !val.is_empty() {
        series.push(Series {
            label: "val loss",
            points: val,
        });
    }
    line_chart(title, "loss", &series)
}

/// Confusion-matrix heatmap: cell shade scales with count, rows are true
/// classes, columns predicted.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    let mut svg = header(title);
    let k = cm.class_names().len().max(1);
    let grid = (HEIGHT - 2.0 * MARGIN).min(WIDTH - 2.0 * MARGIN);
    let cell = grid / k as f64;
    let x0 = (WIDTH - grid) / 2.0;
    let y0 = MARGIN;
    let max = (0..k)
        .flat_map(|t| (0..k).map(move |p| (t, p)))
        .map(|(t, p)| cm.count(t, p))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    for t in 0..k {
        for p in 0..k {
            let v = cm.count(t, p) as f64;
            let shade = 1.0 - 0.85 * v / max;
            let tone = (shade * 255.0).round() as u8;
            let x = x0 + p as f64 * cell;
            let y = y0 + t as f64 * cell;
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({tone},{tone},255)\" stroke=\"black\" stroke-width=\"0.5\"/>\n",
                fnum(x),
                fnum(y),
                fnum(cell),
                fnum(cell),
            ));
            let text_fill = if shade < 0.5 { "white" } else { "black" };
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" fill=\"{text_fill}\">{}</text>\n",
                fnum(x + cell / 2.0),
                fnum(y + cell / 2.0 + 4.0),
                cm.count(t, p),
            ));
        }
    }
    for (i, name) in cm.class_names().iter().enumerate() {
        // column labels (predicted) across the top, row labels (true) left
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            fnum(x0 + i as f64 * cell + cell / 2.0),
            fnum(y0 - 8.0),
            escape(name),
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
            fnum(x0 - 6.0),
            fnum(y0 + i as f64 * cell + cell / 2.0 + 3.0),
            escape(name),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
