//! Static figures from a log: minimal SVG line plots plus gnuplot `.dat`
//! files. Output depends only on the log, so re-plotting is byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::log::SimLog;
use crate::{Result, Vec3};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
/// Points per series kept in the SVG; `.dat` files keep everything.
const SVG_POINTS: usize = 1500;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Figure {
    fn new(name: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    fn add(&mut self, label: String, points: Vec<(f64, f64)>, dashed: bool) {
        self.series.push(Series {
            label,
            points,
            dashed,
        });
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in self.series.iter().flat_map(|s| &s.points) {
            if x.is_finite() && y.is_finite() {
                b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
            }
        }
        if !b.0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            if hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
                let p = 0.05 * (hi - lo);
                (lo - p, hi + p)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (x0, x1) = pad(b.0, b.1);
        let (y0, y1) = pad(b.2, b.3);
        (x0, x1, y0, y1)
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - 2.0 * MARGIN_Y;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" y1="{1}" x2="{0:.1}" y2="{2}" stroke="#ddd"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"##,
                sx(xv),
                MARGIN_Y,
                MARGIN_Y + ph,
                MARGIN_Y + ph + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{0}" y1="{1:.1}" x2="{2}" y2="{1:.1}" stroke="#ddd"/><text x="{3}" y="{4:.1}" text-anchor="end">{5}</text>"##,
                MARGIN_LEFT,
                sy(yv),
                MARGIN_LEFT + pw,
                MARGIN_LEFT - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 6.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_Y + ph / 2.0,
            escape(&self.y_label)
        );

        for (k, series) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let stride = series.points.len().div_ceil(SVG_POINTS).max(1);
            let mut path = String::new();
            let mut pen_down = false;
            for (j, &(x, y)) in series.points.iter().enumerate() {
                if j % stride != 0 && j + 1 != series.points.len() {
                    continue;
                }
                if !(x.is_finite() && y.is_finite()) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            }
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.4"{dash}/>"#,
                path.trim_end()
            );
            let ly = MARGIN_Y + 10.0 + 18.0 * k as f64;
            let lx = MARGIN_LEFT + pw + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// gnuplot data: one block per series, selectable with `index`.
    pub fn to_dat(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.title);
        let _ = writeln!(s, "# x: {}  y: {}", self.x_label, self.y_label);
        for (k, series) in self.series.iter().enumerate() {
            if k > 0 {
                s.push_str("\n\n");
            }
            let _ = writeln!(s, "# index {k}: {}", series.label);
            for (x, y) in &series.points {
                let _ = writeln!(s, "{x:.16e} {y:.16e}");
            }
        }
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// The standard figure set for a run.
pub fn figures(log: &SimLog) -> Vec<Figure> {
    let recs = &log.records;
    let n = log.vehicles;
    let time_series = |f: &dyn Fn(&crate::log::LogRecord) -> f64| -> Vec<(f64, f64)> {
        recs.iter().map(|r| (r.time, f(r))).collect()
    };
    let comp = |v: Vec3, a: usize| v[a];

    let mut out = Vec::new();

    let mut fig = Figure::new("load_position", "Load position (solid) and reference (dashed)", "t [s]", "m");
    for a in 0..3 {
        fig.add(format!("xL_{}", AXES[a]), time_series(&|r| comp(r.load_position, a)), false);
    }
    for a in 0..3 {
        fig.add(format!("xLd_{}", AXES[a]), time_series(&|r| comp(r.reference_position, a)), true);
    }
    out.push(fig);

    let mut fig = Figure::new("load_error", "Load transportation error", "t [s]", "m");
    for a in 0..3 {
        fig.add(format!("xe_{}", AXES[a]), time_series(&|r| comp(r.load_error, a)), false);
    }
    fig.add("|xe|".into(), time_series(&|r| r.load_error.norm()), true);
    out.push(fig);

    for a in 0..3 {
        let mut fig = Figure::new(
            &format!("vehicle_position_{}", AXES[a]),
            &format!("Vehicle positions, {} axis", AXES[a]),
            "t [s]",
            "m",
        );
        for i in 0..n {
            fig.add(format!("x{}_{}", i + 1, AXES[a]), time_series(&|r| comp(r.vehicles[i].position, a)), false);
        }
        out.push(fig);
    }

    for i in 0..n {
        let mut fig = Figure::new(
            &format!("attitude_{}", i + 1),
            &format!("Vehicle {} attitude quaternion (dashed: desired)", i + 1),
            "t [s]",
            "",
        );
        for c in 0..4 {
            fig.add(format!("q{}_{c}", i + 1), time_series(&|r| r.vehicles[i].attitude.to_array()[c]), false);
        }
        for c in 0..4 {
            fig.add(
                format!("qd{}_{c}", i + 1),
                time_series(&|r| r.vehicles[i].desired_attitude.to_array()[c]),
                true,
            );
        }
        out.push(fig);
    }

    for i in 0..n {
        let mut fig = Figure::new(
            &format!("tension_{}", i + 1),
            &format!("Cable {} force T·α (solid) and desired (dashed)", i + 1),
            "t [s]",
            "N",
        );
        for a in 0..3 {
            fig.add(
                format!("T{}a{}_{}", i + 1, i + 1, AXES[a]),
                time_series(&|r| r.vehicles[i].tension * r.vehicles[i].direction[a]),
                false,
            );
        }
        for a in 0..3 {
            fig.add(
                format!("Td{}_{}", i + 1, AXES[a]),
                time_series(&|r| r.vehicles[i].desired_force[a]),
                true,
            );
        }
        out.push(fig);
    }

    for i in 0..n {
        let mut fig = Figure::new(
            &format!("control_{}", i + 1),
            &format!("Vehicle {} control input u_d", i + 1),
            "t [s]",
            "N",
        );
        for a in 0..3 {
            fig.add(
                format!("ud{}_{}", i + 1, AXES[a]),
                time_series(&|r| r.vehicles[i].desired_thrust_vector[a]),
                false,
            );
        }
        fig.add(
            format!("|ud{}|", i + 1),
            time_series(&|r| r.vehicles[i].desired_thrust_vector.norm()),
            true,
        );
        out.push(fig);
    }

    for (name, title, (a, b)) in [
        ("top_view", "Top view (x-y)", (0, 1)),
        ("side_view_xz", "Projection x-z", (0, 2)),
        ("side_view_yz", "Projection y-z", (1, 2)),
    ] {
        let mut fig = Figure::new(name, title, &format!("{} [m]", AXES[a]), &format!("{} [m]", AXES[b]));
        fig.add("load".into(), recs.iter().map(|r| (r.load_position[a], r.load_position[b])).collect(), false);
        fig.add(
            "reference".into(),
            recs.iter()
                .map(|r| (r.reference_position[a], r.reference_position[b]))
                .collect(),
            true,
        );
        for i in 0..n {
            fig.add(
                format!("vehicle {}", i + 1),
                recs.iter()
                    .map(|r| (r.vehicles[i].position[a], r.vehicles[i].position[b]))
                    .collect(),
                false,
            );
        }
        out.push(fig);
    }
    out
}

/// Writes `<name>.svg` and `<name>.dat` for every figure into `dir`.
pub fn write_figures(log: &SimLog, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for fig in figures(log) {
        for (ext, body) in [("svg", fig.to_svg()), ("dat", fig.to_dat())] {
            let path = dir.join(format!("{}.{ext}", fig.name));
            std::fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}
