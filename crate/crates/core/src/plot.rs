//! Minimal SVG line plots: the three-pose cuboid figure and the four
//! trajectory panels comparing predicted and recorded motion.

use std::fmt::Write;

use crate::dualquat::DualQuaternion;
use crate::error::Result;
use crate::pipeline::TraceRecord;
use crate::quat::Quaternion;
use crate::simulator::RigidBodyRecord;
use crate::vec3::Vec3;

pub const BLUE: &str = "#1f5fbf";
pub const RED: &str = "#c8312b";
pub const GREEN: &str = "#2b8a3e";
const PALETTE: [&str; 4] = ["#1f5fbf", "#c8312b", "#2b8a3e", "#8a5a00"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Equal scale on both axes.
    pub equal_aspect: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let pts = panel.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let widen = |a: f64, b: f64| {
        if b - a < 1e-12 {
            (a - 0.5, b + 0.5)
        } else {
            let m = 0.05 * (b - a);
            (a - m, b + m)
        }
    };
    let (x0, x1) = widen(x0, x1);
    let (y0, y1) = widen(y0, y1);
    (x0, x1, y0, y1)
}

fn draw_panel(out: &mut String, p: &Panel, ox: f64, oy: f64, w: f64, h: f64) {
    let (ml, mr, mt, mb) = (58.0, 12.0, 28.0, 40.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let (mut x0, mut x1, mut y0, mut y1) = bounds(p);
    if p.equal_aspect {
        let s = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        (x0, x1) = (cx - s * pw / 2.0, cx + s * pw / 2.0);
        (y0, y1) = (cy - s * ph / 2.0, cy + s * ph / 2.0);
    }
    let sx = |x: f64| ox + ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| oy + mt + ph - (y - y0) / (y1 - y0) * ph;
    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        ox + ml + pw / 2.0,
        oy + 18.0,
        esc(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
        ox + ml,
        oy + mt
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"##,
            oy + mt,
            oy + mt + ph,
            oy + mt + ph + 13.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
            ox + ml,
            ox + ml + pw,
            ox + ml - 4.0,
            y + 3.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
        ox + ml + pw / 2.0,
        oy + h - 6.0,
        esc(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        ox + 12.0,
        oy + mt + ph / 2.0,
        ox + 12.0,
        oy + mt + ph / 2.0,
        esc(&p.y_label)
    );
    for s in &p.series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"><title>{}</title></polyline>"#,
            s.color,
            pts.join(" "),
            esc(&s.label)
        );
    }
    let mut seen = Vec::new();
    let mut ly = oy + mt + 12.0;
    for s in p.series.iter().filter(|s| !s.label.is_empty()) {
        if seen.contains(&&s.label) {
            continue;
        }
        seen.push(&s.label);
        let lx = ox + ml + pw - 150.0;
        let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            lx + 18.0,
            s.color,
            lx + 22.0,
            ly + 3.5,
            esc(&s.label)
        );
        ly += 13.0;
    }
    let _ = writeln!(out, "</g>");
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Lays panels out on a grid of `cols` columns.
pub fn render(panels: &[Panel], cols: usize, panel_w: f64, panel_h: f64) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let (w, h) = (cols as f64 * panel_w, rows as f64 * panel_h);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, (i % cols) as f64 * panel_w, (i / cols) as f64 * panel_h, panel_w, panel_h);
    }
    out.push_str("</svg>\n");
    out
}

/// Corners of a box with the given half dimensions; bit `k` of the index
/// selects the sign along axis `k`.
pub fn cuboid_corners(half_dims: Vec3) -> [Vec3; 8] {
    std::array::from_fn(|i| {
        let s = |k: usize| if i >> k & 1 == 1 { 1.0 } else { -1.0 };
        Vec3::new(s(0) * half_dims.x, s(1) * half_dims.y, s(2) * half_dims.z)
    })
}

/// Index pairs of the twelve box edges.
pub fn cuboid_edges() -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(12);
    for i in 0..8 {
        for k in 0..3 {
            if i >> k & 1 == 0 {
                e.push((i, i | 1 << k));
            }
        }
    }
    e
}

/// The three poses of the rigid-body transformation figure.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreePoses {
    pub axis: Vec3,
    pub initial: [Vec3; 8],
    pub rotated: [Vec3; 8],
    pub transformed: [Vec3; 8],
}

/// Corners of a cuboid before, after rotating about `axis` by `angle`,
/// and after rotating then translating by `t`, all through unit dual
/// quaternions.
pub fn three_poses(half_dims: Vec3, axis: Vec3, angle: f64, t: Vec3) -> Result<ThreePoses> {
    let n = axis / axis.norm();
    let r = Quaternion::from_axis_angle(n, angle)?;
    let rot = DualQuaternion::from_rot_trans(r, Vec3::ZERO)?;
    let full = DualQuaternion::from_rot_trans(r, t)?;
    let initial = cuboid_corners(half_dims);
    let mut rotated = initial;
    let mut transformed = initial;
    for i in 0..8 {
        rotated[i] = rot.transform_point(initial[i])?;
        transformed[i] = full.transform_point(initial[i])?;
    }
    Ok(ThreePoses { axis: n, initial, rotated, transformed })
}

/// Oblique view used for the perspective panel.
fn oblique(p: Vec3) -> (f64, f64) {
    let (az, el) = (-55f64.to_radians(), 25f64.to_radians());
    let x = p.x * az.cos() - p.y * az.sin();
    let depth = p.x * az.sin() + p.y * az.cos();
    (x, p.z * el.cos() - depth * el.sin())
}

fn box_series(corners: &[Vec3; 8], project: &dyn Fn(Vec3) -> (f64, f64), label: &str, color: &str) -> Vec<Series> {
    cuboid_edges()
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| Series {
            label: if k == 0 { label.into() } else { String::new() },
            color: color.into(),
            dashed: false,
            points: vec![project(corners[a]), project(corners[b])],
        })
        .collect()
}

/// Perspective view plus the XZ, YZ and XY projections; initial pose in
/// blue, rotated in red, rotated and translated in green, rotation axis in
/// black.
pub fn three_pose_panels(p: &ThreePoses) -> Vec<Panel> {
    let views: [(&str, &str, &str, Box<dyn Fn(Vec3) -> (f64, f64)>); 4] = [
        ("xyz", "", "", Box::new(oblique)),
        ("xz", "x", "z", Box::new(|v: Vec3| (v.x, v.z))),
        ("yz", "y", "z", Box::new(|v: Vec3| (v.y, v.z))),
        ("xy", "x", "y", Box::new(|v: Vec3| (v.x, v.y))),
    ];
    views
        .into_iter()
        .map(|(title, xl, yl, proj)| {
            let mut series = Vec::new();
            series.extend(box_series(&p.initial, &*proj, "initial", BLUE));
            series.extend(box_series(&p.rotated, &*proj, "rotated", RED));
            series.extend(box_series(&p.transformed, &*proj, "rotated + translated", GREEN));
            series.push(Series {
                label: "axis".into(),
                color: "#000".into(),
                dashed: true,
                points: vec![proj(Vec3::ZERO), proj(p.axis * 2.0)],
            });
            Panel { title: title.into(), x_label: xl.into(), y_label: yl.into(), series, equal_aspect: true }
        })
        .collect()
}

pub fn three_pose_svg(p: &ThreePoses) -> String {
    render(&three_pose_panels(p), 2, 420.0, 360.0)
}

type Field = fn(&RigidBodyRecord) -> Vec<f64>;

/// Position, orientation, velocity and angular velocity against step,
/// predicted (solid) over recorded (dashed).
pub fn trajectory_panels(trace: &[TraceRecord], truth: &[RigidBodyRecord]) -> Vec<Panel> {
    let fields: [(&str, &str, &[&str], Field); 4] = [
        ("centre of mass", "m", &["x", "y", "z"], |r| r.position.to_array().to_vec()),
        ("orientation", "", &["w", "x", "y", "z"], |r| r.orientation.to_array().to_vec()),
        ("velocity", "m/s", &["x", "y", "z"], |r| r.velocity.to_array().to_vec()),
        ("angular velocity", "rad/s", &["x", "y", "z"], |r| r.angular_velocity.to_array().to_vec()),
    ];
    let predicted: Vec<&RigidBodyRecord> = trace.iter().map(|t| &t.record).collect();
    fields
        .into_iter()
        .map(|(title, unit, comps, f)| {
            let mut series = Vec::new();
            for (c, name) in comps.iter().enumerate() {
                let color = PALETTE[c % PALETTE.len()];
                let line = |recs: &[&RigidBodyRecord], dashed: bool, tag: &str| Series {
                    label: format!("{name} {tag}"),
                    color: color.into(),
                    dashed,
                    points: recs.iter().enumerate().map(|(k, r)| (k as f64, f(r)[c])).collect(),
                };
                series.push(line(&predicted, false, "predicted"));
                let recorded: Vec<&RigidBodyRecord> = truth.iter().collect();
                series.push(line(&recorded, true, "recorded"));
            }
            Panel { title: title.into(), x_label: "step".into(), y_label: unit.into(), series, equal_aspect: false }
        })
        .collect()
}

pub fn trajectory_svg(trace: &[TraceRecord], truth: &[RigidBodyRecord]) -> String {
    render(&trajectory_panels(trace, truth), 2, 520.0, 320.0)
}
