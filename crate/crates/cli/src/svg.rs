//! Plain SVG plot of a run: mode-coloured path, obstacle snapshots and the
//! `d0`-equidistant curve around each snapshot.

use std::fmt::Write as _;

use slidenav::controller::ModeKind;
use slidenav::obstacle::Obstacle;
use slidenav::sim::{EventKind, Trace};
use slidenav::Vec2;

const WIDTH: f64 = 900.0;
const BOUNDARY_SAMPLES: usize = 240;
const MAX_SNAPSHOTS: usize = 6;

struct Frame {
    min: Vec2,
    scale: f64,
    height: f64,
}

impl Frame {
    fn map(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, self.height - (p.y - self.min.y) * self.scale)
    }

    fn points(&self, pts: &[Vec2]) -> String {
        let mut out = String::new();
        for p in pts {
            let (x, y) = self.map(*p);
            let _ = write!(out, "{x:.2},{y:.2} ");
        }
        out
    }
}

fn snapshot_times(trace: &Trace) -> Vec<f64> {
    let mut times = vec![trace.samples.first().map_or(0.0, |s| s.t())];
    times.extend(trace.events.iter().filter(|e| matches!(e.kind, EventKind::ModeSwitch { .. })).map(|e| e.t));
    times.push(trace.termination.t());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if times.len() > MAX_SNAPSHOTS {
        let last = *times.last().unwrap();
        times.truncate(MAX_SNAPSHOTS - 1);
        times.push(last);
    }
    times
}

pub fn render(trace: &Trace, obstacle: &Obstacle) -> String {
    let d0 = trace.scenario.controller.d0;
    let times = snapshot_times(trace);
    let mut outlines = Vec::new();
    for &t in &times {
        let mut boundary = Vec::with_capacity(BOUNDARY_SAMPLES + 1);
        let mut offset = Vec::with_capacity(BOUNDARY_SAMPLES + 1);
        for i in 0..=BOUNDARY_SAMPLES {
            let s = i as f64 / BOUNDARY_SAMPLES as f64;
            if let Ok(f) = obstacle.fields(s, t) {
                boundary.push(f.point);
                // The normal points inward.
                offset.push(f.point - f.normal * d0);
            }
        }
        outlines.push((t, boundary, offset));
    }

    let path: Vec<Vec2> = trace.samples.iter().map(|s| s.position()).collect();
    let target = trace.scenario.target_vec();
    let mut lo = target;
    let mut hi = target;
    for p in path.iter().chain(outlines.iter().flat_map(|o| o.2.iter())) {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let pad = 0.5;
    lo -= Vec2::new(pad, pad);
    hi += Vec2::new(pad, pad);
    let span = hi - lo;
    let scale = WIDTH / span.x.max(1e-9);
    let height = (span.y * scale).max(1.0);
    let frame = Frame { min: lo, scale, height };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let n = outlines.len();
    for (k, (t, boundary, offset)) in outlines.iter().enumerate() {
        let shade = 200 - (120 * (k + 1) / n.max(1)) as u32;
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="rgb({shade},{shade},{shade})" fill-opacity="0.35" stroke="rgb({shade},{shade},{shade})" stroke-width="1"><title>t = {t:.2} s</title></polygon>"#,
            frame.points(boundary)
        );
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="seagreen" stroke-width="1" stroke-dasharray="4 3"/>"#,
            frame.points(offset)
        );
    }

    let mut start = 0;
    let samples = &trace.samples;
    while start < samples.len() {
        let mode = samples[start].mode;
        let mut end = start;
        while end + 1 < samples.len() && samples[end + 1].mode == mode {
            end += 1;
        }
        let stop = (end + 1).min(samples.len() - 1);
        let colour = match mode {
            ModeKind::Pursuit => "royalblue",
            ModeKind::Avoidance => "crimson",
        };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            frame.points(&path[start..=stop])
        );
        start = end + 1;
    }

    if let Some(first) = path.first() {
        let (x, y) = frame.map(*first);
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="black"/>"#);
    }
    let (tx, ty) = frame.map(target);
    let _ = writeln!(svg, r#"<circle cx="{tx:.2}" cy="{ty:.2}" r="6" fill="none" stroke="black" stroke-width="2"/>"#);

    let legend = [
        ("royalblue", "pursuit"),
        ("crimson", "avoidance"),
        ("seagreen", "d0-equidistant curve"),
        ("gray", "obstacle snapshots"),
    ];
    for (i, (colour, label)) in legend.iter().enumerate() {
        let y = 20.0 + 18.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="10" y1="{y}" x2="34" y2="{y}" stroke="{colour}" stroke-width="3"/>"#);
        let _ = writeln!(svg, r#"<text x="40" y="{}" font-family="sans-serif" font-size="13">{label}</text>"#, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{}" font-family="sans-serif" font-size="13">{} | {:?}</text>"#,
        height - 10.0,
        trace.scenario.name,
        trace.termination
    );
    svg.push_str("</svg>\n");
    svg
}
