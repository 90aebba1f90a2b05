//! SVG rendering of a scene with predicted modes.

use std::fmt::Write as _;

use crate::model::ModePrediction;
use crate::scenegraph::Scene;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

struct View {
    min: [f64; 2],
    scale: f64,
    height: f64,
}

impl View {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if lo[0] > hi[0] {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        Self {
            min: lo,
            scale,
            height: (hi[1] - lo[1]) * scale + 2.0 * MARGIN,
        }
    }

    /// Scene y points up; SVG y points down.
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            self.height - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }

    fn path(&self, pts: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(s, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x, y);
        }
        s
    }
}

/// Yellow for low scores through red for high ones.
fn score_color(score: f64) -> String {
    let s = score.clamp(0.0, 1.0);
    let g = (200.0 * (1.0 - s)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", 230, g, 20)
}

pub fn render_svg(scene: &Scene, preds: &[ModePrediction]) -> String {
    let view = View::fit(
        scene
            .lanes
            .iter()
            .flat_map(|l| l.left_boundary.iter().chain(&l.right_boundary).copied())
            .chain(scene.agents.iter().flat_map(|a| {
                a.states.iter().filter(|s| s.valid).map(|s| s.xy())
            }))
            .chain(preds.iter().flat_map(|p| p.trajectory_scene.iter().copied())),
    );
    let width = SIZE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{:.0}" viewBox="0 0 {width:.0} {:.0}">"#,
        view.height, view.height
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<g id="lanes">"#);
    for l in &scene.lanes {
        let _ = writeln!(
            s,
            r##"<path d="{} Z" fill="#e4e4e4" stroke="#a0a0a0" stroke-width="0.8"/>"##,
            view.path(&l.polygon())
        );
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#c8c8c8" stroke-width="0.6" stroke-dasharray="3,3"/>"##,
            view.path(&l.centerline_xy())
        );
    }
    let _ = writeln!(s, "</g>");
    let now = scene.current_step();
    let _ = writeln!(s, r#"<g id="agents">"#);
    for a in &scene.agents {
        let hist: Vec<[f64; 2]> = a.states[..=now]
            .iter()
            .filter(|st| st.valid)
            .map(|st| st.xy())
            .collect();
        if hist.len() > 1 {
            let _ = writeln!(
                s,
                r##"<path d="{}" fill="none" stroke="#1f5fd6" stroke-width="2"/>"##,
                view.path(&hist)
            );
        }
        let fut: Vec<[f64; 2]> = a.states[now..]
            .iter()
            .filter(|st| st.valid)
            .map(|st| st.xy())
            .collect();
        if fut.len() > 1 {
            let _ = writeln!(
                s,
                r##"<path d="{}" fill="none" stroke="#1a9a3a" stroke-width="2"/>"##,
                view.path(&fut)
            );
        }
        if a.states[now].valid {
            let (x, y) = view.map(a.states[now].xy());
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#1f5fd6"/>"##);
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="predictions">"#);
    let mut order: Vec<&ModePrediction> = preds.iter().collect();
    // Draw high scores last so they stay on top.
    order.sort_by(|a, b| a.score.total_cmp(&b.score).then((a.agent_index, a.mode).cmp(&(b.agent_index, b.mode))));
    for p in order {
        let color = score_color(p.score);
        let start = scene.agents[p.agent_index].states[now].xy();
        let mut pts = vec![start];
        pts.extend_from_slice(&p.trajectory_scene);
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="0.9"><title>agent {} mode {} score {:.3}</title></path>"#,
            view.path(&pts),
            p.agent_id,
            p.mode,
            p.score
        );
        if let Some(g) = p.goal {
            let (x, y) = view.map(g);
            let _ = writeln!(
                s,
                r#"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
                x - 4.0,
                y - 4.0,
                x + 4.0,
                y + 4.0,
                x - 4.0,
                y + 4.0,
                x + 4.0,
                y - 4.0
            );
        }
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
