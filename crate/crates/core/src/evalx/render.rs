use std::fmt::Write;

use crate::world::{AgentPose, GridWorld};

/// Path-age colour: red at the start of the path, green at its end.
pub fn path_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - t)).round() as u8;
    let g = (200.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}20")
}

/// SVG of the occupancy grid, the source, the start and the visited path
/// coloured by age.
pub fn render_trajectory_svg(world: &GridWorld, poses: &[AgentPose], px: usize) -> String {
    let (w, h) = (world.width * px, world.height * px);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#f4f4f4"/>"##);
    for r in 0..world.height {
        for c in 0..world.width {
            if world.occupancy[r * world.width + c] {
                let _ = writeln!(
                    s,
                    r##"<rect x="{}" y="{}" width="{px}" height="{px}" fill="#303030"/>"##,
                    c * px,
                    r * px
                );
            }
        }
    }
    let center = |p: &AgentPose| (p.cell.col * px + px / 2, p.cell.row * px + px / 2);
    let segs: Vec<(AgentPose, AgentPose)> = poses
        .windows(2)
        .filter(|w| w[0].cell != w[1].cell)
        .map(|w| (w[0], w[1]))
        .collect();
    for (i, (a, b)) in segs.iter().enumerate() {
        let t = if segs.len() > 1 {
            i as f64 / (segs.len() - 1) as f64
        } else {
            1.0
        };
        let ((x1, y1), (x2, y2)) = (center(a), center(b));
        let _ = writeln!(
            s,
            r#"<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{}" stroke-width="{}" stroke-linecap="round"/>"#,
            path_color(t),
            (px / 4).max(1)
        );
    }
    if let Some(start) = poses.first() {
        let (x, y) = center(start);
        let _ = writeln!(s, r##"<circle cx="{x}" cy="{y}" r="{}" fill="#d02020"/>"##, px / 3);
    }
    let (sx, sy) = (world.source.col * px + px / 2, world.source.row * px + px / 2);
    let _ = writeln!(
        s,
        r##"<circle cx="{sx}" cy="{sy}" r="{}" fill="none" stroke="#2060d0" stroke-width="2"/>"##,
        px / 2
    );
    s.push_str("</svg>\n");
    s
}
