use std::fmt::Write;

use activeray::{Point2, Polygon, RayContour};

/// Output pixels per image pixel.
const SCALE: usize = 8;

fn points_attr(points: &[Point2]) -> String {
    let mut s = String::new();
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.3},{:.3}", p.x, p.y);
    }
    s
}

/// Ground truth in green, initial contours dashed blue, final contours red
/// with their reference points.
pub fn render_svg(
    width: usize,
    height: usize,
    gt: &[Polygon],
    initial: &[RayContour],
    finals: &[RayContour],
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {width} {height}">"#,
        width * SCALE,
        height * SCALE
    );
    let _ = writeln!(
        s,
        r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##
    );
    for p in gt {
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#2e9e44" fill-opacity="0.15" stroke="#2e9e44" stroke-width="0.25"/>"##,
            points_attr(p.vertices())
        );
    }
    for c in initial {
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#1f5fbf" stroke-width="0.2" stroke-dasharray="0.6 0.4"/>"##,
            points_attr(&c.points())
        );
    }
    for c in finals {
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#d1302b" stroke-width="0.25"/>"##,
            points_attr(&c.points())
        );
        let _ = writeln!(
            s,
            r##"<circle cx="{:.3}" cy="{:.3}" r="0.4" fill="#d1302b"/>"##,
            c.center().x,
            c.center().y
        );
    }
    s.push_str("</svg>\n");
    s
}
