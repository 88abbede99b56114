//! Direct SVG rendering of tree projections: node polytopes as 2D convex
//! hulls filled on a green-to-red spectrum by cost-to-go, with axes, a
//! color bar, and optional trajectory overlays.

use crate::tree::PolytopicTree;

const W: f64 = 1000.0;
const H: f64 = 1000.0;
const MARGIN: f64 = 80.0;

/// Renders one projection of the tree. `trace` is an optional polyline in
/// the projected plane.
pub fn render_tree_svg(tree: &PolytopicTree, proj: (usize, usize), trace: Option<&[(f64, f64)]>) -> String {
    let (ix, iy) = proj;
    let v_max = tree
        .nodes()
        .iter()
        .map(|n| n.value)
        .fold(0.0f64, f64::max)
        .max(1e-12);

    // Projected hulls, drawn most-expensive first so cheap nodes stay visible.
    let mut polys: Vec<(f64, Vec<(f64, f64)>)> = tree
        .nodes()
        .iter()
        .map(|n| {
            let pts: Vec<(f64, f64)> = n
                .polytope
                .vertices()
                .points
                .iter()
                .map(|p| (p[ix], p[iy]))
                .collect();
            (n.value, convex_hull(&pts))
        })
        .collect();
    polys.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Data bounds over hulls and trace.
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut seen = |x: f64, y: f64| {
        lo.0 = lo.0.min(x);
        lo.1 = lo.1.min(y);
        hi.0 = hi.0.max(x);
        hi.1 = hi.1.max(y);
    };
    for (_, hull) in &polys {
        for &(x, y) in hull {
            seen(x, y);
        }
    }
    if let Some(t) = trace {
        for &(x, y) in t {
            seen(x, y);
        }
    }
    if !lo.0.is_finite() {
        lo = (-1.0, -1.0);
        hi = (1.0, 1.0);
    }
    let pad = ((hi.0 - lo.0).max(1e-9) * 0.05, (hi.1 - lo.1).max(1e-9) * 0.05);
    lo = (lo.0 - pad.0, lo.1 - pad.1);
    hi = (hi.0 + pad.0, hi.1 + pad.1);
    let sx = (W - 2.0 * MARGIN) / (hi.0 - lo.0);
    let sy = (H - 2.0 * MARGIN) / (hi.1 - lo.1);
    let tx = |x: f64| MARGIN + (x - lo.0) * sx;
    let ty = |y: f64| H - MARGIN - (y - lo.1) * sy;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<defs><linearGradient id=\"vscale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">");
    svg.push_str("<stop offset=\"0\" stop-color=\"rgb(46,180,72)\"/>");
    svg.push_str("<stop offset=\"1\" stop-color=\"rgb(214,45,38)\"/>");
    svg.push_str("</linearGradient></defs>\n");
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));

    for (value, hull) in &polys {
        if hull.is_empty() {
            continue;
        }
        let t = (value / v_max).clamp(0.0, 1.0);
        let r = 46.0 + t * (214.0 - 46.0);
        let g = 180.0 + t * (45.0 - 180.0);
        let b = 72.0 + t * (38.0 - 72.0);
        let pts: Vec<String> = hull
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", tx(x), ty(y)))
            .collect();
        if hull.len() >= 3 {
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"rgb({r:.0},{g:.0},{b:.0})\" fill-opacity=\"0.65\" stroke=\"#444\" stroke-width=\"0.6\"/>\n",
                pts.join(" ")
            ));
        } else {
            // Degenerate projections (segments, points) still get drawn.
            let (x, y) = hull[0];
            if hull.len() == 2 {
                let (x2, y2) = hull[1];
                svg.push_str(&format!(
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"rgb({r:.0},{g:.0},{b:.0})\" stroke-width=\"2\"/>\n",
                    tx(x), ty(y), tx(x2), ty(y2)
                ));
            } else {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"rgb({r:.0},{g:.0},{b:.0})\"/>\n",
                    tx(x), ty(y)
                ));
            }
        }
    }

    if let Some(t) = trace {
        if !t.is_empty() {
            let pts: Vec<String> = t
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", tx(x), ty(y)))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.8\"/>\n",
                pts.join(" ")
            ));
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"#1f5fbf\"/>\n",
                tx(t[0].0),
                ty(t[0].1)
            ));
            let last = t[t.len() - 1];
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"black\"/>\n",
                tx(last.0),
                ty(last.1)
            ));
        }
    }

    // Axes with five ticks each.
    svg.push_str(&format!(
        "<rect x=\"{M}\" y=\"{M}\" width=\"{w:.1}\" height=\"{h:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        M = MARGIN,
        w = W - 2.0 * MARGIN,
        h = H - 2.0 * MARGIN
    ));
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = lo.0 + f * (hi.0 - lo.0);
        let yv = lo.1 + f * (hi.1 - lo.1);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{y0:.1}\" x2=\"{x:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>\n",
            x = tx(xv),
            y0 = H - MARGIN,
            y1 = H - MARGIN + 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"16\" text-anchor=\"middle\">{v:.3}</text>\n",
            x = tx(xv),
            y = H - MARGIN + 24.0,
            v = xv
        ));
        svg.push_str(&format!(
            "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            x0 = MARGIN - 6.0,
            x1 = MARGIN,
            y = ty(yv)
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"16\" text-anchor=\"end\">{v:.3}</text>\n",
            x = MARGIN - 10.0,
            y = ty(yv) + 5.0,
            v = yv
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"18\" text-anchor=\"middle\">x[{ix}]</text>\n",
        x = W / 2.0,
        y = H - 20.0
    ));
    svg.push_str(&format!(
        "<text x=\"24\" y=\"{y:.1}\" font-size=\"18\" text-anchor=\"middle\" transform=\"rotate(-90 24 {y:.1})\">x[{iy}]</text>\n",
        y = H / 2.0
    ));

    // Cost-to-go color bar.
    let bar_x = W - MARGIN + 24.0;
    svg.push_str(&format!(
        "<rect x=\"{bar_x:.1}\" y=\"{M}\" width=\"18\" height=\"{h:.1}\" fill=\"url(#vscale)\" stroke=\"black\"/>\n",
        M = MARGIN,
        h = H - 2.0 * MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"14\">{v:.2}</text>\n",
        x = bar_x + 22.0,
        y = MARGIN + 12.0,
        v = v_max
    ));
    svg.push_str(&format!(
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"14\">0</text>\n",
        x = bar_x + 22.0,
        y = H - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 {x:.1} {y:.1})\">cost-to-go</text>\n",
        x = bar_x + 48.0,
        y = H / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Andrew's monotone chain; returns the hull in counterclockwise order.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_has_four_corners() {
        let pts = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
    }

    #[test]
    fn hull_of_collinear_points_is_segment() {
        let pts = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 2);
    }
}
