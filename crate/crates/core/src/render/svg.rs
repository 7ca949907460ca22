use std::fmt::Write;

use super::{node_matrix, FrameSpec};
use crate::geom::Affine;
use crate::layout::{GlyphSet, Shape};
use crate::scene::{NodeKind, Rgb, SceneNode, SceneSnapshot};

/// Stroke width of lines relative to the staff height.
const STROKE: f64 = 0.012;
/// Cursor line width in pixels.
const CURSOR_WIDTH: f64 = 3.0;

/// Fixed-precision number without trailing zeros, `-0` normalized.
fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s.is_empty() {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

/// Shortest round-trip form; used where values are read back exactly.
fn exact(v: f64) -> String {
    if v == 0.0 {
        "0".to_owned()
    } else {
        format!("{v}")
    }
}

fn rgb(c: Rgb) -> String {
    format!("rgb({},{},{})", c.0, c.1, c.2)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn matrix_attr(m: &Affine) -> String {
    let [a, b, c, d, e, f] = m.to_array();
    format!(
        "matrix({} {} {} {} {} {})",
        exact(a),
        exact(b),
        exact(c),
        exact(d),
        exact(e),
        exact(f)
    )
}

fn filter_id(address: &str) -> String {
    format!("fx-{}", address.trim_start_matches('/').replace('/', "-"))
}

/// Gaussian blur and/or offset drop shadow as SVG 1.1 primitives.
fn write_filter(out: &mut String, node: &SceneNode, pixel_scale: f64) -> bool {
    let attrs = &node.attrs;
    if attrs.blur <= 0.0 && attrs.shadow.is_none() {
        return false;
    }
    let _ = write!(
        out,
        "<filter id=\"{}\" x=\"-50%\" y=\"-50%\" width=\"200%\" height=\"200%\">",
        filter_id(&node.address)
    );
    let source = if attrs.blur > 0.0 {
        let _ = write!(
            out,
            "<feGaussianBlur in=\"SourceGraphic\" stdDeviation=\"{}\" result=\"blurred\"/>",
            num(attrs.blur * pixel_scale)
        );
        "blurred"
    } else {
        "SourceGraphic"
    };
    if let Some(shadow) = attrs.shadow {
        let _ = write!(
            out,
            "<feOffset in=\"SourceAlpha\" dx=\"{}\" dy=\"{}\" result=\"offset\"/>\
             <feComponentTransfer in=\"offset\" result=\"shadow\"><feFuncA type=\"linear\" slope=\"{}\"/></feComponentTransfer>\
             <feMerge><feMergeNode in=\"shadow\"/><feMergeNode in=\"{source}\"/></feMerge>",
            num(shadow.dx * pixel_scale),
            num(shadow.dy * pixel_scale),
            exact(f64::from(shadow.alpha) / 255.0)
        );
    }
    out.push_str("</filter>");
    true
}

fn write_glyphs(out: &mut String, glyphs: &GlyphSet) {
    for glyph in &glyphs.glyphs {
        match &glyph.shape {
            Shape::Line { x1, y1, x2, y2 } => {
                let _ = write!(
                    out,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
                    num(*x1),
                    num(*y1),
                    num(*x2),
                    num(*y2)
                );
            }
            Shape::Ellipse { cx, cy, rx, ry } => {
                let _ = write!(
                    out,
                    "<ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" stroke=\"none\"/>",
                    num(*cx),
                    num(*cy),
                    num(*rx),
                    num(*ry)
                );
            }
            Shape::Path { points } => {
                let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
                let _ = write!(out, "<polygon points=\"{}\" stroke=\"none\"/>", pts.join(" "));
            }
            Shape::Text { x, y, size, content } => {
                let _ = write!(
                    out,
                    "<text x=\"{}\" y=\"{}\" font-size=\"{}\" stroke=\"none\">{}</text>",
                    num(*x),
                    num(*y),
                    num(*size),
                    escape(content)
                );
            }
        }
    }
}

/// Renders one frame. Output depends only on the snapshot and `spec`;
/// nodes appear in address order and cursors are drawn above everything.
pub fn render_svg(snapshot: &SceneSnapshot, spec: &FrameSpec) -> String {
    let viewport = spec.viewport();
    let pixel_scale = spec.pixel_scale();
    let mut out = String::new();
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" data-frame=\"{}\" data-time=\"{}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"{}\"/>\n",
        spec.index,
        crate::rational::format(&spec.time),
        rgb(spec.background),
        w = spec.width,
        h = spec.height,
    );

    let mut defs = String::new();
    let mut body = String::new();
    for node in snapshot.nodes().filter(|n| n.kind() != NodeKind::Cursor) {
        let (Some(geometry), Some(matrix)) = (node.geometry(), node_matrix(node, &viewport)) else {
            continue;
        };
        let has_filter = write_filter(&mut defs, node, pixel_scale);
        let _ = write!(
            body,
            "<g data-address=\"{}\" data-kind=\"{}\" opacity=\"{}\"",
            escape(&node.address),
            if node.kind() == NodeKind::Text {
                "text"
            } else {
                "gmn-fragment"
            },
            exact(f64::from(node.attrs.alpha) / 255.0)
        );
        if has_filter {
            let _ = write!(body, " filter=\"url(#{})\"", filter_id(&node.address));
        }
        let color = rgb(node.attrs.color);
        let _ = write!(
            body,
            ">\n<g transform=\"{}\" fill=\"{color}\" stroke=\"{color}\" stroke-width=\"{}\" font-family=\"serif\">",
            matrix_attr(&matrix),
            num(geometry.glyphs.staff_height * STROKE)
        );
        write_glyphs(&mut body, &geometry.glyphs);
        body.push_str("</g>\n</g>\n");
    }

    for cursor in snapshot.nodes().filter(|n| n.kind() == NodeKind::Cursor) {
        let (Some(spec_), Some(target)) = (cursor.cursor(), snapshot.cursor_target(cursor)) else {
            continue;
        };
        let Some(state) = snapshot.cursor_state(cursor) else {
            continue;
        };
        let Some(matrix) = node_matrix(target, &viewport) else {
            continue;
        };
        let top = matrix.apply((state.x, state.y));
        let bottom = matrix.apply((state.x, state.y + state.length));
        let _ = writeln!(
            body,
            "<polyline data-address=\"{}\" data-performer=\"{}\" data-active=\"{}\" points=\"{},{} {},{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" opacity=\"{}\"/>",
            escape(&cursor.address),
            spec_.performer,
            state.active,
            num(top.0),
            num(top.1),
            num(bottom.0),
            num(bottom.1),
            rgb(cursor.attrs.color),
            num(CURSOR_WIDTH),
            exact(f64::from(cursor.attrs.alpha) / 255.0)
        );
    }

    if !defs.is_empty() {
        let _ = writeln!(out, "<defs>{defs}</defs>");
    }
    out.push_str(&body);
    out.push_str("</svg>\n");
    out
}
