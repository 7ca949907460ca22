//! Projection of scene snapshots to SVG frames and to the viewer's JSON
//! state documents.
//!
//! Scene coordinates span `[-1,1]²` around the canvas center, y downward.
//! The viewport scales uniformly by `min(width, height) / 2`, so a wide
//! canvas shows extra room left and right instead of stretching notation.

mod feed;
mod sequence;
mod svg;

pub use feed::{strip_known_geometry, StateFeed};
pub use sequence::{frame_count, frame_name, frame_times, render_sequence, simulate, snapshots, RenderError};
pub use svg::render_svg;

use serde::Serialize;

use crate::geom::Affine;
use crate::rational::Rational;
use crate::scene::{AttrSet, Rgb, SceneNode};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSpec {
    pub width: u32,
    pub height: u32,
    pub background: Rgb,
    pub index: u64,
    /// Virtual seconds since playback started.
    #[serde(serialize_with = "crate::rational::serialize")]
    pub time: Rational,
}

impl FrameSpec {
    pub fn new(width: u32, height: u32) -> FrameSpec {
        FrameSpec {
            width: width.max(1),
            height: height.max(1),
            ..FrameSpec::default()
        }
    }

    pub fn viewport(&self) -> Affine {
        viewport(self.width, self.height)
    }

    /// Pixels per scene unit.
    pub fn pixel_scale(&self) -> f64 {
        f64::from(self.width.min(self.height)) / 2.0
    }
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            width: 1280,
            height: 800,
            background: Rgb(255, 255, 255),
            index: 0,
            time: Rational::from_integer(0),
        }
    }
}

/// Scene `[-1,1]²` → pixel canvas.
pub fn viewport(width: u32, height: u32) -> Affine {
    let s = f64::from(width.min(height)) / 2.0;
    Affine::translate(f64::from(width) / 2.0, f64::from(height) / 2.0).then_after(&Affine::scale(s))
}

/// `viewport ∘ translate(x,y) ∘ rotate(angle about center) ∘ scale(about center)`.
pub fn compose_matrix(attrs: &AttrSet, center: (f64, f64), viewport: &Affine) -> Affine {
    let (cx, cy) = center;
    let angle = attrs.angle.rem_euclid(360.0);
    [
        Affine::translate(attrs.x, attrs.y),
        Affine::translate(cx, cy),
        Affine::rotate_degrees(angle),
        Affine::scale(attrs.scale),
        Affine::translate(-cx, -cy),
    ]
    .iter()
    .fold(*viewport, |acc, m| acc.then_after(m))
}

/// Placement recovered from a composed matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposed {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    /// In `[0, 360)`.
    pub angle: f64,
}

/// Inverts [`compose_matrix`]; `None` if the viewport is singular.
pub fn decompose(matrix: &Affine, center: (f64, f64), viewport: &Affine) -> Option<Decomposed> {
    let local = viewport.inverse()?.then_after(matrix);
    let scale = local.a.hypot(local.b);
    let angle = local.b.atan2(local.a).to_degrees().rem_euclid(360.0);
    // translation = (x, y) + c − L·c
    let (lcx, lcy) = local.apply_vector(center);
    Some(Decomposed {
        x: local.e - center.0 + lcx,
        y: local.f - center.1 + lcy,
        scale,
        angle: if angle >= 360.0 { 0.0 } else { angle },
    })
}

/// The node's composed matrix, or `None` for cursors (drawn in their
/// target's frame).
pub fn node_matrix(node: &SceneNode, viewport: &Affine) -> Option<Affine> {
    let geometry = node.geometry()?;
    Some(compose_matrix(&node.attrs, geometry.glyphs.center(), viewport))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(x: f64, y: f64, scale: f64, angle: f64) -> AttrSet {
        AttrSet {
            x,
            y,
            scale,
            angle,
            ..AttrSet::default()
        }
    }

    const C: (f64, f64) = (0.5, 0.125);

    #[test]
    fn defaults_give_viewport() {
        let v = viewport(1280, 800);
        assert_eq!(compose_matrix(&AttrSet::default(), C, &v), v);
        assert_eq!(v.apply((-1.0, -1.0)), (240.0, 0.0));
        assert_eq!(v.apply((1.0, 1.0)), (1040.0, 800.0));
    }

    #[test]
    fn full_turn_is_identity() {
        let v = viewport(1280, 800);
        let m = compose_matrix(&attrs(0.0, 0.0, 1.0, 360.0), C, &v);
        assert!(m.max_abs_diff(&v) < 1e-9);
    }

    #[test]
    fn scaling_keeps_center() {
        let v = viewport(1280, 800);
        let plain = compose_matrix(&AttrSet::default(), C, &v);
        let doubled = compose_matrix(&attrs(0.0, 0.0, 2.0, 0.0), C, &v);
        assert_eq!(plain.apply(C), doubled.apply(C));
        let width = |m: &Affine| m.apply((1.0, 0.0)).0 - m.apply((0.0, 0.0)).0;
        assert!((width(&doubled) - 2.0 * width(&plain)).abs() < 1e-9);
    }

    #[test]
    fn decompose_round_trips() {
        let v = viewport(640, 480);
        for (x, y, s, a) in [(0.1, -0.2, 1.5, 30.0), (0.0, 0.0, 0.5, 270.0), (-0.7, 0.3, 3.0, 725.0)] {
            let m = compose_matrix(&attrs(x, y, s, a), C, &v);
            let d = decompose(&m, C, &v).unwrap();
            assert!((d.x - x).abs() < 1e-9 && (d.y - y).abs() < 1e-9, "{d:?}");
            assert!((d.scale - s).abs() < 1e-9);
            assert!((d.angle - a.rem_euclid(360.0)).abs() < 1e-9);
        }
    }
}
