use std::collections::{BTreeMap, HashSet};

use serde_json::{json, Map, Value};

use super::{node_matrix, FrameSpec};
use crate::rational;
use crate::scene::SceneSnapshot;

/// Builds the viewer's scene-state documents.
///
/// Each document is a complete scene: transport, one entry per node with
/// its attributes, composed matrix, geometry hash and cursor placement,
/// plus a `geometry` map from hash to glyph set. Transports that keep a
/// per-client cache pass documents through [`strip_known_geometry`].
#[derive(Debug, Clone)]
pub struct StateFeed {
    canvas: FrameSpec,
    revision: u64,
}

impl StateFeed {
    pub fn new(canvas: FrameSpec) -> StateFeed {
        StateFeed { canvas, revision: 0 }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Next document; the revision increases by one per call.
    pub fn document(&mut self, snapshot: &SceneSnapshot) -> Value {
        self.revision += 1;
        let viewport = self.canvas.viewport();
        let mut geometry = BTreeMap::new();
        let nodes: Vec<Value> = snapshot
            .nodes()
            .map(|node| {
                let mut entry = json!({
                    "address": node.address,
                    "kind": node.kind(),
                    "attrs": node.attrs,
                    "matrix": node_matrix(node, &viewport).map(|m| m.to_array()),
                    "geometry": node.geometry().map(|g| g.hash.clone()),
                });
                if let Some(g) = node.geometry() {
                    geometry
                        .entry(g.hash.clone())
                        .or_insert_with(|| serde_json::to_value(&*g.glyphs).expect("glyph sets serialize"));
                }
                if let Some(spec) = node.cursor() {
                    entry["cursor"] = json!({
                        "performer": spec.performer,
                        "target": spec.target,
                        "path_bend": spec.path_bend,
                        "date": rational::format(&snapshot.transport().cursor_date(&node.address)),
                        "tempo": rational::format(&snapshot.transport().cursor_tempo(&node.address)),
                        "state": snapshot.cursor_state(node),
                    });
                }
                entry
            })
            .collect();
        let transport = snapshot.transport();
        json!({
            "revision": self.revision,
            "canvas": {
                "width": self.canvas.width,
                "height": self.canvas.height,
                "background": self.canvas.background,
                "viewport": viewport.to_array(),
            },
            "transport": {
                "running": transport.is_running(),
                "tempo": rational::format(&transport.tempo()),
                "date": rational::format(&transport.date()),
            },
            "nodes": nodes,
            "geometry": Value::Object(geometry.into_iter().collect::<Map<_, _>>()),
        })
    }
}

/// Drops geometry entries whose hash is in `known` and records the rest, so
/// each payload version travels once per client.
pub fn strip_known_geometry(document: &mut Value, known: &mut HashSet<String>) {
    if let Some(Value::Object(geometry)) = document.get_mut("geometry") {
        geometry.retain(|hash, _| known.insert(hash.clone()));
    }
}
