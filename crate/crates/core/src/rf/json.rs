//! Forest interchange JSON:
//!
//! ```json
//! {"format": "ubnn-forest", "version": 1, "n_classes": 2, "n_features": 21,
//!  "roots": [0], "nodes": [[3, -12, 2], [-1, 0, 0], [-1, 0, 1]],
//!  "leaves": [[200, 55], [10, 245]],
//!  "quantizer": {"scale": [...], "zero": [...]}}
//! ```
//!
//! Nodes are `[feature_index, threshold, right_child]` triples.

use serde::{Deserialize, Serialize};

use super::{FeatureQuantizer, Forest, RfError, RfNode};
use crate::model::json::{check_header, parse, JsonError, JSON_VERSION};

pub const FOREST_FORMAT: &str = "ubnn-forest";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantizerDoc {
    scale: Vec<f32>,
    zero: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestDoc {
    format: String,
    version: u32,
    n_classes: usize,
    n_features: usize,
    roots: Vec<u16>,
    nodes: Vec<(i16, i8, u16)>,
    leaves: Vec<Vec<u8>>,
    quantizer: QuantizerDoc,
}

pub fn to_json(forest: &Forest) -> String {
    let q = forest.quantizer();
    let doc = ForestDoc {
        format: FOREST_FORMAT.into(),
        version: JSON_VERSION,
        n_classes: forest.n_classes(),
        n_features: forest.n_features(),
        roots: forest.roots().to_vec(),
        nodes: forest.nodes().iter().map(|n| (n.feature_index, n.threshold, n.right_child)).collect(),
        leaves: (0..forest.n_leaves()).map(|i| forest.leaf(i).to_vec()).collect(),
        quantizer: QuantizerDoc {
            scale: q.scale.clone(),
            zero: q.zero.clone(),
        },
    };
    serde_json::to_string(&doc).expect("forest document serializes")
}

fn located(e: RfError) -> JsonError {
    let path = match &e {
        RfError::BadRoot { .. } => "roots".to_string(),
        RfError::BadFeature { node, .. } | RfError::BadChild { node, .. } | RfError::BadLeaf { node, .. } | RfError::LeafThreshold { node } => {
            format!("nodes[{node}]")
        }
        RfError::LeafWidth { leaf, .. } | RfError::LeafSum { leaf, .. } => format!("leaves[{leaf}]"),
        RfError::BadScale { feature } => format!("quantizer.scale[{feature}]"),
        RfError::QuantizerWidth { .. } => "quantizer".to_string(),
        _ => String::new(),
    };
    JsonError::at(path, e)
}

pub fn from_json(text: &str) -> Result<Forest, JsonError> {
    let doc: ForestDoc = parse(text)?;
    check_header(&doc.format, doc.version, FOREST_FORMAT)?;
    let quantizer = FeatureQuantizer::new(doc.quantizer.scale, doc.quantizer.zero).map_err(located)?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(|(feature_index, threshold, right_child)| RfNode {
            feature_index,
            threshold,
            right_child,
        })
        .collect();
    Forest::new(doc.n_classes, doc.n_features, nodes, doc.leaves, doc.roots, quantizer).map_err(located)
}
