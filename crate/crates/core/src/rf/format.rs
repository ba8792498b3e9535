//! The `URF1` binary forest format.
//!
//! ```text
//! "URF1"  version:u16  n_classes:u16  n_features:u16  n_roots:u16
//! n_nodes:u32  n_leaves:u32
//! roots:   n_roots x u16
//! nodes:   n_nodes x (feature_index:i16 threshold:i8 right_child:u16)
//! leaves:  n_leaves x n_classes x u8
//! quant:   n_features x (scale:f32 zero:f32)
//! ```
//!
//! Little-endian throughout.

use std::path::Path;

use super::{FeatureQuantizer, Forest, RfNode};
use crate::model::format::{u16_field, FormatError, Reader};

pub const MAGIC: [u8; 4] = *b"URF1";
pub const VERSION: u16 = 1;

pub fn to_bytes(forest: &Forest) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u16_field("n_classes", forest.n_classes())?.to_le_bytes());
    out.extend_from_slice(&u16_field("n_features", forest.n_features())?.to_le_bytes());
    out.extend_from_slice(&u16_field("n_roots", forest.roots().len())?.to_le_bytes());
    out.extend_from_slice(&(forest.nodes().len() as u32).to_le_bytes());
    out.extend_from_slice(&(forest.n_leaves() as u32).to_le_bytes());
    for r in forest.roots() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for n in forest.nodes() {
        out.extend_from_slice(&n.feature_index.to_le_bytes());
        out.push(n.threshold as u8);
        out.extend_from_slice(&n.right_child.to_le_bytes());
    }
    for i in 0..forest.n_leaves() {
        out.extend_from_slice(forest.leaf(i));
    }
    let q = forest.quantizer();
    for (s, z) in q.scale.iter().zip(&q.zero) {
        out.extend_from_slice(&s.to_le_bytes());
        out.extend_from_slice(&z.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Forest, FormatError> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let n_classes = r.u16()? as usize;
    let n_features = r.u16()? as usize;
    let n_roots = r.u16()? as usize;
    let n_nodes = r.u32()? as usize;
    let n_leaves = r.u32()? as usize;
    if n_classes == 0 {
        return Err(super::RfError::Empty.into());
    }

    r.expect(n_roots, 2)?;
    let roots = (0..n_roots).map(|_| r.u16()).collect::<Result<Vec<_>, _>>()?;
    r.expect(n_nodes, 5)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        nodes.push(RfNode {
            feature_index: r.i16()?,
            threshold: r.i8()?,
            right_child: r.u16()?,
        });
    }
    r.expect(n_leaves, n_classes)?;
    let mut leaves = Vec::with_capacity(n_leaves);
    for _ in 0..n_leaves {
        leaves.push(r.take(n_classes)?.to_vec());
    }
    r.expect(n_features, 8)?;
    let mut scale = Vec::with_capacity(n_features);
    let mut zero = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        scale.push(r.f32()?);
        zero.push(r.f32()?);
    }
    if r.remaining() > 0 {
        return Err(FormatError::TrailingBytes(r.remaining()));
    }
    let quantizer = FeatureQuantizer::new(scale, zero)?;
    Ok(Forest::new(n_classes, n_features, nodes, leaves, roots, quantizer)?)
}

pub fn save(forest: &Forest, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, to_bytes(forest)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Forest, FormatError> {
    from_bytes(&std::fs::read(path)?)
}
