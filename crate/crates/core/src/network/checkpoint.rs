//! Binary checkpoint format.
//!
//! Layout: the magic string `AANET1\n`, a big-endian u32 entry count, then
//! per entry a big-endian u32 name length, the UTF-8 name, a u32 rank, the
//! dims as u32s, and the values as raw big-endian 64-bit floats. Entries
//! cover every trainable parameter plus the batch-norm running statistics,
//! so a reloaded network evaluates identically.

use std::io::{Read, Write};

use super::{LayerGraph, NodeKind};
use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"AANET1\n";

struct Entry {
    name: String,
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn collect_entries<S: Scalar>(graph: &LayerGraph<S>) -> Vec<Entry> {
    let mut entries: Vec<Entry> = graph
        .params()
        .iter()
        .map(|p| Entry {
            name: p.name.clone(),
            dims: p.dims.clone(),
            values: p.data.iter().map(|&v| to_f64(v)).collect(),
        })
        .collect();
    for node in graph.nodes() {
        if let NodeKind::BatchNorm { state, .. } = node.kind {
            let st = &graph.bn_states()[state];
            entries.push(Entry {
                name: format!("{}.running_mean", node.name),
                dims: vec![st.mean.len()],
                values: st.mean.iter().map(|&v| to_f64(v)).collect(),
            });
            entries.push(Entry {
                name: format!("{}.running_var", node.name),
                dims: vec![st.var.len()],
                values: st.var.iter().map(|&v| to_f64(v)).collect(),
            });
        }
    }
    entries
}

/// Writes the network's parameters and running statistics.
pub fn save_checkpoint<S: Scalar, W: Write>(graph: &LayerGraph<S>, mut w: W) -> Result<()> {
    let entries = collect_entries(graph);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(entries.len() as u32).to_be_bytes())?;
    for e in &entries {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_be_bytes())?;
        w.write_all(name)?;
        w.write_all(&(e.dims.len() as u32).to_be_bytes())?;
        for &d in &e.dims {
            w.write_all(&(d as u32).to_be_bytes())?;
        }
        for &v in &e.values {
            w.write_all(&v.to_be_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Data("checkpoint truncated".into()))?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads a checkpoint into a network built from the same architecture and
/// placement. Every entry must match an existing parameter or running
/// statistic by name and dims.
pub fn load_checkpoint<S: Scalar, R: Read>(graph: &mut LayerGraph<S>, mut r: R) -> Result<()> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Data("checkpoint too short for magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Data("bad checkpoint magic".into()));
    }
    let count = read_u32(&mut r)? as usize;
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)
            .map_err(|_| Error::Data("checkpoint truncated in name".into()))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Data("checkpoint entry name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut r)? as usize);
        }
        let len: usize = dims.iter().product();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Data("checkpoint truncated in values".into()))?;
            values.push(f64::from_be_bytes(buf));
        }
        store_entry(graph, &name, &dims, &values)?;
    }
    Ok(())
}

fn store_entry<S: Scalar>(
    graph: &mut LayerGraph<S>,
    name: &str,
    dims: &[usize],
    values: &[f64],
) -> Result<()> {
    if let Some(idx) = graph.params().iter().position(|p| p.name == name) {
        let p = &mut graph.params_mut()[idx];
        if p.dims != dims {
            return Err(Error::Data(format!(
                "checkpoint entry {name} has dims {dims:?}, expected {:?}",
                p.dims
            )));
        }
        p.data = values.iter().map(|&v| cast(v)).collect();
        return Ok(());
    }
    // Running statistics live beside the parameters.
    for which in ["running_mean", "running_var"] {
        let Some(base) = name.strip_suffix(&format!(".{which}")) else {
            continue;
        };
        let state = graph
            .nodes()
            .iter()
            .find_map(|n| match n.kind {
                NodeKind::BatchNorm { state, .. } if n.name == base => Some(state),
                _ => None,
            })
            .ok_or_else(|| Error::Data(format!("checkpoint entry {name} matches no layer")))?;
        let st = &mut graph.bn_states_mut()[state];
        let dst = if which == "running_mean" {
            &mut st.mean
        } else {
            &mut st.var
        };
        if dims != [dst.len()] {
            return Err(Error::Data(format!(
                "checkpoint entry {name} has dims {dims:?}, expected [{}]",
                dst.len()
            )));
        }
        *dst = values.iter().map(|&v| cast(v)).collect();
        return Ok(());
    }
    Err(Error::Data(format!(
        "checkpoint entry {name} matches no parameter"
    )))
}
