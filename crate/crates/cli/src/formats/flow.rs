//! Binary flow files: magic `MFL1`, width and height as little-endian u32,
//! then row-major `(du, dv)` pairs of little-endian f32. One file carries the
//! backward flow of one frame (mapping frame `t` pixels to frame `t-1`).

use std::path::Path;

use trackmine_core::FlowField;

use super::{read_bytes, write_atomic, FormatError};

/// Leading magic bytes of a flow file.
pub const FLOW_MAGIC: [u8; 4] = *b"MFL1";

/// Canonical file name of the flow targeting frame `t`.
pub fn flow_file_name(t: usize) -> String {
    format!("flow_{t:06}.mfl")
}

/// Loads one flow field, rejecting bad magic and truncated or oversized
/// payloads.
pub fn load_flow(path: &Path) -> Result<FlowField, FormatError> {
    let bytes = read_bytes(path)?;
    if bytes.len() < 12 {
        return Err(FormatError::invalid(path, "truncated header"));
    }
    if bytes[0..4] != FLOW_MAGIC {
        return Err(FormatError::invalid(path, "bad magic (expected MFL1)"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = 12 + (width as usize) * (height as usize) * 8;
    if bytes.len() != expected {
        return Err(FormatError::invalid(
            path,
            format!(
                "payload is {} bytes, expected {} for {}x{}",
                bytes.len() - 12,
                expected - 12,
                width,
                height
            ),
        ));
    }
    let vectors: Vec<[f32; 2]> = bytes[12..]
        .chunks_exact(8)
        .map(|pair| {
            [
                f32::from_le_bytes(pair[0..4].try_into().unwrap()),
                f32::from_le_bytes(pair[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    FlowField::new(height, width, vectors).map_err(|e| FormatError::invalid(path, e.to_string()))
}

/// Writes one flow field in the binary layout.
pub fn write_flow(flow: &FlowField, path: &Path) -> Result<(), FormatError> {
    let mut bytes = Vec::with_capacity(12 + flow.vectors().len() * 8);
    bytes.extend_from_slice(&FLOW_MAGIC);
    bytes.extend_from_slice(&flow.width().to_le_bytes());
    bytes.extend_from_slice(&flow.height().to_le_bytes());
    for [du, dv] in flow.vectors() {
        bytes.extend_from_slice(&du.to_le_bytes());
        bytes.extend_from_slice(&dv.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Loads the flows of a `frame_count`-frame sequence from a directory laid
/// out as `flow_000001.mfl .. flow_{T-1}.mfl`.
pub fn load_flow_dir(dir: &Path, frame_count: usize) -> Result<Vec<FlowField>, FormatError> {
    let mut flows = Vec::new();
    for t in 1..frame_count {
        flows.push(load_flow(&dir.join(flow_file_name(t)))?);
    }
    Ok(flows)
}
