//! Multiply-accumulate accounting.

use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};
use crate::model_zoo::{FeatureShape, LayerKind, NetworkSpec};

/// Counting convention recorded in every report.
pub const MACS_CONVENTION: &str = "one multiply-add = 1 MAC; conv and transposed conv: \
out_h*out_w*out_c*in_c*k^2; linear: in*out; bias, batch-norm, activation, upsample and \
skip additions excluded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMacs {
    pub index: usize,
    pub kind: LayerKind,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacsReport {
    pub network: String,
    pub per_layer: Vec<LayerMacs>,
    pub total: u64,
    pub input_shape: Vec<usize>,
    pub convention: String,
}

impl MacsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,kind,macs\n");
        for l in &self.per_layer {
            out.push_str(&format!("{},{:?},{}\n", l.index, l.kind, l.macs));
        }
        out.push_str(&format!("total,,{}\n", self.total));
        out
    }
}

/// MACs of `spec` evaluated on a per-sample input of `input_shape`.
pub fn macs(spec: &NetworkSpec, input_shape: &[usize]) -> Result<MacsReport> {
    let input = FeatureShape::from_dims(input_shape)
        .ok_or_else(|| GccError::Shape(format!("input shape {input_shape:?} must have 1 or 3 dims")))?;
    let shapes = spec.shapes_from(input)?;
    let mut per_layer = Vec::new();
    for (i, (layer, shape)) in spec.layers.iter().zip(&shapes).enumerate() {
        let m = match layer.kind {
            LayerKind::Conv | LayerKind::TransposedConv => {
                let k = layer.kernel_size as u64;
                // Output spatial size excludes any concatenated skip channels.
                let spatial = shape.output.spatial() as u64;
                spatial * layer.out_channels as u64 * layer.in_channels as u64 * k * k
            }
            LayerKind::Linear => layer.in_channels as u64 * layer.out_channels as u64,
            LayerKind::BatchNorm | LayerKind::Activation | LayerKind::Upsample => continue,
        };
        per_layer.push(LayerMacs {
            index: i,
            kind: layer.kind,
            macs: m,
        });
    }
    Ok(MacsReport {
        network: spec.name.clone(),
        total: per_layer.iter().map(|l| l.macs).sum(),
        per_layer,
        input_shape: input_shape.to_vec(),
        convention: MACS_CONVENTION.to_string(),
    })
}

/// MACs at the spec's declared input shape.
pub fn spec_macs(spec: &NetworkSpec) -> Result<u64> {
    Ok(macs(spec, &spec.input_shape)?.total)
}

/// Percentage of MACs removed: `(1 - compressed/original) * 100`.
pub fn compression_ratio(original: &MacsReport, compressed: &MacsReport) -> Result<f64> {
    compression_ratio_of(original.total as f64, compressed.total as f64)
}

pub fn compression_ratio_of(original: f64, compressed: f64) -> Result<f64> {
    if original <= 0.0 {
        return Err(GccError::InvalidInput("original MACs must be positive".into()));
    }
    Ok((1.0 - compressed / original) * 100.0)
}
