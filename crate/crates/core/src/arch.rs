//! Parameter counting and shape propagation for YOLO-style backbones.
//!
//! Conventions that reproduce the published per-layer counts exactly:
//! convolutions carry no bias, every normalized convolution adds 2
//! parameters per output channel (scale and shift), and a FasterBlock's
//! partial 3×3 convolution covers a quarter of its channels.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayerKind {
    /// Convolution + normalization + activation.
    ConvBlock { k: u64, stride: u64 },
    C2f { n: u64 },
    C2fFaster { n: u64 },
    Sppf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub c_in: u64,
    pub c_out: u64,
}

impl LayerSpec {
    pub fn conv(c_in: u64, c_out: u64, k: u64, stride: u64) -> Self {
        Self { kind: LayerKind::ConvBlock { k, stride }, c_in, c_out }
    }

    pub fn c2f(c_in: u64, c_out: u64, n: u64) -> Self {
        Self { kind: LayerKind::C2f { n }, c_in, c_out }
    }

    pub fn c2f_faster(c_in: u64, c_out: u64, n: u64) -> Self {
        Self { kind: LayerKind::C2fFaster { n }, c_in, c_out }
    }

    pub fn sppf(c_in: u64, c_out: u64) -> Self {
        Self { kind: LayerKind::Sppf, c_in, c_out }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("layer", format!("{self}: {reason}")));
        if self.c_in == 0 || self.c_out == 0 {
            return bad("channel counts must be positive".into());
        }
        match self.kind {
            LayerKind::ConvBlock { k, stride } if k == 0 || stride == 0 => {
                bad("kernel size and stride must be positive".into())
            }
            LayerKind::C2f { n } | LayerKind::C2fFaster { n } if n == 0 => bad("repeat count must be positive".into()),
            LayerKind::C2f { .. } if !self.c_out.is_multiple_of(2) => bad("c_out must be even".into()),
            LayerKind::C2fFaster { .. } if !self.c_out.is_multiple_of(8) => {
                bad("c_out must be divisible by 8 (partial conv covers a quarter of c_out/2)".into())
            }
            LayerKind::Sppf if !self.c_in.is_multiple_of(2) => bad("c_in must be even".into()),
            _ => Ok(()),
        }
    }

    pub fn module_name(&self) -> &'static str {
        match self.kind {
            LayerKind::ConvBlock { .. } => "Conv",
            LayerKind::C2f { .. } => "C2f",
            LayerKind::C2fFaster { .. } => "C2f_Faster",
            LayerKind::Sppf => "SPPF",
        }
    }

    pub fn stride(&self) -> u64 {
        match self.kind {
            LayerKind::ConvBlock { stride, .. } => stride,
            _ => 1,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.module_name(), self.c_in, self.c_out)?;
        match self.kind {
            LayerKind::ConvBlock { k, stride } => write!(f, " {k} {stride}"),
            LayerKind::C2f { n } | LayerKind::C2fFaster { n } => write!(f, " {n}"),
            LayerKind::Sppf => Ok(()),
        }
    }
}

fn conv_block(c_in: u64, c_out: u64, k: u64) -> u64 {
    c_in * c_out * k * k + 2 * c_out
}

/// Two 3×3 conv blocks at width `c`.
pub fn bottleneck_params(c: u64) -> u64 {
    2 * (c * c * 9 + 2 * c)
}

/// Partial 3×3 conv on `d/4` channels (no norm), 1×1 expand to `2d` with
/// norm, 1×1 project back to `d` without norm.
pub fn faster_block_params(d: u64) -> u64 {
    let p = d / 4;
    p * p * 9 + (d * 2 * d + 2 * (2 * d)) + 2 * d * d
}

pub fn param_count(layer: &LayerSpec) -> Result<u64> {
    layer.validate()?;
    let (c_in, c_out) = (layer.c_in, layer.c_out);
    Ok(match layer.kind {
        LayerKind::ConvBlock { k, .. } => conv_block(c_in, c_out, k),
        LayerKind::C2f { n } => {
            let c = c_out / 2;
            conv_block(c_in, 2 * c, 1) + conv_block((2 + n) * c, c_out, 1) + n * bottleneck_params(c)
        }
        LayerKind::C2fFaster { n } => {
            let c = c_out / 2;
            conv_block(c_in, 2 * c, 1) + conv_block((2 + n) * c, c_out, 1) + n * faster_block_params(c)
        }
        LayerKind::Sppf => conv_block(c_in, c_in / 2, 1) + conv_block(2 * c_in, c_out, 1),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BackboneSpec {
    layers: Vec<LayerSpec>,
}

impl BackboneSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("backbone", "no layers"));
        }
        for l in &layers {
            l.validate()?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].c_out != pair[1].c_in {
                return Err(Error::invalid(
                    "backbone",
                    format!(
                        "layer {} outputs {} channels but layer {} expects {}",
                        i,
                        pair[0].c_out,
                        i + 1,
                        pair[1].c_in
                    ),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "yolov8n" => include_str!("../data/yolov8n.backbone"),
            "air-yolo" => include_str!("../data/air-yolo.backbone"),
            other => return Err(Error::invalid("builtin backbone", format!("unknown '{other}' (yolov8n, air-yolo)"))),
        };
        Self::parse(text, Path::new(name))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Line format `kind c_in c_out [k stride | n]`; `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut layers = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let layer: LayerSpec = line.parse().map_err(|e: Error| Error::parse(path, no + 1, e.to_string()))?;
            layers.push(layer);
        }
        Self::new(layers).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize| -> Result<u64> {
            fields
                .get(i)
                .ok_or_else(|| Error::invalid("layer line", format!("missing field {} in '{line}'", i + 1)))?
                .parse()
                .map_err(|_| Error::invalid("layer line", format!("field {} of '{line}' is not a positive integer", i + 1)))
        };
        let expect_len = |n: usize| -> Result<()> {
            if fields.len() != n {
                return Err(Error::invalid("layer line", format!("expected {n} fields in '{line}'")));
            }
            Ok(())
        };
        let kind = fields.first().copied().unwrap_or_default();
        let layer = match kind.to_ascii_lowercase().as_str() {
            "conv" | "convblock" => {
                expect_len(5)?;
                LayerSpec::conv(num(1)?, num(2)?, num(3)?, num(4)?)
            }
            "c2f" => {
                expect_len(4)?;
                LayerSpec::c2f(num(1)?, num(2)?, num(3)?)
            }
            "c2f_faster" | "c2ffaster" => {
                expect_len(4)?;
                LayerSpec::c2f_faster(num(1)?, num(2)?, num(3)?)
            }
            "sppf" => {
                expect_len(3)?;
                LayerSpec::sppf(num(1)?, num(2)?)
            }
            _ => return Err(Error::invalid("layer line", format!("unknown module '{kind}'"))),
        };
        layer.validate()?;
        Ok(layer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SummaryRow {
    pub index: usize,
    pub module: &'static str,
    pub c_in: u64,
    pub c_out: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BackboneSummary {
    pub rows: Vec<SummaryRow>,
    pub total: u64,
}

pub fn backbone_summary(spec: &BackboneSpec) -> BackboneSummary {
    let rows: Vec<SummaryRow> = spec
        .layers
        .iter()
        .enumerate()
        .map(|(index, l)| SummaryRow {
            index,
            module: l.module_name(),
            c_in: l.c_in,
            c_out: l.c_out,
            params: param_count(l).expect("validated on construction"),
        })
        .collect();
    let total = rows.iter().map(|r| r.params).sum();
    BackboneSummary { rows, total }
}

/// `1 - candidate / baseline` in parameters.
pub fn reduction(baseline: &BackboneSummary, candidate: &BackboneSummary) -> f64 {
    1.0 - candidate.total as f64 / baseline.total as f64
}

impl BackboneSummary {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| NO. | Module | Input | Output | Params |\n|---:|---|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(out, "| {} | {} | {} | {} | {} |", r.index, r.module, r.c_in, r.c_out, r.params);
        }
        let _ = writeln!(out, "| Sum | | | | {} |", self.total);
        out
    }
}

/// Two backbones side by side, row by row, followed by the reduction line.
pub fn comparison_markdown(base_name: &str, base: &BackboneSummary, other_name: &str, other: &BackboneSummary) -> String {
    let mut out = format!(
        "| NO. | Module ({base_name}) | Input | Output | Params | Module ({other_name}) | Input | Output | Params |\n\
         |---:|---|---:|---:|---:|---|---:|---:|---:|\n"
    );
    let n = base.rows.len().max(other.rows.len());
    for i in 0..n {
        let cell = |r: Option<&SummaryRow>| match r {
            Some(r) => format!("{} | {} | {} | {}", r.module, r.c_in, r.c_out, r.params),
            None => " | | | ".to_string(),
        };
        let _ = writeln!(out, "| {i} | {} | {} |", cell(base.rows.get(i)), cell(other.rows.get(i)));
    }
    let _ = writeln!(out, "| Sum | | | | {} | | | | {} |", base.total, other.total);
    let _ = writeln!(out, "\nReduction: {:.2}%", 100.0 * reduction(base, other));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TensorShape {
    pub h: u64,
    pub w: u64,
    pub c: u64,
}

/// Output shape after every layer. Strided convolutions use same-padding,
/// so each spatial dimension must divide evenly at every stride.
pub fn shape_propagate(input: TensorShape, spec: &BackboneSpec) -> Result<Vec<TensorShape>> {
    if input.c != spec.layers[0].c_in {
        return Err(Error::invalid(
            "input shape",
            format!("{} channels given, first layer expects {}", input.c, spec.layers[0].c_in),
        ));
    }
    let total_stride: u64 = spec.layers.iter().map(LayerSpec::stride).product();
    if !input.h.is_multiple_of(total_stride) || !input.w.is_multiple_of(total_stride) {
        return Err(Error::invalid(
            "input shape",
            format!("{}x{} is not divisible by the total stride {total_stride}", input.h, input.w),
        ));
    }
    let mut cur = input;
    let mut out = Vec::with_capacity(spec.layers.len());
    for l in &spec.layers {
        let s = l.stride();
        cur = TensorShape { h: cur.h / s, w: cur.w / s, c: l.c_out };
        out.push(cur);
    }
    Ok(out)
}
