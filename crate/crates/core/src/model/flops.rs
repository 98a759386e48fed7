use std::fmt::Write as _;

use super::{Architecture, MatCenetConfig, XlcnetConfig};

/// Dimensions that determine the cost of one layer (per sample).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDims {
    Conv {
        nx: usize,
        ny: usize,
        kernel: usize,
        c_in: usize,
        c_out: usize,
    },
    /// Multi-head attention over `tokens` tokens of width `d_model`.
    Attention {
        tokens: usize,
        d_model: usize,
        d_head: usize,
        heads: usize,
    },
    Linear {
        rows: usize,
        z_in: usize,
        z_out: usize,
    },
    BatchNorm {
        elements: usize,
        channels: usize,
    },
    LayerNorm {
        elements: usize,
        width: usize,
    },
}

impl LayerDims {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerDims::Conv { .. } => "conv",
            LayerDims::Attention { .. } => "attention",
            LayerDims::Linear { .. } => "linear",
            LayerDims::BatchNorm { .. } => "batchnorm",
            LayerDims::LayerNorm { .. } => "layernorm",
        }
    }

    /// Stored values. Batch norm counts its running statistics too.
    pub fn params(&self) -> u64 {
        let p = match *self {
            LayerDims::Conv { kernel, c_in, c_out, .. } => kernel * kernel * c_in * c_out + c_out,
            LayerDims::Attention { d_model, .. } => 4 * d_model * d_model,
            LayerDims::Linear { z_in, z_out, .. } => z_in * z_out + z_out,
            LayerDims::BatchNorm { channels, .. } => 4 * channels,
            LayerDims::LayerNorm { width, .. } => 2 * width,
        };
        p as u64
    }

    /// Multiply-accumulates for one sample.
    pub fn macs(&self) -> u64 {
        let m = match *self {
            LayerDims::Conv { nx, ny, kernel, c_in, c_out } => nx * ny * kernel * kernel * c_in * c_out,
            // Four projections, then Q·Kᵀ and P·V over all heads.
            LayerDims::Attention { tokens, d_model, d_head, heads } => {
                4 * tokens * d_model * d_model + 2 * heads * tokens * tokens * d_head
            }
            LayerDims::Linear { rows, z_in, z_out } => rows * z_in * z_out,
            LayerDims::BatchNorm { elements, .. } | LayerDims::LayerNorm { elements, .. } => elements,
        };
        m as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsEntry {
    pub name: String,
    pub dims: LayerDims,
    pub params: u64,
    pub macs: u64,
}

/// Per-layer parameter and operation counts. One multiply-add is two FLOPs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub architecture: String,
    pub entries: Vec<FlopsEntry>,
}

impl FlopsReport {
    fn push(&mut self, name: impl Into<String>, dims: LayerDims) {
        self.entries.push(FlopsEntry {
            name: name.into(),
            dims,
            params: dims.params(),
            macs: dims.macs(),
        });
    }

    pub fn total_params(&self) -> u64 {
        self.entries.iter().map(|e| e.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.entries.iter().map(|e| e.macs).sum()
    }

    pub fn total_flops(&self) -> u64 {
        2 * self.total_macs()
    }

    /// `layer,kind,params,macs,flops`, one row per layer plus a total row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,params,macs,flops\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{},{}", e.name, e.dims.kind(), e.params, e.macs, 2 * e.macs);
        }
        let _ = writeln!(
            s,
            "total,total,{},{},{}",
            self.total_params(),
            self.total_macs(),
            self.total_flops()
        );
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{}\nparams {} ({:.3}M)\nMACs {} ({:.1}M)\nFLOPs {} ({:.1}M, 2 per multiply-add)",
            self.architecture,
            self.total_params(),
            self.total_params() as f64 / 1e6,
            self.total_macs(),
            self.total_macs() as f64 / 1e6,
            self.total_flops(),
            self.total_flops() as f64 / 1e6,
        )
    }
}

fn conv_layer(r: &mut FlopsReport, name: &str, side: usize, c_in: usize, c_out: usize) {
    r.push(
        format!("{name}.conv"),
        LayerDims::Conv {
            nx: side,
            ny: side,
            kernel: 3,
            c_in,
            c_out,
        },
    );
    r.push(
        format!("{name}.bn"),
        LayerDims::BatchNorm {
            elements: side * side * c_out,
            channels: c_out,
        },
    );
}

fn matcenet(cfg: &MatCenetConfig, descriptor: String) -> FlopsReport {
    let mut r = FlopsReport {
        architecture: descriptor,
        entries: Vec::new(),
    };
    let (m, f, h) = (cfg.antennas, cfg.features, cfg.heads);
    let side = crate::channel::square_side(m).unwrap_or(0);
    for i in 0..MatCenetConfig::N_FRONT_CONV {
        conv_layer(&mut r, &format!("conv{}", i + 1), side, if i == 0 { 2 } else { f }, f);
    }
    for e in 1..=MatCenetConfig::N_ENCODERS {
        let p = format!("encoder{e}");
        r.push(
            format!("{p}.feature_attention"),
            LayerDims::Attention {
                tokens: f,
                d_model: m,
                d_head: m / h,
                heads: h,
            },
        );
        r.push(
            format!("{p}.spatial_attention"),
            LayerDims::Attention {
                tokens: m,
                d_model: f,
                d_head: f / h,
                heads: h,
            },
        );
        r.push(
            format!("{p}.fc1"),
            LayerDims::Linear {
                rows: m,
                z_in: f,
                z_out: cfg.ffn_hidden,
            },
        );
        r.push(
            format!("{p}.fc2"),
            LayerDims::Linear {
                rows: m,
                z_in: cfg.ffn_hidden,
                z_out: f,
            },
        );
        r.push(format!("{p}.norm"), LayerDims::LayerNorm { elements: m * f, width: f });
    }
    conv_layer(&mut r, "tail", side, f, 2);
    r
}

fn xlcnet(cfg: &XlcnetConfig, descriptor: String) -> FlopsReport {
    let mut r = FlopsReport {
        architecture: descriptor,
        entries: Vec::new(),
    };
    let f = cfg.features;
    let side = crate::channel::square_side(cfg.antennas).unwrap_or(0);
    for i in 0..XlcnetConfig::N_HIDDEN_CONV {
        conv_layer(&mut r, &format!("conv{}", i + 1), side, if i == 0 { 2 } else { f }, f);
    }
    conv_layer(&mut r, "tail", side, f, 2);
    r
}

/// Parameter and operation counts for one inference sample.
pub fn count_params_flops(arch: &Architecture) -> FlopsReport {
    match arch {
        Architecture::MatCenet(c) => matcenet(c, arch.descriptor()),
        Architecture::Xlcnet(c) => xlcnet(c, arch.descriptor()),
    }
}
