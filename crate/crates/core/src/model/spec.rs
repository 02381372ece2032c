use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::NUM_BINS;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "cnn-fc")]
    CnnFc,
    #[serde(rename = "cnn-lstm")]
    CnnLstm,
    #[serde(rename = "grucnn-fc")]
    GruCnnFc,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Self::CnnFc, Self::CnnLstm, Self::GruCnnFc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CnnFc => "cnn-fc",
            Self::CnnLstm => "cnn-lstm",
            Self::GruCnnFc => "grucnn-fc",
        }
    }

    /// Display name used in reports.
    pub fn model_name(self) -> &'static str {
        match self {
            Self::CnnFc => "CNN_FC-SE",
            Self::CnnLstm => "CNN_LSTM-SE",
            Self::GruCnnFc => "gruCNN_FC-SE",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown architecture {s:?} (expected cnn-fc, cnn-lstm or grucnn-fc)"
                ))
            })
    }
}

/// One row of the layer stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// 3x3 causal convolution followed by PReLU.
    Conv {
        in_channels: usize,
        out_channels: usize,
    },
    /// Recurrent convolutional cell, width 3 along frequency.
    GruCnn { in_channels: usize, channels: usize },
    /// 2x1 max pooling along frequency.
    MaxPool,
    /// Fully connected LSTM over the flattened per-frame map, then a dense
    /// projection to the output bins.
    LstmHead {
        inputs: usize,
        hidden: usize,
        outputs: usize,
    },
    /// Time-distributed dense projection to the output bins.
    DenseHead { inputs: usize, outputs: usize },
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Conv { .. } => "[3x3] CNN",
            Self::GruCnn { .. } => "[3x3] gruCNN",
            Self::MaxPool => "[2x1] Maxpool",
            Self::LstmHead { .. } => "LSTM + FC",
            Self::DenseHead { .. } => "FC",
        }
    }
}

/// Declarative model description. `ModelSpec::table1` gives the full-size
/// stacks; the other fields shrink them for desk-scale runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_bins: usize,
    pub channels: usize,
    pub conv_layers: usize,
    pub lstm_hidden: usize,
}

pub const FULL_CHANNELS: usize = 256;
pub const FULL_CONV_LAYERS: usize = 6;
pub const FULL_LSTM_HIDDEN: usize = 1024;

impl ModelSpec {
    pub fn table1(architecture: Architecture) -> Self {
        Self {
            architecture,
            input_bins: NUM_BINS,
            channels: FULL_CHANNELS,
            conv_layers: FULL_CONV_LAYERS,
            lstm_hidden: FULL_LSTM_HIDDEN,
        }
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn with_conv_layers(mut self, n: usize) -> Self {
        self.conv_layers = n;
        self
    }

    pub fn with_lstm_hidden(mut self, hidden: usize) -> Self {
        self.lstm_hidden = hidden;
        self
    }

    pub fn with_input_bins(mut self, bins: usize) -> Self {
        self.input_bins = bins;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidArgument(format!(
                "model spec: {what} must be >= 1"
            )))
        };
        if self.input_bins == 0 {
            return bad("input_bins");
        }
        if self.channels == 0 {
            return bad("channels");
        }
        if self.conv_layers == 0 {
            return bad("conv_layers");
        }
        if self.architecture == Architecture::CnnLstm && self.lstm_hidden == 0 {
            return bad("lstm_hidden");
        }
        Ok(())
    }

    /// Layer stack in row order. Convolutions come in pairs with a pool after
    /// each pair except the last.
    pub fn layers(&self) -> Vec<LayerKind> {
        let mut layers = Vec::new();
        let mut in_ch = 1;
        let mut bins = self.input_bins;
        for i in 0..self.conv_layers {
            layers.push(match self.architecture {
                Architecture::GruCnnFc => LayerKind::GruCnn {
                    in_channels: in_ch,
                    channels: self.channels,
                },
                _ => LayerKind::Conv {
                    in_channels: in_ch,
                    out_channels: self.channels,
                },
            });
            in_ch = self.channels;
            if i % 2 == 1 && i + 1 < self.conv_layers {
                layers.push(LayerKind::MaxPool);
                bins = bins.div_ceil(2);
            }
        }
        let flat = bins * self.channels;
        layers.push(match self.architecture {
            Architecture::CnnLstm => LayerKind::LstmHead {
                inputs: flat,
                hidden: self.lstm_hidden,
                outputs: self.input_bins,
            },
            _ => LayerKind::DenseHead {
                inputs: flat,
                outputs: self.input_bins,
            },
        });
        layers
    }

    /// Frequency extent after every row.
    pub fn bins_after_each_layer(&self) -> Vec<usize> {
        let mut bins = self.input_bins;
        self.layers()
            .iter()
            .map(|l| {
                match l {
                    LayerKind::MaxPool => bins = bins.div_ceil(2),
                    LayerKind::LstmHead { outputs, .. } | LayerKind::DenseHead { outputs, .. } => {
                        return *outputs
                    }
                    _ => {}
                }
                bins
            })
            .collect()
    }

    /// Every trainable tensor as `(name, shape)`, in canonical order. Row
    /// numbers in names are 1-based and count pooling rows.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers().iter().enumerate() {
            let row = i + 1;
            let p = |n: &str| format!("layer{row}.{n}");
            match *layer {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                } => {
                    out.push((p("kernel"), vec![3, 3, in_channels, out_channels]));
                    out.push((p("bias"), vec![out_channels]));
                    out.push((p("prelu"), vec![out_channels]));
                }
                LayerKind::GruCnn {
                    in_channels,
                    channels,
                } => {
                    for gate in ["z", "r", "h"] {
                        out.push((p(&format!("w_{gate}h")), vec![3, channels, channels]));
                        out.push((p(&format!("w_{gate}x")), vec![3, in_channels, channels]));
                        out.push((p(&format!("b_{gate}")), vec![channels]));
                    }
                }
                LayerKind::MaxPool => {}
                LayerKind::LstmHead {
                    inputs,
                    hidden,
                    outputs,
                } => {
                    for gate in ["i", "f", "g", "o"] {
                        out.push((p(&format!("lstm.w_{gate}")), vec![inputs, hidden]));
                        out.push((p(&format!("lstm.u_{gate}")), vec![hidden, hidden]));
                        out.push((p(&format!("lstm.b_{gate}")), vec![hidden]));
                    }
                    out.push((p("fc.weight"), vec![hidden, outputs]));
                    out.push((p("fc.bias"), vec![outputs]));
                }
                LayerKind::DenseHead { inputs, outputs } => {
                    out.push((p("fc.weight"), vec![inputs, outputs]));
                    out.push((p("fc.bias"), vec![outputs]));
                }
            }
        }
        out
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(json).into()
    }
}

/// Parameter totals for one row of the stack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamRow {
    pub row: usize,
    pub label: &'static str,
    pub weights: usize,
    pub biases: usize,
    pub prelu: usize,
}

impl ParamRow {
    pub fn total(&self) -> usize {
        self.weights + self.biases + self.prelu
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamReport {
    pub spec: ModelSpec,
    pub rows: Vec<ParamRow>,
}

/// Published full-size totals, kept for the informational comparison.
pub fn reference_total(arch: Architecture) -> f64 {
    match arch {
        Architecture::CnnFc => 11.13e6,
        Architecture::CnnLstm => 36.10e6,
        Architecture::GruCnnFc => 27.22e6,
    }
}

impl ParamReport {
    pub fn total(&self) -> usize {
        self.rows.iter().map(ParamRow::total).sum()
    }

    /// Plain-text table, one line per row plus the total. Full-size stacks
    /// also get the comparison with the published count.
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} (channels={}, conv_layers={}, lstm_hidden={})\n",
            self.spec.architecture.model_name(),
            self.spec.channels,
            self.spec.conv_layers,
            self.spec.lstm_hidden
        );
        s.push_str(&format!(
            "{:>4}  {:<14} {:>12} {:>8} {:>8} {:>12}\n",
            "row", "layer", "weights", "biases", "prelu", "total"
        ));
        for r in &self.rows {
            s.push_str(&format!(
                "{:>4}  {:<14} {:>12} {:>8} {:>8} {:>12}\n",
                r.row,
                r.label,
                r.weights,
                r.biases,
                r.prelu,
                r.total()
            ));
        }
        let total = self.total();
        s.push_str(&format!("total {total} ({:.2}M)\n", total as f64 / 1e6));
        let full = ModelSpec::table1(self.spec.architecture);
        if self.spec == full {
            let reference = reference_total(self.spec.architecture);
            s.push_str(&format!(
                "published {:.2}M, difference {:+.2}M (counting convention differs; informational)\n",
                reference / 1e6,
                (total as f64 - reference) / 1e6
            ));
        }
        s
    }
}

/// Counts scalar parameters row by row from the tensor shapes the model
/// allocates.
pub fn count_params(spec: &ModelSpec) -> ParamReport {
    let layers = spec.layers();
    let mut rows: Vec<ParamRow> = layers
        .iter()
        .enumerate()
        .map(|(i, l)| ParamRow {
            row: i + 1,
            label: l.label(),
            weights: 0,
            biases: 0,
            prelu: 0,
        })
        .collect();
    for (name, shape) in spec.param_shapes() {
        let row: usize = name["layer".len()..name.find('.').unwrap()]
            .parse()
            .unwrap();
        let n: usize = shape.iter().product();
        let entry = &mut rows[row - 1];
        let leaf = name.rsplit('.').next().unwrap();
        if leaf == "prelu" {
            entry.prelu += n;
        } else if shape.len() == 1 {
            entry.biases += n;
        } else {
            entry.weights += n;
        }
    }
    ParamReport {
        spec: spec.clone(),
        rows,
    }
}
