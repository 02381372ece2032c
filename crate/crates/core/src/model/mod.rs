//! Layer stacks for the three enhancement models, parameter accounting and
//! checkpoints.

mod cells;
mod checkpoint;
mod network;
mod params;
mod spec;

pub use cells::{
    grucnn_step, lstm_step, GruCnnParams, GruCnnState, GruCnnStep, LstmParams, LstmState,
};
pub use checkpoint::{Checkpoint, OptimizerMoments, RngState, FORMAT_VERSION, MAGIC};
pub use network::{Forward, LayerTrace, Model, FORGET_BIAS_INIT, PRELU_INIT};
pub use params::{glorot_uniform, BoundParams, ParamStore};
pub use spec::{
    count_params, reference_total, Architecture, LayerKind, ModelSpec, ParamReport, ParamRow,
    FULL_CHANNELS, FULL_CONV_LAYERS, FULL_LSTM_HIDDEN,
};
