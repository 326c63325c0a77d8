//! Shared LSTM + embedding network with target and GPSR heads.

mod checkpoint;
mod loss;
mod network;
mod params;

pub use checkpoint::Checkpoint;
pub use loss::{combined_loss, gpsr_loss, target_loss, PROB_FLOOR};
pub use network::{
    backward_sequence, embed_state, forward_sequence, lstm_step, predict_gpsr, predict_target, score_sequence, LstmState, Mode,
    SequenceForward, StepOutput,
};
pub use params::{
    build_architecture, ArchitectureConfig, ArchitectureKind, Block, BlockGroup, GpsrHead, GpsrOutput, Linear, LstmParams, ModelParams,
    TargetHead, TaskLayout,
};
