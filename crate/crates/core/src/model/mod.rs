//! CSTN: local spatial context, temporal evolution context and global
//! correlation context, plus the multi-interval L-CSTN decoder.

mod config;
mod network;

pub use config::{CstnConfig, SPATIAL_KERNEL};
pub use network::{
    convlstm_step, cstn_graph, gcc_forward, lcstn_graph, lsc_forward, meteo_embed_fuse, predict_head, tec_forward,
    CstnNodes, Cstn, Ctx, FeatureTrace, GlobalFeatures, LocalFeatures, LstmState, StepFeatures, TemporalFeatures,
};

#[cfg(test)]
mod tests;
