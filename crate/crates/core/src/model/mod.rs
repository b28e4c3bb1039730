//! Network definition: backbone, recurrent head, classifier and their
//! parameter and cost accounting.

mod accounting;
mod config;
mod head;
mod net;

pub use accounting::{count_flops, count_params, FlopBreakdown};
pub use config::{Axis, BackboneConfig, ModelVariant, NetConfig, VariantKind};
pub use head::{
    classify, embed_fragment, gru_step, run_head, segment_fragments, GruVars, LOCAL_HEIGHT, LOCAL_WIDTH,
    N_FRAGMENTS,
};
pub use net::{stack_images, Mode, NetOutput, Param, Pass, WriterNet, CLASSIFIER_INIT_STD};
