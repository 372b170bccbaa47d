//! Dense feed-forward networks, backpropagation through masked layers, and
//! the SGD loop in which cached gradients drive the next iteration's masks.

mod backward;
mod cache;
mod checkpoint;
mod forward;
mod gradcheck;
mod layer;
mod train;

pub use backward::{backward, sgd_step, Gradients, LayerGradient};
pub use cache::{CacheMode, GradientCache, EMA_DECAY};
pub use checkpoint::{from_json, load_checkpoint, save_checkpoint, to_json, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{
    forward_train, forward_with_masks, infer_with_policy, LayerMask, LayerRecord, MaskScope, MaskState, MaskStats, Trace,
    MAX_RESAMPLES,
};
pub use gradcheck::{check_gradients, relative_error, GradCheck};
pub use layer::{Activation, DenseLayer, Loss, Network};
pub use train::{train, train_observed, Dataset, EpochRecord, EpochView, History, Snapshot, TrainConfig, TrainOutcome};
