//! Dense feedforward network, Adam, plateau schedule, and gradient checking.

mod adam;
mod checkpoint;
mod gradcheck;
mod mlp;
mod plateau;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, LayerRecord, ACTIVATION, CHECKPOINT_VERSION};
pub use gradcheck::{
    compare_gradients, finite_diff_check, relative_error, FD_STEP, FULL_CHECK_LIMIT,
};
pub use mlp::{validate_dims, Dense, ForwardTrace, Gradients, MlpNetwork};
pub use plateau::PlateauSchedule;
pub use tensor::Tensor;
