//! Layered classifiers, their training loop and on-disk format.

mod io;
mod model;
mod train;

pub use io::{decode_model, encode_model, load_model, save_model, MAGIC};
pub use model::{Architecture, ForwardTrace, MlpSpec, NetworkModel, TransformerSpec};
pub use train::{
    loss_and_gradients, train, train_early_stopping, train_with_observer, EpochObservation, TrainConfig,
    TrainingDynamics,
};
