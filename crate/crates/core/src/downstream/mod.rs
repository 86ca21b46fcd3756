//! Fixed GRU outcome classifier and the real-vs-synthetic discriminator
//! built from it.

mod discriminator;
mod model;
mod train;

#[cfg(test)]
mod tests;

pub use discriminator::{train_discriminator, DiscriminatorRun};
pub use model::{classifier_forward, evaluate_classifier, ClassifierArch, GruClassifierParams};
pub use train::{
    classifier_loss, classifier_loss_and_grads, train_classifier, train_on_labels, ClassifierEpochLog,
    ClassifierTrainConfig, ClassifierTrainLog,
};

pub const CHECKPOINT_KIND: &str = "classifier";
