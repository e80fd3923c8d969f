//! Counterfactual explanation: latent-shift traversal through a small 2D
//! autoencoder, attribution maps, and the saliency hit/miss score.

mod autoencoder;
mod counterfactual;
mod hit;

pub use autoencoder::{ae_train, AeEpochLog, Autoencoder, AE_FILTERS};
pub use counterfactual::{
    counterfactual, AttributionMap, Counterfactual, CounterfactualOptions, LesionClassifier,
};
pub use hit::{hit_score, scoreable, HitReport};
