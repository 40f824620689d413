//! Network descriptions, differentiable networks built from them, and the
//! adversarial objectives.

pub mod loss;
pub mod network;
pub mod spec;
pub mod zoo;

pub use loss::{discriminator_loss, generator_loss, DiscriminatorLoss, GanLossKind};
pub use network::{build_network, ForwardOptions, ForwardOutput, GatePoint, Network};
pub use spec::{
    Activation, FeatureShape, LayerKind, LayerSpec, NetworkRole, NetworkSpec, Skip, SkipMode,
    UpsampleMode,
};
