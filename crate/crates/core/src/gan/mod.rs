//! Conditional generator and discriminator over discrete melody attributes.

mod attributes;
mod gumbel;
mod loss;
mod model;

pub use attributes::{Attribute, AttributeVocab};
pub use gumbel::{argmax, entropy, gumbel_from_uniform, gumbel_noise, gumbel_softmax, straight_through};
pub use loss::{rsgan_d_loss, rsgan_d_loss_node, rsgan_g_loss, rsgan_g_loss_node, softplus};
pub use model::{
    constant_step, discriminator_forward, generator_forward, one_hot_melody, sample_noise, stack_conditions,
    AttributeDistributions, BoundDiscriminator, BoundGenerator, DiscriminatorParams, GeneratorNodes, GeneratorOutput,
    GeneratorParams, ModelConfig, RelaxedMelody,
};
