//! Generator and discriminator networks in every compared variant.

mod discriminator;
pub(crate) mod features;
mod generator;
mod model;
mod spec;

pub use model::{Mode, Model, NamedStats};
pub use spec::{DiscriminatorHead, DiscriminatorSpec, GeneratorSpec, ModelSpec, Upsampler};

use crate::error::Result;
use crate::tensor::Element;

pub fn build_generator<T: Element>(spec: &GeneratorSpec, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::Generator(spec.clone()), seed)
}

pub fn build_discriminator<T: Element>(spec: &DiscriminatorSpec, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::Discriminator(spec.clone()), seed)
}

pub fn parameter_count<T: Element>(model: &Model<T>) -> usize {
    model.parameter_count()
}
