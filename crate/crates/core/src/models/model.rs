use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::ops::{self, Activation, BatchNormMode, BatchStats, ConvParams, RunningStats};
use crate::tensor::{Element, Tensor};

/// Batch statistics per BN layer name, from a training-mode forward pass.
pub type NamedStats<T> = Vec<(String, BatchStats<T>)>;

/// Whether batch norm uses batch statistics (and reports them) or running
/// statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Ordered, uniquely named parameters plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct Model<T: Element = f32> {
    spec: ModelSpec,
    params: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
    stats: Vec<(String, RunningStats<T>)>,
    stats_index: HashMap<String, usize>,
}

impl<T: Element> Model<T> {
    pub(crate) fn empty(spec: ModelSpec) -> Self {
        Model {
            spec,
            params: Vec::new(),
            index: HashMap::new(),
            stats: Vec::new(),
            stats_index: HashMap::new(),
        }
    }

    /// Builds the network described by `spec` with seeded initialization.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Init::new(spec.clone(), seed);
        Self::declare(spec, &mut init)?;
        Ok(init.finish())
    }

    /// Same layout as [`Model::build`] with all values zero; used when the
    /// values come from elsewhere (weight files).
    pub fn skeleton(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut init = Init::skeleton(spec.clone());
        Self::declare(spec, &mut init)?;
        Ok(init.finish())
    }

    fn declare(spec: &ModelSpec, init: &mut Init<T>) -> Result<()> {
        match spec {
            ModelSpec::Generator(g) => super::generator::declare(g, init),
            ModelSpec::Discriminator(d) => super::discriminator::declare(d, init),
            ModelSpec::FeatureExtractor => super::features::declare(init),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameters(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn running_stats(&self) -> impl Iterator<Item = (&str, &RunningStats<T>)> {
        self.stats.iter().map(|(n, s)| (n.as_str(), s))
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.params[i].1)
            .ok_or_else(|| Error::Spec(format!("model has no parameter `{name}`")))
    }

    pub fn stats(&self, name: &str) -> Result<&RunningStats<T>> {
        self.stats_index
            .get(name)
            .map(|&i| &self.stats[i].1)
            .ok_or_else(|| Error::Spec(format!("model has no running statistics `{name}`")))
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn push_param(&mut self, name: String, t: Tensor<T>) -> Result<()> {
        if self.index.contains_key(&name) || self.stats_index.contains_key(&name) {
            return Err(Error::Spec(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push((name, t));
        Ok(())
    }

    pub(crate) fn push_stats(&mut self, name: String, s: RunningStats<T>) -> Result<()> {
        if self.stats_index.contains_key(&name) {
            return Err(Error::Spec(format!("duplicate statistics name `{name}`")));
        }
        self.stats_index.insert(name.clone(), self.stats.len());
        self.stats.push((name, s));
        Ok(())
    }

    /// Replaces parameter values in iteration order, keeping shapes.
    pub fn set_parameter_data(&mut self, values: Vec<Vec<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::dim(
                "set_parameter_data",
                "count",
                self.params.len(),
                values.len(),
            ));
        }
        for ((_, t), v) in self.params.iter_mut().zip(values) {
            *t = Tensor::parameter(t.dims().to_vec(), v)?;
        }
        Ok(())
    }

    /// Replaces the values of one parameter, keeping its shape.
    pub fn set_param(&mut self, name: &str, values: Vec<T>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Spec(format!("model has no parameter `{name}`")))?;
        let dims = self.params[i].1.dims().to_vec();
        self.params[i].1 = Tensor::parameter(dims, values)?;
        Ok(())
    }

    pub(crate) fn stats_mut(&mut self, name: &str) -> Result<&mut RunningStats<T>> {
        let i = *self
            .stats_index
            .get(name)
            .ok_or_else(|| Error::Spec(format!("model has no running statistics `{name}`")))?;
        Ok(&mut self.stats[i].1)
    }

    /// Folds training-mode batch statistics into the running statistics.
    pub fn update_running_stats(&mut self, batch: &[(String, BatchStats<T>)], momentum: f64) -> Result<()> {
        for (name, b) in batch {
            self.stats_mut(name)?.update(b, momentum);
        }
        Ok(())
    }

    /// Copy whose parameters are constants: gradients will not flow into them.
    pub fn frozen(&self) -> Self {
        let mut m = self.clone();
        for (_, t) in &mut m.params {
            *t = t.detach();
        }
        m
    }

    /// Copy converted to another element type.
    pub fn cast<U: Element>(&self) -> Model<U> {
        let mut m = Model::empty(self.spec.clone());
        for (n, t) in &self.params {
            let c = t.cast::<U>();
            m.push_param(
                n.clone(),
                Tensor::parameter(c.dims().to_vec(), c.into_vec()).expect("same shape"),
            )
            .expect("unique names");
        }
        for (n, s) in &self.stats {
            let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect();
            m.push_stats(
                n.clone(),
                RunningStats {
                    mean: conv(&s.mean),
                    var: conv(&s.var),
                },
            )
            .expect("unique names");
        }
        m
    }

    /// Generic forward pass. Returns the output and, in training mode, the
    /// batch statistics of every batch-norm layer.
    pub fn forward_with(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, NamedStats<T>)> {
        let mut ctx = Ctx::new(self, mode);
        let out = match &self.spec {
            ModelSpec::Generator(g) => super::generator::forward(g, &mut ctx, input)?,
            ModelSpec::Discriminator(d) => super::discriminator::forward(d, &mut ctx, input)?,
            ModelSpec::FeatureExtractor => super::features::forward(&mut ctx, input)?,
        };
        Ok((out, ctx.batch_stats))
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_with(input, Mode::Eval)?.0)
    }
}

/// Declares parameters with fan-in scaled Gaussian weights, zero biases.
pub(crate) struct Init<T: Element> {
    model: Model<T>,
    rng: ChaCha8Rng,
    /// Declaring a skeleton (no random draws) for loading weights.
    zeroed: bool,
}

impl<T: Element> Init<T> {
    pub fn new(spec: ModelSpec, seed: u64) -> Self {
        Init {
            model: Model::empty(spec),
            rng: ChaCha8Rng::seed_from_u64(seed),
            zeroed: false,
        }
    }

    pub fn skeleton(spec: ModelSpec) -> Self {
        Init {
            zeroed: true,
            ..Init::new(spec, 0)
        }
    }

    fn gaussian(&mut self, n: usize, fan_in: usize, gain: f64) -> Vec<T> {
        if self.zeroed {
            return vec![T::zero(); n];
        }
        let std = gain * (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| T::from_f64(normal.sample(&mut self.rng))).collect()
    }

    pub fn conv(&mut self, name: &str, in_c: usize, out_c: usize, k: usize) -> Result<()> {
        self.conv_with_gain(name, in_c, out_c, k, 1.0)
    }

    /// Convolution whose weight standard deviation is multiplied by `gain`.
    pub fn conv_with_gain(&mut self, name: &str, in_c: usize, out_c: usize, k: usize, gain: f64) -> Result<()> {
        let w = self.gaussian(out_c * in_c * k * k, in_c * k * k, gain);
        self.model
            .push_param(format!("{name}.weight"), Tensor::parameter([out_c, in_c, k, k], w)?)?;
        self.model.push_param(
            format!("{name}.bias"),
            Tensor::parameter([out_c], vec![T::zero(); out_c])?,
        )?;
        Ok(())
    }

    /// Transposed-convolution kernel, laid out `in x out x k x k`.
    pub fn conv_transpose(&mut self, name: &str, in_c: usize, out_c: usize, k: usize) -> Result<()> {
        let w = self.gaussian(in_c * out_c * k * k, in_c * k * k, 1.0);
        self.model
            .push_param(format!("{name}.weight"), Tensor::parameter([in_c, out_c, k, k], w)?)?;
        self.model.push_param(
            format!("{name}.bias"),
            Tensor::parameter([out_c], vec![T::zero(); out_c])?,
        )?;
        Ok(())
    }

    pub fn dense(&mut self, name: &str, fan_in: usize, out: usize) -> Result<()> {
        let w = self.gaussian(fan_in * out, fan_in, 1.0);
        self.model
            .push_param(format!("{name}.weight"), Tensor::parameter([fan_in, out], w)?)?;
        self.model
            .push_param(format!("{name}.bias"), Tensor::parameter([out], vec![T::zero(); out])?)?;
        Ok(())
    }

    pub fn batch_norm(&mut self, name: &str, c: usize) -> Result<()> {
        self.model
            .push_param(format!("{name}.gamma"), Tensor::parameter([c], vec![T::one(); c])?)?;
        self.model
            .push_param(format!("{name}.beta"), Tensor::parameter([c], vec![T::zero(); c])?)?;
        self.model.push_stats(name.to_string(), RunningStats::new(c))
    }

    pub fn prelu(&mut self, name: &str) -> Result<()> {
        self.model.push_param(
            format!("{name}.slope"),
            Tensor::parameter([1], vec![T::from_f64(0.25)])?,
        )
    }

    pub fn finish(self) -> Model<T> {
        self.model
    }
}

/// Forward-pass context: resolves named layers against a model.
pub(crate) struct Ctx<'m, T: Element> {
    model: &'m Model<T>,
    mode: Mode,
    batch_stats: NamedStats<T>,
}

impl<'m, T: Element> Ctx<'m, T> {
    fn new(model: &'m Model<T>, mode: Mode) -> Self {
        Ctx {
            model,
            mode,
            batch_stats: Vec::new(),
        }
    }

    fn conv_params(&self, name: &str, stride: usize, padding: usize) -> Result<ConvParams<T>> {
        Ok(ConvParams::new(
            self.model.param(&format!("{name}.weight"))?.clone(),
            Some(self.model.param(&format!("{name}.bias"))?.clone()),
            stride,
            padding,
        ))
    }

    /// Convolution with "same"-style zero padding of `k / 2`.
    pub fn conv(&self, name: &str, x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
        let k = self.model.param(&format!("{name}.weight"))?.dims()[2];
        ops::conv2d(x, &self.conv_params(name, stride, k / 2)?)
    }

    pub fn conv_transpose(
        &self,
        name: &str,
        x: &Tensor<T>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Tensor<T>> {
        let p = self
            .conv_params(name, stride, padding)?
            .with_output_padding(output_padding);
        ops::conv_transpose2d(x, &p)
    }

    pub fn dense(&self, name: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::dense(
            x,
            self.model.param(&format!("{name}.weight"))?,
            self.model.param(&format!("{name}.bias"))?,
        )
    }

    pub fn batch_norm(&mut self, name: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
        let gamma = self.model.param(&format!("{name}.gamma"))?;
        let beta = self.model.param(&format!("{name}.beta"))?;
        match self.mode {
            Mode::Train => {
                let (y, stats) = ops::batch_norm(x, gamma, beta, BatchNormMode::Train)?;
                if let Some(s) = stats {
                    self.batch_stats.push((name.to_string(), s));
                }
                Ok(y)
            }
            Mode::Eval => {
                let rs = self.model.stats(name)?;
                Ok(ops::batch_norm(x, gamma, beta, BatchNormMode::Eval(rs))?.0)
            }
        }
    }

    pub fn prelu(&self, name: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::prelu(x, self.model.param(&format!("{name}.slope"))?)
    }

    pub fn leaky(&self, x: &Tensor<T>, slope: f64) -> Tensor<T> {
        ops::activation(x, Activation::LeakyRelu(slope))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_has_no_parameters() {
        let m = Model::<f32>::empty(ModelSpec::FeatureExtractor);
        assert_eq!(m.parameter_count(), 0);
        assert_eq!(m.running_stats().count(), 0);
    }

    #[test]
    fn set_param_keeps_shape() {
        let mut m = Model::<f32>::build(&ModelSpec::FeatureExtractor, 0).unwrap();
        m.set_param("features.0.bias", vec![1.0; 16]).unwrap();
        assert_eq!(m.param("features.0.bias").unwrap().data(), &[1.0; 16]);
        assert!(m.set_param("features.0.bias", vec![1.0; 3]).is_err());
        assert!(m.set_param("nope", vec![]).is_err());
    }
}
