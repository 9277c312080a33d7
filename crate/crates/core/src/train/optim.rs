use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::{Element, Gradients};

/// First and second moment estimates for every parameter of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Element = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl<T: Element> AdamState<T> {
    pub fn new(model: &Model<T>) -> Self {
        let zeros = || model.parameters().map(|(_, p)| vec![T::zero(); p.numel()]).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step over every parameter of `model`. Parameters
/// absent from `grads` are treated as having zero gradient.
pub fn adam_update<T: Element>(
    model: &mut Model<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if state.m.len() != model.n_params() {
        return Err(Error::dim("adam_update", "parameters", state.m.len(), model.n_params()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut updated = Vec::with_capacity(model.n_params());
    for (i, (_, p)) in model.parameters().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = grads.get(p);
        let mut vals = p.data().to_vec();
        for j in 0..vals.len() {
            let gj = g.map_or(0.0, |g| g[j].as_f64());
            let mj = b1 * m[j].as_f64() + (1.0 - b1) * gj;
            let vj = b2 * v[j].as_f64() + (1.0 - b2) * gj * gj;
            m[j] = T::from_f64(mj);
            v[j] = T::from_f64(vj);
            let step = lr * (mj / c1) / ((vj / c2).sqrt() + cfg.epsilon);
            vals[j] = T::from_f64(vals[j].as_f64() - step);
        }
        updated.push(vals);
    }
    model.set_parameter_data(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GeneratorSpec, ModelSpec, Upsampler};
    use crate::tensor::ops::{mean, square};
    use crate::tensor::Tensor;

    fn tiny() -> Model<f64> {
        let mut g = GeneratorSpec::desk(Upsampler::NearestThenConv, false);
        g.base_channels = 2;
        g.n_res_blocks = 1;
        Model::build(&ModelSpec::Generator(g), 0).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = tiny();
        let before: Vec<Vec<f64>> = m.parameters().map(|(_, p)| p.data().to_vec()).collect();
        let mut s = AdamState::new(&m);
        adam_update(&mut m, &Gradients::default(), &mut s, 1e-3, &AdamConfig::default()).unwrap();
        let after: Vec<Vec<f64>> = m.parameters().map(|(_, p)| p.data().to_vec()).collect();
        assert_eq!(before, after);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut m = tiny();
        let x = Tensor::from_vec([1, 3, 4, 4], (0..48).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let loss = mean(&square(&m.forward(&x).unwrap()));
        let grads = loss.backward().unwrap();
        let (name, p) = m.parameters().next().map(|(n, p)| (n.to_string(), p.clone())).unwrap();
        let g = grads.get(&p).unwrap().to_vec();
        let mut s = AdamState::new(&m);
        adam_update(&mut m, &grads, &mut s, 1e-3, &AdamConfig::default()).unwrap();
        let after = m.param(&name).unwrap().data().to_vec();
        for ((a, b), g) in after.iter().zip(p.data()).zip(g) {
            if g.abs() > 1e-4 {
                assert!(
                    ((b - a) - 1e-3 * g.signum()).abs() < 1e-6,
                    "moved {} for grad {g}",
                    b - a
                );
            }
        }
    }
}
