use crate::error::NdError;
use crate::layers::Parameterized;
use crate::tensor::Tensor;
use crate::Result;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam state over the flat canonical parameter order of a
/// [`Parameterized`] model. Moments start at zero, the step counter at zero.
#[derive(Clone, Debug)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, param_count: usize) -> Self {
        AdamState {
            cfg,
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Second-moment accumulators (always non-negative).
    pub fn second_moments(&self) -> &[f64] {
        &self.second
    }

    /// Applies one in-place update. `grads` must match the model's parameter
    /// tensors in canonical order. A non-finite gradient anywhere rejects the
    /// whole update and leaves parameters, moments and step count untouched.
    pub fn step(&mut self, model: &mut dyn Parameterized, grads: &[Tensor]) -> Result<()> {
        if grads.len() != model.tensor_count() {
            return Err(NdError::GradientCountMismatch {
                expected: model.tensor_count(),
                got: grads.len(),
            });
        }
        for (ti, g) in grads.iter().enumerate() {
            if let Some(ei) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(NdError::NonFiniteGradient {
                    tensor_index: ti,
                    entry_index: ei,
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let mut offset = 0;
        let mut tensor_idx = 0;
        let first = &mut self.first;
        let second = &mut self.second;
        let mut shape_err = None;
        model.for_each_param_mut(&mut |p: &mut Tensor| {
            let g = &grads[tensor_idx];
            if g.shape() != p.shape() && shape_err.is_none() {
                shape_err = Some(NdError::shape("adam step", p.shape(), g.shape()));
            }
            if shape_err.is_none() {
                for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                    let j = offset + i;
                    first[j] = beta1 * first[j] + (1.0 - beta1) * gv;
                    second[j] = beta2 * second[j] + (1.0 - beta2) * gv * gv;
                    let m_hat = first[j] / bc1;
                    let v_hat = second[j] / bc2;
                    *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
            offset += p.len();
            tensor_idx += 1;
        });
        match shape_err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
