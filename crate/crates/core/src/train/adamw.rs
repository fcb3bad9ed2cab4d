use crate::error::{Error, Result};
use crate::nn::Parameters;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with decoupled weight decay. Moment estimates are stored in values
/// of the model type itself.
#[derive(Clone, Debug)]
pub struct AdamW<P: Parameters> {
    m: P,
    v: P,
    t: i32,
}

impl<P: Parameters> AdamW<P> {
    pub fn new(params: &P) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update. Fails without touching anything if a gradient is not
    /// finite.
    pub fn step(&mut self, params: &mut P, grads: &P, lr: f64, weight_decay: f64) -> Result<()> {
        for (name, g) in grads.tensors() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let grads = grads.tensors();
        for (((mut p, (_, g)), mut m), mut v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * weight_decay * *p;
                    *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                });
        }
        Ok(())
    }
}
