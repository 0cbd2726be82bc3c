use crate::float::Float;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Adaptive moment estimation without weight decay.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(store: &ParamStore<F>, lr: f64) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![F::zero(); p.value().len()]).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update from per-parameter gradients; parameters without a gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &[(ParamId, Tensor<F>)]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let step_size = F::lit(self.lr / bc1);
        let bc2_sqrt = F::lit(bc2.sqrt());
        let eps = F::lit(self.eps);
        for (pid, g) in grads {
            let i = pid.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = store.value_mut(*pid);
            assert_eq!(w.len(), g.len(), "gradient size for parameter {i}");
            for (((wj, mj), vj), &gj) in w.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                *mj = b1 * *mj + (F::one() - b1) * gj;
                *vj = b2 * *vj + (F::one() - b2) * gj * gj;
                *wj -= step_size * *mj / ((*vj).sqrt() / bc2_sqrt + eps);
            }
        }
    }
}
