//! Adam optimizer over a [`ParamStore`].

use crate::autodiff::{Mat, ParamStore};

/// Standard Adam with bias correction. State is indexed by parameter order,
/// so updates are deterministic.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zero_like: Vec<Mat> = store
            .iter()
            .map(|(_, _, p)| Mat::zeros(p.rows, p.cols))
            .collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zero_like.clone(),
            v: zero_like,
            t: 0,
        }
    }

    /// One update step; `grads` must be indexed like the store's parameters.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Mat], lr: f64) {
        assert_eq!(grads.len(), store.len(), "gradient/parameter count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let g = &grads[id.0];
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.value_mut(id);
            for i in 0..p.data.len() {
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g.data[i];
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g.data[i] * g.data[i];
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
