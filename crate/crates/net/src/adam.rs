//! Adam optimizer with bias correction.

use crate::params::ParamSet;
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: ParamSet<T>,
    v: ParamSet<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, lr: f64, betas: (f64, f64)) -> Self {
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// `p <- p - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) {
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::ONE;
        let c1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(self.t as i32)));
        let c2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(self.t as i32)));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mh = m.data[i] * c1;
                let vh = v.data[i] * c2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Tensor;

    fn scalar(v: f64) -> ParamSet<f64> {
        ParamSet::new(vec![Tensor {
            name: "w".into(),
            shape: vec![1],
            data: vec![v],
        }])
    }

    #[test]
    fn matches_closed_form_on_quadratic() {
        // f(w) = 0.5 * a * (w - c)^2
        let (a, c) = (3.0, 0.25);
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut p = scalar(1.5);
        let mut opt = Adam::new(&p, lr, (b1, b2));
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.5f64);
        for t in 1..=5 {
            let g = a * (p.tensors[0].data[0] - c);
            opt.step(&mut p, &scalar(g));
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - f64::powi(b1, t));
            let vh = v / (1.0 - f64::powi(b2, t));
            w -= lr * mh / (vh.sqrt() + eps);
            assert!((p.tensors[0].data[0] - w).abs() < 1e-12);
        }
        // the first step moves by lr * sign(g) up to eps
        let mut p = scalar(1.5);
        let mut opt = Adam::new(&p, lr, (b1, b2));
        opt.step(&mut p, &scalar(a * (1.5 - c)));
        assert!((p.tensors[0].data[0] - (1.5 - lr)).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = ParamSet::new(vec![Tensor {
            name: "w".into(),
            shape: vec![3],
            data: vec![0.1f32, -2.0, 3.5],
        }]);
        let orig = p.clone();
        let mut opt = Adam::new(&p, 0.0, (0.9, 0.999));
        let g = ParamSet::new(vec![Tensor {
            name: "w".into(),
            shape: vec![3],
            data: vec![1.0f32, -1.0, 1e6],
        }]);
        for _ in 0..10 {
            opt.step(&mut p, &g);
        }
        assert_eq!(p, orig);
    }
}
