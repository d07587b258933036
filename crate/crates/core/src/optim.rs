//! Adam over lists of dense parameter tensors.

use ndarray::{Array2, Zip};

use crate::scalar::Scalar;

pub struct Adam<T> {
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new<'a>(params: impl Iterator<Item = &'a Array2<T>>) -> Self {
        let m: Vec<_> = params.map(|p| Array2::zeros(p.raw_dim())).collect();
        Adam { v: m.clone(), m, t: 0 }
    }

    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Array2<T>>, grads: &[Array2<T>], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        let c1 = T::lit(1.0 - Self::BETA1.powi(self.t));
        let c2 = T::lit(1.0 - Self::BETA2.powi(self.t));
        let (lr, eps) = (T::lit(lr), T::lit(Self::EPS));
        for (k, p) in params.enumerate() {
            let g = &grads[k];
            self.m[k].zip_mut_with(g, |m, &g| *m = b1 * *m + (T::one() - b1) * g);
            self.v[k].zip_mut_with(g, |v, &g| *v = b2 * *v + (T::one() - b2) * g * g);
            Zip::from(p).and(&self.m[k]).and(&self.v[k]).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
        }
    }
}
