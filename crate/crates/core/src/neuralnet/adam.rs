use super::model::ParamMap;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    step: u64,
    m: ParamMap,
    v: ParamMap,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamMap) -> Self {
        let zeros = |p: &ParamMap| p.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape()))).collect();
        Self { lr, step: 0, m: zeros(params), v: zeros(params) }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamMap, grads: &ParamMap) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Shape(format!("gradient for unknown parameter {name}")))?;
            if p.len() != g.len() {
                return Err(Error::Shape(format!("gradient size mismatch for {name}")));
            }
            let m = self.m.get_mut(name).expect("moment initialised");
            let v = self.v.get_mut(name).expect("moment initialised");
            for (((pi, gi), mi), vi) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamMap {
        ParamMap::from([("w".to_string(), Tensor::filled(&[1], v))])
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut opt = Adam::new(0.01, &p);
        for _ in 0..5 {
            opt.step(&mut p, &scalar(0.0)).unwrap();
        }
        assert_eq!(p["w"].data()[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // After bias correction the first step is lr·g/(|g| + ε).
        let mut p = scalar(1.0);
        let mut opt = Adam::new(0.003, &p);
        opt.step(&mut p, &scalar(2.5)).unwrap();
        let expected = 1.0 - 0.003 * 2.5 / (2.5 + 1e-8);
        assert!((p["w"].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_recurrence() {
        // Quadratic bowl f(w) = (w − 3)², gradient 2(w − 3).
        let lr = 0.05;
        let mut p = scalar(0.0);
        let mut opt = Adam::new(lr, &p);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= lr * mh / (vh.sqrt() + 1e-8);

            let grad = scalar(2.0 * (p["w"].data()[0] - 3.0));
            opt.step(&mut p, &grad).unwrap();
            assert!((p["w"].data()[0] - w).abs() < 1e-12, "step {t}");
        }
        assert_eq!(opt.steps_taken(), 10);
    }

    #[test]
    fn unknown_gradient_rejected() {
        let mut p = scalar(1.0);
        let mut opt = Adam::new(0.1, &p);
        let g = ParamMap::from([("other".to_string(), Tensor::filled(&[1], 1.0))]);
        assert!(opt.step(&mut p, &g).is_err());
    }
}
