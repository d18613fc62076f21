use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Real};
use crate::error::{Error, Result};

/// Update rule applied by [`optimizer_step`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    /// Adaptive moments with bias correction.
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            Optimizer::Sgd { .. } => Optimizer::Sgd { lr },
            Optimizer::Adam {
                beta1, beta2, eps, ..
            } => Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::param(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if let Optimizer::Adam {
            beta1, beta2, eps, ..
        } = *self
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::param(
                    "adam needs beta1, beta2 in [0, 1) and eps > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Applies one update from the gradients stored in `params.grads`. Gradients
/// are left in place; call [`ParamSet::zero_grad`] before the next pass.
pub fn optimizer_step<T: Real>(params: &mut ParamSet<T>, opt: &Optimizer) -> Result<()> {
    opt.validate()?;
    params.step += 1;
    let step = params.step;
    let grads = std::mem::replace(&mut params.grads, crate::autodiff::Grads(Vec::new()));
    match *opt {
        Optimizer::Sgd { lr } => {
            let lr = T::from_f64(lr);
            for (p, g) in params.iter_mut().zip(&grads.0) {
                for (v, gi) in p.value.data_mut().iter_mut().zip(g) {
                    *v -= lr * *gi;
                }
            }
        }
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            let step_size = T::from_f64(lr / bc1);
            let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
            let (one_b1, one_b2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
            let inv_bc2 = T::from_f64(1.0 / bc2);
            let eps = T::from_f64(eps);
            for (p, g) in params.iter_mut().zip(&grads.0) {
                let m = &mut p.first_moment;
                let s = &mut p.second_moment;
                for (((v, gi), mi), si) in p
                    .value
                    .data_mut()
                    .iter_mut()
                    .zip(g)
                    .zip(m.iter_mut())
                    .zip(s.iter_mut())
                {
                    *mi = b1 * *mi + one_b1 * *gi;
                    *si = b2 * *si + one_b2 * *gi * *gi;
                    *v -= step_size * *mi / ((*si * inv_bc2).sqrt() + eps);
                }
            }
        }
    }
    params.grads = grads;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn quadratic_step(params: &mut ParamSet<f64>, opt: &Optimizer) -> f64 {
        let id = crate::autodiff::ParamId(0);
        params.zero_grad();
        let mut tape = Tape::new();
        let w = tape.param(params, id);
        let l = tape.sum_squares(w);
        let loss = tape.value(l).data()[0];
        tape.backward(l, &mut params.grads).unwrap();
        optimizer_step(params, opt).unwrap();
        loss
    }

    #[test]
    fn sgd_on_square() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::new(vec![1], vec![1.0]).unwrap());
        quadratic_step(&mut p, &Optimizer::Sgd { lr: 0.1 });
        assert!((p.iter().next().unwrap().value.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for opt in [Optimizer::Sgd { lr: 0.5 }, Optimizer::adam(0.1)] {
            let mut p = ParamSet::new();
            p.add("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
            optimizer_step(&mut p, &opt).unwrap();
            assert_eq!(p.iter().next().unwrap().value.data(), &[1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn bad_learning_rate() {
        let mut p = ParamSet::<f64>::new();
        assert!(optimizer_step(&mut p, &Optimizer::Sgd { lr: 0.0 }).is_err());
        assert!(optimizer_step(&mut p, &Optimizer::adam(-1.0)).is_err());
    }

    #[test]
    fn adam_converges_on_convex_quadratic() {
        let mut p = ParamSet::new();
        p.add(
            "w",
            Tensor::new(vec![4], vec![1.0, -2.0, 0.5, 3.0]).unwrap(),
        );
        let opt = Optimizer::adam(0.05);
        let start = quadratic_step(&mut p, &opt);
        let mut last = start;
        for _ in 0..199 {
            last = quadratic_step(&mut p, &opt);
        }
        assert!(last < 1e-6 * start, "loss {last} from {start}");
    }
}
