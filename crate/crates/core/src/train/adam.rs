use super::TrainConfig;
use crate::model::ParamStore;
use crate::tensor::Scalar;
use crate::{Error, Result};

/// One Adam update with bias correction at 1-based step `t`, then zero the
/// gradients. Any non-finite gradient aborts the step before any parameter
/// is touched.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, t: u64, lr: f64, cfg: &TrainConfig) -> Result<()> {
    assert!(t >= 1, "Adam step index is 1-based");
    if let Some((name, _)) = store.iter().find(|(_, p)| !p.grad().all_finite()) {
        return Err(Error::NonFinite {
            param: name.to_string(),
        });
    }
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let exp = t.min(i32::MAX as u64) as i32;
    let corr1 = T::of(1.0 - cfg.beta1.powi(exp));
    let corr2 = T::of(1.0 - cfg.beta2.powi(exp));
    let (lr, eps) = (T::of(lr), T::of(cfg.eps));

    for (_, p) in store.iter_mut() {
        let (value, grad, m, v) = p.parts_mut();
        let params = value.data_mut().iter_mut();
        let grads = grad.data_mut().iter_mut();
        for (((theta, g), m), v) in params.zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + one_b1 * *g;
            *v = b2 * *v + one_b2 * *g * *g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor4;

    fn scalar_store(theta: f64, g: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", vec![1], Tensor4::full([1, 1, 1, 1], theta))
            .unwrap();
        s.accumulate("w", &Tensor4::full([1, 1, 1, 1], g)).unwrap();
        s
    }

    #[test]
    fn zero_grad_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut s = scalar_store(0.7, 0.0);
        adam_step(&mut s, 1, 1e-3, &cfg).unwrap();
        let p = s.get("w").unwrap();
        assert_eq!(p.value().data()[0], 0.7);
        assert_eq!(p.moments().0.data()[0], 0.0);
        assert_eq!(p.moments().1.data()[0], 0.0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut s = scalar_store(0.0, 1.0);
        adam_step(&mut s, 1, 1e-4, &cfg).unwrap();
        let got = s.get("w").unwrap().value().data()[0];
        assert!((got + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.get("w").unwrap().grad().data()[0], 0.0);
    }

    #[test]
    fn matches_scalar_reference_over_two_steps() {
        let cfg = TrainConfig::default();
        let (lr, g) = (1e-3, 0.3);
        let mut s = scalar_store(0.5, g);
        adam_step(&mut s, 1, lr, &cfg).unwrap();
        s.accumulate("w", &Tensor4::full([1, 1, 1, 1], g)).unwrap();
        adam_step(&mut s, 2, lr, &cfg).unwrap();

        let (mut theta, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= lr * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.get("w").unwrap().value().data()[0] - theta).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let cfg = TrainConfig::default();
        let mut s = scalar_store(1.0, f64::NAN);
        let err = adam_step(&mut s, 1, 1e-3, &cfg).unwrap_err();
        assert!(matches!(&err, Error::NonFinite { param } if param == "w"));
        assert_eq!(s.get("w").unwrap().value().data()[0], 1.0);
    }
}
