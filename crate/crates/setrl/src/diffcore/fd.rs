//! Central finite-difference gradient checking.

use super::DiffError;

/// A differentiable scalar function of a flat parameter vector, as seen by
/// the finite-difference harness. Implementations map the flat index space
/// onto their parameter tensors.
pub trait GradModel {
    /// Total number of scalar parameters.
    fn dim(&self) -> usize;
    fn get_param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);
    /// Loss at the current parameters.
    fn loss(&mut self) -> f64;
    /// Analytic gradient at the current parameters, length [`GradModel::dim`].
    fn grad(&mut self) -> Vec<f64>;
}

/// Compares the model's analytic gradient against central differences and
/// returns max over parameters of |analytic − numeric| / max(|analytic|,
/// |numeric|, 1e−6). The floor keeps parameters whose true gradient is zero
/// from dividing finite-difference roundoff by itself; they are judged at
/// absolute scale instead.
pub fn finite_difference_check<M: GradModel>(model: &mut M, h: f64) -> Result<f64, DiffError> {
    if h <= 0.0 {
        return Err(DiffError::NonPositive {
            what: "finite-difference step",
            value: h,
        });
    }
    let analytic = model.grad();
    debug_assert_eq!(analytic.len(), model.dim());
    let mut max_rel = 0.0f64;
    for i in 0..model.dim() {
        let x0 = model.get_param(i);
        model.set_param(i, x0 + h);
        let plus = model.loss();
        model.set_param(i, x0 - h);
        let minus = model.loss();
        model.set_param(i, x0);
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic[i] - numeric).abs() / scale);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// loss(w) = Σ c_i·w_i, gradient optionally corrupted.
    struct LinearModel {
        w: Vec<f64>,
        c: Vec<f64>,
        corrupt: bool,
    }

    impl GradModel for LinearModel {
        fn dim(&self) -> usize {
            self.w.len()
        }
        fn get_param(&self, i: usize) -> f64 {
            self.w[i]
        }
        fn set_param(&mut self, i: usize, v: f64) {
            self.w[i] = v;
        }
        fn loss(&mut self) -> f64 {
            self.w.iter().zip(&self.c).map(|(w, c)| w * c).sum()
        }
        fn grad(&mut self) -> Vec<f64> {
            let mut g = self.c.clone();
            if self.corrupt {
                g[0] += 0.5;
            }
            g
        }
    }

    #[test]
    fn linear_function_is_exact() {
        let mut m = LinearModel {
            w: vec![0.3, -0.7, 1.1],
            c: vec![2.0, -1.5, 0.25],
            corrupt: false,
        };
        let err = finite_difference_check(&mut m, 1e-5).unwrap();
        assert!(err <= 1e-9, "error {err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut m = LinearModel {
            w: vec![0.3, -0.7],
            c: vec![2.0, -1.5],
            corrupt: true,
        };
        let err = finite_difference_check(&mut m, 1e-5).unwrap();
        assert!(err > 1e-2, "error {err}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let mut m = LinearModel {
            w: vec![1.0],
            c: vec![1.0],
            corrupt: false,
        };
        assert!(finite_difference_check(&mut m, 0.0).is_err());
    }
}
