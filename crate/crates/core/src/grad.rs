//! Reverse-mode gradient contract and a central-difference checker.
//!
//! Every differentiable map in the crate is exposed through [`Differentiable`]:
//! a flat-vector forward evaluation plus a vector-Jacobian product. The
//! computation graphs here are shallow and fixed, so each VJP is derived by
//! hand rather than recorded on a tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{dot, norm2};

pub trait Differentiable {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `J(x)^T * cotangent`.
    fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>>;
}

/// Shape-checked vector-Jacobian product.
pub fn vjp_contract<D: Differentiable + ?Sized>(op: &D, x: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
    if x.len() != op.input_len() {
        return Err(Error::contract(format!(
            "point has length {}, operation expects {}",
            x.len(),
            op.input_len()
        )));
    }
    if cotangent.len() != op.output_len() {
        return Err(Error::contract(format!(
            "cotangent has length {}, operation output has length {}",
            cotangent.len(),
            op.output_len()
        )));
    }
    let g = op.vjp(x, cotangent)?;
    debug_assert_eq!(g.len(), op.input_len());
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probe_count: usize,
}

/// Relative discrepancy used by the checker: `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare `vjp` against central differences along `probes` random unit
/// directions. A random cotangent reduces vector-valued maps to a scalar.
pub fn finite_difference_check<D: Differentiable + ?Sized>(
    op: &D,
    x: &[f64],
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::parameter("finite-difference step must be positive"));
    }
    if probes == 0 {
        return Err(Error::parameter("at least one probe direction is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cot: Vec<f64> = if op.output_len() == 1 {
        vec![1.0]
    } else {
        (0..op.output_len()).map(|_| StandardNormal.sample(&mut rng)).collect()
    };
    let grad = vjp_contract(op, x, &cot)?;

    let scalar = |p: &[f64], probe: usize, side: &str| -> Result<f64> {
        let y = op.eval(p)?;
        let s = dot(&y, &cot);
        if !s.is_finite() {
            return Err(Error::Numerical {
                iteration: probe,
                message: format!("non-finite objective at {side} perturbation of probe {probe}"),
                trace: Vec::new(),
            });
        }
        Ok(s)
    };

    let mut worst = 0.0f64;
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    for probe in 0..probes {
        let mut dir: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm2(&dir);
        dir.iter_mut().for_each(|d| *d /= n);
        for i in 0..x.len() {
            plus[i] = x[i] + step * dir[i];
            minus[i] = x[i] - step * dir[i];
        }
        let fd = (scalar(&plus, probe, "positive")? - scalar(&minus, probe, "negative")?) / (2.0 * step);
        let analytic = dot(&grad, &dir);
        worst = worst.max(relative_error(analytic, fd));
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        probe_count: probes,
    })
}

/// Adapter turning a pair of closures into a [`Differentiable`].
pub struct FnOp<F, G> {
    pub input_len: usize,
    pub output_len: usize,
    pub forward: F,
    pub backward: G,
}

impl<F, G> Differentiable for FnOp<F, G>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    G: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    fn input_len(&self) -> usize {
        self.input_len
    }
    fn output_len(&self) -> usize {
        self.output_len
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.forward)(x)
    }
    fn vjp(&self, x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        (self.backward)(x, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> impl Differentiable {
        FnOp {
            input_len: n,
            output_len: n,
            forward: |x: &[f64]| Ok(x.to_vec()),
            backward: |_: &[f64], c: &[f64]| Ok(c.to_vec()),
        }
    }

    fn square() -> impl Differentiable {
        FnOp {
            input_len: 1,
            output_len: 1,
            forward: |x: &[f64]| Ok(vec![x[0] * x[0]]),
            backward: |x: &[f64], c: &[f64]| Ok(vec![2.0 * x[0] * c[0]]),
        }
    }

    fn sum_sin(n: usize, scale: f64) -> impl Differentiable {
        FnOp {
            input_len: n,
            output_len: 1,
            forward: |x: &[f64]| Ok(vec![x.iter().map(|v| v.sin()).sum()]),
            backward: move |x: &[f64], c: &[f64]| Ok(x.iter().map(|v| scale * v.cos() * c[0]).collect()),
        }
    }

    #[test]
    fn identity_vjp_returns_cotangent() {
        let c = [1.0, -2.0, 3.5];
        assert_eq!(vjp_contract(&identity(3), &[0.0; 3], &c).unwrap(), c.to_vec());
    }

    #[test]
    fn square_vjp_at_three() {
        assert_eq!(vjp_contract(&square(), &[3.0], &[1.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        assert!(matches!(
            vjp_contract(&identity(3), &[0.0; 2], &[0.0; 3]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            vjp_contract(&identity(3), &[0.0; 3], &[0.0; 4]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn linear_map_checks_exactly() {
        let a = [[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]];
        let op = FnOp {
            input_len: 3,
            output_len: 2,
            forward: move |x: &[f64]| Ok(a.iter().map(|r| dot(r, x)).collect()),
            backward: move |_: &[f64], c: &[f64]| Ok((0..3).map(|j| a[0][j] * c[0] + a[1][j] * c[1]).collect()),
        };
        for step in [1e-4, 1e-2, 1.0, 10.0] {
            let r = finite_difference_check(&op, &[0.3, -1.0, 2.0], 8, step, 1).unwrap();
            assert!(r.max_relative_error <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn sum_sin_passes_at_step_1e4() {
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let r = finite_difference_check(&sum_sin(16, 1.0), &x, 8, 1e-4, 3).unwrap();
        assert!(r.max_relative_error <= 1e-6, "{r:?}");
        assert_eq!(r.probe_count, 8);
    }

    #[test]
    fn wrong_gradients_are_flagged() {
        let x: Vec<f64> = (0..16).map(|i| 0.1 * i as f64).collect();
        // |2g - g| / |2g|
        let r = finite_difference_check(&sum_sin(16, 2.0), &x, 8, 1e-4, 3).unwrap();
        assert!((r.max_relative_error - 0.5).abs() < 1e-6, "{r:?}");
        let r = finite_difference_check(&sum_sin(16, -1.0), &x, 8, 1e-4, 3).unwrap();
        // |-g - g| / |g|
        assert!((r.max_relative_error - 2.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn non_finite_objective_reports_probe() {
        let op = FnOp {
            input_len: 1,
            output_len: 1,
            forward: |x: &[f64]| Ok(vec![if x[0] > 0.0 { f64::NAN } else { x[0] }]),
            backward: |_: &[f64], c: &[f64]| Ok(c.to_vec()),
        };
        let err = finite_difference_check(&op, &[0.0], 1, 1e-3, 0).unwrap_err();
        assert!(matches!(err, Error::Numerical { iteration: 0, .. }));
    }

    #[test]
    fn rejects_bad_step_and_probes() {
        assert!(finite_difference_check(&square(), &[1.0], 1, 0.0, 0).is_err());
        assert!(finite_difference_check(&square(), &[1.0], 0, 1e-3, 0).is_err());
    }

    #[test]
    fn vjp_is_linear_in_cotangent() {
        let op = sum_sin(1, 1.0);
        let x = [0.7];
        let g1 = vjp_contract(&op, &x, &[1.5]).unwrap()[0];
        let g2 = vjp_contract(&op, &x, &[-0.25]).unwrap()[0];
        let g = vjp_contract(&op, &x, &[2.0 * 1.5 + 3.0 * -0.25]).unwrap()[0];
        assert!((g - (2.0 * g1 + 3.0 * g2)).abs() <= 1e-12);
    }
}
