/// Largest relative disagreement between central differences and an
/// analytic gradient, `|fd - ad| / max(|fd|, |ad|, 1e-6)`.
///
/// The floor keeps exactly-zero gradients (cancelling terms) from turning
/// the rounding noise of the difference quotient into a large ratio.
///
/// `f` returns the objective and its gradient at the given point; the
/// gradient is only requested at `params` itself.
pub fn finite_difference_check<F>(mut f: F, params: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, ad) = f(params);
    assert_eq!(ad.len(), params.len(), "gradient length");
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let fp = f(&x).0;
        x[i] = orig - eps;
        let fm = f(&x).0;
        x[i] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let denom = fd.abs().max(ad[i].abs()).max(1e-6);
        worst = worst.max((fd - ad[i]).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sum_has_unit_gradient() {
        let p = [0.3, -1.2, 4.0];
        let err = finite_difference_check(|x| (x.iter().sum(), vec![1.0; x.len()]), &p, 1e-3);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sum_of_squares() {
        let mut rng = crate::rng::rng_from_seed(1);
        let p: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let err = finite_difference_check(
            |x| (x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()),
            &p,
            1e-3,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let err = finite_difference_check(|x| (x[0] * x[0], vec![x[0]]), &[1.0], 1e-3);
        assert!(err > 0.4);
    }
}
