use super::array::NdArray;
use super::param::ParamSet;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` with respect to every coordinate of
/// every parameter. Unreliable at kinks, where it reports the symmetric
/// average of the one-sided slopes.
pub fn finite_diff_grad<F>(mut f: F, params: &mut ParamSet, eps: f64) -> Result<Vec<NdArray>>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let ids: Vec<_> = params.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let shape = params.get(id).value.shape().to_vec();
        let mut grad = NdArray::zeros(&shape);
        for c in 0..grad.len() {
            let orig = params.get(id).value.data()[c];
            params.get_mut(id).value.data_mut()[c] = orig + eps;
            let plus = f(params);
            params.get_mut(id).value.data_mut()[c] = orig - eps;
            let minus = f(params);
            params.get_mut(id).value.data_mut()[c] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("finite_diff_grad"));
            }
            grad.data_mut()[c] = (plus - minus) / (2.0 * eps);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all coordinates.
pub fn max_relative_error(analytic: &[NdArray], numeric: &[NdArray], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let mut ps = ParamSet::new();
        ps.add("w", NdArray::scalar(3.0));
        let g = finite_diff_grad(|p| Ok(p.iter().next().unwrap().value.item()?.powi(2)), &mut ps, 1e-5).unwrap();
        assert!((g[0].item().unwrap() - 6.0).abs() < 1e-9);
        assert_eq!(ps.iter().next().unwrap().value.item().unwrap(), 3.0);
    }

    #[test]
    fn abs_at_kink_reports_zero() {
        let mut ps = ParamSet::new();
        ps.add("w", NdArray::scalar(0.0));
        let g = finite_diff_grad(|p| Ok(p.iter().next().unwrap().value.item()?.abs()), &mut ps, 1e-5).unwrap();
        assert_eq!(g[0].item().unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let mut ps = ParamSet::new();
        ps.add("w", NdArray::scalar(1.0));
        assert!(finite_diff_grad(|_| Ok(f64::NAN), &mut ps, 1e-5).is_err());
        assert!(finite_diff_grad(|_| Ok(1.0), &mut ps, 0.0).is_err());
    }
}
