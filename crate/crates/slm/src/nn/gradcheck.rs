//! Central finite differences against reverse-mode gradients. Runs in
//! 64-bit; the relative-error floor keeps near-zero coordinates from
//! dominating.

use super::tensor::{GradStore, NnError, ParamStore};

/// Compare analytic gradients against central differences on every listed
/// coordinate (or all coordinates when `coords` is `None`) and return the
/// maximum relative error.
pub fn grad_check<F>(
    params: &mut ParamStore<f64>,
    analytic: &GradStore<f64>,
    mut loss_fn: F,
    eps: f64,
    coords: Option<&[(usize, usize)]>,
) -> Result<f64, NnError>
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    if eps <= 0.0 {
        return Err(NnError::InvalidEpsilon);
    }
    let all: Vec<(usize, usize)> = match coords {
        Some(c) => c.to_vec(),
        None => params
            .ids()
            .enumerate()
            .flat_map(|(idx, id)| (0..params.get(id).len()).map(move |k| (idx, k)))
            .collect(),
    };
    let ids: Vec<_> = params.ids().collect();
    let mut worst: f64 = 0.0;
    let mut worst_info: Option<(String, usize, f64, f64)> = None;
    for (idx, k) in all {
        let id = ids[idx];
        let orig = params.get(id).data[k];
        params.get_mut(id).data[k] = orig + eps;
        let up = loss_fn(params);
        params.get_mut(id).data[k] = orig - eps;
        let down = loss_fn(params);
        params.get_mut(id).data[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(NnError::NonFinite(format!(
                "loss at perturbed {}[{k}]",
                params.name(id)
            )));
        }
        let numeric = (up - down) / (2.0 * eps);
        let ana = analytic.grads[idx][k];
        let denom = ana.abs().max(numeric.abs()).max(1e-3);
        let rel = (ana - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
            worst_info = Some((params.name(id).to_string(), k, ana, numeric));
        }
        if rel > 1e-4 && std::env::var("SLM_GRADCHECK_VERBOSE").is_ok() {
            eprintln!("  off: {}[{k}] a={ana:.6e} n={numeric:.6e} rel={rel:.3e}", params.name(id));
        }
    }
    if std::env::var("SLM_GRADCHECK_VERBOSE").is_ok() {
        if let Some((name, k, a, n)) = &worst_info {
            eprintln!("worst coordinate: {name}[{k}] analytic {a:.9e} numeric {n:.9e}");
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    #[test]
    fn quadratic_loss_is_exact() {
        // loss = 0.5 * |theta|^2, gradient = theta exactly.
        let mut params = ParamStore::<f64>::new();
        let id = params.add("theta", Tensor::from_vec(&[3], vec![0.7, -1.3, 2.2]).unwrap());
        let mut analytic = GradStore::zeros_like(&params);
        analytic.grads[0].copy_from_slice(&params.get(id).data);
        let worst = grad_check(
            &mut params,
            &analytic,
            |p| 0.5 * p.get(id).data.iter().map(|v| v * v).sum::<f64>(),
            1e-5,
            None,
        )
        .unwrap();
        assert!(worst < 1e-9, "worst = {worst}");
    }

    #[test]
    fn zero_epsilon_rejected() {
        let mut params = ParamStore::<f64>::new();
        params.add("theta", Tensor::zeros(&[1]));
        let analytic = GradStore::zeros_like(&params);
        assert_eq!(
            grad_check(&mut params, &analytic, |_| 0.0, 0.0, None).unwrap_err(),
            NnError::InvalidEpsilon
        );
    }

    #[test]
    fn non_finite_loss_reported() {
        let mut params = ParamStore::<f64>::new();
        params.add("theta", Tensor::zeros(&[1]));
        let analytic = GradStore::zeros_like(&params);
        let err = grad_check(&mut params, &analytic, |_| f64::NAN, 1e-5, None).unwrap_err();
        assert!(matches!(err, NnError::NonFinite(_)));
    }
}
