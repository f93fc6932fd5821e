use super::{Tape, Tensor, TensorError, Var};

/// Denominator floor for the relative error, so that gradients near zero are
/// compared absolutely.
pub const ABS_FLOOR: f64 = 1e-5;

/// Compares backward-pass gradients against central differences.
///
/// `loss_fn` records a scalar loss on a fresh tape given the parameter
/// handles; it is called once for the analytic gradients and twice per
/// parameter entry. Returns the largest
/// `|analytic − numeric| / max(|analytic|, |numeric|, ABS_FLOOR)`.
pub fn finite_diff_check<F, E>(loss_fn: F, params: &[Tensor], eps: f64) -> Result<f64, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(TensorError::Invalid(format!("eps {eps} outside (0, 1e-2]")).into());
    }
    let eval = |ps: &[Tensor]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = loss_fn(&mut tape, &vars)?;
        let v = tape.value(loss);
        if v.len() != 1 {
            return Err(TensorError::Shape(format!("loss is {:?}", v.shape())).into());
        }
        if !v.item().is_finite() {
            return Err(TensorError::NonFinite(format!("loss value {}", v.item())).into());
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.len() {
            let orig = p.data()[j];
            probe[pi].data_mut()[j] = orig + eps;
            let up = eval(&probe)?;
            probe[pi].data_mut()[j] = orig - eps;
            let down = eval(&probe)?;
            probe[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[j];
            let denom = a.abs().max(numeric.abs()).max(ABS_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches() {
        let x = Tensor::row_vector(vec![1.0, 2.0, 3.0]);
        let err = finite_diff_check::<_, TensorError>(|t, v| Ok(t.sum_squares(v[0])), std::slice::from_ref(&x), 1e-4).unwrap();
        assert!(err < 1e-6, "{err}");

        let mut tape = Tape::new();
        let xv = tape.param(x);
        let l = tape.sum_squares(xv);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(xv).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let x = Tensor::row_vector(vec![0.5, -0.5]);
        let err = finite_diff_check::<_, TensorError>(
            |t, _| Ok(t.constant(Tensor::scalar(7.0))),
            &[x],
            1e-4,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_bad_eps_and_non_finite() {
        let x = Tensor::row_vector(vec![1.0]);
        assert!(finite_diff_check::<_, TensorError>(|t, v| Ok(t.sum_squares(v[0])), std::slice::from_ref(&x), 0.0).is_err());
        assert!(finite_diff_check::<_, TensorError>(|t, v| Ok(t.sum_squares(v[0])), std::slice::from_ref(&x), 0.1).is_err());
        let r = finite_diff_check::<_, TensorError>(|t, _| Ok(t.constant(Tensor::scalar(f64::INFINITY))), &[x], 1e-4);
        assert!(matches!(r, Err(TensorError::NonFinite(_))));
    }
}
