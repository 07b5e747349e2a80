use super::{Array2, MathError, NodeId, Tape};

/// Compares tape gradients of `f` against central finite differences.
///
/// `f` receives a fresh tape and the node holding `params`, and must return
/// a scalar node. The result is the maximum over coordinates of
/// `|analytic - numeric| / max(1, |numeric|)`; any failure or non-finite
/// intermediate yields `f64::INFINITY`.
pub fn finite_diff_check<F>(f: F, params: &Array2, eps: f64) -> f64
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, MathError>,
{
    finite_diff_check_many(|tape, ids| f(tape, ids[0]), std::slice::from_ref(params), eps)
}

/// [`finite_diff_check`] over several parameter arrays at once.
pub fn finite_diff_check_many<F>(f: F, params: &[Array2], eps: f64) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, MathError>,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let eval = |values: &[Array2]| -> Option<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &ids).ok()?;
        let v = tape.value(out);
        (v.shape() == (1, 1) && v.item().is_finite()).then(|| v.item())
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|v| tape.param(v.clone())).collect();
    let Ok(loss) = f(&mut tape, &ids) else {
        return f64::INFINITY;
    };
    let Ok(grads) = tape.backward(loss) else {
        return f64::INFINITY;
    };

    let mut worst = 0.0_f64;
    let mut probe = params.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.get_or_zeros(*id, params[k].shape());
        for i in 0..params[k].len() {
            let orig = params[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let plus = eval(&probe);
            probe[k].data_mut()[i] = orig - eps;
            let minus = eval(&probe);
            probe[k].data_mut()[i] = orig;
            let (Some(plus), Some(minus)) = (plus, minus) else {
                return f64::INFINITY;
            };
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            if !a.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    worst
}
