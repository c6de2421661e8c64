use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::parallel::Execution;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖₂ / (‖numeric‖₂ + 1e-8)` per parameter tensor.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Compares reverse-mode gradients of `loss_fn` with central finite
/// differences of step `step`, perturbing every scalar of every parameter.
///
/// `loss_fn` must be deterministic given the store.
pub fn finite_difference_check<F>(store: &ParamStore, loss_fn: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var> + Sync,
{
    let mut tape = Tape::new();
    let loss = loss_fn(store, &mut tape)?;
    let analytic = tape.backward(loss)?.aligned(store);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::no_grad();
        let l = loss_fn(s, &mut t)?;
        Ok(t.value(l).data()[0])
    };

    let ids: Vec<_> = store.ids().collect();
    let numeric: Vec<Result<Tensor>> = Execution::default().map(&ids, |&id| {
        let mut local = store.clone();
        let mut grad = Tensor::zeros(store.get(id).shape());
        for k in 0..grad.len() {
            let orig = local.get(id).data()[k];
            local.get_mut(id).data_mut()[k] = orig + step;
            let up = eval(&local)?;
            local.get_mut(id).data_mut()[k] = orig - step;
            let down = eval(&local)?;
            local.get_mut(id).data_mut()[k] = orig;
            grad.data_mut()[k] = (up - down) / (2.0 * step);
        }
        Ok(grad)
    });

    let mut per_param = Vec::with_capacity(ids.len());
    let mut max_rel_error = 0.0f64;
    for ((id, a), n) in ids.into_iter().zip(&analytic).zip(numeric) {
        let n = n?;
        let rel = a.sub(&n)?.norm() / (n.norm() + 1e-8);
        max_rel_error = max_rel_error.max(rel);
        per_param.push((store.name(id).to_string(), rel));
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        s.add("w", Tensor::uniform(&[3, 2], 1.0, &mut rng));
        s.add("b", Tensor::uniform(&[1, 2], 1.0, &mut rng));
        s
    }

    fn linear_loss(s: &ParamStore, tape: &mut Tape) -> Result<Var> {
        let x = tape.constant(Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?);
        let w = tape.param(s, s.find("w").unwrap());
        let b = tape.param(s, s.find("b").unwrap());
        let xw = tape.matmul(x, w)?;
        let p = tape.add_row_broadcast(xw, b)?;
        let y = tape.constant(Tensor::filled(&[4, 2], 0.3));
        tape.mse(p, y)
    }

    #[test]
    fn linear_model_is_exact() {
        let r = finite_difference_check(&store(), linear_loss, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn corrupted_rule_is_detected() {
        // tanh with a derivative that is off by a factor of two
        let r = finite_difference_check(
            &store(),
            |s, tape| {
                let x = tape.constant(Tensor::matrix(2, 3, vec![0.5, -0.1, 0.9, 0.3, 0.2, -0.7])?);
                let w = tape.param(s, s.find("w").unwrap());
                let p = tape.matmul(x, w)?;
                let h = tape.map_elementwise(p, f64::tanh, |v| 2.0 * (1.0 - v.tanh().powi(2)));
                Ok(tape.sum(h))
            },
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");
    }
}
