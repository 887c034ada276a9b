use super::store::ParameterStore;
use super::tensor::Tensor;

/// Outcome of a finite-difference sweep: per-parameter worst relative
/// error between analytic and central-difference gradients.
#[derive(Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_element: usize,
}

impl GradCheckReport {
    /// Parameters whose worst element exceeds `tol`.
    pub fn failures(&self, tol: f64) -> Vec<&str> {
        self.per_param
            .iter()
            .filter(|(_, e)| *e > tol)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn ok(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares analytic gradients against five-point central finite
/// differences over every element of every parameter.
///
/// `forward` must be a deterministic pure loss (dropout disabled);
/// `forward_backward` must run the same computation once, leaving
/// analytic gradients in the store. The five-point stencil cancels the
/// O(ε²) truncation term, so a relatively large `epsilon` (1e-4 is a
/// good default at 64-bit) keeps subtraction roundoff small too.
/// Relative error per element is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    store: &mut ParameterStore,
    forward: impl Fn(&ParameterStore) -> f64,
    forward_backward: impl FnOnce(&mut ParameterStore) -> f64,
    epsilon: f64,
) -> GradCheckReport {
    store.zero_grads();
    let _ = forward_backward(store);
    let analytic: Vec<Tensor> = store.ids().map(|id| store.grad(id).clone()).collect();
    store.zero_grads();

    let mut per_param = Vec::new();
    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    let mut worst_element = 0;
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let len = store.value(id).len();
        let mut worst = 0.0f64;
        for e in 0..len {
            let old = store.value(id).as_slice()[e];
            let mut eval_at = |x: f64| {
                store.value_mut(id).as_mut_slice()[e] = x;
                forward(store)
            };
            let f1 = eval_at(old + epsilon);
            let f_1 = eval_at(old - epsilon);
            let f2 = eval_at(old + 2.0 * epsilon);
            let f_2 = eval_at(old - 2.0 * epsilon);
            store.value_mut(id).as_mut_slice()[e] = old;
            let numeric = (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * epsilon);
            let a = analytic[id.0].as_slice()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
            }
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_param = name.clone();
                worst_element = e;
            }
        }
        per_param.push((name, worst));
    }
    GradCheckReport {
        per_param,
        max_rel_err,
        worst_param,
        worst_element,
    }
}
