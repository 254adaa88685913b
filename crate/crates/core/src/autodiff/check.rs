use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares the gradient of the scalar built by `build` with respect to every
/// value in `store` against central finite differences of width `2 * step`.
///
/// An entry passes when `|analytic - numeric| <= rel_tol * max(|analytic|,
/// |numeric|)` or the absolute difference is below `abs_floor`.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    build: F,
    step: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let root = build(&mut g, store)?;
    g.backward_into(root, &mut [store])?;
    let analytic: Vec<Vec<f64>> = store.params().iter().map(|p| p.grad.clone()).collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let root = build(&mut g, store)?;
        Ok(g.value(root).item())
    };

    let mut report = GradCheck {
        checked: 0,
        failures: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for (j, &a) in analytic[pi].iter().enumerate() {
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + step;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[j] = orig - step;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[j] = orig;

            let numeric = (up - down) / (2.0 * step);
            let diff = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel = if scale > 0.0 { diff / scale } else { 0.0 };
            report.checked += 1;
            if diff > abs_floor && rel > rel_tol {
                report.failures += 1;
            }
            if diff > abs_floor && rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.param(id).name.clone(), j));
            }
        }
    }
    store.zero_grads();
    Ok(report)
}
