use super::{Graph, Tensor};
use crate::{Result, Scalar};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const GRADCHECK_ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)` over checked coordinates.
    pub max_rel_error: f64,
    /// Coordinate achieving the maximum, as `(parameter, flat index)`.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose perturbation moved some ReLU input across zero.
    pub excluded: Vec<(String, usize)>,
}

/// Compares backward-pass gradients of every parameter against central differences
/// `(f(x+h) − f(x−h)) / 2h`.
///
/// A coordinate is excluded (and reported) when either perturbed pass changes the sign
/// pattern of any ReLU input, i.e. the step straddles a kink. The graph is restored to its
/// original values before returning.
pub fn finite_difference_check<T: Scalar>(
    graph: &mut Graph<T>,
    inputs: &[(&str, Tensor<T>)],
    h: T,
) -> Result<GradCheckReport> {
    let out = graph.forward(inputs)?;
    debug_assert_eq!(out.len(), 1);
    let analytic = graph.backward()?;
    let base_pattern = graph.relu_pattern();
    let out_id = graph.output().expect("forward succeeded");

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, excluded: Vec::new() };
    for (name, id) in graph.params() {
        let grad = analytic[&name].clone();
        for k in 0..grad.len() {
            let x0 = graph.value(id).data()[k];

            graph.leaf_mut(id).data_mut()[k] = x0 + h;
            graph.recompute()?;
            let f_plus = graph.value(out_id).item();
            let kink_plus = graph.relu_pattern() != base_pattern;

            graph.leaf_mut(id).data_mut()[k] = x0 - h;
            graph.recompute()?;
            let f_minus = graph.value(out_id).item();
            let kink_minus = graph.relu_pattern() != base_pattern;

            graph.leaf_mut(id).data_mut()[k] = x0;

            if kink_plus || kink_minus {
                report.excluded.push((name.clone(), k));
                continue;
            }
            let numeric = ((f_plus - f_minus) / (h + h)).as_f64();
            let a = grad.data()[k].as_f64();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_ABS_FLOOR);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), k));
            }
        }
    }
    graph.recompute()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_graph_is_exact() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::vector(vec![0.5, -2.0, 3.25]));
        let x = g.param("x", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let ax = g.mul(x, a).unwrap();
        g.sum(ax).unwrap();
        let r = finite_difference_check(&mut g, &[], 1e-5).unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error <= 1e-10, "{r:?}");
    }

    #[test]
    fn relu_kink_is_excluded() {
        let mut g = Graph::<f64>::new();
        let x = g.param("x", Tensor::vector(vec![0.0, 1.0])).unwrap();
        let r = g.relu(x).unwrap();
        g.sum(r).unwrap();
        let rep = finite_difference_check(&mut g, &[], 1e-5).unwrap();
        assert_eq!(rep.excluded, vec![("x".to_string(), 0)]);
        assert_eq!(rep.checked, 1);
        assert!(rep.max_rel_error < 1e-10);
    }

    #[test]
    fn restores_values() {
        let mut g = Graph::<f64>::new();
        let x = g.param("x", Tensor::vector(vec![0.3, 0.7])).unwrap();
        let t = g.tanh(x).unwrap();
        let s = g.sum(t).unwrap();
        let before = g.value(s).item();
        finite_difference_check(&mut g, &[], 1e-5).unwrap();
        assert_eq!(g.value(s).item(), before);
        assert_eq!(g.value(x).data(), &[0.3, 0.7]);
    }
}
