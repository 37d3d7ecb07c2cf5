//! Central finite-difference oracle for gradient verification.
//!
//! The oracle only re-runs the forward pass with perturbed leaves; it never
//! touches the backward closures it is used to check.

use super::{Arr, Graph, Var};

/// Gradients of a scalar-valued graph function with respect to each input,
/// estimated by central differences with step `h`.
pub fn finite_difference_gradients(
    f: &dyn Fn(&mut Graph, &[Var]) -> Var,
    inputs: &[Arr],
    h: f64,
) -> Vec<Arr> {
    let eval = |xs: &[Arr]| -> f64 {
        let mut g = Graph::inference();
        let vars: Vec<Var> = xs.iter().map(|a| g.leaf(a.clone())).collect();
        let out = f(&mut g, &vars);
        g.scalar(out)
    };
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = Arr::zeros(inputs[i].raw_dim());
        for flat in 0..inputs[i].len() {
            let mut plus: Vec<Arr> = inputs.to_vec();
            *plus[i].iter_mut().nth(flat).unwrap() += h;
            let mut minus: Vec<Arr> = inputs.to_vec();
            *minus[i].iter_mut().nth(flat).unwrap() -= h;
            let d = (eval(&plus) - eval(&minus)) / (2.0 * h);
            *grad.iter_mut().nth(flat).unwrap() = d;
        }
        out.push(grad);
    }
    out
}

/// Compare backward-pass gradients against the finite-difference oracle.
///
/// Per-element relative error uses `max(|a|, |b|, floor)` in the denominator
/// with a floor of 1e-6 so that near-zero gradients are compared absolutely.
pub fn check_gradients(
    f: &dyn Fn(&mut Graph, &[Var]) -> Var,
    inputs: &[Arr],
    h: f64,
    rel_tol: f64,
) -> Result<(), String> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone())).collect();
    let out = f(&mut g, &vars);
    if g.value(out).len() != 1 {
        return Err("gradient check requires a scalar output".into());
    }
    let grads = g.backward(out);
    let fd = finite_difference_gradients(f, inputs, h);
    for (i, fd_grad) in fd.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Arr::zeros(inputs[i].raw_dim()));
        for (flat, (a, b)) in analytic.iter().zip(fd_grad.iter()).enumerate() {
            let denom = a.abs().max(b.abs()).max(1e-6);
            let rel = (a - b).abs() / denom;
            if rel > rel_tol {
                return Err(format!(
                    "input {i} element {flat}: analytic {a:.9e} vs finite-diff {b:.9e} (rel {rel:.3e})"
                ));
            }
        }
    }
    Ok(())
}
