//! Central finite-difference gradient checking.
//!
//! The checker perturbs raw leaf entries one at a time and compares the
//! two-point difference quotient against the tape's analytic gradient. It
//! never goes through [`crate::tape::backward`] for the reference values, so
//! it serves as an independent oracle for the autodiff engine.

use crate::tensor::Tensor;

/// Outcome of comparing one analytic gradient entry against its
/// finite-difference estimate.
#[derive(Debug, Clone)]
pub struct GradMismatch {
    pub leaf: usize,
    pub flat_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Relative error with a floor on the denominator so that near-zero gradient
/// pairs compare on an absolute scale instead of blowing up.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Central finite differences of `f` with respect to every entry of `inputs`,
/// using step `h`. `f` must be deterministic in its inputs.
pub fn numeric_gradients(
    inputs: &[Tensor],
    h: f64,
    mut f: impl FnMut(&[Tensor]) -> f64,
) -> Vec<Tensor> {
    let mut grads = Vec::with_capacity(inputs.len());
    for leaf in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[leaf].shape());
        for i in 0..inputs[leaf].numel() {
            let mut work: Vec<Tensor> = inputs.to_vec();
            work[leaf].data_mut()[i] += h;
            let up = f(&work);
            work[leaf].data_mut()[i] -= 2.0 * h;
            let down = f(&work);
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Compare analytic gradients against central finite differences on a subset
/// of coordinates (all of them when `coords` is `None`). Returns every entry
/// whose floored relative error exceeds `tol`.
pub fn compare_gradients(
    inputs: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    tol: f64,
    floor: f64,
    coords: Option<&[(usize, usize)]>,
    mut f: impl FnMut(&[Tensor]) -> f64,
) -> Vec<GradMismatch> {
    let all: Vec<(usize, usize)> = match coords {
        Some(c) => c.to_vec(),
        None => (0..inputs.len())
            .flat_map(|l| (0..inputs[l].numel()).map(move |i| (l, i)))
            .collect(),
    };
    let mut mismatches = Vec::new();
    for (leaf, i) in all {
        let mut work: Vec<Tensor> = inputs.to_vec();
        work[leaf].data_mut()[i] += h;
        let up = f(&work);
        work[leaf].data_mut()[i] -= 2.0 * h;
        let down = f(&work);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[leaf].data()[i];
        let rel = relative_error(a, numeric, floor);
        if rel > tol {
            mismatches.push(GradMismatch {
                leaf,
                flat_index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    mismatches
}
