//! Central finite differences, used as an independent oracle for the
//! reverse-mode gradients.

use super::Tensor;

/// Central-difference gradient of `f` at `params` with step `h`.
pub fn finite_difference<F>(params: &[Tensor], h: f64, mut f: F) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut grad = Tensor::zeros(params[i].shape());
        for j in 0..params[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = f(&work);
            work[i].data_mut()[j] = orig - h;
            let down = f(&work);
            work[i].data_mut()[j] = orig;
            grad.data_mut()[j] = (up - down) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// Largest elementwise `|a − n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
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
    fn cubic_derivative() {
        let p = vec![Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()];
        let g = finite_difference(&p, 1e-5, |t| t[0].data().iter().map(|x| x.powi(3)).sum());
        assert!((g[0].data()[0] - 3.0).abs() < 1e-8);
        assert!((g[0].data()[1] - 12.0).abs() < 1e-8);
    }
}
