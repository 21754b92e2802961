//! Central finite-difference oracle for gradient verification.
//!
//! The numeric side only ever calls the forward pass, so it stays
//! independent of the analytic backward rules it is checking. Always run
//! at f64.

use super::{Result, Tensor};

/// Max relative error between analytic and numeric gradients, with a small
/// absolute floor so near-zero entries compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Check the gradients of a scalar-valued tensor function w.r.t. every
/// input by central differences at `step`. Returns the max relative error
/// over all input elements.
pub fn check_scalar_fn<F>(inputs: &[(Vec<usize>, Vec<f64>)], step: f64, f: F) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(shape, data)| Tensor::from_vec(shape, data.clone(), true))
        .collect::<Result<_>>()?;
    let out = f(&leaves)?;
    out.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()]))
        .collect();

    let eval = |values: &[Vec<f64>]| -> Result<f64> {
        let ts: Vec<Tensor<f64>> = inputs
            .iter()
            .zip(values.iter())
            .map(|((shape, _), data)| Tensor::from_vec(shape, data.clone(), false))
            .collect::<Result<_>>()?;
        Ok(f(&ts)?.item())
    };

    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    let mut worst = 0.0f64;
    for (i, (_, data)) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; data.len()];
        for j in 0..data.len() {
            let mut plus = base.clone();
            plus[i][j] += step;
            let mut minus = base.clone();
            minus[i][j] -= step;
            numeric[j] = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
        }
        worst = worst.max(max_rel_err(&analytic[i], &numeric));
    }
    Ok(worst)
}

/// Deterministic pseudo-random values in [-1, 1] for test fixtures.
pub fn test_values(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let h = crate::rng::mix64(seed.wrapping_mul(0x9e37).wrapping_add(i as u64));
            (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}
