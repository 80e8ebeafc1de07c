//! Finite-difference gradient checking for unit tests.

use crate::rng::Rng;

use super::ParameterSet;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Checks `backward` against central differences of `L = r . forward(p, x)`
/// for a random `r`, over every parameter and input coordinate. Returns the
/// worst relative error.
pub fn check_layer_gradients<F, B>(
    params: &mut ParameterSet<f64>,
    x: &[f64],
    rng: &mut Rng,
    forward: F,
    backward: B,
) -> f64
where
    F: Fn(&ParameterSet<f64>, &[f64]) -> Vec<f64>,
    B: Fn(&mut ParameterSet<f64>, &[f64], &[f64]) -> Vec<f64>,
{
    let h = 1e-5;
    let out = forward(params, x);
    let r: Vec<f64> = (0..out.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let loss = |p: &ParameterSet<f64>, x: &[f64]| -> f64 {
        forward(p, x).iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    params.zero_grad();
    let dx = backward(params, x, &r);
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        xp[k] += h;
        let mut xm = x.to_vec();
        xm[k] -= h;
        let numeric = (loss(params, &xp) - loss(params, &xm)) / (2.0 * h);
        worst = worst.max(relative_error(dx[k], numeric));
    }
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for j in 0..params.value(id).len() {
            let analytic = params.grad(id).data()[j];
            let orig = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = orig + h;
            let up = loss(params, x);
            params.value_mut(id).data_mut()[j] = orig - h;
            let down = loss(params, x);
            params.value_mut(id).data_mut()[j] = orig;
            worst = worst.max(relative_error(analytic, (up - down) / (2.0 * h)));
        }
    }
    worst
}
