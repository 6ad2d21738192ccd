//! Central finite differences against the hand-written backward pass.

use iddm_core::denoiser::DenoiserParams;
use iddm_core::objective::{example_loss_and_grad, training_loss, TrainingExample};
use iddm_core::rng::Rng;
use iddm_core::schedule::GammaSchedule;
use iddm_core::Simplex;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;
// Below this magnitude the comparison is effectively absolute; finite
// differences at STEP carry roundoff of order 1e-10.
const REL_FLOOR: f64 = 1e-4;

fn instance() -> DenoiserParams {
    let mut p = DenoiserParams::init(11, 3, 2, 16, 8).unwrap();
    p.randomize_head(&mut Rng::new(12), 0.8);
    p
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn check(params: &DenoiserParams, loss: &dyn Fn(&DenoiserParams) -> f64, grads: &[f64]) {
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for i in 0..params.len() {
        let orig = params.values()[i];
        probe.values_mut()[i] = orig + STEP;
        let up = loss(&probe);
        probe.values_mut()[i] = orig - STEP;
        let down = loss(&probe);
        probe.values_mut()[i] = orig;
        let fd = (up - down) / (2.0 * STEP);
        let err = relative_error(grads[i], fd);
        assert!(
            err < REL_TOL,
            "parameter {i}: analytic {} vs numeric {fd} (rel {err:.2e})",
            grads[i]
        );
        worst = worst.max(err);
    }
    println!("{} parameters, worst relative error {worst:.2e}", params.len());
}

#[test]
fn backward_matches_finite_differences_on_logit_functional() {
    let params = instance();
    let x_t = [2, 0];
    let t = 0.37;
    let mut rng = Rng::new(3);
    let upstream: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let loss = |p: &DenoiserParams| {
        let acts = p.activations(&x_t, t).unwrap();
        acts.logits().iter().zip(&upstream).map(|(z, g)| z * g).sum::<f64>()
    };
    let grads = params.backward(&x_t, t, &upstream).unwrap();
    check(&params, &loss, &grads);
}

#[test]
fn diffusion_loss_gradient_matches_finite_differences() {
    let params = instance();
    let prior = Simplex::new(vec![0.5, 0.3, 0.2]).unwrap();
    let schedule = GammaSchedule::Linear;
    let mut rng = Rng::new(9);
    let batch: Vec<TrainingExample> = [[0usize, 1], [2, 2], [1, 0], [2, 1]]
        .iter()
        .map(|x| TrainingExample::draw(x, 0.125, schedule, &prior, &mut rng).unwrap())
        .collect();
    for lambda in [0.0, 0.35, 1.0] {
        let loss = |p: &DenoiserParams| training_loss(&batch, schedule, lambda, &prior, p).unwrap();
        let mut grads = vec![0.0; params.len()];
        let scale = 1.0 / batch.len() as f64;
        for ex in &batch {
            example_loss_and_grad(ex, schedule, lambda, &prior, &params, scale, &mut grads).unwrap();
        }
        check(&params, &loss, &grads);
    }
}
