//! Normalized projection updates contract the parameter error for
//! 0 < σ < 2 and can diverge outside that range.

use mfirl::learner::{actor_update, critic_update};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let alpha = 1.8;
    for sigma in [0.1, 0.5, 1.0, 1.9, 2.5] {
        let mut worst_critic: f64 = 0.0;
        let mut worst_actor: f64 = 0.0;
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let z = DVector::from_fn(10, |_, _| scale * rng.random_range(-1.0..1.0));
            let theta_star = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
            let theta = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
            let next = critic_update(&theta, &z, theta_star.dot(&z), sigma, alpha);
            worst_critic = worst_critic.max((&next - &theta_star).norm() / (&theta - &theta_star).norm());

            let f = DVector::from_fn(3, |_, _| scale * rng.random_range(-1.0..1.0));
            let pi_star = DMatrix::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0));
            let pi = DMatrix::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0));
            let next = actor_update(&pi, &f, &(&pi_star * &f), sigma, alpha);
            worst_actor = worst_actor.max((&next - &pi_star).norm() / (&pi - &pi_star).norm());
        }
        println!("σ = {sigma:3}: worst error ratio critic {worst_critic:.4}, actor {worst_actor:.4}");
    }

    let z = DVector::from_element(1, 30.0);
    let mut theta = DVector::from_element(1, 0.0);
    print!("σ = 2.5 on a fixed regressor, |residual|:");
    for _ in 0..6 {
        print!(" {:.3e}", (theta.dot(&z) - 1.0f64).abs());
        theta = critic_update(&theta, &z, 1.0, 2.5, alpha);
    }
    println!();
}
