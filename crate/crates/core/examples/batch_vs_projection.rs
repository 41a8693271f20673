//! Policy iteration on data from the exactly discretized desired model.
//!
//! A fixed exploratory behaviour policy generates transitions once. Each
//! iteration fits the kernel of the current target policy by batch least
//! squares on that data, then moves the policy to the kernel's greedy gain.
//! The result is compared with the Riccati solution, and a projection
//! (normalized-gradient) critic is cycled over the same data for comparison.

use mfirl::dynamics::ProcessModel;
use mfirl::learner::{bellman_regressor, critic_update, policy_from_kernel, s_to_theta, KernelMatrix, Learner};
use mfirl::oracle::{batch_bellman_solve, lqr_gain, qfun_kernel, solve_dare, DiscreteModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mfirl::error::Result<()> {
    let pm = ProcessModel::benchmark();
    let q = DMatrix::identity(3, 3) * 0.05;
    let r = DMatrix::from_element(1, 1, 0.01);
    let dm = DiscreteModel::new(&pm.a_hat, &pm.b_hat, &q, &r, 0.01)?;
    let sol = solve_dare(&dm.a_d, &dm.b_d, &dm.q_bar, &dm.r_bar, 1e-14, 1_000_000)?;
    let k_star = lqr_gain(&sol.p, &dm)?;
    let s_star = qfun_kernel(&sol.p, &dm)?;
    println!("Riccati gain K*     = {:.6?}", k_star.as_slice());

    // Behaviour data: stabilizing feedback plus random excitation, restarted
    // from random states so every quadratic monomial is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let behaviour = DMatrix::from_row_slice(1, 3, &[-2.0, -0.5, -1.5]);
    let mut samples = Vec::new();
    for _ in 0..20 {
        let mut x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..100 {
            let u = &behaviour * &x + DVector::from_element(1, rng.random_range(-1.0..1.0));
            let x_next = &dm.a_d * &x + &dm.b_d * &u;
            let phi = x.dot(&(&dm.q_bar * &x)) + u.dot(&(&dm.r_bar * &u));
            samples.push((x.clone(), u, x_next.clone(), phi));
            x = x_next;
        }
    }
    // With V = ½ZᵀSZ and stage cost ½(xᵀQx + uᵀRu)δ = xᵀQ̄x + uᵀR̄u, the fitted
    // kernel should approach 2S*.
    let mut gain = DMatrix::zeros(1, 3);
    for it in 0..12 {
        let data: Vec<_> = samples
            .iter()
            .map(|(x, u, xn, phi)| {
                let z_t = Learner::joint(x, u);
                let z_n = Learner::joint(xn, &(&gain * xn));
                (bellman_regressor(&z_t, &z_n).unwrap(), *phi)
            })
            .collect();
        let batch = batch_bellman_solve(&data)?;
        let kernel = KernelMatrix::from_theta(&batch.theta, 3)?;
        gain = policy_from_kernel(&kernel, 1e-12)?;
        println!(
            "iteration {it:2}: gain = {:.6?}  |gain - K*| = {:.2e}  rel. residual = {:.1e}",
            gain.as_slice(),
            (&gain - &k_star).amax(),
            batch.relative_residual
        );
    }
    let final_data: Vec<_> = samples
        .iter()
        .map(|(x, u, xn, phi)| {
            let z_n = Learner::joint(xn, &(&k_star * xn));
            (bellman_regressor(&Learner::joint(x, u), &z_n).unwrap(), *phi)
        })
        .collect();
    let batch = batch_bellman_solve(&final_data)?;
    let target = s_to_theta(&(s_star.matrix() * 2.0));
    println!("batch kernel vs 2S*: max |ΔΘ| = {:.2e}", (&batch.theta - &target).amax());

    // Projection critic cycled over the same data under the optimal policy,
    // once with a small regularizer and once with the default paces. The
    // regressors here are O(|x|²) ≈ 1 while α = 1.8, so the default pace
    // needs many more sweeps.
    for (sigma, alpha) in [(1.0, 1e-6), (0.5, 1.8)] {
        let mut theta = DVector::zeros(target.len());
        for sweep in 1..=2000 {
            for (z, phi) in &final_data {
                theta = critic_update(&theta, z, *phi, sigma, alpha);
            }
            if sweep % 500 == 0 {
                println!(
                    "σ = {sigma}, α = {alpha:e}: sweep {sweep:4}: max |Θ - Θ_batch| = {:.2e}",
                    (&theta - &batch.theta).amax()
                );
            }
        }
    }
    Ok(())
}
