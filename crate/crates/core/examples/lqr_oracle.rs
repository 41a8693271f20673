//! Riccati oracle for the closed-loop strategy: ZOH discretization of the
//! desired model, fixed-point DARE, the Q-function kernel and its greedy gain.

use mfirl::dynamics::{eigenvalues, spectral_radius, ProcessModel};
use mfirl::learner::policy_from_kernel;
use mfirl::oracle::{dare_residual, lqr_gain, qfun_kernel, solve_dare, DiscreteModel};
use nalgebra::DMatrix;

fn main() -> mfirl::error::Result<()> {
    let pm = ProcessModel::benchmark();
    let q = DMatrix::identity(3, 3) * 0.05;
    let r = DMatrix::from_element(1, 1, 0.01);
    for delta in [0.01, 0.02, 0.05] {
        let dm = DiscreteModel::new(&pm.a_hat, &pm.b_hat, &q, &r, delta)?;
        let sol = solve_dare(&dm.a_d, &dm.b_d, &dm.q_bar, &dm.r_bar, 1e-14, 1_000_000)?;
        let kernel = qfun_kernel(&sol.p, &dm)?;
        let k_kernel = policy_from_kernel(&kernel, 1e-14)?;
        let k_formula = lqr_gain(&sol.p, &dm)?;
        let closed = &pm.a_hat + &pm.b_hat * &k_kernel;
        println!("δ = {delta}");
        println!("  DARE: {} iterations, residual {:.1e}", sol.iterations, dare_residual(&dm, &sol.p)?);
        println!("  gain from kernel  {:.6?}", k_kernel.as_slice());
        println!("  textbook gain     {:.6?}", k_formula.as_slice());
        println!("  max difference    {:.1e}", (&k_kernel - &k_formula).amax());
        println!("  discrete radius   {:.6}", spectral_radius(&(&dm.a_d + &dm.b_d * &k_kernel))?);
        let eig: Vec<String> = eigenvalues(&closed)?.iter().map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();
        println!("  A_hat + B_hat K   {}", eig.join(", "));
    }
    Ok(())
}
