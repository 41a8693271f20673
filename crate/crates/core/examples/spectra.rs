//! Open- and closed-loop spectra of the benchmark process and its desired
//! model, for the reference feedback gain.

use mfirl::dynamics::{eigenvalues, spectral_abscissa, ProcessModel};
use nalgebra::DMatrix;

fn show(label: &str, m: &DMatrix<f64>) -> mfirl::error::Result<()> {
    let eig: Vec<String> = eigenvalues(m)?
        .iter()
        .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
        .collect();
    println!("{label:<24} {}   (abscissa {:.4})", eig.join(", "), spectral_abscissa(m)?);
    Ok(())
}

fn main() -> mfirl::error::Result<()> {
    let pm = ProcessModel::benchmark();
    let gain = DMatrix::from_row_slice(1, 3, &[-15.9517, -4.0410, -4.9822]);
    show("A", &pm.a)?;
    show("A_hat", &pm.a_hat)?;
    show("A + B K", &(&pm.a + &pm.b * &gain))?;
    show("A_hat + B_hat K", &(&pm.a_hat + &pm.b_hat * &gain))?;
    Ok(())
}
