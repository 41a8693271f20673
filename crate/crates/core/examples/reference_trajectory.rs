//! Samples the built-in piecewise reference and a table reference.

use mfirl::reference::ReferenceSpec;

fn main() -> mfirl::error::Result<()> {
    let benchmark = ReferenceSpec::BenchmarkPiecewise;
    let table = ReferenceSpec::Table {
        times: vec![0.0, 5.0, 10.0],
        values: vec![vec![0.0], vec![1.0], vec![0.5]],
    };
    table.validate()?;
    println!("{:>6} {:>10} {:>10}", "t", "piecewise", "table");
    for k in 0..=24 {
        let t = k as f64;
        println!("{t:6.1} {:10.6} {:10.6}", benchmark.eval(t)?[0], table.eval(t)?[0]);
    }
    println!("jump at t = 10: {:.6} -> {:.6}", benchmark.eval(10.0)?[0], benchmark.eval(10.0 + 1e-9)?[0]);
    Ok(())
}
