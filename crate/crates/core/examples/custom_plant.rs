//! Runs the learners on a user-defined second-order plant given as TOML,
//! tracking a sinusoidal reference, and with a stabilizing initial gain.

use mfirl::config::{parse_config, Strategy};
use mfirl::control_loop::run_episode;

const CONFIG: &str = r#"
[model]
a = [[0.0, 1.0], [-2.0, -3.0]]
b = [[0.0], [1.0]]
c = [[1.0, 0.0]]
a_hat = [[0.0, 1.0], [-2.1, -2.9]]
b_hat = [[0.0], [1.05]]

[reference]
kind = "sinusoid"
offset = [0.5]
amplitude = [0.2]
omega = [0.5]

[learning]
q = 0.1
r = 0.01
settle_time = 0.5

[learning.closed_loop]
initial_gain = [-1.0, -0.5]

[learning.model_following]
initial_gain = [0.0, -0.05, 0.1]

[run]
horizon = 15.0
"#;

fn main() -> mfirl::error::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let log = run_episode(&cfg)?;
    for s in Strategy::ALL {
        println!("{s:<16} gain {:.5?}", log.final_gain(s).as_slice());
    }
    for t in [0.0, 5.0, 10.0, 15.0] {
        let row = log.rows.iter().find(|r| (r.t - t).abs() < 1e-9).expect("sampled on the δ grid");
        println!("t = {t:4.1}: y = {:.4}, yref = {:.4}, e_mf = {:+.4}", row.y[0], row.yref[0], row.e_mf[0]);
    }
    Ok(())
}
