//! Exogenous reference trajectories `Y_ref(t)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference generator. All kinds are stateless functions of time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// `1 + e^(-0.01 t) cos(1.5 t / 20)` up to and including `t = 10`,
    /// then `0.5 (1 + e^(-0.01 (t - 10)))` up to `t = 20`, held afterwards.
    #[default]
    BenchmarkPiecewise,
    Constant {
        value: Vec<f64>,
    },
    /// `offset + amplitude * sin(omega t + phase)` per component.
    Sinusoid {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    /// Piecewise-linear interpolation through `(times[k], values[k])`, held
    /// constant outside the table.
    Table {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

const PIECEWISE_SWITCH: f64 = 10.0;
const PIECEWISE_END: f64 = 20.0;

fn benchmark_piecewise(t: f64) -> f64 {
    if t <= PIECEWISE_SWITCH {
        1.0 + (-0.01 * t).exp() * (1.5 * t / 20.0).cos()
    } else {
        let t = t.min(PIECEWISE_END);
        0.5 * (1.0 + (-0.01 * (t - PIECEWISE_SWITCH)).exp())
    }
}

impl ReferenceSpec {
    /// Output dimension `q`.
    pub fn dim(&self) -> usize {
        match self {
            ReferenceSpec::BenchmarkPiecewise => 1,
            ReferenceSpec::Constant { value } => value.len(),
            ReferenceSpec::Sinusoid { offset, .. } => offset.len(),
            ReferenceSpec::Table { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.dim();
        if q == 0 {
            return Err(Error::config("reference", "output dimension q must be at least 1"));
        }
        match self {
            ReferenceSpec::BenchmarkPiecewise | ReferenceSpec::Constant { .. } => {}
            ReferenceSpec::Sinusoid { amplitude, omega, phase, .. } => {
                if amplitude.len() != q || omega.len() != q || !(phase.is_empty() || phase.len() == q) {
                    return Err(Error::config(
                        "reference",
                        "sinusoid offset/amplitude/omega/phase lengths differ",
                    ));
                }
            }
            ReferenceSpec::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::config("reference.times", "need one value row per breakpoint"));
                }
                if values.iter().any(|row| row.len() != q) {
                    return Err(Error::config("reference.values", "rows must share one length"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config("reference.times", "breakpoints must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the reference at `t >= 0`.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("reference evaluated at negative time {t}")));
        }
        let v = match self {
            ReferenceSpec::BenchmarkPiecewise => DVector::from_element(1, benchmark_piecewise(t)),
            ReferenceSpec::Constant { value } => DVector::from_column_slice(value),
            ReferenceSpec::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => DVector::from_fn(offset.len(), |i, _| {
                let ph = phase.get(i).copied().unwrap_or(0.0);
                offset[i] + amplitude[i] * (omega[i] * t + ph).sin()
            }),
            ReferenceSpec::Table { times, values } => {
                let k = times.partition_point(|&tk| tk <= t);
                if k == 0 {
                    DVector::from_column_slice(&values[0])
                } else if k == times.len() {
                    DVector::from_column_slice(&values[k - 1])
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    DVector::from_fn(values[k].len(), |i, _| {
                        (1.0 - w) * values[k - 1][i] + w * values[k][i]
                    })
                }
            }
        };
        Ok(v)
    }
}

/// Convenience wrapper for [`ReferenceSpec::eval`].
pub fn eval_reference(spec: &ReferenceSpec, t: f64) -> Result<DVector<f64>> {
    spec.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark(t: f64) -> f64 {
        eval_reference(&ReferenceSpec::BenchmarkPiecewise, t).unwrap()[0]
    }

    #[test]
    fn piecewise_samples() {
        assert_eq!(benchmark(0.0), 2.0);
        assert!((benchmark(10.0) - 1.662059).abs() < 1e-5);
        assert!((benchmark(20.0) - 0.95242).abs() < 1e-5);
    }

    #[test]
    fn jump_at_switch_is_preserved() {
        let left = benchmark(10.0);
        let right = benchmark(10.0 + 1e-12);
        assert!((left - 1.662059).abs() < 1e-5);
        assert!((right - 1.0).abs() < 1e-9);
    }

    #[test]
    fn holds_after_end() {
        assert_eq!(benchmark(20.0), benchmark(35.0));
    }

    #[test]
    fn bounded_on_horizon() {
        for k in 0..=20_000 {
            let y = benchmark(k as f64 * 1e-3);
            assert!(y > 0.0 && y <= 2.0);
        }
    }

    #[test]
    fn negative_time_is_rejected() {
        assert!(matches!(
            eval_reference(&ReferenceSpec::BenchmarkPiecewise, -0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn table_interpolates_and_holds() {
        let spec = ReferenceSpec::Table {
            times: vec![0.0, 1.0, 3.0],
            values: vec![vec![0.0], vec![2.0], vec![1.0]],
        };
        spec.validate().unwrap();
        assert_eq!(spec.eval(0.5).unwrap()[0], 1.0);
        assert_eq!(spec.eval(2.0).unwrap()[0], 1.5);
        assert_eq!(spec.eval(9.0).unwrap()[0], 1.0);

        let bad = ReferenceSpec::Table {
            times: vec![0.0, 0.0],
            values: vec![vec![0.0], vec![1.0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_and_sinusoid() {
        let c = ReferenceSpec::Constant { value: vec![1.0, -1.0] };
        assert_eq!(c.dim(), 2);
        assert_eq!(c.eval(3.0).unwrap().as_slice(), &[1.0, -1.0]);
        let s = ReferenceSpec::Sinusoid {
            offset: vec![1.0],
            amplitude: vec![0.5],
            omega: vec![std::f64::consts::PI],
            phase: vec![],
        };
        assert!((s.eval(0.5).unwrap()[0] - 1.5).abs() < 1e-15);
    }
}
