//! Fixed-depth buffer of sampled tracking errors.
//!
//! The feature for the observer and model-following strategies is the
//! concatenation of the `depth` most recent error samples, oldest first:
//! `[e(t - 2δ); e(t - δ); e(t)]` for the default depth of three.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStack {
    samples: VecDeque<DVector<f64>>,
    depth: usize,
    dim: usize,
}

impl ErrorStack {
    pub fn new(depth: usize, dim: usize) -> Self {
        assert!(depth > 0 && dim > 0, "error stack needs positive depth and dimension");
        Self {
            samples: VecDeque::with_capacity(depth),
            depth,
            dim,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples held, saturating at `depth`.
    pub fn fill(&self) -> usize {
        self.samples.len()
    }

    pub fn is_ready(&self) -> bool {
        self.samples.len() == self.depth
    }

    /// Appends the newest sample, evicting the oldest once full.
    pub fn push(&mut self, e: &DVector<f64>) -> Result<()> {
        if e.len() != self.dim {
            return Err(Error::dims("error sample", self.dim, e.len()));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite error sample".into()));
        }
        if self.samples.len() == self.depth {
            self.samples.pop_front();
        }
        self.samples.push_back(e.clone());
        Ok(())
    }

    /// Stacked feature of length `depth * dim`, oldest sample first.
    pub fn as_vector(&self) -> Result<DVector<f64>> {
        if !self.is_ready() {
            return Err(Error::NotReady {
                fill: self.samples.len(),
                depth: self.depth,
            });
        }
        let mut out = DVector::zeros(self.depth * self.dim);
        for (k, s) in self.samples.iter().enumerate() {
            out.rows_mut(k * self.dim, self.dim).copy_from(s);
        }
        Ok(out)
    }

    /// Every `stride`-th sample counted back from the newest, oldest first.
    ///
    /// Filling a stack of depth `(k - 1) * stride + 1` at a fine rate and
    /// reading it with `stride` yields the `k`-sample coarse feature at every
    /// fine instant, not just on coarse sampling instants.
    pub fn as_strided_vector(&self, stride: usize) -> Result<DVector<f64>> {
        if stride == 0 || !(self.depth - 1).is_multiple_of(stride) {
            return Err(Error::dims("stride", format!("a divisor of {}", self.depth - 1), stride));
        }
        if !self.is_ready() {
            return Err(Error::NotReady {
                fill: self.samples.len(),
                depth: self.depth,
            });
        }
        let blocks = (self.depth - 1) / stride + 1;
        let mut out = DVector::zeros(blocks * self.dim);
        for k in 0..blocks {
            out.rows_mut(k * self.dim, self.dim).copy_from(&self.samples[k * stride]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn warm_up_then_ordering_then_eviction() {
        let mut st = ErrorStack::new(3, 1);
        st.push(&s(1.0)).unwrap();
        assert_eq!(st.fill(), 1);
        assert!(matches!(st.as_vector(), Err(Error::NotReady { fill: 1, depth: 3 })));
        st.push(&s(2.0)).unwrap();
        st.push(&s(3.0)).unwrap();
        assert_eq!(st.as_vector().unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        st.push(&s(4.0)).unwrap();
        assert_eq!(st.fill(), 3);
        assert_eq!(st.as_vector().unwrap().as_slice(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn block_layout() {
        let mut st = ErrorStack::new(3, 2);
        for k in 0..3 {
            st.push(&DVector::from_vec(vec![k as f64, 10.0 + k as f64])).unwrap();
        }
        assert_eq!(st.as_vector().unwrap().as_slice(), &[0.0, 10.0, 1.0, 11.0, 2.0, 12.0]);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut st = ErrorStack::new(3, 2);
        assert!(matches!(st.push(&s(1.0)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_input_fixed_point() {
        let mut st = ErrorStack::new(3, 1);
        for _ in 0..50 {
            st.push(&s(0.0)).unwrap();
        }
        assert_eq!(st.as_vector().unwrap(), DVector::zeros(3));
    }

    #[test]
    fn strided_view_picks_coarse_samples() {
        let mut st = ErrorStack::new(2 * 10 + 1, 1);
        for k in 0..25 {
            st.push(&s(k as f64)).unwrap();
        }
        assert_eq!(st.as_strided_vector(10).unwrap().as_slice(), &[4.0, 14.0, 24.0]);
        assert_eq!(st.as_strided_vector(1).unwrap(), st.as_vector().unwrap());
        assert!(st.as_strided_vector(3).is_err());
        let fresh = ErrorStack::new(21, 1);
        assert!(matches!(fresh.as_strided_vector(10), Err(Error::NotReady { .. })));
    }

    proptest! {
        #[test]
        fn push_shifts_by_one_slot(
            init in prop::collection::vec(-10.0f64..10.0, 3),
            e in -10.0f64..10.0,
        ) {
            let mut st = ErrorStack::new(3, 1);
            for v in &init {
                st.push(&s(*v)).unwrap();
            }
            let before = st.as_vector().unwrap();
            st.push(&s(e)).unwrap();
            let after = st.as_vector().unwrap();
            prop_assert_eq!(after[0], before[1]);
            prop_assert_eq!(after[1], before[2]);
            prop_assert_eq!(after[2], e);
        }
    }
}
