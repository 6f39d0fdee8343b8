use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};

/// Maps `f` over `0..n`, concurrently when the `parallel` feature is on.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// LU factorization with partial pivoting that refuses numerically singular
/// matrices.
#[derive(Debug, Clone)]
pub(crate) struct Factorized {
    lu: LU<f64, Dyn, Dyn>,
}

impl Factorized {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::SingularSystem);
        }
        let scale = a.amax();
        let lu = a.lu();
        let u = lu.u();
        let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if !(scale > 0.0) || !(min_pivot > 1e-13 * scale) {
            return Err(Error::SingularSystem);
        }
        Ok(Factorized { lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(b).ok_or(Error::SingularSystem)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu.solve(b).ok_or(Error::SingularSystem)
    }
}
