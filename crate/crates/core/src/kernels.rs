//! Plane-strain Kelvin fundamental solutions.
//!
//! `r = x − ξ` points from the source `ξ` to the field point `x`. Index
//! convention: `U[i][j]` is displacement `i` at `x` due to a unit force `j` at
//! `ξ`; `T[i][j]` is the traction `i` on a surface with normal `n` at `x` due
//! to a unit force `j` at `ξ`. The boundary integral identity therefore
//! contracts `Tᵀ` with the displacement field.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::model::{Material, Point};

pub type KernelBlock = Matrix2<f64>;

/// Precomputed material constants of the kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelConsts {
    pub nu: f64,
    pub mu: f64,
    u_scale: f64,
    t_scale: f64,
}

impl KernelConsts {
    pub fn new(mat: &Material) -> Self {
        let nu = mat.poisson;
        let mu = mat.shear_modulus();
        KernelConsts {
            nu,
            mu,
            u_scale: 1.0 / (8.0 * PI * mu * (1.0 - nu)),
            t_scale: 1.0 / (4.0 * PI * (1.0 - nu)),
        }
    }

    #[inline]
    pub fn u(&self, d: Point) -> KernelBlock {
        let r = d.norm();
        let g = d / r;
        let a = (3.0 - 4.0 * self.nu) * (-r.ln());
        self.u_scale
            * Matrix2::new(a + g.x * g.x, g.x * g.y, g.x * g.y, a + g.y * g.y)
    }

    /// `∂r/∂n`-weighted traction kernel; `d = x − ξ`, `n` the unit normal at `x`.
    #[inline]
    pub fn t(&self, d: Point, n: Point) -> KernelBlock {
        let r = d.norm();
        let g = d / r;
        let drdn = g.dot(&n);
        let c = 1.0 - 2.0 * self.nu;
        let s = -self.t_scale / r;
        let anti = c * (g.x * n.y - g.y * n.x);
        Matrix2::new(
            s * drdn * (c + 2.0 * g.x * g.x),
            s * (drdn * 2.0 * g.x * g.y + anti),
            s * (drdn * 2.0 * g.y * g.x - anti),
            s * drdn * (c + 2.0 * g.y * g.y),
        )
    }

    /// Stress kernels for interior points: returns `(D, S)` with
    /// `σ_ij(ξ) = Σ_k ∫ D[k][(i,j)] t_k − ∫ S[k][(i,j)] u_k`. The stress index
    /// pair is stored as `[xx, yy, xy]`.
    pub fn stress_kernels(&self, d: Point, n: Point) -> ([[f64; 3]; 2], [[f64; 3]; 2]) {
        let r = d.norm();
        let g = [d.x / r, d.y / r];
        let nn = [n.x, n.y];
        let nu = self.nu;
        let c = 1.0 - 2.0 * nu;
        let drdn = g[0] * nn[0] + g[1] * nn[1];
        let dscale = self.t_scale / r;
        let sscale = 2.0 * self.mu * self.t_scale / (r * r);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let pairs = [(0, 0), (1, 1), (0, 1)];
        let mut dk = [[0.0; 3]; 2];
        let mut sk = [[0.0; 3]; 2];
        for k in 0..2 {
            for (p, &(i, j)) in pairs.iter().enumerate() {
                dk[k][p] = dscale
                    * (c * (delta(k, i) * g[j] + delta(k, j) * g[i] - delta(i, j) * g[k])
                        + 2.0 * g[i] * g[j] * g[k]);
                sk[k][p] = sscale
                    * (2.0
                        * drdn
                        * (c * delta(i, j) * g[k]
                            + nu * (delta(i, k) * g[j] + delta(j, k) * g[i])
                            - 4.0 * g[i] * g[j] * g[k])
                        + 2.0 * nu * (nn[i] * g[j] * g[k] + nn[j] * g[i] * g[k])
                        + c * (2.0 * nn[k] * g[i] * g[j] + nn[j] * delta(i, k) + nn[i] * delta(j, k))
                        - (1.0 - 4.0 * nu) * nn[k] * delta(i, j));
            }
        }
        (dk, sk)
    }
}

/// Displacement kernel `U(x, ξ)`.
pub fn kelvin_u(x: &Point, xi: &Point, mat: &Material) -> Result<KernelBlock> {
    let d = x - xi;
    if d.norm() == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(KernelConsts::new(mat).u(d))
}

/// Traction kernel `T(x, ξ)` for the unit normal `n` at `x`.
pub fn kelvin_t(x: &Point, xi: &Point, n: &Point, mat: &Material) -> Result<KernelBlock> {
    let d = x - xi;
    if d.norm() == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    if (n.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidNormal(n.norm()));
    }
    Ok(KernelConsts::new(mat).t(d, *n))
}
