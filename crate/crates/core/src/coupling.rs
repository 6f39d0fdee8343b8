//! Multi-region coupling through conforming interfaces.
//!
//! Interface nodes keep both displacement components unknown on each side.
//! Compatibility is imposed on the physical displacements, which in auxiliary
//! variables reads `v¹/a0¹ + h¹ = v²/a0² + h²` with the displacement history
//! `h = (a1 u^{k−1} − a2 u^{k−2})/a0` of each side. For Kelvin-Voigt regions
//! `1/a0 = τ/(τ+χ)` and `h = χ u^{k−1}/(τ+χ)`. Equilibrium uses one traction
//! unknown per interface node; the partner side carries its negative plus the
//! difference of stress histories, which vanishes unless a region has stress
//! rate terms. The general-rheology rule is an extrapolation of the
//! Kelvin-Voigt one.

use std::collections::BTreeMap;

use crate::assembly::{
    assemble_hg, rigid_body_diagonal, DofLayout, IntegrationOptions, InterfacePair, MixedSystem,
};
use crate::error::Result;
use crate::model::{GroupBc, Material, Mesh};
use crate::timestepper::StepCoeffs;

/// Coefficients of the compatibility relation between two sides: auxiliary
/// displacement weights `1/a0` and history weights `(a1/a0, −a2/a0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceWeights {
    pub v: [f64; 2],
    pub history: [[f64; 2]; 2],
}

pub fn compatibility_weights(side1: &StepCoeffs, side2: &StepCoeffs) -> InterfaceWeights {
    let w = |c: &StepCoeffs| (1.0 / c.a0, [c.a1 / c.a0, -c.a2 / c.a0]);
    let (v1, h1) = w(side1);
    let (v2, h2) = w(side2);
    InterfaceWeights { v: [v1, v2], history: [h1, h2] }
}

/// Assembles and factorizes the coupled system of all regions.
pub fn assemble_interface(
    mesh: &Mesh,
    materials: &BTreeMap<usize, Material>,
    bcs: &BTreeMap<String, GroupBc>,
    interfaces: &[(String, String)],
    coeffs: &BTreeMap<usize, StepCoeffs>,
    opts: &IntegrationOptions,
) -> Result<MixedSystem> {
    let system = rigid_body_diagonal(assemble_hg(mesh, materials, opts)?);
    let layout = DofLayout::build(mesh, bcs, interfaces)?;
    MixedSystem::build(&system, layout, &|r| coeffs[&r].a0)
}

/// Largest displacement mismatch and largest traction imbalance over the
/// interface nodes. `interface_groups` lists the bc-groups declared as
/// interfaces.
pub fn interface_residuals(
    mesh: &Mesh,
    interface_groups: &[usize],
    pairs: &[InterfacePair],
    u: &[f64],
    p: &[f64],
) -> (f64, f64) {
    let adj = mesh.node_adjacency();
    let interface_end = |n: usize| -> Option<usize> {
        let (prev, next) = adj[n];
        [(prev, 1), (next, 0)].into_iter().find_map(|(e, end)| {
            let e = e?;
            interface_groups.contains(&mesh.elements[e].group).then_some(4 * e + 2 * end)
        })
    };
    let mut du: f64 = 0.0;
    let mut dp: f64 = 0.0;
    for pr in pairs {
        for d in 0..2 {
            du = du.max((u[2 * pr.owner + d] - u[2 * pr.partner + d]).abs());
        }
        if let (Some(a), Some(b)) = (interface_end(pr.owner), interface_end(pr.partner)) {
            for d in 0..2 {
                dp = dp.max((p[a + d] + p[b + d]).abs());
            }
        }
    }
    (du, dp)
}
