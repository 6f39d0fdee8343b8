//! Interior fields by the boundary representation, the dissipated-energy
//! density, the discrete energy ledger and the elastic/viscous traction split.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{boundary_work, integrate_segment, IntegrationOptions};
use crate::error::{Error, Result};
use crate::kernels::KernelConsts;
use crate::linalg::par_map;
use crate::model::{Material, Mesh, Point};
use crate::quadrature::gauss_legendre;

/// Displacement and stress `[sxx, syy, sxy]` at an interior point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorSample {
    pub point: Point,
    pub region: usize,
    pub u: [f64; 2],
    pub stress: [f64; 3],
    /// Closer to the boundary than a tenth of the nearest element's length,
    /// where quadrature accuracy degrades.
    pub near_boundary: bool,
}

/// Region containing `p` and whether `p` is near its boundary.
pub fn locate_point(mesh: &Mesh, p: &Point) -> Result<(usize, bool)> {
    let region = mesh.locate(p).ok_or(Error::OutOfDomain(p.x, p.y))?;
    let mut near = false;
    for (e, el) in mesh.elements.iter().enumerate() {
        if el.region != region {
            continue;
        }
        let (a, b) = mesh.endpoints(e);
        let ab = b - a;
        let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let dist = (a + ab * s - p).norm();
        let len = ab.norm();
        if dist <= 1e-12 * len {
            return Err(Error::OutOfDomain(p.x, p.y));
        }
        near |= dist < 0.1 * len;
    }
    Ok((region, near))
}

/// Linear map from boundary values to displacement and stress at fixed
/// interior points, integrated once.
#[derive(Debug, Clone)]
pub struct InteriorOperator {
    points: Vec<Point>,
    located: Vec<(usize, bool)>,
    /// Five rows per point (`ux, uy, sxx, syy, sxy`) over `[u (2N), t (4E)]`.
    rows: DMatrix<f64>,
}

impl InteriorOperator {
    pub fn new(
        mesh: &Mesh,
        materials: &BTreeMap<usize, Material>,
        opts: &IntegrationOptions,
        points: &[Point],
    ) -> Result<Self> {
        let located = points.iter().map(|p| locate_point(mesh, p)).collect::<Result<Vec<_>>>()?;
        let rule = gauss_legendre(opts.gauss_points);
        let nu = 2 * mesh.node_count();
        let ncol = nu + 4 * mesh.element_count();
        let blocks = par_map(points.len(), |i| {
            let region = located[i].0;
            influence_rows(mesh, &materials[&region], opts, &rule, region, &points[i], nu, ncol)
        });
        let mut rows = DMatrix::zeros(5 * points.len(), ncol);
        for (i, blk) in blocks.into_iter().enumerate() {
            rows.view_mut((5 * i, 0), (5, ncol)).copy_from(&blk);
        }
        Ok(InteriorOperator { points: points.to_vec(), located, rows })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn apply(&self, u: &[f64], t: &[f64]) -> Vec<InteriorSample> {
        let x = DVector::from_iterator(u.len() + t.len(), u.iter().chain(t).copied());
        let y = &self.rows * x;
        (0..self.points.len())
            .map(|i| InteriorSample {
                point: self.points[i],
                region: self.located[i].0,
                u: [y[5 * i], y[5 * i + 1]],
                stress: [y[5 * i + 2], y[5 * i + 3], y[5 * i + 4]],
                near_boundary: self.located[i].1,
            })
            .collect()
    }
}

/// Evaluates the interior displacement and stress representations for the
/// boundary pair `(u, t)`: nodal displacements (`2N`) and element-end
/// tractions (`4E`).
pub fn interior_fields(
    mesh: &Mesh,
    materials: &BTreeMap<usize, Material>,
    opts: &IntegrationOptions,
    u: &[f64],
    t: &[f64],
    points: &[Point],
) -> Result<Vec<InteriorSample>> {
    Ok(InteriorOperator::new(mesh, materials, opts, points)?.apply(u, t))
}

#[allow(clippy::too_many_arguments)]
fn influence_rows(
    mesh: &Mesh,
    mat: &Material,
    opts: &IntegrationOptions,
    rule: &[(f64, f64)],
    region: usize,
    xi: &Point,
    nu: usize,
    ncol: usize,
) -> DMatrix<f64> {
    let k = KernelConsts::new(mat);
    let mut out = DMatrix::zeros(5, ncol);
    for (e, el) in mesh.elements.iter().enumerate() {
        if el.region != region {
            continue;
        }
        let (a, b) = mesh.endpoints(e);
        let n = mesh.normal(e);
        integrate_segment(&a, &b, xi, opts, rule, &mut |s, x, w| {
            let d = x - xi;
            let uk = k.u(d);
            let tk = k.t(d, n);
            let (dk, sk) = k.stress_kernels(d, n);
            for (end, phi) in [(0, 1.0 - s), (1, s)] {
                let ucol = 2 * el.nodes[end];
                let tcol = nu + 4 * e + 2 * end;
                let f = w * phi;
                for j in 0..2 {
                    for i in 0..2 {
                        out[(i, tcol + j)] += f * uk[(i, j)];
                        out[(i, ucol + j)] -= f * tk[(j, i)];
                    }
                    for q in 0..3 {
                        out[(2 + q, tcol + j)] += f * dk[j][q];
                        out[(2 + q, ucol + j)] -= f * sk[j][q];
                    }
                }
            }
        });
    }
    out
}

fn contract(s: &[f64; 3], e: &[f64; 3]) -> f64 {
    s[0] * e[0] + s[1] * e[1] + 2.0 * s[2] * e[2]
}

/// Accumulates the dissipated-energy density `Σ (χ/τ) C e(Δu):e(Δu)` at fixed
/// points of Kelvin-Voigt regions from the elastic stress `C e(u)` per step.
#[derive(Debug, Clone)]
pub struct DissipationField {
    pub points: Vec<Point>,
    chi: Vec<f64>,
    materials: Vec<Material>,
    tau: f64,
    last: Vec<[f64; 3]>,
    pub density: Vec<f64>,
}

impl DissipationField {
    /// `elastic_stress0` is `C e(u⁰)` at the points; `chi_of_region` must be
    /// `Some` for every region hosting a point.
    pub fn new(
        samples0: &[InteriorSample],
        materials: &BTreeMap<usize, Material>,
        chi_of_region: &dyn Fn(usize) -> Option<f64>,
        tau: f64,
    ) -> Result<Self> {
        let mut chi = Vec::new();
        for s in samples0 {
            chi.push(chi_of_region(s.region).ok_or_else(|| {
                Error::UnsupportedRheology(format!(
                    "dissipation density is defined for Kelvin-Voigt regions only (region {})",
                    s.region
                ))
            })?);
        }
        Ok(DissipationField {
            points: samples0.iter().map(|s| s.point).collect(),
            chi,
            materials: samples0.iter().map(|s| materials[&s.region]).collect(),
            tau,
            last: samples0.iter().map(|s| s.stress).collect(),
            density: vec![0.0; samples0.len()],
        })
    }

    /// Adds one step given the elastic stresses at the points.
    pub fn push(&mut self, elastic_stress: &[[f64; 3]]) {
        for (i, s) in elastic_stress.iter().enumerate() {
            let ds = [s[0] - self.last[i][0], s[1] - self.last[i][1], s[2] - self.last[i][2]];
            let de = self.materials[i].strain(ds);
            self.density[i] += self.chi[i] / self.tau * contract(&ds, &de);
            self.last[i] = *s;
        }
    }
}

/// Dissipated-energy density at `points` from a sequence of elastic stress
/// snapshots `C e(u^k)`, `k = 0..`, for one Kelvin-Voigt material.
pub fn dissipated_energy(stress_history: &[Vec<[f64; 3]>], chi: f64, tau: f64, mat: &Material) -> Vec<f64> {
    let m = stress_history.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m];
    for w in stress_history.windows(2) {
        for i in 0..m {
            let ds = [w[1][i][0] - w[0][i][0], w[1][i][1] - w[0][i][1], w[1][i][2] - w[0][i][2]];
            out[i] += chi / tau * contract(&ds, &mat.strain(ds));
        }
    }
    out
}

/// Elastic part of the boundary tractions of a Kelvin-Voigt region:
/// `t_el^k = (τ t(e(v^k)) + χ t_el^{k−1}) / (τ + χ)`; the viscous part is the
/// remainder of the total traction.
pub fn elastic_traction_split(aux_traction: &[f64], total: &[f64], previous_elastic: &[f64], chi: f64, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let el: Vec<f64> = aux_traction
        .iter()
        .zip(previous_elastic)
        .map(|(t, p)| (tau * t + chi * p) / (tau + chi))
        .collect();
    let visc = total.iter().zip(&el).map(|(t, e)| t - e).collect();
    (el, visc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub stored: f64,
    pub dissipated: f64,
    pub work: f64,
    /// `E(u⁰) + work − stored − dissipated`; nonnegative up to round-off.
    pub slack: f64,
}

/// Discrete energy balance of Kelvin-Voigt (and elastic) cases, evaluated on
/// the boundary.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    element_chi: Vec<f64>,
    external: Vec<bool>,
    tau: f64,
    u_prev: Vec<f64>,
    p_prev: Vec<f64>,
    el_prev: Vec<f64>,
    pub initial: f64,
    pub rows: Vec<LedgerRow>,
    dissipated: f64,
    work: f64,
    /// Work with the trapezoidal rule, conserved exactly by elastic cases.
    pub work_trapezoid: f64,
}

impl EnergyLedger {
    /// `external[e]` marks elements whose work counts as external (interface
    /// sides do not).
    pub fn new(
        mesh: &Mesh,
        chi_of_region: &dyn Fn(usize) -> Option<f64>,
        external: Vec<bool>,
        tau: f64,
        u0: Vec<f64>,
        elastic0: Vec<f64>,
    ) -> Result<Self> {
        let element_chi = mesh
            .elements
            .iter()
            .map(|el| {
                chi_of_region(el.region).ok_or_else(|| {
                    Error::UnsupportedRheology("energy ledger needs Kelvin-Voigt regions".into())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = 0.5 * boundary_work(mesh, &elastic0, &u0, &|_| true);
        Ok(EnergyLedger {
            element_chi,
            external,
            tau,
            p_prev: elastic0.clone(),
            u_prev: u0,
            el_prev: elastic0,
            initial,
            rows: Vec::new(),
            dissipated: 0.0,
            work: 0.0,
            work_trapezoid: 0.0,
        })
    }

    pub fn push(&mut self, mesh: &Mesh, step: usize, time: f64, u: &[f64], p: &[f64], elastic: &[f64]) -> LedgerRow {
        let du: Vec<f64> = u.iter().zip(&self.u_prev).map(|(a, b)| a - b).collect();
        let dt: Vec<f64> = elastic.iter().zip(&self.el_prev).map(|(a, b)| a - b).collect();
        let mut diss = 0.0;
        for e in 0..mesh.element_count() {
            let chi = self.element_chi[e];
            if chi > 0.0 {
                diss += chi / self.tau * boundary_work(mesh, &dt, &du, &|f| f == e);
            }
        }
        let ext = |e: usize| self.external[e];
        self.dissipated += diss;
        self.work += boundary_work(mesh, p, &du, &ext);
        let mid: Vec<f64> = p.iter().zip(&self.p_prev).map(|(a, b)| 0.5 * (a + b)).collect();
        self.work_trapezoid += boundary_work(mesh, &mid, &du, &ext);
        let stored = 0.5 * boundary_work(mesh, elastic, u, &|_| true);
        let row = LedgerRow {
            step,
            time,
            stored,
            dissipated: self.dissipated,
            work: self.work,
            slack: self.initial + self.work - stored - self.dissipated,
        };
        self.rows.push(row);
        self.u_prev = u.to_vec();
        self.p_prev = p.to_vec();
        self.el_prev = elastic.to_vec();
        row
    }

    /// Slack relative to the largest ledger term, minimized over all steps.
    pub fn min_relative_slack(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let scale = [r.stored, r.dissipated, r.work, self.initial]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                if scale == 0.0 { 0.0 } else { r.slack / scale }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// True when the discrete energy inequality holds at every step so far.
    pub fn inequality_holds(&self) -> bool {
        self.rows.is_empty() || self.min_relative_slack() >= -1e-10
    }
}

/// Energy ledger computed after the fact from per-step boundary histories.
pub fn energy_balance(
    mesh: &Mesh,
    chi_of_region: &dyn Fn(usize) -> Option<f64>,
    external: Vec<bool>,
    tau: f64,
    u0: Vec<f64>,
    elastic0: Vec<f64>,
    steps: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
) -> Result<EnergyLedger> {
    let mut ledger = EnergyLedger::new(mesh, chi_of_region, external, tau, u0, elastic0)?;
    for (k, (u, p, el)) in steps.iter().enumerate() {
        ledger.push(mesh, k + 1, (k + 1) as f64 * tau, u, p, el);
    }
    Ok(ledger)
}
