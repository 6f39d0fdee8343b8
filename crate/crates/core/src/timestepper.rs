//! Implicit time stepping through the auxiliary elastostatic field.
//!
//! With a fixed step `τ` the rheology `ξ2 σ'' + ξ1 σ' + ξ0 σ = C e(χ2 u'' +
//! χ1 u' + χ0 u)`, discretized by backward differences, reads
//! `σ^k = C e(v^k) + d1 σ^{k−1} − d2 σ^{k−2}` with
//! `v^k = a0 u^k − a1 u^{k−1} + a2 u^{k−2}`. Every step is therefore an
//! elastic problem for `v` with transformed boundary data, followed by the
//! recovery of `u^k` and of the physical tractions.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::assembly::{
    assemble_hg, rigid_body_diagonal, DofLayout, IntegrationOptions, ItemKind, MixedSystem,
};
use crate::contact::{nodal_kkt, nodal_signorini, solve_qp, kkt_check, transformed_bounds, ContactOperator, KktResidual};
use crate::error::{Error, Result};
use crate::model::{GroupBc, LoadProgram, Material, Mesh, Point, RheologyCoeffs};
use crate::postprocess::InteriorOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    pub tau: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn step_coefficients(rh: &RheologyCoeffs, tau: f64) -> Result<StepCoeffs> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("time step must be positive (got {tau})")));
    }
    let [c0, c1, c2] = rh.chi;
    let [x0, x1, x2] = rh.xi;
    let a = x2 + tau * x1 + x0 * tau * tau;
    if a == 0.0 {
        return Err(Error::DegenerateRheology);
    }
    let a0 = (c2 + tau * c1 + c0 * tau * tau) / a;
    if a0 == 0.0 {
        return Err(Error::NonInvertibleTransform);
    }
    Ok(StepCoeffs {
        tau,
        a0,
        a1: (2.0 * c2 + tau * c1) / a,
        a2: c2 / a,
        d1: (2.0 * x2 + tau * x1) / a,
        d2: x2 / a,
    })
}

impl StepCoeffs {
    /// `v = a0 u − a1 u1 + a2 u2`.
    pub fn auxiliary(&self, u: f64, u1: f64, u2: f64) -> f64 {
        self.a0 * u - self.a1 * u1 + self.a2 * u2
    }

    pub fn traction_history_free(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }
}

/// Transformed data `(v_D, g_eff)` from `w = [w^k, w^{k−1}, w^{k−2}]` and
/// `g = [g^k, g^{k−1}, g^{k−2}]`.
pub fn transform_boundary_data(c: &StepCoeffs, w: [f64; 3], g: [f64; 3]) -> (f64, f64) {
    (c.auxiliary(w[0], w[1], w[2]), g[0] - c.d1 * g[1] + c.d2 * g[2])
}

pub fn recover_displacement(c: &StepCoeffs, v: f64, u1: f64, u2: f64) -> f64 {
    (v + c.a1 * u1 - c.a2 * u2) / c.a0
}

pub fn recover_traction(c: &StepCoeffs, t: f64, p1: f64, p2: f64) -> f64 {
    t + c.d1 * p1 - c.d2 * p2
}

/// `T/τ` as a step count.
pub fn step_count(total: f64, tau: f64) -> Result<usize> {
    if !(total > 0.0) || !(tau > 0.0) {
        return Err(Error::Config("T and τ must be positive".into()));
    }
    let n = total / tau;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * r {
        return Err(Error::Config("T/τ must be an integer".into()));
    }
    Ok(r as usize)
}

/// Which recursion recovers the displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Second-order coefficients for every region.
    #[default]
    General,
    /// `u^k = (τ v + χ u^{k−1})/(τ + χ)`; every region must be Kelvin-Voigt.
    KelvinVoigt,
}

/// Affine initial displacement `u0(x) = offset + gradient · x` of a
/// Kelvin-Voigt region.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialField {
    pub offset: [f64; 2],
    pub gradient: [[f64; 2]; 2],
}

impl InitialField {
    pub fn at(&self, x: &Point) -> [f64; 2] {
        let g = self.gradient;
        [
            self.offset[0] + g[0][0] * x.x + g[0][1] * x.y,
            self.offset[1] + g[1][0] * x.x + g[1][1] * x.y,
        ]
    }

    /// Stress `C e(u0)`.
    pub fn stress(&self, mat: &Material) -> [f64; 3] {
        let g = self.gradient;
        mat.stress([g[0][0], g[1][1], 0.5 * (g[0][1] + g[1][0])])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeKind {
    Node(usize),
    Interior(Point),
}

#[derive(Debug, Clone, Default)]
pub struct Setup {
    pub mesh: crate::model::Mesh,
    pub materials: BTreeMap<usize, Material>,
    pub rheology: BTreeMap<usize, RheologyCoeffs>,
    pub bcs: BTreeMap<String, GroupBc>,
    pub interfaces: Vec<(String, String)>,
    pub programs: BTreeMap<String, LoadProgram>,
    pub initial: BTreeMap<usize, InitialField>,
    pub probes: Vec<ProbeKind>,
    pub integration: IntegrationOptions,
    pub scheme: Scheme,
}

/// Displacements `u^{k−1}, u^{k−2}` (nodal) and tractions `p^{k−1}, p^{k−2}`
/// (element ends), plus the same at interior probes.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub k: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub probe_u1: Vec<[f64; 2]>,
    pub probe_u2: Vec<[f64; 2]>,
    pub probe_s1: Vec<[f64; 3]>,
    pub probe_s2: Vec<[f64; 3]>,
}

/// Probe values. `p` is the nodal traction (mean of the two element ends) for
/// boundary probes; interior probes report the stress in `stress`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub p: [f64; 2],
    pub stress: Option<[f64; 3]>,
    /// Stress `C e(v)` of the auxiliary field at interior probes.
    pub aux_stress: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactStep {
    /// Auxiliary displacement along the obstacle direction.
    pub vn: Vec<f64>,
    /// Physical displacement along the obstacle direction.
    pub un: Vec<f64>,
    /// Physical normal traction `p·d` (compressive when negative).
    pub tn: Vec<f64>,
    pub bound: Vec<f64>,
    pub active: Vec<bool>,
    /// KKT residual of the symmetrized program.
    pub qp_kkt: KktResidual,
    /// The same multipliers checked against the unsymmetrized operator.
    pub qp_kkt_unsym: KktResidual,
    pub nodal_kkt: KktResidual,
    pub qp_iterations: usize,
    pub polish_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub step: usize,
    pub time: f64,
    pub v: Vec<f64>,
    pub t_aux: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub probes: Vec<ProbeRecord>,
    pub contact: Option<ContactStep>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub setup: Setup,
    pub tau: f64,
    pub coeffs: BTreeMap<usize, StepCoeffs>,
    pub mixed: MixedSystem,
    pub contact: Option<ContactOperator>,
    pub history: History,
    node_coeffs: Vec<StepCoeffs>,
    elem_coeffs: Vec<StepCoeffs>,
    kv_chi: BTreeMap<usize, f64>,
    probe_regions: Vec<Option<usize>>,
    interior: InteriorOperator,
}

impl Simulation {
    pub fn new(setup: Setup, tau: f64) -> Result<Simulation> {
        let mesh = &setup.mesh;
        let mut coeffs = BTreeMap::new();
        let mut kv_chi = BTreeMap::new();
        for r in mesh.region_ids() {
            let rh = setup
                .rheology
                .get(&r)
                .ok_or_else(|| Error::Config(format!("region {r} has no rheology")))?;
            coeffs.insert(r, step_coefficients(rh, tau)?);
            if let Some(chi) = rh.kelvin_voigt_time() {
                kv_chi.insert(r, chi);
            } else if setup.scheme == Scheme::KelvinVoigt {
                return Err(Error::UnsupportedRheology(format!(
                    "region {r} is not Kelvin-Voigt; use the general scheme"
                )));
            }
        }
        for r in setup.initial.keys() {
            if !kv_chi.contains_key(r) {
                return Err(Error::Unsupported(format!(
                    "initial displacement in region {r}: only Kelvin-Voigt regions accept one"
                )));
            }
        }
        let system = rigid_body_diagonal(assemble_hg(mesh, &setup.materials, &setup.integration)?);
        let layout = DofLayout::build(mesh, &setup.bcs, &setup.interfaces)?;
        for it in &layout.items {
            if let Some(name) = &it.program {
                if !setup.programs.contains_key(name) {
                    return Err(Error::Config(format!("unknown load program `{name}`")));
                }
            }
        }
        for c in &layout.contact {
            if !coeffs[&c.region].traction_history_free() {
                return Err(Error::UnsupportedRheology(format!(
                    "contact in region {} needs a rheology without stress rate terms",
                    c.region
                )));
            }
        }
        let mixed = MixedSystem::build(&system, layout, &|r| coeffs[&r].a0)?;
        let contact = if mixed.layout.contact.is_empty() {
            None
        } else {
            Some(ContactOperator::new(mesh, &mixed)?)
        };
        let node_coeffs = mixed.layout.node_region.iter().map(|r| coeffs[r]).collect();
        let elem_coeffs = mesh.elements.iter().map(|e| coeffs[&e.region]).collect();

        let nn = mesh.node_count();
        let mut u0 = vec![0.0; 2 * nn];
        for (n, r) in mixed.layout.node_region.iter().enumerate() {
            if let Some(f) = setup.initial.get(r) {
                let v = f.at(&mesh.nodes[n]);
                u0[2 * n] = v[0];
                u0[2 * n + 1] = v[1];
            }
        }
        let mut probe_regions = Vec::new();
        let mut probe_u1 = Vec::new();
        for pr in &setup.probes {
            match pr {
                ProbeKind::Node(n) => {
                    if *n >= nn {
                        return Err(Error::Config(format!("probe node #{n} does not exist")));
                    }
                    probe_regions.push(None);
                    probe_u1.push([u0[2 * n], u0[2 * n + 1]]);
                }
                ProbeKind::Interior(x) => {
                    let (r, _) = crate::postprocess::locate_point(mesh, x)?;
                    probe_regions.push(Some(r));
                    probe_u1.push(setup.initial.get(&r).map_or([0.0; 2], |f| f.at(x)));
                }
            }
        }
        let interior_points: Vec<Point> = setup
            .probes
            .iter()
            .filter_map(|pr| match pr {
                ProbeKind::Interior(x) => Some(*x),
                _ => None,
            })
            .collect();
        let interior = InteriorOperator::new(mesh, &setup.materials, &setup.integration, &interior_points)?;
        let np = setup.probes.len();
        let history = History {
            k: 0,
            u2: u0.clone(),
            u1: u0,
            p1: vec![0.0; 4 * mesh.element_count()],
            p2: vec![0.0; 4 * mesh.element_count()],
            probe_u2: probe_u1.clone(),
            probe_u1,
            probe_s1: vec![[0.0; 3]; np],
            probe_s2: vec![[0.0; 3]; np],
        };
        Ok(Simulation {
            setup,
            tau,
            coeffs,
            mixed,
            contact,
            history,
            node_coeffs,
            elem_coeffs,
            kv_chi,
            probe_regions,
            interior,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.setup.mesh
    }

    /// Kelvin-Voigt relaxation time of a region (zero for Hooke).
    pub fn kelvin_voigt_time(&self, region: usize) -> Option<f64> {
        self.kv_chi.get(&region).copied()
    }

    /// Initial nodal displacements.
    pub fn initial_displacement(&self) -> Vec<f64> {
        let mesh = self.mesh();
        let mut u0 = vec![0.0; 2 * mesh.node_count()];
        for (n, r) in self.mixed.layout.node_region.iter().enumerate() {
            if let Some(f) = self.setup.initial.get(r) {
                let v = f.at(&mesh.nodes[n]);
                u0[2 * n] = v[0];
                u0[2 * n + 1] = v[1];
            }
        }
        u0
    }

    /// Element-end tractions `C e(u0) n` of the initial field.
    pub fn initial_elastic_traction(&self) -> Vec<f64> {
        let mesh = self.mesh();
        let mut t = vec![0.0; 4 * mesh.element_count()];
        for (e, el) in mesh.elements.iter().enumerate() {
            if let Some(f) = self.setup.initial.get(&el.region) {
                let s = f.stress(&self.setup.materials[&el.region]);
                let n = mesh.normal(e);
                for end in 0..2 {
                    t[4 * e + 2 * end] = s[0] * n.x + s[2] * n.y;
                    t[4 * e + 2 * end + 1] = s[2] * n.x + s[1] * n.y;
                }
            }
        }
        t
    }

    fn load_factor(&self, program: &Option<String>, time: f64) -> f64 {
        program.as_ref().map_or(1.0, |p| self.setup.programs[p].eval(time))
    }

    /// Transformed boundary data for step `k` at time `time`.
    pub fn transformed_data(&self, time: f64) -> Vec<f64> {
        let h = &self.history;
        let read = |r: &Vec<(usize, f64)>, x: &[f64]| r.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
        self.mixed
            .layout
            .items
            .iter()
            .map(|it| {
                let w = it.value * self.load_factor(&it.program, time);
                let c = &self.coeffs[&it.region];
                match it.kind {
                    ItemKind::Dirichlet => match self.setup.scheme {
                        Scheme::General => c.auxiliary(w, read(&it.read, &h.u1), read(&it.read, &h.u2)),
                        Scheme::KelvinVoigt => {
                            let chi = self.kv_chi[&it.region];
                            (chi + self.tau) / self.tau * w - chi / self.tau * read(&it.read, &h.u1)
                        }
                    },
                    ItemKind::Neumann => {
                        transform_boundary_data(c, [0.0; 3], [w, read(&it.read, &h.p1), read(&it.read, &h.p2)]).1
                    }
                    ItemKind::InterfaceHistory => {
                        let (oe, oregion) = it.owner.expect("interface item has an owner");
                        let co = &self.coeffs[&oregion];
                        let own = co.d1 * h.p1[oe] - co.d2 * h.p2[oe];
                        let part = c.d1 * read(&it.read, &h.p1) - c.d2 * read(&it.read, &h.p2);
                        -(own + part)
                    }
                }
            })
            .collect()
    }

    fn interface_rhs(&self) -> Vec<f64> {
        let h = &self.history;
        let hist = |n: usize, d: usize| {
            let c = &self.node_coeffs[n];
            (c.a1 * h.u1[2 * n + d] - c.a2 * h.u2[2 * n + d]) / c.a0
        };
        let mut e = Vec::with_capacity(2 * self.mixed.layout.pairs.len());
        for pr in &self.mixed.layout.pairs {
            for d in 0..2 {
                e.push(hist(pr.partner, d) - hist(pr.owner, d));
            }
        }
        e
    }

    fn recover_u(&self, n: usize, d: usize, v: f64) -> f64 {
        let h = &self.history;
        let i = 2 * n + d;
        match self.setup.scheme {
            Scheme::General => recover_displacement(&self.node_coeffs[n], v, h.u1[i], h.u2[i]),
            Scheme::KelvinVoigt => {
                let chi = self.kv_chi[&self.mixed.layout.node_region[n]];
                (self.tau * v + chi * h.u1[i]) / (self.tau + chi)
            }
        }
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<StepState> {
        let k = self.history.k + 1;
        let time = k as f64 * self.tau;
        let y = self.transformed_data(time);
        let e = self.interface_rhs();
        let layout = &self.mixed.layout;
        let m = layout.contact.len();
        let (z, pparam, contact_partial) = match &self.contact {
            None => (self.mixed.solve(&y, &[], &e)?, Vec::new(), None),
            Some(op) => {
                let zeros = vec![0.0; m];
                let z0 = self.mixed.solve(&y, &zeros, &e)?;
                let (v0, t0) = self.mixed.boundary(z0.as_slice(), &y, &zeros);
                let (_, g) = self.mixed.boundary(&vec![0.0; layout.n_unknowns], &y, &zeros);
                let h = &self.history;
                let dot = |u: &[f64], c: &crate::assembly::ContactDof| {
                    u[2 * c.node] * c.direction.x + u[2 * c.node + 1] * c.direction.y
                };
                let mut b = Vec::with_capacity(m);
                for c in &layout.contact {
                    let sc = &self.node_coeffs[c.node];
                    b.push(transformed_bounds(sc, &[c.gap], &[dot(&h.u1, c)], &[dot(&h.u2, c)])[0]);
                }
                let qp = op.qp(self.mesh(), &v0, &t0, &g, b);
                let sol = solve_qp(&qp, None)?;
                let qp_kkt = kkt_check(&qp, &qp.k, &sol.p, &sol.lambda);
                let qp_kkt_unsym = kkt_check(&qp, &qp.k_tilde, &sol.p, &sol.lambda);
                let tc0 = DVector::from_iterator(m, layout.contact.iter().map(|c| z0[c.traction]));
                let polished = nodal_signorini(&tc0, &op.s, &qp.b, &sol.active, 50 * m.max(1))?;
                let nk = nodal_kkt(&tc0, &op.s, &qp.b, &polished.p, &polished.active);
                let z = z0 + &self.mixed.z_param * &polished.p;
                let partial = (qp.b.iter().copied().collect::<Vec<_>>(), polished.active.clone(), qp_kkt, qp_kkt_unsym, nk, sol.iterations, polished.iterations);
                (z, polished.p.iter().copied().collect(), Some(partial))
            }
        };
        let residual = self.mixed.residual(&z, &y, &pparam, &e);
        let (v, t_aux) = self.mixed.boundary(z.as_slice(), &y, &pparam);
        let nn = self.mesh().node_count();
        let mut u = vec![0.0; 2 * nn];
        for n in 0..nn {
            for d in 0..2 {
                u[2 * n + d] = self.recover_u(n, d, v[2 * n + d]);
            }
        }
        let h = &self.history;
        let p: Vec<f64> = (0..t_aux.len())
            .map(|i| recover_traction(&self.elem_coeffs[i / 4], t_aux[i], h.p1[i], h.p2[i]))
            .collect();

        let contact = contact_partial.map(|(bound, active, qp_kkt, qp_kkt_unsym, nk, qi, pi)| {
            let lay = &self.mixed.layout;
            let mut un = Vec::with_capacity(m);
            let mut tn = Vec::with_capacity(m);
            for c in &lay.contact {
                un.push(u[2 * c.node] * c.direction.x + u[2 * c.node + 1] * c.direction.y);
                // traction history is absent for admissible contact rheologies
                tn.push(z[c.traction]);
            }
            ContactStep {
                vn: pparam.clone(),
                un,
                tn,
                bound,
                active,
                qp_kkt,
                qp_kkt_unsym,
                nodal_kkt: nk,
                qp_iterations: qi,
                polish_iterations: pi,
            }
        });

        let probes = self.evaluate_probes(&v, &t_aux, &u, &p)?;
        let h = &mut self.history;
        h.u2 = std::mem::replace(&mut h.u1, u.clone());
        h.p2 = std::mem::replace(&mut h.p1, p.clone());
        for (i, rec) in probes.iter().enumerate() {
            h.probe_u2[i] = h.probe_u1[i];
            h.probe_u1[i] = rec.u;
            if let Some(s) = rec.stress {
                h.probe_s2[i] = h.probe_s1[i];
                h.probe_s1[i] = s;
            }
        }
        h.k = k;
        Ok(StepState { step: k, time, v, t_aux, u, p, probes, contact, residual })
    }

    fn evaluate_probes(&self, v: &[f64], t_aux: &[f64], u: &[f64], p: &[f64]) -> Result<Vec<ProbeRecord>> {
        let mesh = self.mesh();
        let samples = self.interior.apply(v, t_aux);
        let adj = mesh.node_adjacency();
        let mut it = samples.into_iter();
        let h = &self.history;
        let mut out = Vec::with_capacity(self.setup.probes.len());
        for (i, pr) in self.setup.probes.iter().enumerate() {
            match pr {
                ProbeKind::Node(n) => {
                    let (prev, next) = adj[*n];
                    let mut tr = [0.0; 2];
                    for (e, end) in [(prev, 1), (next, 0)] {
                        if let Some(e) = e {
                            for d in 0..2 {
                                tr[d] += 0.5 * p[4 * e + 2 * end + d];
                            }
                        }
                    }
                    out.push(ProbeRecord {
                        u: [u[2 * n], u[2 * n + 1]],
                        v: [v[2 * n], v[2 * n + 1]],
                        p: tr,
                        stress: None,
                        aux_stress: None,
                    });
                }
                ProbeKind::Interior(_) => {
                    let s = it.next().expect("one sample per interior probe");
                    let r = self.probe_regions[i].expect("interior probe has a region");
                    let c = &self.coeffs[&r];
                    let mut uu = [0.0; 2];
                    for d in 0..2 {
                        uu[d] = match self.setup.scheme {
                            Scheme::General => recover_displacement(c, s.u[d], h.probe_u1[i][d], h.probe_u2[i][d]),
                            Scheme::KelvinVoigt => {
                                let chi = self.kv_chi[&r];
                                (self.tau * s.u[d] + chi * h.probe_u1[i][d]) / (self.tau + chi)
                            }
                        };
                    }
                    let mut st = [0.0; 3];
                    for q in 0..3 {
                        st[q] = recover_traction(c, s.stress[q], h.probe_s1[i][q], h.probe_s2[i][q]);
                    }
                    out.push(ProbeRecord { u: uu, v: s.u, p: [st[0], st[2]], stress: Some(st), aux_stress: Some(s.stress) });
                }
            }
        }
        Ok(out)
    }
}

/// All steps of a run.
#[derive(Debug, Clone, Default)]
pub struct TimeSeries {
    pub steps: Vec<StepState>,
}

/// Runs `T/τ` steps.
pub fn run_time_loop(sim: &mut Simulation, total: f64) -> Result<TimeSeries> {
    let n = step_count(total, sim.tau)?;
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        steps.push(sim.step()?);
    }
    Ok(TimeSeries { steps })
}
