//! Element integration, collocation assembly of `H` and `G`, the rigid-body
//! diagonal, and the mixed boundary-condition system.
//!
//! Displacements are continuous and linear, with one value per node.
//! Tractions are linear per element with independent values at the two
//! element ends, so corners may carry a traction jump. Where both elements
//! meeting at a node leave the same traction component unknown (Dirichlet on
//! both sides, or an interface), the two end values are tied into one
//! unknown.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::error::{Error, Result};
use crate::kernels::KernelConsts;
use crate::linalg::{par_map, Factorized};
use crate::model::{ContactDirection, DirBc, Frame, GroupBc, Material, Mesh, Point};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub gauss_points: usize,
    /// Subdivide while distance/length of a sub-segment is below this ratio.
    pub subdivision_ratio: f64,
    pub max_depth: u32,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions { gauss_points: 8, subdivision_ratio: 2.0, max_depth: 20 }
    }
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

/// Applies `rule` on `[a, b]` with geometric subdivision towards `xi`.
/// The callback receives the local coordinate `s ∈ [0, 1]` on the full
/// segment, the point, and the weight including the length Jacobian.
pub(crate) fn integrate_segment(
    a: &Point,
    b: &Point,
    xi: &Point,
    opts: &IntegrationOptions,
    rule: &[(f64, f64)],
    f: &mut dyn FnMut(f64, Point, f64),
) {
    let len = (b - a).norm();
    let mut stack = vec![(0.0f64, 1.0f64, 0u32)];
    while let Some((s0, s1, depth)) = stack.pop() {
        let pa = a + (b - a) * s0;
        let pb = a + (b - a) * s1;
        let sub = len * (s1 - s0);
        if depth < opts.max_depth && segment_distance(xi, &pa, &pb) < opts.subdivision_ratio * sub {
            let mid = 0.5 * (s0 + s1);
            stack.push((mid, s1, depth + 1));
            stack.push((s0, mid, depth + 1));
            continue;
        }
        for &(q, w) in rule {
            let s = s0 + (s1 - s0) * q;
            f(s, a + (b - a) * s, w * sub);
        }
    }
}

/// Influence of one element's two nodes on one collocation point.
/// Columns are `[node0 x, node0 y, node1 x, node1 y]`; rows the direction of
/// the unit load at the collocation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluencePair {
    pub h: SMatrix<f64, 2, 4>,
    pub g: SMatrix<f64, 2, 4>,
    /// Node of the element that coincides with the collocation point. Its
    /// `h` columns are left zero; the rigid-body diagonal supplies them.
    pub singular_node: Option<usize>,
}

pub(crate) struct Integrator {
    k: KernelConsts,
    rule: Vec<(f64, f64)>,
    opts: IntegrationOptions,
}

impl Integrator {
    pub fn new(mat: &Material, opts: IntegrationOptions) -> Self {
        Integrator { k: KernelConsts::new(mat), rule: gauss_legendre(opts.gauss_points), opts }
    }

    pub fn influence(&self, xi: &Point, a: &Point, b: &Point) -> InfluencePair {
        let len = (b - a).norm();
        let t = (b - a) / len;
        let n = Point::new(t.y, -t.x);
        let tol = 1e-10 * len;
        let at = if (a - xi).norm() <= tol {
            Some(0)
        } else if (b - xi).norm() <= tol {
            Some(1)
        } else {
            None
        };
        let mut h = SMatrix::<f64, 2, 4>::zeros();
        let mut g = SMatrix::<f64, 2, 4>::zeros();
        match at {
            None => {
                let k = &self.k;
                integrate_segment(a, b, xi, &self.opts, &self.rule, &mut |s, x, w| {
                    let d = x - xi;
                    let tt = k.t(d, n).transpose();
                    let uu = k.u(d);
                    let phi = [1.0 - s, s];
                    for c in 0..2 {
                        let f = phi[c] * w;
                        let mut hb = h.fixed_view_mut::<2, 2>(0, 2 * c);
                        hb += tt * f;
                        let mut gb = g.fixed_view_mut::<2, 2>(0, 2 * c);
                        gb += uu * f;
                    }
                });
            }
            Some(sing) => {
                let other = 1 - sing;
                // unit vector from the collocation point along the element
                let dir = if sing == 0 { t } else { -t };
                // ∫ T φ_other dS is exact: 1/r times r/ℓ integrates to one
                let tt = self.k.t(dir, n).transpose();
                h.fixed_view_mut::<2, 2>(0, 2 * other).copy_from(&tt);
                // ln(1/r) against the shape function that is one at ξ and the
                // one that vanishes there: ℓ(3/4 − ln ℓ/2) and ℓ(1/4 − ln ℓ/2)
                let nu = self.k.nu;
                let scale = 1.0 / (8.0 * std::f64::consts::PI * self.k.mu * (1.0 - nu));
                let gg = dir * dir.transpose() * (0.5 * len);
                let log_near = len * (0.75 - 0.5 * len.ln());
                let log_far = len * (0.25 - 0.5 * len.ln());
                let eye = nalgebra::Matrix2::identity();
                let g_near = (eye * ((3.0 - 4.0 * nu) * log_near) + gg) * scale;
                let g_far = (eye * ((3.0 - 4.0 * nu) * log_far) + gg) * scale;
                g.fixed_view_mut::<2, 2>(0, 2 * sing).copy_from(&g_near);
                g.fixed_view_mut::<2, 2>(0, 2 * other).copy_from(&g_far);
            }
        }
        InfluencePair { h, g, singular_node: at }
    }
}

/// Influence of element `e` on the collocation point `xi`.
pub fn element_influence(
    xi: &Point,
    mesh: &Mesh,
    e: usize,
    mat: &Material,
    opts: &IntegrationOptions,
) -> InfluencePair {
    let (a, b) = mesh.endpoints(e);
    Integrator::new(mat, *opts).influence(xi, &a, &b)
}

/// Dense collocation matrices. `h` is `2N × 2N` over nodal displacements,
/// `g` is `2N × 4E` over element-end tractions (index `4e + 2 end + dir`).
/// Regions never interact, so both are block diagonal by region.
#[derive(Debug, Clone)]
pub struct BemSystem {
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub n_nodes: usize,
    pub n_elements: usize,
    diagonal_complete: bool,
}

impl BemSystem {
    pub fn diagonal_complete(&self) -> bool {
        self.diagonal_complete
    }

    /// `‖H·r‖∞ / max|H|` for the rigid translation `r` along `dir`.
    pub fn translation_residual(&self, dir: usize) -> f64 {
        let mut r = DVector::zeros(2 * self.n_nodes);
        for n in 0..self.n_nodes {
            r[2 * n + dir] = 1.0;
        }
        (&self.h * r).amax() / self.h.amax()
    }
}

/// Assembles `H` (without its diagonal blocks) and `G` for all regions.
pub fn assemble_hg(
    mesh: &Mesh,
    materials: &BTreeMap<usize, Material>,
    opts: &IntegrationOptions,
) -> Result<BemSystem> {
    let nn = mesh.node_count();
    let ne = mesh.element_count();
    let node_region = mesh.node_regions();
    let mut integrators = HashMap::new();
    for r in mesh.region_ids() {
        let mat = materials
            .get(&r)
            .ok_or_else(|| Error::InvalidModel(format!("region {r} has no material")))?;
        integrators.insert(r, Integrator::new(mat, *opts));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = par_map(nn, |i| {
        let mut hrow = vec![0.0; 2 * 2 * nn];
        let mut grow = vec![0.0; 2 * 4 * ne];
        let Some(region) = node_region[i] else {
            return (hrow, grow);
        };
        let integ = &integrators[&region];
        let xi = mesh.nodes[i];
        for (e, el) in mesh.elements.iter().enumerate() {
            if el.region != region {
                continue;
            }
            let (a, b) = mesh.endpoints(e);
            let inf = integ.influence(&xi, &a, &b);
            for end in 0..2 {
                let node = el.nodes[end];
                for r in 0..2 {
                    for c in 0..2 {
                        if node != i {
                            hrow[r * 2 * nn + 2 * node + c] += inf.h[(r, 2 * end + c)];
                        }
                        grow[r * 4 * ne + 4 * e + 2 * end + c] += inf.g[(r, 2 * end + c)];
                    }
                }
            }
        }
        (hrow, grow)
    });
    let mut h = DMatrix::zeros(2 * nn, 2 * nn);
    let mut g = DMatrix::zeros(2 * nn, 4 * ne);
    for (i, (hrow, grow)) in rows.into_iter().enumerate() {
        for r in 0..2 {
            for c in 0..2 * nn {
                h[(2 * i + r, c)] = hrow[r * 2 * nn + c];
            }
            for c in 0..4 * ne {
                g[(2 * i + r, c)] = grow[r * 4 * ne + c];
            }
        }
    }
    Ok(BemSystem { h, g, n_nodes: nn, n_elements: ne, diagonal_complete: false })
}

/// Sets every 2×2 diagonal block of `H` (free term plus the principal-value
/// part) to minus the sum of the off-diagonal blocks of its block row, so that
/// rigid translations produce no tractions.
pub fn rigid_body_diagonal(mut system: BemSystem) -> BemSystem {
    let nn = system.n_nodes;
    for i in 0..nn {
        for r in 0..2 {
            let row = 2 * i + r;
            for c in 0..2 {
                let mut s = 0.0;
                for j in 0..nn {
                    if j != i {
                        s += system.h[(row, 2 * j + c)];
                    }
                }
                system.h[(row, 2 * i + c)] = -s;
            }
        }
    }
    system.diagonal_complete = true;
    system
}

/// Affine dependence of one boundary value on the unknowns `z`, the
/// transformed prescribed data `y` and the contact parameters `p`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub z: Vec<(usize, f64)>,
    pub y: Vec<(usize, f64)>,
    pub p: Vec<(usize, f64)>,
}

impl Affine {
    fn unknown(col: usize) -> Self {
        Affine { z: vec![(col, 1.0)], ..Default::default() }
    }

    fn known(item: usize) -> Self {
        Affine { y: vec![(item, 1.0)], ..Default::default() }
    }

    fn scaled(&self, f: f64) -> Self {
        let sc = |v: &Vec<(usize, f64)>| v.iter().map(|&(i, c)| (i, c * f)).collect();
        Affine { z: sc(&self.z), y: sc(&self.y), p: sc(&self.p) }
    }

    fn plus(mut self, other: &Affine) -> Self {
        self.z.extend_from_slice(&other.z);
        self.y.extend_from_slice(&other.y);
        self.p.extend_from_slice(&other.p);
        self
    }

    pub fn eval(&self, z: &[f64], y: &[f64], p: &[f64]) -> f64 {
        let dot = |v: &Vec<(usize, f64)>, x: &[f64]| v.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
        dot(&self.z, z) + dot(&self.y, y) + dot(&self.p, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Dirichlet,
    Neumann,
    /// Offset on a partner-side interface traction that makes the physical
    /// tractions of both sides balance when their stress histories differ.
    InterfaceHistory,
}

/// One prescribed boundary value: `value * program(t)` for a displacement
/// component at a node or a traction component at an element end.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownItem {
    pub kind: ItemKind,
    pub region: usize,
    pub value: f64,
    pub program: Option<String>,
    /// Linear functional recovering this item from the physical nodal
    /// displacements (Dirichlet) or element-end tractions (otherwise).
    pub read: Vec<(usize, f64)>,
    /// Owner-side element-end traction component and owner region of an
    /// interface-history item.
    pub owner: Option<(usize, usize)>,
}

/// A contact node: its displacement along `direction` is a parameter of the
/// linear system, bounded above by the transformed gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactDof {
    pub node: usize,
    pub region: usize,
    pub group: usize,
    pub direction: Point,
    pub gap: f64,
    /// Unknown holding the normal traction `t·d` at this node.
    pub traction: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfacePair {
    pub owner: usize,
    pub partner: usize,
}

/// How every boundary value depends on unknowns, data and contact parameters.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_unknowns: usize,
    /// Index `2 node + dir`.
    pub u: Vec<Affine>,
    /// Index `4 element + 2 end + dir`.
    pub t: Vec<Affine>,
    pub items: Vec<KnownItem>,
    pub contact: Vec<ContactDof>,
    pub pairs: Vec<InterfacePair>,
    pub node_region: Vec<usize>,
}

impl DofLayout {
    pub fn n_equations(&self) -> usize {
        self.u.len() + 2 * self.pairs.len()
    }

    pub fn build(
        mesh: &Mesh,
        bcs: &BTreeMap<String, GroupBc>,
        interfaces: &[(String, String)],
    ) -> Result<DofLayout> {
        let nn = mesh.node_count();
        let ne = mesh.element_count();
        let adj = mesh.node_adjacency();
        let node_region: Vec<usize> = mesh
            .node_regions()
            .into_iter()
            .enumerate()
            .map(|(n, r)| r.ok_or_else(|| Error::InvalidModel(format!("node #{n} is not used"))))
            .collect::<Result<_>>()?;
        let group_bc: Vec<&GroupBc> = mesh
            .groups
            .iter()
            .map(|g| {
                bcs.get(g)
                    .ok_or_else(|| Error::Config(format!("bc-group `{g}` has no boundary condition")))
            })
            .collect::<Result<_>>()?;

        // interface pairing by coincident nodes
        let tol = 1e-10 * mesh.bounding_diagonal();
        let mut owner_side = vec![false; mesh.groups.len()];
        let mut partner_side = vec![false; mesh.groups.len()];
        let mut partner_of = vec![None; nn];
        let mut is_interface_node = vec![false; nn];
        let mut pairs = Vec::new();
        let group_nodes = |g: usize| -> Vec<usize> {
            let mut v: Vec<usize> =
                mesh.elements.iter().filter(|e| e.group == g).flat_map(|e| e.nodes).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for (ga, gb) in interfaces {
            let ia = mesh.group_id(ga).ok_or_else(|| Error::Config(format!("unknown interface group `{ga}`")))?;
            let ib = mesh.group_id(gb).ok_or_else(|| Error::Config(format!("unknown interface group `{gb}`")))?;
            for g in [ia, ib] {
                if !matches!(group_bc[g], GroupBc::Interface) {
                    return Err(Error::Config(format!(
                        "bc-group `{}` is paired as an interface but not declared as one",
                        mesh.groups[g]
                    )));
                }
            }
            owner_side[ia] = true;
            partner_side[ib] = true;
            let na = group_nodes(ia);
            let nb = group_nodes(ib);
            for &b in &nb {
                let a = na
                    .iter()
                    .copied()
                    .find(|&a| (mesh.nodes[a] - mesh.nodes[b]).norm() <= tol)
                    .ok_or_else(|| Error::Config(format!("unpaired interface node #{b} in `{gb}`")))?;
                if node_region[a] == node_region[b] {
                    return Err(Error::Config(format!("interface `{ga}`/`{gb}` does not join two regions")));
                }
                partner_of[b] = Some(a);
                is_interface_node[a] = true;
                is_interface_node[b] = true;
                pairs.push(InterfacePair { owner: a, partner: b });
            }
            if na.len() != nb.len() {
                return Err(Error::Config(format!("interface `{ga}`/`{gb}` is not node-matched")));
            }
            // conforming: every partner element must mirror an owner element
            for el in mesh.elements.iter().filter(|e| e.group == ib) {
                let (p0, p1) = (partner_of[el.nodes[0]].unwrap(), partner_of[el.nodes[1]].unwrap());
                if !mesh.elements.iter().any(|o| o.group == ia && o.nodes == [p1, p0]) {
                    return Err(Error::Config(format!("interface `{ga}`/`{gb}` is not conforming")));
                }
            }
        }
        for (g, bc) in group_bc.iter().enumerate() {
            if matches!(bc, GroupBc::Interface) && !owner_side[g] && !partner_side[g] {
                return Err(Error::Config(format!("interface group `{}` is not paired", mesh.groups[g])));
            }
        }

        let mut n_z = 0usize;
        let mut new_z = || {
            n_z += 1;
            n_z - 1
        };
        let mut items: Vec<KnownItem> = Vec::new();
        let mut u = vec![Affine::default(); 2 * nn];
        let mut contact = Vec::new();
        let mut contact_index = vec![None; nn];

        let dirichlet_of = |e: usize, dir: usize| -> Option<&DirBc> {
            match group_bc[mesh.elements[e].group] {
                GroupBc::Directional { frame: Frame::Global, first, second } => {
                    let d = if dir == 0 { first } else { second };
                    d.is_dirichlet().then_some(d)
                }
                _ => None,
            }
        };

        for n in 0..nn {
            let (prev, next) = adj[n];
            let (Some(prev), Some(next)) = (prev, next) else {
                return Err(Error::InvalidModel(format!("node #{n} is not on a closed loop")));
            };
            let around = [prev, next];
            let mut fixed: [Option<usize>; 2] = [None, None];
            for dir in 0..2 {
                if let Some(DirBc::Dirichlet { value, program }) =
                    around.iter().find_map(|&e| dirichlet_of(e, dir))
                {
                    items.push(KnownItem {
                        kind: ItemKind::Dirichlet,
                        region: node_region[n],
                        value: *value,
                        program: program.clone(),
                        read: vec![(2 * n + dir, 1.0)],
                        owner: None,
                    });
                    fixed[dir] = Some(items.len() - 1);
                }
            }
            let contact_els: Vec<usize> = around
                .iter()
                .copied()
                .filter(|&e| matches!(group_bc[mesh.elements[e].group], GroupBc::Contact(_)))
                .collect();
            if is_interface_node[n] && (fixed.iter().any(Option::is_some) || !contact_els.is_empty()) {
                return Err(Error::Unsupported(format!(
                    "interface node #{n} also carries Dirichlet or contact conditions"
                )));
            }
            let contact_dir = contact_els.first().map(|&e| {
                let GroupBc::Contact(c) = group_bc[mesh.elements[e].group] else { unreachable!() };
                let d = match c.direction {
                    ContactDirection::Fixed(d) => d,
                    ContactDirection::NodeNormal => {
                        let s: Point = contact_els.iter().map(|&f| mesh.normal(f)).sum();
                        s / s.norm()
                    }
                };
                (d, c.gap_at(&mesh.nodes[n]), mesh.elements[e].group)
            });
            match (fixed, contact_dir) {
                ([Some(ix), Some(iy)], _) => {
                    u[2 * n] = Affine::known(ix);
                    u[2 * n + 1] = Affine::known(iy);
                }
                ([fx, fy], Some((d, gap, group))) => {
                    let pc = contact.len();
                    contact.push(ContactDof {
                        node: n,
                        region: node_region[n],
                        group,
                        direction: d,
                        gap,
                        traction: usize::MAX,
                    });
                    contact_index[n] = Some(pc);
                    let param = Affine { p: vec![(pc, 1.0)], ..Default::default() };
                    match (fx, fy) {
                        (Some(ix), None) => {
                            if d.y.abs() < 1e-8 {
                                return Err(Error::Unsupported(format!(
                                    "contact direction at node #{n} is parallel to its Dirichlet direction"
                                )));
                            }
                            u[2 * n] = Affine::known(ix);
                            u[2 * n + 1] = param.scaled(1.0 / d.y).plus(&Affine::known(ix).scaled(-d.x / d.y));
                        }
                        (None, Some(iy)) => {
                            if d.x.abs() < 1e-8 {
                                return Err(Error::Unsupported(format!(
                                    "contact direction at node #{n} is parallel to its Dirichlet direction"
                                )));
                            }
                            u[2 * n + 1] = Affine::known(iy);
                            u[2 * n] = param.scaled(1.0 / d.x).plus(&Affine::known(iy).scaled(-d.y / d.x));
                        }
                        _ => {
                            let s = Affine::unknown(new_z());
                            let perp = Point::new(-d.y, d.x);
                            u[2 * n] = param.scaled(d.x).plus(&s.scaled(perp.x));
                            u[2 * n + 1] = param.scaled(d.y).plus(&s.scaled(perp.y));
                        }
                    }
                }
                ([fx, fy], None) => {
                    u[2 * n] = fx.map(Affine::known).unwrap_or_else(|| Affine::unknown(new_z()));
                    u[2 * n + 1] = fy.map(Affine::known).unwrap_or_else(|| Affine::unknown(new_z()));
                }
            }
        }

        let mut t = vec![Affine::default(); 4 * ne];
        let mut tied: HashMap<(usize, usize), usize> = HashMap::new();
        let mut contact_traction: HashMap<usize, usize> = HashMap::new();
        let mut interface_traction: HashMap<(usize, usize), usize> = HashMap::new();
        let mut owner_end: HashMap<usize, (usize, usize)> = HashMap::new();
        for (e, el) in mesh.elements.iter().enumerate() {
            if owner_side[el.group] {
                for end in 0..2 {
                    owner_end.entry(el.nodes[end]).or_insert((4 * e + 2 * end, el.region));
                }
            }
        }
        for (e, el) in mesh.elements.iter().enumerate() {
            let nrm = mesh.normal(e);
            let tan = Point::new(-nrm.y, nrm.x);
            for end in 0..2 {
                let n = el.nodes[end];
                let base = 4 * e + 2 * end;
                let other = if end == 0 { adj[n].0.unwrap() } else { adj[n].1.unwrap() };
                match group_bc[el.group] {
                    GroupBc::Contact(_) => {
                        let d = contact_index[n].map(|i| contact[i].direction).unwrap_or(nrm);
                        let col = *contact_traction.entry(n).or_insert_with(&mut new_z);
                        t[base] = Affine::unknown(col).scaled(d.x);
                        t[base + 1] = Affine::unknown(col).scaled(d.y);
                    }
                    GroupBc::Interface => {
                        let (owner, sign) = match partner_of[n] {
                            Some(a) if partner_side[el.group] => (a, -1.0),
                            _ => (n, 1.0),
                        };
                        for dir in 0..2 {
                            let col = *interface_traction.entry((owner, dir)).or_insert_with(&mut new_z);
                            t[base + dir] = Affine::unknown(col).scaled(sign);
                            if sign < 0.0 {
                                let (oe, oregion) = owner_end[&owner];
                                items.push(KnownItem {
                                    kind: ItemKind::InterfaceHistory,
                                    region: el.region,
                                    value: 0.0,
                                    program: None,
                                    read: vec![(base + dir, 1.0)],
                                    owner: Some((oe + dir, oregion)),
                                });
                                t[base + dir] = std::mem::take(&mut t[base + dir]).plus(&Affine::known(items.len() - 1));
                            }
                        }
                    }
                    GroupBc::Directional { frame: Frame::Global, first, second } => {
                        for (dir, bc) in [first, second].into_iter().enumerate() {
                            match bc {
                                DirBc::Neumann { value, program } => {
                                    items.push(KnownItem {
                                        kind: ItemKind::Neumann,
                                        region: el.region,
                                        value: *value,
                                        program: program.clone(),
                                        read: vec![(base + dir, 1.0)],
                                        owner: None,
                                    });
                                    t[base + dir] = Affine::known(items.len() - 1);
                                }
                                DirBc::Dirichlet { .. } => {
                                    let col = if dirichlet_of(other, dir).is_some() {
                                        *tied.entry((n, dir)).or_insert_with(&mut new_z)
                                    } else {
                                        new_z()
                                    };
                                    t[base + dir] = Affine::unknown(col);
                                }
                            }
                        }
                    }
                    GroupBc::Directional { frame: Frame::Local, first, second } => {
                        let mut acc = [Affine::default(), Affine::default()];
                        for (k, (bc, axis)) in [(first, nrm), (second, tan)].into_iter().enumerate() {
                            let DirBc::Neumann { value, program } = bc else {
                                return Err(Error::Unsupported(format!(
                                    "bc-group `{}`: Dirichlet data in the local frame",
                                    mesh.groups[el.group]
                                )));
                            };
                            let _ = k;
                            items.push(KnownItem {
                                kind: ItemKind::Neumann,
                                region: el.region,
                                value: *value,
                                program: program.clone(),
                                read: vec![(base, axis.x), (base + 1, axis.y)],
                                owner: None,
                            });
                            let it = Affine::known(items.len() - 1);
                            acc[0] = std::mem::take(&mut acc[0]).plus(&it.scaled(axis.x));
                            acc[1] = std::mem::take(&mut acc[1]).plus(&it.scaled(axis.y));
                        }
                        let [ax, ay] = acc;
                        t[base] = ax;
                        t[base + 1] = ay;
                    }
                }
            }
        }

        for c in contact.iter_mut() {
            c.traction = *contact_traction.get(&c.node).ok_or_else(|| {
                Error::Config(format!("contact node #{} has no contact element", c.node))
            })?;
        }
        let layout = DofLayout { n_unknowns: n_z, u, t, items, contact, pairs, node_region };
        if layout.n_unknowns != layout.n_equations() {
            return Err(Error::Config(format!(
                "boundary conditions leave {} unknowns for {} equations",
                layout.n_unknowns,
                layout.n_equations()
            )));
        }
        layout.check_gauge(mesh)?;
        Ok(layout)
    }

    /// Every set of interface-connected regions needs a Dirichlet or contact
    /// condition to fix its rigid motion.
    fn check_gauge(&self, mesh: &Mesh) -> Result<()> {
        let regions = mesh.region_ids();
        let idx = |r: usize| regions.iter().position(|&x| x == r).unwrap();
        let mut parent: Vec<usize> = (0..regions.len()).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for pr in &self.pairs {
            let a = find(&mut parent, idx(self.node_region[pr.owner]));
            let b = find(&mut parent, idx(self.node_region[pr.partner]));
            parent[a] = b;
        }
        let mut supported = vec![false; regions.len()];
        for it in self.items.iter().filter(|i| i.kind == ItemKind::Dirichlet) {
            let r = find(&mut parent, idx(it.region));
            supported[r] = true;
        }
        for c in &self.contact {
            let r = find(&mut parent, idx(c.region));
            supported[r] = true;
        }
        for i in 0..regions.len() {
            let r = find(&mut parent, i);
            if !supported[r] {
                return Err(Error::Unsupported(format!(
                    "region {} has only traction data; pure-Neumann problems are not supported",
                    regions[i]
                )));
            }
        }
        Ok(())
    }
}

/// The factorized mixed system `A z = B_y y + B_p p + e`.
///
/// `e` is nonzero only on the interface compatibility rows, which carry the
/// displacement histories of the two sides.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    pub layout: DofLayout,
    pub a: DMatrix<f64>,
    pub b_known: DMatrix<f64>,
    pub b_param: DMatrix<f64>,
    /// `A⁻¹ B_p`: response of the unknowns to unit contact parameters.
    pub z_param: DMatrix<f64>,
    /// Leading transform coefficient per node (by its region), used on the
    /// interface rows.
    pub node_a0: Vec<f64>,
    lu: Factorized,
}

impl MixedSystem {
    /// Builds and factorizes `A` from the complete `H`, `G` and the layout.
    /// `a0_of_region` gives the leading coefficient of the displacement
    /// transform of each region; it only enters the interface rows.
    pub fn build(
        system: &BemSystem,
        layout: DofLayout,
        a0_of_region: &dyn Fn(usize) -> f64,
    ) -> Result<MixedSystem> {
        if !system.diagonal_complete {
            return Err(Error::Config("H diagonal not completed".into()));
        }
        let neq = layout.n_equations();
        let nz = layout.n_unknowns;
        let nk = layout.items.len();
        let np = layout.contact.len();
        let ncol = system.h.nrows();
        let mut a = DMatrix::zeros(neq, nz);
        let mut by = DMatrix::zeros(neq, nk);
        let mut bp = DMatrix::zeros(neq, np);
        let add_col = |dst: &mut DMatrix<f64>, col: usize, src: nalgebra::DVectorView<f64>, c: f64| {
            let mut d = dst.column_mut(col);
            d.rows_mut(0, ncol).axpy(c, &src, 1.0);
        };
        for (j, aff) in layout.u.iter().enumerate() {
            let hc = system.h.column(j);
            for &(col, c) in &aff.z {
                add_col(&mut a, col, hc.as_view(), c);
            }
            for &(col, c) in &aff.y {
                add_col(&mut by, col, hc.as_view(), -c);
            }
            for &(col, c) in &aff.p {
                add_col(&mut bp, col, hc.as_view(), -c);
            }
        }
        for (j, aff) in layout.t.iter().enumerate() {
            let gc = system.g.column(j);
            for &(col, c) in &aff.z {
                add_col(&mut a, col, gc.as_view(), -c);
            }
            for &(col, c) in &aff.y {
                add_col(&mut by, col, gc.as_view(), c);
            }
            for &(col, c) in &aff.p {
                add_col(&mut bp, col, gc.as_view(), c);
            }
        }
        let node_a0: Vec<f64> = layout.node_region.iter().map(|&r| a0_of_region(r)).collect();
        for (k, pr) in layout.pairs.iter().enumerate() {
            for dir in 0..2 {
                let row = ncol + 2 * k + dir;
                for (node, sign) in [(pr.owner, 1.0), (pr.partner, -1.0)] {
                    for &(col, c) in &layout.u[2 * node + dir].z {
                        a[(row, col)] += sign * c / node_a0[node];
                    }
                }
            }
        }
        let lu = Factorized::new(a.clone())?;
        let z_param = lu.solve_matrix(&bp)?;
        Ok(MixedSystem { layout, a, b_known: by, b_param: bp, z_param, node_a0, lu })
    }

    pub fn rhs(&self, y: &[f64], p: &[f64], interface_rhs: &[f64]) -> DVector<f64> {
        let mut b = &self.b_known * DVector::from_column_slice(y);
        if !p.is_empty() {
            b += &self.b_param * DVector::from_column_slice(p);
        }
        let off = self.layout.u.len();
        for (k, v) in interface_rhs.iter().enumerate() {
            b[off + k] += v;
        }
        b
    }

    pub fn solve(&self, y: &[f64], p: &[f64], interface_rhs: &[f64]) -> Result<DVector<f64>> {
        self.lu.solve(&self.rhs(y, p, interface_rhs))
    }

    /// Relative residual `‖A z − b‖ / ‖b‖`.
    pub fn residual(&self, z: &DVector<f64>, y: &[f64], p: &[f64], interface_rhs: &[f64]) -> f64 {
        let b = self.rhs(y, p, interface_rhs);
        let r = &self.a * z - &b;
        r.norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    /// Boundary values `(u, t)` for given unknowns, data and parameters.
    pub fn boundary(&self, z: &[f64], y: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let u = self.layout.u.iter().map(|a| a.eval(z, y, p)).collect();
        let t = self.layout.t.iter().map(|a| a.eval(z, y, p)).collect();
        (u, t)
    }
}

/// `M u` with `boundary_work(t, u) = t · (M u)` over all elements.
pub fn pairing_apply(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 4 * mesh.element_count()];
    for (e, el) in mesh.elements.iter().enumerate() {
        let l6 = mesh.element_length(e) / 6.0;
        for a in 0..2 {
            for b in 0..2 {
                let m = if a == b { 2.0 * l6 } else { l6 };
                for d in 0..2 {
                    out[4 * e + 2 * a + d] += m * u[2 * el.nodes[b] + d];
                }
            }
        }
    }
    out
}

/// Boundary pairing `∫ t·u dS` between element-end
/// tractions and nodal displacements, restricted to elements accepted by
/// `filter`.
pub fn boundary_work(mesh: &Mesh, t: &[f64], u: &[f64], filter: &dyn Fn(usize) -> bool) -> f64 {
    let mut w = 0.0;
    for (e, el) in mesh.elements.iter().enumerate() {
        if !filter(e) {
            continue;
        }
        let l6 = mesh.element_length(e) / 6.0;
        for a in 0..2 {
            for b in 0..2 {
                let m = if a == b { 2.0 * l6 } else { l6 };
                for d in 0..2 {
                    w += m * t[4 * e + 2 * a + d] * u[2 * el.nodes[b] + d];
                }
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_mesh, MeshShape, RectangleSpec};

    fn mat() -> Material {
        Material { young: 11000.0, poisson: 0.0 }
    }

    fn rect(nx: usize, ny: usize, l: f64, h: f64) -> Mesh {
        generate_mesh(&MeshShape::Rectangle(RectangleSpec {
            origin: [0.0, 0.0],
            length: l,
            height: h,
            nx,
            ny,
            region: 0,
            prefix: String::new(),
        }))
        .unwrap()
    }

    /// 64-point rule on 64 equal sub-segments.
    fn brute_force(xi: &Point, a: &Point, b: &Point, m: &Material) -> (SMatrix<f64, 2, 4>, SMatrix<f64, 2, 4>) {
        let k = KernelConsts::new(m);
        let rule = gauss_legendre(64);
        let n = {
            let t = (b - a) / (b - a).norm();
            Point::new(t.y, -t.x)
        };
        let len = (b - a).norm();
        let mut h = SMatrix::<f64, 2, 4>::zeros();
        let mut g = SMatrix::<f64, 2, 4>::zeros();
        let parts = 64;
        for p in 0..parts {
            for &(q, w) in &rule {
                let s = (p as f64 + q) / parts as f64;
                let x = a + (b - a) * s;
                let tt = k.t(x - xi, n).transpose();
                let uu = k.u(x - xi);
                for c in 0..2 {
                    let f = [1.0 - s, s][c] * w * len / parts as f64;
                    for r in 0..2 {
                        for cc in 0..2 {
                            h[(r, 2 * c + cc)] += tt[(r, cc)] * f;
                            g[(r, 2 * c + cc)] += uu[(r, cc)] * f;
                        }
                    }
                }
            }
        }
        (h, g)
    }

    #[test]
    fn far_element_matches_midpoint_and_brute_force() {
        let m = Material { young: 2.0, poisson: 0.3 };
        let (a, b) = (Point::new(100.0, 0.0), Point::new(100.0, 1.0));
        let xi = Point::new(0.0, 0.3);
        let inf = Integrator::new(&m, IntegrationOptions::default()).influence(&xi, &a, &b);
        let (h, g) = brute_force(&xi, &a, &b, &m);
        assert!((inf.h - h).abs().max() <= 1e-12 * h.abs().max());
        assert!((inf.g - g).abs().max() <= 1e-12 * g.abs().max());
        // midpoint kernel × length × ½ per node
        let k = KernelConsts::new(&m);
        let mid = k.u(Point::new(100.0, 0.5) - xi) * 0.5;
        for c in 0..2 {
            let blk = inf.g.fixed_view::<2, 2>(0, 2 * c);
            assert!((blk - mid).abs().max() <= 1e-2 * mid.abs().max());
        }
    }

    #[test]
    fn near_element_uses_subdivision() {
        let m = Material { young: 2.0, poisson: 0.3 };
        let (a, b) = (Point::new(0.0, 0.0), Point::new(1.0, 0.0));
        let xi = Point::new(0.4, 0.05);
        let inf = Integrator::new(&m, IntegrationOptions::default()).influence(&xi, &a, &b);
        let (h, g) = brute_force(&xi, &a, &b, &m);
        assert!((inf.h - h).abs().max() <= 1e-8 * h.abs().max());
        assert!((inf.g - g).abs().max() <= 1e-8 * g.abs().max());
    }

    /// Graded quadrature towards the singular endpoint as an independent route
    /// to the analytic logarithmic integrals.
    #[test]
    fn singular_g_matches_graded_quadrature() {
        let m = Material { young: 3.0, poisson: 0.2 };
        let k = KernelConsts::new(&m);
        for (a, b, at_start) in [
            (Point::new(0.2, 0.1), Point::new(1.7, 0.9), true),
            (Point::new(-0.4, 2.0), Point::new(0.3, 0.1), false),
        ] {
            let xi = if at_start { a } else { b };
            let inf = Integrator::new(&m, IntegrationOptions::default()).influence(&xi, &a, &b);
            assert_eq!(inf.singular_node, Some(if at_start { 0 } else { 1 }));
            let len = (b - a).norm();
            let rule = gauss_legendre(20);
            let mut g = SMatrix::<f64, 2, 4>::zeros();
            // geometric grading: panels [q^{k+1}, q^k] in distance from ξ
            let q: f64 = 0.15;
            for p in 0..40 {
                let (r0, r1) = (q.powi(p + 1), q.powi(p));
                for &(x, w) in &rule {
                    let rho = r0 + (r1 - r0) * x;
                    let s = if at_start { rho } else { 1.0 - rho };
                    let toward = if at_start { b - a } else { a - b };
                    let uu = k.u(toward * rho);
                    for c in 0..2 {
                        let f = [1.0 - s, s][c] * w * (r1 - r0) * len;
                        for r in 0..2 {
                            for cc in 0..2 {
                                g[(r, 2 * c + cc)] += uu[(r, cc)] * f;
                            }
                        }
                    }
                }
            }
            assert!((inf.g - g).abs().max() <= 1e-10 * g.abs().max(), "{}", (inf.g - g).abs().max());
        }
    }

    #[test]
    fn mirror_symmetry_flips_off_diagonal_signs() {
        let m = Material { young: 1.0, poisson: 0.25 };
        let integ = Integrator::new(&m, IntegrationOptions::default());
        let (a, b, xi) = (Point::new(1.0, 0.5), Point::new(2.0, 1.5), Point::new(-0.3, 0.2));
        let flip = |p: Point| Point::new(p.x, -p.y);
        let i1 = integ.influence(&xi, &a, &b);
        // reflection reverses orientation; swap endpoints to keep the outward side
        let i2 = integ.influence(&flip(xi), &flip(b), &flip(a));
        for c in 0..2 {
            let c2 = 1 - c;
            for (r, cc) in [(0, 0), (1, 1)] {
                assert!((i1.g[(r, 2 * c + cc)] - i2.g[(r, 2 * c2 + cc)]).abs() < 1e-13);
                assert!((i1.h[(r, 2 * c + cc)] - i2.h[(r, 2 * c2 + cc)]).abs() < 1e-13);
            }
            for (r, cc) in [(0, 1), (1, 0)] {
                assert!((i1.g[(r, 2 * c + cc)] + i2.g[(r, 2 * c2 + cc)]).abs() < 1e-13);
                assert!((i1.h[(r, 2 * c + cc)] + i2.h[(r, 2 * c2 + cc)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn square_dimensions_and_translation() {
        let mesh = rect(1, 1, 1.0, 1.0);
        let mats = BTreeMap::from([(0, mat())]);
        let sys = assemble_hg(&mesh, &mats, &IntegrationOptions::default()).unwrap();
        assert_eq!(sys.h.shape(), (8, 8));
        assert_eq!(sys.g.shape(), (8, 16));
        let sys = rigid_body_diagonal(sys);
        assert!(sys.translation_residual(0) < 1e-10);
        assert!(sys.translation_residual(1) < 1e-10);
    }

    /// Free term at a node in the middle of a straight side is ½I; checked
    /// against a fine contour evaluation of the principal value.
    #[test]
    fn smooth_node_free_term_is_half_identity() {
        let m = Material { young: 1.0, poisson: 0.3 };
        let mesh = rect(2, 2, 1.0, 1.0);
        let mats = BTreeMap::from([(0, m)]);
        let sys = rigid_body_diagonal(assemble_hg(&mesh, &mats, &IntegrationOptions::default()).unwrap());
        // node 1 is (0.5, 0) on the bottom side
        assert_eq!(mesh.nodes[1], Point::new(0.5, 0.0));
        let diag = sys.h.fixed_view::<2, 2>(2, 2).into_owned();
        // principal value of ∫Tᵀ over the whole contour, excluding ε-disk
        let k = KernelConsts::new(&m);
        let xi = mesh.nodes[1];
        let mut pv = nalgebra::Matrix2::zeros();
        let rule = gauss_legendre(16);
        let eps = 1e-7;
        for e in 0..mesh.element_count() {
            let (a, b) = mesh.endpoints(e);
            let n = mesh.normal(e);
            let parts = 2000;
            for p in 0..parts {
                for &(q, w) in &rule {
                    let s = (p as f64 + q) / parts as f64;
                    let x = a + (b - a) * s;
                    if (x - xi).norm() < eps {
                        continue;
                    }
                    pv += k.t(x - xi, n).transpose() * (w * (b - a).norm() / parts as f64);
                }
            }
        }
        // H_ii = C + PV part on the two adjacent elements; their PV vanishes on
        // a straight line by antisymmetry, so H_ii = ½I while −Σ H_ij = C
        assert!((diag - nalgebra::Matrix2::identity() * 0.5).abs().max() < 1e-6, "{diag}");
        assert!((pv + nalgebra::Matrix2::identity() * 0.5).abs().max() < 1e-4, "{pv}");
    }

    #[test]
    fn corner_free_term_is_not_half_identity() {
        let mesh = rect(2, 2, 1.0, 1.0);
        let mats = BTreeMap::from([(0, Material { young: 1.0, poisson: 0.3 })]);
        let sys = rigid_body_diagonal(assemble_hg(&mesh, &mats, &IntegrationOptions::default()).unwrap());
        let diag = sys.h.fixed_view::<2, 2>(0, 0).into_owned();
        assert!((diag - nalgebra::Matrix2::identity() * 0.5).abs().max() > 1e-2);
    }

    fn bcs_of(pairs: &[(&str, GroupBc)]) -> BTreeMap<String, GroupBc> {
        pairs.iter().map(|(n, b)| (n.to_string(), b.clone())).collect()
    }

    #[test]
    fn all_dirichlet_square_unknowns_are_tractions() {
        let mesh = rect(1, 1, 1.0, 1.0);
        let bcs = bcs_of(&[
            ("bottom", GroupBc::fixed()),
            ("right", GroupBc::fixed()),
            ("top", GroupBc::fixed()),
            ("left", GroupBc::fixed()),
        ]);
        let layout = DofLayout::build(&mesh, &bcs, &[]).unwrap();
        assert_eq!(layout.n_unknowns, 8);
        assert!(layout.u.iter().all(|a| a.z.is_empty()));
        let mats = BTreeMap::from([(0, mat())]);
        let sys = rigid_body_diagonal(assemble_hg(&mesh, &mats, &IntegrationOptions::default()).unwrap());
        let mixed = MixedSystem::build(&sys, layout.clone(), &|_| 1.0).unwrap();
        // every A column is −G summed over the element ends tied into it
        for col in 0..8 {
            let mut expect = DVector::zeros(8);
            for (j, aff) in layout.t.iter().enumerate() {
                for &(c, f) in &aff.z {
                    if c == col {
                        expect -= sys.g.column(j) * f;
                    }
                }
            }
            assert!((mixed.a.column(col) - expect).amax() < 1e-15);
        }
    }

    #[test]
    fn cantilever_bookkeeping_and_pure_neumann() {
        let mesh = rect(8, 1, 800.0, 100.0);
        let mut bcs = bcs_of(&[
            ("bottom", GroupBc::free()),
            ("right", GroupBc::xy(DirBc::Neumann { value: 5.0, program: None }, DirBc::free())),
            ("top", GroupBc::free()),
            ("left", GroupBc::fixed()),
        ]);
        let layout = DofLayout::build(&mesh, &bcs, &[]).unwrap();
        assert_eq!(layout.n_unknowns, 2 * mesh.node_count());
        let unknown_u = layout.u.iter().filter(|a| !a.z.is_empty()).count();
        assert_eq!(unknown_u, 2 * mesh.node_count() - 4);
        bcs.insert("left".into(), GroupBc::free());
        assert!(matches!(DofLayout::build(&mesh, &bcs, &[]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn uniaxial_patch_test_is_exact() {
        let m = Material { young: 200.0, poisson: 0.3 };
        let mesh = rect(4, 3, 2.0, 1.5);
        let roller_x = GroupBc::xy(DirBc::fixed(), DirBc::free());
        let roller_y = GroupBc::xy(DirBc::free(), DirBc::fixed());
        let bcs = bcs_of(&[
            ("bottom", roller_y),
            ("right", GroupBc::xy(DirBc::Neumann { value: 3.0, program: None }, DirBc::free())),
            ("top", GroupBc::free()),
            ("left", roller_x),
        ]);
        let layout = DofLayout::build(&mesh, &bcs, &[]).unwrap();
        let mats = BTreeMap::from([(0, m)]);
        let sys = rigid_body_diagonal(assemble_hg(&mesh, &mats, &IntegrationOptions::default()).unwrap());
        let mixed = MixedSystem::build(&sys, layout, &|_| 1.0).unwrap();
        let y: Vec<f64> = mixed.layout.items.iter().map(|it| it.value).collect();
        let z = mixed.solve(&y, &[], &[]).unwrap();
        assert!(mixed.residual(&z, &y, &[], &[]) < 1e-12);
        let (u, t) = mixed.boundary(z.as_slice(), &y, &[]);
        let nu = m.poisson;
        for (n, x) in mesh.nodes.iter().enumerate() {
            let ex = 3.0 * (1.0 - nu * nu) / m.young * x.x;
            let ey = -3.0 * nu * (1.0 + nu) / m.young * x.y;
            assert!((u[2 * n] - ex).abs() < 1e-3 * 0.03, "node {n}: {} vs {ex}", u[2 * n]);
            assert!((u[2 * n + 1] - ey).abs() < 1e-3 * 0.03, "node {n}: {} vs {ey}", u[2 * n + 1]);
        }
        // reaction on the left side balances the applied load
        let left = mesh.group_id("left").unwrap();
        let mut fx = 0.0;
        for (e, el) in mesh.elements.iter().enumerate() {
            if el.group == left {
                fx += 0.5 * mesh.element_length(e) * (t[4 * e] + t[4 * e + 2]);
            }
        }
        assert!((fx + 3.0 * 1.5).abs() < 1e-3 * 4.5, "{fx}");
    }
}
