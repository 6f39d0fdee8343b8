//! Acceptance criteria. Run with `--nocapture` to see one line per criterion.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use viscobem::assembly::{assemble_hg, rigid_body_diagonal, IntegrationOptions};
use viscobem::case::{group_resultant, load_config, Case};
use viscobem::coupling::interface_residuals;
use viscobem::model::{
    generate_mesh, rheology_preset, DirBc, GroupBc, LoadProgram, Material, Mesh, MeshShape, Point, PresetParams,
    RectangleSpec, RheologyCoeffs,
};
use viscobem::postprocess::EnergyLedger;
use viscobem::timestepper::{run_time_loop, ProbeKind, Scheme, Setup, Simulation, StepState};

const CHI: f64 = 45.454545;
const E: f64 = 11000.0;
const P: f64 = 5.0;
const L: f64 = 800.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, title: &str, o: &Outcome) {
    println!("criterion {id} [{}] {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn case(name: &str) -> Case {
    load_config(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)).unwrap()
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn bar_mesh(length: f64, x0: f64, nx: usize, region: usize, prefix: &str) -> Mesh {
    generate_mesh(&MeshShape::Rectangle(RectangleSpec {
        origin: [x0, 0.0],
        length,
        height: 100.0,
        nx,
        ny: 10,
        region,
        prefix: prefix.into(),
    }))
    .unwrap()
}

/// Example A bar: left clamped, right under `P · program(t)` along x.
fn bar(rheology: RheologyCoeffs, scheme: Scheme, program: Vec<(f64, f64)>) -> Setup {
    let mesh = bar_mesh(L, 0.0, 80, 0, "");
    let tip = node_at(&mesh, L, 50.0);
    Setup {
        mesh,
        materials: BTreeMap::from([(0, Material::new(E, 0.0).unwrap())]),
        rheology: BTreeMap::from([(0, rheology)]),
        bcs: BTreeMap::from([
            ("bottom".to_string(), GroupBc::free()),
            ("top".to_string(), GroupBc::free()),
            ("left".to_string(), GroupBc::fixed()),
            (
                "right".to_string(),
                GroupBc::xy(DirBc::Neumann { value: P, program: Some("load".into()) }, DirBc::free()),
            ),
        ]),
        programs: BTreeMap::from([("load".to_string(), LoadProgram::new(program).unwrap())]),
        probes: vec![ProbeKind::Node(tip), ProbeKind::Interior(Point::new(400.0, 50.0))],
        scheme,
        ..Default::default()
    }
}

fn node_at(mesh: &Mesh, x: f64, y: f64) -> usize {
    mesh.nodes.iter().position(|p| (p - Point::new(x, y)).norm() < 1e-9).unwrap()
}

fn creep_program() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0), (400.0, 1.0), (400.0, 0.0), (800.0, 0.0)]
}

fn exact_tip(t: f64) -> f64 {
    let eps = |s: f64| P / E * (1.0 - (-s / CHI).exp());
    if t <= 400.0 {
        eps(t) * L
    } else {
        eps(400.0) * (-(t - 400.0) / CHI).exp() * L
    }
}

fn run(setup: Setup, tau: f64, total: f64) -> Vec<StepState> {
    let mut sim = Simulation::new(setup, tau).unwrap();
    run_time_loop(&mut sim, total).unwrap().steps
}

fn creep_error(tau: f64) -> f64 {
    let steps = run(bar(RheologyCoeffs::kelvin_voigt(CHI), Scheme::General, creep_program()), tau, 800.0);
    let err = steps.iter().map(|s| (s.probes[0].u[0] - exact_tip(s.time)).abs()).fold(0.0, f64::max);
    err / exact_tip(400.0)
}

fn patch_test() -> Outcome {
    let t0 = Instant::now();
    let setup = bar(RheologyCoeffs::hooke(), Scheme::General, vec![(0.0, 1.0), (1.0, 1.0)]);
    let mesh = setup.mesh.clone();
    let mut setup = setup;
    let interior: Vec<Point> =
        (1..8).flat_map(|i| (1..4).map(move |j| Point::new(100.0 * i as f64, 25.0 * j as f64))).collect();
    setup.probes = interior.iter().map(|&p| ProbeKind::Interior(p)).collect();
    let st = run(setup, 1.0, 1.0).pop().unwrap();
    let umax = P * L / E;
    let mut eu: f64 = 0.0;
    for (n, x) in mesh.nodes.iter().enumerate() {
        eu = eu.max((st.u[2 * n] - P * x.x / E).abs()).max(st.u[2 * n + 1].abs());
    }
    let mut et: f64 = 0.0;
    for (e, _) in mesh.elements.iter().enumerate() {
        let n = mesh.normal(e);
        for end in 0..2 {
            // traction of the uniform state σxx = P on the outward normal
            let exact = [P * n.x, 0.0];
            for d in 0..2 {
                et = et.max((st.p[4 * e + 2 * end + d] - exact[d]).abs());
            }
        }
    }
    let mut ei: f64 = 0.0;
    for (p, r) in interior.iter().zip(&st.probes) {
        let s = r.stress.unwrap();
        ei = ei.max((r.u[0] - P * p.x / E).abs() / umax).max(r.u[1].abs() / umax);
        ei = ei.max((s[0] - P).abs() / P).max(s[1].abs() / P).max(s[2].abs() / P);
    }
    let secs = t0.elapsed().as_secs_f64();
    let (ru, rt) = (eu / umax, et / P);
    Outcome {
        pass: ru < 1e-6 && rt < 1e-6 && ei < 1e-6 && secs < 5.0,
        detail: format!(
            "{} elements, boundary u {ru:.1e}, boundary t {rt:.1e}, interior {ei:.1e} (tol 1e-6), {secs:.2} s",
            mesh.elements.len()
        ),
    }
}

fn rigid_body() -> Outcome {
    // The diagonal blocks come from the rigid-body sum, so the identity holds
    // by construction; nodes inside straight sides give an independent check,
    // their diagonal block must be the smooth-boundary free term I/2.
    let mut worst: f64 = 0.0;
    let mut free_term: f64 = 0.0;
    for name in ["example_a.json", "example_a_shear.json", "contact_chi0.json"] {
        let c = case(name);
        let mesh = &c.setup.mesh;
        let sys = rigid_body_diagonal(assemble_hg(mesh, &c.setup.materials, &IntegrationOptions::default()).unwrap());
        worst = worst.max(sys.translation_residual(0)).max(sys.translation_residual(1));
        let adj = mesh.node_adjacency();
        for (n, (prev, next)) in adj.iter().enumerate() {
            let (Some(a), Some(b)) = (prev, next) else { continue };
            if (mesh.normal(*a) - mesh.normal(*b)).norm() > 1e-12 {
                continue;
            }
            for r in 0..2 {
                for q in 0..2 {
                    let expect = if r == q { 0.5 } else { 0.0 };
                    free_term = free_term.max((sys.h[(2 * n + r, 2 * n + q)] - expect).abs());
                }
            }
        }
    }
    Outcome {
        pass: worst < 1e-10 && free_term < 1e-6,
        detail: format!(
            "max ‖H·translation‖∞/max|H| = {worst:.1e} on the rectangle and quarter-disk meshes; diagonal blocks at straight-side nodes differ from I/2 by {free_term:.1e}"
        ),
    }
}

fn creep() -> Outcome {
    let t0 = Instant::now();
    let steps = run(bar(RheologyCoeffs::kelvin_voigt(CHI), Scheme::General, creep_program()), 1.0, 800.0);
    let secs = t0.elapsed().as_secs_f64();
    let err = steps.iter().map(|s| (s.probes[0].u[0] - exact_tip(s.time)).abs()).fold(0.0, f64::max);
    let e1 = err / exact_tip(400.0);
    let e10 = creep_error(10.0);
    let steady = steps[399].probes[0].u[0];
    Outcome {
        pass: e1 < 0.01 && e10 < 0.05 && (steady - P * L / E).abs() < 1e-3 * P * L / E && secs < 60.0,
        detail: format!(
            "error τ=1: {:.3}%, τ=10: {:.3}%, tip at t=400: {steady:.5} mm (steady {:.5}), {secs:.2} s",
            100.0 * e1,
            100.0 * e10,
            P * L / E
        ),
    }
}

fn temporal_order() -> Outcome {
    let errs: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|&t| creep_error(t)).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    Outcome {
        pass: ratios.iter().all(|r| (1.7..=2.3).contains(r)),
        detail: format!(
            "errors τ=8,4,2,1: {:.3e} {:.3e} {:.3e} {:.3e}; ratios {:.3} {:.3} {:.3}",
            errs[0], errs[1], errs[2], errs[3], ratios[0], ratios[1], ratios[2]
        ),
    }
}

fn rheology_catalogue() -> Outcome {
    // (a) Maxwell relaxation under a held end displacement
    let chi = 50.0;
    let tau = chi / 100.0;
    let u0 = 0.1;
    let mut s = bar(rheology_preset("maxwell", &PresetParams { chi: Some(chi), ..Default::default() }).unwrap(), Scheme::General, vec![(0.0, 1.0), (1.0, 1.0)]);
    s.bcs.insert(
        "right".into(),
        GroupBc::xy(DirBc::Dirichlet { value: u0, program: None }, DirBc::free()),
    );
    let steps = run(s, tau, 5.0 * chi);
    let sigma0 = E * u0 / L;
    let relax_err = steps
        .iter()
        .map(|st| (st.probes[1].stress.unwrap()[0] - sigma0 * (-st.time / chi).exp()).abs() / sigma0)
        .fold(0.0, f64::max);

    // (b) Boltzmann first step and load-removal jumps
    let params = PresetParams { chi: Some(CHI), alpha: Some(2.0), mu2: None };
    let boltz = rheology_preset("boltzmann", &params).unwrap();
    let tiny = CHI / 2000.0;
    let first = run(bar(boltz, Scheme::General, creep_program()), tiny, tiny)[0].probes[0].u[0];
    let series = P * L / (2.0 * E);
    let first_err = (first - series).abs() / series;
    let jump = |rh: RheologyCoeffs| {
        let st = run(bar(rh, Scheme::General, creep_program()), 1.0, 800.0);
        (st[399].probes[0].u[0] - st[400].probes[0].u[0]) / st[399].probes[0].u[0]
    };
    let (jh, jb, jk) = (jump(RheologyCoeffs::hooke()), jump(boltz), jump(RheologyCoeffs::kelvin_voigt(CHI)));

    // (c) general and dedicated Kelvin-Voigt paths; with τ = 1 both reduce to
    // the same arithmetic, so τ = 10 is compared as well
    let path_diff = |tau: f64| {
        let g = run(bar(RheologyCoeffs::kelvin_voigt(CHI), Scheme::General, creep_program()), tau, 800.0);
        let k = run(bar(RheologyCoeffs::kelvin_voigt(CHI), Scheme::KelvinVoigt, creep_program()), tau, 800.0);
        let scale = g.iter().map(|s| amax(&s.u)).fold(0.0, f64::max);
        g.iter()
            .zip(&k)
            .map(|(a, b)| a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
            / scale
    };
    let path_diff = path_diff(1.0).max(path_diff(10.0));

    let pass = relax_err < 0.02 && first_err < 0.02 && jh > 0.999 && jb > 0.2 && jk < 0.05 && path_diff < 1e-12;
    Outcome {
        pass,
        detail: format!(
            "(a) Maxwell relaxation error {:.2}% of σ0; (b) Boltzmann first step vs series spring {:.2}%, relative jump at removal hooke {jh:.3} boltzmann {jb:.3} kelvin-voigt {jk:.3}; (c) general vs dedicated path {path_diff:.1e} (τ = 1 and 10)",
            100.0 * relax_err,
            100.0 * first_err
        ),
    }
}

struct LedgerCheck {
    min_slack: f64,
    max_term: f64,
}

fn ledger_of(setup: Setup, tau: f64, total: f64) -> (LedgerCheck, EnergyLedger) {
    let mut sim = Simulation::new(setup, tau).unwrap();
    let mesh = sim.mesh().clone();
    let elem_chi: Vec<f64> = mesh.elements.iter().map(|e| sim.kelvin_voigt_time(e.region).unwrap()).collect();
    let mut elastic = sim.initial_elastic_traction();
    let chi_of = |r: usize| sim.kelvin_voigt_time(r);
    let mut ledger = EnergyLedger::new(
        &mesh,
        &chi_of,
        vec![true; mesh.elements.len()],
        tau,
        sim.initial_displacement(),
        elastic.clone(),
    )
    .unwrap();
    let n = (total / tau).round() as usize;
    for _ in 0..n {
        let st = sim.step().unwrap();
        for i in 0..elastic.len() {
            let c = elem_chi[i / 4];
            elastic[i] = (tau * st.t_aux[i] + c * elastic[i]) / (tau + c);
        }
        ledger.push(&mesh, st.step, st.time, &st.u, &st.p, &elastic);
    }
    let max_term = ledger
        .rows
        .iter()
        .map(|r| r.stored.abs().max(r.dissipated.abs()).max(r.work.abs()))
        .fold(0.0, f64::max);
    let min_slack = ledger.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    (LedgerCheck { min_slack, max_term }, ledger)
}

fn energy() -> Outcome {
    let mut worst: f64 = f64::INFINITY;
    let mut parts = Vec::new();
    for name in ["example_a.json", "example_a_shear.json", "contact_chi0.json", "contact_chi22.5.json", "contact_chi45.json"] {
        let c = case(name);
        let (chk, _) = ledger_of(c.setup.clone(), c.tau, c.total);
        let rel = chk.min_slack / chk.max_term;
        worst = worst.min(rel);
        parts.push(format!("{}: {rel:.1e}", name.trim_end_matches(".json")));
    }
    // elastic conservation: a linear ramp, trapezoidal work
    let setup = bar(RheologyCoeffs::hooke(), Scheme::General, vec![(0.0, 0.0), (100.0, 1.0)]);
    let (_, ledger) = ledger_of(setup, 1.0, 100.0);
    let last = ledger.rows.last().unwrap();
    let work = ledger.work_trapezoid;
    let conservation = (last.stored - work).abs() / last.stored;
    Outcome {
        pass: worst >= -1e-10 && conservation < 1e-6,
        detail: format!(
            "min slack/max term {worst:.2e} (≥ −1e-10) [{}]; elastic |stored − work|/stored = {conservation:.1e}",
            parts.join(", ")
        ),
    }
}

fn contact() -> Outcome {
    let t0 = Instant::now();
    let mut lengths = Vec::new();
    let mut worst_qp: f64 = 0.0;
    let mut worst_nodal: f64 = 0.0;
    let mut worst_unsym: f64 = 0.0;
    let mut penetration = f64::NEG_INFINITY;
    let mut chi0_final = f64::NAN;
    let mut removal = Vec::new();
    let mut asym = 0.0;
    for chi in ["0", "22.5", "45"] {
        let c = case(&format!("contact_chi{chi}.json"));
        let mut sim = Simulation::new(c.setup.clone(), c.tau).unwrap();
        asym = sim.contact.as_ref().unwrap().asymmetry;
        let mesh = sim.mesh().clone();
        let lay = sim.mixed.layout.clone();
        let arc = mesh.group_arc_coordinates(lay.contact[0].group);
        let contact_group = mesh.group_id("contact").unwrap();
        let elem_chi = sim.kelvin_voigt_time(0).unwrap();
        let mut elastic = sim.initial_elastic_traction();
        let steps = run_time_loop(&mut sim, c.total).unwrap().steps;
        let mut peak: f64 = 0.0;
        let mut peak_force: f64 = 0.0;
        for st in &steps {
            for i in 0..elastic.len() {
                elastic[i] = (c.tau * st.t_aux[i] + elem_chi * elastic[i]) / (c.tau + elem_chi);
            }
            let cs = st.contact.as_ref().unwrap();
            worst_qp = worst_qp.max(cs.qp_kkt.relative());
            worst_unsym = worst_unsym.max(cs.qp_kkt_unsym.relative());
            worst_nodal = worst_nodal.max(cs.nodal_kkt.relative());
            for (i, d) in lay.contact.iter().enumerate() {
                penetration = penetration.max(cs.un[i] - d.gap);
                if cs.active[i] {
                    peak = peak.max(arc[d.node].unwrap());
                }
            }
            let f = group_resultant(&mesh, contact_group, &st.p);
            peak_force = peak_force.max(f[1].abs());
            if st.step == 101 {
                let fe = group_resultant(&mesh, contact_group, &elastic);
                removal.push((f[1], fe[1], peak_force));
            }
        }
        if chi == "0" {
            chi0_final = amax(&steps.last().unwrap().u);
        }
        lengths.push(peak);
    }
    // elastic unloading along the loading path: triangular load program
    let mut tri = case("contact_chi0.json");
    tri.setup.programs.insert("ramp".into(), LoadProgram::new(vec![(0.0, 0.0), (250.0, 1.0), (500.0, 0.0)]).unwrap());
    let steps = run(tri.setup.clone(), tri.tau, tri.total);
    let umax = steps.iter().map(|s| amax(&s.u)).fold(0.0, f64::max);
    let mut retrace: f64 = 0.0;
    for k in 1..100 {
        let (a, b) = (&steps[k - 1], &steps[199 - k]);
        let d = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        retrace = retrace.max(d / umax);
    }
    let tri_final = amax(&steps.last().unwrap().u) / umax;
    let secs = t0.elapsed().as_secs_f64();

    let ordered = lengths[2] <= lengths[1] && lengths[1] <= lengths[0];
    let drop_ok = removal.iter().all(|&(f, _, pk)| f.abs() <= 1e-8 * pk);
    let split_ok = removal[1..].iter().all(|&(f, fe, pk)| fe.abs() > 1e-3 * pk && ((f - fe) + fe).abs() <= 1e-8 * pk);
    let pass = worst_qp < 1e-8
        && worst_nodal < 1e-8
        && penetration <= 1e-10 * 0.75
        && chi0_final <= 1e-12
        && retrace < 1e-8
        && tri_final < 1e-8
        && ordered
        && drop_ok
        && split_ok
        && secs < 300.0;
    let removal_txt: Vec<String> =
        removal.iter().map(|(f, fe, pk)| format!("F {:.1e}, elastic {:.3e} of peak", f / pk, fe / pk)).collect();
    Outcome {
        pass,
        detail: format!(
            "KKT (symmetrized QP) {worst_qp:.1e}, nodal Signorini {worst_nodal:.1e}; max penetration {penetration:.1e}; χ=0 final |u| {chi0_final:.1e}, triangular-load retrace {retrace:.1e}; peak lengths {:.4} ≥ {:.4} ≥ {:.4}; after removal [{}]; {secs:.1} s. Design target missed (not part of the criterion): operator asymmetry {asym:.2e} > 1e-3, KKT against the unsymmetrized operator {worst_unsym:.1e}",
            lengths[0],
            lengths[1],
            lengths[2],
            removal_txt.join("; ")
        ),
    }
}

fn multi_domain() -> Outcome {
    // two conforming halves of the patch-test bar against the single bar
    let hooke = RheologyCoeffs::hooke();
    let single = bar(hooke, Scheme::General, vec![(0.0, 1.0), (1.0, 1.0)]);
    let split = |left: RheologyCoeffs, right: RheologyCoeffs, program: Vec<(f64, f64)>| {
        let mut mesh = bar_mesh(400.0, 0.0, 40, 0, "a_");
        mesh.merge(&bar_mesh(400.0, 400.0, 40, 1, "b_"));
        let tip = node_at(&mesh, L, 50.0);
        let mut bcs = BTreeMap::new();
        for g in ["a_top", "a_bottom", "b_top", "b_bottom"] {
            bcs.insert(g.to_string(), GroupBc::free());
        }
        bcs.insert("a_left".into(), GroupBc::fixed());
        bcs.insert("a_right".into(), GroupBc::Interface);
        bcs.insert("b_left".into(), GroupBc::Interface);
        bcs.insert(
            "b_right".into(),
            GroupBc::xy(DirBc::Neumann { value: P, program: Some("load".into()) }, DirBc::free()),
        );
        let mat = Material::new(E, 0.0).unwrap();
        Setup {
            mesh,
            materials: BTreeMap::from([(0, mat), (1, mat)]),
            rheology: BTreeMap::from([(0, left), (1, right)]),
            bcs,
            interfaces: vec![("a_right".into(), "b_left".into())],
            programs: BTreeMap::from([("load".to_string(), LoadProgram::new(program).unwrap())]),
            probes: vec![ProbeKind::Node(tip), ProbeKind::Interior(Point::new(600.0, 50.0))],
            ..Default::default()
        }
    };
    let a = run(single, 1.0, 1.0).pop().unwrap();
    let b = run(split(hooke, hooke, vec![(0.0, 1.0), (1.0, 1.0)]), 1.0, 1.0).pop().unwrap();
    let umax = P * L / E;
    let du = (a.probes[0].u[0] - b.probes[0].u[0]).abs().max((a.probes[0].u[1] - b.probes[0].u[1]).abs()) / umax;
    let ds = (a.probes[1].stress.unwrap()[0] - b.probes[1].stress.unwrap()[0]).abs() / P;
    let single_err = du.max(ds);

    let s = split(RheologyCoeffs::kelvin_voigt(CHI), hooke, creep_program());
    let mut sim = Simulation::new(s, 4.0).unwrap();
    let steps = run_time_loop(&mut sim, 800.0).unwrap().steps;
    let groups: Vec<usize> = ["a_right", "b_left"].iter().map(|g| sim.mesh().group_id(g).unwrap()).collect();
    let pairs = sim.mixed.layout.pairs.clone();
    let mut worst: f64 = 0.0;
    for st in &steps {
        let (du, dp) = interface_residuals(sim.mesh(), &groups, &pairs, &st.u, &st.p);
        let (us, ps) = (amax(&st.u), amax(&st.p));
        if us > 0.0 {
            worst = worst.max(du / us);
        }
        if ps > 0.0 {
            worst = worst.max(dp / ps);
        }
    }
    Outcome {
        pass: single_err < 1e-8 && worst < 1e-9,
        detail: format!(
            "elastic halves vs single bar {single_err:.1e} (tol 1e-8); Kelvin-Voigt/elastic interface continuity and opposition {worst:.1e} per step (tol 1e-9)"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let results = [
        (1, "elastostatic patch test", patch_test()),
        (2, "rigid-body identity", rigid_body()),
        (3, "Kelvin-Voigt creep", creep()),
        (4, "temporal convergence", temporal_order()),
        (5, "rheology catalogue", rheology_catalogue()),
        (6, "discrete energy inequality", energy()),
        (7, "contact benchmark", contact()),
        (8, "multi-domain", multi_domain()),
    ];
    for (id, title, o) in &results {
        report(*id, title, o);
    }
    println!(
        "criterion 9 [EXCLUDED] 3D ellipsoidal cavity: out of scope, this solver is two-dimensional (plane strain) only"
    );
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
