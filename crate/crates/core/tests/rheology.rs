use std::collections::BTreeMap;

use viscobem::model::{
    generate_mesh, rheology_preset, DirBc, GroupBc, LoadProgram, Material, MeshShape, Point, PresetParams,
    RectangleSpec, RheologyCoeffs,
};
use viscobem::timestepper::{run_time_loop, ProbeKind, Setup, Simulation};

const E: f64 = 100.0;
const P: f64 = 2.0;

fn bar(rh: RheologyCoeffs, program: Vec<(f64, f64)>) -> Setup {
    let mesh = generate_mesh(&MeshShape::Rectangle(RectangleSpec {
        origin: [0.0, 0.0],
        length: 4.0,
        height: 1.0,
        nx: 8,
        ny: 2,
        region: 0,
        prefix: String::new(),
    }))
    .unwrap();
    let tip = mesh.nodes.iter().position(|x| (x - Point::new(4.0, 0.5)).norm() < 1e-12).unwrap();
    Setup {
        mesh,
        materials: BTreeMap::from([(0, Material::new(E, 0.0).unwrap())]),
        rheology: BTreeMap::from([(0, rh)]),
        bcs: BTreeMap::from([
            ("left".into(), GroupBc::fixed()),
            ("top".into(), GroupBc::free()),
            ("bottom".into(), GroupBc::free()),
            ("right".into(), GroupBc::xy(DirBc::Neumann { value: P, program: Some("load".into()) }, DirBc::free())),
        ]),
        programs: BTreeMap::from([("load".into(), LoadProgram::new(program).unwrap())]),
        probes: vec![ProbeKind::Node(tip), ProbeKind::Interior(Point::new(2.0, 0.5))],
        ..Default::default()
    }
}

fn params() -> PresetParams {
    PresetParams { chi: Some(2.0), alpha: Some(0.5), mu2: Some(3.0) }
}

fn all_presets() -> Vec<RheologyCoeffs> {
    ["hooke", "newton", "maxwell", "kelvin_voigt", "boltzmann", "jeffreys", "burgers", "solid4"]
        .iter()
        .map(|n| rheology_preset(n, &params()).unwrap())
        .collect()
}

#[test]
fn zero_load_gives_zero_response() {
    for rh in all_presets() {
        let mut sim = Simulation::new(bar(rh, vec![(0.0, 0.0), (10.0, 0.0)]), 0.5).unwrap();
        for s in run_time_loop(&mut sim, 10.0).unwrap().steps {
            assert!(s.u.iter().chain(&s.p).all(|v| *v == 0.0), "{:?}", rh.preset);
        }
    }
}

#[test]
fn solids_creep_to_their_long_term_modulus() {
    let constant = vec![(0.0, 1.0), (1.0, 1.0)];
    for name in ["kelvin_voigt", "boltzmann", "solid4"] {
        let rh = rheology_preset(name, &params()).unwrap();
        let factor = rh.long_term_factor().unwrap();
        let mut sim = Simulation::new(bar(rh, constant.clone()), 0.5).unwrap();
        let ts = run_time_loop(&mut sim, 200.0).unwrap();
        let u = ts.steps.last().unwrap().probes[0].u[0];
        let expect = P * 4.0 / (E * factor);
        assert!((u - expect).abs() < 1e-6 * expect, "{name}: {u} vs {expect}");
    }
}

#[test]
fn fluids_keep_creeping_at_constant_stress() {
    let constant = vec![(0.0, 1.0), (1.0, 1.0)];
    for name in ["newton", "maxwell", "jeffreys", "burgers"] {
        let rh = rheology_preset(name, &params()).unwrap();
        let mut sim = Simulation::new(bar(rh, constant.clone()), 0.5).unwrap();
        let ts = run_time_loop(&mut sim, 100.0).unwrap();
        let u: Vec<f64> = ts.steps.iter().map(|s| s.probes[0].u[0]).collect();
        // eventually linear in time with slope P/(E χ1/ξ0)
        let slope = (u[199] - u[179]) / 10.0;
        let expect = P * 4.0 / (E * rh.chi[1] / rh.xi[0]);
        assert!((slope - expect).abs() < 1e-3 * expect, "{name}: {slope} vs {expect}");
        // the stress stays equal to the load
        let s = ts.steps[150].probes[1].stress.unwrap();
        assert!((s[0] - P).abs() < 1e-8 * P, "{name}: {s:?}");
    }
}
