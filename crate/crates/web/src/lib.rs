//! Browser demo: Kelvin-Voigt and other creep curves of the Example A bar,
//! the contact pressure profile of the quarter disk, and configuration
//! validation. Every entry point returns a JSON string.

use serde_json::json;
use wasm_bindgen::prelude::*;

use viscobem::case::{group_resultant, parse_config};
use viscobem::error::Result;
use viscobem::model::{
    generate_mesh, rheology_preset, ContactBc, ContactDirection, DirBc, GroupBc, LoadProgram, Material, MeshShape,
    Point, PresetParams, QuarterDiskSpec, RectangleSpec,
};
use viscobem::timestepper::{ProbeKind, Setup, Simulation};

fn error_json(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

/// Tip displacement of the 800 × 100 bar under the creep program (load held
/// until `total/2`, then removed), for any catalogued rheology.
pub fn creep_curve_json(preset: &str, chi: f64, alpha: f64, mu2: f64, tau: f64, total: f64) -> Result<String> {
    let params = PresetParams { chi: Some(chi), alpha: Some(alpha), mu2: Some(mu2) };
    let rh = rheology_preset(preset, &params)?;
    let mesh = generate_mesh(&MeshShape::Rectangle(RectangleSpec {
        origin: [0.0, 0.0],
        length: 800.0,
        height: 100.0,
        nx: 40,
        ny: 4,
        region: 0,
        prefix: String::new(),
    }))?;
    let tip = mesh.nodes.iter().position(|x| (x - Point::new(800.0, 50.0)).norm() < 1e-9).expect("tip node");
    let half = total / 2.0;
    let setup = Setup {
        mesh,
        materials: [(0, Material::new(11000.0, 0.0)?)].into(),
        rheology: [(0, rh)].into(),
        bcs: [
            ("left".to_string(), GroupBc::fixed()),
            ("top".to_string(), GroupBc::free()),
            ("bottom".to_string(), GroupBc::free()),
            (
                "right".to_string(),
                GroupBc::xy(DirBc::Neumann { value: 5.0, program: Some("load".into()) }, DirBc::free()),
            ),
        ]
        .into(),
        programs: [(
            "load".to_string(),
            LoadProgram::new(vec![(0.0, 1.0), (half, 1.0), (half, 0.0), (total, 0.0)])?,
        )]
        .into(),
        probes: vec![ProbeKind::Node(tip)],
        ..Default::default()
    };
    let mut sim = Simulation::new(setup, tau)?;
    let n = viscobem::timestepper::step_count(total, tau)?;
    let mut t = vec![0.0];
    let mut u = vec![0.0];
    for _ in 0..n {
        let s = sim.step()?;
        t.push(s.time);
        u.push(s.probes[0].u[0]);
    }
    Ok(json!({ "time": t, "tip": u }).to_string())
}

/// Contact pressure along the contact arc of the quarter disk at the load peak.
pub fn contact_profile_json(chi: f64, n_contact: usize) -> Result<String> {
    let mesh = generate_mesh(&MeshShape::QuarterDisk(QuarterDiskSpec {
        radius: 0.75,
        contact_angle_deg: 13.5,
        n_contact,
        n_arc: 3 * n_contact,
        n_straight: n_contact / 3 + 1,
    }))?;
    let setup = Setup {
        mesh,
        materials: [(0, Material::new(70000.0, 0.35)?)].into(),
        rheology: [(0, rheology_preset("kelvin_voigt", &PresetParams { chi: Some(chi), ..Default::default() })?)]
            .into(),
        bcs: [
            (
                "contact".to_string(),
                GroupBc::Contact(ContactBc {
                    direction: ContactDirection::Fixed(Point::new(0.0, -1.0)),
                    gap_constant: 0.0,
                    gap_gradient: Point::new(0.0, 1.0),
                }),
            ),
            ("free_arc".to_string(), GroupBc::free()),
            (
                "loaded".to_string(),
                GroupBc::xy(DirBc::free(), DirBc::Neumann { value: -250.0, program: Some("ramp".into()) }),
            ),
            ("symmetry".to_string(), GroupBc::xy(DirBc::fixed(), DirBc::free())),
        ]
        .into(),
        programs: [("ramp".to_string(), LoadProgram::new(vec![(0.0, 0.0), (250.0, 1.0)])?)].into(),
        ..Default::default()
    };
    let mut sim = Simulation::new(setup, 2.5)?;
    let mut last = None;
    for _ in 0..100 {
        last = Some(sim.step()?);
    }
    let st = last.expect("steps ran");
    let mesh = sim.mesh();
    let lay = &sim.mixed.layout;
    let arc = mesh.group_arc_coordinates(lay.contact[0].group);
    let c = st.contact.as_ref().expect("contact step");
    let s: Vec<f64> = lay.contact.iter().map(|d| arc[d.node].unwrap_or(0.0)).collect();
    let pressure: Vec<f64> = c.tn.iter().map(|t| -t).collect();
    let force = group_resultant(mesh, mesh.group_id("contact").expect("contact group"), &st.p);
    Ok(json!({ "arc": s, "pressure": pressure, "active": c.active, "force": force[1] }).to_string())
}

/// Parses a case configuration and reports its size or the first error.
pub fn validate_config_json(text: &str) -> String {
    match parse_config(text, None) {
        Ok(c) => json!({
            "ok": true,
            "nodes": c.setup.mesh.node_count(),
            "elements": c.setup.mesh.elements.len(),
            "steps": (c.total / c.tau).round(),
        })
        .to_string(),
        Err(e) => json!({ "ok": false, "error": e.to_string() }).to_string(),
    }
}

#[wasm_bindgen]
pub fn creep_curve(preset: &str, chi: f64, alpha: f64, mu2: f64, tau: f64, total: f64) -> String {
    creep_curve_json(preset, chi, alpha, mu2, tau, total).unwrap_or_else(error_json)
}

#[wasm_bindgen]
pub fn contact_profile(chi: f64, n_contact: usize) -> String {
    contact_profile_json(chi, n_contact).unwrap_or_else(error_json)
}

#[wasm_bindgen]
pub fn validate_config(text: &str) -> String {
    validate_config_json(text)
}
