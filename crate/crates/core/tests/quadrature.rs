use std::path::PathBuf;

use viscobem::assembly::{assemble_hg, IntegrationOptions};
use viscobem::case::load_config;

#[test]
fn doubling_gauss_points_leaves_shipped_meshes_unchanged() {
    for name in ["example_a.json", "contact_chi0.json"] {
        let c = load_config(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)).unwrap();
        let base = IntegrationOptions::default();
        let fine = IntegrationOptions { gauss_points: 2 * base.gauss_points, ..base };
        let a = assemble_hg(&c.setup.mesh, &c.setup.materials, &base).unwrap();
        let b = assemble_hg(&c.setup.mesh, &c.setup.materials, &fine).unwrap();
        let dh = (&a.h - &b.h).amax() / a.h.amax();
        let dg = (&a.g - &b.g).amax() / a.g.amax();
        assert!(dh < 1e-9 && dg < 1e-9, "{name}: H {dh:e}, G {dg:e}");
    }
}
