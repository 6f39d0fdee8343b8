//! Case configuration (strict JSON), orchestration of a run and the CSV
//! outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::assembly::{boundary_work, IntegrationOptions};
use crate::error::{Error, Result};
use crate::model::{
    generate_mesh, rheology_preset, validate_model, ContactBc, ContactDirection, DirBc, Frame, GroupBc,
    LoadProgram, Material, Mesh, Point, Preset, PresetParams, QuarterDiskSpec, RectangleSpec, RheologyCoeffs,
};
use crate::postprocess::{locate_point, DissipationField, EnergyLedger, InteriorSample};
use crate::timestepper::{step_count, InitialField, ProbeKind, Scheme, Setup, Simulation, StepState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    Rectangle(RectangleSpec),
    QuarterDisk(QuarterDiskSpec),
    /// Path to a mesh text file, relative to the configuration file.
    File(String),
    /// Several meshes merged into one (one region each, typically).
    Union(Vec<MeshConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RheologyConfig {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
    /// `[χ0, χ1, χ2]` for the custom preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strain_coeffs: Option<[f64; 3]>,
    /// `[ξ0, ξ1, ξ2]` for the custom preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stress_coeffs: Option<[f64; 3]>,
}

impl RheologyConfig {
    pub fn coeffs(&self) -> Result<RheologyCoeffs> {
        if self.preset == Preset::Custom {
            match (self.strain_coeffs, self.stress_coeffs) {
                (Some(c), Some(x)) => RheologyCoeffs::custom(c, x),
                _ => Err(Error::Config("custom rheology needs strain_coeffs and stress_coeffs".into())),
            }
        } else {
            if self.strain_coeffs.is_some() || self.stress_coeffs.is_some() {
                return Err(Error::Config("strain_coeffs/stress_coeffs are only valid for the custom preset".into()));
            }
            let name = serde_json::to_value(self.preset).expect("preset serializes");
            let params = PresetParams { chi: self.chi, alpha: self.alpha, mu2: self.mu2 };
            rheology_preset(name.as_str().expect("preset is a string"), &params)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub gradient: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub young: f64,
    pub poisson: f64,
    pub rheology: RheologyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_displacement: Option<InitialConfig>,
}

/// One direction of a bc-group: exactly one of `displacement` and `traction`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    /// Fixed unit direction towards the obstacle; omitted means the averaged
    /// outward normal at each node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 2]>,
    #[serde(default)]
    pub gap: f64,
    #[serde(default)]
    pub gap_gradient: [f64; 2],
}

/// Boundary condition of one bc-group. Global components `x`/`y` or local
/// `normal`/`tangential` tractions; missing directions are traction-free.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<DirConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<DirConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<DirConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangential: Option<DirConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<ContactConfig>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub interface: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    #[default]
    General,
    KelvinVoigt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub total: f64,
    pub step: f64,
    #[serde(default)]
    pub scheme: SchemeConfig,
}

/// A probe: a boundary `node`, the boundary node `near` a point, or an
/// interior `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 2]>,
}

/// Structured grid of `n[0] × n[1]` cell centres over `origin + [0, size]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    pub n: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Output times; each must be a positive multiple of the time step.
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<[f64; 2]>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub timeseries: bool,
    #[serde(default = "yes")]
    pub ledger: bool,
    #[serde(default = "yes")]
    pub contact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<SnapshotConfig>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { timeseries: true, ledger: true, contact: true, snapshots: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub mesh: MeshConfig,
    pub regions: BTreeMap<String, RegionConfig>,
    pub boundary: BTreeMap<String, BoundaryConfig>,
    #[serde(default)]
    pub programs: BTreeMap<String, Vec<[f64; 2]>>,
    #[serde(default)]
    pub interfaces: Vec<[String; 2]>,
    pub time: TimeConfig,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

/// A validated case ready to run.
#[derive(Debug, Clone)]
pub struct Case {
    pub config: CaseConfig,
    pub setup: Setup,
    pub total: f64,
    pub tau: f64,
    pub probe_names: Vec<String>,
    pub snapshot_steps: Vec<usize>,
    pub snapshot_points: Vec<Point>,
}

const REQUIRED: [&str; 4] = ["mesh", "regions", "boundary", "time"];

/// Parses and validates a configuration. `base` resolves relative mesh file
/// paths.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<Case> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    if let Some(obj) = value.as_object() {
        let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !obj.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required fields: {}", missing.join(", "))));
        }
    } else {
        return Err(Error::Config("configuration must be a JSON object".into()));
    }
    let config: CaseConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    build_case(config, base)
}

pub fn load_config(path: &Path) -> Result<Case> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent())
}

fn load_mesh(m: &MeshConfig, base: Option<&Path>) -> Result<Mesh> {
    match m {
        MeshConfig::Rectangle(s) => generate_mesh(&crate::model::MeshShape::Rectangle(s.clone())),
        MeshConfig::QuarterDisk(s) => generate_mesh(&crate::model::MeshShape::QuarterDisk(s.clone())),
        MeshConfig::File(p) => {
            let path = base.map_or_else(|| PathBuf::from(p), |b| b.join(p));
            let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Mesh::from_text(&text)
        }
        MeshConfig::Union(parts) => {
            let mut it = parts.iter();
            let first = it.next().ok_or_else(|| Error::Config("empty mesh union".into()))?;
            let mut mesh = load_mesh(first, base)?;
            for p in it {
                mesh.merge(&load_mesh(p, base)?);
            }
            Ok(mesh)
        }
    }
}

fn dir_bc(d: &Option<DirConfig>, what: &str, programs: &BTreeMap<String, Vec<[f64; 2]>>) -> Result<DirBc> {
    let Some(d) = d else { return Ok(DirBc::free()) };
    if let Some(p) = &d.program {
        if !programs.contains_key(p) {
            return Err(Error::Config(format!("{what}: unknown load program `{p}`")));
        }
    }
    match (d.displacement, d.traction) {
        (Some(v), None) => Ok(DirBc::Dirichlet { value: v, program: d.program.clone() }),
        (None, Some(v)) => Ok(DirBc::Neumann { value: v, program: d.program.clone() }),
        _ => Err(Error::Config(format!("{what}: give exactly one of `displacement` and `traction`"))),
    }
}

fn group_bc(name: &str, b: &BoundaryConfig, programs: &BTreeMap<String, Vec<[f64; 2]>>) -> Result<GroupBc> {
    let global = b.x.is_some() || b.y.is_some();
    let local = b.normal.is_some() || b.tangential.is_some();
    let kinds = [global || (!local && b.contact.is_none() && !b.interface), local, b.contact.is_some(), b.interface];
    if kinds.iter().filter(|&&k| k).count() != 1 {
        return Err(Error::Config(format!(
            "boundary `{name}`: combine x/y, normal/tangential, contact and interface exclusively"
        )));
    }
    if let Some(c) = &b.contact {
        let direction = match c.direction {
            None => ContactDirection::NodeNormal,
            Some(d) => ContactDirection::Fixed(Vector2::new(d[0], d[1])),
        };
        return Ok(GroupBc::Contact(ContactBc {
            direction,
            gap_constant: c.gap,
            gap_gradient: Vector2::new(c.gap_gradient[0], c.gap_gradient[1]),
        }));
    }
    if b.interface {
        return Ok(GroupBc::Interface);
    }
    if local {
        return Ok(GroupBc::Directional {
            frame: Frame::Local,
            first: dir_bc(&b.normal, &format!("boundary `{name}`.normal"), programs)?,
            second: dir_bc(&b.tangential, &format!("boundary `{name}`.tangential"), programs)?,
        });
    }
    Ok(GroupBc::xy(
        dir_bc(&b.x, &format!("boundary `{name}`.x"), programs)?,
        dir_bc(&b.y, &format!("boundary `{name}`.y"), programs)?,
    ))
}

fn build_case(config: CaseConfig, base: Option<&Path>) -> Result<Case> {
    let mesh = load_mesh(&config.mesh, base)?;
    let mut materials = BTreeMap::new();
    let mut rheology = BTreeMap::new();
    let mut initial = BTreeMap::new();
    for (key, r) in &config.regions {
        let id: usize = key
            .parse()
            .map_err(|_| Error::Config(format!("regions: key `{key}` is not a region number")))?;
        materials.insert(id, Material { young: r.young, poisson: r.poisson });
        rheology.insert(id, r.rheology.coeffs().map_err(|e| Error::Config(format!("regions.{key}: {e}")))?);
        if let Some(i) = r.initial_displacement {
            initial.insert(id, InitialField { offset: i.offset, gradient: i.gradient });
        }
    }
    let mut programs = BTreeMap::new();
    for (name, pts) in &config.programs {
        let p = LoadProgram::new(pts.iter().map(|p| (p[0], p[1])).collect())
            .map_err(|e| Error::Config(format!("programs.{name}: {e}")))?;
        programs.insert(name.clone(), p);
    }
    let mut bcs = BTreeMap::new();
    for (name, b) in &config.boundary {
        bcs.insert(name.clone(), group_bc(name, b, &config.programs)?);
    }
    let diags = validate_model(&mesh, &materials, &bcs);
    if !diags.is_empty() {
        return Err(Error::Config(diags.join("; ")));
    }
    let tau = config.time.step;
    step_count(config.time.total, tau)?;

    let mut probes = Vec::new();
    let mut probe_names = Vec::new();
    for p in &config.probes {
        let kind = match (p.node, p.near, p.point) {
            (Some(n), None, None) => {
                if n >= mesh.node_count() {
                    return Err(Error::Config(format!("probe `{}`: node {n} does not exist", p.name)));
                }
                ProbeKind::Node(n)
            }
            (None, Some(x), None) => {
                let x = Point::new(x[0], x[1]);
                let n = (0..mesh.node_count())
                    .min_by(|&a, &b| (mesh.nodes[a] - x).norm().total_cmp(&(mesh.nodes[b] - x).norm()))
                    .ok_or_else(|| Error::Config("empty mesh".into()))?;
                ProbeKind::Node(n)
            }
            (None, None, Some(x)) => {
                let x = Point::new(x[0], x[1]);
                locate_point(&mesh, &x).map_err(|e| Error::Config(format!("probe `{}`: {e}", p.name)))?;
                ProbeKind::Interior(x)
            }
            _ => {
                return Err(Error::Config(format!(
                    "probe `{}`: give exactly one of `node`, `near` and `point`",
                    p.name
                )))
            }
        };
        probes.push(kind);
        probe_names.push(p.name.clone());
    }

    let mut snapshot_steps = Vec::new();
    let mut snapshot_points = Vec::new();
    if let Some(s) = &config.outputs.snapshots {
        snapshot_steps = snapshot_steps_for(&s.times, config.time.total, tau)?;
        if let Some(g) = &s.grid {
            for j in 0..g.n[1] {
                for i in 0..g.n[0] {
                    let x = Point::new(
                        g.origin[0] + g.size[0] * (i as f64 + 0.5) / g.n[0] as f64,
                        g.origin[1] + g.size[1] * (j as f64 + 0.5) / g.n[1] as f64,
                    );
                    // grid points outside the domain are skipped
                    if locate_point(&mesh, &x).is_ok() {
                        snapshot_points.push(x);
                    }
                }
            }
        }
        for p in &s.points {
            let x = Point::new(p[0], p[1]);
            locate_point(&mesh, &x).map_err(|e| Error::Config(format!("snapshot point: {e}")))?;
            snapshot_points.push(x);
        }
    }

    let interfaces = config.interfaces.iter().map(|[a, b]| (a.clone(), b.clone())).collect();
    let scheme = match config.time.scheme {
        SchemeConfig::General => Scheme::General,
        SchemeConfig::KelvinVoigt => Scheme::KelvinVoigt,
    };
    let setup = Setup {
        mesh,
        materials,
        rheology,
        bcs,
        interfaces,
        programs,
        initial,
        probes,
        integration: IntegrationOptions::default(),
        scheme,
    };
    Ok(Case { total: config.time.total, tau, config, setup, probe_names, snapshot_steps, snapshot_points })
}

fn snapshot_steps_for(times: &[f64], total: f64, tau: f64) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 0.0 && t <= total) {
            return Err(Error::Config(format!("snapshot time {t} is outside (0, {total}]")));
        }
        let k = step_count(t, tau).map_err(|_| Error::Config(format!("snapshot time {t} is not a multiple of τ = {tau}")))?;
        steps.push(k);
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

impl Case {
    /// Replaces the time step; `T/τ` must stay an integer.
    pub fn with_step(mut self, tau: f64) -> Result<Case> {
        step_count(self.total, tau)?;
        if let Some(s) = &self.config.outputs.snapshots {
            self.snapshot_steps = snapshot_steps_for(&s.times, self.total, tau)?;
        }
        self.tau = tau;
        self.config.time.step = tau;
        Ok(self)
    }
}

/// Full-precision, locale-free number formatting.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (1e-5..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Summary of a run, also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub tau: f64,
    pub max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact: Option<ContactSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySummary>,
    pub near_boundary_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSummary {
    pub nodes: usize,
    pub asymmetry: f64,
    pub max_qp_kkt: f64,
    pub max_qp_kkt_unsymmetric: f64,
    pub max_nodal_kkt: f64,
    /// Largest `u·d − g0` over nodes and steps.
    pub max_penetration: f64,
    /// Largest tensile normal traction over nodes and steps.
    pub max_tensile_traction: f64,
    pub max_compressive_traction: f64,
    /// Largest contact-zone length (arc length of the active nodes).
    pub peak_contact_length: f64,
    pub peak_contact_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub min_relative_slack: f64,
    pub inequality_holds: bool,
    pub final_stored: f64,
    pub final_dissipated: f64,
    pub final_work: f64,
}

struct Outputs {
    timeseries: Option<String>,
    contact: Option<String>,
    ledger: Option<String>,
    resultants: Option<String>,
}

/// Runs a case and writes its outputs into `out`.
pub fn run_case(case: &Case, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let mut setup = case.setup.clone();
    let n_named = setup.probes.len();
    setup.probes.extend(case.snapshot_points.iter().map(|&x| ProbeKind::Interior(x)));
    let mut sim = Simulation::new(setup, case.tau)?;
    let mesh = sim.mesh().clone();
    let n = step_count(case.total, case.tau)?;
    let regions = mesh.region_ids();
    let all_kv = regions.iter().all(|&r| sim.kelvin_voigt_time(r).is_some());
    let elem_chi: Vec<f64> = mesh
        .elements
        .iter()
        .map(|el| sim.kelvin_voigt_time(el.region).unwrap_or(0.0))
        .collect();
    let interface_group: Vec<bool> =
        mesh.groups.iter().map(|g| matches!(case.setup.bcs.get(g), Some(GroupBc::Interface))).collect();

    let mut outs = Outputs {
        timeseries: case.config.outputs.timeseries.then(|| "step,time,probe,ux,uy,vx,vy,px,py\n".to_string()),
        contact: (case.config.outputs.contact && sim.contact.is_some())
            .then(|| "step,time,node,arc_coord,vn,un,tn,active\n".to_string()),
        ledger: (case.config.outputs.ledger && all_kv).then(|| "step,time,stored,dissipated,work,slack\n".to_string()),
        resultants: all_kv.then(|| "step,time,group,fx,fy,fx_elastic,fy_elastic\n".to_string()),
    };

    let mut elastic = sim.initial_elastic_traction();
    let mut ledger = if all_kv {
        let chi = |r: usize| sim.kelvin_voigt_time(r);
        let external = mesh.elements.iter().map(|el| !interface_group[el.group]).collect();
        Some(EnergyLedger::new(&mesh, &chi, external, case.tau, sim.initial_displacement(), elastic.clone())?)
    } else {
        None
    };

    // snapshot points: elastic stress recursion and dissipation (Kelvin-Voigt only)
    let snap0: Vec<InteriorSample> = case
        .snapshot_points
        .iter()
        .map(|x| {
            let (region, near) = locate_point(&mesh, x)?;
            let f = case.setup.initial.get(&region).copied().unwrap_or_default();
            Ok(InteriorSample {
                point: *x,
                region,
                u: f.at(x),
                stress: f.stress(&case.setup.materials[&region]),
                near_boundary: near,
            })
        })
        .collect::<Result<_>>()?;
    let near_count = snap0.iter().filter(|s| s.near_boundary).count();
    let snap_kv: Vec<Option<f64>> = snap0.iter().map(|s| sim.kelvin_voigt_time(s.region)).collect();
    let mut snap_elastic: Vec<[f64; 3]> = snap0.iter().map(|s| s.stress).collect();
    let mut diss = if !snap0.is_empty() && snap_kv.iter().all(Option::is_some) {
        let chi = |r: usize| sim.kelvin_voigt_time(r);
        Some(DissipationField::new(&snap0, &case.setup.materials, &chi, case.tau)?)
    } else {
        None
    };

    let contact_group = sim.mixed.layout.contact.first().map(|c| c.group);
    let arc = contact_group.map(|g| mesh.group_arc_coordinates(g)).unwrap_or_default();
    let mut csum = sim.contact.as_ref().map(|op| ContactSummary {
        nodes: sim.mixed.layout.contact.len(),
        asymmetry: op.asymmetry,
        max_qp_kkt: 0.0,
        max_qp_kkt_unsymmetric: 0.0,
        max_nodal_kkt: 0.0,
        max_penetration: f64::NEG_INFINITY,
        max_tensile_traction: 0.0,
        max_compressive_traction: 0.0,
        peak_contact_length: 0.0,
        peak_contact_step: 0,
    });
    let mut max_residual: f64 = 0.0;

    for _ in 0..n {
        let st = sim.step()?;
        max_residual = max_residual.max(st.residual);
        if all_kv {
            for i in 0..elastic.len() {
                let chi = elem_chi[i / 4];
                elastic[i] = (case.tau * st.t_aux[i] + chi * elastic[i]) / (case.tau + chi);
            }
        }
        if let Some(ts) = &mut outs.timeseries {
            for (i, name) in case.probe_names.iter().enumerate() {
                let r = &st.probes[i];
                let _ = writeln!(
                    ts,
                    "{},{},{},{},{},{},{},{},{}",
                    st.step,
                    fmt_num(st.time),
                    name,
                    fmt_num(r.u[0]),
                    fmt_num(r.u[1]),
                    fmt_num(r.v[0]),
                    fmt_num(r.v[1]),
                    fmt_num(r.p[0]),
                    fmt_num(r.p[1])
                );
            }
        }
        if let (Some(c), Some(sum)) = (&st.contact, &mut csum) {
            record_contact(&sim, &st, c, &arc, sum, outs.contact.as_mut());
        }
        if let Some(l) = &mut ledger {
            let row = l.push(&mesh, st.step, st.time, &st.u, &st.p, &elastic);
            if let Some(out) = &mut outs.ledger {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.step,
                    fmt_num(row.time),
                    fmt_num(row.stored),
                    fmt_num(row.dissipated),
                    fmt_num(row.work),
                    fmt_num(row.slack)
                );
            }
        }
        if let Some(out) = &mut outs.resultants {
            for (g, name) in mesh.groups.iter().enumerate() {
                let f = group_resultant(&mesh, g, &st.p);
                let fe = group_resultant(&mesh, g, &elastic);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    st.step,
                    fmt_num(st.time),
                    name,
                    fmt_num(f[0]),
                    fmt_num(f[1]),
                    fmt_num(fe[0]),
                    fmt_num(fe[1])
                );
            }
        }
        let snap = &st.probes[n_named..];
        if let Some(d) = &mut diss {
            for (i, rec) in snap.iter().enumerate() {
                let chi = snap_kv[i].unwrap_or(0.0);
                let aux = rec.aux_stress.expect("interior probe");
                for q in 0..3 {
                    snap_elastic[i][q] = (case.tau * aux[q] + chi * snap_elastic[i][q]) / (case.tau + chi);
                }
            }
            d.push(&snap_elastic);
        }
        if case.snapshot_steps.binary_search(&st.step).is_ok() {
            write_snapshot(out, &st, snap, diss.as_ref())?;
        }
    }

    if let Some(s) = &outs.timeseries {
        fs::write(out.join("timeseries.csv"), s)?;
    }
    if let Some(s) = &outs.contact {
        fs::write(out.join("contact.csv"), s)?;
    }
    if let Some(s) = &outs.ledger {
        fs::write(out.join("ledger.csv"), s)?;
    }
    if let Some(s) = &outs.resultants {
        fs::write(out.join("resultants.csv"), s)?;
    }
    let energy = ledger.as_ref().map(|l| {
        let last = l.rows.last().copied();
        EnergySummary {
            min_relative_slack: l.min_relative_slack(),
            inequality_holds: l.inequality_holds(),
            final_stored: last.map_or(0.0, |r| r.stored),
            final_dissipated: last.map_or(0.0, |r| r.dissipated),
            final_work: last.map_or(0.0, |r| r.work),
        }
    });
    let summary = RunSummary {
        steps: n,
        tau: case.tau,
        max_residual,
        contact: csum,
        energy,
        near_boundary_points: near_count,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out.join("summary.json"), json + "\n")?;
    Ok(summary)
}

fn record_contact(
    sim: &Simulation,
    st: &StepState,
    c: &crate::timestepper::ContactStep,
    arc: &[Option<f64>],
    sum: &mut ContactSummary,
    out: Option<&mut String>,
) {
    let lay = &sim.mixed.layout;
    sum.max_qp_kkt = sum.max_qp_kkt.max(c.qp_kkt.relative());
    sum.max_qp_kkt_unsymmetric = sum.max_qp_kkt_unsymmetric.max(c.qp_kkt_unsym.relative());
    sum.max_nodal_kkt = sum.max_nodal_kkt.max(c.nodal_kkt.relative());
    let mut length: f64 = 0.0;
    for (i, dof) in lay.contact.iter().enumerate() {
        sum.max_penetration = sum.max_penetration.max(c.un[i] - dof.gap);
        sum.max_tensile_traction = sum.max_tensile_traction.max(c.tn[i]);
        sum.max_compressive_traction = sum.max_compressive_traction.max(-c.tn[i]);
        if c.active[i] {
            length = length.max(arc[dof.node].unwrap_or(0.0));
        }
    }
    if length > sum.peak_contact_length {
        sum.peak_contact_length = length;
        sum.peak_contact_step = st.step;
    }
    if let Some(out) = out {
        for (i, dof) in lay.contact.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                st.step,
                fmt_num(st.time),
                dof.node,
                fmt_num(arc[dof.node].unwrap_or(0.0)),
                fmt_num(c.vn[i]),
                fmt_num(c.un[i]),
                fmt_num(c.tn[i]),
                u8::from(c.active[i])
            );
        }
    }
}

/// Force resultant `∫ t dS` of a bc-group from element-end tractions.
pub fn group_resultant(mesh: &Mesh, group: usize, t: &[f64]) -> [f64; 2] {
    let mut f = [0.0; 2];
    for (e, el) in mesh.elements.iter().enumerate() {
        if el.group == group {
            let half = 0.5 * mesh.element_length(e);
            for d in 0..2 {
                f[d] += half * (t[4 * e + d] + t[4 * e + 2 + d]);
            }
        }
    }
    f
}

fn write_snapshot(
    out: &Path,
    st: &StepState,
    snap: &[crate::timestepper::ProbeRecord],
    diss: Option<&DissipationField>,
) -> Result<()> {
    let mut s = String::from("x,y,ux,uy,sxx,syy,sxy,diss\n");
    let points = diss.map(|d| d.points.clone());
    for (i, rec) in snap.iter().enumerate() {
        let x = points.as_ref().map(|p| p[i]);
        let stress = rec.stress.expect("interior probe");
        let d = diss.map_or("nan".to_string(), |d| fmt_num(d.density[i]));
        let (px, py) = match x {
            Some(p) => (p.x, p.y),
            None => (f64::NAN, f64::NAN),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt_num(px),
            fmt_num(py),
            fmt_num(rec.u[0]),
            fmt_num(rec.u[1]),
            fmt_num(stress[0]),
            fmt_num(stress[1]),
            fmt_num(stress[2]),
            d
        );
    }
    fs::write(out.join(format!("snapshot_{:05}.csv", st.step)), s)?;
    Ok(())
}

/// Writes `error.txt` into `out` (best effort).
pub fn write_error(out: &Path, err: &Error) {
    let _ = fs::create_dir_all(out);
    if let Ok(mut f) = fs::File::create(out.join("error.txt")) {
        let _ = writeln!(f, "{err}");
    }
}

/// Boundary work `∫ t·u dS` over all elements (used by the summary checks).
pub fn total_boundary_work(mesh: &Mesh, t: &[f64], u: &[f64]) -> f64 {
    boundary_work(mesh, t, u, &|_| true)
}
