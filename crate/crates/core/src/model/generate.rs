use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mesh::{Element, Mesh, Point};
use crate::error::{Error, Result};

/// Axis-aligned rectangle meshed counter-clockwise from its lower-left corner.
/// Groups are `bottom`, `right`, `top`, `left`, each prefixed by `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectangleSpec {
    #[serde(default)]
    pub origin: [f64; 2],
    pub length: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub region: usize,
    #[serde(default)]
    pub prefix: String,
}

impl RectangleSpec {
    /// Uniform element size with `total` elements split between the sides in
    /// proportion to their lengths.
    pub fn with_total_elements(length: f64, height: f64, total: usize) -> Self {
        let nx = ((total as f64) * length / (2.0 * (length + height))).round().max(1.0) as usize;
        let ny = (total / 2).saturating_sub(nx).max(1);
        RectangleSpec { origin: [0.0, 0.0], length, height, nx, ny, region: 0, prefix: String::new() }
    }
}

/// Quarter of a disk of radius `radius` centred at `(0, radius)`, resting on
/// the line `y = 0`. Boundary, counter-clockwise from the bottom point:
/// `contact` arc of `contact_angle_deg`, `free_arc` up to `(r, r)`, `loaded`
/// top edge, and `symmetry` line `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarterDiskSpec {
    pub radius: f64,
    pub contact_angle_deg: f64,
    pub n_contact: usize,
    pub n_arc: usize,
    pub n_straight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshShape {
    Rectangle(RectangleSpec),
    QuarterDisk(QuarterDiskSpec),
}

pub fn generate_mesh(shape: &MeshShape) -> Result<Mesh> {
    match shape {
        MeshShape::Rectangle(s) => rectangle(s),
        MeshShape::QuarterDisk(s) => quarter_disk(s),
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{what} must be positive (got {v})")))
    }
}

fn at_least_one(n: usize, what: &str) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{what} needs at least one element")))
    }
}

/// Chains `pts` (closed polygon) into elements, `groups[i]` for the i-th edge.
fn closed_loop(pts: Vec<Point>, groups: Vec<usize>, region: usize, names: Vec<String>) -> Mesh {
    let n = pts.len();
    let elements = (0..n)
        .map(|i| Element { nodes: [i, (i + 1) % n], region, group: groups[i] })
        .collect();
    Mesh { nodes: pts, elements, groups: names }
}

fn rectangle(s: &RectangleSpec) -> Result<Mesh> {
    positive(s.length, "rectangle length")?;
    positive(s.height, "rectangle height")?;
    at_least_one(s.nx, "rectangle nx")?;
    at_least_one(s.ny, "rectangle ny")?;
    let o = Point::new(s.origin[0], s.origin[1]);
    let (l, h) = (s.length, s.height);
    let mut pts = Vec::new();
    let mut groups = Vec::new();
    let sides: [(Point, Point, usize); 4] = [
        (Point::new(0.0, 0.0), Point::new(l, 0.0), s.nx),
        (Point::new(l, 0.0), Point::new(l, h), s.ny),
        (Point::new(l, h), Point::new(0.0, h), s.nx),
        (Point::new(0.0, h), Point::new(0.0, 0.0), s.ny),
    ];
    for (g, (a, b, n)) in sides.into_iter().enumerate() {
        for i in 0..n {
            let t = i as f64 / n as f64;
            pts.push(o + a + (b - a) * t);
            groups.push(g);
        }
    }
    let names = ["bottom", "right", "top", "left"]
        .iter()
        .map(|n| format!("{}{n}", s.prefix))
        .collect();
    Ok(closed_loop(pts, groups, s.region, names))
}

fn quarter_disk(s: &QuarterDiskSpec) -> Result<Mesh> {
    positive(s.radius, "disk radius")?;
    positive(s.contact_angle_deg, "contact angle")?;
    if s.contact_angle_deg >= 90.0 {
        return Err(Error::InvalidGeometry("contact angle must be below 90 degrees".into()));
    }
    at_least_one(s.n_contact, "contact arc")?;
    at_least_one(s.n_arc, "free arc")?;
    at_least_one(s.n_straight, "straight sides")?;
    let r = s.radius;
    let c = Point::new(0.0, r);
    let on_arc = |theta: f64| c + Point::new(theta.cos(), theta.sin()) * r;
    let phi = s.contact_angle_deg.to_radians();
    let mut pts = Vec::new();
    let mut groups = Vec::new();
    for i in 0..s.n_contact {
        pts.push(on_arc(-PI / 2.0 + phi * i as f64 / s.n_contact as f64));
        groups.push(0);
    }
    let rest = PI / 2.0 - phi;
    for i in 0..s.n_arc {
        pts.push(on_arc(-PI / 2.0 + phi + rest * i as f64 / s.n_arc as f64));
        groups.push(1);
    }
    // exact corner coordinates avoid cos/sin round-off at the arc ends
    if let Some(p) = pts.first_mut() {
        *p = Point::new(0.0, 0.0);
    }
    for i in 0..s.n_straight {
        let t = i as f64 / s.n_straight as f64;
        pts.push(Point::new(r * (1.0 - t), r));
        groups.push(2);
    }
    for i in 0..s.n_straight {
        let t = i as f64 / s.n_straight as f64;
        pts.push(Point::new(0.0, r * (1.0 - t)));
        groups.push(3);
    }
    let names = ["contact", "free_arc", "loaded", "symmetry"].map(String::from).to_vec();
    Ok(closed_loop(pts, groups, 0, names))
}
