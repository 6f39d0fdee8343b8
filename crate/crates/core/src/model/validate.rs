use std::collections::BTreeMap;

use super::bc::{ContactDirection, Frame, GroupBc};
use super::material::Material;
use super::mesh::Mesh;

/// Checks every model invariant and returns one message per violation.
/// An empty list means the model is valid.
pub fn validate_model(
    mesh: &Mesh,
    materials: &BTreeMap<usize, Material>,
    bcs: &BTreeMap<String, GroupBc>,
) -> Vec<String> {
    let mut diags = Vec::new();
    let diag = mesh.bounding_diagonal();
    let tol = 1e-12 * diag.max(f64::MIN_POSITIVE);

    for (e, el) in mesh.elements.iter().enumerate() {
        if el.nodes.iter().any(|&n| n >= mesh.node_count()) {
            diags.push(format!("element #{e} references a missing node"));
            continue;
        }
        if mesh.element_length(e) <= tol {
            diags.push(format!("zero-length element #{e}"));
        }
        if el.group >= mesh.groups.len() {
            diags.push(format!("element #{e} has undeclared bc-group {}", el.group));
        }
    }
    if !diags.is_empty() {
        return diags;
    }

    // duplicate nodes: sort by x and compare neighbours within the tolerance band
    let mut order: Vec<usize> = (0..mesh.node_count()).collect();
    order.sort_by(|&a, &b| mesh.nodes[a].x.total_cmp(&mesh.nodes[b].x));
    let node_regions = mesh.node_regions();
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if mesh.nodes[b].x - mesh.nodes[a].x > tol {
                break;
            }
            // coincident nodes of different regions are interface partners
            if (mesh.nodes[b] - mesh.nodes[a]).norm() <= tol && node_regions[a] == node_regions[b] {
                diags.push(format!("duplicate nodes #{} and #{}", a.min(b), a.max(b)));
            }
        }
    }

    let mut incoming = vec![Vec::new(); mesh.node_count()];
    let mut outgoing = vec![Vec::new(); mesh.node_count()];
    for (e, el) in mesh.elements.iter().enumerate() {
        outgoing[el.nodes[0]].push(e);
        incoming[el.nodes[1]].push(e);
    }
    for n in 0..mesh.node_count() {
        let (i, o) = (&incoming[n], &outgoing[n]);
        if i.is_empty() && o.is_empty() {
            diags.push(format!("node #{n} is not used by any element"));
            continue;
        }
        if i.len() != 1 || o.len() != 1 {
            diags.push(format!("node #{n} is not on a closed loop ({} in, {} out)", i.len(), o.len()));
            continue;
        }
        if mesh.elements[i[0]].region != mesh.elements[o[0]].region {
            diags.push(format!("node #{n} is shared by two regions"));
        }
    }

    for region in mesh.region_ids() {
        let loops: Vec<Vec<usize>> =
            mesh.loops().into_iter().filter(|l| mesh.elements[l[0]].region == region).collect();
        let Some(outer) = loops
            .iter()
            .max_by(|a, b| mesh.loop_area(a).abs().total_cmp(&mesh.loop_area(b).abs()))
        else {
            continue;
        };
        if mesh.loop_area(outer) <= 0.0 {
            diags.push(format!("outer loop of region {region} is not counter-clockwise"));
        }
        for l in &loops {
            if !std::ptr::eq(l, outer) && mesh.loop_area(l) >= 0.0 {
                diags.push(format!("hole loop of region {region} is not clockwise"));
            }
        }
        match materials.get(&region) {
            None => diags.push(format!("region {region} has no material")),
            Some(m) => {
                if let Some(msg) = m.check() {
                    diags.push(msg);
                }
            }
        }
    }

    for (g, name) in mesh.groups.iter().enumerate() {
        let used = mesh.elements.iter().any(|e| e.group == g);
        match bcs.get(name) {
            None if used => diags.push(format!("bc-group `{name}` has no boundary condition")),
            Some(GroupBc::Directional { frame: Frame::Local, first, second })
                if first.is_dirichlet() || second.is_dirichlet() =>
            {
                diags.push(format!("bc-group `{name}`: Dirichlet data must use the x/y frame"));
            }
            Some(GroupBc::Contact(c)) => {
                if let ContactDirection::Fixed(d) = c.direction {
                    if (d.norm() - 1.0).abs() > 1e-12 {
                        diags.push(format!("bc-group `{name}`: contact direction is not a unit vector"));
                    }
                }
                for el in mesh.elements.iter().filter(|e| e.group == g) {
                    for &n in &el.nodes {
                        if c.gap_at(&mesh.nodes[n]) < -tol {
                            diags.push(format!("bc-group `{name}`: negative gap at node #{n}"));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    for name in bcs.keys() {
        if mesh.group_id(name).is_none() {
            diags.push(format!("boundary condition for unknown bc-group `{name}`"));
        }
    }
    diags.dedup();
    diags
}
