use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Straight two-node boundary element. The region lies to the left of the
/// direction `nodes[0] -> nodes[1]`, so the outward normal points right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Element {
    pub nodes: [usize; 2],
    pub region: usize,
    pub group: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub elements: Vec<Element>,
    /// bc-group names, indexed by `Element::group`.
    pub groups: Vec<String>,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn endpoints(&self, e: usize) -> (Point, Point) {
        let el = &self.elements[e];
        (self.nodes[el.nodes[0]], self.nodes[el.nodes[1]])
    }

    pub fn element_length(&self, e: usize) -> f64 {
        let (a, b) = self.endpoints(e);
        (b - a).norm()
    }

    /// Unit outward normal of element `e`.
    pub fn normal(&self, e: usize) -> Point {
        let (a, b) = self.endpoints(e);
        let d = (b - a) / (b - a).norm();
        Point::new(d.y, -d.x)
    }

    pub fn group_id(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }

    pub fn region_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.elements.iter().map(|e| e.region).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn bounding_diagonal(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut lo = self.nodes[0];
        let mut hi = self.nodes[0];
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// For each node, the element ending at it and the element starting at it.
    /// `None` where the node does not have exactly one of each.
    pub fn node_adjacency(&self) -> Vec<(Option<usize>, Option<usize>)> {
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        let mut outgoing = vec![Vec::new(); self.nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            outgoing[el.nodes[0]].push(e);
            incoming[el.nodes[1]].push(e);
        }
        incoming
            .into_iter()
            .zip(outgoing)
            .map(|(i, o)| {
                let prev = if i.len() == 1 { Some(i[0]) } else { None };
                let next = if o.len() == 1 { Some(o[0]) } else { None };
                (prev, next)
            })
            .collect()
    }

    /// Region of every node (taken from its first incident element).
    pub fn node_regions(&self) -> Vec<Option<usize>> {
        let mut r = vec![None; self.nodes.len()];
        for el in &self.elements {
            for &n in &el.nodes {
                r[n].get_or_insert(el.region);
            }
        }
        r
    }

    /// Closed loops as ordered element lists. Elements that cannot be chained
    /// into a loop are skipped; validation reports them separately.
    pub fn loops(&self) -> Vec<Vec<usize>> {
        let mut next_of = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            next_of.entry((el.region, el.nodes[0])).or_insert(e);
        }
        let mut seen = vec![false; self.elements.len()];
        let mut out = Vec::new();
        for start in 0..self.elements.len() {
            if seen[start] {
                continue;
            }
            let mut lp = vec![start];
            seen[start] = true;
            let mut cur = start;
            let closed = loop {
                let el = self.elements[cur];
                match next_of.get(&(el.region, el.nodes[1])) {
                    Some(&nx) if nx == start => break true,
                    Some(&nx) if !seen[nx] => {
                        seen[nx] = true;
                        lp.push(nx);
                        cur = nx;
                    }
                    _ => break false,
                }
            };
            if closed {
                out.push(lp);
            }
        }
        out
    }

    /// Signed area enclosed by a loop (positive when counter-clockwise).
    pub fn loop_area(&self, lp: &[usize]) -> f64 {
        lp.iter()
            .map(|&e| {
                let (a, b) = self.endpoints(e);
                0.5 * (a.x * b.y - b.x * a.y)
            })
            .sum()
    }

    /// Even-odd point-in-polygon test over all loops of `region`.
    pub fn contains(&self, region: usize, p: &Point) -> bool {
        let mut inside = false;
        for el in self.elements.iter().filter(|e| e.region == region) {
            let a = self.nodes[el.nodes[0]];
            let b = self.nodes[el.nodes[1]];
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Region containing `p`, if any.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        self.region_ids().into_iter().find(|&r| self.contains(r, p))
    }

    /// Appends another mesh, renumbering its nodes and merging group names.
    pub fn merge(&mut self, other: &Mesh) {
        let offset = self.nodes.len();
        self.nodes.extend_from_slice(&other.nodes);
        let mut gmap = Vec::with_capacity(other.groups.len());
        for g in &other.groups {
            let id = match self.group_id(g) {
                Some(id) => id,
                None => {
                    self.groups.push(g.clone());
                    self.groups.len() - 1
                }
            };
            gmap.push(id);
        }
        for el in &other.elements {
            self.elements.push(Element {
                nodes: [el.nodes[0] + offset, el.nodes[1] + offset],
                region: el.region,
                group: gmap[el.group],
            });
        }
    }

    /// Arc length along the chain of `group` elements, measured from the
    /// first node of the chain. Nodes not on the group get `None`.
    pub fn group_arc_coordinates(&self, group: usize) -> Vec<Option<f64>> {
        let mut s = vec![None; self.nodes.len()];
        let els: Vec<usize> = (0..self.elements.len())
            .filter(|&e| self.elements[e].group == group)
            .collect();
        let ends: std::collections::HashSet<usize> =
            els.iter().map(|&e| self.elements[e].nodes[1]).collect();
        for &start in &els {
            let first = self.elements[start].nodes[0];
            if ends.contains(&first) || s[first].is_some() {
                continue;
            }
            let mut acc = 0.0;
            s[first] = Some(0.0);
            let mut cur = Some(start);
            while let Some(e) = cur {
                acc += self.element_length(e);
                let end = self.elements[e].nodes[1];
                if s[end].is_some() {
                    break;
                }
                s[end] = Some(acc);
                cur = els.iter().copied().find(|&f| self.elements[f].nodes[0] == end);
            }
        }
        s
    }

    /// Serializes to the plain-text mesh format. Group names are kept in
    /// `# group <id> <name>` comment lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, g) in self.groups.iter().enumerate() {
            let _ = writeln!(out, "# group {i} {g}");
        }
        let _ = writeln!(out, "NODES {}", self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{i} {:?} {:?}", p.x, p.y);
        }
        let _ = writeln!(out, "ELEMENTS {}", self.elements.len());
        for (i, e) in self.elements.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i} {} {} {} {}",
                e.nodes[0], e.nodes[1], e.region, e.group
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |line: usize, msg: &str| Error::InvalidGeometry(format!("line {}: {msg}", line + 1));
        let mut names: HashMap<usize, String> = HashMap::new();
        let mut lines = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let trimmed = raw.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                let toks: Vec<&str> = comment.split_whitespace().collect();
                if toks.len() == 3 && toks[0] == "group" {
                    if let Ok(id) = toks[1].parse() {
                        names.insert(id, toks[2].to_string());
                    }
                }
                continue;
            }
            let content = trimmed.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                lines.push((no, content));
            }
        }
        let mut it = lines.into_iter();
        let count = |it: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<usize> {
            let (no, l) = it.next().ok_or_else(|| Error::InvalidGeometry(format!("missing {key} section")))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 2 || toks[0] != key {
                return Err(bad(no, &format!("expected `{key} <count>`")));
            }
            toks[1].parse().map_err(|_| bad(no, "bad count"))
        };
        let n = count(&mut it, "NODES")?;
        let mut node_index = HashMap::new();
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, l) = it.next().ok_or_else(|| Error::InvalidGeometry("truncated NODES".into()))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(bad(no, "expected `id x y`"));
            }
            let id: i64 = toks[0].parse().map_err(|_| bad(no, "bad node id"))?;
            let x: f64 = toks[1].parse().map_err(|_| bad(no, "bad x"))?;
            let y: f64 = toks[2].parse().map_err(|_| bad(no, "bad y"))?;
            if node_index.insert(id, nodes.len()).is_some() {
                return Err(bad(no, "duplicate node id"));
            }
            nodes.push(Point::new(x, y));
        }
        let m = count(&mut it, "ELEMENTS")?;
        let mut elements = Vec::with_capacity(m);
        let mut max_group = 0;
        for _ in 0..m {
            let (no, l) = it.next().ok_or_else(|| Error::InvalidGeometry("truncated ELEMENTS".into()))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 5 {
                return Err(bad(no, "expected `id n1 n2 region bcgroup`"));
            }
            let node = |s: &str| -> Result<usize> {
                let id: i64 = s.parse().map_err(|_| bad(no, "bad node reference"))?;
                node_index.get(&id).copied().ok_or_else(|| bad(no, "unknown node id"))
            };
            let region: usize = toks[3].parse().map_err(|_| bad(no, "bad region"))?;
            let group: usize = toks[4].parse().map_err(|_| bad(no, "bad bc-group"))?;
            max_group = max_group.max(group);
            elements.push(Element { nodes: [node(toks[1])?, node(toks[2])?], region, group });
        }
        if let Some((no, _)) = it.next() {
            return Err(bad(no, "trailing content"));
        }
        let ngroups = if elements.is_empty() { 0 } else { max_group + 1 };
        let groups = (0..ngroups)
            .map(|g| names.get(&g).cloned().unwrap_or_else(|| g.to_string()))
            .collect();
        Ok(Mesh { nodes, elements, groups })
    }
}
