//! Finite metric trees: weighted acyclic connected graphs where every edge is
//! an isometric copy of a real interval.
//!
//! A point ("locus") is an edge plus an offset measured from the edge's `u`
//! endpoint. Vertices have one canonical locus: the lowest-numbered incident
//! edge with offset `0` or its full length.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Locus {
    pub edge: usize,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeEdge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

#[derive(Debug)]
pub struct MetricTree {
    names: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<TreeEdge>,
    incident: Vec<Vec<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
    dist: Vec<f64>,
    // hop[s * n + t] = (next vertex, edge) on the path s -> t
    hop: Vec<(usize, usize)>,
}

impl MetricTree {
    pub fn new(vertices: Vec<String>, edges: Vec<(String, String, f64)>) -> Result<Self> {
        let n = vertices.len();
        if n < 2 {
            return Err(Error::validation("a metric tree needs at least two vertices"));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, name) in vertices.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate vertex '{name}'")));
            }
        }
        if edges.len() != n - 1 {
            return Err(Error::validation(format!(
                "a tree on {n} vertices has {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        let mut tree_edges = Vec::with_capacity(edges.len());
        let mut incident = vec![Vec::new(); n];
        let mut edge_lookup = HashMap::new();
        for (e, (a, b, length)) in edges.into_iter().enumerate() {
            let u = *index
                .get(&a)
                .ok_or_else(|| Error::validation(format!("edge {e}: unknown vertex '{a}'")))?;
            let v = *index
                .get(&b)
                .ok_or_else(|| Error::validation(format!("edge {e}: unknown vertex '{b}'")))?;
            if u == v {
                return Err(Error::validation(format!("edge {e} is a loop at '{a}'")));
            }
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::validation(format!(
                    "edge {e} has non-positive length {length}"
                )));
            }
            if edge_lookup.insert((u.min(v), u.max(v)), e).is_some() {
                return Err(Error::validation(format!("edge {e} duplicates an earlier edge")));
            }
            incident[u].push(e);
            incident[v].push(e);
            tree_edges.push(TreeEdge { u, v, length });
        }

        let mut dist = vec![f64::INFINITY; n * n];
        let mut hop = vec![(usize::MAX, usize::MAX); n * n];
        for t in 0..n {
            // BFS from the target; parent pointers give the first hop toward t
            dist[t * n + t] = 0.0;
            hop[t * n + t] = (t, usize::MAX);
            let mut queue = VecDeque::from([t]);
            while let Some(w) = queue.pop_front() {
                for &e in &incident[w] {
                    let TreeEdge { u, v, length } = tree_edges[e];
                    let other = if u == w { v } else { u };
                    if dist[other * n + t].is_infinite() {
                        dist[other * n + t] = dist[w * n + t] + length;
                        hop[other * n + t] = (w, e);
                        queue.push_back(other);
                    }
                }
            }
        }
        if dist.iter().any(|d| d.is_infinite()) {
            return Err(Error::validation("tree graph is not connected"));
        }

        Ok(MetricTree {
            names: vertices,
            index,
            edges: tree_edges,
            incident,
            edge_lookup,
            dist,
            hop,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &TreeEdge {
        &self.edges[e]
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn vertex_distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.names.len() + b]
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn check_locus(&self, l: &Locus) -> Result<()> {
        let edge = self
            .edges
            .get(l.edge)
            .ok_or_else(|| Error::validation(format!("edge {} does not exist", l.edge)))?;
        if !(l.offset >= 0.0 && l.offset <= edge.length) {
            return Err(Error::validation(format!(
                "offset {} outside [0, {}] on edge {}",
                l.offset, edge.length, l.edge
            )));
        }
        Ok(())
    }

    pub fn vertex_locus(&self, v: usize) -> Locus {
        let e = *self.incident[v].iter().min().expect("connected tree has no isolated vertex");
        let edge = &self.edges[e];
        Locus {
            edge: e,
            offset: if edge.u == v { 0.0 } else { edge.length },
        }
    }

    /// Snaps loci within rounding distance of an endpoint to that vertex's
    /// canonical representation.
    pub fn canonical(&self, l: Locus) -> Locus {
        let edge = &self.edges[l.edge];
        let snap = 1e-12 * edge.length.max(1.0);
        if l.offset <= snap {
            self.vertex_locus(edge.u)
        } else if l.offset >= edge.length - snap {
            self.vertex_locus(edge.v)
        } else {
            l
        }
    }

    /// The vertex a locus sits on, if any.
    pub fn locus_vertex(&self, l: &Locus) -> Option<usize> {
        let edge = &self.edges[l.edge];
        if l.offset == 0.0 {
            Some(edge.u)
        } else if l.offset == edge.length {
            Some(edge.v)
        } else {
            None
        }
    }

    fn ends(&self, l: &Locus) -> [(usize, f64); 2] {
        let e = &self.edges[l.edge];
        [(e.u, l.offset), (e.v, e.length - l.offset)]
    }

    pub fn distance_to_vertex(&self, l: &Locus, v: usize) -> f64 {
        self.ends(l)
            .iter()
            .map(|&(x, dx)| dx + self.vertex_distance(x, v))
            .fold(f64::INFINITY, f64::min)
    }

    // endpoint pair through which the geodesic leaves a and enters b
    fn route(&self, a: &Locus, b: &Locus) -> (usize, f64, usize, f64, f64) {
        let mut best = (usize::MAX, 0.0, usize::MAX, 0.0, f64::INFINITY);
        for &(x, dx) in &self.ends(a) {
            for &(y, dy) in &self.ends(b) {
                let total = dx + self.vertex_distance(x, y) + dy;
                if total < best.4 {
                    best = (x, dx, y, dy, total);
                }
            }
        }
        best
    }

    pub fn distance(&self, a: &Locus, b: &Locus) -> f64 {
        if a.edge == b.edge {
            return (a.offset - b.offset).abs();
        }
        self.route(a, b).4
    }

    fn along_from(&self, e: usize, from: usize, s: f64) -> Locus {
        let edge = &self.edges[e];
        let s = s.clamp(0.0, edge.length);
        let offset = if edge.u == from { s } else { edge.length - s };
        self.canonical(Locus { edge: e, offset })
    }

    /// Point at fraction `t` of the way from `a` to `b`.
    pub fn geodesic(&self, a: &Locus, b: &Locus, t: f64) -> Locus {
        if t == 0.0 {
            return *a;
        }
        if t == 1.0 {
            return *b;
        }
        if a.edge == b.edge {
            let offset = a.offset + t * (b.offset - a.offset);
            return self.canonical(Locus { edge: a.edge, offset });
        }
        let (x, dx, y, dy, total) = self.route(a, b);
        let s = t * total;
        if s <= dx {
            // x is the endpoint we leave through, so walk toward it
            let e = &self.edges[a.edge];
            let offset = if x == e.u { a.offset - s } else { a.offset + s };
            return self.canonical(Locus { edge: a.edge, offset: offset.clamp(0.0, e.length) });
        }
        let mut acc = dx;
        let mut cur = x;
        let n = self.names.len();
        while cur != y {
            let (next, e) = self.hop[cur * n + y];
            let len = self.edges[e].length;
            if s <= acc + len {
                return self.along_from(e, cur, s - acc);
            }
            acc += len;
            cur = next;
        }
        let remaining = (s - acc).min(dy);
        let e = &self.edges[b.edge];
        let from_y = if y == e.u { remaining } else { e.length - remaining };
        self.canonical(Locus { edge: b.edge, offset: from_y.clamp(0.0, e.length) })
    }

    /// Nearest point of `[a, b]` to `x`: the median of the three points, at
    /// distance `(d(a,x) + d(a,b) - d(b,x)) / 2` from `a`.
    pub fn segment_projection_parameter(&self, a: &Locus, b: &Locus, x: &Locus) -> f64 {
        let ab = self.distance(a, b);
        if ab == 0.0 {
            return 0.0;
        }
        let s = 0.5 * (self.distance(a, x) + ab - self.distance(b, x));
        (s / ab).clamp(0.0, 1.0)
    }

    /// Whether the vertex set induces a connected subgraph.
    pub fn is_connected_subset(&self, vertices: &[usize]) -> bool {
        if vertices.is_empty() {
            return false;
        }
        let inside: std::collections::HashSet<usize> = vertices.iter().copied().collect();
        let mut seen = std::collections::HashSet::from([vertices[0]]);
        let mut queue = VecDeque::from([vertices[0]]);
        while let Some(w) = queue.pop_front() {
            for &e in &self.incident[w] {
                let edge = &self.edges[e];
                let other = if edge.u == w { edge.v } else { edge.u };
                if inside.contains(&other) && seen.insert(other) {
                    queue.push_back(other);
                }
            }
        }
        seen.len() == inside.len()
    }

    pub fn in_subtree(&self, vertices: &[usize], l: &Locus) -> bool {
        let e = &self.edges[l.edge];
        match self.locus_vertex(l) {
            Some(v) => vertices.contains(&v),
            None => vertices.contains(&e.u) && vertices.contains(&e.v),
        }
    }

    /// Nearest point of a subtree. Ties are broken by the smallest
    /// `(edge, offset)` of the candidate vertex's canonical locus.
    pub fn project_subtree(&self, vertices: &[usize], l: &Locus) -> Locus {
        if self.in_subtree(vertices, l) {
            return *l;
        }
        let mut best: Option<(f64, Locus)> = None;
        for &v in vertices {
            let d = self.distance_to_vertex(l, v);
            let cand = self.vertex_locus(v);
            let better = match &best {
                None => true,
                Some((bd, bl)) => {
                    d < bd - 1e-12
                        || ((d - bd).abs() <= 1e-12
                            && (cand.edge, cand.offset) < (bl.edge, bl.offset))
                }
            };
            if better {
                best = Some((d, cand));
            }
        }
        best.expect("subtree is nonempty").1
    }
}
