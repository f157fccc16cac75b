//! JSON descriptors for spaces, points, sets and functionals.
//!
//! Points are plain arrays (Euclidean coordinates, Minkowski vectors with the
//! time coordinate first), row-major nested arrays for SPD matrices, and
//! `{"edge": e, "offset": o}` or `{"vertex": name}` for tree points.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Functional, Isometry};
use crate::geometry::{ConvexSet, MetricTree, Payload, Point, RayDirection, Space, SpaceKind};

/// Metric tree file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub u: String,
    pub v: String,
    pub length: f64,
}

impl TreeSpec {
    pub fn build(&self) -> Result<MetricTree> {
        MetricTree::new(
            self.vertices.clone(),
            self.edges.iter().map(|e| (e.u.clone(), e.v.clone(), e.length)).collect(),
        )
    }

    pub fn load(path: &Path) -> Result<TreeSpec> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("reading tree file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("parsing tree file {}: {e}", path.display())))
    }

    pub fn from_tree(tree: &MetricTree) -> TreeSpec {
        let names = tree.names();
        TreeSpec {
            vertices: names.to_vec(),
            edges: tree
                .edges()
                .iter()
                .map(|e| EdgeSpec { u: names[e.u].clone(), v: names[e.v].clone(), length: e.length })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Euclidean { dimension: usize },
    Hyperbolic { dimension: usize },
    Spd { order: usize },
    Tree { vertices: Vec<String>, edges: Vec<EdgeSpec> },
    /// Tree read from a file, relative to the configuration's directory.
    TreeFile { path: PathBuf },
}

impl SpaceSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Space> {
        match self {
            SpaceSpec::Euclidean { dimension } => Space::euclidean(*dimension),
            SpaceSpec::Hyperbolic { dimension } => Space::hyperbolic(*dimension),
            SpaceSpec::Spd { order } => Space::spd(*order),
            SpaceSpec::Tree { vertices, edges } => Ok(Space::tree(
                TreeSpec { vertices: vertices.clone(), edges: edges.clone() }.build()?,
            )),
            SpaceSpec::TreeFile { path } => Ok(Space::tree(TreeSpec::load(&base_dir.join(path))?.build()?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Flat(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Locus { edge: usize, offset: f64 },
    Vertex { vertex: String },
    /// Hyperboloid point above spatial coordinates.
    Spatial { spatial: Vec<f64> },
}

impl PointSpec {
    pub fn build(&self, space: &Space) -> Result<Point> {
        match (self, space.kind()) {
            (PointSpec::Flat(v), _) => space.point(v.clone()),
            (PointSpec::Matrix(rows), SpaceKind::Spd { order }) => {
                if rows.len() != *order || rows.iter().any(|r| r.len() != *order) {
                    return Err(Error::validation(format!("expected a {order}x{order} matrix")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                if flat.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation("matrix has non-finite entries"));
                }
                space.spd_point(DMatrix::from_row_slice(*order, *order, &flat))
            }
            (PointSpec::Locus { edge, offset }, _) => space.locus(*edge, *offset),
            (PointSpec::Vertex { vertex }, _) => space.vertex(vertex),
            (PointSpec::Spatial { spatial }, _) => space.lift(spatial),
            (PointSpec::Matrix(_), _) => Err(Error::validation(format!(
                "matrix points need an SPD space, not {}",
                space.name()
            ))),
        }
    }

    pub fn from_point(space: &Space, p: &Point) -> PointSpec {
        match p.payload() {
            Payload::Coords(v) | Payload::Minkowski(v) => PointSpec::Flat(v.clone()),
            Payload::Matrix(m) => {
                PointSpec::Matrix((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            }
            Payload::Locus(l) => {
                let tree = space.metric_tree().expect("tree point");
                match tree.locus_vertex(l) {
                    Some(v) => PointSpec::Vertex { vertex: tree.names()[v].clone() },
                    None => PointSpec::Locus { edge: l.edge, offset: l.offset },
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DirectionSpec {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Leaf { leaf: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub origin: PointSpec,
    pub direction: DirectionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IsometrySpec {
    Translation { vector: Vec<f64> },
    /// `x -> Q x + b`, `Q` given by rows.
    Euclidean { q: Vec<Vec<f64>>, b: Vec<f64> },
    Hyperbolic { l: Vec<Vec<f64>> },
    Spd { g: Vec<Vec<f64>> },
    /// Image of each vertex, in vertex order.
    Tree { images: Vec<String> },
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::validation("matrix rows must be nonempty and of equal length"));
    }
    Ok(DMatrix::from_row_slice(n, m, &rows.concat()))
}

impl IsometrySpec {
    pub fn build(&self, space: &Space) -> Result<Isometry> {
        Ok(match self {
            IsometrySpec::Translation { vector } => Isometry::translation(vector.clone()),
            IsometrySpec::Euclidean { q, b } => Isometry::Euclidean { q: matrix(q)?, b: b.clone() },
            IsometrySpec::Hyperbolic { l } => Isometry::Hyperbolic { l: matrix(l)? },
            IsometrySpec::Spd { g } => Isometry::Spd { g: matrix(g)? },
            IsometrySpec::Tree { images } => {
                let tree = space
                    .metric_tree()
                    .ok_or_else(|| Error::validation("tree isometry needs a tree space"))?;
                let permutation = images
                    .iter()
                    .map(|name| {
                        tree.vertex_index(name)
                            .ok_or_else(|| Error::validation(format!("unknown vertex '{name}'")))
                    })
                    .collect::<Result<_>>()?;
                Isometry::Tree { permutation }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Singleton { point: PointSpec },
    Segment { a: PointSpec, b: PointSpec },
    Ball { center: PointSpec, radius: f64 },
    Sublevel { functional: Box<FunctionalSpec>, level: f64 },
    Subtree { vertices: Vec<String> },
}

impl SetSpec {
    pub fn build(&self, space: &Space) -> Result<ConvexSet> {
        let set = match self {
            SetSpec::Singleton { point } => ConvexSet::Singleton(point.build(space)?),
            SetSpec::Segment { a, b } => ConvexSet::Segment(a.build(space)?, b.build(space)?),
            SetSpec::Ball { center, radius } => ConvexSet::Ball { center: center.build(space)?, radius: *radius },
            SetSpec::Sublevel { functional, level } => ConvexSet::Sublevel {
                functional: Box::new(functional.build(space)?),
                level: *level,
            },
            SetSpec::Subtree { vertices } => {
                let tree = space
                    .metric_tree()
                    .ok_or_else(|| Error::validation("subtree sets need a tree space"))?;
                ConvexSet::Subtree(
                    vertices
                        .iter()
                        .map(|n| {
                            tree.vertex_index(n)
                                .ok_or_else(|| Error::validation(format!("unknown vertex '{n}'")))
                        })
                        .collect::<Result<_>>()?,
                )
            }
        };
        space.validate_set(&set)?;
        Ok(set)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    #[serde(default = "one")]
    pub weight: f64,
    pub functional: FunctionalSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// `(weight / 2) d(., anchor)^2`.
    SquaredDistance {
        anchor: PointSpec,
        #[serde(default = "one")]
        weight: f64,
    },
    Distance {
        anchor: PointSpec,
        #[serde(default = "one")]
        weight: f64,
    },
    DistanceToSet { set: SetSpec },
    Busemann { ray: RaySpec },
    Displacement { isometry: IsometrySpec },
    Indicator { set: SetSpec },
    WeightedSum { terms: Vec<TermSpec> },
    Zero,
}

impl FunctionalSpec {
    pub fn build(&self, space: &Space) -> Result<Functional> {
        match self {
            FunctionalSpec::SquaredDistance { anchor, weight } => {
                Functional::squared_distance(space, anchor.build(space)?, *weight)
            }
            FunctionalSpec::Distance { anchor, weight } => Functional::distance(space, anchor.build(space)?, *weight),
            FunctionalSpec::DistanceToSet { set } => Functional::distance_to_set(space, set.build(space)?),
            FunctionalSpec::Busemann { ray } => {
                let origin = ray.origin.build(space)?;
                let direction = match &ray.direction {
                    DirectionSpec::Vector(v) => RayDirection::Vector(v.clone()),
                    DirectionSpec::Matrix(rows) => RayDirection::Matrix(matrix(rows)?),
                    DirectionSpec::Leaf { leaf } => {
                        let tree = space
                            .metric_tree()
                            .ok_or_else(|| Error::validation("leaf directions need a tree space"))?;
                        RayDirection::TreeEnd(
                            tree.vertex_index(leaf)
                                .ok_or_else(|| Error::validation(format!("unknown vertex '{leaf}'")))?,
                        )
                    }
                };
                Functional::busemann(space, space.ray(&origin, direction)?)
            }
            FunctionalSpec::Displacement { isometry } => Functional::displacement(space, isometry.build(space)?),
            FunctionalSpec::Indicator { set } => Functional::indicator(space, set.build(space)?),
            FunctionalSpec::WeightedSum { terms } => Functional::weighted_sum(
                space,
                terms
                    .iter()
                    .map(|t| Ok((t.weight, t.functional.build(space)?)))
                    .collect::<Result<_>>()?,
            ),
            FunctionalSpec::Zero => Ok(Functional::zero(space)),
        }
    }
}
