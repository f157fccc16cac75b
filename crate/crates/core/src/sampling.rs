//! Seeded random points, directions and trees for property checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::functionals::Isometry;
use crate::geometry::{linalg, MetricTree, Point, RayDirection, Space, SpaceKind};

/// Independent generator for sample `stream` of a run seeded with `seed`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// A random point at "scale" roughly `scale` from the base point.
pub fn point<R: Rng + ?Sized>(space: &Space, rng: &mut R, scale: f64) -> Point {
    match space.kind() {
        SpaceKind::Euclidean { dimension } => {
            let v = (0..*dimension).map(|_| rng.gen_range(-scale..=scale)).collect();
            space.point(v).expect("finite coordinates")
        }
        SpaceKind::Hyperbolic { dimension } => {
            let v: Vec<f64> = (0..*dimension).map(|_| rng.gen_range(-scale..=scale)).collect();
            space.lift(&v).expect("finite coordinates")
        }
        SpaceKind::Spd { order } => {
            let s = symmetric(rng, *order, scale / (*order as f64).sqrt());
            space.spd_point(linalg::sym_exp(&s)).expect("exponential is SPD")
        }
        SpaceKind::MetricTree(t) => {
            let e = rng.gen_range(0..t.edge_count());
            let len = t.edge(e).length;
            space.locus(e, rng.gen_range(0.0..=len)).expect("valid locus")
        }
    }
}

/// A random point within distance `radius` of `x`.
pub fn near<R: Rng + ?Sized>(space: &Space, rng: &mut R, x: &Point, radius: f64) -> Point {
    let y = point(space, rng, 2.0);
    let d = space.distance(x, &y).expect("same space");
    if d == 0.0 {
        return x.clone();
    }
    let t = (radius * rng.gen_range(0.0..=1.0) / d).min(1.0);
    space.geodesic_point(x, &y, t).expect("t in [0, 1]")
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-scale..=scale);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// A random ray direction valid at `origin`.
pub fn direction<R: Rng + ?Sized>(space: &Space, rng: &mut R, origin: &Point) -> RayDirection {
    match space.kind() {
        SpaceKind::Euclidean { dimension } | SpaceKind::Hyperbolic { dimension } => loop {
            let v: Vec<f64> = (0..*dimension).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if v.iter().map(|x| x * x).sum::<f64>() > 1e-4 {
                break RayDirection::Vector(v);
            }
        },
        SpaceKind::Spd { order } => loop {
            let s = symmetric(rng, *order, 1.0);
            if s.norm() > 1e-2 {
                break RayDirection::Matrix(s);
            }
        },
        SpaceKind::MetricTree(t) => {
            let l = origin.locus().expect("tree point");
            let leaves: Vec<usize> = (0..t.vertex_count())
                .filter(|&v| t.degree(v) == 1 && t.distance_to_vertex(&l, v) > space.tolerance())
                .collect();
            RayDirection::TreeEnd(leaves[rng.gen_range(0..leaves.len())])
        }
    }
}

/// A random isometry of `space`. Trees get the identity, since random trees
/// rarely have other automorphisms.
pub fn isometry<R: Rng + ?Sized>(space: &Space, rng: &mut R) -> Isometry {
    match space.kind() {
        SpaceKind::Euclidean { dimension } => Isometry::Euclidean {
            q: orthogonal(rng, *dimension),
            b: (0..*dimension).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        },
        SpaceKind::Hyperbolic { dimension } => {
            let n = dimension + 1;
            let r: f64 = rng.gen_range(-1.0..=1.0);
            let mut boost = DMatrix::identity(n, n);
            boost[(0, 0)] = r.cosh();
            boost[(1, 1)] = r.cosh();
            boost[(0, 1)] = r.sinh();
            boost[(1, 0)] = r.sinh();
            let mut rotation = DMatrix::identity(n, n);
            rotation.view_mut((1, 1), (n - 1, n - 1)).copy_from(&orthogonal(rng, n - 1));
            Isometry::Hyperbolic { l: rotation * boost }
        }
        SpaceKind::Spd { order } => {
            let n = *order;
            Isometry::Spd {
                g: DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..=0.5) / n as f64),
            }
        }
        SpaceKind::MetricTree(t) => Isometry::Tree {
            permutation: (0..t.vertex_count()).collect(),
        },
    }
}

fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| rng.gen_range(-1.0..=1.0) + if i == j { 2.0 } else { 0.0 });
    a.qr().q()
}

/// Random tree on `n >= 2` vertices named `v0..`, edge lengths in `[0.5, 2]`.
pub fn tree<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MetricTree {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let edges = (1..n)
        .map(|i| {
            let j = rng.gen_range(0..i);
            (names[j].clone(), names[i].clone(), rng.gen_range(0.5..=2.0))
        })
        .collect();
    MetricTree::new(names, edges).expect("random tree is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = rng(7, 3).gen();
        let b: u64 = rng(7, 3).gen();
        let c: u64 = rng(7, 4).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_points_validate() {
        let mut r = rng(1, 0);
        let t = tree(&mut r, 7);
        for space in [
            Space::euclidean(3).unwrap(),
            Space::hyperbolic(2).unwrap(),
            Space::spd(3).unwrap(),
            Space::tree(t),
        ] {
            for _ in 0..50 {
                let p = point(&space, &mut r, 1.5);
                let q = near(&space, &mut r, &p, 0.3);
                assert!(space.distance(&p, &q).unwrap() <= 0.3 + 1e-12);
                let dir = direction(&space, &mut r, &p);
                assert!(space.ray(&p, dir).is_ok());
            }
            assert!(isometry(&space, &mut r).validate(&space).is_ok());
        }
    }
}
