//! Hyperboloid model: the upper sheet `<p,p> = -1, p_0 > 0` of Minkowski
//! space with bilinear form `-p_0 q_0 + sum p_i q_i`.

/// Minkowski bilinear form.
pub fn minkowski(p: &[f64], q: &[f64]) -> f64 {
    let spatial: f64 = p[1..].iter().zip(&q[1..]).map(|(a, b)| a * b).sum();
    spatial - p[0] * q[0]
}

/// Pulls a point that drifted off the sheet back onto it.
pub fn renormalize(p: &mut [f64]) {
    let s = (-minkowski(p, p)).sqrt();
    let s = if p[0] < 0.0 { -s } else { s };
    if s.is_finite() && s != 0.0 {
        p.iter_mut().for_each(|x| *x /= s);
    }
}

/// Lifts spatial coordinates `x` to `(sqrt(1 + |x|^2), x)`.
pub fn lift(spatial: &[f64]) -> Vec<f64> {
    let r2: f64 = spatial.iter().map(|x| x * x).sum();
    let mut p = Vec::with_capacity(spatial.len() + 1);
    p.push((1.0 + r2).sqrt());
    p.extend_from_slice(spatial);
    p
}

pub fn distance(p: &[f64], q: &[f64]) -> f64 {
    let c = -minkowski(p, q);
    if c >= 2.0 {
        return c.acosh();
    }
    // <p-q, p-q> = 4 sinh^2(d/2); stable for nearby points
    let w: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let s = minkowski(&w, &w).max(0.0);
    2.0 * (s.sqrt() / 2.0).asinh()
}

pub fn geodesic(p: &[f64], q: &[f64], t: f64) -> Vec<f64> {
    if t == 0.0 {
        return p.to_vec();
    }
    if t == 1.0 {
        return q.to_vec();
    }
    let d = distance(p, q);
    let mut out: Vec<f64> = if d < 1e-9 {
        p.iter().zip(q).map(|(a, b)| (1.0 - t) * a + t * b).collect()
    } else {
        let s = d.sinh();
        let wa = ((1.0 - t) * d).sinh() / s;
        let wb = (t * d).sinh() / s;
        p.iter().zip(q).map(|(a, b)| wa * a + wb * b).collect()
    };
    renormalize(&mut out);
    out
}

/// Removes the component of `v` normal to the sheet at `p`.
pub fn project_tangent(p: &[f64], v: &[f64]) -> Vec<f64> {
    let c = minkowski(p, v);
    v.iter().zip(p).map(|(vi, pi)| vi + c * pi).collect()
}

/// Tangent vector at `p` pointing at `q` with Minkowski length `d(p, q)`.
pub fn log(p: &[f64], q: &[f64]) -> Vec<f64> {
    let d = distance(p, q);
    if d == 0.0 {
        return vec![0.0; p.len()];
    }
    let u = project_tangent(p, q);
    let n = minkowski(&u, &u).max(0.0).sqrt();
    if n == 0.0 {
        return vec![0.0; p.len()];
    }
    u.iter().map(|x| x * d / n).collect()
}

pub fn exp(p: &[f64], v: &[f64]) -> Vec<f64> {
    let n = minkowski(v, v).max(0.0).sqrt();
    if n == 0.0 {
        return p.to_vec();
    }
    let (c, s) = (n.cosh(), n.sinh() / n);
    let mut out: Vec<f64> = p.iter().zip(v).map(|(a, b)| c * a + s * b).collect();
    renormalize(&mut out);
    out
}

/// Parameter in `[0, 1]` of the point of `[a, b]` nearest to `x`.
///
/// Along the unit-speed geodesic `p cosh s + v sinh s` the distance to `x`
/// satisfies `cosh d = A cosh s + B sinh s`, minimized at `tanh s = -B/A`.
/// `tanh` saturates when the minimizer is far from `p`, so the expansion is
/// repeated about each new estimate.
pub fn segment_projection_parameter(a: &[f64], b: &[f64], x: &[f64]) -> f64 {
    let len = distance(a, b);
    if len == 0.0 {
        return 0.0;
    }
    let mut t = 0.0;
    for _ in 0..64 {
        let p = geodesic(a, b, t);
        // the farther endpoint gives a well-conditioned direction
        let (toward, sign) = if t < 0.5 { (b, 1.0) } else { (a, -1.0) };
        let u = log(&p, toward);
        let n = minkowski(&u, &u).max(0.0).sqrt();
        if n == 0.0 {
            break;
        }
        let v: Vec<f64> = u.iter().map(|c| sign * c / n).collect();
        let big_a = -minkowski(x, &p);
        let big_b = -minkowski(x, &v);
        let s = (-big_b / big_a).clamp(-1.0, 1.0).atanh();
        let next = (t + s / len).clamp(0.0, 1.0);
        if next == t {
            break;
        }
        t = next;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_distance_along_axis() {
        let p = [1.0, 0.0, 0.0];
        let q = [1f64.cosh(), 1f64.sinh(), 0.0];
        assert_abs_diff_eq!(distance(&p, &q), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn small_distances_are_accurate() {
        let p = lift(&[0.3, -0.2]);
        let q = lift(&[0.3 + 1e-9, -0.2]);
        let d = distance(&p, &q);
        assert!(d > 0.0);
        // metric at (0.3,-0.2) along x1 is close to 1 to first order
        assert!((d / 1e-9 - 1.0).abs() < 0.1);
    }

    #[test]
    fn exp_inverts_log() {
        let p = lift(&[0.5, 1.0]);
        let q = lift(&[-1.0, 0.25]);
        let back = exp(&p, &log(&p, &q));
        assert_abs_diff_eq!(distance(&back, &q), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_parameter_of_endpoint_is_zero() {
        let a = lift(&[0.0, 0.0]);
        let b = lift(&[2.0, 0.0]);
        let x = lift(&[-1.0, 0.5]);
        assert_eq!(segment_projection_parameter(&a, &b, &x), 0.0);
    }

    #[test]
    fn projection_far_from_the_first_endpoint() {
        // x sits 1e-3 off the axis at distance 18 from a
        let a = lift(&[(-18f64).sinh(), 0.0]);
        let b = lift(&[2f64.sinh(), 0.0]);
        let x = lift(&[0.0, 1e-3]);
        let t = segment_projection_parameter(&a, &b, &x);
        assert_abs_diff_eq!(t, 0.9, epsilon = 1e-12);
    }
}
