//! Quadrature rules on the reference interval and reference triangle.
//!
//! Points are stored in barycentric coordinates so the same loop maps them
//! onto any physical cell. Weights sum to the reference-cell measure
//! (1 for the unit interval, 1/2 for the unit triangle) and are all positive.

use std::f64::consts::PI;

/// A fixed quadrature rule on the reference cell.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    /// Barycentric coordinates; 1D rules use the first two entries.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Every polynomial up to this total degree is integrated exactly.
    pub exact_degree: usize,
}

impl QuadratureRule {
    /// Returns a rule integrating polynomials of total degree `degree`
    /// exactly. Looks up a tabulated rule and falls back to a higher-order
    /// one when no table entry matches.
    pub fn for_degree(dim: usize, degree: usize) -> Self {
        match dim {
            1 => gauss_legendre_unit(degree / 2 + 1),
            _ => triangle_rule(degree),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre rule with `n` points mapped to `[0, 1]`; exact for
/// polynomials of degree `2n-1`.
fn gauss_legendre_unit(n: usize) -> QuadratureRule {
    let n = n.max(1);
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 1..=n {
        // Newton iteration for the k-th root of the Legendre polynomial P_n
        let mut x = (PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        let t = 0.5 * (x + 1.0);
        points.push([1.0 - t, t, 0.0]);
        weights.push(0.5 * w);
    }
    // ascending in t for reproducible ordering
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][1].total_cmp(&points[b][1]));
    QuadratureRule {
        dim: 1,
        points: order.iter().map(|&i| points[i]).collect(),
        weights: order.iter().map(|&i| weights[i]).collect(),
        exact_degree: 2 * n - 1,
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn triangle_rule(degree: usize) -> QuadratureRule {
    match degree {
        0 | 1 => centroid_rule(),
        2 => three_point_rule(),
        3 | 4 => six_point_rule(),
        5 => seven_point_rule(),
        6 => twelve_point_rule(),
        d => collapsed_product_rule(d),
    }
}

fn centroid_rule() -> QuadratureRule {
    QuadratureRule {
        dim: 2,
        points: vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
        weights: vec![0.5],
        exact_degree: 1,
    }
}

/// Appends the 3-orbit of the barycentric point `(a, a, 1-2a)`.
fn push_orbit3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let c = 1.0 - 2.0 * a;
    points.push([a, a, c]);
    points.push([a, c, a]);
    points.push([c, a, a]);
    weights.extend_from_slice(&[w, w, w]);
}

/// Appends the 6-orbit of `(a, b, 1-a-b)`.
fn push_orbit6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(p);
        weights.push(w);
    }
}

fn three_point_rule() -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    push_orbit3(&mut points, &mut weights, 1.0 / 6.0, 0.5 / 3.0);
    QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: 2,
    }
}

fn six_point_rule() -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    push_orbit3(&mut points, &mut weights, 0.445948490915965, 0.5 * 0.223381589678011);
    push_orbit3(&mut points, &mut weights, 0.091576213509771, 0.5 * 0.109951743655322);
    QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: 4,
    }
}

fn seven_point_rule() -> QuadratureRule {
    let mut points = vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
    let mut weights = vec![0.5 * 0.225];
    let s15 = 15.0_f64.sqrt();
    push_orbit3(&mut points, &mut weights, (6.0 + s15) / 21.0, 0.5 * (155.0 + s15) / 1200.0);
    push_orbit3(&mut points, &mut weights, (6.0 - s15) / 21.0, 0.5 * (155.0 - s15) / 1200.0);
    QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: 5,
    }
}

fn twelve_point_rule() -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    push_orbit3(&mut points, &mut weights, 0.249286745170910, 0.5 * 0.116786275726379);
    push_orbit3(&mut points, &mut weights, 0.063089014491502, 0.5 * 0.050844906370207);
    push_orbit6(
        &mut points,
        &mut weights,
        0.310352451033785,
        0.053145049844816,
        0.5 * 0.082851075618374,
    );
    QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: 6,
    }
}

/// Product Gauss rule collapsed onto the triangle via `x = s`,
/// `y = t(1-s)`; weights stay positive at any order.
fn collapsed_product_rule(degree: usize) -> QuadratureRule {
    let n = degree / 2 + 2;
    let line = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let s = line.points[i][1];
        let ws = line.weights[i];
        for j in 0..n {
            let t = line.points[j][1];
            let wt = line.weights[j];
            let x = s;
            let y = t * (1.0 - s);
            points.push([1.0 - x - y, x, y]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: 2 * n - 2,
    }
}
