//! Uniform simplicial meshes of the unit interval and the unit square.
//!
//! 1D: `n_sub` equal subintervals, vertices `x_i = i/n_sub`.
//!
//! 2D: the unit square is split into `n_sub x n_sub` axis-aligned
//! subsquares, each cut into two right triangles along the bottom-left
//! to top-right diagonal. Vertex `(i, j)` has index `j*(n_sub+1) + i`.
//! The mesh size `h` is the longest edge: `1/n_sub` in 1D and
//! `sqrt(2)/n_sub` in 2D.

use crate::error::{Error, Result};

const LOCATE_TOL: f64 = 1e-12;

/// Uniform triangulation of `(0,1)` or `(0,1)^2` with boundary tagging.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    n_sub: usize,
    vertices: Vec<[f64; 2]>,
    /// `dim+1` vertex indices per cell; the unused slot in 1D repeats the
    /// last index and is never exposed (see [`Mesh::cell`]).
    cells: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h: f64,
}

impl Mesh {
    /// Builds the uniform mesh with `n_sub` subdivisions per side.
    ///
    /// Rejects `n_sub < 2` (the mesh would have no interior node).
    pub fn build(dim: usize, n_sub: usize) -> Result<Self> {
        if n_sub < 2 {
            return Err(Error::MeshTooCoarse(n_sub));
        }
        match dim {
            1 => Ok(Self::build_1d(n_sub)),
            2 => Ok(Self::build_2d(n_sub)),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    fn build_1d(n_sub: usize) -> Self {
        let h = 1.0 / n_sub as f64;
        let vertices: Vec<[f64; 2]> = (0..=n_sub).map(|i| [i as f64 * h, 0.0]).collect();
        let cells: Vec<[usize; 3]> = (0..n_sub).map(|i| [i, i + 1, i + 1]).collect();
        let mut boundary = vec![false; vertices.len()];
        boundary[0] = true;
        boundary[n_sub] = true;
        Mesh {
            dim: 1,
            n_sub,
            vertices,
            cells,
            boundary,
            h,
        }
    }

    fn build_2d(n_sub: usize) -> Self {
        let n = n_sub;
        let hx = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * hx, j as f64 * hx]);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v01 = idx(i, j + 1);
                let v11 = idx(i + 1, j + 1);
                // diagonal v00 -> v11, counter-clockwise triangles
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }
        let boundary = vertices
            .iter()
            .map(|p| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0)
            .collect();
        Mesh {
            dim: 2,
            n_sub,
            vertices,
            cells,
            boundary,
            h: std::f64::consts::SQRT_2 * hx,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    /// Mesh size: the longest edge over all cells.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    /// Vertex indices of cell `c` (`dim+1` entries).
    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.dim + 1]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.boundary[v]).collect()
    }

    /// Measure of cell `c` (length in 1D, area in 2D). Uniform by construction.
    pub fn cell_measure(&self, _c: usize) -> f64 {
        let hx = 1.0 / self.n_sub as f64;
        match self.dim {
            1 => hx,
            _ => 0.5 * hx * hx,
        }
    }

    /// Constant gradients of the P1 basis functions on cell `c`, one per
    /// cell vertex, in the same order as [`Mesh::cell`].
    pub fn cell_gradients(&self, c: usize) -> [[f64; 2]; 3] {
        let nodes = self.cell(c);
        if self.dim == 1 {
            let x0 = self.vertices[nodes[0]][0];
            let x1 = self.vertices[nodes[1]][0];
            let inv = 1.0 / (x1 - x0);
            [[-inv, 0.0], [inv, 0.0], [0.0, 0.0]]
        } else {
            let p: Vec<[f64; 2]> = nodes.iter().map(|&v| self.vertices[v]).collect();
            let two_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let s = 1.0 / two_area;
            [
                [(p[1][1] - p[2][1]) * s, (p[2][0] - p[1][0]) * s],
                [(p[2][1] - p[0][1]) * s, (p[0][0] - p[2][0]) * s],
                [(p[0][1] - p[1][1]) * s, (p[1][0] - p[0][0]) * s],
            ]
        }
    }

    /// Physical coordinates of the barycentric point `bary` in cell `c`.
    pub fn point_in_cell(&self, c: usize, bary: &[f64; 3]) -> [f64; 2] {
        let nodes = self.cell(c);
        let mut p = [0.0; 2];
        for (k, &v) in nodes.iter().enumerate() {
            p[0] += bary[k] * self.vertices[v][0];
            p[1] += bary[k] * self.vertices[v][1];
        }
        p
    }

    /// Locates the cell containing `point` by index arithmetic on the
    /// uniform grid and returns `(cell, barycentric coordinates)`.
    ///
    /// Points up to `1e-12` outside the closed domain are clamped; anything
    /// farther out is rejected.
    pub fn locate(&self, point: &[f64]) -> Result<(usize, [f64; 3])> {
        if point.len() < self.dim {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, mesh is {}D",
                point.len(),
                self.dim
            )));
        }
        let mut coords = [0.0f64; 2];
        for d in 0..self.dim {
            let x = point[d];
            if !(-LOCATE_TOL..=1.0 + LOCATE_TOL).contains(&x) {
                return Err(Error::PointOutsideDomain {
                    point: point[..self.dim].to_vec(),
                });
            }
            coords[d] = x.clamp(0.0, 1.0);
        }
        let n = self.n_sub as f64;
        if self.dim == 1 {
            let i = ((coords[0] * n) as usize).min(self.n_sub - 1);
            let t = coords[0] * n - i as f64;
            Ok((i, [1.0 - t, t, 0.0]))
        } else {
            let i = ((coords[0] * n) as usize).min(self.n_sub - 1);
            let j = ((coords[1] * n) as usize).min(self.n_sub - 1);
            let xi = coords[0] * n - i as f64;
            let eta = coords[1] * n - j as f64;
            let square = 2 * (j * self.n_sub + i);
            if xi >= eta {
                // lower triangle (v00, v10, v11)
                Ok((square, [1.0 - xi, xi - eta, eta]))
            } else {
                // upper triangle (v00, v11, v01)
                Ok((square + 1, [1.0 - eta, xi, eta - xi]))
            }
        }
    }

    /// Plain-text dump (vertex list followed by cell list) for debugging.
    pub fn to_plain_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dim {}\nn_sub {}\n", self.dim, self.n_sub));
        out.push_str(&format!("vertices {}\n", self.n_vertices()));
        for v in &self.vertices {
            if self.dim == 1 {
                out.push_str(&format!("{:.17e}\n", v[0]));
            } else {
                out.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
            }
        }
        out.push_str(&format!("cells {}\n", self.n_cells()));
        for c in 0..self.n_cells() {
            let nodes = self.cell(c);
            let line: Vec<String> = nodes.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_1d_64() {
        let mesh = Mesh::build(1, 64).unwrap();
        assert_eq!(mesh.n_vertices(), 65);
        assert_eq!(mesh.n_cells(), 64);
        assert_eq!(mesh.h(), 1.5625e-2);
        assert_eq!(mesh.boundary_nodes(), vec![0, 64]);
    }

    #[test]
    fn mesh_2d_10() {
        let mesh = Mesh::build(2, 10).unwrap();
        assert_eq!(mesh.n_vertices(), 121);
        assert_eq!(mesh.n_cells(), 200);
        assert!((mesh.h() - std::f64::consts::SQRT_2 / 10.0).abs() < 1e-15);
        // every boundary node has a coordinate in {0, 1}
        for v in 0..mesh.n_vertices() {
            let p = mesh.vertex(v);
            let on_edge = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(mesh.is_boundary(v), on_edge);
        }
        assert_eq!(mesh.boundary_nodes().len(), 40);
    }

    #[test]
    fn mesh_smallest_legal() {
        let mesh = Mesh::build(1, 2).unwrap();
        let xs: Vec<f64> = (0..mesh.n_vertices()).map(|v| mesh.vertex(v)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert_eq!(mesh.boundary_nodes(), vec![0, 2]);
    }

    #[test]
    fn mesh_rejects_too_coarse() {
        assert!(Mesh::build(1, 1).is_err());
        assert!(Mesh::build(2, 0).is_err());
        assert!(Mesh::build(3, 4).is_err());
    }

    #[test]
    fn mesh_is_deterministic() {
        let a = Mesh::build(2, 7).unwrap();
        let b = Mesh::build(2, 7).unwrap();
        assert_eq!(a.to_plain_text(), b.to_plain_text());
    }

    #[test]
    fn cell_measures_sum_to_domain_measure() {
        for (dim, n) in [(1, 5), (1, 64), (2, 4), (2, 11)] {
            let mesh = Mesh::build(dim, n).unwrap();
            let total: f64 = (0..mesh.n_cells()).map(|c| mesh.cell_measure(c)).sum();
            assert!((total - 1.0).abs() <= 1e-13, "dim={dim} n={n} total={total}");
        }
    }

    #[test]
    fn locate_rejects_outside_points() {
        let mesh = Mesh::build(2, 4).unwrap();
        assert!(mesh.locate(&[0.5, 1.0 + 1e-9]).is_err());
        assert!(mesh.locate(&[-1e-9, 0.5]).is_err());
        // within tolerance is clamped
        assert!(mesh.locate(&[1.0 + 1e-13, 0.5]).is_ok());
    }

    #[test]
    fn locate_picks_containing_triangle() {
        let mesh = Mesh::build(2, 4).unwrap();
        for &(x, y) in &[(0.1, 0.05), (0.05, 0.1), (0.9, 0.9), (0.5, 0.5)] {
            let (c, bary) = mesh.locate(&[x, y]).unwrap();
            let p = mesh.point_in_cell(c, &bary);
            assert!((p[0] - x).abs() < 1e-14 && (p[1] - y).abs() < 1e-14);
            assert!(bary.iter().all(|&l| l >= -1e-14));
        }
    }
}
