//! Nodal P1 finite element functions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Which space a nodal vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// The full P1 space: one free value per mesh vertex.
    Full,
    /// The zero-trace subspace: values at boundary vertices are pinned to 0.
    ZeroTrace,
}

/// A piecewise linear function given by one value per mesh vertex.
#[derive(Debug, Clone)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    space: Space,
    values: Vec<f64>,
}

impl FeFunction {
    /// Wraps a nodal vector. For [`Space::ZeroTrace`] the boundary entries
    /// are forced to exactly 0.
    pub fn new(mesh: Arc<Mesh>, space: Space, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "nodal vector has {} entries, mesh has {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if space == Space::ZeroTrace {
            for (v, val) in values.iter_mut().enumerate() {
                if mesh.is_boundary(v) {
                    *val = 0.0;
                }
            }
        }
        Ok(FeFunction { mesh, space, values })
    }

    pub fn zeros(mesh: Arc<Mesh>, space: Space) -> Self {
        let n = mesh.n_vertices();
        FeFunction {
            mesh,
            space,
            values: vec![0.0; n],
        }
    }

    pub fn constant(mesh: Arc<Mesh>, value: f64) -> Self {
        let n = mesh.n_vertices();
        FeFunction {
            mesh,
            space: Space::Full,
            values: vec![value; n],
        }
    }

    /// Nodal interpolant of a closed-form function.
    pub fn interpolate(mesh: Arc<Mesh>, space: Space, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values: Vec<f64> = (0..mesh.n_vertices())
            .map(|v| {
                let p = mesh.vertex(v);
                f(&p[..mesh.dim()])
            })
            .collect();
        if space == Space::ZeroTrace {
            for (v, val) in values.iter_mut().enumerate() {
                if mesh.is_boundary(v) {
                    *val = 0.0;
                }
            }
        }
        FeFunction { mesh, space, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Evaluates the function at a point of the closed domain by linear
    /// interpolation on the containing cell.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        let (cell, bary) = self.mesh.locate(point)?;
        let nodes = self.mesh.cell(cell);
        Ok(nodes
            .iter()
            .enumerate()
            .map(|(k, &v)| bary[k] * self.values[v])
            .sum())
    }

    /// Value at the barycentric point `bary` of `cell`.
    pub fn value_in_cell(&self, cell: usize, bary: &[f64; 3]) -> f64 {
        let nodes = self.mesh.cell(cell);
        nodes
            .iter()
            .enumerate()
            .map(|(k, &v)| bary[k] * self.values[v])
            .sum()
    }

    /// Constant gradient on `cell`.
    pub fn gradient_in_cell(&self, cell: usize) -> [f64; 2] {
        let nodes = self.mesh.cell(cell);
        let grads = self.mesh.cell_gradients(cell);
        let mut g = [0.0; 2];
        for (k, &v) in nodes.iter().enumerate() {
            g[0] += self.values[v] * grads[k][0];
            g[1] += self.values[v] * grads[k][1];
        }
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
