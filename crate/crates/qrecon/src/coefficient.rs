//! Scalar coefficients and diffusion tensors appearing in the equation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fe::FeFunction;
use crate::mesh::Mesh;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(&[f64]) -> [[f64; 2]; 2] + Send + Sync>;

/// A closed-form scalar field, optionally with its gradient.
#[derive(Clone)]
pub struct Field {
    pub value: ScalarFn,
    pub gradient: Option<GradientFn>,
}

impl Field {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Field {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Field {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        (self.value)(point)
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("gradient", &self.gradient.is_some())
            .finish()
    }
}

/// A scalar coefficient: constant, closed form, or a P1 function.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(f64),
    ClosedForm(Field),
    FiniteElement(FeFunction),
}

impl Coefficient {
    pub fn function(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::ClosedForm(Field::new(f))
    }

    /// Value at a barycentric point of `cell` on `mesh`. A finite element
    /// coefficient living on a different mesh is evaluated through point
    /// location on its own mesh.
    pub fn eval_in_cell(
        &self,
        mesh: &Arc<Mesh>,
        cell: usize,
        bary: &[f64; 3],
        point: &[f64; 2],
    ) -> Result<f64> {
        match self {
            Coefficient::Constant(c) => Ok(*c),
            Coefficient::ClosedForm(field) => Ok(field.eval(&point[..mesh.dim()])),
            Coefficient::FiniteElement(f) => {
                if Arc::ptr_eq(f.mesh(), mesh) {
                    Ok(f.value_in_cell(cell, bary))
                } else {
                    f.evaluate(&point[..mesh.dim()])
                }
            }
        }
    }

    pub fn eval_at_point(&self, point: &[f64]) -> Result<f64> {
        match self {
            Coefficient::Constant(c) => Ok(*c),
            Coefficient::ClosedForm(field) => Ok(field.eval(point)),
            Coefficient::FiniteElement(f) => f.evaluate(point),
        }
    }
}

/// The diffusion coefficient: scalar or a symmetric 2x2 tensor field.
/// In 1D only the `[0][0]` entry of a tensor is used.
#[derive(Clone)]
pub enum Diffusion {
    Scalar(Coefficient),
    Tensor(TensorFn),
}

impl Diffusion {
    pub fn constant(value: f64) -> Self {
        Diffusion::Scalar(Coefficient::Constant(value))
    }

    /// Applies the coefficient to a gradient vector at the given point.
    pub fn apply(
        &self,
        mesh: &Arc<Mesh>,
        cell: usize,
        bary: &[f64; 3],
        point: &[f64; 2],
        grad: &[f64; 2],
    ) -> Result<[f64; 2]> {
        match self {
            Diffusion::Scalar(c) => {
                let s = c.eval_in_cell(mesh, cell, bary, point)?;
                Ok([s * grad[0], s * grad[1]])
            }
            Diffusion::Tensor(t) => {
                let m = t(&point[..mesh.dim()]);
                Ok([
                    m[0][0] * grad[0] + m[0][1] * grad[1],
                    m[1][0] * grad[0] + m[1][1] * grad[1],
                ])
            }
        }
    }

    /// Smallest eigenvalue at a point, after a symmetry check for tensors.
    /// Used to verify ellipticity at quadrature points during assembly.
    pub fn smallest_eigenvalue(
        &self,
        mesh: &Arc<Mesh>,
        cell: usize,
        bary: &[f64; 3],
        point: &[f64; 2],
    ) -> Result<f64> {
        match self {
            Diffusion::Scalar(c) => c.eval_in_cell(mesh, cell, bary, point),
            Diffusion::Tensor(t) => {
                let m = t(&point[..mesh.dim()]);
                if mesh.dim() == 1 {
                    return Ok(m[0][0]);
                }
                if (m[0][1] - m[1][0]).abs() > 1e-12 * m[0][0].abs().max(m[1][1].abs()).max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "diffusion tensor not symmetric at {:?}",
                        &point[..mesh.dim()]
                    )));
                }
                let half_trace = 0.5 * (m[0][0] + m[1][1]);
                let disc = (0.5 * (m[0][0] - m[1][1])).powi(2) + m[0][1] * m[1][0];
                Ok(half_trace - disc.max(0.0).sqrt())
            }
        }
    }
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Scalar(c) => f.debug_tuple("Scalar").field(c).finish(),
            Diffusion::Tensor(_) => f.write_str("Tensor(..)"),
        }
    }
}
