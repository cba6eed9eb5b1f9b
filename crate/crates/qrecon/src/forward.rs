//! Newton solver for the discrete semilinear state equation
//! `a(u, v) + (q u^m, v) = (f, v)` on the zero-trace P1 space.
//!
//! The reaction exponent `m` is an odd natural number and `q >= 0`, so the
//! Newton systems `K + M_w` with `w = m q u^{m-1} >= 0` stay symmetric
//! positive definite after Dirichlet elimination. The linear case `m = 1`
//! reduces to a single solve.

use std::sync::Arc;

use crate::assembly::{
    assemble_load, assemble_reaction_jacobian, assemble_reaction_vector, assemble_stiffness,
};
use crate::coefficient::{Coefficient, Diffusion};
use crate::error::{Error, Result};
use crate::fe::{FeFunction, Space};
use crate::linsolve::{self, SpdSolver, DEFAULT_RELATIVE_TOL};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// The state equation data: geometry, diffusion, source, exponent, and
/// reaction coefficient.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub mesh: Arc<Mesh>,
    pub sigma: Diffusion,
    pub f: Coefficient,
    pub m: u32,
    pub q: Coefficient,
}

/// Iteration record of one nonlinear solve.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    /// Number of linear solves performed.
    pub iterations: usize,
    /// Relative residual after each accepted step, starting at the initial guess.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Stopping controls for the nonlinear solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverControls {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

const MAX_LINE_SEARCH_HALVINGS: usize = 30;

/// Solves the discrete state equation. See [`ForwardOperator::solve`] for
/// the reusable variant.
pub fn solve_forward(
    p: &ForwardProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(FeFunction, NewtonReport)> {
    let op = ForwardOperator::new(p.mesh.clone(), &p.sigma, &p.f, p.m)?;
    let (u, report, _) = op.solve(&p.q, &SolverControls { tol, max_iter }, None)?;
    Ok((u, report))
}

/// Solves the linearization `(K + M_w) z = rhs` about the state `u_lin`,
/// with `w = m q u_lin^{m-1}`, after Dirichlet elimination. The right-hand
/// side is a dual (load-type) vector; its boundary entries are zeroed.
pub fn solve_linearized(
    p: &ForwardProblem,
    u_lin: &FeFunction,
    rhs: &[f64],
) -> Result<FeFunction> {
    let op = ForwardOperator::new(p.mesh.clone(), &p.sigma, &p.f, p.m)?;
    let lin = op.linearized_at(&p.q, u_lin)?;
    let z = lin.solve_dual(rhs)?;
    FeFunction::new(p.mesh.clone(), Space::ZeroTrace, z)
}

/// Precomputed q-independent parts of the state equation, reusable across
/// many solves with different reaction coefficients.
#[derive(Debug)]
pub struct ForwardOperator {
    mesh: Arc<Mesh>,
    m: u32,
    stiffness: CsrMatrix,
    load: Vec<f64>,
    boundary: Vec<usize>,
}

/// An eliminated, factored linearized operator `K + M_w`.
#[derive(Debug)]
pub struct LinearizedOperator {
    matrix: CsrMatrix,
    solver: SpdSolver,
    boundary: Vec<usize>,
}

impl LinearizedOperator {
    /// Solves against a dual vector, zeroing its boundary entries first.
    pub fn solve_dual(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut b = rhs.to_vec();
        for &v in &self.boundary {
            b[v] = 0.0;
        }
        linsolve::solve_checked(&self.matrix, &self.solver, &b, DEFAULT_RELATIVE_TOL)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

impl ForwardOperator {
    pub fn new(mesh: Arc<Mesh>, sigma: &Diffusion, f: &Coefficient, m: u32) -> Result<Self> {
        if m % 2 == 0 || m == 0 {
            return Err(Error::EvenExponent(m));
        }
        let stiffness = assemble_stiffness(&mesh, sigma)?;
        let load = assemble_load(&mesh, f, 8)?;
        let boundary = mesh.boundary_nodes();
        Ok(ForwardOperator {
            mesh,
            m,
            stiffness,
            load,
            boundary,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn exponent(&self) -> u32 {
        self.m
    }

    /// Assembles and factors `K + M_w` at the linearization state.
    pub fn linearized_at(&self, q: &Coefficient, u_lin: &FeFunction) -> Result<LinearizedOperator> {
        let m_w = assemble_reaction_jacobian(&self.mesh, q, u_lin, self.m)?;
        let full = crate::assembly::add_matrices(&self.stiffness, &m_w);
        let zeros = vec![0.0; self.mesh.n_vertices()];
        let (elim, _) = full.apply_dirichlet(&zeros, &self.boundary)?;
        let solver = SpdSolver::new(&elim, DEFAULT_RELATIVE_TOL)?;
        Ok(LinearizedOperator {
            matrix: elim,
            solver,
            boundary: self.boundary.clone(),
        })
    }

    /// Runs the nonlinear solve and returns the state, the iteration
    /// report, and the linearized operator at the converged state (the
    /// exact adjoint system matrix).
    pub fn solve(
        &self,
        q: &Coefficient,
        controls: &SolverControls,
        initial: Option<&FeFunction>,
    ) -> Result<(FeFunction, NewtonReport, LinearizedOperator)> {
        let n = self.mesh.n_vertices();
        let mut rhs = self.load.clone();
        for &v in &self.boundary {
            rhs[v] = 0.0;
        }
        let scale = linsolve::norm2(&rhs).max(f64::MIN_POSITIVE);

        if self.m == 1 {
            let lin = self.linearized_at(q, &FeFunction::zeros(self.mesh.clone(), Space::ZeroTrace))?;
            let u = lin.solve_dual(&self.load)?;
            let residual = self.residual(q, &u, &rhs)?;
            let rel = linsolve::norm2(&residual) / scale;
            let report = NewtonReport {
                iterations: 1,
                residual_history: vec![1.0, rel],
                converged: rel <= controls.tol.max(1e-10),
            };
            let u_fn = FeFunction::new(self.mesh.clone(), Space::ZeroTrace, u)?;
            return Ok((u_fn, report, lin));
        }

        // initial guess: drop the reaction term unless a warm start is given
        let mut iterations = 0usize;
        let mut u: Vec<f64> = match initial {
            Some(w) => w.values().to_vec(),
            None => {
                let zeros = vec![0.0; n];
                let (ke, _) = self.stiffness.apply_dirichlet(&zeros, &self.boundary)?;
                iterations += 1;
                linsolve::solve_spd(&ke, &rhs, DEFAULT_RELATIVE_TOL)?
            }
        };
        for &v in &self.boundary {
            u[v] = 0.0;
        }

        let mut residual = self.residual(q, &u, &rhs)?;
        let mut res_norm = linsolve::norm2(&residual) / scale;
        let mut history = vec![res_norm];
        while res_norm > controls.tol {
            if iterations >= controls.max_iter {
                let report = NewtonReport {
                    iterations,
                    residual_history: history.clone(),
                    converged: false,
                };
                return Err(Error::NewtonDidNotConverge {
                    max_iter: controls.max_iter,
                    last_residual: res_norm,
                    report,
                });
            }
            let u_fn = FeFunction::new(self.mesh.clone(), Space::ZeroTrace, u.clone())?;
            let lin = self.linearized_at(q, &u_fn)?;
            let neg_res: Vec<f64> = residual.iter().map(|r| -r).collect();
            let delta = lin.solve_dual(&neg_res)?;
            iterations += 1;

            // backtracking on the residual norm keeps the iteration total
            let mut step = 1.0f64;
            let mut accepted = false;
            for _ in 0..=MAX_LINE_SEARCH_HALVINGS {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(&delta)
                    .map(|(ui, di)| ui + step * di)
                    .collect();
                let trial_res = self.residual(q, &trial, &rhs)?;
                let trial_norm = linsolve::norm2(&trial_res) / scale;
                if trial_norm <= (1.0 - 1e-4 * step) * res_norm {
                    u = trial;
                    residual = trial_res;
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                let report = NewtonReport {
                    iterations,
                    residual_history: history.clone(),
                    converged: false,
                };
                return Err(Error::NewtonDidNotConverge {
                    max_iter: controls.max_iter,
                    last_residual: res_norm,
                    report,
                });
            }
            history.push(res_norm);
        }

        let u_fn = FeFunction::new(self.mesh.clone(), Space::ZeroTrace, u)?;
        let lin = self.linearized_at(q, &u_fn)?;
        let report = NewtonReport {
            iterations,
            residual_history: history,
            converged: true,
        };
        Ok((u_fn, report, lin))
    }

    /// `R(u) = K u + N(q, u) - F` with boundary entries zeroed.
    fn residual(&self, q: &Coefficient, u: &[f64], rhs_elim: &[f64]) -> Result<Vec<f64>> {
        let u_fn = FeFunction::new(self.mesh.clone(), Space::ZeroTrace, u.to_vec())?;
        let reaction = assemble_reaction_vector(&self.mesh, q, &u_fn, self.m)?;
        let ku = self.stiffness.matvec(u);
        let mut r: Vec<f64> = (0..u.len())
            .map(|i| ku[i] + reaction[i] - rhs_elim[i])
            .collect();
        for &v in &self.boundary {
            r[v] = 0.0;
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, diff_norm, NormKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem_1d(n: usize, m: u32, q: Coefficient, f: Coefficient) -> ForwardProblem {
        ForwardProblem {
            mesh: Arc::new(Mesh::build(1, n).unwrap()),
            sigma: Diffusion::constant(1.0),
            f,
            m,
            q,
        }
    }

    #[test]
    fn zero_source_gives_zero_state_in_one_step() {
        for m in [1, 3] {
            let p = problem_1d(16, m, Coefficient::Constant(1.0), Coefficient::Constant(0.0));
            let (u, report) = solve_forward(&p, 1e-12, 50).unwrap();
            assert!(u.values().iter().all(|&v| v.abs() < 1e-14));
            assert!(report.converged);
            assert_eq!(report.iterations, 1);
        }
    }

    #[test]
    fn linear_case_is_a_single_solve() {
        let p = problem_1d(
            32,
            1,
            Coefficient::Constant(1.0),
            Coefficient::function(|x| (PI * x[0]).sin()),
        );
        let (u, report) = solve_forward(&p, 1e-12, 50).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
        for v in 0..p.mesh.n_vertices() {
            if p.mesh.is_boundary(v) {
                assert_eq!(u.values()[v], 0.0);
            }
        }
    }

    #[test]
    fn rejects_even_exponent() {
        let p = problem_1d(8, 2, Coefficient::Constant(1.0), Coefficient::Constant(1.0));
        assert!(matches!(
            solve_forward(&p, 1e-12, 50),
            Err(Error::EvenExponent(2))
        ));
    }

    #[test]
    fn rejects_negative_reaction_coefficient() {
        let p = problem_1d(8, 1, Coefficient::Constant(-0.5), Coefficient::Constant(1.0));
        assert!(matches!(
            solve_forward(&p, 1e-12, 50),
            Err(Error::NegativeCoefficient { .. })
        ));
    }

    #[test]
    fn manufactured_cubic_problem_converges_to_exact_solution() {
        // q = 1, u = sin(pi x), f = pi^2 sin(pi x) + sin(pi x)^3
        let f = Coefficient::function(|x| {
            let s = (PI * x[0]).sin();
            PI * PI * s + s * s * s
        });
        let p = problem_1d(64, 3, Coefficient::Constant(1.0), f);
        let (u, report) = solve_forward(&p, 1e-12, 50).unwrap();
        assert!(report.converged);
        let err = diff_norm(
            &u,
            &Coefficient::function(|x| (PI * x[0]).sin()),
            NormKind::L2,
        )
        .unwrap();
        assert!(err < 1e-3, "L2 error {err}");
        // accepted residuals decrease strictly
        for w in report.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn linearized_solve_in_linear_case_ignores_state() {
        let mesh = Arc::new(Mesh::build(1, 16).unwrap());
        let p = ForwardProblem {
            mesh: mesh.clone(),
            sigma: Diffusion::constant(1.0),
            f: Coefficient::Constant(1.0),
            m: 1,
            q: Coefficient::Constant(0.7),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rhs: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = FeFunction::interpolate(mesh.clone(), Space::ZeroTrace, |x| x[0] * (1.0 - x[0]));
        let b = FeFunction::interpolate(mesh.clone(), Space::ZeroTrace, |x| (PI * x[0]).sin());
        let za = solve_linearized(&p, &a, &rhs).unwrap();
        let zb = solve_linearized(&p, &b, &rhs).unwrap();
        for (x, y) in za.values().iter().zip(zb.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn linearized_solve_of_zero_is_zero() {
        let p = problem_1d(8, 3, Coefficient::Constant(1.0), Coefficient::Constant(1.0));
        let u_lin = FeFunction::interpolate(p.mesh.clone(), Space::ZeroTrace, |x| {
            x[0] * (1.0 - x[0])
        });
        let z = solve_linearized(&p, &u_lin, &vec![0.0; p.mesh.n_vertices()]).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linearized_solve_is_self_adjoint_in_the_mass_pairing() {
        let mesh = Arc::new(Mesh::build(1, 24).unwrap());
        let p = ForwardProblem {
            mesh: mesh.clone(),
            sigma: Diffusion::constant(1.0),
            f: Coefficient::Constant(1.0),
            m: 3,
            q: Coefficient::Constant(1.3),
        };
        let u_lin = FeFunction::interpolate(mesh.clone(), Space::ZeroTrace, |x| (PI * x[0]).sin());
        let mass = assemble_mass(&mesh, &Coefficient::Constant(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ta = solve_linearized(&p, &u_lin, &mass.matvec(&a)).unwrap();
            let tb = solve_linearized(&p, &u_lin, &mass.matvec(&b)).unwrap();
            let lhs = linsolve::dot(ta.values(), &mass.matvec(&b));
            let rhs = linsolve::dot(&mass.matvec(&a), tb.values());
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-30),
                "{lhs} vs {rhs}"
            );
        }
    }
}
