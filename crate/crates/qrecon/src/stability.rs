//! Numerical probes of the analytical predictions: the boundary lower
//! bound of the state, the conditional stability quotient, and the
//! power-difference identity behind the monotonicity structure.

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::{diff_norm, fe_norm, NormKind};
use crate::coefficient::Coefficient;
use crate::error::{Error, Result};
use crate::experiments::ManufacturedCase;
use crate::fe::{FeFunction, Space};
use crate::forward::{ForwardOperator, ForwardProblem, SolverControls};
use crate::mesh::Mesh;
use std::f64::consts::PI;

/// One perturbation sample of the stability scan.
#[derive(Debug, Clone)]
pub struct StabilitySample {
    pub index: usize,
    pub amplitude: f64,
    pub q: FeFunction,
    /// `||u(q) - u(q_ref)||_{H1}` from fine-mesh solves.
    pub misfit_state: f64,
    pub misfit_coeff_l2: f64,
    /// Discrete H^{-1} surrogate of the coefficient misfit.
    pub misfit_coeff_hm1: f64,
    /// `misfit_coeff_l2 / misfit_state^exponent`.
    pub ratio: f64,
}

/// Summary of a stability scan against the theoretical exponent.
#[derive(Debug, Clone)]
pub struct ExponentFit {
    pub kappa_theory: f64,
    /// `1 / (1 + kappa)`, in `(0, 1]`.
    pub exponent_theory: f64,
    pub constant_fitted: f64,
    pub max_ratio: f64,
    pub n_samples: usize,
}

/// Distance to the boundary of the unit interval or unit square.
pub fn boundary_distance(dim: usize, x: &[f64]) -> f64 {
    match dim {
        1 => x[0].min(1.0 - x[0]),
        _ => x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1]),
    }
}

/// Decay exponent of the state near the boundary for strictly positive
/// sources: `2` in the linear case, `2 + 1/(m-1)` for higher odd powers.
pub fn boundary_decay_exponent(m: u32) -> f64 {
    if m == 1 {
        2.0
    } else {
        2.0 + 1.0 / (m as f64 - 1.0)
    }
}

/// Stability exponent data for sources bounded away from zero: the decay
/// rate enters as `kappa = (m + 1) * gamma` (the dual-exponent term
/// vanishes in the regimes probed here).
pub fn theoretical_kappa(m: u32) -> f64 {
    (m as f64 + 1.0) * boundary_decay_exponent(m)
}

/// Solves the state equation and checks the pointwise lower bound
/// `u_h(x) >= threshold * rho(x)^gamma` at all interior nodes. Returns the
/// check outcome and the smallest ratio `u_h(x) / rho(x)^gamma`.
///
/// The source must be bounded away from zero; this is verified at cell
/// midpoints before solving.
pub fn check_lower_bound(p: &ForwardProblem, gamma: f64, threshold: f64) -> Result<(bool, f64)> {
    let mid = if p.mesh.dim() == 1 {
        [0.5, 0.5, 0.0]
    } else {
        [1.0 / 3.0; 3]
    };
    for c in 0..p.mesh.n_cells() {
        let point = p.mesh.point_in_cell(c, &mid);
        let fv = p.f.eval_in_cell(&p.mesh, c, &mid, &point)?;
        if fv <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lower-bound check needs a strictly positive source, found {fv:.3e} at {:?}",
                &point[..p.mesh.dim()]
            )));
        }
    }
    let (u, _) = crate::forward::solve_forward(p, 1e-12, 50)?;
    let mut worst = f64::INFINITY;
    for v in 0..p.mesh.n_vertices() {
        if p.mesh.is_boundary(v) {
            continue;
        }
        let x = p.mesh.vertex(v);
        let rho = boundary_distance(p.mesh.dim(), &x[..p.mesh.dim()]);
        worst = worst.min(u.values()[v] / rho.powf(gamma));
    }
    Ok((worst >= threshold, worst))
}

/// Configuration of [`scan_stability`].
#[derive(Debug, Clone)]
pub struct ScanSetup {
    pub case: ManufacturedCase,
    /// Mesh carrying the coefficient samples.
    pub coarse_n_sub: usize,
    /// Smallest and largest perturbation amplitudes.
    pub amplitude_range: (f64, f64),
}

impl ScanSetup {
    pub fn new(case: ManufacturedCase) -> Self {
        ScanSetup {
            case,
            coarse_n_sub: 64,
            amplitude_range: (1e-2, 0.5),
        }
    }
}

/// Samples clipped low-frequency perturbations of the reference
/// coefficient, solves the states on a fine mesh, and reports the largest
/// stability quotient `||q - q_ref||_{L2} / ||u(q) - u(q_ref)||_{H1}^theta`
/// with the theoretical exponent `theta`.
///
/// Refuses to report when the smallest state misfit is within a factor 10
/// of the fine-mesh discretization error scale `h^2`.
pub fn scan_stability(
    setup: &ScanSetup,
    n_samples: usize,
    seed: u64,
    fine_n_sub: usize,
) -> Result<(ExponentFit, Vec<StabilitySample>)> {
    if n_samples < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples, got {n_samples}"
        )));
    }
    let case = &setup.case;
    let coarse = Arc::new(Mesh::build(case.dim, setup.coarse_n_sub)?);
    let fine = Arc::new(Mesh::build(case.dim, fine_n_sub)?);
    let operator = ForwardOperator::new(fine.clone(), &case.sigma(), &case.source_coefficient(), case.m)?;
    let controls = SolverControls::default();

    let q_val = case.q_exact.value.clone();
    let q_ref = FeFunction::interpolate(coarse.clone(), Space::Full, move |x| q_val(x));
    let (u_ref, _, _) = operator.solve(
        &Coefficient::FiniteElement(q_ref.clone()),
        &controls,
        None,
    )?;

    let kappa = theoretical_kappa(case.m);
    let exponent = 1.0 / (1.0 + kappa);
    let (a_lo, a_hi) = setup.amplitude_range;

    let samples: Vec<StabilitySample> = (0..n_samples)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let t = if n_samples == 1 { 0.0 } else { k as f64 / (n_samples - 1) as f64 };
            let amplitude = a_lo * (a_hi / a_lo).powf(t);
            let shape = random_smooth_shape(&coarse, case.dim, &mut rng);
            let mut values = q_ref.values().to_vec();
            for (v, s) in values.iter_mut().zip(&shape) {
                *v = (*v + amplitude * s).clamp(case.q_lower, case.q_upper);
            }
            let q = FeFunction::new(coarse.clone(), Space::Full, values).ok()?;
            let misfit_coeff_l2 =
                diff_norm(&q, &Coefficient::FiniteElement(q_ref.clone()), NormKind::L2).ok()?;
            if misfit_coeff_l2 == 0.0 {
                return None; // fully clipped perturbation carries no information
            }
            let (u, _, _) = operator
                .solve(&Coefficient::FiniteElement(q.clone()), &controls, Some(&u_ref))
                .ok()?;
            let du = FeFunction::new(
                fine.clone(),
                Space::ZeroTrace,
                u.values()
                    .iter()
                    .zip(u_ref.values())
                    .map(|(a, b)| a - b)
                    .collect(),
            )
            .ok()?;
            let misfit_state = fe_norm(&du, NormKind::H1).ok()?;
            let misfit_coeff_hm1 =
                diff_norm(&q, &Coefficient::FiniteElement(q_ref.clone()), NormKind::HMinus1Discrete)
                    .ok()?;
            let ratio = misfit_coeff_l2 / misfit_state.powf(exponent);
            Some(StabilitySample {
                index: k,
                amplitude,
                q,
                misfit_state,
                misfit_coeff_l2,
                misfit_coeff_hm1,
                ratio,
            })
        })
        .collect();

    let mut samples = samples;
    samples.sort_by_key(|s| s.index);

    let h_fine = fine.h();
    let min_state = samples
        .iter()
        .map(|s| s.misfit_state)
        .fold(f64::INFINITY, f64::min);
    if min_state < 10.0 * h_fine * h_fine {
        return Err(Error::FineMeshTooCoarse {
            misfit: min_state,
            bound: 10.0 * h_fine * h_fine,
        });
    }
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let fit = ExponentFit {
        kappa_theory: kappa,
        exponent_theory: exponent,
        constant_fitted: max_ratio,
        max_ratio,
        n_samples: samples.len(),
    };
    Ok((fit, samples))
}

/// Low-frequency sine combination with unit sup norm on the nodes.
fn random_smooth_shape(mesh: &Arc<Mesh>, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut values: Vec<f64> = (0..mesh.n_vertices())
        .map(|v| {
            let p = mesh.vertex(v);
            if dim == 1 {
                (1..=3)
                    .map(|j| c[j - 1] * (j as f64 * PI * p[0]).sin())
                    .sum()
            } else {
                let mut acc = 0.0;
                for j in 1..=2usize {
                    for k in 1..=2usize {
                        acc += c[2 * (j - 1) + (k - 1)]
                            * (j as f64 * PI * p[0]).sin()
                            * (k as f64 * PI * p[1]).sin();
                    }
                }
                acc
            }
        })
        .collect();
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        for v in values.iter_mut() {
            *v /= max;
        }
    }
    values
}

/// Checks the factorization `a^m - b^m = (sum_k a^k b^{m-1-k})(a - b)` and
/// the nonnegativity of the symmetric sum for odd `m` on random pairs.
pub fn verify_power_difference_identity(m: u32, trials: usize, seed: u64) -> bool {
    if m % 2 == 0 || m == 0 {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a: f64 = rng.gen_range(-10.0..10.0);
        let b: f64 = rng.gen_range(-10.0..10.0);
        let sum: f64 = (0..m)
            .map(|k| a.powi(k as i32) * b.powi((m - 1 - k) as i32))
            .sum();
        let scale = a.abs().max(b.abs()).powi(m as i32).max(1.0);
        if sum < -1e-12 * scale {
            return false;
        }
        let lhs = a.powi(m as i32) - b.powi(m as i32);
        if (lhs - sum * (a - b)).abs() > 1e-12 * scale {
            return false;
        }
    }
    true
}

/// CSV export of scan samples for external plotting.
pub fn samples_to_csv(samples: &[StabilitySample]) -> String {
    let mut out = String::from("sample,amplitude,misfit_state,misfit_coeff_l2,ratio\n");
    for s in samples {
        out.push_str(&format!(
            "{},{:.5e},{:.5e},{:.5e},{:.5e}\n",
            s.index, s.amplitude, s.misfit_state, s.misfit_coeff_l2, s.ratio
        ));
    }
    out
}
