use std::sync::Arc;
use qrecon::coefficient::Field;
use qrecon::experiments::{generate_noisy_data, Coupling, ManufacturedCase};
use qrecon::fe::FeFunction;
use qrecon::inverse::{InverseProblem, OptimizerOptions};
use qrecon::mesh::Mesh;
use qrecon::{diff_norm, NormKind};
use std::f64::consts::PI;

fn main() {
    let case = ManufacturedCase::from_exact(
        "cubic", 1, 3,
        Field::with_gradient(|x| (PI * x[0]).sin(), |x| [PI * (PI * x[0]).cos(), 0.0]),
        |x| -PI * PI * (PI * x[0]).sin(),
        Field::new(|_| 1.0),
        (0.0, 2.0),
    );
    let coupling = Coupling { alpha_factor: 1e-2 };
    for msftol in [1e-5f64] {
        for n in [64usize, 128, 256] {
            let mesh = Arc::new(Mesh::build(1, n).unwrap());
            let (delta, alpha) = coupling.parameters(mesh.h());
            let y = generate_noisy_data(&case, &mesh, delta, 3).unwrap();
            let ip = InverseProblem::new(&case.forward_problem(mesh.clone()), y, alpha, 0.0, 2.0,
                Some(FeFunction::constant(mesh.clone(), 1.0))).unwrap();
            let opts = OptimizerOptions { misfit_ftol: msftol, ..Default::default() };
            let r = ip.minimize(&opts).unwrap();
            let e_q = diff_norm(&r.q_opt, &case.q_coefficient(), NormKind::L2).unwrap();
            let e_u = diff_norm(&r.u_opt, &case.u_coefficient(), NormKind::L2).unwrap();
            println!("msftol={msftol:.0e} n={n} its={} conv={} e_u={e_u:.3e} e_q={e_q:.3e}", r.iterations, r.converged);
        }
    }
}
