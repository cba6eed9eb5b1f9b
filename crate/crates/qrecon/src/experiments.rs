//! Manufactured problems, calibrated noise, refinement studies, and
//! table/plot emission.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::{assemble_mass, diff_norm, NormKind};
use crate::coefficient::{Coefficient, Diffusion, Field};
use crate::error::{Error, Result};
use crate::fe::{FeFunction, Space};
use crate::forward::ForwardProblem;
use crate::inverse::{InverseProblem, OptimizerOptions};
use crate::linsolve::dot;
use crate::mesh::Mesh;
use std::f64::consts::PI;

/// A problem with known exact solution pair `(u, q)` and the source term
/// derived from them, so errors can be measured directly.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub dim: usize,
    pub m: u32,
    pub u_exact: Field,
    pub q_exact: Field,
    pub source: Field,
    pub q_lower: f64,
    pub q_upper: f64,
}

impl ManufacturedCase {
    pub fn sigma(&self) -> Diffusion {
        Diffusion::constant(1.0)
    }

    pub fn source_coefficient(&self) -> Coefficient {
        Coefficient::ClosedForm(self.source.clone())
    }

    pub fn u_coefficient(&self) -> Coefficient {
        Coefficient::ClosedForm(self.u_exact.clone())
    }

    pub fn q_coefficient(&self) -> Coefficient {
        Coefficient::ClosedForm(self.q_exact.clone())
    }

    pub fn forward_problem(&self, mesh: Arc<Mesh>) -> ForwardProblem {
        ForwardProblem {
            mesh,
            sigma: self.sigma(),
            f: self.source_coefficient(),
            m: self.m,
            q: self.q_coefficient(),
        }
    }

    /// Builds a case from an exact pair: the source is derived as
    /// `f = -lap_u + q u^m` from the caller-supplied Laplacian.
    pub fn from_exact(
        name: &str,
        dim: usize,
        m: u32,
        u_exact: Field,
        laplacian_u: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        q_exact: Field,
        bounds: (f64, f64),
    ) -> Self {
        let u_val = u_exact.value.clone();
        let q_val = q_exact.value.clone();
        let source = Field::new(move |x| {
            let u = u_val(x);
            -laplacian_u(x) + q_val(x) * u.powi(m as i32)
        });
        ManufacturedCase {
            name: name.to_string(),
            dim,
            m,
            u_exact,
            q_exact,
            source,
            q_lower: bounds.0,
            q_upper: bounds.1,
        }
    }
}

/// The two benchmark scenarios on the unit interval and unit square
/// (`m = 1`, unit diffusion, box `[0, 2]`).
pub fn make_case(name: &str) -> Result<ManufacturedCase> {
    make_case_with_exponent(name, 1)
}

/// Benchmark geometry with a different (odd) reaction exponent; the source
/// term is rederived so the exact pair is unchanged.
pub fn make_case_with_exponent(name: &str, m: u32) -> Result<ManufacturedCase> {
    if m % 2 == 0 || m == 0 {
        return Err(Error::EvenExponent(m));
    }
    match name {
        "a" => {
            let u = Field::with_gradient(
                |x| (PI * x[0]).sin(),
                |x| [PI * (PI * x[0]).cos(), 0.0],
            );
            let q = Field::new(|x| 1.5 - (x[0] - 0.5).abs());
            Ok(ManufacturedCase::from_exact(
                "a",
                1,
                m,
                u,
                |x| -PI * PI * (PI * x[0]).sin(),
                q,
                (0.0, 2.0),
            ))
        }
        "b" => {
            let u = Field::with_gradient(
                |x| (PI * x[0]).sin() * (PI * x[1]).sin(),
                |x| {
                    [
                        PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                        PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    ]
                },
            );
            let q = Field::new(|x| {
                1.0 + 0.5 * (1.0 - 2.0 * (x[0] - 0.5).abs().max((x[1] - 0.5).abs()))
            });
            Ok(ManufacturedCase::from_exact(
                "b",
                2,
                m,
                u,
                |x| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
                q,
                (0.0, 2.0),
            ))
        }
        other => Err(Error::UnknownCase(other.to_string())),
    }
}

/// Noisy observations: the nodal interpolant of the exact state plus an
/// i.i.d. uniform perturbation on `[-1, 1]`, rescaled so the discrete L2
/// distance to the interpolant equals `delta` exactly. Seeded and
/// bit-reproducible.
pub fn generate_noisy_data(
    case: &ManufacturedCase,
    mesh: &Arc<Mesh>,
    delta: f64,
    seed: u64,
) -> Result<FeFunction> {
    let u_val = case.u_exact.value.clone();
    let base = FeFunction::interpolate(mesh.clone(), Space::Full, move |x| u_val(x));
    if delta == 0.0 {
        return Ok(base);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: Vec<f64> = (0..mesh.n_vertices())
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let mass = assemble_mass(mesh, &Coefficient::Constant(1.0))?;
    let xi_norm = dot(&xi, &mass.matvec(&xi)).sqrt();
    let s = delta / xi_norm;
    let values: Vec<f64> = base
        .values()
        .iter()
        .zip(&xi)
        .map(|(b, x)| b + s * x)
        .collect();
    FeFunction::new(mesh.clone(), Space::Full, values)
}

/// `delta = h^2` and `alpha = alpha_factor * delta^2`.
#[derive(Debug, Clone, Copy)]
pub struct Coupling {
    pub alpha_factor: f64,
}

impl Coupling {
    pub fn for_case(name: &str) -> Result<Self> {
        match name {
            "a" => Ok(Coupling { alpha_factor: 1e-2 }),
            "b" => Ok(Coupling { alpha_factor: 5.0 }),
            other => Err(Error::UnknownCase(other.to_string())),
        }
    }

    pub fn parameters(&self, h: f64) -> (f64, f64) {
        let delta = h * h;
        (delta, self.alpha_factor * delta * delta)
    }
}

/// One aggregated row of a refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub h: f64,
    pub delta: f64,
    pub alpha: f64,
    /// Median state error over seeds.
    pub e_u: f64,
    /// Median coefficient error over seeds.
    pub e_q: f64,
    pub eoc_u: Option<f64>,
    pub eoc_q: Option<f64>,
    pub seed_count: usize,
    /// Total reconstruction wall time over seeds, in seconds. Zero when
    /// timing is disabled for reproducible artifacts.
    pub wall_time: f64,
    pub optimizer_iterations: usize,
    /// First failure message among the seeds, if any.
    pub error: Option<String>,
}

/// Study execution knobs.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub optimizer: OptimizerOptions,
    /// Record wall-clock times in the rows. Off by default so emitted
    /// artifacts are byte-reproducible.
    pub timing: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            optimizer: OptimizerOptions::default(),
            timing: false,
        }
    }
}

/// Experimental order of convergence between consecutive noise levels.
pub fn eoc(e_coarse: f64, e_fine: f64, delta_coarse: f64, delta_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (delta_coarse / delta_fine).ln()
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct SeedSample {
    e_u: f64,
    e_q: f64,
    iterations: usize,
    wall: f64,
    error: Option<String>,
}

fn reconstruct_one(
    case: &ManufacturedCase,
    n_sub: usize,
    delta: f64,
    alpha: f64,
    seed: u64,
    opts: &StudyOptions,
) -> Result<SeedSample> {
    let start = Instant::now();
    let mesh = Arc::new(Mesh::build(case.dim, n_sub)?);
    let y = generate_noisy_data(case, &mesh, delta, seed)?;
    let forward = case.forward_problem(mesh.clone());
    let ip = InverseProblem::new(
        &forward,
        y,
        alpha,
        case.q_lower,
        case.q_upper,
        Some(FeFunction::constant(mesh.clone(), 1.0)),
    )?;
    let result = ip.minimize(&opts.optimizer)?;
    let e_u = diff_norm(&result.u_opt, &case.u_coefficient(), NormKind::L2)?;
    let e_q = diff_norm(&result.q_opt, &case.q_coefficient(), NormKind::L2)?;
    Ok(SeedSample {
        e_u,
        e_q,
        iterations: result.iterations,
        wall: start.elapsed().as_secs_f64(),
        error: None,
    })
}

/// Runs the full (mesh, seed) grid, aggregates seeds by the median, and
/// attaches orders of convergence between consecutive rows. Row failures
/// are recorded in the row; the study continues.
pub fn run_study(
    case: &ManufacturedCase,
    n_subs: &[usize],
    coupling: Coupling,
    seeds: &[u64],
    opts: &StudyOptions,
) -> Vec<StudyRecord> {
    let tasks: Vec<(usize, u64)> = n_subs
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let samples: Vec<((usize, u64), SeedSample)> = tasks
        .par_iter()
        .map(|&(n_sub, seed)| {
            let h = mesh_size(case.dim, n_sub);
            let (delta, alpha) = coupling.parameters(h);
            let sample = reconstruct_one(case, n_sub, delta, alpha, seed, opts)
                .unwrap_or_else(|e| SeedSample {
                    e_u: f64::NAN,
                    e_q: f64::NAN,
                    iterations: 0,
                    wall: 0.0,
                    error: Some(e.to_string()),
                });
            ((n_sub, seed), sample)
        })
        .collect();

    let mut records = Vec::with_capacity(n_subs.len());
    for &n_sub in n_subs {
        let h = mesh_size(case.dim, n_sub);
        let (delta, alpha) = coupling.parameters(h);
        let row: Vec<&SeedSample> = samples
            .iter()
            .filter(|((n, _), _)| *n == n_sub)
            .map(|(_, s)| s)
            .collect();
        let mut eu: Vec<f64> = row.iter().filter(|s| s.error.is_none()).map(|s| s.e_u).collect();
        let mut eq: Vec<f64> = row.iter().filter(|s| s.error.is_none()).map(|s| s.e_q).collect();
        let mut its: Vec<f64> = row
            .iter()
            .filter(|s| s.error.is_none())
            .map(|s| s.iterations as f64)
            .collect();
        let wall: f64 = if opts.timing { row.iter().map(|s| s.wall).sum() } else { 0.0 };
        let error = row.iter().find_map(|s| s.error.clone());
        records.push(StudyRecord {
            h,
            delta,
            alpha,
            e_u: median(&mut eu),
            e_q: median(&mut eq),
            eoc_u: None,
            eoc_q: None,
            seed_count: seeds.len(),
            wall_time: wall,
            optimizer_iterations: median(&mut its).round() as usize,
            error,
        });
    }
    for k in 1..records.len() {
        let (prev, cur) = (records[k - 1].clone(), &mut records[k]);
        cur.eoc_u = Some(eoc(prev.e_u, cur.e_u, prev.delta, cur.delta));
        cur.eoc_q = Some(eoc(prev.e_q, cur.e_q, prev.delta, cur.delta));
    }
    records
}

pub fn mesh_size(dim: usize, n_sub: usize) -> f64 {
    match dim {
        1 => 1.0 / n_sub as f64,
        _ => std::f64::consts::SQRT_2 / n_sub as f64,
    }
}

/// Output formats for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    SvgPlot,
    TextTable,
}

fn fmt6(x: f64) -> String {
    format!("{x:.5e}")
}

/// Renders the CSV artifact: one header line, fixed column order, comma
/// separator, 6 significant digits.
pub fn render_csv(records: &[StudyRecord]) -> String {
    let mut out = String::from("h,delta,alpha,e_u,eoc_u,e_q,eoc_q,seed_count,wall_time\n");
    for r in records {
        let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt6(r.h),
            fmt6(r.delta),
            fmt6(r.alpha),
            fmt6(r.e_u),
            opt(r.eoc_u),
            fmt6(r.e_q),
            opt(r.eoc_q),
            r.seed_count,
            fmt6(r.wall_time),
        ));
    }
    out
}

/// Parses a CSV produced by [`render_csv`] back into records.
pub fn parse_csv(text: &str) -> Result<Vec<StudyRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
    if header != "h,delta,alpha,e_u,eoc_u,e_q,eoc_q,seed_count,wall_time" {
        return Err(Error::InvalidArgument(format!("unexpected CSV header: {header}")));
    }
    let mut records = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected 9 fields, got {}",
                ln + 2,
                parts.len()
            )));
        }
        let f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 2)))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { f(s).map(Some) }
        };
        records.push(StudyRecord {
            h: f(parts[0])?,
            delta: f(parts[1])?,
            alpha: f(parts[2])?,
            e_u: f(parts[3])?,
            eoc_u: opt(parts[4])?,
            e_q: f(parts[5])?,
            eoc_q: opt(parts[6])?,
            seed_count: parts[7]
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 2)))?,
            wall_time: f(parts[8])?,
            optimizer_iterations: 0,
            error: None,
        });
    }
    Ok(records)
}

/// Renders a fixed-width table in the layout of the benchmark tables.
pub fn render_text_table(records: &[StudyRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<12} {:<12} {:<8} {:<12} {:<8}\n",
        "h", "delta", "e_u", "EOC_u", "e_q", "EOC_q"
    ));
    for r in records {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "--".into());
        out.push_str(&format!(
            "{:<12} {:<12} {:<12} {:<8} {:<12} {:<8}\n",
            fmt6(r.h),
            fmt6(r.delta),
            fmt6(r.e_u),
            opt(r.eoc_u),
            fmt6(r.e_q),
            opt(r.eoc_q),
        ));
    }
    out
}

/// Log-log SVG plot of both errors against the noise level, with dashed
/// reference slopes 1 and 1/2.
pub fn render_svg(records: &[StudyRecord]) -> String {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let finite: Vec<&StudyRecord> = records
        .iter()
        .filter(|r| r.delta > 0.0 && r.e_u > 0.0 && r.e_q > 0.0)
        .collect();
    let xs: Vec<f64> = finite.iter().map(|r| r.delta.log10()).collect();
    let ys: Vec<f64> = finite
        .iter()
        .flat_map(|r| [r.e_u.log10(), r.e_q.log10()])
        .collect();
    let (xmin, xmax) = bounds(&xs);
    let (ymin, ymax) = bounds(&ys);
    let px = |x: f64| ml + (x - xmin) / (xmax - xmin).max(1e-12) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - ymin) / (ymax - ymin).max(1e-12) * (h - mt - mb);
    let polyline = |pts: &[(f64, f64)], color: &str, dashed: bool| {
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6,4\"" } else { "" };
        format!(
            "  <polyline fill=\"none\" stroke=\"{}\"{} stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            dash,
            coords.join(" ")
        )
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "  <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    let eu_pts: Vec<(f64, f64)> = finite.iter().map(|r| (r.delta.log10(), r.e_u.log10())).collect();
    let eq_pts: Vec<(f64, f64)> = finite.iter().map(|r| (r.delta.log10(), r.e_q.log10())).collect();
    svg.push_str(&polyline(&eu_pts, "#1f77b4", false));
    svg.push_str(&polyline(&eq_pts, "#d62728", false));
    if let (Some(&(x0, yu0)), Some(&(_, yq0))) = (eu_pts.first(), eq_pts.first()) {
        // reference slopes anchored at the coarsest row
        let ref1: Vec<(f64, f64)> = xs.iter().map(|&x| (x, yu0 + (x - x0))).collect();
        let ref_half: Vec<(f64, f64)> = xs.iter().map(|&x| (x, yq0 + 0.5 * (x - x0))).collect();
        svg.push_str(&polyline(&ref1, "#1f77b4", true));
        svg.push_str(&polyline(&ref_half, "#d62728", true));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"13\">log10 delta</text>\n",
        0.5 * w - 30.0,
        h - 12.0
    ));
    for (label, color, y) in [("e_u (slope 1)", "#1f77b4", 36.0), ("e_q (slope 1/2)", "#d62728", 54.0)] {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{y}\" font-size=\"13\" fill=\"{color}\">{label}</text>\n",
            w - 180.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Writes the report atomically: the content goes to a temporary sibling
/// file that is renamed onto the target only after a complete write.
pub fn emit_report(records: &[StudyRecord], format: ReportFormat, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to report".into()));
    }
    let content = match format {
        ReportFormat::Csv => render_csv(records),
        ReportFormat::SvgPlot => render_svg(records),
        ReportFormat::TextTable => render_text_table(records),
    };
    write_atomic(path, content.as_bytes())
}

/// Temp-file-and-rename write; no partial artifact is left on failure.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
