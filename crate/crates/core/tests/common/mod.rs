//! Invariant predicates shared by the property suites and the acceptance
//! harness. Each returns `Err` with a description when the invariant fails.

#![allow(dead_code)]

use std::sync::Arc;

use peaklab::analysis::{adams_check, concentration_report_for, fit_model};
use peaklab::green::{compute_green, compute_tilde_green, constants};
use peaklab::leastenergy::{rescale_to_solution, solve_fixed_point, NonlinearOptions};
use peaklab::{apply_laplacian, build_grid, solve_poisson, DomainSpec, Field, Grid, LinearSolveOptions};
use proptest::prelude::*;

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Small domains of every supported kind.
#[derive(Debug, Clone)]
pub struct DomainCase {
    pub kind: u8,
    pub dim: usize,
    pub shape: Vec<f64>,
    pub h: f64,
}

impl DomainCase {
    pub fn grid(&self) -> Arc<Grid<f64>> {
        let spec = match self.kind {
            0 => DomainSpec::ball(self.dim, self.shape[0]).unwrap(),
            1 => DomainSpec::ellipsoid(self.shape.clone()).unwrap(),
            _ => DomainSpec::cuboid(self.shape.iter().map(|s| 2.0 * s).collect(), vec![0.0; self.dim]).unwrap(),
        };
        build_grid(spec, self.h).unwrap()
    }
}

pub fn domain_case() -> impl Strategy<Value = DomainCase> {
    (0u8..3, 3usize..5).prop_flat_map(|(kind, dim)| {
        let h = if dim == 3 { 0.15..0.3 } else { 0.22..0.35 };
        (Just(kind), Just(dim), prop::collection::vec(0.8..1.3f64, dim), h)
            .prop_map(|(kind, dim, shape, h)| DomainCase { kind, dim, shape, h })
    })
}

/// Deterministic pseudo-random nodal values in `[-1, 1]` from a seed.
pub fn nodal_field(grid: &Arc<Grid<f64>>, seed: u64) -> Field<f64> {
    let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
    let vals = (0..grid.len())
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Field::from_values(grid, vals).unwrap()
}

pub fn tight() -> LinearSolveOptions {
    LinearSolveOptions {
        rel_tolerance: 1e-12,
        ..Default::default()
    }
}

/// `int a (-Delta b) = int b (-Delta a)`.
pub fn self_adjoint(case: &DomainCase, seed: u64) -> Check {
    let g = case.grid();
    let a = nodal_field(&g, seed);
    let b = nodal_field(&g, seed.wrapping_add(1));
    let ab = a.inner(&apply_laplacian(&b)).unwrap();
    let ba = b.inner(&apply_laplacian(&a)).unwrap();
    let scale = a.l2_norm() * apply_laplacian(&b).l2_norm();
    ensure((ab - ba).abs() <= 1e-12 * scale, || format!("{ab} vs {ba}"))
}

/// `solve_poisson(apply_laplacian(u)) = u` within `10 rel_tolerance`.
pub fn solve_inverts_apply(case: &DomainCase, seed: u64) -> Check {
    let g = case.grid();
    let u = nodal_field(&g, seed);
    let opts = tight();
    let back = solve_poisson(&apply_laplacian(&u), &opts).map_err(|e| e.to_string())?;
    let err = back.zip_map(&u, |a, b| a - b).unwrap().l2_norm() / u.l2_norm();
    ensure(err <= 10.0 * opts.rel_tolerance, || format!("relative error {err:e}"))
}

/// `rhs1 >= rhs2` implies `solve(rhs1) >= solve(rhs2)`.
pub fn monotone_solve(case: &DomainCase, seed: u64) -> Check {
    let g = case.grid();
    let r2 = nodal_field(&g, seed);
    let bump = nodal_field(&g, seed.wrapping_add(7)).map(|x| x.abs());
    let r1 = r2.zip_map(&bump, |a, b| a + b).unwrap();
    let opts = tight();
    let s1 = solve_poisson(&r1, &opts).map_err(|e| e.to_string())?;
    let s2 = solve_poisson(&r2, &opts).map_err(|e| e.to_string())?;
    let floor = 1e-10 * s1.sup_norm().max(s2.sup_norm());
    let worst = s1
        .values()
        .iter()
        .zip(s2.values())
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(worst <= floor, || format!("ordering violated by {worst:e}"))
}

/// Positivity, energy identity and idempotent rescaling of a solved pair.
pub fn solution_invariants(case: &DomainCase, p: f64) -> Check {
    let g = case.grid();
    let pair = solve_fixed_point(&g, p, None, &NonlinearOptions::default()).map_err(|e| e.to_string())?;
    ensure(pair.accepted(1e-5), || format!("residual {:e}", pair.max_residual()))?;
    ensure(pair.u.min() > 0.0 && pair.v.min() > 0.0, || "non-positive node".into())?;
    let r = pair.energy_report();
    ensure(r.identity_defect() <= 1e-5, || format!("identity defect {:e}", r.identity_defect()))?;
    let again = rescale_to_solution(&pair.u, r.c_p, p).map_err(|e| e.to_string())?;
    ensure((again.scale - 1.0).abs() <= 1e-12, || format!("second scale {}", again.scale))
}

/// `b0 C_N = N`.
pub fn constants_identity(dim: usize) -> Check {
    let c = constants::<f64>(dim).map_err(|e| e.to_string())?;
    let prod = c.b0 * c.log_c;
    ensure((prod - dim as f64).abs() <= 8.0 * f64::EPSILON * dim as f64, || format!("b0 C_N = {prod}"))
}

/// `-Delta_h (Phi + g)` concentrates on the source stencil, `G` and `G~`
/// are positive and `G` is small next to the boundary.
pub fn green_splitting(case: &DomainCase, offset: &[f64]) -> Check {
    let g = case.grid();
    let h = g.h();
    let dom = g.domain();
    let y: Vec<f64> = dom
        .center()
        .iter()
        .zip(offset)
        .zip(dom.half_widths())
        .map(|((c, o), w)| c + o * (w - 3.0 * h).max(0.0) * 0.5)
        .collect();
    let y: Vec<f64> = match g.nearest_node(&y) {
        Some(i) if dom.distance_to_boundary(&g.position(i)) >= 3.0 * h => g.position(i),
        _ => dom.center().to_vec(),
    };
    if dom.distance_to_boundary(&y) < 3.0 * h {
        return Ok(());
    }
    let opts = tight();
    let (green, regular, _) = compute_green(&g, &y, &opts).map_err(|e| e.to_string())?;
    let lap = apply_laplacian(&green);
    let src = g.nearest_node(&y).unwrap();
    let total: f64 = lap.values().iter().zip(g.mass()).map(|(a, w)| a * w).sum();
    let mut far = 0.0f64;
    for i in 0..g.len() {
        let r = g
            .position(i)
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if r > 1.5 * h {
            far = far.max((lap.values()[i] * g.mass()[i]).abs());
        }
    }
    let at_src = (lap.values()[src] * g.mass()[src]).abs();
    ensure(far <= 0.1 * at_src, || format!("off-stencil mass {far:e} vs source {at_src:e}"))?;
    ensure((total - 1.0).abs() < 0.25, || format!("total source mass {total}"))?;
    ensure(green.min() > 0.0, || format!("G min {}", green.min()))?;
    let (tilde, _, _) = compute_tilde_green(&g, &y, &regular, &opts).map_err(|e| e.to_string())?;
    ensure(tilde.min() > 0.0, || format!("G~ min {}", tilde.min()))
}

/// `lambda_p(c u) = c^{2p/(N-2)} lambda_p(u)` and Adams ratios invariant
/// under `u -> 3u`.
pub fn analysis_scaling(case: &DomainCase, p: f64, c: f64) -> Check {
    let g = case.grid();
    let u = solve_poisson(&Field::constant(&g, 1.0), &tight()).map_err(|e| e.to_string())?;
    let n = g.dim() as f64;
    let a = concentration_report_for(&u, p, None, None).map_err(|e| e.to_string())?;
    let b = concentration_report_for(&u.scale(c), p, None, None).map_err(|e| e.to_string())?;
    let expect = a.lambda_p.ln() + 2.0 * p / (n - 2.0) * c.ln();
    ensure((b.lambda_p.ln() - expect).abs() <= 1e-12 * expect.abs().max(1.0), || {
        format!("lambda scaling {} vs {}", b.lambda_p.ln(), expect)
    })?;
    let total = a.f_mass_profile.last().unwrap().1 + a.f_mass_outside.last().unwrap().1;
    ensure((total - 1.0).abs() <= 1e-6, || format!("total mass {total}"))?;
    ensure(a.f_mass_profile.windows(2).all(|w| w[1].1 >= w[0].1), || "mass profile not monotone".into())?;
    let ts = [n / 2.0, n, 4.0 * n];
    let t1 = adams_check(&[u.clone()], &ts).map_err(|e| e.to_string())?;
    let t3 = adams_check(&[u.scale(3.0)], &ts).map_err(|e| e.to_string())?;
    for (r1, r3) in t1.rows.iter().zip(&t3.rows) {
        ensure((r1.max_ratio / r3.max_ratio - 1.0).abs() <= 1e-12, || {
            format!("ratio {} vs {}", r1.max_ratio, r3.max_ratio)
        })?;
    }
    Ok(())
}

/// The fit recovers data generated by its own model.
pub fn fit_is_exact(q_inf: f64, a: f64, b: f64) -> Check {
    let p: Vec<f64> = (0..6).map(|k| 10.0 * 2f64.powi(k)).collect();
    let q: Vec<f64> = p.iter().map(|x| q_inf + a / x.ln() + b / x).collect();
    let (qi, aa, bb) = fit_model(&p, &q).map_err(|e| e.to_string())?;
    let scale = 1.0 + q_inf.abs() + a.abs() + b.abs();
    ensure(
        (qi - q_inf).abs() <= 1e-8 * scale && (aa - a).abs() <= 1e-7 * scale && (bb - b).abs() <= 1e-6 * scale,
        || format!("fit ({qi}, {aa}, {bb}) for ({q_inf}, {a}, {b})"),
    )
}
