//! Least-energy solutions on grids, by constrained minimization and by a
//! normalized fixed-point iteration, and the Moser-type test function.
//!
//! Every integral is taken against the operator mass `W` of the grid, for
//! which the discrete identities hold exactly:
//! `int u (-Delta v) = int (-Delta u) v` and hence
//! `int u^{p+1} = int |Delta u|^{N/2}` for a discrete solution pair.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{unit_sphere_area, Grid};
use crate::logpow::{max_of, scaled_power, weighted_power_sum};
use crate::operators::{apply_laplacian, solve_dirichlet, Field, LinearSolveOptions};
use crate::real::{lit, Real};

/// Energy quantities of a solution `u_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport<T> {
    pub p: T,
    /// `(int |Delta w|^{N/2})^{2/N}` at the normalized minimizer.
    pub c_p: T,
    /// `max u_p`.
    pub gamma_p: T,
    /// `int u_p^p`.
    pub mass_p: T,
    /// `(int u_p^p)^{2/(N-2)}`.
    pub lambda_p: T,
    /// `int u_p^{p+1}`.
    pub energy_pplus1: T,
    /// `int |Delta u_p|^{N/2}`.
    pub dirichlet_energy: T,
}

impl<T: Real> EnergyReport<T> {
    /// `c_p p^{(N-2)/N}`.
    pub fn cp_scaled(&self, dim: usize) -> T {
        let n = T::from_usize_lossy(dim);
        self.c_p * self.p.powf((n - T::from_usize_lossy(2)) / n)
    }

    /// `p^{(N-2)/2} int u_p^{p+1}`.
    pub fn energy_scaled(&self, dim: usize) -> T {
        let n = T::from_usize_lossy(dim);
        self.energy_pplus1 * self.p.powf((n - T::from_usize_lossy(2)) / T::from_usize_lossy(2))
    }

    /// `p^{(N-2)/2} int |Delta u_p|^{N/2}`.
    pub fn dirichlet_scaled(&self, dim: usize) -> T {
        let n = T::from_usize_lossy(dim);
        self.dirichlet_energy * self.p.powf((n - T::from_usize_lossy(2)) / T::from_usize_lossy(2))
    }

    /// Running value `p lambda_p / e`.
    pub fn l0_running(&self) -> T {
        self.p * self.lambda_p / T::E()
    }

    /// `|int u^{p+1} - int |Delta u|^{N/2}| / int u^{p+1}`.
    pub fn identity_defect(&self) -> T {
        (self.energy_pplus1 - self.dirichlet_energy).abs() / self.energy_pplus1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Minimization,
    FixedPoint,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Minimization => "minimization",
            Method::FixedPoint => "fixed-point",
        }
    }
}

/// A discrete solution of `-Delta u = v^q`, `-Delta v = u^p` with zero
/// boundary values.
#[derive(Debug, Clone)]
pub struct SolutionPair<T> {
    pub u: Field<T>,
    pub v: Field<T>,
    pub p: T,
    /// `2/(N-2)`.
    pub q: T,
    /// Relative mass-weighted `l2` residuals of the first and second equation.
    pub residual: (T, T),
    pub method: Method,
    pub iterations: usize,
    /// Factor applied to the normalized input by the last rescaling.
    pub scale: T,
    /// Relative sup-norm change per iteration.
    pub history: Vec<T>,
}

impl<T: Real> SolutionPair<T> {
    pub fn dim(&self) -> usize {
        self.u.grid().dim()
    }

    pub fn max_residual(&self) -> T {
        self.residual.0.max(self.residual.1)
    }

    /// Whether both residuals lie within `tol`.
    pub fn accepted(&self, tol: f64) -> bool {
        self.max_residual() <= lit(tol)
    }

    pub fn energy_report(&self) -> EnergyReport<T> {
        energy_report(&self.u, self.p)
    }

    /// `f_p = u^p / int u^p`.
    pub fn concentration_density(&self) -> Field<T> {
        let grid = self.u.grid();
        let (r, _) = scaled_power(self.u.values(), self.p);
        let total: T = r.iter().zip(grid.mass()).map(|(a, w)| *a * *w).sum();
        Field::from_raw(grid, r.into_iter().map(|a| a / total).collect())
    }

    /// `w_p = u_p / lambda_p`.
    pub fn normalized_profile(&self) -> Field<T> {
        let lam = self.energy_report().lambda_p;
        self.u.scale(T::one() / lam)
    }
}

/// `2/(N-2)` for the grid dimension.
pub fn companion_exponent<T: Real>(dim: usize) -> T {
    lit(2.0 / (dim as f64 - 2.0))
}

fn check_exponent<T: Real>(dim: usize, p: T) -> Result<()> {
    let bound = (dim as f64 - 2.0) / 2.0;
    let pf = p.to_f64_lossy();
    if dim < 3 {
        return Err(Error::InvalidArgument(format!("dimension must be >= 3, got {dim}")));
    }
    if !(pf > bound) || !pf.is_finite() {
        return Err(Error::ExponentDegenerate { p: pf, bound });
    }
    Ok(())
}

/// Exponent of the homogeneity rescaling, `1/(p - (N-2)/2)`.
fn rescale_exponent<T: Real>(dim: usize, p: T) -> T {
    T::one() / (p - lit::<T>((dim as f64 - 2.0) / 2.0))
}

/// `ln sum_i W_i |f_i|^e`.
fn ln_mass_power<T: Real>(grid: &Grid<T>, f: &[T], e: T) -> T {
    let abs: Vec<T> = f.iter().map(|x| x.abs()).collect();
    weighted_power_sum(&abs, grid.mass(), e).ln()
}

/// Energy quantities of `u` on its grid.
pub fn energy_report<T: Real>(u: &Field<T>, p: T) -> EnergyReport<T> {
    let grid = u.grid();
    let dim = grid.dim();
    let n = T::from_usize_lossy(dim);
    let two = lit::<T>(2.0);
    let l_up1 = ln_mass_power(grid, u.values(), p + T::one());
    let l_up = ln_mass_power(grid, u.values(), p);
    let lap = apply_laplacian(u);
    let l_d = ln_mass_power(grid, lap.values(), n / two);
    EnergyReport {
        p,
        c_p: (two / n * l_d - l_up1 / (p + T::one())).exp(),
        gamma_p: u.max(),
        mass_p: l_up.exp(),
        lambda_p: (l_up * two / (n - two)).exp(),
        energy_pplus1: l_up1.exp(),
        dirichlet_energy: l_d.exp(),
    }
}

/// Relative mass-weighted `l2` distance `|a - b| / |b|` between two
/// fields each given as `mantissa * exp(ln_scale)`.
fn rel_distance<T: Real>(grid: &Grid<T>, a: &[T], ln_a: T, b: &[T], ln_b: T) -> T {
    let ma = max_of(&a.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let mb = max_of(&b.iter().map(|x| x.abs()).collect::<Vec<_>>());
    if !(mb > T::zero()) {
        return if ma > T::zero() { T::infinity() } else { T::zero() };
    }
    // rescale both relative to b's largest entry
    let fa = if ma > T::zero() {
        (ln_a + ma.ln() - ln_b - mb.ln()).exp() / ma
    } else {
        T::zero()
    };
    let fb = T::one() / mb;
    let (mut num, mut den) = (T::zero(), T::zero());
    for ((x, y), w) in a.iter().zip(b).zip(grid.mass()) {
        let d = *x * fa - *y * fb;
        num += *w * d * d;
        den += *w * (*y * fb) * (*y * fb);
    }
    (num / den).sqrt()
}

/// Residuals `(|-Delta u - v^q| / |v^q|, |-Delta v - u^p| / |u^p|)`.
pub fn pair_residuals<T: Real>(u: &Field<T>, v: &Field<T>, p: T, q: T) -> (T, T) {
    let grid = u.grid();
    let lu = apply_laplacian(u);
    let lv = apply_laplacian(v);
    let (vq, ln_vq) = scaled_power(v.values(), q);
    let (up, ln_up) = scaled_power(u.values(), p);
    (
        rel_distance(grid, lu.values(), T::zero(), &vq, q * ln_vq),
        rel_distance(grid, lv.values(), T::zero(), &up, p * ln_up),
    )
}

/// Options shared by both nonlinear solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearOptions {
    /// Fixed point: stop when the relative sup-norm change falls below this.
    pub step_tolerance: f64,
    /// Largest accepted equation residual.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    /// Minimization: stop when the relative energy decrease over
    /// `decrease_window` iterations falls below this.
    pub decrease_tolerance: f64,
    pub decrease_window: usize,
    pub linear: LinearSolveOptions,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self {
            step_tolerance: 1e-8,
            residual_tolerance: 1e-5,
            max_iterations: 2000,
            decrease_tolerance: 1e-9,
            decrease_window: 10,
            linear: LinearSolveOptions::default(),
        }
    }
}

impl NonlinearOptions {
    pub fn validate(&self) -> Result<()> {
        self.linear.validate()?;
        for (name, v) in [
            ("step_tolerance", self.step_tolerance),
            ("residual_tolerance", self.residual_tolerance),
            ("decrease_tolerance", self.decrease_tolerance),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.decrease_window == 0 {
            return Err(Error::InvalidArgument("decrease_window must be >= 1".into()));
        }
        Ok(())
    }

    /// Step tolerance raised to what the scalar type can resolve.
    fn effective_step<T: Real>(&self) -> T {
        lit::<T>(self.step_tolerance).max(T::epsilon() * lit(256.0))
    }
}

/// Positive bump `exp(-|x - c|^2 / sigma^2)` with `sigma` half the inradius.
pub fn default_initial<T: Real>(grid: &Arc<Grid<T>>) -> Field<T> {
    let c = grid.domain().center().to_vec();
    let sigma = grid.domain().inradius() / lit(2.0);
    Field::from_fn(grid, |x| {
        let r2: T = x.iter().zip(&c).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        (-r2 / (sigma * sigma)).exp()
    })
}

/// `|f|_{p+1}` with respect to the operator mass, in logarithms.
fn ln_norm<T: Real>(grid: &Grid<T>, f: &[T], p: T) -> T {
    ln_mass_power(grid, f, p + T::one()) / (p + T::one())
}

fn solve<T: Real>(
    rhs: Vec<T>,
    grid: &Arc<Grid<T>>,
    warm: Option<&Field<T>>,
    opts: &LinearSolveOptions,
) -> Result<Field<T>> {
    let rhs = Field::from_raw(grid, rhs);
    solve_dirichlet(&rhs, |_| T::zero(), warm, opts).map(|(f, _)| f)
}

fn positive_part<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|x| x.max(T::zero())).collect()
}

/// One application of the normalized map. Returns the next iterate, the
/// companion `v` mantissa `y` with `v = exp(ln_v) y` computed from the
/// current iterate, and `ln_v`.
struct FixedPointStep<T> {
    next: Field<T>,
    y: Field<T>,
    z: Field<T>,
}

fn fixed_point_map<T: Real>(
    u: &Field<T>,
    p: T,
    q: T,
    warm: Option<(&Field<T>, &Field<T>)>,
    opts: &LinearSolveOptions,
) -> Result<FixedPointStep<T>> {
    let grid = u.grid();
    let n = T::from_usize_lossy(grid.dim());
    let (r, _) = scaled_power(u.values(), p);
    let y = solve(r, grid, warm.map(|w| w.0), opts)?;
    let yq = scaled_power(&positive_part(y.values()), q).0;
    let z = solve(yq, grid, warm.map(|w| w.1), opts)?;
    // w = z / |z|_{p+1}; mu = int |Delta w|^{N/2}
    let ln_nz = ln_norm(grid, z.values(), p);
    let lap = apply_laplacian(&z);
    let ln_mu = ln_mass_power(grid, lap.values(), n / lit(2.0)) - n / lit(2.0) * ln_nz;
    let ln_s = ln_mu * rescale_exponent(grid.dim(), p);
    let f = (ln_s - ln_nz).exp();
    if !f.is_finite() || f <= T::zero() {
        return Err(Error::Overflow(format!("normalization factor exp({})", ln_s - ln_nz)));
    }
    let next = z.scale(f);
    Ok(FixedPointStep { next, y, z })
}

/// Builds the pair with `v = (-Delta)^{-1} u^p` and records residuals.
fn pair_from_u<T: Real>(
    u: Field<T>,
    p: T,
    method: Method,
    iterations: usize,
    history: Vec<T>,
    opts: &LinearSolveOptions,
) -> Result<SolutionPair<T>> {
    let grid = u.grid().clone();
    let q = companion_exponent::<T>(grid.dim());
    let (r, lg) = scaled_power(u.values(), p);
    let y = solve(r, &grid, None, opts)?;
    let f = (p * lg).exp();
    if !f.is_finite() {
        return Err(Error::Overflow(format!("u^p scale exp({})", p * lg)));
    }
    let v = Field::from_raw(&grid, y.values().iter().map(|a| a.max(T::zero()) * f).collect());
    let residual = pair_residuals(&u, &v, p, q);
    Ok(SolutionPair {
        u,
        v,
        p,
        q,
        residual,
        method,
        iterations,
        scale: T::one(),
        history,
    })
}

fn check_positive<T: Real>(f: &Field<T>) -> Result<()> {
    if f.values().iter().any(|x| !(*x > T::zero())) {
        return Err(Error::NegativePhase);
    }
    Ok(())
}

/// Normalized fixed-point iteration
/// `u <- s(z) z / |z|_{p+1}`, `z = (-Delta)^{-1} ((-Delta)^{-1} u^p)^q`,
/// where `s(z)` is the homogeneity factor built from the Rayleigh quotient.
pub fn solve_fixed_point<T: Real>(
    grid: &Arc<Grid<T>>,
    p: T,
    init: Option<&Field<T>>,
    opts: &NonlinearOptions,
) -> Result<SolutionPair<T>> {
    opts.validate()?;
    let dim = grid.dim();
    check_exponent(dim, p)?;
    let q = companion_exponent::<T>(dim);
    let mut u = match init {
        Some(f) => {
            if f.len() != grid.len() {
                return Err(Error::ShapeMismatch {
                    expected: grid.len(),
                    found: f.len(),
                });
            }
            Field::from_raw(grid, f.values().to_vec())
        }
        None => default_initial(grid),
    };
    check_positive(&u)?;
    let tol = opts.effective_step::<T>();
    let mut history = Vec::new();
    let mut warm: Option<(Field<T>, Field<T>)> = None;
    let mut best = T::infinity();
    for it in 1..=opts.max_iterations {
        let step = fixed_point_map(&u, p, q, warm.as_ref().map(|(a, b)| (a, b)), &opts.linear)?;
        let next = step.next;
        let mut diff = T::zero();
        for (a, b) in next.values().iter().zip(u.values()) {
            diff = diff.max((*a - *b).abs());
        }
        let change = diff / next.sup_norm();
        history.push(change);
        warm = Some((step.y, step.z));
        u = next;
        if change < tol {
            let pair = pair_from_u(u, p, Method::FixedPoint, it, history, &opts.linear)?;
            check_positive(&pair.u)?;
            return Ok(pair);
        }
        best = best.min(change);
        if it > 5 && change > best * lit(1e3) {
            return Err(Error::NotConverged {
                iterations: it,
                last_change: change.to_f64_lossy(),
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        last_change: history.last().map_or(f64::NAN, |c| c.to_f64_lossy()),
    })
}

/// `E(w) = int |Delta w|^{N/2}` in logarithms, with `-Delta w`.
fn ln_dirichlet<T: Real>(w: &Field<T>) -> (T, Field<T>) {
    let grid = w.grid();
    let lap = apply_laplacian(w);
    let n = T::from_usize_lossy(grid.dim());
    (ln_mass_power(grid, lap.values(), n / lit(2.0)), lap)
}

/// Result of the constrained minimization.
#[derive(Debug, Clone)]
pub struct Minimizer<T> {
    /// `w` with `|w|_{p+1} = 1`.
    pub w: Field<T>,
    pub c_p: T,
    pub iterations: usize,
    /// Energy after each accepted step.
    pub energies: Vec<T>,
}

/// Projected gradient descent for
/// `c_p = inf (int |Delta w|^{N/2})^{2/N}` over `|w|_{p+1} = 1`.
///
/// Gradients are taken in the metric `<a, b> = int Delta a Delta b`, in which
/// the energy gradient costs one Poisson solve and the constraint gradient
/// two. Steps are projected back by division and accepted by Armijo
/// backtracking.
pub fn minimize_cp<T: Real>(
    grid: &Arc<Grid<T>>,
    p: T,
    init: Option<&Field<T>>,
    opts: &NonlinearOptions,
) -> Result<Minimizer<T>> {
    opts.validate()?;
    let dim = grid.dim();
    if !(p >= T::one()) {
        return Err(Error::InvalidArgument(format!("exponent must be >= 1, got {p}")));
    }
    let n = T::from_usize_lossy(dim);
    let half_n = n / lit(2.0);
    let normalize = |f: &Field<T>| -> Result<Field<T>> {
        let abs: Vec<T> = f.values().iter().map(|x| x.abs()).collect();
        if !(max_of(&abs) > T::zero()) {
            return Err(Error::NegativePhase);
        }
        let ln = ln_norm(grid, &abs, p);
        let s = (-ln).exp();
        Ok(Field::from_raw(grid, abs.into_iter().map(|a| a * s).collect()))
    };
    let start = match init {
        Some(f) => {
            if f.len() != grid.len() {
                return Err(Error::ShapeMismatch {
                    expected: grid.len(),
                    found: f.len(),
                });
            }
            Field::from_raw(grid, f.values().to_vec())
        }
        None => default_initial(grid),
    };
    let mut w = normalize(&start)?;
    let (mut ln_e, mut lap) = ln_dirichlet(&w);
    let mut energies = vec![ln_e.exp()];
    let mut tau = lit::<T>(0.5);
    let mut warm: Option<(Field<T>, Field<T>, Field<T>)> = None;
    let c1 = lit::<T>(1e-4);
    let window = opts.decrease_window;
    let dtol = lit::<T>(opts.decrease_tolerance).max(T::epsilon() * lit(64.0));
    let e_scale = ln_e;
    let mut it = 0;
    while it < opts.max_iterations {
        // energy gradient (N/2) L^{-1} phi, phi = |z|^{N/2-2} z, z = -Delta w
        let e_unit = (-e_scale).exp();
        let phi: Vec<T> = lap
            .values()
            .iter()
            .map(|z| {
                let a = z.abs();
                if a > T::zero() {
                    z.signum() * a.powf(half_n - T::one())
                } else {
                    T::zero()
                }
            })
            .collect();
        let ge = solve(phi.clone(), grid, warm.as_ref().map(|w| &w.0), &opts.linear)?;
        let (wp, lgw) = scaled_power(w.values(), p);
        let wp_scale = (p * lgw).exp();
        let wp: Vec<T> = wp.iter().map(|a| *a * wp_scale).collect();
        let t1 = solve(wp.clone(), grid, warm.as_ref().map(|w| &w.1), &opts.linear)?;
        let gg = solve(t1.values().to_vec(), grid, warm.as_ref().map(|w| &w.2), &opts.linear)?;
        let mass = grid.mass();
        let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b).zip(mass).map(|((x, y), m)| *x * *y * *m).sum() };
        // <ge, gg>_B / <gg, gg>_B; the common factors cancel
        let ge_w = dot(ge.values(), &wp) * half_n;
        let gg_w = dot(gg.values(), &wp);
        let lambda = ge_w / gg_w;
        // d = -(ge - lambda gg), -Delta d = -((N/2) phi - lambda t1)
        let d: Vec<T> = ge
            .values()
            .iter()
            .zip(gg.values())
            .map(|(a, b)| -(*a * half_n - lambda * *b))
            .collect();
        let lap_d: Vec<T> = phi
            .iter()
            .zip(t1.values())
            .map(|(a, b)| -(*a * half_n - lambda * *b))
            .collect();
        let slope = dot(&lap_d, &lap_d);
        warm = Some((ge, t1, gg));
        if !(slope > T::zero()) {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<T> = w
                .values()
                .iter()
                .zip(&d)
                .map(|(a, b)| *a + tau * *b)
                .collect();
            let trial = normalize(&Field::from_raw(grid, trial))?;
            let (ln_t, lap_t) = ln_dirichlet(&trial);
            // Armijo on the energy; compared in units of the initial energy
            let e_now = (ln_e - e_scale).exp();
            let e_new = (ln_t - e_scale).exp();
            if e_new <= e_now - c1 * tau * slope * e_unit {
                w = trial;
                ln_e = ln_t;
                lap = lap_t;
                accepted = true;
                tau = (tau * lit(1.5)).min(lit(4.0));
                break;
            }
            tau = tau * lit(0.5);
        }
        it += 1;
        if !accepted {
            break;
        }
        energies.push(ln_e.exp());
        let k = energies.len();
        if k > window {
            let old = energies[k - 1 - window];
            let now = energies[k - 1];
            if (old - now) / now < dtol {
                break;
            }
        }
    }
    let mut converged = opts.max_iterations == 0 || it < opts.max_iterations;
    if !converged {
        let k = energies.len();
        if k > window {
            let (old, now) = (energies[k - 1 - window], energies[k - 1]);
            converged = (old - now) / now < dtol;
        }
    }
    if !converged {
        let k = energies.len();
        let last = if k >= 2 {
            ((energies[k - 2] - energies[k - 1]) / energies[k - 1]).to_f64_lossy()
        } else {
            f64::NAN
        };
        return Err(Error::NotConverged {
            iterations: it,
            last_change: last,
        });
    }
    Ok(Minimizer {
        c_p: (ln_e * lit::<T>(2.0) / n).exp(),
        w,
        iterations: it,
        energies,
    })
}

/// `u = s w / |w|_{p+1}` with `s = (c_p^{N/2})^{1/(p-(N-2)/2)}`, and
/// `v = (-Delta u)^{(N-2)/2}`.
pub fn rescale_to_solution<T: Real>(minimizer: &Field<T>, c_p: T, p: T) -> Result<SolutionPair<T>> {
    let grid = minimizer.grid();
    let dim = grid.dim();
    check_exponent(dim, p)?;
    if !(c_p > T::zero()) {
        return Err(Error::InvalidArgument(format!("c_p must be positive, got {c_p}")));
    }
    let n = T::from_usize_lossy(dim);
    let q = companion_exponent::<T>(dim);
    let ln_norm_w = ln_norm(grid, minimizer.values(), p);
    let ln_s = c_p.ln() * n / lit(2.0) * rescale_exponent(dim, p);
    let f = (ln_s - ln_norm_w).exp();
    let u = minimizer.scale(f);
    let lap = apply_laplacian(&u);
    let v = lap.map(|z| z.max(T::zero()).powf(T::one() / q));
    let residual = pair_residuals(&u, &v, p, q);
    Ok(SolutionPair {
        u,
        v,
        p,
        q,
        residual,
        method: Method::Minimization,
        iterations: 0,
        scale: f,
        history: Vec::new(),
    })
}

/// Solves along an increasing schedule, warm-starting each exponent from
/// the previous solution.
pub fn continuation_sweep<T: Real>(
    grid: &Arc<Grid<T>>,
    schedule: &[T],
    opts: &NonlinearOptions,
) -> Result<Vec<(SolutionPair<T>, EnergyReport<T>)>> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty exponent schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("exponent schedule must increase".into()));
    }
    if schedule[0] > lit(5.0) {
        return Err(Error::InvalidArgument(format!(
            "first exponent must be at most 5, got {}",
            schedule[0]
        )));
    }
    let mut out: Vec<(SolutionPair<T>, EnergyReport<T>)> = Vec::with_capacity(schedule.len());
    for &p in schedule {
        let init = out.last().map(|(s, _)| s.u.clone());
        let pair = solve_fixed_point(grid, p, init.as_ref(), opts).map_err(|e| Error::AtExponent {
            p: p.to_f64_lossy(),
            source: Box::new(e),
        })?;
        let rep = pair.energy_report();
        out.push((pair, rep));
    }
    Ok(out)
}

/// The cutoff `Phi(t) = 2t^2 - t^3` with `Phi(0) = Phi'(0) = 0`,
/// `Phi(1) = Phi'(1) = 1`.
fn phi(t: f64) -> (f64, f64, f64) {
    (2.0 * t * t - t * t * t, 4.0 * t - 3.0 * t * t, 4.0 - 6.0 * t)
}

/// The profile `H` and its first two derivatives.
pub fn moser_profile(t: f64, eps: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t <= eps {
        let (a, b, c) = phi(t / eps);
        (eps * a, b, c / eps)
    } else if t <= 1.0 - eps {
        (t, 1.0, 0.0)
    } else if t <= 1.0 {
        let (a, b, c) = phi((1.0 - t) / eps);
        (1.0 - eps * a, b, -c / eps)
    } else {
        (1.0, 0.0, 0.0)
    }
}

/// Regularized Moser function `m = H(log(L/|x|) / log(L/l))` centred at the
/// domain centre.
#[derive(Debug, Clone)]
pub struct MoserFunction<T> {
    pub l: T,
    pub big_l: T,
    pub eps: T,
    pub m: Field<T>,
    /// `(int |Delta m|^{N/2})^{2/N}` by exact radial quadrature, so that
    /// `psi = m / norm` has unit energy.
    pub norm: T,
    /// Discrete Rayleigh quotient of `m` on the grid.
    pub grid_rayleigh: T,
}

impl<T: Real> MoserFunction<T> {
    pub fn psi(&self) -> Field<T> {
        self.m.scale(T::one() / self.norm)
    }
}

/// Composite Gauss-Legendre rule of `ln int_a^b exp(g(t)) dt`.
fn ln_integral(a: f64, b: f64, panels: usize, g: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    let hw = (b - a) / panels as f64 / 2.0;
    let mut terms = Vec::with_capacity(panels * 5);
    for k in 0..panels {
        let mid = a + (2 * k + 1) as f64 * hw;
        for (x, w) in X.iter().zip(W) {
            let v = g(mid + hw * x);
            if v > f64::NEG_INFINITY {
                terms.push(v + (w * hw).ln());
            }
        }
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Exact radial values `(ln int |Delta m|^{N/2}, ln int m^{p+1})`.
pub fn moser_exact_logs(dim: usize, l: f64, big_l: f64, eps: f64, p: f64) -> (f64, f64) {
    let n = dim as f64;
    let kappa = (big_l / l).ln();
    let omega: f64 = unit_sphere_area::<f64>(dim);
    let pieces = [(0.0, eps), (eps, 1.0 - eps), (1.0 - eps, 1.0)];
    let panels = 400;
    let lap = |t: f64| {
        let (_, h1, h2) = moser_profile(t, eps);
        let v = (h2 / kappa - (n - 2.0) * h1).abs();
        if v > 0.0 {
            n / 2.0 * v.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let mass = |t: f64| {
        let (h, _, _) = moser_profile(t, eps);
        if h > 0.0 {
            (p + 1.0) * h.ln() - n * kappa * t
        } else {
            f64::NEG_INFINITY
        }
    };
    let lse = |xs: &[f64]| {
        let top = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + xs.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    };
    let e_parts: Vec<f64> = pieces.iter().map(|(a, b)| ln_integral(*a, *b, panels, lap)).collect();
    let ln_e = omega.ln() + (1.0 - n / 2.0) * kappa.ln() + lse(&e_parts);
    let mut m_parts: Vec<f64> = pieces.iter().map(|(a, b)| ln_integral(*a, *b, panels, mass)).collect();
    m_parts.push(-n * kappa - (n * kappa).ln());
    let ln_m = omega.ln() + n * big_l.ln() + kappa.ln() + lse(&m_parts);
    (ln_e, ln_m)
}

/// Builds the Moser function on the grid and returns it together with the
/// upper bound `(int |Delta psi|^{N/2})^{2/N} / |psi|_{p+1} >= c_p`,
/// evaluated by exact radial quadrature.
pub fn moser_test_function<T: Real>(
    grid: &Arc<Grid<T>>,
    l: T,
    big_l: T,
    eps: T,
    p: T,
) -> Result<(MoserFunction<T>, T)> {
    let (lf, bf, ef, pf) = (
        l.to_f64_lossy(),
        big_l.to_f64_lossy(),
        eps.to_f64_lossy(),
        p.to_f64_lossy(),
    );
    if !(lf > 0.0 && bf > lf) {
        return Err(Error::InvalidArgument(format!("need 0 < l < L, got l={lf}, L={bf}")));
    }
    if !(ef > 0.0 && ef < 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1/2), got {ef}")));
    }
    if !(pf >= 1.0) {
        return Err(Error::InvalidArgument(format!("exponent must be >= 1, got {pf}")));
    }
    let domain = grid.domain();
    let inr = domain.inradius().to_f64_lossy();
    let c = domain.center().to_vec();
    // B_L(c) must sit inside the domain; the inradius is attained at c
    if bf > inr * (1.0 + 1e-12) {
        return Err(Error::GeometryError(format!(
            "ball of radius {bf} about the centre leaves the domain (inradius {inr})"
        )));
    }
    let dim = grid.dim();
    let kappa = (bf / lf).ln();
    let m = Field::from_fn(grid, |x| {
        let r: f64 = x
            .iter()
            .zip(&c)
            .map(|(a, b)| (*a - *b).to_f64_lossy().powi(2))
            .sum::<f64>()
            .sqrt();
        let t = if r > 0.0 { (bf / r).ln() / kappa } else { 2.0 };
        lit(moser_profile(t, ef).0)
    });
    let (ln_e, ln_m) = moser_exact_logs(dim, lf, bf, ef, pf);
    let n = dim as f64;
    let norm = (2.0 / n * ln_e).exp();
    let bound = (2.0 / n * ln_e - ln_m / (pf + 1.0)).exp();
    let rep = energy_report(&m, p);
    Ok((
        MoserFunction {
            l,
            big_l,
            eps,
            m,
            norm: lit(norm),
            grid_rayleigh: rep.c_p,
        },
        lit(bound),
    ))
}

/// `l = L exp(-(N-2)(p+1)/N^2)`.
pub fn moser_inner_radius(dim: usize, big_l: f64, p: f64) -> f64 {
    let n = dim as f64;
    big_l * (-(n - 2.0) * (p + 1.0) / (n * n)).exp()
}
