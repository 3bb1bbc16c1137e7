//! Nodal fields, the cut-cell Dirichlet Laplacian, Poisson solves and
//! boundary normal derivatives.
//!
//! The discrete operator is `-Delta = W^{-1} K` where `W` is the diagonal of
//! [`Grid::mass`] and `K` is the symmetric stiffness matrix: each interior link
//! contributes `h^{N-2}` off the diagonal and each boundary cut at fraction
//! `theta` contributes `h^{N-2}/theta` to the diagonal. `K` is a symmetric
//! M-matrix, so solves use preconditioned conjugate gradients, and
//! `sum a (-Delta b) w = a^T K b` is symmetric in `a, b` exactly. Internally
//! everything is divided by `h^{N-2}` to keep entries of unit size.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryFacet, Grid, NO_NODE};
use crate::real::{lit, Real};

/// One real value per interior node of a grid.
#[derive(Debug, Clone)]
pub struct Field<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Arc<Grid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Arc<Grid<T>>, c: T) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: &Arc<Grid<T>>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {i}")));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub(crate) fn from_raw(grid: &Arc<Grid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn max(&self) -> T {
        crate::logpow::max_of(&self.values)
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, b| a.min(*b))
    }

    /// Index of the largest value (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, b| a.max(b.abs()))
    }

    pub fn l2_norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    /// Volume integral over the domain.
    pub fn integral(&self) -> T {
        crate::geometry::integrate_values(&self.values, &self.grid)
    }

    /// Integral with the trapezoid weights [`Grid::mass`]; the natural
    /// quadrature for fields vanishing on the boundary.
    pub fn mass_integral(&self) -> T {
        self.values
            .iter()
            .zip(self.grid.mass())
            .map(|(a, w)| *a * *w)
            .sum()
    }

    /// Mass-weighted inner product.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.grid.mass())
            .map(|((a, b), w)| *a * *b * *w)
            .sum())
    }

    /// Multilinear interpolation at an arbitrary point, zero on the boundary.
    pub fn interpolate(&self, x: &[T]) -> Option<T> {
        self.grid.interpolate(&self.values, x)
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveOptions {
    pub rel_tolerance: f64,
    /// `None` means `20 * sqrt(node count)`.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for LinearSolveOptions {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-10,
            max_iterations: None,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl LinearSolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tolerance must lie in (0,1), got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations
            .unwrap_or_else(|| ((20.0 * (n as f64).sqrt()).ceil() as usize).max(50))
    }

    /// Tolerance actually applied for scalar type `T`; requests finer than
    /// the type can resolve are raised to `64 * epsilon`.
    pub fn effective_tolerance<T: Real>(&self) -> T {
        lit::<T>(self.rel_tolerance).max(T::epsilon() * lit(64.0))
    }
}

/// Iteration count and final relative residual of a linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Mass divided by `h^{N-2}`.
fn scaled_mass<T: Real>(grid: &Grid<T>) -> Vec<T> {
    let s = grid.h().powi(grid.dim() as i32 - 2);
    grid.mass().iter().map(|w| *w / s).collect()
}

/// `out = K x / h^{N-2}`.
pub(crate) fn apply_stiffness<T: Real>(grid: &Grid<T>, x: &[T], out: &mut [T]) {
    let deg = 2 * grid.dim();
    let links = grid.links();
    let diag = grid.stiffness_diag();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = diag[i] * x[i];
        for &j in &links[i * deg..(i + 1) * deg] {
            if j != NO_NODE {
                acc -= x[j as usize];
            }
        }
        *o = acc;
    }
}

/// Discrete `-Delta f` with `f = 0` on the boundary.
pub fn apply_laplacian<T: Real>(f: &Field<T>) -> Field<T> {
    let grid = f.grid();
    let mut out = vec![T::zero(); grid.len()];
    apply_stiffness(grid, f.values(), &mut out);
    let mass = scaled_mass(grid);
    for (o, m) in out.iter_mut().zip(&mass) {
        *o /= *m;
    }
    Field::from_raw(grid, out)
}

/// Solves `-Delta w = rhs` with `w = 0` on the boundary.
pub fn solve_poisson<T: Real>(rhs: &Field<T>, opts: &LinearSolveOptions) -> Result<Field<T>> {
    solve_dirichlet(rhs, |_| T::zero(), None, opts).map(|(w, _)| w)
}

/// Solves `-Delta w = rhs` in the domain with `w = boundary(x)` on the
/// boundary, optionally warm-started from `initial`.
pub fn solve_dirichlet<T: Real>(
    rhs: &Field<T>,
    boundary: impl Fn(&[T]) -> T,
    initial: Option<&Field<T>>,
    opts: &LinearSolveOptions,
) -> Result<(Field<T>, SolveInfo)> {
    opts.validate()?;
    let grid = rhs.grid();
    let n = grid.len();
    let mass = scaled_mass(grid);
    let mut b: Vec<T> = rhs
        .values()
        .iter()
        .zip(&mass)
        .map(|(f, m)| *f * *m)
        .collect();
    add_boundary_terms(grid, &boundary, &mut b);
    let mut x = match initial {
        Some(f) => {
            rhs.check_same(f)?;
            f.values().to_vec()
        }
        None => vec![T::zero(); n],
    };
    let info = pcg(grid, &b, &mut x, opts)?;
    Ok((Field::from_raw(grid, x), info))
}

/// Adds `g(z)/theta` for every boundary cut, `z` the cut point.
fn add_boundary_terms<T: Real>(grid: &Grid<T>, boundary: &impl Fn(&[T]) -> T, b: &mut [T]) {
    let dim = grid.dim();
    let deg = 2 * dim;
    let links = grid.links();
    let cuts = grid.cuts();
    let h = grid.h();
    for (i, bi) in b.iter_mut().enumerate() {
        if !links[i * deg..(i + 1) * deg].contains(&NO_NODE) {
            continue;
        }
        let x = grid.position(i);
        for slot in 0..deg {
            if links[i * deg + slot] != NO_NODE {
                continue;
            }
            let axis = slot / 2;
            let theta = cuts[i * deg + slot];
            let mut z = x.clone();
            let step = theta * h;
            z[axis] = if slot % 2 == 1 { z[axis] + step } else { z[axis] - step };
            let g = boundary(&z);
            if g != T::zero() {
                *bi += g / theta;
            }
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn pcg<T: Real>(
    grid: &Grid<T>,
    b: &[T],
    x: &mut [T],
    opts: &LinearSolveOptions,
) -> Result<SolveInfo> {
    let n = b.len();
    let tol = opts.effective_tolerance::<T>();
    let cap = opts.iteration_cap(n);
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveInfo {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv_diag: Vec<T> = match opts.preconditioner {
        Preconditioner::Diagonal => grid.stiffness_diag().iter().map(|d| T::one() / *d).collect(),
        Preconditioner::None => vec![T::one(); n],
    };
    let diag = grid.stiffness_diag();
    // a tiny cut fraction can dominate |b|, so also demand a small Jacobi correction
    let settled = |r: &[T], x: &[T], rnorm: T| -> bool {
        if rnorm > tol * bnorm {
            return false;
        }
        let xs = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let js = r.iter().zip(diag).fold(T::zero(), |m, (ri, di)| m.max((*ri / *di).abs()));
        js <= tol * xs
    };
    let mut r = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut iterations = 0usize;
    // restart loop: confirm convergence on the true residual
    loop {
        apply_stiffness(grid, x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let mut rnorm = dot(&r, &r).sqrt();
        if settled(&r, x, rnorm) {
            return Ok(SolveInfo {
                iterations,
                rel_residual: (rnorm / bnorm).to_f64_lossy(),
            });
        }
        if iterations >= cap {
            return Err(Error::SolverDiverged {
                iterations,
                residual: (rnorm / bnorm).to_f64_lossy(),
            });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < cap {
            apply_stiffness(grid, &p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > T::zero()) {
                break;
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iterations += 1;
            rnorm = dot(&r, &r).sqrt();
            if settled(&r, x, rnorm) {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if !rnorm.is_finite() {
            return Err(Error::SolverDiverged {
                iterations,
                residual: f64::INFINITY,
            });
        }
    }
}

/// How a facet's normal derivative was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FacetStencil<T> {
    /// Cubic one-sided fit through samples at `delta`, `2 delta`, `3 delta`
    /// interpolated with tensor quadratics.
    ThreePoint { delta: T },
    /// Second-order formula from multilinear samples at `delta` and `2 delta`.
    TwoPoint { delta: T },
    /// First-order fallback from a single sample at `delta`.
    OnePoint { delta: T },
}

#[derive(Debug, Clone)]
pub struct NormalDerivatives<T> {
    pub values: Vec<T>,
    pub stencils: Vec<FacetStencil<T>>,
}

impl<T> NormalDerivatives<T> {
    /// Number of facets that needed the first-order fallback.
    pub fn fallback_count(&self) -> usize {
        self.stencils
            .iter()
            .filter(|s| matches!(s, FacetStencil::OnePoint { .. }))
            .count()
    }
}

/// Outward normal derivative of a Dirichlet-zero field at each facet.
///
/// Along the inward normal the field is sampled at `delta`, `2 delta` and
/// `3 delta` (tensor-quadratic interpolation, `delta` the smallest multiple of
/// `h/2` from `h` on whose samples the stencil stays inside the grid) and a
/// cubic vanishing at the facet is fitted. When no such stencil exists the
/// two-point multilinear formula at `delta = h` or `1.01 h sqrt(N)` is used,
/// and as a last resort a single farther sample, flagged in the output.
pub fn normal_derivative<T: Real>(
    f: &Field<T>,
    facets: &[BoundaryFacet<T>],
) -> Result<NormalDerivatives<T>> {
    let grid = f.grid();
    let h = grid.h();
    let dim = grid.dim();
    let wide = h * T::from_usize_lossy(dim).sqrt() * lit(1.01);
    let point = |z: &[T], inward: &[T], d: T| -> Vec<T> {
        z.iter().zip(inward).map(|(a, b)| *a + d * *b).collect()
    };
    let mut values = Vec::with_capacity(facets.len());
    let mut stencils = Vec::with_capacity(facets.len());
    for facet in facets {
        let z = &facet.position;
        let inward: Vec<T> = facet.normal.iter().map(|v| -*v).collect();
        let quad = |d: T| grid.interpolate_quadratic(f.values(), &point(z, &inward, d), &inward);
        let lin = |d: T| f.interpolate(&point(z, &inward, d));
        let mut found = None;
        for k in 2..=8 {
            let delta = h * lit(0.5 * k as f64);
            if let (Some(f1), Some(f2), Some(f3)) =
                (quad(delta), quad(delta * lit(2.0)), quad(delta * lit(3.0)))
            {
                let inward_slope =
                    (lit::<T>(18.0) * f1 - lit::<T>(9.0) * f2 + lit::<T>(2.0) * f3)
                        / (lit::<T>(6.0) * delta);
                found = Some((-inward_slope, FacetStencil::ThreePoint { delta }));
                break;
            }
        }
        if found.is_none() {
            for delta in [h, wide] {
                if let (Some(f1), Some(f2)) = (lin(delta), lin(delta * lit(2.0))) {
                    found = Some((
                        -(lit::<T>(4.0) * f1 - f2) / (lit::<T>(2.0) * delta),
                        FacetStencil::TwoPoint { delta },
                    ));
                    break;
                }
            }
        }
        if found.is_none() {
            for k in [1.0, 1.5, 2.0, 3.0, 4.0] {
                let delta = wide * lit(k);
                if let Some(f1) = lin(delta) {
                    found = Some((-f1 / delta, FacetStencil::OnePoint { delta }));
                    break;
                }
            }
        }
        let (v, s) = found.ok_or_else(|| {
            Error::GeometryError(format!(
                "no interpolation stencil inside the grid for facet at {:?}",
                z.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
            ))
        })?;
        values.push(v);
        stencils.push(s);
    }
    Ok(NormalDerivatives { values, stencils })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_facets, build_grid, DomainSpec};
    use approx::assert_relative_eq;

    fn ball(dim: usize, h: f64) -> Arc<Grid<f64>> {
        build_grid(DomainSpec::ball(dim, 1.0).unwrap(), h).unwrap()
    }

    fn r2(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn quadratic_is_exact_away_from_boundary() {
        for dim in [3, 4] {
            let g = ball(dim, 0.1);
            let f = Field::from_fn(&g, |x| 1.0 - r2(x));
            let lf = apply_laplacian(&f);
            for i in 0..g.len() {
                if !g.is_boundary_adjacent(i) {
                    assert_relative_eq!(lf.values()[i], 2.0 * dim as f64, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = ball(3, 0.2);
        let z = Field::zeros(&g);
        assert!(apply_laplacian(&z).values().iter().all(|v| *v == 0.0));
        let w = solve_poisson(&z, &LinearSolveOptions::default()).unwrap();
        assert!(w.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn box_eigenfunction() {
        use std::f64::consts::PI;
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let g = build_grid(
                    DomainSpec::cuboid(vec![1.0; 3], vec![0.5; 3]).unwrap(),
                    h,
                )
                .unwrap();
                let f = Field::from_fn(&g, |x| x.iter().map(|t| (PI * t).sin()).product());
                let lf = apply_laplacian(&f);
                (0..g.len())
                    .map(|i| (lf.values()[i] - 3.0 * PI * PI * f.values()[i]).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
        assert!(errs[1] < 0.5);
    }

    #[test]
    fn poisson_on_ball_recovers_paraboloid() {
        let errs: Vec<f64> = [0.2, 0.1]
            .iter()
            .map(|&h| {
                let g = ball(4, h);
                let rhs = Field::constant(&g, 8.0);
                let w = solve_poisson(&rhs, &LinearSolveOptions::default()).unwrap();
                (0..g.len())
                    .map(|i| (w.values()[i] - (1.0 - r2(&g.position(i)))).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] <= errs[0] + 1e-12);
        assert!(errs[1] < 0.1 * 0.1 * 4.0, "{errs:?}");
    }

    #[test]
    fn dirichlet_data_converges_to_harmonic_function() {
        let exact = |x: &[f64]| x[0] * x[0] - x[1] * x[1] + 0.5 * x[2];
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let g = build_grid(DomainSpec::ellipsoid(vec![1.0, 0.8, 1.1]).unwrap(), h)
                    .unwrap();
                let (w, info) = solve_dirichlet(
                    &Field::zeros(&g),
                    exact,
                    None,
                    &LinearSolveOptions::default(),
                )
                .unwrap();
                assert!(info.rel_residual <= 1e-10);
                (0..g.len())
                    .map(|i| (w.values()[i] - exact(&g.position(i))).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] < 3e-3, "{errs:?}");
        assert!(errs[1] < errs[0] / 2.5, "{errs:?}");
    }

    #[test]
    fn linear_functions_are_reproduced() {
        let g = build_grid(DomainSpec::ball(4, 1.0).unwrap(), 0.15).unwrap();
        let exact = |x: &[f64]| 0.3 * x[0] - x[3] + 2.0;
        let (w, _) =
            solve_dirichlet(&Field::zeros(&g), exact, None, &LinearSolveOptions::default())
                .unwrap();
        for i in 0..g.len() {
            assert_relative_eq!(w.values()[i], exact(&g.position(i)), epsilon = 1e-8);
        }
    }

    #[test]
    fn exhausted_iterations_report_divergence() {
        let g = ball(3, 0.1);
        let rhs = Field::constant(&g, 1.0);
        let opts = LinearSolveOptions {
            max_iterations: Some(2),
            ..Default::default()
        };
        assert!(matches!(
            solve_poisson(&rhs, &opts),
            Err(Error::SolverDiverged { .. })
        ));
    }

    #[test]
    fn normal_derivative_of_paraboloid() {
        let g = ball(3, 0.05);
        let f = Field::from_fn(&g, |x| 1.0 - r2(x));
        let facets = boundary_facets(&g).unwrap();
        let d = normal_derivative(&f, &facets).unwrap();
        assert_eq!(d.fallback_count(), 0);
        for v in &d.values {
            assert!((v + 2.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn normal_derivative_converges_for_smooth_profile() {
        use std::f64::consts::FRAC_PI_2;
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let g = ball(4, h);
                let f = Field::from_fn(&g, |x| (FRAC_PI_2 * r2(x).sqrt()).cos());
                let facets = boundary_facets(&g).unwrap();
                let d = normal_derivative(&f, &facets).unwrap();
                d.values
                    .iter()
                    .map(|v| (v + FRAC_PI_2).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
        assert!(errs[1] < 1e-2, "{errs:?}");
    }

    #[test]
    fn nonnegative_field_has_nonpositive_outward_slope() {
        let g = build_grid(DomainSpec::ellipsoid(vec![1.0, 0.7, 0.9]).unwrap(), 0.08).unwrap();
        let w = solve_poisson(&Field::constant(&g, 1.0), &LinearSolveOptions::default()).unwrap();
        let facets = boundary_facets(&g).unwrap();
        let d = normal_derivative(&w, &facets).unwrap();
        assert!(d.values.iter().all(|v| *v <= 1e-3));
        let zero = normal_derivative(&Field::zeros(&g), &facets).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn f32_solve() {
        let g = build_grid(DomainSpec::<f32>::ball(3, 1.0).unwrap(), 0.2).unwrap();
        let rhs = Field::constant(&g, 6.0f32);
        let w = solve_poisson(&rhs, &LinearSolveOptions::default()).unwrap();
        let c = g.lookup(&[0, 0, 0]).unwrap();
        assert!((w.values()[c] - 1.0).abs() < 0.05);
    }
}
