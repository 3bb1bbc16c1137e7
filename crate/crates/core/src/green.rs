//! Green function `G(., y)` of `-Delta` with Dirichlet data, its regular
//! part, the modified Green function `G~` solving `-Delta G~ = G^{2/(N-2)}`,
//! its logarithmic regular part, the diagonal map `phi~(y) = g~(y, y)` and
//! its critical points.
//!
//! Singular parts are always split off analytically:
//! `G = Phi_N(|x-y|) + g` with `g` harmonic, and
//! `G~ = -C_N log|x-y| + g~` with `-Delta g~ = G^q - Phi_N^q`, using
//! `Phi_N^q = C_N (N-2) |x-y|^{-2} = -Delta(-C_N log|x-y|)` exactly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{unit_sphere_area, Grid};
use crate::operators::{solve_dirichlet, Field, LinearSolveOptions};
use crate::real::{lit, Real};

/// Dimensional constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants<T> {
    pub dim: usize,
    /// Area of the unit sphere `S^{N-1}`.
    pub omega: T,
    /// `N (N-2)^{N/(N-2)} omega^{2/(N-2)}`.
    pub b0: T,
    /// `C_N = 1 / ((N-2)^{N/(N-2)} omega^{2/(N-2)})`, coefficient of `-log|x-y|` in `G~`.
    pub log_c: T,
    /// Limit of `c_p p^{(N-2)/N}`: `(N b0 e / (N-2))^{(N-2)/N}`.
    pub cp_limit: T,
    /// `((N-2) / (N e b0))^{(N-2)/N}`.
    pub dt_limit: T,
    /// Limit of `p^{(N-2)/2} int u_p^{p+1}`, `cp_limit^{N/2}`.
    pub energy_limit: T,
    /// `1 / ((N-2) omega)`, so that `Phi_N(r) = k_n r^{2-N}`.
    pub k_n: T,
}

/// Closed-form constants, evaluated in double precision.
pub fn constants<T: Real>(dim: usize) -> Result<Constants<T>> {
    if dim < 3 {
        return Err(Error::InvalidArgument(format!("dimension must be >= 3, got {dim}")));
    }
    let n = dim as f64;
    let omega: f64 = unit_sphere_area::<f64>(dim);
    let a = (n - 2.0).powf(n / (n - 2.0)) * omega.powf(2.0 / (n - 2.0));
    let b0 = n * a;
    let e = std::f64::consts::E;
    let cp_limit = (n * b0 * e / (n - 2.0)).powf((n - 2.0) / n);
    Ok(Constants {
        dim,
        omega: lit(omega),
        b0: lit(b0),
        log_c: lit(1.0 / a),
        cp_limit: lit(cp_limit),
        dt_limit: lit(((n - 2.0) / (n * e * b0)).powf((n - 2.0) / n)),
        energy_limit: lit(cp_limit.powf(n / 2.0)),
        k_n: lit(1.0 / ((n - 2.0) * omega)),
    })
}

impl<T: Real> Constants<T> {
    /// Fundamental solution `Phi_N(r) = r^{2-N} / ((N-2) omega)`.
    pub fn fundamental(&self, r: T) -> T {
        self.k_n * r.powi(2 - self.dim as i32)
    }

    /// Mean of `Phi_N` over the ball of volume `h^N` centred at the source.
    fn fundamental_cell_mean(&self, h: T) -> T {
        let n = T::from_usize_lossy(self.dim);
        let rho = (n * h.powi(self.dim as i32) / self.omega).powf(T::one() / n);
        n / (lit::<T>(2.0) * (n - lit(2.0)) * self.omega) * rho.powf(lit::<T>(2.0) - n)
    }

    /// Mean of `-C_N log r` over the same ball.
    fn log_cell_mean(&self, h: T) -> T {
        let n = T::from_usize_lossy(self.dim);
        let rho = (n * h.powi(self.dim as i32) / self.omega).powf(T::one() / n);
        -self.log_c * (rho.ln() - T::one() / n)
    }
}

/// Green function data for one source point.
#[derive(Debug, Clone)]
pub struct GreenBundle<T> {
    pub y: Vec<T>,
    pub green: Field<T>,
    /// Harmonic regular part `g = G - Phi_N`.
    pub regular: Field<T>,
    pub tilde: Field<T>,
    /// `g~ = G~ + C_N log|x-y|`.
    pub tilde_regular: Field<T>,
    /// `g(y, y)`.
    pub g_diag: T,
    /// `phi~(y) = g~(y, y)`.
    pub phi_diag: T,
}

fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<T>()
        .sqrt()
}

/// Value of a nodal field at `y`: the node value when `y` is a node,
/// otherwise multilinear interpolation.
fn value_at<T: Real>(f: &Field<T>, y: &[T]) -> Result<T> {
    let grid = f.grid();
    if let Some(i) = grid.nearest_node(y) {
        if dist(&grid.position(i), y) <= grid.h() * lit(1e-9) {
            return Ok(f.values()[i]);
        }
    }
    f.interpolate(y)
        .ok_or_else(|| Error::GeometryError("point outside the interpolation range".into()))
}

fn source_node<T: Real>(grid: &Grid<T>, y: &[T]) -> Option<usize> {
    grid.nearest_node(y)
        .filter(|&i| dist(&grid.position(i), y) <= grid.h() * lit(1e-9))
}

fn check_source<T: Real>(grid: &Grid<T>, y: &[T]) -> Result<()> {
    if y.len() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "source has {} coordinates, grid dimension is {}",
            y.len(),
            grid.dim()
        )));
    }
    let d = grid.domain().distance_to_boundary(y);
    let required = grid.h() * lit(3.0);
    if !grid.domain().contains(y) || d < required * (T::one() - lit(1e-9)) {
        return Err(Error::SourceTooCloseToBoundary {
            distance: d.to_f64_lossy(),
            required: required.to_f64_lossy(),
        });
    }
    Ok(())
}

/// `(G, g, g(y, y))` for the source `y`.
pub fn compute_green<T: Real>(
    grid: &Arc<Grid<T>>,
    y: &[T],
    opts: &LinearSolveOptions,
) -> Result<(Field<T>, Field<T>, T)> {
    check_source(grid, y)?;
    let c = constants::<T>(grid.dim())?;
    let zero = Field::zeros(grid);
    let (g, _) = solve_dirichlet(&zero, |x| -c.fundamental(dist(x, y)), None, opts)?;
    let src = source_node(grid, y);
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let phi = if Some(i) == src {
            c.fundamental_cell_mean(grid.h())
        } else {
            c.fundamental(dist(&grid.position(i), y))
        };
        vals.push(phi + g.values()[i]);
    }
    let green = Field::from_raw(grid, vals);
    let g_diag = value_at(&g, y)?;
    Ok((green, g, g_diag))
}

/// `(G~, g~, g~(y, y))` from the regular part `g` of `G(., y)`.
pub fn compute_tilde_green<T: Real>(
    grid: &Arc<Grid<T>>,
    y: &[T],
    regular: &Field<T>,
    opts: &LinearSolveOptions,
) -> Result<(Field<T>, Field<T>, T)> {
    check_source(grid, y)?;
    if regular.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: regular.len(),
        });
    }
    let dim = grid.dim();
    let c = constants::<T>(dim)?;
    let q: T = lit(2.0 / (dim as f64 - 2.0));
    let src = source_node(grid, y);
    let rhs: Vec<T> = (0..grid.len())
        .map(|i| {
            let g = regular.values()[i];
            if Some(i) == src {
                return if dim == 4 { g } else { T::zero() };
            }
            let phi = c.fundamental(dist(&grid.position(i), y));
            // G^q - Phi^q = Phi^q ((1 + g/Phi)^q - 1)
            let ratio = g / phi;
            if ratio <= -T::one() {
                -phi.powf(q)
            } else {
                phi.powf(q) * (q * ratio.ln_1p()).exp_m1()
            }
        })
        .collect();
    let rhs = Field::from_raw(grid, rhs);
    let (gt, _) = solve_dirichlet(&rhs, |x| c.log_c * dist(x, y).ln(), None, opts)?;
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let sing = if Some(i) == src {
            c.log_cell_mean(grid.h())
        } else {
            -c.log_c * dist(&grid.position(i), y).ln()
        };
        vals.push(sing + gt.values()[i]);
    }
    let phi_diag = value_at(&gt, y)?;
    Ok((Field::from_raw(grid, vals), gt, phi_diag))
}

/// All Green data for the source `y`.
pub fn green_bundle<T: Real>(
    grid: &Arc<Grid<T>>,
    y: &[T],
    opts: &LinearSolveOptions,
) -> Result<GreenBundle<T>> {
    let (green, regular, g_diag) = compute_green(grid, y, opts)?;
    let (tilde, tilde_regular, phi_diag) = compute_tilde_green(grid, y, &regular, opts)?;
    Ok(GreenBundle {
        y: y.to_vec(),
        green,
        regular,
        tilde,
        tilde_regular,
        g_diag,
        phi_diag,
    })
}

/// `phi~(y)` at one probe, needing only the regular parts.
pub fn robin_value<T: Real>(grid: &Arc<Grid<T>>, y: &[T], opts: &LinearSolveOptions) -> Result<T> {
    let (_, g, _) = compute_green(grid, y, opts)?;
    compute_tilde_green(grid, y, &g, opts).map(|(_, _, v)| v)
}

/// `phi~` at every probe; failures are returned per probe.
pub fn robin_map<T: Real>(
    grid: &Arc<Grid<T>>,
    probes: &[Vec<T>],
    opts: &LinearSolveOptions,
) -> Vec<Result<T>> {
    probes.par_iter().map(|y| robin_value(grid, y, opts)).collect()
}

/// Samples on the lattice `origin + spacing * k`, `0 <= k_a < counts[a]`,
/// stored with the last axis fastest. Missing samples are `None`.
#[derive(Debug, Clone)]
pub struct ProbeLattice<T> {
    pub origin: Vec<T>,
    pub spacing: T,
    pub counts: Vec<usize>,
    pub values: Vec<Option<T>>,
}

impl<T: Real> ProbeLattice<T> {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, k: &[usize]) -> usize {
        k.iter().zip(&self.counts).fold(0, |acc, (a, n)| acc * n + a)
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut k = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            k[a] = i % self.counts[a];
            i /= self.counts[a];
        }
        k
    }

    pub fn point(&self, k: &[usize]) -> Vec<T> {
        k.iter()
            .zip(&self.origin)
            .map(|(a, o)| *o + self.spacing * T::from_usize_lossy(*a))
            .collect()
    }

    /// Builds a lattice from a function; `None` marks a missing sample.
    pub fn from_fn(
        origin: Vec<T>,
        spacing: T,
        counts: Vec<usize>,
        mut f: impl FnMut(&[T]) -> Option<T>,
    ) -> Self {
        let mut lat = Self {
            origin,
            spacing,
            counts,
            values: Vec::new(),
        };
        let total: usize = lat.counts.iter().product();
        lat.values = (0..total)
            .map(|i| {
                let x = lat.point(&lat.multi_index(i));
                f(&x)
            })
            .collect();
        lat
    }

    fn get(&self, k: &[isize]) -> Option<f64> {
        let mut idx = 0usize;
        for (a, n) in k.iter().zip(&self.counts) {
            if *a < 0 || *a as usize >= *n {
                return None;
            }
            idx = idx * n + *a as usize;
        }
        self.values[idx].map(|v| v.to_f64_lossy())
    }
}

/// Samples `phi~` on the lattice `center + spacing * j` restricted to points
/// at distance at least `margin` from the boundary. With `use_symmetry` only
/// the orthant `j >= 0` is solved and the rest filled by reflection, which is
/// exact for the supported domains.
pub fn robin_lattice<T: Real>(
    grid: &Arc<Grid<T>>,
    spacing: T,
    margin: T,
    use_symmetry: bool,
    opts: &LinearSolveOptions,
) -> Result<ProbeLattice<T>> {
    let h = grid.h();
    if !(spacing >= h * lit(2.0 - 1e-9)) {
        return Err(Error::InvalidArgument(format!(
            "probe spacing {spacing} must be at least 2h = {}",
            h * lit(2.0)
        )));
    }
    let margin = margin.max(h * lit(3.0));
    let domain = grid.domain();
    let center = domain.center().to_vec();
    let half = domain.half_widths();
    let reach: Vec<usize> = half
        .iter()
        .map(|w| ((*w - margin) / spacing).floor().max(T::zero()).to_usize().unwrap_or(0))
        .collect();
    let counts: Vec<usize> = reach.iter().map(|r| 2 * r + 1).collect();
    let origin: Vec<T> = center
        .iter()
        .zip(&reach)
        .map(|(c, r)| *c - spacing * T::from_usize_lossy(*r))
        .collect();
    let mut lat = ProbeLattice {
        origin,
        spacing,
        counts,
        values: Vec::new(),
    };
    let total: usize = lat.counts.iter().product();
    let inside = |x: &[T]| domain.contains(x) && domain.distance_to_boundary(x) >= margin;
    // representative of each lattice point
    let rep = |i: usize| -> usize {
        if !use_symmetry {
            return i;
        }
        let k = lat.multi_index(i);
        let r: Vec<usize> = k
            .iter()
            .zip(&reach)
            .map(|(a, c)| if *a < *c { 2 * c - a } else { *a })
            .collect();
        lat.index(&r)
    };
    let reps: Vec<usize> = (0..total).map(rep).collect();
    let mut unique: Vec<usize> = reps.clone();
    unique.sort_unstable();
    unique.dedup();
    let probes: Vec<(usize, Vec<T>)> = unique
        .into_iter()
        .map(|i| (i, lat.point(&lat.multi_index(i))))
        .filter(|(_, x)| inside(x))
        .collect();
    let pts: Vec<Vec<T>> = probes.iter().map(|(_, x)| x.clone()).collect();
    let vals = robin_map(grid, &pts, opts);
    let mut table = vec![None; total];
    for ((i, _), v) in probes.iter().zip(vals) {
        table[*i] = Some(v?);
    }
    lat.values = (0..total)
        .map(|i| {
            let x = lat.point(&lat.multi_index(i));
            if inside(&x) {
                table[reps[i]]
            } else {
                None
            }
        })
        .collect();
    Ok(lat)
}

/// Samples `phi~` on a patch of `per_axis` points per axis with the given
/// spacing, centred at `centre`. With `use_symmetry` the patch must be
/// centred at the domain centre and only one orthant is solved.
pub fn robin_patch<T: Real>(
    grid: &Arc<Grid<T>>,
    centre: &[T],
    spacing: T,
    per_axis: usize,
    use_symmetry: bool,
    opts: &LinearSolveOptions,
) -> Result<ProbeLattice<T>> {
    let h = grid.h();
    let dim = grid.dim();
    if centre.len() != dim {
        return Err(Error::InvalidArgument("patch centre dimension mismatch".into()));
    }
    if !(spacing >= h * lit(2.0 - 1e-9)) {
        return Err(Error::InvalidArgument(format!(
            "probe spacing {spacing} must be at least 2h = {}",
            h * lit(2.0)
        )));
    }
    if per_axis < 2 {
        return Err(Error::InvalidArgument("a patch needs at least 2 points per axis".into()));
    }
    let domain = grid.domain();
    if use_symmetry && dist(centre, domain.center()) > h * lit(1e-9) {
        return Err(Error::InvalidArgument(
            "symmetric patches must be centred at the domain centre".into(),
        ));
    }
    let offset = spacing * lit((per_axis - 1) as f64 / 2.0);
    let mut lat = ProbeLattice {
        origin: centre.iter().map(|c| *c - offset).collect(),
        spacing,
        counts: vec![per_axis; dim],
        values: Vec::new(),
    };
    let total: usize = lat.counts.iter().product();
    let reps: Vec<usize> = (0..total)
        .map(|i| {
            if !use_symmetry {
                return i;
            }
            let k: Vec<usize> = lat
                .multi_index(i)
                .into_iter()
                .map(|a| a.max(per_axis - 1 - a))
                .collect();
            lat.index(&k)
        })
        .collect();
    let mut unique = reps.clone();
    unique.sort_unstable();
    unique.dedup();
    let pts: Vec<Vec<T>> = unique.iter().map(|i| lat.point(&lat.multi_index(*i))).collect();
    let vals = robin_map(grid, &pts, opts);
    let mut table = vec![None; total];
    for (i, v) in unique.iter().zip(vals) {
        table[*i] = match v {
            Ok(x) => Some(x),
            Err(Error::SourceTooCloseToBoundary { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    lat.values = reps.iter().map(|r| table[*r]).collect();
    Ok(lat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Maximum,
    Minimum,
    Saddle,
    Degenerate,
}

impl CriticalKind {
    pub fn label(&self) -> &'static str {
        match self {
            CriticalKind::Maximum => "max",
            CriticalKind::Minimum => "min",
            CriticalKind::Saddle => "saddle",
            CriticalKind::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriticalPoint<T> {
    pub position: Vec<T>,
    pub value: T,
    pub kind: CriticalKind,
    pub hessian_eigenvalues: Vec<T>,
}

/// Finite-difference gradient and Hessian at an interior lattice node.
fn node_derivatives<T: Real>(lat: &ProbeLattice<T>, k: &[isize]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let d = lat.dim();
    let s = lat.spacing.to_f64_lossy();
    let f0 = lat.get(k)?;
    let mut g = vec![0.0; d];
    let mut hm = DMatrix::zeros(d, d);
    let mut kk = k.to_vec();
    for a in 0..d {
        kk[a] = k[a] + 1;
        let fp = lat.get(&kk)?;
        kk[a] = k[a] - 1;
        let fm = lat.get(&kk)?;
        kk[a] = k[a];
        g[a] = (fp - fm) / (2.0 * s);
        hm[(a, a)] = (fp - 2.0 * f0 + fm) / (s * s);
        for b in 0..a {
            let mut acc = 0.0;
            for (da, db, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                kk[a] = k[a] + da;
                kk[b] = k[b] + db;
                acc += sign * lat.get(&kk)?;
                kk[a] = k[a];
                kk[b] = k[b];
            }
            hm[(a, b)] = acc / (4.0 * s * s);
            hm[(b, a)] = hm[(a, b)];
        }
    }
    Some((g, hm))
}

struct DerivativeField {
    grad: Vec<Option<(Vec<f64>, DMatrix<f64>)>>,
}

impl DerivativeField {
    /// Multilinear interpolation of gradient, Hessian and value at the
    /// lattice coordinate `xi`.
    fn eval<T: Real>(&self, lat: &ProbeLattice<T>, xi: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>, f64)> {
        let d = lat.dim();
        let base: Vec<isize> = xi.iter().map(|x| x.floor() as isize).collect();
        let frac: Vec<f64> = xi.iter().zip(&base).map(|(x, b)| x - *b as f64).collect();
        let mut g = vec![0.0; d];
        let mut hm = DMatrix::zeros(d, d);
        let mut val = 0.0;
        let mut corner = vec![0isize; d];
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                if mask >> a & 1 == 1 {
                    corner[a] = base[a] + 1;
                    w *= frac[a];
                } else {
                    corner[a] = base[a];
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let idx = {
                let mut idx = 0usize;
                for (a, n) in corner.iter().zip(&lat.counts) {
                    if *a < 0 || *a as usize >= *n {
                        return None;
                    }
                    idx = idx * n + *a as usize;
                }
                idx
            };
            let (cg, ch) = self.grad[idx].as_ref()?;
            let cv = lat.values[idx]?.to_f64_lossy();
            for a in 0..d {
                g[a] += w * cg[a];
            }
            hm += ch * w;
            val += w * cv;
        }
        Some((g, hm, val))
    }
}

/// Critical points of the sampled map by Newton iteration on the
/// interpolated finite-difference gradient, started from every lattice cell
/// where each gradient component changes sign or is below `threshold`.
pub fn find_critical_points<T: Real>(lat: &ProbeLattice<T>, threshold: T) -> Result<Vec<CriticalPoint<T>>> {
    let d = lat.dim();
    if d == 0 || lat.is_empty() {
        return Err(Error::InsufficientData("empty probe lattice".into()));
    }
    let thr = threshold.to_f64_lossy();
    let s = lat.spacing.to_f64_lossy();
    let field = DerivativeField {
        grad: (0..lat.len())
            .map(|i| {
                let k: Vec<isize> = lat.multi_index(i).into_iter().map(|a| a as isize).collect();
                node_derivatives(lat, &k)
            })
            .collect(),
    };
    let mut found: Vec<(Vec<f64>, f64, DMatrix<f64>)> = Vec::new();
    let cell_counts: Vec<usize> = lat.counts.iter().map(|n| n.saturating_sub(1)).collect();
    let cells: usize = cell_counts.iter().product();
    for c in 0..cells {
        let mut base = vec![0usize; d];
        let mut rem = c;
        for a in (0..d).rev() {
            base[a] = rem % cell_counts[a];
            rem /= cell_counts[a];
        }
        // sign test over the cell corners
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut small = false;
        let mut complete = true;
        for mask in 0..(1usize << d) {
            let k: Vec<usize> = (0..d).map(|a| base[a] + (mask >> a & 1)).collect();
            match &field.grad[lat.index(&k)] {
                Some((g, _)) => {
                    for a in 0..d {
                        lo[a] = lo[a].min(g[a]);
                        hi[a] = hi[a].max(g[a]);
                    }
                    if g.iter().map(|x| x * x).sum::<f64>().sqrt() < thr {
                        small = true;
                    }
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }
        let brackets = (0..d).all(|a| lo[a] <= 0.0 && hi[a] >= 0.0);
        if !(brackets || small) {
            continue;
        }
        let mut xi: Vec<f64> = base.iter().map(|b| *b as f64 + 0.5).collect();
        let mut ok = false;
        for _ in 0..50 {
            let Some((g, hm, _)) = field.eval(lat, &xi) else { break };
            let gv = DVector::from_vec(g.clone());
            let Some(step) = hm.clone().lu().solve(&gv) else { break };
            let mut size = 0.0f64;
            for a in 0..d {
                xi[a] -= step[a] / s;
                size = size.max((step[a] / s).abs());
            }
            if size < 1e-13 {
                ok = true;
                break;
            }
            if size > 2.0 * cells as f64 {
                break;
            }
        }
        if !ok {
            continue;
        }
        let Some((_, hm, val)) = field.eval(lat, &xi) else { continue };
        // keep points that converged inside or next to the starting cell
        let near = xi.iter().zip(&base).all(|(x, b)| *x >= *b as f64 - 1.0 && *x <= *b as f64 + 2.0);
        if !near {
            continue;
        }
        if let Some(prev) = found.iter_mut().find(|(p, _, _)| {
            p.iter().zip(&xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < 1.0
        }) {
            for a in 0..d {
                prev.0[a] = 0.5 * (prev.0[a] + xi[a]);
            }
            continue;
        }
        found.push((xi, val, hm));
    }
    if found.is_empty() {
        return Err(Error::NoCriticalPoint);
    }
    Ok(found
        .into_iter()
        .map(|(xi, val, hm)| {
            let eig = SymmetricEigen::new(hm).eigenvalues;
            let scale = eig.iter().map(|e| e.abs()).fold(0.0, f64::max);
            let tiny = 1e-9 * scale.max(f64::MIN_POSITIVE);
            let kind = if eig.iter().any(|e| e.abs() <= tiny) {
                CriticalKind::Degenerate
            } else if eig.iter().all(|e| *e < 0.0) {
                CriticalKind::Maximum
            } else if eig.iter().all(|e| *e > 0.0) {
                CriticalKind::Minimum
            } else {
                CriticalKind::Saddle
            };
            let mut ev: Vec<f64> = eig.iter().cloned().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            CriticalPoint {
                position: xi
                    .iter()
                    .zip(&lat.origin)
                    .map(|(x, o)| *o + lat.spacing * lit(*x))
                    .collect(),
                value: lit(val),
                kind,
                hessian_eigenvalues: ev.into_iter().map(lit).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};
    use std::f64::consts::PI;

    #[test]
    fn constants_in_four_dimensions() {
        let c = constants::<f64>(4).unwrap();
        assert!((c.omega - 2.0 * PI * PI).abs() < 1e-13);
        assert!((c.b0 - 32.0 * PI * PI).abs() < 1e-11);
        assert!((c.log_c - 1.0 / (8.0 * PI * PI)).abs() < 1e-15);
        assert!((c.cp_limit - 8.0 * PI * std::f64::consts::E.sqrt()).abs() < 1e-11);
        let c3 = constants::<f64>(3).unwrap();
        assert!((c3.b0 - 48.0 * PI * PI).abs() < 1e-10);
        for n in 3..=10 {
            let c = constants::<f64>(n).unwrap();
            assert!((c.b0 * c.log_c - n as f64).abs() < 1e-13 * n as f64);
        }
    }

    #[test]
    fn ball_green_function_at_centre() {
        let g = build_grid(DomainSpec::ball(4, 1.0).unwrap(), 0.125).unwrap();
        let opts = LinearSolveOptions::default();
        let b = green_bundle(&g, &[0.0; 4], &opts).unwrap();
        let k = 1.0 / (4.0 * PI * PI);
        assert!((b.g_diag + k).abs() < 1e-6 * k);
        let exact = -1.0 / (32.0 * PI * PI);
        assert!((b.phi_diag - exact).abs() < 0.02 * exact.abs(), "{} {exact}", b.phi_diag);
        assert!(b.green.min() > 0.0);
        assert!(b.tilde.min() > 0.0);
    }

    #[test]
    fn quadratic_critical_point_is_exact() {
        let a = [0.23f64, -0.41];
        let lat = ProbeLattice::from_fn(vec![-1.0, -1.0], 0.25, vec![9, 9], |x| {
            Some((x[0] - a[0]).powi(2) + 2.0 * (x[1] - a[1]).powi(2) + 0.3 * (x[0] - a[0]) * (x[1] - a[1]))
        });
        let cps = find_critical_points(&lat, 1e-12).unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].kind, CriticalKind::Minimum);
        for i in 0..2 {
            assert!((cps[0].position[i] - a[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn two_bumps_and_saddle() {
        let f = |x: &[f64]| {
            (-((x[0] - 0.6).powi(2) + x[1].powi(2)) / 0.2).exp() + (-((x[0] + 0.6).powi(2) + x[1].powi(2)) / 0.2).exp()
        };
        let lat = ProbeLattice::from_fn(vec![-1.5, -1.0], 0.05, vec![61, 41], |x| Some(f(x)));
        let cps = find_critical_points(&lat, 1e-9).unwrap();
        let maxima: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Maximum).collect();
        let saddles: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Saddle).collect();
        assert_eq!(maxima.len(), 2, "{cps:?}");
        assert_eq!(saddles.len(), 1, "{cps:?}");
        assert!(saddles[0].position[0].abs() < 0.05 && saddles[0].position[1].abs() < 0.05);
        for m in maxima {
            assert!((m.position[0].abs() - 0.6).abs() < 0.05, "{:?}", m.position);
        }
    }
}
