//! Convex domains, their uniform Cartesian discretization and quadrature.
//!
//! Grids are anchored at the domain center: node `k` sits at `center + h*k`
//! for an integer vector `k`, and only points strictly inside the domain are
//! nodes. Along every axis a node either has an interior neighbor or records
//! the fraction `theta` in (0, 1] of a spacing at which the boundary is cut
//! (the data needed by cut-cell stencils).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// Largest dimension for which grids can be built.
pub const MAX_GRID_DIM: usize = 6;

/// Sentinel for "no interior neighbor in this direction".
pub const NO_NODE: u32 = u32::MAX;

/// Geometry of a convex domain.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind<T> {
    Ball { radius: T },
    Ellipsoid { semiaxes: Vec<T> },
    /// Axis-aligned box; `extents` are full edge lengths.
    Box { extents: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec<T> {
    kind: DomainKind<T>,
    center: Vec<T>,
}

impl<T: Real> DomainSpec<T> {
    pub fn new(kind: DomainKind<T>, center: Vec<T>) -> Result<Self> {
        let dim = center.len();
        if dim < 3 {
            return Err(Error::InvalidDomain(format!(
                "dimension must be at least 3, got {dim}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain("center must be finite".into()));
        }
        let positive = |v: &[T], what: &str| -> Result<()> {
            if v.len() != dim {
                return Err(Error::InvalidDomain(format!(
                    "{what} has {} entries for dimension {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > T::zero())) {
                return Err(Error::InvalidDomain(format!("{what} must be positive")));
            }
            Ok(())
        };
        match &kind {
            DomainKind::Ball { radius } => {
                if !(radius.is_finite() && *radius > T::zero()) {
                    return Err(Error::InvalidDomain("radius must be positive".into()));
                }
            }
            DomainKind::Ellipsoid { semiaxes } => positive(semiaxes, "semiaxes")?,
            DomainKind::Box { extents } => positive(extents, "extents")?,
        }
        Ok(Self { kind, center })
    }

    /// Ball of the given radius centered at the origin.
    pub fn ball(dim: usize, radius: T) -> Result<Self> {
        Self::new(DomainKind::Ball { radius }, vec![T::zero(); dim])
    }

    pub fn ellipsoid(semiaxes: Vec<T>) -> Result<Self> {
        let dim = semiaxes.len();
        Self::new(DomainKind::Ellipsoid { semiaxes }, vec![T::zero(); dim])
    }

    /// Box with the given full edge lengths centered at `center`.
    pub fn cuboid(extents: Vec<T>, center: Vec<T>) -> Result<Self> {
        Self::new(DomainKind::Box { extents }, center)
    }

    pub fn kind(&self) -> &DomainKind<T> {
        &self.kind
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Short human-readable tag used in reports and file headers.
    pub fn label(&self) -> String {
        let join = |v: &[T]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.kind {
            DomainKind::Ball { radius } => format!("ball(R={radius})"),
            DomainKind::Ellipsoid { semiaxes } => format!("ellipsoid({})", join(semiaxes)),
            DomainKind::Box { extents } => format!("box({})", join(extents)),
        }
    }

    /// Boxes have edges and corners, so they fall outside the smooth-boundary
    /// hypothesis of the asymptotic theory.
    pub fn has_smooth_boundary(&self) -> bool {
        !matches!(self.kind, DomainKind::Box { .. })
    }

    /// Per-axis half widths of the bounding box.
    pub fn half_widths(&self) -> Vec<T> {
        let n = self.dim();
        match &self.kind {
            DomainKind::Ball { radius } => vec![*radius; n],
            DomainKind::Ellipsoid { semiaxes } => semiaxes.clone(),
            DomainKind::Box { extents } => extents.iter().map(|e| *e * lit(0.5)).collect(),
        }
    }

    /// Radius of the largest inscribed ball centered at `center`.
    pub fn inradius(&self) -> T {
        self.half_widths()
            .into_iter()
            .fold(T::infinity(), |a, b| a.min(b))
    }

    pub fn volume(&self) -> T {
        let n = self.dim();
        let unit_ball = unit_sphere_area::<T>(n) / T::from_usize_lossy(n);
        match &self.kind {
            DomainKind::Ball { radius } => unit_ball * radius.powi(n as i32),
            DomainKind::Ellipsoid { semiaxes } => {
                unit_ball * semiaxes.iter().fold(T::one(), |a, b| a * *b)
            }
            DomainKind::Box { extents } => extents.iter().fold(T::one(), |a, b| a * *b),
        }
    }

    /// Level-set function: negative inside, zero on the boundary.
    ///
    /// For balls and ellipsoids this is `|y|_A - 1` in the scaled norm, for
    /// boxes the Chebyshev excess `max_i |y_i| - e_i/2`.
    pub fn level(&self, x: &[T]) -> T {
        match &self.kind {
            DomainKind::Ball { radius } => {
                let r2: T = x
                    .iter()
                    .zip(&self.center)
                    .map(|(a, c)| (*a - *c) * (*a - *c))
                    .sum();
                r2.sqrt() / *radius - T::one()
            }
            DomainKind::Ellipsoid { semiaxes } => {
                let s: T = x
                    .iter()
                    .zip(&self.center)
                    .zip(semiaxes)
                    .map(|((a, c), s)| {
                        let y = (*a - *c) / *s;
                        y * y
                    })
                    .sum();
                s.sqrt() - T::one()
            }
            DomainKind::Box { extents } => x
                .iter()
                .zip(&self.center)
                .zip(extents)
                .map(|((a, c), e)| (*a - *c).abs() - *e * lit(0.5))
                .fold(T::neg_infinity(), |a, b| a.max(b)),
        }
    }

    /// Factor turning [`level`](Self::level) into a lower bound on the
    /// Euclidean distance to the boundary.
    pub fn level_scale(&self) -> T {
        match &self.kind {
            DomainKind::Ball { radius } => *radius,
            DomainKind::Ellipsoid { .. } => self.inradius(),
            DomainKind::Box { .. } => T::one(),
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.level(x) < T::zero()
    }

    /// Distance from an interior point `x` to the boundary along `+e_axis`
    /// (`forward == true`) or `-e_axis`.
    pub fn ray_exit(&self, x: &[T], axis: usize, forward: bool) -> T {
        let y: Vec<T> = x.iter().zip(&self.center).map(|(a, c)| *a - *c).collect();
        let sign = if forward { T::one() } else { -T::one() };
        match &self.kind {
            DomainKind::Box { extents } => extents[axis] * lit(0.5) - sign * y[axis],
            DomainKind::Ball { .. } | DomainKind::Ellipsoid { .. } => {
                let axes = self.half_widths();
                let mut rest = T::one();
                for (j, (yj, aj)) in y.iter().zip(&axes).enumerate() {
                    if j != axis {
                        rest -= (*yj / *aj) * (*yj / *aj);
                    }
                }
                let reach = axes[axis] * rest.max(T::zero()).sqrt();
                reach - sign * y[axis]
            }
        }
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, x: &[T]) -> T {
        let y: Vec<T> = x.iter().zip(&self.center).map(|(a, c)| *a - *c).collect();
        match &self.kind {
            DomainKind::Ball { radius } => {
                let r: T = y.iter().map(|v| *v * *v).sum::<T>().sqrt();
                *radius - r
            }
            DomainKind::Box { extents } => y
                .iter()
                .zip(extents)
                .map(|(v, e)| *e * lit(0.5) - v.abs())
                .fold(T::infinity(), |a, b| a.min(b)),
            DomainKind::Ellipsoid { semiaxes } => ellipsoid_distance(&y, semiaxes),
        }
    }

    /// Outward unit normal at a boundary point.
    pub fn normal_at(&self, z: &[T]) -> Vec<T> {
        let y: Vec<T> = z.iter().zip(&self.center).map(|(a, c)| *a - *c).collect();
        let raw: Vec<T> = match &self.kind {
            DomainKind::Ball { .. } => y,
            DomainKind::Ellipsoid { semiaxes } => y
                .iter()
                .zip(semiaxes)
                .map(|(v, a)| *v / (*a * *a))
                .collect(),
            DomainKind::Box { extents } => {
                // face with the largest relative excursion
                let (mut best, mut axis) = (T::neg_infinity(), 0);
                for (i, (v, e)) in y.iter().zip(extents).enumerate() {
                    let d = v.abs() - *e * lit(0.5);
                    if d > best {
                        best = d;
                        axis = i;
                    }
                }
                let mut n = vec![T::zero(); y.len()];
                n[axis] = y[axis].signum();
                n
            }
        };
        normalize(raw)
    }
}

fn normalize<T: Real>(v: Vec<T>) -> Vec<T> {
    let len: T = v.iter().map(|a| *a * *a).sum::<T>().sqrt();
    v.into_iter().map(|a| a / len).collect()
}

/// Distance from an interior point `y` (relative to the center) to the
/// ellipsoid with the given semiaxes, via the Lagrange-multiplier root
/// `sum (a_i y_i / (a_i^2 + t))^2 = 1` on `t in (-a_min^2, 0]`.
fn ellipsoid_distance<T: Real>(y: &[T], a: &[T]) -> T {
    let a_min = a.iter().fold(T::infinity(), |m, v| m.min(*v));
    let eps = lit::<T>(1e-12);
    let on_min: Vec<bool> = a
        .iter()
        .map(|v| (*v - a_min).abs() <= eps * a_min)
        .collect();
    let f = |t: T| -> T {
        y.iter()
            .zip(a)
            .map(|(yi, ai)| {
                let z = *ai * *yi / (*ai * *ai + t);
                z * z
            })
            .sum::<T>()
            - T::one()
    };
    let degenerate = y
        .iter()
        .zip(&on_min)
        .all(|(yi, m)| !*m || yi.abs() <= eps * a_min);
    let lower = -a_min * a_min;
    let mut value_at_lower = T::infinity();
    if degenerate {
        value_at_lower = y
            .iter()
            .zip(a)
            .zip(&on_min)
            .filter(|(_, m)| !**m)
            .map(|((yi, ai), _)| {
                let z = *ai * *yi / (*ai * *ai - a_min * a_min);
                z * z
            })
            .sum::<T>()
            - T::one();
    }
    if degenerate && value_at_lower <= T::zero() {
        // nearest point lies on the flat branch t = -a_min^2
        let mut d2 = T::zero();
        let mut used = T::zero();
        for ((yi, ai), m) in y.iter().zip(a).zip(&on_min) {
            if !*m {
                let zi = *ai * *ai * *yi / (*ai * *ai - a_min * a_min);
                d2 += (zi - *yi) * (zi - *yi);
                used += (zi / *ai) * (zi / *ai);
            }
        }
        d2 += a_min * a_min * (T::one() - used).max(T::zero());
        return d2.sqrt();
    }
    let (mut lo, mut hi) = (lower, T::zero());
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (lo + hi) * lit(0.5);
    y.iter()
        .zip(a)
        .map(|(yi, ai)| {
            let zi = *ai * *ai * *yi / (*ai * *ai + t);
            (zi - *yi) * (zi - *yi)
        })
        .sum::<T>()
        .sqrt()
}

/// Area of the unit sphere `S^{n-1}` in `R^n`: `2 pi^{n/2} / Gamma(n/2)`.
pub fn unit_sphere_area<T: Real>(n: usize) -> T {
    // Gamma(n/2) by the recursion from Gamma(1) = 1 or Gamma(1/2) = sqrt(pi)
    let pi = T::PI();
    let mut gamma = if n % 2 == 0 { T::one() } else { pi.sqrt() };
    let mut x = if n % 2 == 0 { T::one() } else { lit(0.5) };
    let target = T::from_usize_lossy(n) * lit(0.5);
    while x < target - lit(0.25) {
        gamma *= x;
        x += T::one();
    }
    lit::<T>(2.0) * pi.powf(target) / gamma
}

/// Status of a lattice point `center + h*k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticePoint {
    Interior(usize),
    /// On the boundary, where Dirichlet fields vanish.
    Boundary,
    Outside,
}

/// Uniform Cartesian grid restricted to a domain.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    domain: DomainSpec<T>,
    h: T,
    dim: usize,
    /// Lattice offsets, `dim` entries per node.
    coords: Vec<i32>,
    /// Neighbor indices, `2*dim` per node ordered (axis0-, axis0+, axis1-, ...).
    links: Vec<u32>,
    /// Cut fraction in (0, 1] where `links` holds [`NO_NODE`], otherwise 1.
    cuts: Vec<T>,
    node_volume: Vec<T>,
    /// Trapezoid weights `h^N prod_a (theta_a- + theta_a+)/2`.
    mass: Vec<T>,
    /// Scaled diagonal of the stiffness matrix: sum over directions of 1 or 1/theta.
    diag: Vec<T>,
    half: Vec<i32>,
    strides: Vec<usize>,
    dense: Vec<u32>,
}

/// Build the grid of all lattice points strictly inside `domain`.
pub fn build_grid<T: Real>(domain: DomainSpec<T>, h: T) -> Result<Arc<Grid<T>>> {
    if !(h > T::zero() && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {h}")));
    }
    let inr = domain.inradius();
    if h > inr * (T::one() + lit(1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "spacing {h} exceeds half the smallest domain extent {inr}"
        )));
    }
    let dim = domain.dim();
    if dim > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(format!(
            "grids are limited to dimension {MAX_GRID_DIM}, got {dim}"
        )));
    }
    let half: Vec<i32> = domain
        .half_widths()
        .iter()
        .map(|w| (*w / h).floor().to_i64().unwrap_or(0) as i32)
        .collect();
    let sizes: Vec<usize> = half.iter().map(|m| (2 * *m + 1) as usize).collect();
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * sizes[a + 1];
    }
    let total: usize = sizes.iter().product();
    let mut dense = vec![NO_NODE; total];
    let mut coords = Vec::new();
    let mut k: Vec<i32> = half.iter().map(|m| -*m).collect();
    let mut x = vec![T::zero(); dim];
    let mut count = 0usize;
    for flat in 0..total {
        for a in 0..dim {
            x[a] = domain.center[a] + h * T::from_i32(k[a]).unwrap();
        }
        if domain.contains(&x) {
            dense[flat] = count as u32;
            coords.extend_from_slice(&k);
            count += 1;
        }
        // lexicographic increment, last axis fastest
        for a in (0..dim).rev() {
            k[a] += 1;
            if k[a] <= half[a] {
                break;
            }
            k[a] = -half[a];
        }
    }
    if count == 0 {
        return Err(Error::EmptyGrid);
    }
    let mut grid = Grid {
        domain,
        h,
        dim,
        coords,
        links: vec![NO_NODE; count * 2 * dim],
        cuts: vec![T::one(); count * 2 * dim],
        node_volume: vec![T::zero(); count],
        mass: vec![T::zero(); count],
        diag: vec![T::zero(); count],
        half,
        strides,
        dense,
    };
    let mut kk = vec![0i32; dim];
    for i in 0..count {
        let x = grid.position(i);
        let mut diag = T::zero();
        for a in 0..dim {
            for (s, forward) in [(0usize, false), (1usize, true)] {
                kk.copy_from_slice(grid.coord(i));
                kk[a] += if forward { 1 } else { -1 };
                let slot = i * 2 * dim + 2 * a + s;
                match grid.lookup(&kk) {
                    Some(j) => {
                        grid.links[slot] = j as u32;
                        diag += T::one();
                    }
                    None => {
                        let t = grid.domain.ray_exit(&x, a, forward) / h;
                        let theta = t.max(lit(1e-12)).min(T::one());
                        grid.cuts[slot] = theta;
                        diag += T::one() / theta;
                    }
                }
            }
        }
        grid.diag[i] = diag;
    }
    assign_node_volumes(&mut grid);
    let hn = h.powi(dim as i32);
    for i in 0..count {
        let mut m = hn;
        for a in 0..dim {
            let l = grid.cuts[i * 2 * dim + 2 * a];
            let r = grid.cuts[i * 2 * dim + 2 * a + 1];
            m *= (l + r) * lit(0.5);
        }
        grid.mass[i] = m;
    }
    Ok(Arc::new(grid))
}

/// Node volumes from a nearest-node partition of the domain.
///
/// Cells `center + h*(k + [-1/2, 1/2]^N)` lying inside the domain belong to
/// their node. Cells crossed by the boundary are subsampled on a regular
/// sub-lattice and each interior subsample is credited to the nearest
/// interior node within one lattice step.
fn assign_node_volumes<T: Real>(grid: &mut Grid<T>) {
    let dim = grid.dim;
    let h = grid.h;
    let hn = h.powi(dim as i32);
    grid.node_volume.iter_mut().for_each(|w| *w = hn);
    let sub = if dim <= 4 { 4usize } else { 3 };
    let sub_vol = hn / T::from_usize_lossy(sub).powi(dim as i32);
    let half_diag = h * T::from_usize_lossy(dim).sqrt() * lit(0.5);
    let scale = grid.domain.level_scale();
    let reach: Vec<i32> = grid.half.iter().map(|m| *m + 1).collect();
    let mut k: Vec<i32> = reach.iter().map(|m| -*m).collect();
    let mut center = vec![T::zero(); dim];
    let mut y = vec![T::zero(); dim];
    let mut nb = vec![0i32; dim];
    let mut candidates: Vec<(usize, Vec<T>)> = Vec::new();
    let offsets: Vec<T> = (0..sub)
        .map(|j| (T::from_usize_lossy(j) + lit(0.5)) / T::from_usize_lossy(sub) - lit(0.5))
        .collect();
    loop {
        for a in 0..dim {
            center[a] = grid.domain.center[a] + h * T::from_i32(k[a]).unwrap();
        }
        let bound = grid.domain.level(&center) * scale;
        if bound.abs() <= half_diag {
            let own = grid.lookup(&k);
            candidates.clear();
            match own {
                Some(i) => {
                    grid.node_volume[i] -= hn;
                    candidates.push((i, center.clone()));
                }
                None => {
                    let mut idx = vec![0usize; dim];
                    loop {
                        for a in 0..dim {
                            nb[a] = k[a] + idx[a] as i32 - 1;
                        }
                        if let Some(j) = grid.lookup(&nb) {
                            candidates.push((j, grid.position(j)));
                        }
                        if !advance(&mut idx, &vec![3; dim]) {
                            break;
                        }
                    }
                }
            }
            if !candidates.is_empty() {
                let mut idx = vec![0usize; dim];
                loop {
                    for a in 0..dim {
                        y[a] = center[a] + h * offsets[idx[a]];
                    }
                    if grid.domain.contains(&y) {
                        let mut best = 0;
                        let mut best_d = T::infinity();
                        for (c, (_, p)) in candidates.iter().enumerate() {
                            let d: T = p.iter().zip(&y).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                            if d < best_d {
                                best_d = d;
                                best = c;
                            }
                        }
                        grid.node_volume[candidates[best].0] += sub_vol;
                    }
                    if !advance(&mut idx, &vec![sub; dim]) {
                        break;
                    }
                }
            }
        }
        // next lattice cell
        let mut a = dim;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            k[a] += 1;
            if k[a] <= reach[a] {
                break;
            }
            k[a] = -reach[a];
        }
    }
}

impl<T: Real> Grid<T> {
    pub fn domain(&self) -> &DomainSpec<T> {
        &self.domain
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.node_volume.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_volume.is_empty()
    }

    /// Integer lattice offset of node `i` from the domain center.
    pub fn coord(&self, i: usize) -> &[i32] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, i: usize) -> Vec<T> {
        self.coord(i)
            .iter()
            .zip(&self.domain.center)
            .map(|(k, c)| *c + self.h * T::from_i32(*k).unwrap())
            .collect()
    }

    /// Quadrature weights of a nearest-node partition of the domain.
    pub fn node_volume(&self) -> &[T] {
        &self.node_volume
    }

    /// Weights `h^N prod_a (theta_a- + theta_a+)/2`, with `theta = 1` for
    /// interior links. They are the trapezoid rule for fields vanishing on
    /// the boundary and the mass matrix of the discrete Laplacian.
    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    /// Neighbor of node `i` along `axis`, or `None` if the boundary cuts first.
    pub fn neighbor(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let slot = i * 2 * self.dim + 2 * axis + usize::from(forward);
        let j = self.links[slot];
        (j != NO_NODE).then_some(j as usize)
    }

    /// Boundary cut distance (length units) along `axis`, if there is one.
    pub fn boundary_distance(&self, i: usize, axis: usize, forward: bool) -> Option<T> {
        let slot = i * 2 * self.dim + 2 * axis + usize::from(forward);
        (self.links[slot] == NO_NODE).then(|| self.cuts[slot] * self.h)
    }

    pub fn is_boundary_adjacent(&self, i: usize) -> bool {
        self.links[i * 2 * self.dim..(i + 1) * 2 * self.dim]
            .iter()
            .any(|j| *j == NO_NODE)
    }

    pub(crate) fn links(&self) -> &[u32] {
        &self.links
    }

    pub(crate) fn cuts(&self) -> &[T] {
        &self.cuts
    }

    pub(crate) fn stiffness_diag(&self) -> &[T] {
        &self.diag
    }

    /// Node index at integer offset `k`, if it is an interior node.
    pub fn lookup(&self, k: &[i32]) -> Option<usize> {
        let mut flat = 0usize;
        for a in 0..self.dim {
            let m = self.half[a];
            if k[a] < -m || k[a] > m {
                return None;
            }
            flat += (k[a] + m) as usize * self.strides[a];
        }
        let j = self.dense[flat];
        (j != NO_NODE).then_some(j as usize)
    }

    /// Classify the lattice point at integer offset `k`.
    pub fn lattice_point(&self, k: &[i32]) -> LatticePoint {
        if let Some(i) = self.lookup(k) {
            return LatticePoint::Interior(i);
        }
        let mut x = [T::zero(); MAX_GRID_DIM];
        for a in 0..self.dim {
            x[a] = self.domain.center[a] + self.h * T::from_i32(k[a]).unwrap();
        }
        if self.domain.level(&x[..self.dim]).abs() <= lit(1e-12) {
            LatticePoint::Boundary
        } else {
            LatticePoint::Outside
        }
    }

    /// Nodal value at a lattice point: interior value, zero on the boundary,
    /// `None` outside.
    #[inline]
    fn lattice_value(&self, values: &[T], k: &[i32]) -> Option<T> {
        match self.lattice_point(k) {
            LatticePoint::Interior(i) => Some(values[i]),
            LatticePoint::Boundary => Some(T::zero()),
            LatticePoint::Outside => None,
        }
    }

    /// Index of the interior node nearest to `x`, if `x` rounds onto one.
    pub fn nearest_node(&self, x: &[T]) -> Option<usize> {
        let k: Vec<i32> = x
            .iter()
            .zip(&self.domain.center)
            .map(|(a, c)| ((*a - *c) / self.h).round().to_i64().unwrap_or(i64::MAX) as i32)
            .collect();
        self.lookup(&k)
    }

    /// Multilinear interpolation of nodal `values` at `x`, treating boundary
    /// lattice points as zero. `None` if a corner of the enclosing cell lies
    /// outside the domain.
    pub fn interpolate(&self, values: &[T], x: &[T]) -> Option<T> {
        let dim = self.dim;
        let mut base = [0i32; MAX_GRID_DIM];
        let mut frac = [T::zero(); MAX_GRID_DIM];
        for a in 0..dim {
            let xi = (x[a] - self.domain.center[a]) / self.h;
            let f = xi.floor();
            base[a] = f.to_i64()? as i32;
            frac[a] = xi - f;
        }
        let mut acc = T::zero();
        let mut corner = [0i32; MAX_GRID_DIM];
        for mask in 0..(1usize << dim) {
            let mut w = T::one();
            for a in 0..dim {
                if mask >> a & 1 == 1 {
                    corner[a] = base[a] + 1;
                    w *= frac[a];
                } else {
                    corner[a] = base[a];
                    w *= T::one() - frac[a];
                }
            }
            match self.lattice_value(values, &corner[..dim]) {
                Some(v) => acc += w * v,
                None => {
                    if w > lit(1e-14) {
                        return None;
                    }
                }
            }
        }
        Some(acc)
    }

    /// Tensor-product quadratic interpolation of nodal `values` at `x`,
    /// boundary lattice points counting as zero. Tries the stencil centered
    /// on the nearest lattice point, then one shifted towards `inward`.
    pub fn interpolate_quadratic(&self, values: &[T], x: &[T], inward: &[T]) -> Option<T> {
        let dim = self.dim;
        let mut xi = [T::zero(); MAX_GRID_DIM];
        let mut start = [0i32; MAX_GRID_DIM];
        for a in 0..dim {
            xi[a] = (x[a] - self.domain.center[a]) / self.h;
            start[a] = xi[a].round().to_i64()? as i32 - 1;
        }
        if let Some(v) = self.quadratic_from(values, &xi[..dim], &start[..dim]) {
            return Some(v);
        }
        for a in 0..dim {
            let f = xi[a].floor().to_i64()? as i32;
            start[a] = if inward[a] >= T::zero() { f } else { f - 1 };
        }
        self.quadratic_from(values, &xi[..dim], &start[..dim])
    }

    fn quadratic_from(&self, values: &[T], xi: &[T], start: &[i32]) -> Option<T> {
        let dim = self.dim;
        let half = lit::<T>(0.5);
        let two = lit::<T>(2.0);
        let mut weights = [[T::zero(); 3]; MAX_GRID_DIM];
        for a in 0..dim {
            let t = xi[a] - T::from_i32(start[a]).unwrap();
            weights[a] = [
                (t - T::one()) * (t - two) * half,
                -t * (t - two),
                t * (t - T::one()) * half,
            ];
        }
        let mut acc = T::zero();
        let mut corner = [0i32; MAX_GRID_DIM];
        for flat in 0..3usize.pow(dim as u32) {
            let mut rest = flat;
            let mut w = T::one();
            for a in 0..dim {
                let j = rest % 3;
                rest /= 3;
                corner[a] = start[a] + j as i32;
                w *= weights[a][j];
            }
            acc += w * self.lattice_value(values, &corner[..dim])?;
        }
        Some(acc)
    }
}

/// Surface quadrature element on the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFacet<T> {
    pub position: Vec<T>,
    pub normal: Vec<T>,
    pub weight: T,
}

/// Boundary facets at a resolution matched to the grid spacing.
///
/// Balls and ellipsoids use a midpoint rule in hyperspherical angles mapped to
/// the surface; boxes tile each face with midpoint cells. Box edges and
/// corners carry no facets of their own, so box surface quadrature is only
/// first-order accurate for integrands that are not constant on faces.
pub fn boundary_facets<T: Real>(grid: &Grid<T>) -> Result<Vec<BoundaryFacet<T>>> {
    let domain = grid.domain();
    let widths = domain.half_widths();
    let longest = widths.iter().fold(T::zero(), |a, b| a.max(*b));
    let cells = match domain.kind() {
        DomainKind::Box { .. } => 0,
        _ => (T::PI() * longest / grid.h()).ceil().to_usize().unwrap_or(8).max(8),
    };
    boundary_facets_with(domain, cells, grid.h())
}

/// Boundary facets with `polar_cells` midpoint cells per polar angle (balls
/// and ellipsoids) or a face cell size of about `face_cell` (boxes).
pub fn boundary_facets_with<T: Real>(
    domain: &DomainSpec<T>,
    polar_cells: usize,
    face_cell: T,
) -> Result<Vec<BoundaryFacet<T>>> {
    let dim = domain.dim();
    let center = domain.center();
    match domain.kind() {
        DomainKind::Box { extents } => {
            if !(face_cell > T::zero()) {
                return Err(Error::UnsupportedDomain(
                    "box faces need a positive cell size".into(),
                ));
            }
            let counts: Vec<usize> = extents
                .iter()
                .map(|e| (*e / face_cell).ceil().to_usize().unwrap_or(1).max(1))
                .collect();
            let mut out = Vec::new();
            for axis in 0..dim {
                let others: Vec<usize> = (0..dim).filter(|b| *b != axis).collect();
                let cell_area = others
                    .iter()
                    .map(|b| extents[*b] / T::from_usize_lossy(counts[*b]))
                    .fold(T::one(), |a, b| a * b);
                for side in [-T::one(), T::one()] {
                    let mut idx = vec![0usize; others.len()];
                    loop {
                        let mut pos = center.to_vec();
                        pos[axis] = center[axis] + side * extents[axis] * lit(0.5);
                        for (slot, b) in others.iter().enumerate() {
                            let width = extents[*b] / T::from_usize_lossy(counts[*b]);
                            pos[*b] = center[*b] - extents[*b] * lit(0.5)
                                + width * (T::from_usize_lossy(idx[slot]) + lit(0.5));
                        }
                        let mut normal = vec![T::zero(); dim];
                        normal[axis] = side;
                        out.push(BoundaryFacet {
                            position: pos,
                            normal,
                            weight: cell_area,
                        });
                        if !advance(&mut idx, &others.iter().map(|b| counts[*b]).collect::<Vec<_>>())
                        {
                            break;
                        }
                    }
                }
            }
            Ok(out)
        }
        DomainKind::Ball { .. } | DomainKind::Ellipsoid { .. } => {
            let axes = domain.half_widths();
            let n_polar = polar_cells.max(2);
            // N-2 polar angles on [0, pi], one azimuth on [0, 2 pi)
            let mut counts = vec![n_polar; dim - 1];
            counts[dim - 2] = 2 * n_polar;
            let dpolar = T::PI() / T::from_usize_lossy(n_polar);
            let dazim = lit::<T>(2.0) * T::PI() / T::from_usize_lossy(2 * n_polar);
            let det: T = axes.iter().fold(T::one(), |a, b| a * *b);
            let mut idx = vec![0usize; dim - 1];
            let mut out = Vec::with_capacity(counts.iter().product());
            let mut theta = vec![T::zero(); dim];
            loop {
                // unit sphere point and Jacobian of hyperspherical angles
                let mut sin_prod = T::one();
                let mut jac = T::one();
                for (j, &ij) in idx.iter().enumerate().take(dim - 2) {
                    let phi = dpolar * (T::from_usize_lossy(ij) + lit(0.5));
                    theta[j] = sin_prod * phi.cos();
                    jac *= phi.sin().powi((dim - 2 - j) as i32);
                    sin_prod *= phi.sin();
                }
                let last = dazim * (T::from_usize_lossy(idx[dim - 2]) + lit(0.5));
                theta[dim - 2] = sin_prod * last.cos();
                theta[dim - 1] = sin_prod * last.sin();
                let d_sphere = jac * dpolar.powi((dim - 2) as i32) * dazim;
                // surface element of x = A theta is det(A) |A^{-T} theta| dS
                let at: Vec<T> = theta.iter().zip(&axes).map(|(t, a)| *t / *a).collect();
                let at_len: T = at.iter().map(|v| *v * *v).sum::<T>().sqrt();
                let position: Vec<T> = theta
                    .iter()
                    .zip(&axes)
                    .zip(center)
                    .map(|((t, a), c)| *c + *a * *t)
                    .collect();
                let normal: Vec<T> = at.iter().map(|v| *v / at_len).collect();
                out.push(BoundaryFacet {
                    position,
                    normal,
                    weight: det * at_len * d_sphere,
                });
                if !advance(&mut idx, &counts) {
                    break;
                }
            }
            Ok(out)
        }
    }
}

/// Mixed-radix counter; returns false after the last combination.
fn advance(idx: &mut [usize], counts: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < counts[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// Volume quadrature `sum_i field_i * node_volume_i`.
pub fn integrate<T: Real>(field: &crate::operators::Field<T>, grid: &Grid<T>) -> Result<T> {
    if field.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: field.len(),
        });
    }
    Ok(integrate_values(field.values(), grid))
}

pub(crate) fn integrate_values<T: Real>(values: &[T], grid: &Grid<T>) -> T {
    values
        .iter()
        .zip(grid.node_volume())
        .map(|(f, w)| *f * *w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area::<f64>(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area::<f64>(4), 2.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(
            unit_sphere_area::<f64>(5),
            8.0 * PI * PI / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_low_dimension_and_bad_extents() {
        assert!(DomainSpec::<f64>::ball(2, 1.0).is_err());
        assert!(DomainSpec::<f64>::ball(3, -1.0).is_err());
        assert!(DomainSpec::ellipsoid(vec![1.0, 0.0, 1.0]).is_err());
        assert!(DomainSpec::cuboid(vec![1.0, 1.0], vec![0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn small_ball_enumeration() {
        // lattice {-1,0,1}^3 * 0.5: every point has |x|^2 <= 0.75 < 1
        let g = build_grid(DomainSpec::ball(3, 1.0).unwrap(), 0.5).unwrap();
        assert_eq!(g.len(), 27);
        // the axis points at distance 1 lie on the sphere and are excluded
        assert_eq!(g.lookup(&[2, 0, 0]), None);
        let c = g.lookup(&[0, 0, 0]).unwrap();
        assert!(!g.is_boundary_adjacent(c));
        let e = g.lookup(&[1, 0, 0]).unwrap();
        assert_relative_eq!(g.boundary_distance(e, 0, true).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unit_box_single_node() {
        let g = build_grid(
            DomainSpec::cuboid(vec![2.0; 3], vec![0.0; 3]).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        let total: f64 = g.node_volume().iter().sum();
        assert!(total <= 8.0 && total > 0.0);
        for a in 0..3 {
            assert_relative_eq!(g.boundary_distance(0, a, false).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_and_oversized_spacing() {
        assert!(build_grid(DomainSpec::ball(3, 1.0).unwrap(), 1.5).is_err());
        assert!(build_grid(DomainSpec::ball(3, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn ball_volume_4d() {
        let g = build_grid(DomainSpec::ball(4, 1.0).unwrap(), 0.1).unwrap();
        let total: f64 = g.node_volume().iter().sum();
        let exact = PI * PI / 2.0;
        assert!((total - exact).abs() / exact < 0.02, "{total} vs {exact}");
    }

    #[test]
    fn volume_converges_under_refinement() {
        let d = DomainSpec::ellipsoid(vec![1.0, 0.8, 1.2]).unwrap();
        let exact = d.volume();
        let err = |h: f64| {
            let g = build_grid(d.clone(), h).unwrap();
            (g.node_volume().iter().sum::<f64>() - exact).abs() / exact
        };
        let (coarse, fine) = (err(0.1), err(0.05));
        assert!(fine < coarse, "{coarse} -> {fine}");
        assert!(fine < 0.01);
    }

    #[test]
    fn every_node_has_neighbor_or_cut() {
        let g = build_grid(DomainSpec::ellipsoid(vec![1.0, 0.7, 0.9]).unwrap(), 0.13).unwrap();
        for i in 0..g.len() {
            assert!(g.domain().level(&g.position(i)) < 0.0);
            for a in 0..3 {
                for fwd in [false, true] {
                    match (g.neighbor(i, a, fwd), g.boundary_distance(i, a, fwd)) {
                        (Some(_), None) => {}
                        (None, Some(d)) => assert!(d > 0.0 && d <= g.h() + 1e-12),
                        other => panic!("inconsistent link {other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_lexicographic_order() {
        let d = DomainSpec::ball(3, 1.0).unwrap();
        let a = build_grid(d.clone(), 0.2).unwrap();
        let b = build_grid(d, 0.2).unwrap();
        assert_eq!(a.coords, b.coords);
        for i in 1..a.len() {
            assert!(a.coord(i - 1) < a.coord(i));
        }
    }

    #[test]
    fn ellipsoid_distance_matches_special_cases() {
        let d = DomainSpec::ellipsoid(vec![1.0, 1.0, 1.0, 1.3]).unwrap();
        assert_relative_eq!(d.distance_to_boundary(&[0.0; 4]), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            d.distance_to_boundary(&[0.0, 0.0, 0.0, 0.5]),
            // nearest point lies off-axis: flat branch of the Lagrange root
            {
                let a2 = 1.3f64 * 1.3;
                let z = a2 * 0.5 / (a2 - 1.0);
                ((z - 0.5).powi(2) + (1.0 - (z / 1.3).powi(2))).sqrt()
            },
            epsilon = 1e-10
        );
        let ball = DomainSpec::ellipsoid(vec![2.0; 3]).unwrap();
        assert_relative_eq!(ball.distance_to_boundary(&[0.3, 0.4, 0.0]), 1.5, epsilon = 1e-10);
    }

    #[test]
    fn facet_areas() {
        let g = build_grid(DomainSpec::ball(3, 1.0).unwrap(), 0.1).unwrap();
        let s: f64 = boundary_facets(&g).unwrap().iter().map(|f| f.weight).sum();
        assert!((s - 4.0 * PI).abs() / (4.0 * PI) < 0.01, "{s}");

        let g = build_grid(DomainSpec::ball(4, 1.0).unwrap(), 0.2).unwrap();
        let facets = boundary_facets(&g).unwrap();
        let s: f64 = facets.iter().map(|f| f.weight).sum();
        assert!((s - 2.0 * PI * PI).abs() / (2.0 * PI * PI) < 0.01, "{s}");
        for f in &facets {
            let len: f64 = f.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_relative_eq!(len, 1.0, epsilon = 1e-12);
            assert!(f.weight > 0.0);
        }

        let g = build_grid(
            DomainSpec::cuboid(vec![1.0; 3], vec![0.5; 3]).unwrap(),
            0.1,
        )
        .unwrap();
        let s: f64 = boundary_facets(&g).unwrap().iter().map(|f| f.weight).sum();
        assert!((s - 6.0).abs() / 6.0 < 0.02, "{s}");
    }

    #[test]
    fn spheroid_facet_area_converges() {
        // prolate spheroid semiaxes (1,1,c): area 2 pi (1 + c^2 asin(e)/(c e))
        let c: f64 = 1.3;
        let e = (1.0 - 1.0 / (c * c)).sqrt();
        let exact = 2.0 * PI * (1.0 + c * e.asin() / e);
        let d = DomainSpec::ellipsoid(vec![1.0, 1.0, c]).unwrap();
        let s: f64 = boundary_facets_with(&d, 64, 0.1)
            .unwrap()
            .iter()
            .map(|f| f.weight)
            .sum();
        assert!((s - exact).abs() / exact < 1e-3, "{s} vs {exact}");
    }
}
