//! Diagnostics turning solutions into verdicts: concentration of `u_p^p`,
//! comparison of `w_p` with `G~`, boundary identities, asymptotic fits,
//! sampled Adams-type ratios and the peak versus critical point distance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::BoundaryFacet;
use crate::green::{constants, CriticalPoint, GreenBundle};
use crate::leastenergy::{EnergyReport, SolutionPair};
use crate::logpow::{scaled_power, weighted_power_sum};
use crate::operators::{apply_laplacian, normal_derivative, Field};
use crate::radial::RadialSolution;
use crate::real::{lit, Real};

/// Radii of the `f_p` mass profile, as fractions of the domain inradius.
pub const MASS_RADII: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0];
/// Peaks are local maxima of `w_p` above this fraction of its maximum.
pub const PEAK_THRESHOLD: f64 = 0.5;
/// Peaks closer than this many grid spacings are merged.
pub const CLUSTER_RADIUS_H: f64 = 5.0;
/// Default `r*` of the annulus comparison, in grid spacings.
pub const ANNULUS_R_STAR_H: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Peak<T> {
    pub node: usize,
    pub position: Vec<T>,
    /// Value of `w_p` at the peak.
    pub height: T,
    /// Whether the node touches the boundary.
    pub on_boundary: bool,
}

#[derive(Debug, Clone)]
pub struct ConcentrationReport<T> {
    pub p: T,
    pub lambda_p: T,
    pub w: Field<T>,
    /// `(r, int_{B_r(peak)} f_p)`.
    pub f_mass_profile: Vec<(T, T)>,
    /// `(r, int_{outside B_r(peak)} f_p)`, summed directly.
    pub f_mass_outside: Vec<(T, T)>,
    /// Cluster representatives, highest first.
    pub peaks: Vec<Peak<T>>,
    /// Every local maximum above the threshold before clustering.
    pub raw_maxima: Vec<Peak<T>>,
    pub card_s_estimate: usize,
    /// `sup |w_p - G~| / sup |G~|` on the annulus `2r* <= |x - x0| <= 4r*`.
    pub gtilde_compare: Option<T>,
    pub r_star: T,
    pub l0_running: T,
    /// A peak on the boundary contradicts interior concentration.
    pub peak_on_boundary: bool,
}

impl<T: Real> ConcentrationReport<T> {
    /// `int_{B_r(peak)} f_p`.
    pub fn mass_within(&self, r: T) -> T {
        mass_in_ball(&self.w, self.p, &self.peaks[0].position, r).0
    }

    pub fn two_peaks(&self) -> bool {
        self.card_s_estimate >= 2
    }
}

fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<T>()
        .sqrt()
}

/// `(inside, outside)` masses of `f = u^p / int u^p` for the ball `B_r(c)`.
fn mass_in_ball<T: Real>(u: &Field<T>, p: T, c: &[T], r: T) -> (T, T) {
    let grid = u.grid();
    let (rp, _) = scaled_power(u.values(), p);
    let (mut inside, mut outside) = (T::zero(), T::zero());
    for (i, (a, w)) in rp.iter().zip(grid.mass()).enumerate() {
        if dist(&grid.position(i), c) <= r {
            inside += *a * *w;
        } else {
            outside += *a * *w;
        }
    }
    let total = inside + outside;
    (inside / total, outside / total)
}

fn local_maxima<T: Real>(w: &Field<T>) -> Vec<usize> {
    let grid = w.grid();
    let vals = w.values();
    let dim = grid.dim();
    (0..grid.len())
        .filter(|&i| {
            (0..dim).all(|a| {
                [false, true].iter().all(|&fwd| match grid.neighbor(i, a, fwd) {
                    Some(j) => vals[i] >= vals[j],
                    None => true,
                })
            })
        })
        .collect()
}

/// Concentration diagnostics of `u` at exponent `p`. `u` need not be a
/// solution.
pub fn concentration_report_for<T: Real>(
    u: &Field<T>,
    p: T,
    reference: Option<&GreenBundle<T>>,
    r_star: Option<T>,
) -> Result<ConcentrationReport<T>> {
    let grid = u.grid().clone();
    let dim = grid.dim();
    if !(u.max() > T::zero()) {
        return Err(Error::InvalidArgument("field has no positive value".into()));
    }
    let two = lit::<T>(2.0);
    let n = T::from_usize_lossy(dim);
    let mass = weighted_power_sum(
        &u.values().iter().map(|x| x.max(T::zero())).collect::<Vec<_>>(),
        grid.mass(),
        p,
    );
    let ln_lambda = mass.ln() * two / (n - two);
    let lambda_p = ln_lambda.exp();
    let w = u.scale((-ln_lambda).exp());
    let wmax = w.max();
    let h = grid.h();
    let mut raw: Vec<Peak<T>> = local_maxima(&w)
        .into_iter()
        .filter(|&i| w.values()[i] >= wmax * lit(PEAK_THRESHOLD))
        .map(|i| Peak {
            node: i,
            position: grid.position(i),
            height: w.values()[i],
            on_boundary: grid.is_boundary_adjacent(i),
        })
        .collect();
    raw.sort_by(|a, b| b.height.partial_cmp(&a.height).unwrap().then(a.node.cmp(&b.node)));
    let mut peaks: Vec<Peak<T>> = Vec::new();
    for pk in &raw {
        if peaks
            .iter()
            .all(|q| dist(&q.position, &pk.position) > h * lit(CLUSTER_RADIUS_H))
        {
            peaks.push(pk.clone());
        }
    }
    let top = peaks[0].position.clone();
    let inr = grid.domain().inradius();
    let mut f_mass_profile = Vec::new();
    let mut f_mass_outside = Vec::new();
    for f in MASS_RADII {
        let r = inr * lit(f);
        let (a, b) = mass_in_ball(u, p, &top, r);
        f_mass_profile.push((r, a));
        f_mass_outside.push((r, b));
    }
    let r_star = r_star.unwrap_or(h * lit(ANNULUS_R_STAR_H));
    let gtilde_compare = match reference {
        Some(b) => {
            if b.tilde.len() != grid.len() {
                return Err(Error::ShapeMismatch {
                    expected: grid.len(),
                    found: b.tilde.len(),
                });
            }
            let (mut err, mut sup) = (T::zero(), T::zero());
            let mut count = 0;
            for i in 0..grid.len() {
                let r = dist(&grid.position(i), &b.y);
                if r >= two * r_star && r <= lit::<T>(4.0) * r_star {
                    let g = b.tilde.values()[i];
                    err = err.max((w.values()[i] - g).abs());
                    sup = sup.max(g.abs());
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::InsufficientData("comparison annulus holds no node".into()));
            }
            Some(err / sup)
        }
        None => None,
    };
    Ok(ConcentrationReport {
        p,
        lambda_p,
        w,
        f_mass_profile,
        f_mass_outside,
        card_s_estimate: peaks.len(),
        peak_on_boundary: peaks.iter().any(|q| q.on_boundary),
        peaks,
        raw_maxima: raw,
        gtilde_compare,
        r_star,
        l0_running: p * lambda_p / T::E(),
    })
}

pub fn concentration_report<T: Real>(
    sol: &SolutionPair<T>,
    reference: Option<&GreenBundle<T>>,
) -> Result<ConcentrationReport<T>> {
    concentration_report_for(&sol.u, sol.p, reference, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PohozaevReport<T> {
    pub p: T,
    pub y: Vec<T>,
    /// `N/(p+1) int u^{p+1}`.
    pub lhs: T,
    /// `oint du/dn dv/dn (x - y, n) ds`.
    pub rhs: T,
    pub rel_residual: T,
    /// `oint du/dn dv/dn n ds`.
    pub grad_vector: Vec<T>,
    /// Facets where the normal derivative used a low-order fallback.
    pub fallbacks: usize,
}

/// Both sides of the boundary identity for the grid pair about `y`.
pub fn pohozaev_check<T: Real>(
    sol: &SolutionPair<T>,
    y: &[T],
    facets: &[BoundaryFacet<T>],
) -> Result<PohozaevReport<T>> {
    let grid = sol.u.grid();
    let dim = grid.dim();
    if y.len() != dim {
        return Err(Error::InvalidArgument("base point dimension mismatch".into()));
    }
    let n = T::from_usize_lossy(dim);
    let du = normal_derivative(&sol.u, facets)?;
    let dv = normal_derivative(&sol.v, facets)?;
    let mut rhs = T::zero();
    let mut grad = vec![T::zero(); dim];
    for (k, f) in facets.iter().enumerate() {
        let flux = du.values[k] * dv.values[k] * f.weight;
        let xn: T = f
            .position
            .iter()
            .zip(y)
            .zip(&f.normal)
            .map(|((x, c), m)| (*x - *c) * *m)
            .sum();
        rhs += flux * xn;
        for a in 0..dim {
            grad[a] += flux * f.normal[a];
        }
    }
    let up1 = weighted_power_sum(
        &sol.u.values().iter().map(|x| x.max(T::zero())).collect::<Vec<_>>(),
        grid.mass(),
        sol.p + T::one(),
    )
    .value();
    let lhs = n / (sol.p + T::one()) * up1;
    Ok(PohozaevReport {
        p: sol.p,
        y: y.to_vec(),
        lhs,
        rhs,
        rel_residual: (lhs - rhs).abs() / lhs.abs(),
        grad_vector: grad,
        fallbacks: du.fallback_count() + dv.fallback_count(),
    })
}

/// The same identity for a radial solution about the centre.
pub fn pohozaev_radial<T: Real>(sol: &RadialSolution<T>) -> PohozaevReport<T> {
    let (l, r) = crate::radial::radial_pohozaev(sol);
    let lhs: T = lit(l.exp());
    let rhs: T = lit(r.exp());
    PohozaevReport {
        p: sol.p,
        y: vec![T::zero(); sol.dim],
        lhs,
        rhs,
        rel_residual: lit((l - r).exp_m1().abs()),
        grad_vector: vec![T::zero(); sol.dim],
        fallbacks: 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRow<T> {
    pub name: &'static str,
    /// `Q(p)` per input report.
    pub values: Vec<T>,
    pub q_inf: T,
    /// Coefficients of `1/log p` and `1/p`.
    pub a: T,
    pub b: T,
    pub target: T,
    pub rel_gap: T,
    /// Whether the last three values are monotone.
    pub monotone_tail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary<T> {
    pub p: Vec<T>,
    /// Smallest exponent inside the fitted window.
    pub fit_from: T,
    pub rows: Vec<FitRow<T>>,
    /// `max p lambda_p / e` over the largest three exponents.
    pub l0: T,
    pub l0_bracket: (T, T),
    pub l0_in_bracket: bool,
}

/// Least-squares fit of `Q(p) = Q_inf + a / log p + b / p`.
pub fn fit_model(p: &[f64], q: &[f64]) -> Result<(f64, f64, f64)> {
    if p.len() < 4 || p.len() != q.len() {
        return Err(Error::InsufficientData(format!(
            "need at least 4 exponents, got {}",
            p.len()
        )));
    }
    if p.iter().any(|x| !(*x > 1.0)) {
        return Err(Error::InvalidArgument("fit needs exponents above 1".into()));
    }
    let a = DMatrix::from_fn(p.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => 1.0 / p[i].ln(),
        _ => 1.0 / p[i],
    });
    let b = DVector::from_column_slice(q);
    let svd = a.svd(true, true);
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    Ok((x[0], x[1], x[2]))
}

fn monotone_tail(v: &[f64]) -> bool {
    let t = &v[v.len().saturating_sub(3)..];
    t.windows(2).all(|w| w[1] >= w[0]) || t.windows(2).all(|w| w[1] <= w[0])
}

/// Exponents below this are left out of the fit when at least four remain.
pub const FIT_WINDOW_START: f64 = 40.0;

/// Fits the scaled energy quantities over the large-exponent window and
/// estimates `L0`.
pub fn asymptotic_fit<T: Real>(reports: &[EnergyReport<T>], dim: usize) -> Result<FitSummary<T>> {
    if reports.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 exponents, got {}",
            reports.len()
        )));
    }
    let c = constants::<f64>(dim)?;
    let p: Vec<f64> = reports.iter().map(|r| r.p.to_f64_lossy()).collect();
    let quantities: [(&'static str, Vec<f64>, f64); 3] = [
        (
            "cp_scaled",
            reports.iter().map(|r| r.cp_scaled(dim).to_f64_lossy()).collect(),
            c.cp_limit,
        ),
        (
            "energy_scaled",
            reports.iter().map(|r| r.energy_scaled(dim).to_f64_lossy()).collect(),
            c.energy_limit,
        ),
        (
            "dirichlet_scaled",
            reports.iter().map(|r| r.dirichlet_scaled(dim).to_f64_lossy()).collect(),
            c.energy_limit,
        ),
    ];
    let mut keep: Vec<usize> = (0..p.len()).filter(|&i| p[i] >= FIT_WINDOW_START).collect();
    if keep.len() < 4 {
        keep = (0..p.len()).collect();
    }
    let pw: Vec<f64> = keep.iter().map(|&i| p[i]).collect();
    let mut rows = Vec::new();
    for (name, q, target) in quantities {
        let qw: Vec<f64> = keep.iter().map(|&i| q[i]).collect();
        let (q_inf, a, b) = fit_model(&pw, &qw)?;
        rows.push(FitRow {
            name,
            monotone_tail: monotone_tail(&q),
            values: q.iter().map(|x| lit(*x)).collect(),
            q_inf: lit(q_inf),
            a: lit(a),
            b: lit(b),
            target: lit(target),
            rel_gap: lit((q_inf - target).abs() / target),
        });
    }
    let tail = &reports[reports.len() - 3..];
    let l0 = tail
        .iter()
        .map(|r| r.l0_running().to_f64_lossy())
        .fold(f64::NEG_INFINITY, f64::max);
    let n = dim as f64;
    let hi = n * c.b0 / (n - 2.0);
    Ok(FitSummary {
        fit_from: lit(pw.iter().cloned().fold(f64::INFINITY, f64::min)),
        p: p.iter().map(|x| lit(*x)).collect(),
        rows,
        l0: lit(l0),
        l0_bracket: (T::one(), lit(hi)),
        l0_in_bracket: (1.0..=hi).contains(&l0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamsRow<T> {
    pub t: T,
    /// Ratio per sample.
    pub ratios: Vec<T>,
    pub max_ratio: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamsTable<T> {
    pub rows: Vec<AdamsRow<T>>,
    pub dt_limit: T,
}

/// `|u|_t / (t^{(N-2)/N} |Delta u|_{N/2})` for every sample and `t`.
pub fn adams_check<T: Real>(samples: &[Field<T>], t_list: &[T]) -> Result<AdamsTable<T>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InsufficientData("no samples".into()))?;
    let dim = first.grid().dim();
    let n = T::from_usize_lossy(dim);
    let half_n = n / lit(2.0);
    let c = constants::<T>(dim)?;
    let usable: Vec<&Field<T>> = samples.iter().filter(|u| u.sup_norm() > T::zero()).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData("every sample vanishes".into()));
    }
    let mut rows = Vec::new();
    for &t in t_list {
        if t < half_n {
            return Err(Error::InvalidArgument(format!("t must be at least N/2, got {t}")));
        }
        let mut ratios = Vec::new();
        for u in &usable {
            let grid = u.grid();
            let abs: Vec<T> = u.values().iter().map(|x| x.abs()).collect();
            let ln_ut = weighted_power_sum(&abs, grid.mass(), t).ln() / t;
            let lap: Vec<T> = apply_laplacian(u).values().iter().map(|x| x.abs()).collect();
            let ln_lap = weighted_power_sum(&lap, grid.mass(), half_n).ln() / half_n;
            let ln_t = t.ln() * (n - lit(2.0)) / n;
            ratios.push((ln_ut - ln_t - ln_lap).exp());
        }
        let max_ratio = ratios.iter().cloned().fold(T::neg_infinity(), T::max);
        rows.push(AdamsRow { t, ratios, max_ratio });
    }
    Ok(AdamsTable {
        rows,
        dt_limit: c.dt_limit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakRobinReport<T> {
    pub peak: Vec<T>,
    pub critical_point: Vec<T>,
    pub distance: T,
    pub distance_in_h: T,
    pub distance_in_inradius: T,
    /// `|grad_vector|` of the boundary identity, when supplied.
    pub grad_norm: Option<T>,
}

/// Distance from the dominant peak to the nearest critical point.
pub fn peak_vs_robin<T: Real>(
    report: &ConcentrationReport<T>,
    critical_points: &[CriticalPoint<T>],
    pohozaev: Option<&PohozaevReport<T>>,
) -> Result<PeakRobinReport<T>> {
    if report.card_s_estimate != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected a single peak, found {}",
            report.card_s_estimate
        )));
    }
    let peak = &report.peaks[0].position;
    let nearest = critical_points
        .iter()
        .min_by(|a, b| {
            dist(&a.position, peak)
                .partial_cmp(&dist(&b.position, peak))
                .unwrap()
        })
        .ok_or(Error::NoCriticalPoint)?;
    let d = dist(&nearest.position, peak);
    let grid = report.w.grid();
    Ok(PeakRobinReport {
        peak: peak.clone(),
        critical_point: nearest.position.clone(),
        distance: d,
        distance_in_h: d / grid.h(),
        distance_in_inradius: d / grid.domain().inradius(),
        grad_norm: pohozaev.map(|p| p.grad_vector.iter().map(|g| *g * *g).sum::<T>().sqrt()),
    })
}
