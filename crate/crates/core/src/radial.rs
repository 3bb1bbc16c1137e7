//! Shooting solver for radial solutions on balls.
//!
//! On `B_R` the system reduces to
//! `-(r^{N-1} U')' = r^{N-1} V^q`, `-(r^{N-1} V')' = r^{N-1} U^p`, `U'(0) = V'(0) = 0`,
//! `U(R) = V(R) = 0`. The pair is computed for `U(0) = 1` by bisection on
//! `V(0)` until both components vanish at a common radius `rho`, then mapped
//! to `B_R` through the two-parameter scaling family of the system.
//!
//! Integration runs in `s = ln r` with state `(U, r U_r, V, r V_r)`. For
//! large `p` the source `U^p` becomes negligible long before `rho`, after
//! which `V` equals `V_inf + A r^{2-N}` exactly; the remaining integration
//! carries `A` analytically, which avoids the cancellation that ruins plain
//! forward shooting once `rho` is astronomically large. A posteriori the
//! flux dropped by this switch is checked and plain shooting is used when it
//! is not negligible.
//!
//! All arithmetic is done in double precision whatever the scalar type.

use crate::error::{Error, Result};
use crate::geometry::unit_sphere_area;
use crate::leastenergy::EnergyReport;
use crate::ode::{Dopri5, OdeError, OdeOptions, Stop};
use crate::real::{lit, Real};

/// Largest supported exponent.
pub const MAX_EXPONENT: f64 = 2000.0;

/// Switch to the analytic outer form once `r^2 U^p < SWITCH * N |r V_r|`.
const SWITCH: f64 = 1e-12;
/// Largest flux fraction the switch may drop.
const OMITTED_FLUX: f64 = 1e-11;
/// Target mesh spacing in `ln r`.
const MESH_DS: f64 = 0.02;

/// Whether the dimension is covered by the asymptotic theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Established,
    /// `N = 3`, where the concentration results are only conjectured.
    Conjectural,
}

impl Regime {
    pub fn for_dim(dim: usize) -> Self {
        if dim == 3 {
            Regime::Conjectural
        } else {
            Regime::Established
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Regime::Established => "established",
            Regime::Conjectural => "conjectural regime",
        }
    }
}

/// Radial solution `u(r), v(r)` on `B_R`, `r` running from 0 to `R`.
#[derive(Debug, Clone)]
pub struct RadialSolution<T> {
    pub dim: usize,
    pub p: T,
    pub radius: T,
    pub r: Vec<T>,
    pub u: Vec<T>,
    pub v: Vec<T>,
    /// `(U(0), V(0))` of the normalized shooting problem.
    pub shoot_params: (T, T),
    pub regime: Regime,
    /// `u_r(R)` and `v_r(R)`.
    pub boundary_slopes: (T, T),
    /// `|V(rho)| / V(0)` left by the bisection.
    pub mismatch: T,
    /// Whether the analytic outer form was used.
    pub hybrid: bool,
    ln_rho: f64,
    ln_t: f64,
    ln_sv: f64,
}

impl<T: Real> RadialSolution<T> {
    /// Natural logarithm of the scale factor between `v` and the normalized `V`.
    pub fn ln_v_scale(&self) -> T {
        lit(self.ln_sv)
    }

    /// Radius where the normalized `U` and `V` vanish.
    pub fn ln_rho(&self) -> T {
        lit(self.ln_rho)
    }

    /// Linear interpolation of `u` at radius `r`.
    pub fn u_at(&self, r: T) -> T {
        interp(&self.r, &self.u, r)
    }

    pub fn v_at(&self, r: T) -> T {
        interp(&self.r, &self.v, r)
    }

    /// Applies the scaling `u -> t u(lambda r)`, `v -> t^{(p+1)/(q+1)} v(lambda r)`
    /// with `t = lambda^{2(q+1)/(pq-1)}`, giving the solution on `B_{R/lambda}`.
    pub fn rescaled(&self, lambda: T) -> Self {
        let l = lambda.to_f64_lossy().ln();
        let (p, q) = (self.p.to_f64_lossy(), 2.0 / (self.dim as f64 - 2.0));
        let ln_t = l * 2.0 * (q + 1.0) / (p * q - 1.0);
        let ln_sv = ln_t * (p + 1.0) / (q + 1.0);
        let (t, sv) = (lit::<T>(ln_t.exp()), lit::<T>(ln_sv.exp()));
        let mut out = self.clone();
        out.radius = self.radius / lambda;
        out.r = self.r.iter().map(|r| *r / lambda).collect();
        out.u = self.u.iter().map(|u| *u * t).collect();
        out.v = self.v.iter().map(|v| *v * sv).collect();
        out.boundary_slopes = (
            self.boundary_slopes.0 * t * lambda,
            self.boundary_slopes.1 * sv * lambda,
        );
        out.ln_t += ln_t;
        out.ln_sv += ln_sv;
        out.ln_rho = self.ln_rho;
        out
    }
}

fn interp<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    if x <= xs[0] {
        return ys[0];
    }
    let k = xs.partition_point(|v| *v < x);
    if k >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    ys[k - 1] * (T::one() - w) + ys[k] * w
}

#[derive(Debug, Clone, Copy)]
pub struct RadialOptions {
    /// Relative tolerance of the ODE integration.
    pub tol: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self { tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum First {
    U,
    V,
}

/// Where inner integration ended.
#[derive(Debug, Clone, Copy)]
enum InnerEnd {
    UZero { s: f64, y: [f64; 6] },
    VZero,
    Switch { s: f64, y: [f64; 6] },
}

struct Shooter {
    n: f64,
    p: f64,
    q: f64,
    hybrid: bool,
    ode: OdeOptions,
}

const S_SPAN: f64 = 600.0;

fn ode_err(e: OdeError) -> Error {
    Error::StiffFailure(format!("{e:?}"))
}

impl Shooter {
    fn start(&self, beta: f64) -> (f64, [f64; 6]) {
        let (n, p, q) = (self.n, self.p, self.q);
        let r0 = 1e-4 * 1f64.min(beta.powf(-q / 2.0)).min(p.powf(-0.5));
        let c2 = -beta.powf(q) / (2.0 * n);
        let d2 = -1.0 / (2.0 * n);
        let c4 = -q * beta.powf(q - 1.0) * d2 / (4.0 * (n + 2.0));
        let d4 = -p * c2 / (4.0 * (n + 2.0));
        let r2 = r0 * r0;
        let y = [
            1.0 + c2 * r2 + c4 * r2 * r2,
            2.0 * c2 * r2 + 4.0 * c4 * r2 * r2,
            beta + d2 * r2 + d4 * r2 * r2,
            2.0 * d2 * r2 + 4.0 * d4 * r2 * r2,
            r0.powf(n) / n,
            beta.powf(q + 1.0) * r0.powf(n) / n,
        ];
        (r0.ln(), y)
    }

    fn inner_rhs(&self) -> impl Fn(f64, &[f64; 6]) -> [f64; 6] + '_ {
        move |s, y| {
            let (n, p, q) = (self.n, self.p, self.q);
            let (lu, lv) = (pos_ln(y[0]), pos_ln(y[2]));
            [
                y[1],
                -(n - 2.0) * y[1] - (2.0 * s + q * lv).exp(),
                y[3],
                -(n - 2.0) * y[3] - (2.0 * s + p * lu).exp(),
                (n * s + (p + 1.0) * lu).exp(),
                (n * s + (q + 1.0) * lv).exp(),
            ]
        }
    }

    /// Integrates from the series start; `stops` receive the state.
    fn inner(
        &self,
        beta: f64,
        with_events: bool,
        s_stop: f64,
        stops: &[f64],
        on_stop: &mut dyn FnMut(f64, &[f64; 6]),
    ) -> Result<InnerEnd> {
        let (s0, y0) = self.start(beta);
        let n = self.n;
        let p = self.p;
        let ev_u = |_s: f64, y: &[f64; 6]| y[0];
        let ev_v = |_s: f64, y: &[f64; 6]| y[2];
        let ev_switch = |s: f64, y: &[f64; 6]| {
            if s <= s0 + 1.0 || y[0] <= 0.0 || y[3] >= 0.0 {
                1.0
            } else {
                2.0 * s + p * y[0].ln() - (SWITCH * n * y[3].abs()).ln()
            }
        };
        let mut events: Vec<&dyn Fn(f64, &[f64; 6]) -> f64> = Vec::new();
        if with_events {
            events.push(&ev_u);
            events.push(&ev_v);
            if self.hybrid {
                events.push(&ev_switch);
            }
        }
        let ode = Dopri5 {
            f: self.inner_rhs(),
            opts: self.ode,
        };
        let out = ode
            .run(s0, y0, s_stop, &events, stops, on_stop)
            .map_err(ode_err)?;
        Ok(match out.stop {
            Stop::Event(0) => InnerEnd::UZero { s: out.s, y: out.y },
            Stop::Event(1) => InnerEnd::VZero,
            Stop::Event(_) | Stop::End => InnerEnd::Switch { s: out.s, y: out.y },
        })
    }

    /// Outer integration with `V = A r^{2-N} (1 - (r/rho)^{N-2})`, state
    /// `(U, r U_r, int U^{p+1} r^{N-1}, int V^{q+1} r^{N-1}, omitted flux / F)`.
    #[allow(clippy::too_many_arguments)]
    fn outer(
        &self,
        s_sw: f64,
        y_sw: &[f64; 6],
        ln_rho: f64,
        stop_at_u_zero: bool,
        prefix_integrals: bool,
        stops: &[f64],
        on_stop: &mut dyn FnMut(f64, &[f64; 5]),
    ) -> Result<(f64, [f64; 5], bool)> {
        let (n, p, q) = (self.n, self.p, self.q);
        let a = -y_sw[3] * ((n - 2.0) * s_sw).exp() / (n - 2.0);
        let ln_a = a.ln();
        let ln_f = ((n - 2.0) * a).ln();
        let rhs = move |s: f64, y: &[f64; 5]| {
            let shape = (1.0 - ((n - 2.0) * (s - ln_rho)).exp()).max(0.0);
            let lu = pos_ln(y[0]);
            [
                y[1],
                -(n - 2.0) * y[1] - (q * ln_a).exp() * shape.powf(q),
                (n * s + (p + 1.0) * lu).exp(),
                ((q + 1.0) * ln_a).exp() * shape.powf(q + 1.0),
                (n * s + p * lu - ln_f).exp(),
            ]
        };
        let y0 = if prefix_integrals {
            [y_sw[0], y_sw[1], y_sw[4], y_sw[5], 0.0]
        } else {
            [y_sw[0], y_sw[1], 0.0, 0.0, 0.0]
        };
        let ev_u = |_s: f64, y: &[f64; 5]| y[0];
        let mut events: Vec<&dyn Fn(f64, &[f64; 5]) -> f64> = Vec::new();
        if stop_at_u_zero {
            events.push(&ev_u);
        }
        let ode = Dopri5 {
            f: rhs,
            opts: OdeOptions {
                atol: 1e-300,
                ..self.ode
            },
        };
        let out = ode
            .run(s_sw, y0, ln_rho, &events, stops, on_stop)
            .map_err(ode_err)?;
        Ok((out.s, out.y, matches!(out.stop, Stop::Event(_))))
    }

    fn v_inf(&self, s: f64, y: &[f64; 6]) -> (f64, f64) {
        let n = self.n;
        let a = -y[3] * ((n - 2.0) * s).exp() / (n - 2.0);
        (y[2] - a * ((2.0 - n) * s).exp(), a)
    }

    fn classify(&self, beta: f64) -> Result<First> {
        match self.inner(beta, true, S_SPAN, &[], &mut |_, _| {})? {
            InnerEnd::UZero { .. } => Ok(First::U),
            InnerEnd::VZero => Ok(First::V),
            InnerEnd::Switch { s, y } => {
                let (v_inf, a) = self.v_inf(s, &y);
                if !self.hybrid || v_inf >= 0.0 {
                    return Ok(First::U);
                }
                let ln_rv = (a.ln() - (-v_inf).ln()) / (self.n - 2.0);
                if ln_rv <= s {
                    return Ok(First::V);
                }
                let (_, _, hit) = self.outer(s, &y, ln_rv, true, false, &[], &mut |_, _| {})?;
                Ok(if hit { First::U } else { First::V })
            }
        }
    }

    fn bisect(&self) -> Result<f64> {
        let (mut lo, mut hi) = (1e-3, 10.0);
        let mut tries = 0;
        while self.classify(lo)? != First::V {
            lo *= 1e-2;
            tries += 1;
            if tries > 8 {
                return Err(Error::ShootFailed { lo, hi });
            }
        }
        tries = 0;
        while self.classify(hi)? != First::U {
            hi *= 10.0;
            tries += 1;
            if tries > 8 {
                return Err(Error::ShootFailed { lo, hi });
            }
        }
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) || hi / lo - 1.0 < 4.0 * f64::EPSILON {
                break;
            }
            match self.classify(mid)? {
                First::U => hi = mid,
                First::V => lo = mid,
            }
        }
        Ok(hi)
    }
}

fn pos_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Result of the shooting phase in the normalized variables.
struct Shot {
    beta: f64,
    ln_rho: f64,
    /// `r U_r` at rho.
    p_rho: f64,
    /// `r V_r` times `rho^{N-2}` at rho.
    q_rho_scaled: f64,
    mismatch: f64,
    hybrid: Option<(f64, [f64; 6])>,
}

fn shoot(sh: &Shooter) -> Result<Shot> {
    let beta = sh.bisect()?;
    let n = sh.n;
    match sh.inner(beta, true, S_SPAN, &[], &mut |_, _| {})? {
        InnerEnd::UZero { s, y } => Ok(Shot {
            beta,
            ln_rho: s,
            p_rho: y[1],
            q_rho_scaled: y[3] * ((n - 2.0) * s).exp(),
            mismatch: y[2].abs() / beta,
            hybrid: None,
        }),
        InnerEnd::VZero => Err(Error::StiffFailure(
            "upper bisection end lost its classification".into(),
        )),
        InnerEnd::Switch { s, y } => {
            if !sh.hybrid {
                return Err(Error::StiffFailure(
                    "plain shooting did not reach a zero".into(),
                ));
            }
            let g = |l: f64| -> Result<f64> {
                Ok(sh.outer(s, &y, l, false, false, &[], &mut |_, _| {})?.1[0])
            };
            let mut a = s + 1e-3;
            let mut ga = g(a)?;
            if ga <= 0.0 {
                return Err(Error::StiffFailure("outer profile vanishes at the switch".into()));
            }
            let mut b = s + 1.0;
            let mut gb = g(b)?;
            let mut grow = 1.0;
            while gb > 0.0 {
                a = b;
                ga = gb;
                grow *= 2.0;
                b += grow;
                if b - s > S_SPAN {
                    return Err(Error::StiffFailure("no outer zero of U".into()));
                }
                gb = g(b)?;
            }
            let mut side = 0;
            for _ in 0..200 {
                if b - a < 1e-13 * b.abs().max(1.0) {
                    break;
                }
                let mut m = b - gb * (b - a) / (gb - ga);
                if !(m > a && m < b) {
                    m = 0.5 * (a + b);
                }
                let gm = g(m)?;
                if gm > 0.0 {
                    a = m;
                    ga = gm;
                    if side == -1 {
                        gb *= 0.5;
                    }
                    side = -1;
                } else {
                    b = m;
                    gb = gm;
                    if side == 1 {
                        ga *= 0.5;
                    }
                    side = 1;
                }
            }
            let ln_rho = 0.5 * (a + b);
            let (_, yo, _) = sh.outer(s, &y, ln_rho, false, false, &[], &mut |_, _| {})?;
            if yo[4] > OMITTED_FLUX {
                return Err(Error::StiffFailure(format!(
                    "outer switch dropped flux fraction {:e}",
                    yo[4]
                )));
            }
            let (_, a_coef) = sh.v_inf(s, &y);
            Ok(Shot {
                beta,
                ln_rho,
                p_rho: yo[1],
                q_rho_scaled: -(n - 2.0) * a_coef,
                mismatch: 0.0,
                hybrid: Some((s, y)),
            })
        }
    }
}

/// Radial solution of the system on the ball of radius `radius` in `R^dim`.
pub fn solve_radial<T: Real>(
    dim: usize,
    p: T,
    radius: T,
    opts: &RadialOptions,
) -> Result<RadialSolution<T>> {
    if dim < 3 {
        return Err(Error::InvalidArgument(format!("dimension must be >= 3, got {dim}")));
    }
    let pf = p.to_f64_lossy();
    let rf = radius.to_f64_lossy();
    let n = dim as f64;
    let bound = (n - 2.0) / 2.0;
    if !(pf > bound) {
        return Err(Error::ExponentDegenerate { p: pf, bound });
    }
    if pf > MAX_EXPONENT {
        return Err(Error::InvalidArgument(format!(
            "exponent {pf} exceeds the supported maximum {MAX_EXPONENT}"
        )));
    }
    if !(rf > 0.0 && rf.is_finite()) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    if !(opts.tol > 0.0 && opts.tol < 1e-3) {
        return Err(Error::InvalidArgument("tolerance must lie in (0, 1e-3)".into()));
    }
    let q = 2.0 / (n - 2.0);
    let ode = OdeOptions {
        rtol: opts.tol,
        ..Default::default()
    };
    let hybrid_shooter = Shooter {
        n,
        p: pf,
        q,
        hybrid: true,
        ode,
    };
    let plain_shooter = Shooter {
        hybrid: false,
        ..hybrid_shooter
    };
    let (sh, shot) = match shoot(&hybrid_shooter) {
        Ok(s) => (&hybrid_shooter, s),
        Err(first) => match shoot(&plain_shooter) {
            Ok(s) => (&plain_shooter, s),
            Err(_) => return Err(first),
        },
    };

    // production pass on a uniform ln r mesh ending exactly at rho
    let (s0, _) = sh.start(shot.beta);
    let span = shot.ln_rho - s0;
    let mut k = (span / MESH_DS).ceil() as usize;
    k += k % 2;
    let ds = span / k as f64;
    let mesh: Vec<f64> = (0..=k).map(|j| s0 + ds * j as f64).collect();
    let mut big_u = vec![0.0; k + 1];
    let mut big_v = vec![0.0; k + 1];
    let index = |s: f64| (((s - s0) / ds).round() as usize).min(k);
    match shot.hybrid {
        None => {
            sh.inner(shot.beta, false, shot.ln_rho, &mesh, &mut |s, y| {
                let j = index(s);
                big_u[j] = y[0].max(0.0);
                big_v[j] = y[2].max(0.0);
            })?;
        }
        Some((s_sw, _)) => {
            let split = mesh.partition_point(|t| *t <= s_sw);
            let mut state = None;
            let (inner_mesh, outer_mesh) = mesh.split_at(split);
            let end = sh.inner(shot.beta, false, s_sw, inner_mesh, &mut |s, y| {
                let j = index(s);
                big_u[j] = y[0].max(0.0);
                big_v[j] = y[2].max(0.0);
            })?;
            if let InnerEnd::Switch { s, y } = end {
                state = Some((s, y));
            }
            let (s_end, y_end) =
                state.ok_or_else(|| Error::StiffFailure("production pass ended early".into()))?;
            let (_, a) = sh.v_inf(s_end, &y_end);
            sh.outer(s_end, &y_end, shot.ln_rho, false, false, outer_mesh, &mut |s, y| {
                let j = index(s);
                big_u[j] = y[0].max(0.0);
                let shape = (1.0 - ((n - 2.0) * (s - shot.ln_rho)).exp()).max(0.0);
                big_v[j] = a * ((2.0 - n) * s).exp() * shape;
            })?;
        }
    }
    big_u[k] = 0.0;
    big_v[k] = 0.0;

    // scaling to B_R
    let ln_lambda = shot.ln_rho - rf.ln();
    let ln_t = ln_lambda * 2.0 * (q + 1.0) / (pf * q - 1.0);
    let ln_sv = ln_t * (pf + 1.0) / (q + 1.0);
    let mut r = vec![T::zero()];
    let mut u = vec![lit::<T>(ln_t.exp())];
    let mut v = vec![lit::<T>((ln_sv + shot.beta.ln()).exp())];
    for j in 0..=k {
        r.push(lit((mesh[j] - ln_lambda).exp()));
        u.push(lit(if big_u[j] > 0.0 { (ln_t + big_u[j].ln()).exp() } else { 0.0 }));
        v.push(lit(if big_v[j] > 0.0 { (ln_sv + big_v[j].ln()).exp() } else { 0.0 }));
    }
    *r.last_mut().unwrap() = radius;
    // slopes: u_r(R) = t P(rho) / R, v_r(R) = s_v Q(rho) / R
    let slope_u = -(ln_t + (-shot.p_rho).ln()).exp() / rf;
    let slope_v = -(ln_sv + (-shot.q_rho_scaled).ln() - (n - 2.0) * shot.ln_rho).exp() / rf;
    Ok(RadialSolution {
        dim,
        p,
        radius,
        r,
        u,
        v,
        shoot_params: (T::one(), lit(shot.beta)),
        regime: Regime::for_dim(dim),
        boundary_slopes: (lit(slope_u), lit(slope_v)),
        mismatch: lit(shot.mismatch),
        hybrid: shot.hybrid.is_some(),
        ln_rho: shot.ln_rho,
        ln_t,
        ln_sv,
    })
}

/// `ln int_{B_R} f^e` for a radial profile on the mesh, by Simpson's rule in
/// `ln r` with the centre disc `[0, r_1]` treated as constant.
fn ln_radial_power_integral<T: Real>(sol: &RadialSolution<T>, f: &[T], e: f64) -> f64 {
    let n = sol.dim as f64;
    let omega: f64 = unit_sphere_area::<f64>(sol.dim);
    let m = sol.r.len() - 1; // mesh points 1..=m, uniform in ln r
    let ln_r: Vec<f64> = sol.r[1..].iter().map(|r| r.to_f64_lossy().ln()).collect();
    let ds = (ln_r[m - 1] - ln_r[0]) / (m - 1) as f64;
    let mut terms = Vec::with_capacity(m + 1);
    for j in 0..m {
        let fv = f[j + 1].to_f64_lossy();
        if fv <= 0.0 {
            continue;
        }
        let w = if j == 0 || j == m - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push((w * ds / 3.0).ln() + e * fv.ln() + n * ln_r[j]);
    }
    let f0 = f[0].to_f64_lossy();
    if f0 > 0.0 {
        terms.push(e * f0.ln() + n * ln_r[0] - n.ln());
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    top + sum.ln() + omega.ln()
}

/// Energy quantities of a radial solution by radial quadrature.
pub fn radial_energy_report<T: Real>(sol: &RadialSolution<T>) -> EnergyReport<T> {
    let n = sol.dim as f64;
    let p = sol.p.to_f64_lossy();
    let q = 2.0 / (n - 2.0);
    let l_up1 = ln_radial_power_integral(sol, &sol.u, p + 1.0);
    let l_up = ln_radial_power_integral(sol, &sol.u, p);
    let l_vq1 = ln_radial_power_integral(sol, &sol.v, q + 1.0);
    let c_p = (2.0 / n * l_vq1 - l_up1 / (p + 1.0)).exp();
    EnergyReport {
        p: sol.p,
        c_p: lit(c_p),
        gamma_p: sol.u[0],
        mass_p: lit(l_up.exp()),
        lambda_p: lit((l_up * 2.0 / (n - 2.0)).exp()),
        energy_pplus1: lit(l_up1.exp()),
        dirichlet_energy: lit(l_vq1.exp()),
    }
}

/// Both sides of the radial boundary identity
/// `N/(p+1) int u^{p+1} = omega R^N u_r(R) v_r(R)` in logarithms.
pub fn radial_pohozaev<T: Real>(sol: &RadialSolution<T>) -> (f64, f64) {
    let n = sol.dim as f64;
    let p = sol.p.to_f64_lossy();
    let lhs = (n / (p + 1.0)).ln() + ln_radial_power_integral(sol, &sol.u, p + 1.0);
    let (su, sv) = (sol.boundary_slopes.0.to_f64_lossy(), sol.boundary_slopes.1.to_f64_lossy());
    let rhs = unit_sphere_area::<f64>(sol.dim).ln()
        + n * sol.radius.to_f64_lossy().ln()
        + (-su).ln()
        + (-sv).ln();
    (lhs, rhs)
}
