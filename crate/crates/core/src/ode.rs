//! Adaptive Dormand-Prince 5(4) integrator with terminal events and forced
//! output stops.

#[derive(Debug, Clone, Copy)]
pub(crate) struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub first_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-300,
            max_step: 0.25,
            first_step: 1e-3,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stop {
    End,
    /// Index of the event function that crossed from positive to non-positive.
    Event(usize),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome<const M: usize> {
    pub s: f64,
    pub y: [f64; M],
    pub stop: Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum OdeError {
    StepUnderflow(f64),
    TooManySteps(f64),
    NonFinite(f64),
}

const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) struct Dopri5<F, const M: usize> {
    pub f: F,
    pub opts: OdeOptions,
}

impl<F: Fn(f64, &[f64; M]) -> [f64; M], const M: usize> Dopri5<F, M> {
    fn combine(y: &[f64; M], h: f64, ks: &[&[f64; M]], coef: &[f64]) -> [f64; M] {
        let mut out = *y;
        for (k, c) in ks.iter().zip(coef) {
            if *c != 0.0 {
                for i in 0..M {
                    out[i] += h * c * k[i];
                }
            }
        }
        out
    }

    /// One step from `(s, y)` with derivative `k1`; returns the new state,
    /// its derivative and the scaled error norm.
    fn step(&self, s: f64, y: &[f64; M], k1: &[f64; M], h: f64) -> ([f64; M], [f64; M], f64) {
        let f = &self.f;
        let k2 = f(s + C[0] * h, &Self::combine(y, h, &[k1], &A2));
        let k3 = f(s + C[1] * h, &Self::combine(y, h, &[k1, &k2], &A3));
        let k4 = f(s + C[2] * h, &Self::combine(y, h, &[k1, &k2, &k3], &A4));
        let k5 = f(s + C[3] * h, &Self::combine(y, h, &[k1, &k2, &k3, &k4], &A5));
        let k6 = f(s + h, &Self::combine(y, h, &[k1, &k2, &k3, &k4, &k5], &A6));
        let y_new = Self::combine(y, h, &[k1, &k2, &k3, &k4, &k5, &k6], &B);
        let k7 = f(s + h, &y_new);
        let mut err = 0.0;
        for i in 0..M {
            let e = h
                * (E[0] * k1[i]
                    + E[2] * k3[i]
                    + E[3] * k4[i]
                    + E[4] * k5[i]
                    + E[5] * k6[i]
                    + E[6] * k7[i]);
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        (y_new, k7, (err / M as f64).sqrt())
    }

    /// Integrates from `s0` towards `s_end` (> `s0`). Stops early when an
    /// event function turns non-positive; the crossing is located to about
    /// `1e-14` in `s`. Every point of `stops` (increasing) is hit exactly and
    /// passed to `on_stop`.
    pub fn run(
        &self,
        s0: f64,
        y0: [f64; M],
        s_end: f64,
        events: &[&dyn Fn(f64, &[f64; M]) -> f64],
        stops: &[f64],
        on_stop: &mut dyn FnMut(f64, &[f64; M]),
    ) -> Result<Outcome<M>, OdeError> {
        let mut s = s0;
        let mut y = y0;
        let mut k1 = (self.f)(s, &y);
        let mut h = self.opts.first_step.min(self.opts.max_step);
        let mut next_stop = stops.iter().position(|t| *t >= s0).unwrap_or(stops.len());
        while next_stop < stops.len() && stops[next_stop] <= s0 {
            on_stop(s0, &y);
            next_stop += 1;
        }
        let mut ev_prev: Vec<f64> = events.iter().map(|g| g(s, &y)).collect();
        for _ in 0..self.opts.max_steps {
            if s >= s_end {
                return Ok(Outcome {
                    s,
                    y,
                    stop: Stop::End,
                });
            }
            let mut target = s_end;
            let mut forced = false;
            if next_stop < stops.len() && stops[next_stop] < target {
                target = stops[next_stop];
            }
            let mut step = h.min(self.opts.max_step);
            if s + step >= target {
                step = target - s;
                forced = true;
            }
            let (y_new, k_new, err) = self.step(s, &y, &k1, step);
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if step < 1e-14 * s.abs().max(1.0) {
                    return Err(OdeError::NonFinite(s));
                }
                h = step * 0.2;
                continue;
            }
            if err > 1.0 {
                h = step * (0.9 * err.powf(-0.2)).max(0.2);
                if h < 1e-14 * s.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow(s));
                }
                continue;
            }
            // accepted: check events on the new state
            let ev_new: Vec<f64> = events.iter().map(|g| g(s + step, &y_new)).collect();
            let crossed = (0..events.len())
                .filter(|&j| ev_prev[j] > 0.0 && ev_new[j] <= 0.0)
                .collect::<Vec<_>>();
            if !crossed.is_empty() {
                return Ok(self.locate(s, &y, &k1, step, events, &crossed));
            }
            let s_new = if forced { target } else { s + step };
            s = s_new;
            y = y_new;
            k1 = k_new;
            ev_prev = ev_new;
            if forced && next_stop < stops.len() && s >= stops[next_stop] {
                on_stop(s, &y);
                next_stop += 1;
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !forced {
                h = step * grow;
            } else {
                h = h.max(step * grow.min(1.0));
            }
        }
        Err(OdeError::TooManySteps(s))
    }

    /// Finds the earliest crossing among `crossed` within `(s, s + step]` by
    /// bracketed secant iteration on the step length.
    fn locate(
        &self,
        s: f64,
        y: &[f64; M],
        k1: &[f64; M],
        step: f64,
        events: &[&dyn Fn(f64, &[f64; M]) -> f64],
        crossed: &[usize],
    ) -> Outcome<M> {
        let mut best: Option<(f64, [f64; M], usize)> = None;
        for &j in crossed {
            let g = events[j];
            let (mut a, mut ga) = (0.0, g(s, y));
            let (mut b, mut yb) = {
                let (yb, _, _) = self.step(s, y, k1, step);
                (step, yb)
            };
            let mut gb = g(s + b, &yb);
            let mut side = 0i32;
            for _ in 0..100 {
                if b - a <= 1e-15 * (s.abs() + step).max(1.0) {
                    break;
                }
                // Illinois-modified regula falsi
                let mut t = b - gb * (b - a) / (gb - ga);
                if !(t > a && t < b) {
                    t = 0.5 * (a + b);
                }
                let (yt, _, _) = self.step(s, y, k1, t);
                let gt = g(s + t, &yt);
                if gt > 0.0 {
                    a = t;
                    ga = gt;
                    if side == -1 {
                        gb *= 0.5;
                    }
                    side = -1;
                } else {
                    b = t;
                    yb = yt;
                    gb = gt;
                    if side == 1 {
                        ga *= 0.5;
                    }
                    side = 1;
                }
            }
            if best.as_ref().map_or(true, |(bb, _, _)| b < *bb) {
                best = Some((b, yb, j));
            }
        }
        let (b, yb, j) = best.expect("at least one crossing");
        Outcome {
            s: s + b,
            y: yb,
            stop: Stop::Event(j),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_event() {
        let ode = Dopri5 {
            f: |_s: f64, y: &[f64; 2]| [-y[0], y[0]],
            opts: OdeOptions {
                rtol: 1e-11,
                atol: 1e-14,
                ..Default::default()
            },
        };
        let mut seen = Vec::new();
        let out = ode
            .run(0.0, [1.0, 0.0], 2.0, &[], &[0.5, 1.0], &mut |s, y| seen.push((s, y[0])))
            .unwrap();
        assert!((out.y[0] - (-2.0f64).exp()).abs() < 1e-10);
        assert_eq!(seen.len(), 2);
        assert!((seen[1].1 - (-1.0f64).exp()).abs() < 1e-10);
        // first time the decaying solution drops to 0.3
        let g = |_s: f64, y: &[f64; 2]| y[0] - 0.3;
        let out = ode.run(0.0, [1.0, 0.0], 5.0, &[&g], &[], &mut |_, _| {}).unwrap();
        assert_eq!(out.stop, Stop::Event(0));
        assert!((out.s - (1.0f64 / 0.3).ln()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let ode = Dopri5 {
            f: |_s: f64, y: &[f64; 2]| [y[1], -y[0]],
            opts: OdeOptions::default(),
        };
        let out = ode.run(0.0, [1.0, 0.0], 10.0, &[], &[], &mut |_, _| {}).unwrap();
        assert!((out.y[0] - 10f64.cos()).abs() < 1e-9);
    }
}
