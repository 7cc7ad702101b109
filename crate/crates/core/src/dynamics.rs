//! Time evolution: the physical flow, its closed form at `a = 0`, and the
//! modulated flow in self-similar variables.
//!
//! Physical variables: `ω_t = a Λ⁻¹ω ω_x - 2 Hω ω`.
//!
//! Self-similar variables: `ω(x, t) = w(x μ/λ^{1+γ}, s) / λ`, `ds/dt = 1/λ`,
//! `w = F_a + q`. With `r = λ_s/λ + 1` and `μ_s/μ = (2+γ) r` the perturbation
//! obeys
//!
//! `q_s = r (F - yF' + q - y q_y) + M_a q - 2 Hq q + a Λ⁻¹q q_y`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid1d::{holder_seminorm, Grid, GridFn, Parity};
use crate::linop::apply_linearized;
use crate::modulation::{project_admissible_with_size, modulation_rates, RateForm};
use crate::profiles::Profile;
use crate::scalar::{max_abs, Real};

/// Stability factor in the physical step bound.
pub const PHYS_CFL: f64 = 0.5;
/// Largest admissible rescaled-time step.
pub const MAX_DS: f64 = 0.01;
/// Re-projections larger than this abort the run.
pub const MAX_PROJECTION: f64 = 1e-4;
/// Minimum trace length for [`blowup_fit`].
pub const MIN_FIT_SAMPLES: usize = 20;

/// Absorbing layer: `q` is damped at rate up to `ABSORB_RATE` beyond
/// `ABSORB_FRACTION · 2L/h`, the radius where a feature of width `|y|` still
/// spans about 20 cells. Content reaching it has left the resolved region.
pub const ABSORB_FRACTION: f64 = 0.05;
pub const ABSORB_RATE: f64 = 20.0;
/// Ramp width of the absorbing layer in angular cells.
pub const ABSORB_WIDTH_CELLS: f64 = 8.0;

// RK4 reaches about 2.8 on the imaginary axis; keep some room.
const RK4_REACH: f64 = 2.0;

/// Physical-variable state.
#[derive(Clone, Debug)]
pub struct PhysState<T: Real> {
    pub t: T,
    pub omega: GridFn<T>,
    pub a: T,
}

/// `ω₀ / ((1 + t Hω₀)² + t² ω₀²)`, the exact solution at `a = 0`.
pub fn clm_exact<T: Real>(omega0: &GridFn<T>, t: T) -> Result<GridFn<T>> {
    let blowup = clm_blowup_time(omega0);
    if let Some(tb) = blowup {
        if t >= tb {
            return Err(Error::PastBlowup {
                t: t.to_f64_lossy(),
                blowup: tb.to_f64_lossy(),
            });
        }
    }
    let grid = omega0.grid();
    let h = grid.hilbert_values(omega0.values());
    let one = T::one();
    let v = omega0
        .values()
        .iter()
        .zip(&h)
        .map(|(&w, &h)| {
            let d = one + t * h;
            w / (d * d + t * t * w * w)
        })
        .collect();
    Ok(GridFn::from_parts(grid, v, omega0.parity()))
}

/// Smallest `t > 0` with `1 + t Hω₀(x) = 0` at a zero `x` of `ω₀`, or `None`
/// when the data never blows up. Zeros are the origin for odd data plus sign
/// changes between nodes, located by linear interpolation.
pub fn clm_blowup_time<T: Real>(omega0: &GridFn<T>) -> Option<T> {
    let grid = omega0.grid();
    let w = omega0.values();
    let h = grid.hilbert_values(w);
    let mut candidates = Vec::new();
    if omega0.parity() == Parity::Odd {
        candidates.push(grid.value_at_zero(&h));
    }
    let floor = T::lit(1e-14) * max_abs(w);
    for j in 0..w.len() {
        if w[j].abs() <= floor && omega0.parity() != Parity::Odd {
            candidates.push(h[j]);
        }
        if j + 1 < w.len() && w[j] * w[j + 1] < T::zero() {
            let f = w[j] / (w[j] - w[j + 1]);
            candidates.push(h[j] + f * (h[j + 1] - h[j]));
        }
    }
    candidates
        .into_iter()
        .filter(|&h| h < T::zero())
        .map(|h| -T::one() / h)
        .fold(None, |m: Option<T>, t| Some(m.map_or(t, |m| m.min(t))))
}

fn physical_rhs<T: Real>(grid: &Grid<T>, a: T, w: &[T]) -> Vec<T> {
    let h = grid.hilbert_values(w);
    let wx = grid.derivative_values(w);
    let two = T::lit(2.0);
    if a == T::zero() {
        return (0..w.len()).map(|j| -two * h[j] * w[j]).collect();
    }
    let linv = grid.cumulative_values(&h);
    (0..w.len())
        .map(|j| a * linv[j] * wx[j] - two * h[j] * w[j])
        .collect()
}

/// Largest stable physical step: `0.5 / max(|Hω| + |a||u|/Δy)`.
pub fn physical_step_bound<T: Real>(st: &PhysState<T>) -> T {
    let grid = st.omega.grid();
    let w = st.omega.values();
    let h = grid.hilbert_values(w);
    let u = grid.cumulative_values(&h);
    let rate = (0..w.len())
        .map(|j| h[j].abs() + st.a.abs() * u[j].abs() / grid.local_spacing(j))
        .fold(T::zero(), T::max);
    if rate > T::zero() {
        T::lit(PHYS_CFL) / rate
    } else {
        T::infinity()
    }
}

fn combine<T: Real>(base: &[T], c: T, k: &[T]) -> Vec<T> {
    base.iter().zip(k).map(|(&b, &k)| b + c * k).collect()
}

/// One RK4 step of the physical flow.
pub fn step_physical<T: Real>(st: &PhysState<T>, dt: T) -> Result<PhysState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    let bound = physical_step_bound(st);
    if dt > bound {
        return Err(Error::Precondition(format!(
            "dt = {dt} exceeds the stability bound {bound}"
        )));
    }
    let grid = st.omega.grid();
    let w = st.omega.values();
    let half = T::lit(0.5);
    let k1 = physical_rhs(grid, st.a, w);
    let k2 = physical_rhs(grid, st.a, &combine(w, half * dt, &k1));
    let k3 = physical_rhs(grid, st.a, &combine(w, half * dt, &k2));
    let k4 = physical_rhs(grid, st.a, &combine(w, dt, &k3));
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let v: Vec<T> = (0..w.len())
        .map(|j| w[j] + sixth * (k1[j] + two * k2[j] + two * k3[j] + k4[j]))
        .collect();
    let t = st.t + dt;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::BlowupReached(t.to_f64_lossy()));
    }
    Ok(PhysState {
        t,
        omega: GridFn::from_parts(grid, v, st.omega.parity()),
        a: st.a,
    })
}

/// Integrates to `t_end` with steps of at most `dt` (shortened to the
/// stability bound when needed), calling `observe` after every step.
pub fn integrate_physical<T: Real>(
    st: &PhysState<T>,
    t_end: T,
    dt: T,
    mut observe: impl FnMut(&PhysState<T>),
) -> Result<PhysState<T>> {
    let mut cur = st.clone();
    let eps = T::lit(1e-12) * t_end.abs().max(T::one());
    while t_end - cur.t > eps {
        let bound = physical_step_bound(&cur) * T::lit(0.999);
        let h = dt.min(t_end - cur.t).min(bound);
        cur = step_physical(&cur, h)?;
        observe(&cur);
    }
    Ok(cur)
}

/// Self-similar state.
#[derive(Clone, Debug)]
pub struct SimState<T: Real> {
    pub s: T,
    pub t: T,
    pub lam: T,
    pub mu: T,
    pub q: GridFn<T>,
    pub profile: Arc<Profile<T>>,
    pub delta: T,
    pub a: T,
}

/// Serializable snapshot of a [`SimState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub s: f64,
    pub t: f64,
    pub lam: f64,
    pub mu: f64,
    pub delta: f64,
    pub a: f64,
    pub gamma: f64,
    pub n: usize,
    #[serde(rename = "L")]
    pub scale: f64,
    pub q: Vec<f64>,
    pub profile: Vec<f64>,
}

impl<T: Real> SimState<T> {
    /// Zero-perturbation state at rescaled time `s` with `λ = e^{-s}`, `μ = 1`.
    pub fn initial(profile: Arc<Profile<T>>, q: GridFn<T>, s: T, delta: T) -> Self {
        let a = profile.a;
        SimState {
            s,
            t: T::zero(),
            lam: (-s).exp(),
            mu: T::one(),
            q,
            profile,
            delta,
            a,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let lossy = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect();
        let g = self.q.grid();
        Checkpoint {
            s: self.s.to_f64_lossy(),
            t: self.t.to_f64_lossy(),
            lam: self.lam.to_f64_lossy(),
            mu: self.mu.to_f64_lossy(),
            delta: self.delta.to_f64_lossy(),
            a: self.a.to_f64_lossy(),
            gamma: self.profile.gamma.to_f64_lossy(),
            n: g.n(),
            scale: g.scale().to_f64_lossy(),
            q: lossy(self.q.values()),
            profile: lossy(self.profile.f.values()),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let grid = Grid::new(c.n, T::lit(c.scale))?;
        let cast = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let f = GridFn::new(&grid, cast(&c.profile), Parity::Odd)?;
        let profile = Profile::from_samples(T::lit(c.a), T::lit(c.gamma), f)?;
        Ok(SimState {
            s: T::lit(c.s),
            t: T::lit(c.t),
            lam: T::lit(c.lam),
            mu: T::lit(c.mu),
            q: GridFn::new(&grid, cast(&c.q), Parity::Odd)?,
            profile: Arc::new(profile),
            delta: T::lit(c.delta),
            a: T::lit(c.a),
        })
    }
}

/// What one self-similar step did.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepReport {
    /// `|Hq(0)| + |q_y(0)|` before re-projection.
    pub drift: f64,
    /// Max norm of the removed template combination.
    pub proj_size: f64,
    /// RK4 substeps taken.
    pub substeps: usize,
}

/// C^∞ transition from 0 at `x ≤ 0` to 1 at `x ≥ 1`. Cutoffs with a kink
/// leak Gibbs error into the spectral derivative at the origin.
pub fn smooth_step<T: Real>(x: T) -> T {
    let one = T::one();
    if x <= T::zero() {
        return T::zero();
    }
    if x >= one {
        return one;
    }
    let (a, b) = ((-one / x).exp(), (-one / (one - x)).exp());
    a / (a + b)
}

/// Damping rate of the absorbing layer at each node: a tanh ramp in
/// `-cos θ = (y² - L²)/(y² + L²)`, which is analytic across `θ = π`. A ramp in
/// `|y|` or in the angle itself folds into a kink at infinity. The ramp is
/// about `ABSORB_WIDTH_CELLS` angular cells wide at the onset radius, so its
/// spectrum decays exponentially at any `n`.
pub fn absorb_profile<T: Real>(grid: &Grid<T>) -> Vec<T> {
    let l2 = grid.scale() * grid.scale();
    let r = T::lit(ABSORB_FRACTION) * T::lit(2.0) * grid.scale() / grid.spacing();
    let coord = |y: T| (y * y - l2) / (y * y + l2);
    let onset = coord(r);
    let width = T::lit(ABSORB_WIDTH_CELLS) * grid.spacing() * grid.angle_of(r).sin();
    let half = T::lit(0.5);
    grid.nodes()
        .iter()
        .map(|&y| T::lit(ABSORB_RATE) * half * (T::one() + ((coord(y) - onset) / width).tanh()))
        .collect()
}

struct Rhs<T> {
    dq: Vec<T>,
    rate: T,
    lam: T,
}

fn selfsimilar_rhs<T: Real>(p: &Profile<T>, q: &GridFn<T>, lam: T, form: RateForm, sigma: &[T]) -> Result<Rhs<T>> {
    let grid = p.grid();
    let rate = modulation_rates(p, q, form)?.lam_rate;
    let mq = apply_linearized(p, q)?;
    let hq = grid.hilbert_values(q.values());
    let linv_q = grid.cumulative_values(&hq);
    let qy = grid.derivative_values(q.values());
    let (f, df, nodes) = (p.f.values(), p.df.values(), grid.nodes());
    let two = T::lit(2.0);
    let qv = q.values();
    // the damping term is projected so that it leaves both constraints alone
    let damp = GridFn::from_parts(grid, qv.iter().zip(sigma).map(|(&q, &s)| s * q).collect(), Parity::Odd);
    let damp = project_admissible_with_size(&damp)?.q;
    let dq = (0..qv.len())
        .map(|j| {
            let y = nodes[j];
            rate * (f[j] - y * df[j] + qv[j] - y * qy[j]) + mq.values()[j] - two * hq[j] * qv[j]
                + p.a * linv_q[j] * qy[j]
                - damp.values()[j]
        })
        .collect();
    Ok(Rhs { dq, rate, lam })
}

/// Largest stable RK4 step for the transport part of the self-similar flow.
pub fn selfsimilar_step_bound<T: Real>(st: &SimState<T>) -> T {
    let p = &st.profile;
    let grid = p.grid();
    let one = T::one();
    let speed = (0..grid.n())
        .map(|j| {
            let v = (one + p.gamma) * grid.nodes()[j] - p.a * p.linv_f.values()[j];
            (v / grid.jacobian()[j]).abs()
        })
        .fold(T::zero(), T::max);
    let modes = T::from_usize_lossy(grid.n() / 2);
    T::lit(RK4_REACH) / (modes * speed + one)
}

/// One step of the modulated flow of length `ds ≤ 0.01`, split into RK4
/// substeps when the transport bound requires it. `λ`, `μ` and `t` are
/// advanced in the same RK4 stages; `q` is re-projected at the end.
pub fn step_selfsimilar<T: Real>(st: &SimState<T>, ds: T, form: RateForm) -> Result<(SimState<T>, StepReport)> {
    if !(ds > T::zero() && ds <= T::lit(MAX_DS) * T::lit(1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "ds = {ds} outside (0, {MAX_DS}]"
        )));
    }
    let bound = selfsimilar_step_bound(st);
    let substeps = (ds / bound).ceil().to_f64_lossy().max(1.0) as usize;
    let h = ds / T::from_usize_lossy(substeps);
    let p = &*st.profile;
    let grid = p.grid();
    let two_g = T::lit(2.0) + p.gamma;
    let (half, two, sixth) = (T::lit(0.5), T::lit(2.0), h / T::lit(6.0));

    let sigma = absorb_profile(grid);
    let mut q = st.q.clone();
    let (mut ln_lam, mut ln_mu, mut t) = (st.lam.ln(), st.mu.ln(), st.t);
    let stage_q = |q: &GridFn<T>, c: T, k: &Rhs<T>| GridFn::from_parts(grid, combine(q.values(), c, &k.dq), Parity::Odd);
    for _ in 0..substeps {
        let k1 = selfsimilar_rhs(p, &q, ln_lam.exp(), form, &sigma)?;
        let k2 = selfsimilar_rhs(p, &stage_q(&q, half * h, &k1), (ln_lam + half * h * (k1.rate - T::one())).exp(), form, &sigma)?;
        let k3 = selfsimilar_rhs(p, &stage_q(&q, half * h, &k2), (ln_lam + half * h * (k2.rate - T::one())).exp(), form, &sigma)?;
        let k4 = selfsimilar_rhs(p, &stage_q(&q, h, &k3), (ln_lam + h * (k3.rate - T::one())).exp(), form, &sigma)?;
        let v: Vec<T> = (0..grid.n())
            .map(|j| q.values()[j] + sixth * (k1.dq[j] + two * k2.dq[j] + two * k3.dq[j] + k4.dq[j]))
            .collect();
        let rate = (k1.rate + two * k2.rate + two * k3.rate + k4.rate) / T::lit(6.0);
        t = t + sixth * (k1.lam + two * k2.lam + two * k3.lam + k4.lam);
        ln_lam = ln_lam + h * (rate - T::one());
        ln_mu = ln_mu + h * two_g * rate;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowupReached(t.to_f64_lossy()));
        }
        q = GridFn::from_parts(grid, v, Parity::Odd);
    }
    let drift = crate::modulation::constraint_defect(&q);
    let proj = project_admissible_with_size(&q)?;
    if proj.size > T::lit(MAX_PROJECTION) {
        return Err(Error::ConstraintBlowOff(proj.size.to_f64_lossy()));
    }
    let next = SimState {
        s: st.s + ds,
        t,
        lam: ln_lam.exp(),
        mu: ln_mu.exp(),
        q: proj.q,
        profile: st.profile.clone(),
        delta: st.delta,
        a: st.a,
    };
    Ok((
        next,
        StepReport {
            drift: drift.to_f64_lossy(),
            proj_size: proj.size.to_f64_lossy(),
            substeps,
        },
    ))
}

/// `ω(x, t) = (F_a + q)(x μ/λ^{1+γ}) / λ` on the state's grid, and `t`.
pub fn reconstruct_physical<T: Real>(st: &SimState<T>) -> (GridFn<T>, T) {
    let p = &*st.profile;
    let grid = p.grid();
    let k = st.mu / st.lam.powf(T::one() + p.gamma);
    let ys: Vec<T> = grid.nodes().iter().map(|&y| y * k).collect();
    let outer = grid.nodes()[grid.n() - 1];
    if k > T::one() && ys[grid.n() - 1] > outer {
        log::warn!("reconstruction samples beyond the outermost node (dilation {k})");
    }
    let f = p.f_at(&ys);
    let v: Vec<T> = if st.q.max_abs() == T::zero() {
        f.iter().map(|&f| f / st.lam).collect()
    } else {
        let qi = st.q.interpolant();
        ys.iter().zip(&f).map(|(&y, &f)| (f + qi.eval(y)) / st.lam).collect()
    };
    (GridFn::from_parts(grid, v, Parity::Odd), st.t)
}

/// Hölder exponent `1 - 1/(1+γ)` of the cusp.
pub fn cusp_exponent<T: Real>(gamma: T) -> T {
    T::one() - T::one() / (T::one() + gamma)
}

/// `[u]_{C^α̃}` on `|x| ≤ window` for the physical velocity, computed in
/// self-similar variables: `μ^{α̃-1} [Λ⁻¹w]_{C^α̃}` over `|y| ≤ window·μ/λ^{1+γ}`.
pub fn velocity_holder<T: Real>(st: &SimState<T>, window: T) -> Result<T> {
    let p = &*st.profile;
    let alpha = cusp_exponent(p.gamma);
    let w = p.f.axpy(T::one(), &st.q);
    let grid = p.grid();
    let u = GridFn::from_parts(grid, grid.cumulative_values(&grid.hilbert_values(w.values())), Parity::Odd);
    let k = st.mu / st.lam.powf(T::one() + p.gamma);
    Ok(st.mu.powf(alpha - T::one()) * holder_seminorm(&u, alpha, window * k)?)
}

/// `‖ω‖_∞ = ‖F_a + q‖_∞ / λ`.
pub fn vorticity_sup<T: Real>(st: &SimState<T>) -> T {
    st.profile.f.axpy(T::one(), &st.q).max_abs() / st.lam
}

/// Least-squares fit of `λ = C (T - t)` on the final third of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    #[serde(rename = "T")]
    pub blowup_time: f64,
    #[serde(rename = "C")]
    pub rate: f64,
    /// RMS misfit relative to the RMS of `λ` on the fitted window.
    pub residual: f64,
}

pub fn blowup_fit(trace: &[(f64, f64)]) -> Result<BlowupFit> {
    if trace.len() < MIN_FIT_SAMPLES {
        return Err(Error::Precondition(format!(
            "{} samples, need at least {MIN_FIT_SAMPLES}",
            trace.len()
        )));
    }
    let tail = &trace[trace.len() - trace.len() / 3..];
    if tail.windows(2).any(|w| !(w[1].1 < w[0].1) || !(w[1].0 > w[0].0)) {
        return Err(Error::Precondition("λ is not decreasing on the fitted window".into()));
    }
    let m = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / m;
    let ml = tail.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = stl / stt;
    let c = -slope;
    let tb = mt + ml / c;
    let misfit = (tail.iter().map(|p| (p.1 - c * (tb - p.0)).powi(2)).sum::<f64>() / m).sqrt();
    let scale = (tail.iter().map(|p| p.1 * p.1).sum::<f64>() / m).sqrt();
    let last = tail[tail.len() - 1].0;
    if !(tb > last) {
        return Err(Error::Precondition(format!(
            "fitted blowup time {tb} does not exceed the last sample {last}"
        )));
    }
    Ok(BlowupFit {
        blowup_time: tb,
        rate: c,
        residual: misfit / scale,
    })
}
