//! Self-similar profiles `F_a` of the a-family and their tails.
//!
//! A profile solves `F + ((1+γ) y - a Λ⁻¹F) F' + 2 HF F = 0` together with the
//! normalization `F'(0) = 1`, which selects one member of the scaling family
//! `F(μ y)`. At `a = 0` the profile is `y / (1 + y²)` with `γ = 0`; for small
//! `a` it is obtained by damped Newton continuation in `a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{HalfFn, HalfGrid};
use crate::grid1d::{hilbert, lambda_inv, Grid, GridFn, Parity};
use crate::linalg::Dense;
use crate::scalar::{max_abs, Real};

/// Largest `|a|` accepted by the continuation.
pub const MAX_A: f64 = 0.1;
/// Largest continuation increment.
pub const MAX_STEP: f64 = 0.01;
/// Default continuation increment.
pub const DEFAULT_STEP: f64 = 0.005;
/// Window on which profile residuals are audited.
pub const RESIDUAL_WINDOW: f64 = 10.0;
/// Map scale for grids carrying a nonzero-parameter profile. The algebraic tail
/// limits accuracy through the product of node count and scale, so profile work
/// uses a wider map than the default.
pub const PROFILE_SCALE: f64 = 8.0;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 40;
const MIN_DAMPING: f64 = 1e-4;
const MIN_STEP: f64 = 1e-5;

/// Sampled self-similar profile with its derived fields.
#[derive(Clone, Debug)]
pub struct Profile<T: Real> {
    pub a: T,
    pub gamma: T,
    pub f: GridFn<T>,
    pub hf: GridFn<T>,
    pub linv_f: GridFn<T>,
    pub df: GridFn<T>,
    /// Max-norm residual of the profile equation on `|y| ≤ 10`.
    pub residual: T,
}

#[derive(Serialize, Deserialize)]
struct ProfileSidecar {
    a: f64,
    gamma: f64,
    residual: f64,
}

impl<T: Real> Profile<T> {
    /// Assembles a profile from sampled `F`, deriving `HF`, `Λ⁻¹F`, `F'`.
    pub fn from_samples(a: T, gamma: T, f: GridFn<T>) -> Result<Self> {
        let hf = hilbert(&f)?;
        let linv_f = lambda_inv(&f)?;
        let df = f.derivative();
        let mut p = Profile {
            a,
            gamma,
            f,
            hf,
            linv_f,
            df,
            residual: T::zero(),
        };
        p.residual = profile_residual(&p).max_abs_within(T::lit(RESIDUAL_WINDOW));
        Ok(p)
    }

    pub fn grid(&self) -> &Grid<T> {
        self.f.grid()
    }

    /// `HF(0) = -(2+γ)/(2-a)`, the value forced by the equation at the origin.
    pub fn expected_hf_at_zero(&self) -> T {
        let two = T::lit(2.0);
        -(two + self.gamma) / (two - self.a)
    }

    /// `F` at arbitrary points: the closed form at `a = 0`, otherwise the
    /// spectral interpolant of the samples.
    pub fn f_at(&self, ys: &[T]) -> Vec<T> {
        if self.a == T::zero() && self.gamma == T::zero() {
            return ys.iter().map(|&y| y / (T::one() + y * y)).collect();
        }
        let interp = self.f.interpolant();
        ys.iter().map(|&y| interp.eval(y)).collect()
    }

    /// CSV with columns `y,F,HF,LinvF,dF`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,F,HF,LinvF,dF\n");
        let nodes = self.grid().nodes();
        for j in 0..nodes.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                nodes[j],
                self.f.values()[j],
                self.hf.values()[j],
                self.linv_f.values()[j],
                self.df.values()[j]
            ));
        }
        out
    }

    /// JSON sidecar `{a, gamma, residual}`.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&ProfileSidecar {
            a: self.a.to_f64_lossy(),
            gamma: self.gamma.to_f64_lossy(),
            residual: self.residual.to_f64_lossy(),
        })
        .expect("sidecar serializes")
    }
}

/// Pointwise residual `F + ((1+γ)y - aΛ⁻¹F)F' + 2 HF F`.
pub fn profile_residual<T: Real>(p: &Profile<T>) -> GridFn<T> {
    let nodes = p.grid().nodes();
    let two = T::lit(2.0);
    let v = (0..nodes.len())
        .map(|j| {
            let f = p.f.values()[j];
            let transport = (T::one() + p.gamma) * nodes[j] - p.a * p.linv_f.values()[j];
            f + transport * p.df.values()[j] + two * p.hf.values()[j] * f
        })
        .collect();
    GridFn::from_parts(p.grid(), v, Parity::Odd)
}

/// The closed-form profile at `a = 0`: `F₀ = y/(1+y²)`, `HF₀ = -1/(1+y²)`,
/// `Λ⁻¹F₀ = -arctan y`.
pub fn clm_profile<T: Real>(grid: &Grid<T>) -> Profile<T> {
    let one = T::one();
    let f = GridFn::from_fn(grid, Parity::Odd, |y| y / (one + y * y)).expect("closed form");
    let hf = GridFn::from_fn(grid, Parity::Even, |y| -one / (one + y * y)).expect("closed form");
    let linv_f = GridFn::from_fn(grid, Parity::Odd, |y| -y.atan()).expect("closed form");
    let df = GridFn::from_fn(grid, Parity::Even, |y| {
        let d = one + y * y;
        (one - y * y) / (d * d)
    })
    .expect("closed form");
    let mut p = Profile {
        a: T::zero(),
        gamma: T::zero(),
        f,
        hf,
        linv_f,
        df,
        residual: T::zero(),
    };
    p.residual = profile_residual(&p).max_abs_within(T::lit(RESIDUAL_WINDOW));
    p
}

/// Linear operators restricted to odd functions, as dense matrices acting on
/// the values at the positive nodes.
struct OddOperators<T> {
    m: usize,
    hilbert: Vec<T>,
    deriv: Vec<T>,
    linv: Vec<T>,
    deriv_at_zero: Vec<T>,
    hilbert_at_zero: Vec<T>,
}

impl<T: Real> OddOperators<T> {
    fn build(grid: &Grid<T>) -> Self {
        let n = grid.n();
        let m = n / 2;
        let mut hilbert = vec![T::zero(); m * m];
        let mut deriv = vec![T::zero(); m * m];
        let mut linv = vec![T::zero(); m * m];
        let mut deriv_at_zero = vec![T::zero(); m];
        let mut hilbert_at_zero = vec![T::zero(); m];
        for col in 0..m {
            let mut e = vec![T::zero(); n];
            let j = m + col;
            e[j] = T::one();
            e[grid.mirror(j)] = -T::one();
            let h = grid.hilbert_values(&e);
            let d = grid.derivative_values(&e);
            let l = grid.cumulative_values(&h);
            for row in 0..m {
                hilbert[row * m + col] = h[m + row];
                deriv[row * m + col] = d[m + row];
                linv[row * m + col] = l[m + row];
            }
            deriv_at_zero[col] = grid.derivative_at_zero(&e);
            hilbert_at_zero[col] = grid.value_at_zero(&h);
        }
        OddOperators {
            m,
            hilbert,
            deriv,
            linv,
            deriv_at_zero,
            hilbert_at_zero,
        }
    }
}

fn odd_extension<T: Real>(grid: &Grid<T>, half: &[T]) -> Vec<T> {
    let n = grid.n();
    let m = n / 2;
    let mut v = vec![T::zero(); n];
    for (i, &x) in half.iter().enumerate() {
        v[m + i] = x;
        v[grid.mirror(m + i)] = -x;
    }
    v
}

struct Evaluated<T> {
    residual: Vec<T>,
    norm: T,
    hf: Vec<T>,
    df: Vec<T>,
    linv: Vec<T>,
}

fn evaluate<T: Real>(grid: &Grid<T>, a: T, gamma: T, half: &[T]) -> Evaluated<T> {
    let m = grid.n() / 2;
    let full = odd_extension(grid, half);
    let hf = grid.hilbert_values(&full);
    let df = grid.derivative_values(&full);
    let linv = grid.cumulative_values(&hf);
    let nodes = grid.nodes();
    let two = T::lit(2.0);
    let mut residual = Vec::with_capacity(m + 1);
    for i in 0..m {
        let j = m + i;
        let transport = (T::one() + gamma) * nodes[j] - a * linv[j];
        residual.push(full[j] + transport * df[j] + two * hf[j] * full[j]);
    }
    // smoothness at the origin: the residual's slope at 0 vanishes, which
    // pins γ; it takes the place of the outermost node's equation
    residual[m - 1] = two + gamma + (two - a) * grid.value_at_zero(&hf);
    residual.push(grid.derivative_at_zero(&full) - T::one());
    let norm = max_abs(&residual);
    Evaluated {
        residual,
        norm,
        hf,
        df,
        linv,
    }
}

/// Damped Newton solve of the profile equation at fixed `a` from an initial
/// guess `(half, gamma)`; returns the converged `(half, gamma)`.
fn newton_solve<T: Real>(
    grid: &Grid<T>,
    ops: &OddOperators<T>,
    a: T,
    mut half: Vec<T>,
    mut gamma: T,
) -> Result<(Vec<T>, T)> {
    let m = ops.m;
    let nodes = grid.nodes();
    let two = T::lit(2.0);
    let mut current = evaluate(grid, a, gamma, &half);
    for _ in 0..NEWTON_MAX_ITERS {
        if current.norm <= T::lit(NEWTON_TOL) {
            return Ok((half, gamma));
        }
        let mut jac = Dense::zeros(m + 1);
        for i in 0..m {
            let j = m + i;
            let f = half[i];
            let transport = (T::one() + gamma) * nodes[j] - a * current.linv[j];
            let df = current.df[j];
            for k in 0..m {
                let idx = i * m + k;
                *jac.at(i, k) = transport * ops.deriv[idx] - a * df * ops.linv[idx]
                    + two * f * ops.hilbert[idx];
            }
            *jac.at(i, i) = jac.get(i, i) + T::one() + two * current.hf[j];
            *jac.at(i, m) = nodes[j] * df;
        }
        for k in 0..m {
            *jac.at(m - 1, k) = (two - a) * ops.hilbert_at_zero[k];
        }
        *jac.at(m - 1, m) = T::one();
        for k in 0..m {
            *jac.at(m, k) = ops.deriv_at_zero[k];
        }
        let mut delta: Vec<T> = current.residual.iter().map(|&r| -r).collect();
        jac.solve(&mut delta)?;

        let mut damping = T::one();
        let mut accepted = None;
        while damping >= T::lit(MIN_DAMPING) {
            let trial: Vec<T> = half
                .iter()
                .zip(&delta)
                .map(|(&u, &d)| u + damping * d)
                .collect();
            let trial_gamma = gamma + damping * delta[m];
            let eval = evaluate(grid, a, trial_gamma, &trial);
            if eval.norm.is_finite() && eval.norm < current.norm {
                accepted = Some((trial, trial_gamma, eval));
                break;
            }
            damping = damping * T::lit(0.5);
        }
        match accepted {
            Some((h, g, e)) => {
                half = h;
                gamma = g;
                current = e;
            }
            // stagnation at rounding level counts as converged
            None if current.norm <= T::lit(1e-9) => return Ok((half, gamma)),
            None => {
                return Err(Error::NewtonDivergence {
                    a: a.to_f64_lossy(),
                    residual: current.norm.to_f64_lossy(),
                })
            }
        }
    }
    if current.norm <= T::lit(1e-9) {
        Ok((half, gamma))
    } else {
        Err(Error::NewtonDivergence {
            a: a.to_f64_lossy(),
            residual: current.norm.to_f64_lossy(),
        })
    }
}

/// Continues `(F₀, γ = 0)` to `(F_a, γ(a))` in increments of at most `step`.
pub fn continue_profile<T: Real>(a_target: T, step: T, grid: &Grid<T>) -> Result<Profile<T>> {
    if !(a_target.abs() <= T::lit(MAX_A)) {
        return Err(Error::Precondition(format!(
            "|a| = {} exceeds the small-a regime {MAX_A}",
            a_target.abs()
        )));
    }
    if !(step > T::zero() && step <= T::lit(MAX_STEP)) {
        return Err(Error::Precondition(format!(
            "continuation step {step} not in (0, {MAX_STEP}]"
        )));
    }
    if a_target == T::zero() {
        return Ok(clm_profile(grid));
    }
    let ops = OddOperators::build(grid);
    let m = grid.n() / 2;
    let start = clm_profile(grid);
    let mut half: Vec<T> = start.f.values()[m..].to_vec();
    let mut gamma = T::zero();
    let mut a = T::zero();
    // previous accepted point, for the secant predictor
    let mut prev: Option<(T, Vec<T>, T)> = None;
    let dir = a_target.signum();
    let mut h = step;
    while (a_target - a).abs() > T::zero() {
        let next_a = if (a_target - a).abs() <= h {
            a_target
        } else {
            a + dir * h
        };
        let (guess, guess_gamma) = match &prev {
            Some((pa, ph, pg)) if *pa != a => {
                let w = (next_a - a) / (a - *pa);
                let g: Vec<T> = half
                    .iter()
                    .zip(ph)
                    .map(|(&u, &v)| u + w * (u - v))
                    .collect();
                (g, gamma + w * (gamma - *pg))
            }
            _ => (half.clone(), gamma),
        };
        match newton_solve(grid, &ops, next_a, guess, guess_gamma) {
            Ok((sol, g)) => {
                prev = Some((a, std::mem::replace(&mut half, sol), gamma));
                gamma = g;
                a = next_a;
            }
            Err(e) => {
                h = h * T::lit(0.5);
                log::warn!("continuation step failed at a = {next_a}: {e}; halving to {h}");
                if h < T::lit(MIN_STEP) {
                    return Err(e);
                }
            }
        }
    }
    let f = GridFn::from_parts(grid, odd_extension(grid, &half), Parity::Odd);
    Profile::from_samples(a, gamma, f)
}

/// Least-squares power law `|f| ≈ C |y|^p` on a range of positive nodes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub coefficient: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

/// Fits `log|f| = log C + p log y` over nodes with `y` in `range`.
pub fn power_law_fit<T: Real>(f: &GridFn<T>, range: (f64, f64)) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64, f64)> = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&y, &v)| (y.to_f64_lossy(), v.to_f64_lossy()))
        .filter(|&(y, v)| y >= range.0 && y <= range.1 && v != 0.0)
        .map(|(y, v)| (y.ln(), v.abs().ln(), v.signum()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Precondition(format!(
            "only {} nodes in fit range [{}, {}]",
            pts.len(),
            range.0,
            range.1
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let sign = pts.last().map(|p| p.2).unwrap_or(1.0);
    Ok(PowerLawFit {
        exponent: slope,
        coefficient: sign * intercept.exp(),
        residual,
        points: pts.len(),
    })
}

/// Measured tail asymptotics of a profile.
#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    /// Fitted exponent of `F`; compare with `-1/(1+γ)`.
    pub exponent_fit: f64,
    /// Coefficient of `F ~ C1 |y|^p` from the free fit.
    pub c1: f64,
    /// Coefficient of `HF ~ C2 |y|^{-1/(1+γ)}` with the exponent held fixed.
    pub c2: f64,
    pub fit_range: (f64, f64),
    pub residual: f64,
}

/// Default tail-fit window.
pub const DEFAULT_TAIL_RANGE: (f64, f64) = (10.0, 100.0);

pub fn tail_fit<T: Real>(p: &Profile<T>, fit_range: (f64, f64)) -> Result<TailReport> {
    if fit_range.0 < 5.0 || fit_range.1 <= fit_range.0 {
        return Err(Error::Precondition(format!(
            "fit range {fit_range:?} must satisfy 5 <= y_min < y_max"
        )));
    }
    let fit = power_law_fit(&p.f, fit_range)?;
    let expo = -1.0 / (1.0 + p.gamma.to_f64_lossy());
    let (num, den) = p
        .grid()
        .nodes()
        .iter()
        .zip(p.hf.values())
        .map(|(&y, &v)| (y.to_f64_lossy(), v.to_f64_lossy()))
        .filter(|&(y, _)| y >= fit_range.0 && y <= fit_range.1)
        .fold((0.0, 0.0), |(n, d), (y, v)| {
            let b = y.powf(expo);
            (n + v * b, d + b * b)
        });
    Ok(TailReport {
        exponent_fit: fit.exponent,
        c1: fit.coefficient,
        c2: if den > 0.0 { num / den } else { 0.0 },
        fit_range,
        residual: fit.residual,
    })
}

/// Closed-form `a = 0` profile of the `X = x^α` formulation and its `H_α`.
#[derive(Clone, Debug)]
pub struct AlphaProfile<T: Real> {
    pub alpha: T,
    pub f0a: HalfFn<T>,
    pub hf0a: HalfFn<T>,
}

/// `F₀^(α)(Y) = -sin(απ/2) Y / (1 + 2cos(απ/2) Y + Y²)`.
pub fn f0_alpha<T: Real>(alpha: T, y: T) -> T {
    let c = (alpha * T::FRAC_PI_2()).cos();
    let s = (alpha * T::FRAC_PI_2()).sin();
    -s * y / (T::one() + T::lit(2.0) * c * y + y * y)
}

/// `H_α(F₀^(α))(Y) = (1 + cos(απ/2) Y) / (1 + 2cos(απ/2) Y + Y²)`.
pub fn hf0_alpha<T: Real>(alpha: T, y: T) -> T {
    let c = (alpha * T::FRAC_PI_2()).cos();
    (T::one() + c * y) / (T::one() + T::lit(2.0) * c * y + y * y)
}

pub fn alpha_profile<T: Real>(alpha: T, grid: &HalfGrid<T>) -> Result<AlphaProfile<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::Precondition(format!("alpha = {alpha} not in (0, 1)")));
    }
    Ok(AlphaProfile {
        alpha,
        f0a: HalfFn::from_fn(grid, |y| f0_alpha(alpha, y)),
        hf0a: HalfFn::from_fn(grid, |y| hf0_alpha(alpha, y)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid1d::make_grid;

    #[test]
    fn clm_profile_values() {
        let g: Grid<f64> = make_grid(1024, 1.0).unwrap();
        let p = clm_profile(&g);
        let j = g.positive().start;
        // F(1) and HF(0) via interpolation
        assert!((g.interpolant(p.f.values()).eval(1.0) - 0.5).abs() < 1e-10);
        assert!((p.f.derivative_at_zero() - 1.0).abs() < 1e-10);
        assert!((p.hf.value_at_zero() + 1.0).abs() < 1e-10);
        assert!(p.residual < 1e-8, "residual {}", p.residual);
        assert!((p.expected_hf_at_zero() + 1.0).abs() < 1e-15);
        assert!(p.f.values()[j] > 0.0);
    }

    #[test]
    fn zero_target_returns_clm() {
        let g = make_grid(256, 1.0).unwrap();
        let p = continue_profile(0.0, 0.005, &g).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.f.values(), clm_profile(&g).f.values());
    }

    #[test]
    fn continuation_preconditions() {
        let g = make_grid(256, 1.0).unwrap();
        assert!(continue_profile(0.2, 0.005, &g).is_err());
        assert!(continue_profile(0.01, 0.02, &g).is_err());
        assert!(continue_profile(0.01, 0.0, &g).is_err());
    }

    #[test]
    fn clm_tail_exponents() {
        let g = make_grid(1024, 1.0).unwrap();
        let p = clm_profile(&g);
        let t = tail_fit(&p, DEFAULT_TAIL_RANGE).unwrap();
        assert!((t.exponent_fit + 1.0).abs() < 0.05, "{t:?}");
        let h = power_law_fit(&p.hf, DEFAULT_TAIL_RANGE).unwrap();
        assert!((h.exponent + 2.0).abs() < 0.1, "{h:?}");
        assert!(tail_fit(&p, (1.0, 100.0)).is_err());
        assert!(tail_fit(&p, (1.0e6, 2.0e6)).is_err());
    }

    #[test]
    fn alpha_profile_closed_forms() {
        let hg = HalfGrid::<f64>::new(512, 1.0).unwrap();
        let ap = alpha_profile(0.3f64, &hg).unwrap();
        assert!((hf0_alpha(0.3f64, 0.0) - 1.0).abs() < 1e-15);
        let s = (0.3 * std::f64::consts::FRAC_PI_2).sin();
        let c = (0.3 * std::f64::consts::FRAC_PI_2).cos();
        assert!((f0_alpha(0.3f64, 1.0) + s / (2.0 + 2.0 * c)).abs() < 1e-15);
        assert_eq!(ap.f0a.values().len(), 512);
        assert!(alpha_profile(1.0, &hg).is_err());
    }

    #[test]
    fn alpha_profile_approaches_scaled_half_line_profile() {
        // |sin(απ/2) Y/(1+Y)² + F₀^(α)| shrinks like α²
        let defect = |alpha: f64| -> f64 {
            let s = (alpha * std::f64::consts::FRAC_PI_2).sin();
            (0..4000)
                .map(|i| i as f64 * 0.01)
                .map(|y| (s * y / (1.0 + y).powi(2) + f0_alpha(alpha, y)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = defect(0.1) / defect(0.05);
        assert!(ratio > 3.5 && ratio < 8.5, "ratio {ratio}");
    }

    const SLOPE: f64 = -0.613_705_638_880_109_4; // ln 4 - 2

    #[test]
    fn gamma_slope_at_small_a() {
        let g = make_grid(512, 1.0).unwrap();
        for &a in &[0.01, -0.01] {
            let p = continue_profile(a, DEFAULT_STEP, &g).unwrap();
            assert!(((p.gamma / a) / SLOPE - 1.0).abs() < 0.05, "a {a}: {}", p.gamma / a);
            assert!(p.residual <= 1e-6);
            assert!((p.f.derivative_at_zero() - 1.0).abs() <= 1e-8);
            assert!((p.hf.value_at_zero() - p.expected_hf_at_zero()).abs() <= 1e-6);
        }
    }

    #[test]
    fn deviation_from_clm_is_linear_in_a() {
        let g = make_grid(256, 1.0).unwrap();
        let f0 = clm_profile(&g);
        let dev: Vec<f64> = [0.0125, 0.025, 0.05]
            .iter()
            .map(|&a| continue_profile(a, DEFAULT_STEP, &g).unwrap().f.max_diff(&f0.f) / a)
            .collect();
        assert!(dev.iter().all(|&d| d > 0.0));
        for w in dev.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.2, "{dev:?}");
        }
    }

    #[test]
    fn gamma_is_monotone() {
        let g = make_grid(256, 1.0).unwrap();
        let gammas: Vec<f64> = [-0.05, -0.025, 0.025, 0.05]
            .iter()
            .map(|&a| continue_profile(a, DEFAULT_STEP, &g).unwrap().gamma)
            .collect();
        assert!(gammas.windows(2).all(|w| w[1] < w[0]), "{gammas:?}");
    }

    #[test]
    fn profile_tail_exponent() {
        let g = make_grid(1024, 1.0).unwrap();
        let p = continue_profile(0.05, DEFAULT_STEP, &g).unwrap();
        let t = tail_fit(&p, DEFAULT_TAIL_RANGE).unwrap();
        let expected = -1.0 / (1.0 + p.gamma);
        assert!((t.exponent_fit - expected).abs() < 0.05, "{t:?} vs {expected}");
    }

    #[test]
    fn profile_csv_and_sidecar() {
        let g = make_grid(64, 1.0).unwrap();
        let p = clm_profile(&g);
        let csv = p.to_csv();
        assert!(csv.starts_with("y,F,HF,LinvF,dF\n"));
        assert_eq!(csv.lines().count(), 65);
        let v: serde_json::Value = serde_json::from_str(&p.sidecar_json()).unwrap();
        assert_eq!(v["a"], 0.0);
        assert!(v["residual"].as_f64().unwrap() < 1e-8);
    }
}
