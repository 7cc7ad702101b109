//! Operators of the odd problem after the change of variable `X = x^α`.
//!
//! Functions live on the half-line `(0, ∞)`, sampled at the positive nodes of
//! a mapped grid of twice the size, so odd and even extensions reuse the
//! full-line spectral machinery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid1d::{hilbert, make_grid, Grid, GridFn, Parity, Weight};
use crate::par::parallel_map;
use crate::scalar::{max_abs, Real};

/// Default half-line size.
pub const DEFAULT_HALF_NODES: usize = 1024;
/// Tolerance on `∫ q/Y` for admissible perturbations.
pub const ADMISSIBILITY_TOL: f64 = 1e-8;
/// Velocity relation error above which the quadratures are inconsistent.
pub const RELATION_FAIL: f64 = 1e-3;
/// The velocity relation is audited on `X ≤ RELATION_WINDOW`.
pub const RELATION_WINDOW: f64 = 20.0;
/// Minimum sample count of a kernel audit.
pub const MIN_AUDIT_SAMPLES: usize = 100;
/// Values of `α` at which the small-α limit of the kernel is audited.
pub const LIMIT_ALPHAS: [f64; 3] = [0.1, 0.05, 0.025];

/// Nodes `Y_j = L tan(θ_j/2)`, `θ_j = (j+½)π/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfGrid<T: Real> {
    full: Grid<T>,
    n: usize,
}

impl<T: Real> HalfGrid<T> {
    pub fn new(n: usize, scale: T) -> Result<Self> {
        let full = make_grid(2 * n, scale)?;
        Ok(HalfGrid { full, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> T {
        self.full.scale()
    }

    pub fn nodes(&self) -> &[T] {
        &self.full.nodes()[self.n..]
    }

    /// The full-line grid carrying the extensions.
    pub fn full(&self) -> &Grid<T> {
        &self.full
    }

    /// Quadrature weights for `∫_0^∞`.
    pub fn weights(&self) -> Vec<T> {
        let h = self.full.spacing();
        self.full.jacobian()[self.n..].iter().map(|&j| j * h).collect()
    }
}

/// A function sampled on a [`HalfGrid`], with a declared vanishing order at 0.
#[derive(Clone, Debug)]
pub struct HalfFn<T: Real> {
    grid: HalfGrid<T>,
    values: Vec<T>,
    boundary_order: u32,
}

impl<T: Real> HalfFn<T> {
    pub fn new(grid: &HalfGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Precondition(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("non-finite sample".into()));
        }
        Ok(HalfFn {
            grid: grid.clone(),
            values,
            boundary_order: 0,
        })
    }

    pub fn from_fn(grid: &HalfGrid<T>, f: impl Fn(T) -> T) -> Self {
        HalfFn {
            grid: grid.clone(),
            values: grid.nodes().iter().map(|&y| f(y)).collect(),
            boundary_order: 0,
        }
    }

    pub fn zeros(grid: &HalfGrid<T>) -> Self {
        HalfFn {
            grid: grid.clone(),
            values: vec![T::zero(); grid.n()],
            boundary_order: u32::MAX,
        }
    }

    /// Declares `f = O(Y^order)` at 0, checked on the first nodes: the ratio
    /// `|f|/Y^order` must not blow up toward the origin.
    pub fn with_boundary_order(mut self, order: u32) -> Result<Self> {
        let y = self.grid.nodes();
        let r = |j: usize| self.values[j].abs() / y[j].powi(order as i32);
        let scale = max_abs(&self.values);
        if scale > T::zero() && r(0) > T::lit(2.0) * r(3) + T::lit(1e-9) * scale {
            return Err(Error::Precondition(format!(
                "declared vanishing order {order} at 0 not supported by samples"
            )));
        }
        self.boundary_order = order;
        Ok(self)
    }

    pub fn grid(&self) -> &HalfGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn boundary_order(&self) -> u32 {
        self.boundary_order
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.values)
    }

    pub fn integrate(&self) -> T {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(&v, w)| v * w)
            .sum()
    }

    fn extension(&self, sign: T) -> Vec<T> {
        let full = &self.grid.full;
        let n = self.grid.n;
        let mut v = vec![T::zero(); 2 * n];
        for (i, &x) in self.values.iter().enumerate() {
            v[n + i] = x;
            v[full.mirror(n + i)] = sign * x;
        }
        v
    }

    pub fn odd_extension(&self) -> Vec<T> {
        self.extension(-T::one())
    }

    pub fn even_extension(&self) -> Vec<T> {
        self.extension(T::one())
    }

    fn with_values(&self, values: Vec<T>) -> HalfFn<T> {
        HalfFn {
            grid: self.grid.clone(),
            values,
            boundary_order: 0,
        }
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("alpha = {alpha} not in (0, 1)")))
    }
}

/// `t/(1-t)` for `t = e^u`, without overflow.
fn ratio_from_log<T: Real>(u: T) -> T {
    if u > T::zero() {
        T::one() / (-u).exp_m1()
    } else {
        -u.exp() / u.exp_m1()
    }
}

/// Difference between the `α`-kernel and the `α = 1` kernel at `(X, Y)`
/// with `l = ln(Y/X)`, both for `h_alpha`'s normalization. Regular at `X = Y`.
fn kernel_remainder<T: Real>(alpha: T, x: T, y: T, l: T) -> T {
    let two = T::lit(2.0);
    if l.abs() < T::lit(1e-9) {
        return -(T::one() - alpha) / (T::PI() * alpha * x);
    }
    let a = ratio_from_log(two / alpha * l) / alpha;
    let b = ratio_from_log(two * l);
    two / T::PI() / y * (a - b)
}

/// `H_α Ω(X) = 2/(πα) PV ∫_0^∞ Y^{2/α-1}/(X^{2/α} - Y^{2/α}) Ω(Y) dY`.
///
/// The `α = 1` part is the spectral Hilbert transform of the odd extension.
/// The regular remainder is homogeneous of degree -1, so it is a convolution
/// in `ln Y`; it is integrated on a uniform log lattice with `Ω` taken from
/// the spectral interpolant.
pub fn h_alpha<T: Real>(om: &HalfFn<T>, alpha: T) -> Result<HalfFn<T>> {
    check_alpha(alpha)?;
    let grid = om.grid();
    let n = grid.n();
    let odd = GridFn::new(grid.full(), om.odd_extension(), Parity::Odd)?;
    let base = hilbert(&odd)?;
    if om.max_abs() == T::zero() {
        return Ok(om.with_values(vec![T::zero(); n]));
    }
    let nodes = grid.nodes();
    let interp = odd.interpolant();
    let step = (alpha / T::lit(LOG_STEPS_PER_ALPHA)).min(T::lit(MAX_LOG_STEP));
    let lo = nodes[0].ln() - T::lit(LOG_MARGIN_LOW);
    let hi = nodes[n - 1].ln() + T::lit(LOG_MARGIN_HIGH);
    let m = ((hi - lo) / step).ceil().to_usize().unwrap_or(0) + 1;
    // Y Ω(Y) on the lattice, times the step
    let samples: Vec<(T, T, T)> = (0..m)
        .map(|k| {
            let z = lo + step * T::from_usize_lossy(k);
            let y = z.exp();
            (z, y, y * interp.eval(y) * step)
        })
        .collect();
    // beyond the window the remainder is -(2/π)(1/α - 1)/Y to rounding,
    // and below it the terms are negligible
    let mut tail = vec![T::zero(); m + 1];
    for k in (0..m).rev() {
        tail[k] = tail[k + 1] + samples[k].2 / samples[k].1;
    }
    let far = -T::lit(2.0) / T::PI() * (T::one() / alpha - T::one());
    let width = T::lit(LOG_WINDOW);
    let values = parallel_map(n, |i| {
        let x = nodes[i];
        let lx = x.ln();
        let k0 = ((lx - width - lo) / step).floor().max(T::zero());
        let k1 = ((lx + width - lo) / step).ceil().max(T::zero());
        let k0 = k0.to_usize().unwrap_or(0).min(m);
        let k1 = k1.to_usize().unwrap_or(0).min(m);
        let near: T = samples[k0..k1]
            .iter()
            .map(|&(z, y, s)| kernel_remainder(alpha, x, y, z - lx) * s)
            .sum();
        base.values()[n + i] + near + far * tail[k1]
    });
    Ok(om.with_values(values))
}

const LOG_STEPS_PER_ALPHA: f64 = 20.0;
const LOG_WINDOW: f64 = 10.0;
const MAX_LOG_STEP: f64 = 0.02;
const LOG_MARGIN_LOW: f64 = 12.0;
const LOG_MARGIN_HIGH: f64 = 20.0;

/// `L_α f(X) = (1/α) X^{-1/α} ∫_0^X Y^{1/α-1} f(Y) dY`.
///
/// `f` is interpolated linearly on each cell and the weight is integrated
/// exactly, so constants and linear functions are reproduced exactly.
pub fn l_alpha<T: Real>(f: &HalfFn<T>, alpha: T) -> Result<HalfFn<T>> {
    check_alpha(alpha)?;
    let y = f.grid().nodes();
    let v = f.values();
    let inv = T::one() / alpha;
    let p1 = inv;
    let p2 = inv + T::one();
    // ∫_a^b Y^{1/α-1}(c0 + c1 Y) dY scaled by b^{-1/α}
    let cell = |a: T, b: T, c0: T, c1: T| {
        let lr = if a > T::zero() {
            (a / b).ln()
        } else {
            T::neg_infinity()
        };
        let r1 = -(p1 * lr).exp_m1();
        let r2 = -(p2 * lr).exp_m1();
        c0 * r1 / p1 + c1 * b * r2 / p2
    };
    let slope = |j: usize| (v[j + 1] - v[j]) / (y[j + 1] - y[j]);
    let mut out = Vec::with_capacity(v.len());
    let s0 = slope(0);
    let mut acc = cell(T::zero(), y[0], v[0] - s0 * y[0], s0);
    out.push(acc * inv);
    for j in 0..v.len() - 1 {
        let s = slope(j);
        let decay = (p1 * (y[j] / y[j + 1]).ln()).exp();
        acc = acc * decay + cell(y[j], y[j + 1], v[j] - s * y[j], s);
        out.push(acc * inv);
    }
    Ok(f.with_values(out))
}

/// Nonuniform second-order `X ∂_X u` at interior nodes.
fn log_derivative<T: Real>(u: &[T], x: &[T], j: usize) -> T {
    let (h1, h2) = (x[j] - x[j - 1], x[j + 1] - x[j]);
    let d = -h2 / (h1 * (h1 + h2)) * u[j - 1]
        + (h2 - h1) / (h1 * h2) * u[j]
        + h1 / (h2 * (h1 + h2)) * u[j + 1];
    x[j] * d
}

/// Max of `|U + α X ∂_X U + H_α Ω|` on interior nodes with `X ≤ 20`,
/// with the derivative taken by finite differences.
pub fn relation_residual<T: Real>(u: &HalfFn<T>, h_om: &HalfFn<T>, alpha: T) -> T {
    let x = u.grid().nodes();
    let uv = u.values();
    (1..x.len() - 1)
        .take_while(|&j| x[j] <= T::lit(RELATION_WINDOW))
        .map(|j| (uv[j] + alpha * log_derivative(uv, x, j) + h_om.values()[j]).abs())
        .fold(T::zero(), T::max)
}

/// `U = -L_α H_α Ω`, checked against `U + αX∂_X U = -H_α Ω`.
pub fn velocity_from_omega<T: Real>(om: &HalfFn<T>, alpha: T) -> Result<HalfFn<T>> {
    let h = h_alpha(om, alpha)?;
    let l = l_alpha(&h, alpha)?;
    let u = l.with_values(l.values.iter().map(|&v| -v).collect());
    let residual = relation_residual(&u, &h, alpha);
    log::debug!("velocity relation residual {residual}");
    if residual > T::lit(RELATION_FAIL) {
        return Err(Error::Precondition(format!(
            "velocity relation residual {residual} exceeds {RELATION_FAIL}: quadrature inconsistency"
        )));
    }
    Ok(u)
}

fn check_pair<T: Real>(x: T, y: T) -> Result<()> {
    if !(x > T::zero() && y > T::zero()) {
        return Err(Error::Precondition(format!(
            "kernel arguments must be positive, got ({x}, {y})"
        )));
    }
    if x == y {
        return Err(Error::Precondition(format!(
            "kernel is not defined on the diagonal X = Y = {x}"
        )));
    }
    Ok(())
}

/// Symmetrized kernel
/// `K_α(X,Y) = [Y^{2/α+2}(X+1)² - X^{2/α+2}(Y+1)²] / (X^{2/α} - Y^{2/α})`,
/// evaluated with the smaller argument's power factored out.
pub fn kernel_k<T: Real>(alpha: T, x: T, y: T) -> Result<T> {
    check_pair(x, y)?;
    let (x, y) = if x < y { (x, y) } else { (y, x) };
    Ok(kernel_ordered(alpha, x, y))
}

fn kernel_ordered<T: Real>(alpha: T, x: T, y: T) -> T {
    let u = T::lit(2.0) / alpha * (x / y).ln();
    let e = u.exp();
    let num = y * y * (x + T::one()).powi(2) - e * x * x * (y + T::one()).powi(2);
    num / u.exp_m1()
}

/// The kernel formula divided through by `Y^{2/α}` regardless of ordering.
/// Agrees with [`kernel_k`] exactly in exact arithmetic; used to measure the
/// symmetry defect.
pub fn kernel_k_raw<T: Real>(alpha: T, x: T, y: T) -> Result<T> {
    check_pair(x, y)?;
    Ok(kernel_ordered(alpha, x, y))
}

/// `K_α(X, X) = -X²(X+1)(X+1+α)`.
pub fn kernel_k_diagonal<T: Real>(alpha: T, x: T) -> T {
    -x * x * (x + T::one()) * (x + T::one() + alpha)
}

/// `lim_{α→0} K_α(X,Y)`.
pub fn kernel_limit<T: Real>(x: T, y: T) -> T {
    if x < y {
        -y * y * (x + T::one()).powi(2)
    } else {
        -x * x * (y + T::one()).powi(2)
    }
}

/// `|K_α(X,Y) + Y²(X+1)²|` for `X < Y`, in cancellation-free form.
pub fn kernel_bound_lhs<T: Real>(alpha: T, x: T, y: T) -> T {
    let u = T::lit(2.0) / alpha * (x / y).ln();
    let e = u.exp();
    let q = e / -u.exp_m1();
    (q * (y - x) * (T::lit(2.0) * x * y + x + y)).abs()
}

/// `2YX²α + 2X²α + 2XYα`.
pub fn kernel_bound_rhs<T: Real>(alpha: T, x: T, y: T) -> T {
    let two = T::lit(2.0);
    alpha * (two * y * x * x + two * x * x + two * x * y)
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub alpha: f64,
    /// Max relative gap between the two orderings of the raw formula.
    pub symmetry_defect: f64,
    /// Max relative distance to the small-α limit at `alpha`.
    pub limit_defect: f64,
    /// Relative limit defects at the audit values of `α`.
    pub limit_defects: Vec<(f64, f64)>,
    /// Min over samples of bound minus `|K_α + Y²(X+1)²|`.
    pub bound_margin: f64,
    pub samples: usize,
}

impl KernelReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Each halving of `α` cuts the limit defect by at least `min_ratio`.
    pub fn limit_shrinks(&self, min_ratio: f64) -> bool {
        self.limit_defects
            .windows(2)
            .all(|w| w[1].1 * min_ratio <= w[0].1)
    }
}

fn sample_pairs(samples: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let a: f64 = 10.0 * (1.0 - rng.gen::<f64>());
        let b: f64 = 10.0 * (1.0 - rng.gen::<f64>());
        if a != b {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

fn limit_defect<T: Real>(alpha: T, pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .map(|&(x, y)| {
            let (x, y) = (T::lit(x), T::lit(y));
            let lim = kernel_limit(x, y);
            ((kernel_ordered(alpha, x, y) - lim).abs() / lim.abs()).to_f64_lossy()
        })
        .fold(0.0, f64::max)
}

/// Samples `X < Y` in `(0, 10]²` and audits symmetry, the small-α limit, and
/// the explicit linear-in-α bound.
pub fn kernel_audit<T: Real>(alpha: T, samples: usize, seed: u64) -> Result<KernelReport> {
    if samples < MIN_AUDIT_SAMPLES {
        return Err(Error::Precondition(format!(
            "kernel audit needs at least {MIN_AUDIT_SAMPLES} samples, got {samples}"
        )));
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::Precondition(format!("alpha = {alpha} not in (0, 1]")));
    }
    let pairs = sample_pairs(samples, seed);
    let mut symmetry = 0.0f64;
    let mut margin = f64::INFINITY;
    for &(xf, yf) in &pairs {
        let (x, y) = (T::lit(xf), T::lit(yf));
        let k = kernel_ordered(alpha, x, y);
        let swapped = kernel_ordered(alpha, y, x);
        let scale = k.abs().max(T::one());
        symmetry = symmetry.max(((k - swapped).abs() / scale).to_f64_lossy());
        let m = (kernel_bound_rhs(alpha, x, y) - kernel_bound_lhs(alpha, x, y)).to_f64_lossy();
        if m < 0.0 {
            return Err(Error::BoundViolation {
                x: xf,
                y: yf,
                margin: m,
            });
        }
        margin = margin.min(m);
    }
    let limit_defects = LIMIT_ALPHAS
        .iter()
        .map(|&a| (a, limit_defect(T::lit(a), &pairs)))
        .collect();
    Ok(KernelReport {
        alpha: alpha.to_f64_lossy(),
        symmetry_defect: symmetry,
        limit_defect: limit_defect(alpha, &pairs),
        limit_defects,
        bound_margin: margin,
        samples,
    })
}

/// Min over `σ` of `α/(2-α) - (σ-1)/(σ^{2/α}-1)`; `σ = 1` uses the limit `α/2`.
pub fn convexity_margin<T: Real>(alpha: T, sigmas: &[T]) -> T {
    let bound = alpha / (T::lit(2.0) - alpha);
    sigmas
        .iter()
        .map(|&s| {
            let v = if s == T::one() {
                alpha / T::lit(2.0)
            } else {
                let u = T::lit(2.0) / alpha * s.ln();
                (s - T::one()) / u.exp_m1()
            };
            bound - v
        })
        .fold(T::infinity(), T::min)
}

/// `∫_0^∞ q(Y)/Y dY`.
pub fn moment<T: Real>(q: &HalfFn<T>) -> T {
    let y = q.grid().nodes();
    q.values()
        .iter()
        .zip(y)
        .zip(q.grid().weights())
        .map(|((&v, &y), w)| v / y * w)
        .sum()
}

/// Subtracts the multiple of `Y³e^{-Y}` that zeroes `∫ q/Y`; the result
/// vanishes to second order at 0.
pub fn project_admissible<T: Real>(q: &HalfFn<T>) -> HalfFn<T> {
    let template = HalfFn::from_fn(q.grid(), |y| y * y * y * (-y).exp());
    let c = moment(q) / moment(&template);
    let values = q
        .values()
        .iter()
        .zip(template.values())
        .map(|(&v, &t)| v - c * t)
        .collect();
    HalfFn {
        grid: q.grid().clone(),
        values,
        boundary_order: q.boundary_order().min(3),
    }
}

fn check_admissible<T: Real>(q: &HalfFn<T>) -> Result<()> {
    if q.boundary_order() < 2 {
        return Err(Error::Admissibility(format!(
            "q must vanish to second order at 0 (declared order {})",
            q.boundary_order()
        )));
    }
    let m = moment(q);
    if m.abs() > T::lit(ADMISSIBILITY_TOL) {
        return Err(Error::Admissibility(format!("∫ q/Y = {m} is not zero")));
    }
    Ok(())
}

/// Both sides of the integration-by-parts identity for the small-α main term:
/// `∫_0^∞∫_X^∞ Y²(X+1)² q(X)q(Y)/(Y³X³) dY dX` by a direct double sum, and
/// `-½ ∫_0^∞ Q(X)² (2/X² + 2/X³) dX` with `Q(X) = ∫_X^∞ q/Y`.
pub fn main_term_identity<T: Real>(q: &HalfFn<T>) -> Result<(T, T)> {
    check_admissible(q)?;
    let grid = q.grid();
    let y = grid.nodes();
    let w = grid.weights();
    let v = q.values();
    let n = y.len();
    let one = T::one();
    let half = T::lit(0.5);

    let g: Vec<T> = (0..n).map(|j| v[j] / y[j] * w[j]).collect();
    let mut tail = T::zero();
    let mut lhs = T::zero();
    for i in (0..n).rev() {
        let f = (y[i] + one).powi(2) * v[i] / y[i].powi(3) * w[i];
        lhs = lhs + f * (tail + half * g[i]);
        tail = tail + g[i];
    }

    let n_full = grid.full().n();
    let mut integrand = vec![T::zero(); n_full];
    for (i, (&val, &yy)) in v.iter().zip(y).enumerate() {
        let r = val / yy;
        integrand[n + i] = r;
        integrand[grid.full().mirror(n + i)] = r;
    }
    let cum = grid.full().cumulative_values(&integrand);
    let rhs = -half
        * (0..n)
            .map(|i| {
                let qq = -cum[n + i];
                let x = y[i];
                qq * qq * (T::lit(2.0) / (x * x) + T::lit(2.0) / (x * x * x)) * w[i]
            })
            .sum::<T>();
    Ok((lhs, rhs))
}

/// Outcome of the small-α coercivity probe.
#[derive(Clone, Debug, Serialize)]
pub struct ClaimProbe {
    pub alpha: f64,
    /// `½ ∫∫ K_α(X,Y) q(X) q(Y) / (X³Y³)` over the full quadrant.
    pub pairing: f64,
    /// The same pairing from `H_α` applied to `q` and the raw kernel.
    pub pairing_raw: f64,
    /// `‖q √φ*‖²`.
    pub norm_sq: f64,
    /// `pairing / (α ‖q √φ*‖²)`.
    pub ratio: f64,
}

impl ClaimProbe {
    /// `pairing / ‖q √φ*‖²`, the quantity whose small-α limit is finite.
    pub fn normalized(&self) -> f64 {
        self.pairing / self.norm_sq
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("probe serializes")
    }
}

/// The weighted `φ*` norm on the half-line.
pub fn half_norm_sq<T: Real>(q: &HalfFn<T>) -> T {
    let y = q.grid().nodes();
    q.values()
        .iter()
        .zip(y)
        .zip(q.grid().weights())
        .map(|((&v, &y), w)| v * v * Weight::PhiStar.eval(y) * w)
        .sum()
}

pub fn claim_probe<T: Real>(q: &HalfFn<T>, alpha: T) -> Result<ClaimProbe> {
    check_alpha(alpha)?;
    check_admissible(q)?;
    let grid = q.grid();
    let y = grid.nodes();
    let w = grid.weights();
    let n = y.len();
    let s: Vec<T> = (0..n)
        .map(|i| q.values()[i] / y[i].powi(3) * w[i])
        .collect();
    let mut pairing = T::zero();
    for i in 0..n {
        let mut row = kernel_k_diagonal(alpha, y[i]) * s[i] * T::lit(0.5);
        for j in i + 1..n {
            row = row + kernel_ordered(alpha, y[i], y[j]) * s[j];
        }
        pairing = pairing + row * s[i];
    }

    let h = h_alpha(q, alpha)?;
    let raw = T::PI() * alpha / T::lit(2.0)
        * (0..n)
            .map(|i| {
                h.values()[i] * q.values()[i] * (y[i] + T::one()).powi(2) / y[i].powi(3) * w[i]
            })
            .sum::<T>();
    let norm_sq = half_norm_sq(q);
    let probe = ClaimProbe {
        alpha: alpha.to_f64_lossy(),
        pairing: pairing.to_f64_lossy(),
        pairing_raw: raw.to_f64_lossy(),
        norm_sq: norm_sq.to_f64_lossy(),
        ratio: (pairing / (alpha * norm_sq)).to_f64_lossy(),
    };
    log::info!("claim probe {}", probe.to_json());
    Ok(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{f0_alpha, hf0_alpha};

    fn grid(n: usize) -> HalfGrid<f64> {
        HalfGrid::new(n, 1.0).unwrap()
    }

    #[test]
    fn half_grid_matches_uniform_angles() {
        let g = grid(64);
        for (j, &y) in g.nodes().iter().enumerate() {
            let th = (j as f64 + 0.5) * std::f64::consts::PI / 64.0;
            assert!((y - (th / 2.0).tan()).abs() < 1e-12 * (1.0 + y));
        }
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        let total: f64 = HalfFn::from_fn(&g, |y| 1.0 / (1.0 + y * y)).integrate();
        assert!((total - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn boundary_order_is_checked() {
        let g = grid(128);
        let q = HalfFn::from_fn(&g, |y| y * y * (-y).exp());
        assert!(q.clone().with_boundary_order(2).is_ok());
        assert!(q.with_boundary_order(3).is_err());
        assert!(HalfFn::from_fn(&g, |y| y).with_boundary_order(2).is_err());
    }

    #[test]
    fn h_alpha_closed_form_pair() {
        let g = grid(2048);
        for &alpha in &[0.5f64, 0.1] {
            let om = HalfFn::from_fn(&g, |y| f0_alpha(alpha, y));
            let h = h_alpha(&om, alpha).unwrap();
            let err = g
                .nodes()
                .iter()
                .zip(h.values())
                .map(|(&y, &v)| (v - hf0_alpha(alpha, y)).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-5, "alpha {alpha}: err {err}");
        }
    }

    #[test]
    fn h_alpha_of_zero_and_far_field() {
        let g = grid(256);
        let h = h_alpha(&HalfFn::zeros(&g), 0.3).unwrap();
        assert_eq!(h.max_abs(), 0.0);
        let om = HalfFn::from_fn(&g, |y| f0_alpha(0.3, y));
        let h = h_alpha(&om, 0.3).unwrap();
        let (y, v) = (*g.nodes().last().unwrap(), *h.values().last().unwrap());
        // decays like cos(απ/2)/Y
        let c = (0.3 * std::f64::consts::FRAC_PI_2).cos();
        assert!((v * y - c).abs() < 0.05 * c, "{v} at {y}");
        assert!(h_alpha(&om, 1.0).is_err());
    }

    #[test]
    fn l_alpha_exact_cases() {
        let g = grid(256);
        let alpha = 0.3;
        let one = l_alpha(&HalfFn::from_fn(&g, |_| 1.0), alpha).unwrap();
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let lin = l_alpha(&HalfFn::from_fn(&g, |y| y), alpha).unwrap();
        for (&y, &v) in g.nodes().iter().zip(lin.values()) {
            assert!((v - y / (1.0 + alpha)).abs() < 1e-12 * (1.0 + y));
        }
        assert_eq!(l_alpha(&HalfFn::zeros(&g), alpha).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn velocity_of_profile() {
        let g = grid(2048);
        let alpha = 0.3;
        let om = HalfFn::from_fn(&g, |y| f0_alpha(alpha, y));
        let u = velocity_from_omega(&om, alpha).unwrap();
        let h = h_alpha(&om, alpha).unwrap();
        assert!(relation_residual(&u, &h, alpha) < 1e-4);
        assert!((u.values()[0] + 1.0).abs() < 1e-2);
        let zero = velocity_from_omega(&HalfFn::zeros(&g), alpha).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_k(1.0f64, 1.0, 2.0).unwrap() + 55.0 / 3.0).abs() < 1e-12);
        assert!((kernel_k(0.5f64, 1.0, 2.0).unwrap() + 247.0 / 15.0).abs() < 1e-12);
        assert_eq!(kernel_k(0.5f64, 2.0, 1.0).unwrap(), kernel_k(0.5f64, 1.0, 2.0).unwrap());
        assert!(kernel_k(0.5f64, 1.0, 1.0).is_err());
        let lhs = kernel_bound_lhs(0.5f64, 1.0, 2.0);
        assert!((lhs - 7.0 / 15.0).abs() < 1e-12);
        assert!((kernel_bound_rhs(0.5f64, 1.0, 2.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_diagonal_limit() {
        for &alpha in &[0.5f64, 0.1] {
            let x = 1.7;
            let near = kernel_k(alpha, x, x * (1.0 + 1e-7)).unwrap();
            let d = kernel_k_diagonal(alpha, x);
            assert!((near - d).abs() < 1e-5 * d.abs(), "{near} vs {d}");
        }
    }

    #[test]
    fn kernel_audit_behaviour() {
        let r = kernel_audit(0.1, 500, 7).unwrap();
        assert!(r.bound_margin >= 0.0);
        assert!(r.symmetry_defect < 1e-12);
        assert!(r.limit_shrinks(1.5), "{:?}", r.limit_defects);
        assert!(kernel_audit(0.1, 10, 7).is_err());
    }

    #[test]
    fn convexity_spot_check() {
        let sig: Vec<f64> = (0..200).map(|i| 1.0 + 0.05 * i as f64).collect();
        for &alpha in &[1.0, 0.5, 0.1] {
            assert!(convexity_margin(alpha, &sig) >= 0.0);
        }
    }

    fn bump(g: &HalfGrid<f64>) -> HalfFn<f64> {
        let q = HalfFn::from_fn(g, |y| y * y * y * (-(y - 1.0) * (y - 1.0)).exp())
            .with_boundary_order(2)
            .unwrap();
        project_admissible(&q)
    }

    #[test]
    fn main_term_matches_closed_form() {
        let g = grid(2048);
        let (lhs, rhs) = main_term_identity(&bump(&g)).unwrap();
        assert!(rhs <= 0.0);
        assert!((lhs - rhs).abs() <= 1e-5 * (lhs.abs() + 1e-12), "{lhs} vs {rhs}");
        let (l0, r0) = main_term_identity(&HalfFn::zeros(&g)).unwrap();
        assert_eq!((l0, r0), (0.0, 0.0));
        let raw = HalfFn::from_fn(&g, |y| y * y * y * (-y).exp())
            .with_boundary_order(2)
            .unwrap();
        assert!(matches!(main_term_identity(&raw), Err(Error::Admissibility(_))));
    }

    #[test]
    fn claim_probe_routes_agree() {
        let g = grid(1024);
        let q = bump(&g);
        let p = claim_probe(&q, 0.1).unwrap();
        let rel = (p.pairing - p.pairing_raw).abs() / p.pairing.abs();
        assert!(rel < 1e-5, "{p:?}");
        assert!(p.pairing >= -20.0 * 0.1 * p.norm_sq);
        assert_eq!(claim_probe(&HalfFn::zeros(&g), 0.1).unwrap().pairing, 0.0);
    }
}
