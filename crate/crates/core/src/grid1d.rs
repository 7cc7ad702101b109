//! Mapped real-line grid and the singular-integral calculus on it.
//!
//! Nodes are `y_j = L tan(θ_j / 2)` with `θ_j = -π + (j + 1/2) 2π/n`, so a
//! function decaying at infinity becomes a periodic function of `θ` that
//! vanishes at `θ = ±π`. Under this map the Hilbert transform on the line is
//! the circular conjugate function minus its value at `θ = π`, which is
//! applied exactly on the trigonometric interpolant through an FFT.
//! Derivatives and antiderivatives are likewise taken spectrally in `θ` and
//! pulled back with the chain rule.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{max_abs, Real};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 64;

/// Relative tolerance used when validating declared parity.
const PARITY_TOL: f64 = 1e-12;

/// Relative tolerance on interpolated values/derivatives at 0 used to detect the
/// vanishing order.
const ORDER_TOL: f64 = 1e-6;

/// Vanishing order assigned to the zero function.
pub const ORDER_CAP: u32 = 4;

/// Tail test: a function counts as decaying when its magnitude at the outermost
/// node is below this fraction of its magnitude at half that radius (power law
/// tails `|y|^{-p}` with `p > 0.33` pass), or negligible outright.
const TAIL_RATIO: f64 = 0.8;
const TAIL_ABS: f64 = 1e-9;

/// Symmetry class of a sampled function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
    None,
}

impl Parity {
    pub fn flipped(self) -> Parity {
        match self {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
            Parity::None => Parity::None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
            Parity::None => "none",
        }
    }

    fn parse(s: &str) -> Result<Parity> {
        match s {
            "odd" => Ok(Parity::Odd),
            "even" => Ok(Parity::Even),
            "none" => Ok(Parity::None),
            other => Err(Error::Parse(format!("unknown parity `{other}`"))),
        }
    }
}

/// Weight functions for the weighted L² norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    /// `φ(y) = (1 + y²)² / y⁴`.
    Phi,
    /// `φ*(Y) = (1 + |Y|)⁴ / Y⁴`.
    PhiStar,
    Unweighted,
}

impl Weight {
    pub fn eval<T: Real>(self, y: T) -> T {
        let one = T::one();
        match self {
            Weight::Phi => {
                let y2 = y * y;
                (one + y2) * (one + y2) / (y2 * y2)
            }
            Weight::PhiStar => {
                let r = (one + y.abs()) / y.abs();
                let r2 = r * r;
                r2 * r2
            }
            Weight::Unweighted => one,
        }
    }

    /// Whether the weight is singular like `y⁻⁴` at the origin.
    fn singular_at_zero(self) -> bool {
        !matches!(self, Weight::Unweighted)
    }
}

struct GridInner<T: Real> {
    n: usize,
    scale: T,
    h: T,
    theta0: T,
    theta: Vec<T>,
    nodes: Vec<T>,
    jac: Vec<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

/// Symmetric mapped grid on the real line. Cheap to clone.
#[derive(Clone)]
pub struct Grid<T: Real> {
    inner: Arc<GridInner<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("scale", &self.inner.scale)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.scale == other.inner.scale)
    }
}

/// Builds the mapped grid with `n` nodes and map parameter `scale`.
pub fn make_grid<T: Real>(n: usize, scale: T) -> Result<Grid<T>> {
    Grid::new(n, scale)
}

impl<T: Real> Grid<T> {
    pub fn new(n: usize, scale: T) -> Result<Self> {
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("odd n = {n}")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "n = {n} below resolution floor {MIN_NODES}"
            )));
        }
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::InvalidGrid(format!("scale = {scale} must be positive")));
        }
        let two = T::lit(2.0);
        let pi = T::PI();
        let h = two * pi / T::from_usize_lossy(n);
        let theta0 = -pi + h / two;
        let theta: Vec<T> = (0..n)
            .map(|j| theta0 + T::from_usize_lossy(j) * h)
            .collect();
        let mut nodes: Vec<T> = theta.iter().map(|&t| scale * (t / two).tan()).collect();
        // exact mirror symmetry, independent of rounding in tan
        for j in n / 2..n {
            nodes[n - 1 - j] = -nodes[j];
        }
        let jac = nodes
            .iter()
            .map(|&y| (scale * scale + y * y) / (two * scale))
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Grid {
            inner: Arc::new(GridInner {
                n,
                scale,
                h,
                theta0,
                theta,
                nodes,
                jac,
                fwd,
                inv,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn scale(&self) -> T {
        self.inner.scale
    }

    pub fn nodes(&self) -> &[T] {
        &self.inner.nodes
    }

    pub fn theta(&self) -> &[T] {
        &self.inner.theta
    }

    /// `dy/dθ` at each node.
    pub fn jacobian(&self) -> &[T] {
        &self.inner.jac
    }

    /// Angular spacing.
    pub fn spacing(&self) -> T {
        self.inner.h
    }

    /// Indices of the nodes with `y > 0`, in increasing order of `y`.
    pub fn positive(&self) -> std::ops::Range<usize> {
        self.inner.n / 2..self.inner.n
    }

    /// Index of the node at `-y_j`.
    pub fn mirror(&self, j: usize) -> usize {
        self.inner.n - 1 - j
    }

    /// Local node spacing in `y`, `dy/dθ · h`.
    pub fn local_spacing(&self, j: usize) -> T {
        self.inner.jac[j] * self.inner.h
    }

    /// Angle of the point `y`.
    pub fn angle_of(&self, y: T) -> T {
        T::lit(2.0) * (y / self.inner.scale).atan()
    }

    fn spectrum(&self, values: &[T]) -> Vec<Complex<T>> {
        assert_eq!(values.len(), self.inner.n, "sample count does not match grid");
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.inner.fwd.process(&mut buf);
        buf
    }

    fn synthesize(&self, mut spec: Vec<Complex<T>>) -> Vec<T> {
        self.inner.inv.process(&mut spec);
        let inv_n = T::one() / T::from_usize_lossy(self.inner.n);
        spec.into_iter().map(|c| c.re * inv_n).collect()
    }

    /// Signed wavenumber of FFT slot `idx`; `None` for the Nyquist slot.
    fn wavenumber(&self, idx: usize) -> Option<i64> {
        let n = self.inner.n;
        if idx < n / 2 {
            Some(idx as i64)
        } else if idx == n / 2 {
            None
        } else {
            Some(idx as i64 - n as i64)
        }
    }

    /// Evaluates the trigonometric interpolant described by a Hermitian
    /// spectrum at angle `theta`.
    fn eval_spectrum(&self, spec: &[Complex<T>], theta: T) -> T {
        let n = self.inner.n;
        let shift = theta - self.inner.theta0;
        let step = Complex::new(shift.cos(), shift.sin());
        let mut z = step;
        let two = T::lit(2.0);
        let mut acc = spec[0].re;
        for c in spec.iter().take(n / 2).skip(1) {
            acc = acc + two * (c * z).re;
            z = z * step;
        }
        let nyq = spec[n / 2].re * (T::from_usize_lossy(n / 2) * shift).cos();
        (acc + nyq) / T::from_usize_lossy(n)
    }

    fn apply_multiplier(&self, spec: &mut [Complex<T>], m: impl Fn(i64) -> Complex<T>) {
        for (idx, c) in spec.iter_mut().enumerate() {
            *c = match self.wavenumber(idx) {
                Some(k) => *c * m(k),
                None => Complex::new(T::zero(), T::zero()),
            };
        }
    }

    /// Hilbert transform of sampled values, normalized to vanish at infinity.
    pub fn hilbert_values(&self, values: &[T]) -> Vec<T> {
        let mut spec = self.spectrum(values);
        let i = Complex::new(T::zero(), T::one());
        self.apply_multiplier(&mut spec, |k| match k.signum() {
            1 => -i,
            -1 => i,
            _ => Complex::new(T::zero(), T::zero()),
        });
        let at_infinity = self.eval_spectrum(&spec, T::PI());
        self.synthesize(spec)
            .into_iter()
            .map(|v| v - at_infinity)
            .collect()
    }

    fn d_theta_spec(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut spec = self.spectrum(values);
        self.apply_multiplier(&mut spec, |k| Complex::new(T::zero(), T::lit(k as f64)));
        spec
    }

    /// `df/dy` at the nodes.
    pub fn derivative_values(&self, values: &[T]) -> Vec<T> {
        let spec = self.d_theta_spec(values);
        let two_l = T::lit(2.0) * self.inner.scale;
        let l2 = self.inner.scale * self.inner.scale;
        self.synthesize(spec)
            .into_iter()
            .zip(&self.inner.nodes)
            .map(|(d, &y)| d * two_l / (l2 + y * y))
            .collect()
    }

    /// `∫_0^{y_j} g(y) dy` at every node.
    pub fn cumulative_values(&self, integrand: &[T]) -> Vec<T> {
        let weighted: Vec<T> = integrand
            .iter()
            .zip(&self.inner.jac)
            .map(|(&g, &j)| g * j)
            .collect();
        let mut spec = self.spectrum(&weighted);
        let mean = spec[0].re / T::from_usize_lossy(self.inner.n);
        self.apply_multiplier(&mut spec, |k| {
            if k == 0 {
                Complex::new(T::zero(), T::zero())
            } else {
                Complex::new(T::zero(), -T::one() / T::lit(k as f64))
            }
        });
        let origin = self.eval_spectrum(&spec, T::zero());
        self.synthesize(spec)
            .into_iter()
            .zip(&self.inner.theta)
            .map(|(v, &t)| v - origin + mean * t)
            .collect()
    }

    /// `∫ g dy` over the line.
    pub fn integrate_values(&self, integrand: &[T]) -> T {
        integrand
            .iter()
            .zip(&self.inner.jac)
            .map(|(&g, &j)| g * j)
            .sum::<T>()
            * self.inner.h
    }

    /// Interpolated value at `y = 0`.
    pub fn value_at_zero(&self, values: &[T]) -> T {
        let spec = self.spectrum(values);
        self.eval_spectrum(&spec, T::zero())
    }

    /// Interpolated first derivative at `y = 0`.
    pub fn derivative_at_zero(&self, values: &[T]) -> T {
        let spec = self.d_theta_spec(values);
        self.eval_spectrum(&spec, T::zero()) * T::lit(2.0) / self.inner.scale
    }

    /// Interpolated second derivative at `y = 0`.
    pub fn second_derivative_at_zero(&self, values: &[T]) -> T {
        let mut spec = self.spectrum(values);
        self.apply_multiplier(&mut spec, |k| Complex::new(-T::lit((k * k) as f64), T::zero()));
        let l = self.inner.scale;
        self.eval_spectrum(&spec, T::zero()) * T::lit(4.0) / (l * l)
    }

    /// `H g (0) = -(1/π) PV ∫ g(y)/y dy`, by symmetric pairing of `±y_j`.
    pub fn hilbert_at_zero_values(&self, values: &[T]) -> T {
        let mut acc = T::zero();
        for j in self.positive() {
            let m = self.mirror(j);
            acc = acc + (values[j] - values[m]) / self.inner.nodes[j] * self.inner.jac[j];
        }
        -acc * self.inner.h / T::PI()
    }

    /// Trigonometric interpolant of the samples, for off-grid evaluation.
    pub fn interpolant(&self, values: &[T]) -> Interpolant<T> {
        Interpolant {
            grid: self.clone(),
            spec: self.spectrum(values),
        }
    }
}

/// Off-grid evaluator of a sampled function. Only meaningful for functions
/// that vanish at infinity (periodic and continuous in the angle).
pub struct Interpolant<T: Real> {
    grid: Grid<T>,
    spec: Vec<Complex<T>>,
}

impl<T: Real> Interpolant<T> {
    pub fn eval(&self, y: T) -> T {
        self.grid.eval_spectrum(&self.spec, self.grid.angle_of(y))
    }
}

/// A real function sampled on a [`Grid`].
#[derive(Clone, Debug)]
pub struct GridFn<T: Real> {
    grid: Grid<T>,
    values: Vec<T>,
    parity: Parity,
    vanishing_order: u32,
}

impl<T: Real> GridFn<T> {
    /// Wraps samples, validating finiteness and the declared parity, and
    /// detecting the vanishing order at 0 by interpolation.
    pub fn new(grid: &Grid<T>, values: Vec<T>, parity: Parity) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Precondition(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("non-finite sample at node {j}")));
        }
        let scale = max_abs(&values);
        let tol = T::tol(PARITY_TOL) * scale;
        for j in grid.positive() {
            let m = grid.mirror(j);
            let defect = match parity {
                Parity::Odd => (values[j] + values[m]).abs(),
                Parity::Even => (values[j] - values[m]).abs(),
                Parity::None => T::zero(),
            };
            if defect > tol {
                return Err(Error::Parity(format!(
                    "declared {} but node {j} has mirror defect {defect}",
                    parity.as_str()
                )));
            }
        }
        let vanishing_order = detect_vanishing_order(grid, &values);
        Ok(GridFn {
            grid: grid.clone(),
            values,
            parity,
            vanishing_order,
        })
    }

    /// Samples `f` at the nodes; parity is enforced exactly by symmetrizing.
    pub fn from_fn(grid: &Grid<T>, parity: Parity, f: impl Fn(T) -> T) -> Result<Self> {
        let mut values: Vec<T> = grid.nodes().iter().map(|&y| f(y)).collect();
        symmetrize(grid, &mut values, parity);
        GridFn::new(grid, values, parity)
    }

    pub fn zeros(grid: &Grid<T>, parity: Parity) -> Self {
        GridFn {
            grid: grid.clone(),
            values: vec![T::zero(); grid.n()],
            parity,
            vanishing_order: ORDER_CAP,
        }
    }

    /// Builds from values already known to satisfy `parity` up to rounding;
    /// the parity is re-imposed exactly.
    pub(crate) fn from_parts(grid: &Grid<T>, mut values: Vec<T>, parity: Parity) -> Self {
        symmetrize(grid, &mut values, parity);
        let vanishing_order = detect_vanishing_order(grid, &values);
        GridFn {
            grid: grid.clone(),
            values,
            parity,
            vanishing_order,
        }
    }

    /// Declares a vanishing order; rejected if interpolation contradicts it.
    pub fn with_vanishing_order(mut self, order: u32) -> Result<Self> {
        if order > self.vanishing_order {
            return Err(Error::Precondition(format!(
                "declared vanishing order {order} but interpolation shows {}",
                self.vanishing_order
            )));
        }
        self.vanishing_order = order;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn vanishing_order(&self) -> u32 {
        self.vanishing_order
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.values)
    }

    /// Max norm restricted to `|y| ≤ window`.
    pub fn max_abs_within(&self, window: T) -> T {
        self.values
            .iter()
            .zip(self.grid.nodes())
            .filter(|(_, y)| y.abs() <= window)
            .fold(T::zero(), |m, (v, _)| m.max(v.abs()))
    }

    pub fn value_at_zero(&self) -> T {
        self.grid.value_at_zero(&self.values)
    }

    pub fn derivative_at_zero(&self) -> T {
        self.grid.derivative_at_zero(&self.values)
    }

    pub fn hilbert_at_zero(&self) -> T {
        self.grid.hilbert_at_zero_values(&self.values)
    }

    pub fn derivative(&self) -> GridFn<T> {
        GridFn::from_parts(
            &self.grid,
            self.grid.derivative_values(&self.values),
            self.parity.flipped(),
        )
    }

    /// `y ∂_y f`.
    pub fn y_derivative(&self) -> GridFn<T> {
        let d = self.grid.derivative_values(&self.values);
        let v = d.iter().zip(self.grid.nodes()).map(|(&d, &y)| y * d).collect();
        let mut out = GridFn::from_parts(&self.grid, v, self.parity);
        // y f' vanishes to the same order as f; detection on the product is
        // polluted by the unbounded factor at the outer nodes.
        if self.vanishing_order >= 1 {
            out.vanishing_order = self.vanishing_order;
        }
        out
    }

    pub fn interpolant(&self) -> Interpolant<T> {
        self.grid.interpolant(&self.values)
    }

    pub fn scaled(&self, c: T) -> GridFn<T> {
        self.map_values(|v| v * c)
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> GridFn<T> {
        GridFn::from_parts(
            &self.grid,
            self.values.iter().map(|&v| f(v)).collect(),
            self.parity,
        )
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: T, other: &GridFn<T>) -> GridFn<T> {
        let parity = if self.parity == other.parity {
            self.parity
        } else {
            Parity::None
        };
        let v = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + c * b)
            .collect();
        GridFn::from_parts(&self.grid, v, parity)
    }

    pub fn sub(&self, other: &GridFn<T>) -> GridFn<T> {
        self.axpy(-T::one(), other)
    }

    /// Pointwise product; parity follows the product rule.
    pub fn mul(&self, other: &GridFn<T>) -> GridFn<T> {
        let parity = match (self.parity, other.parity) {
            (Parity::None, _) | (_, Parity::None) => Parity::None,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        };
        let v = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .collect();
        GridFn::from_parts(&self.grid, v, parity)
    }

    /// Max node difference to another function on the same grid.
    pub fn max_diff(&self, other: &GridFn<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Serializes as CSV with a metadata comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# gridfn v1 parity={} n={} scale={} vanishing_order={}\ny,value\n",
            self.parity.as_str(),
            self.grid.n(),
            self.grid.scale(),
            self.vanishing_order
        );
        for (y, v) in self.grid.nodes().iter().zip(&self.values) {
            out.push_str(&format!("{y},{v}\n"));
        }
        out
    }

    /// Parses the format written by [`GridFn::to_csv`], rebuilding the grid.
    pub fn from_csv(text: &str) -> Result<GridFn<T>> {
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse("empty gridfn csv".into()))?;
        let meta = meta
            .strip_prefix("# gridfn v1")
            .ok_or_else(|| Error::Parse("missing gridfn header".into()))?;
        let mut parity = None;
        let mut n = None;
        let mut scale = None;
        let mut order = None;
        for kv in meta.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field `{kv}`")))?;
            match k {
                "parity" => parity = Some(Parity::parse(v)?),
                "n" => n = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "scale" => {
                    scale = Some(
                        v.parse::<T>()
                            .map_err(|_| Error::Parse(format!("bad scale `{v}`")))?,
                    )
                }
                "vanishing_order" => {
                    order = Some(v.parse::<u32>().map_err(|e| Error::Parse(e.to_string()))?)
                }
                _ => {}
            }
        }
        let (parity, n, scale) = match (parity, n, scale) {
            (Some(p), Some(n), Some(s)) => (p, n, s),
            _ => return Err(Error::Parse("incomplete gridfn header".into())),
        };
        let grid = Grid::new(n, scale)?;
        if lines.next() != Some("y,value") {
            return Err(Error::Parse("missing column header `y,value`".into()));
        }
        let mut values = Vec::with_capacity(n);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (_, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
            values.push(
                v.trim()
                    .parse::<T>()
                    .map_err(|_| Error::Parse(format!("bad value `{v}`")))?,
            );
        }
        let f = GridFn::new(&grid, values, parity)?;
        match order {
            Some(k) => f.with_vanishing_order(k),
            None => Ok(f),
        }
    }
}

fn symmetrize<T: Real>(grid: &Grid<T>, values: &mut [T], parity: Parity) {
    let half = T::lit(0.5);
    for j in grid.positive() {
        let m = grid.mirror(j);
        match parity {
            Parity::Odd => {
                let v = (values[j] - values[m]) * half;
                values[j] = v;
                values[m] = -v;
            }
            Parity::Even => {
                let v = (values[j] + values[m]) * half;
                values[j] = v;
                values[m] = v;
            }
            Parity::None => {}
        }
    }
}

fn detect_vanishing_order<T: Real>(grid: &Grid<T>, values: &[T]) -> u32 {
    let scale = max_abs(values);
    if scale == T::zero() {
        return ORDER_CAP;
    }
    let tol = T::tol(ORDER_TOL) * scale;
    if grid.value_at_zero(values).abs() > tol {
        0
    } else if grid.derivative_at_zero(values).abs() > tol {
        1
    } else if grid.second_derivative_at_zero(values).abs() > tol {
        2
    } else {
        3
    }
}

fn check_decay<T: Real>(f: &GridFn<T>) -> Result<()> {
    let grid = f.grid();
    let nodes = grid.nodes();
    let n = grid.n();
    let scale = f.max_abs();
    let tail = f.values[n - 1].abs().max(f.values[0].abs());
    if tail <= T::lit(TAIL_ABS) * scale {
        return Ok(());
    }
    let half_radius = nodes[n - 1] * T::lit(0.5);
    let j_half = grid
        .positive()
        .min_by(|&a, &b| {
            let da = (nodes[a] - half_radius).abs();
            let db = (nodes[b] - half_radius).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(n - 1);
    let inner = f.values[j_half].abs().max(f.values[grid.mirror(j_half)].abs());
    if tail <= T::lit(TAIL_RATIO) * inner {
        Ok(())
    } else {
        Err(Error::NotDecaying(format!(
            "tail value {tail} vs {inner} at half radius"
        )))
    }
}

/// Hilbert transform `Hf(x) = (1/π) PV ∫ f(y)/(x - y) dy`.
pub fn hilbert<T: Real>(f: &GridFn<T>) -> Result<GridFn<T>> {
    if f.parity == Parity::None {
        return Err(Error::Parity("hilbert needs an odd or even input".into()));
    }
    check_decay(f)?;
    let values = f.grid.hilbert_values(&f.values);
    Ok(GridFn::from_parts(&f.grid, values, f.parity.flipped()))
}

/// `Λ⁻¹f(x) = ∫_0^x Hf`; the velocity of vorticity `ω` is `-Λ⁻¹ω`.
pub fn lambda_inv<T: Real>(f: &GridFn<T>) -> Result<GridFn<T>> {
    if f.parity != Parity::Odd {
        return Err(Error::Parity("lambda_inv needs an odd input".into()));
    }
    let hf = hilbert(f)?;
    let values = f.grid.cumulative_values(&hf.values);
    Ok(GridFn::from_parts(&f.grid, values, Parity::Odd))
}

/// `∫ f² w dy`.
pub fn weighted_norm_sq<T: Real>(f: &GridFn<T>, w: Weight) -> Result<T> {
    if w.singular_at_zero() && f.vanishing_order < 2 {
        return Err(Error::NotInWeightedSpace(format!(
            "vanishing order {} at 0, need at least 2",
            f.vanishing_order
        )));
    }
    let integrand: Vec<T> = f
        .values
        .iter()
        .zip(f.grid.nodes())
        .map(|(&v, &y)| v * v * w.eval(y))
        .collect();
    Ok(f.grid.integrate_values(&integrand))
}

/// `∫ f g w dy` without admissibility checks.
pub(crate) fn weighted_inner<T: Real>(f: &[T], g: &[T], grid: &Grid<T>, w: Weight) -> T {
    let integrand: Vec<T> = f
        .iter()
        .zip(g)
        .zip(grid.nodes())
        .map(|((&a, &b), &y)| a * b * w.eval(y))
        .collect();
    grid.integrate_values(&integrand)
}

/// Discrete Hölder seminorm: sup of `|f(x) - f(x')| / |x - x'|^alpha` over node
/// pairs inside `[-window, window]`.
pub fn holder_seminorm<T: Real>(f: &GridFn<T>, alpha: T, window: T) -> Result<T> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::Precondition(format!("alpha = {alpha} not in (0, 1)")));
    }
    if !(window > T::zero()) {
        return Err(Error::Precondition(format!("window = {window} must be positive")));
    }
    let pts: Vec<(T, T)> = f
        .grid
        .nodes()
        .iter()
        .zip(&f.values)
        .filter(|(y, _)| y.abs() <= window)
        .map(|(&y, &v)| (y, v))
        .collect();
    let mut sup = T::zero();
    for (i, &(x, fx)) in pts.iter().enumerate() {
        for &(xp, fxp) in &pts[i + 1..] {
            let q = (fx - fxp).abs() / (x - xp).abs().powf(alpha);
            sup = sup.max(q);
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid<f64> {
        make_grid(n, 1.0).unwrap()
    }

    #[test]
    fn grid_is_symmetric_and_avoids_origin() {
        let g = grid(256);
        let y = g.nodes();
        assert_eq!(y.len(), 256);
        assert!(y.windows(2).all(|w| w[0] < w[1]));
        for j in g.positive() {
            assert_eq!(y[j], -y[g.mirror(j)]);
        }
        assert!(y.iter().all(|v| v.abs() > 0.0));
    }

    #[test]
    fn coarse_grid_reaches_far_tail() {
        // outermost node sits at L·cot(π/2n)
        let g = make_grid(64, 2.0).unwrap();
        assert!(g.nodes()[63] > 80.0);
        assert!(g.nodes()[0] < -80.0);
        assert!(make_grid(128, 2.0).unwrap().nodes()[127] > 100.0);
    }

    #[test]
    fn rejects_bad_node_counts() {
        assert!(matches!(make_grid(63, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(32, 1.0), Err(Error::InvalidGrid(_))));
        assert!(make_grid(64, -1.0).is_err());
    }

    #[test]
    fn hilbert_of_clm_profile() {
        let g = grid(1024);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y)).unwrap();
        let hf = hilbert(&f).unwrap();
        assert_eq!(hf.parity(), Parity::Even);
        let err = hf
            .values()
            .iter()
            .zip(g.nodes())
            .map(|(v, y)| (v + 1.0 / (1.0 + y * y)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn hilbert_at_origin_of_cubic_gaussian() {
        let g = grid(1024);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y.powi(3) * (-y * y).exp()).unwrap();
        let hf = hilbert(&f).unwrap();
        let expected = -0.5 / std::f64::consts::PI.sqrt();
        assert!((hf.value_at_zero() - expected).abs() < 1e-10);
        assert!((f.hilbert_at_zero() - expected).abs() < 1e-10);
    }

    #[test]
    fn hilbert_rejects_non_decaying_input() {
        let g = grid(256);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y.atan()).unwrap();
        assert!(matches!(hilbert(&f), Err(Error::NotDecaying(_))));
        let none = GridFn::new(&g, vec![0.0; 256], Parity::None).unwrap();
        assert!(matches!(hilbert(&none), Err(Error::Parity(_))));
    }

    #[test]
    fn lambda_inv_of_clm_profile_is_minus_arctan() {
        let g = grid(1024);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y)).unwrap();
        let li = lambda_inv(&f).unwrap();
        let err = li
            .values()
            .iter()
            .zip(g.nodes())
            .map(|(v, y)| (v + y.atan()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");
        // scale chosen so that a node sits exactly at y = 1
        let n = 1024;
        let theta = -std::f64::consts::PI + (0.75 * n as f64 + 0.5) * 2.0 * std::f64::consts::PI / n as f64;
        let g1 = make_grid(n, 1.0 / (theta / 2.0).tan()).unwrap();
        let j = 3 * n / 4;
        assert!((g1.nodes()[j] - 1.0).abs() < 1e-14);
        let f1 = GridFn::from_fn(&g1, Parity::Odd, |y| y / (1.0 + y * y)).unwrap();
        let li1 = lambda_inv(&f1).unwrap();
        assert!((li1.values()[j] + std::f64::consts::FRAC_PI_4).abs() < 1e-10);
        assert!(li.value_at_zero().abs() < 1e-14);
        let zero = lambda_inv(&GridFn::zeros(&g, Parity::Odd)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn weighted_norm_closed_form() {
        let g = grid(1024);
        let q = GridFn::from_fn(&g, Parity::Odd, |y| y.powi(3) / (1.0 + y * y).powi(3)).unwrap();
        assert!(q.vanishing_order() >= 2);
        let v = weighted_norm_sq(&q, Weight::Phi).unwrap();
        assert!((v - std::f64::consts::PI / 16.0).abs() < 1e-10, "v = {v}");
        let z = GridFn::zeros(&g, Parity::Odd);
        assert_eq!(weighted_norm_sq(&z, Weight::Phi).unwrap(), 0.0);
    }

    #[test]
    fn weighted_norm_rejects_linear_vanishing() {
        let g = grid(256);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y * (-y * y).exp()).unwrap();
        assert_eq!(f.vanishing_order(), 1);
        assert!(matches!(
            weighted_norm_sq(&f, Weight::Phi),
            Err(Error::NotInWeightedSpace(_))
        ));
        assert!(weighted_norm_sq(&f, Weight::Unweighted).is_ok());
    }

    #[test]
    fn declared_order_must_match_interpolation() {
        let g = grid(256);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y * (-y * y).exp()).unwrap();
        assert!(f.clone().with_vanishing_order(0).is_ok());
        assert!(f.with_vanishing_order(2).is_err());
    }

    #[test]
    fn parity_declaration_is_validated() {
        let g = grid(64);
        let vals: Vec<f64> = g.nodes().iter().map(|y| y.exp() / (1.0 + y.exp())).collect();
        assert!(matches!(
            GridFn::new(&g, vals, Parity::Odd),
            Err(Error::Parity(_))
        ));
    }

    #[test]
    fn holder_examples() {
        let g = grid(1024);
        let z = GridFn::zeros(&g, Parity::Odd);
        assert_eq!(holder_seminorm(&z, 0.5, 1.0).unwrap(), 0.0);
        let r = GridFn::from_fn(&g, Parity::Odd, |y| y.abs().sqrt() * y.signum()).unwrap();
        let s = holder_seminorm(&r, 0.5, 1.0).unwrap();
        assert!((1.0..=1.5).contains(&s), "s = {s}");
        let a = GridFn::from_fn(&g, Parity::Odd, f64::atan).unwrap();
        let s = holder_seminorm(&a, 0.5, 1.0).unwrap();
        assert!(s.is_finite() && s <= 2.0);
        assert!(holder_seminorm(&a, 1.0, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(64);
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y)).unwrap();
        let back: GridFn<f64> = GridFn::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.parity(), Parity::Odd);
        assert_eq!(back.grid().n(), 64);
    }

    #[test]
    fn single_precision_hilbert() {
        let g: Grid<f32> = make_grid(256, 1.0).unwrap();
        let f = GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y)).unwrap();
        let hf = hilbert(&f).unwrap();
        let err = hf
            .values()
            .iter()
            .zip(g.nodes())
            .map(|(v, y)| (v + 1.0 / (1.0 + y * y)).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-5);
    }
}
