//! The linearized operator around a profile and its weighted coercivity.
//!
//! `M_a q = -(2HF+1) q - 2Hq F - ((1+γ)y - aΛ⁻¹F) q_y + aΛ⁻¹q F'`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid1d::{hilbert, weighted_inner, weighted_norm_sq, Grid, GridFn, Parity, Weight};
use crate::modulation::{constraint_defect, project_admissible};
use crate::par::parallel_map;
use crate::profiles::Profile;
use crate::scalar::Real;

/// Constraint defect accepted by [`quadratic_form`].
pub const FORM_ADMISSIBILITY_TOL: f64 = 1e-8;
/// Minimum ensemble size of a coercivity probe.
pub const MIN_ENSEMBLE: usize = 10;

fn require_odd<T: Real>(q: &GridFn<T>, what: &str) -> Result<()> {
    if q.parity() == Parity::Odd {
        Ok(())
    } else {
        Err(Error::Parity(format!("{what} needs an odd function")))
    }
}

pub fn apply_linearized<T: Real>(p: &Profile<T>, q: &GridFn<T>) -> Result<GridFn<T>> {
    require_odd(q, "the linearized operator")?;
    let grid = p.grid();
    let hq = grid.hilbert_values(q.values());
    let linv_q = grid.cumulative_values(&hq);
    let qy = grid.derivative_values(q.values());
    let nodes = grid.nodes();
    let (two, one) = (T::lit(2.0), T::one());
    let v = (0..nodes.len())
        .map(|j| {
            let transport = (one + p.gamma) * nodes[j] - p.a * p.linv_f.values()[j];
            -(two * p.hf.values()[j] + one) * q.values()[j]
                - two * hq[j] * p.f.values()[j]
                - transport * qy[j]
                + p.a * linv_q[j] * p.df.values()[j]
        })
        .collect();
    Ok(GridFn::from_parts(p.grid(), v, Parity::Odd))
}

fn check_admissible<T: Real>(q: &GridFn<T>) -> Result<()> {
    let tol = T::tol(FORM_ADMISSIBILITY_TOL) * q.max_abs().max(T::one());
    let d = q.derivative_at_zero().abs();
    let h = q.hilbert_at_zero().abs();
    if d > tol || h > tol {
        return Err(Error::Admissibility(format!(
            "q'(0) = {d}, Hq(0) = {h}; project first"
        )));
    }
    Ok(())
}

/// `∫ q M_a q φ dy` for admissible `q`.
pub fn quadratic_form<T: Real>(p: &Profile<T>, q: &GridFn<T>) -> Result<T> {
    require_odd(q, "the quadratic form")?;
    check_admissible(q)?;
    // finiteness of the weighted norm
    weighted_norm_sq(q, Weight::Phi)?;
    let mq = apply_linearized(p, q)?;
    Ok(weighted_inner(q.values(), mq.values(), q.grid(), Weight::Phi))
}

/// `∫ Hq q F₀ φ dy`, which vanishes for admissible `q`.
pub fn cross_term<T: Real>(q: &GridFn<T>) -> Result<T> {
    require_odd(q, "the cross term")?;
    check_admissible(q)?;
    let hq = hilbert(q)?;
    let one = T::one();
    let v: Vec<T> = hq
        .values()
        .iter()
        .zip(q.values())
        .zip(q.grid().nodes())
        .map(|((&h, &f), &y)| h * f * y / (one + y * y))
        .collect();
    Ok(weighted_inner(&v, &vec![one; v.len()], q.grid(), Weight::Phi))
}

/// `-2HF₀ - 1 + ½ ∂_y(yφ)/φ = 2/(1+y²) - 1 + (y²-3)/(2(y²+1))`; equals `-½`.
pub fn coercivity_multiplier<T: Real>(y: T) -> T {
    let (one, two) = (T::one(), T::lit(2.0));
    let y2 = y * y;
    two / (one + y2) - one + (y2 - T::lit(3.0)) / (two * (y2 + one))
}

fn linv_raw<T: Real>(grid: &Grid<T>, v: &[T]) -> Vec<T> {
    grid.cumulative_values(&grid.hilbert_values(v))
}

/// `y Λ⁻¹(q_y) - Λ⁻¹(y q_y)` computed from the definitions.
pub fn commutator<T: Real>(q: &GridFn<T>) -> Result<Vec<T>> {
    require_odd(q, "the commutator")?;
    hilbert(q)?;
    let grid = q.grid();
    let nodes = grid.nodes();
    let qy = q.derivative();
    let yqy: Vec<T> = qy.values().iter().zip(nodes).map(|(&d, &y)| d * y).collect();
    let a = linv_raw(grid, qy.values());
    let b = linv_raw(grid, &yqy);
    Ok((0..nodes.len()).map(|j| nodes[j] * a[j] - b[j]).collect())
}

/// Max-norm gap between the commutator and `∫_0^y Hq - y Hq(0)`; the second
/// term vanishes on admissible `q`.
pub fn commutator_residual<T: Real>(q: &GridFn<T>) -> Result<T> {
    let lhs = commutator(q)?;
    let grid = q.grid();
    let hq = grid.hilbert_values(q.values());
    let h0 = grid.value_at_zero(&hq);
    let rhs = grid.cumulative_values(&hq);
    Ok(lhs
        .iter()
        .zip(&rhs)
        .zip(grid.nodes())
        .map(|((&l, &r), &y)| (l - (r - y * h0)).abs())
        .fold(T::zero(), T::max))
}

/// `‖y q_y‖²_φ + ‖q‖²_φ`.
pub fn unit_energy<T: Real>(q: &GridFn<T>) -> Result<T> {
    Ok(weighted_norm_sq(&q.y_derivative(), Weight::Phi)? + weighted_norm_sq(q, Weight::Phi)?)
}

/// `(I₆, y q_y)_φ` with `I₆ = a F' [Λ⁻¹, y]∂_y q`.
pub fn i6_pairing<T: Real>(p: &Profile<T>, q: &GridFn<T>) -> Result<T> {
    let c = commutator(q)?;
    let yqy = q.y_derivative();
    let i6: Vec<T> = c
        .iter()
        .zip(p.df.values())
        .map(|(&c, &d)| p.a * d * c)
        .collect();
    Ok(weighted_inner(&i6, yqy.values(), q.grid(), Weight::Phi))
}

/// Parameters of one ensemble draw: `(c, m, w)` per term.
#[derive(Clone, Debug, Serialize)]
pub struct Draw {
    pub terms: Vec<(f64, f64, f64)>,
}

impl Draw {
    pub fn sample(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let k = rng.gen_range(3..=6);
        let terms = (0..k)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(0.25..2.0),
                )
            })
            .collect();
        Draw { terms }
    }

    /// `Σ c (y-m) e^{-(y-m)²/w}`, antisymmetrized.
    pub fn eval<T: Real>(&self, y: T) -> T {
        let g = |y: f64| {
            self.terms
                .iter()
                .map(|&(c, m, w)| c * (y - m) * (-(y - m) * (y - m) / w).exp())
                .sum::<f64>()
        };
        let y = y.to_f64_lossy();
        T::lit(0.5 * (g(y) - g(-y)))
    }

    pub fn hash(&self) -> String {
        let mut h = DefaultHasher::new();
        for &(c, m, w) in &self.terms {
            c.to_bits().hash(&mut h);
            m.to_bits().hash(&mut h);
            w.to_bits().hash(&mut h);
        }
        format!("{:016x}", h.finish())
    }

    /// The projected, admissible member; `None` for degenerate draws.
    pub fn admissible<T: Real>(&self, grid: &Grid<T>) -> Option<GridFn<T>> {
        let raw = GridFn::from_fn(grid, Parity::Odd, |y| self.eval(y)).ok()?;
        let q = project_admissible(&raw).ok()?;
        let norm = weighted_norm_sq(&q, Weight::Phi).ok()?;
        (norm > T::lit(1e-12) && constraint_defect(&q) <= T::lit(1e-10)).then_some(q)
    }
}

/// Admissible ensemble members `0..count` for `seed`, skipping degenerate draws.
pub fn admissible_ensemble<T: Real>(grid: &Grid<T>, count: usize, seed: u64) -> Vec<(Draw, GridFn<T>)> {
    parallel_map(count, |i| {
        let d = Draw::sample(seed, i as u64);
        let q = d.admissible(grid);
        (d, q)
    })
    .into_iter()
    .filter_map(|(d, q)| match q {
        Some(q) => Some((d, q)),
        None => {
            log::warn!("skipping degenerate ensemble draw {}", d.hash());
            None
        }
    })
    .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    /// Max over the ensemble of `⟨q, M_a q⟩_φ / ‖q‖²_φ`.
    pub worst_ratio: f64,
    /// Min of the same ratio.
    pub best_ratio: f64,
    pub ensemble_size: usize,
    pub evaluated: usize,
    pub a: f64,
    pub seed: u64,
    pub worst_hash: String,
}

impl CoercivityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Ratios `⟨q, M_a q⟩_φ / ‖q‖²_φ` over an ensemble, with the draw hashes.
pub fn form_ratios<T: Real>(p: &Profile<T>, ensemble_size: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let members = admissible_ensemble(p.grid(), ensemble_size, seed);
    let out = parallel_map(members.len(), |i| {
        let (d, q) = &members[i];
        let form = quadratic_form(p, q)?;
        let norm = weighted_norm_sq(q, Weight::Phi)?;
        Ok((d.hash(), (form / norm).to_f64_lossy()))
    });
    out.into_iter().collect()
}

pub fn coercivity_probe<T: Real>(p: &Profile<T>, ensemble_size: usize, seed: u64) -> Result<CoercivityReport> {
    if ensemble_size < MIN_ENSEMBLE {
        return Err(Error::Precondition(format!(
            "ensemble size {ensemble_size} below {MIN_ENSEMBLE}"
        )));
    }
    let ratios = form_ratios(p, ensemble_size, seed)?;
    let (worst_hash, worst) = ratios
        .iter()
        .cloned()
        .fold((String::new(), f64::NEG_INFINITY), |acc, r| if r.1 > acc.1 { r } else { acc });
    let best = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(CoercivityReport {
        worst_ratio: worst,
        best_ratio: best,
        ensemble_size,
        evaluated: ratios.len(),
        a: p.a.to_f64_lossy(),
        seed,
        worst_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid1d::make_grid;
    use crate::profiles::{clm_profile, continue_profile};

    fn grid(n: usize) -> Grid<f64> {
        make_grid(n, 1.0).unwrap()
    }

    #[test]
    fn linearized_basics() {
        let g = grid(256);
        let p = clm_profile(&g);
        assert_eq!(apply_linearized(&p, &GridFn::zeros(&g, Parity::Odd)).unwrap().max_abs(), 0.0);
        let q = GridFn::from_fn(&g, Parity::Odd, |y| y * (-y * y).exp()).unwrap();
        let m1 = apply_linearized(&p, &q).unwrap();
        let m2 = apply_linearized(&p, &q.scaled(2.0)).unwrap();
        assert!(m2.max_diff(&m1.scaled(2.0)) < 1e-10);
        let even = GridFn::from_fn(&g, Parity::Even, |y| (-y * y).exp()).unwrap();
        assert!(matches!(apply_linearized(&p, &even), Err(Error::Parity(_))));
    }

    #[test]
    fn scaling_zero_mode() {
        let g = Grid::new(1024, crate::profiles::PROFILE_SCALE).unwrap();
        for &a in &[0.0, 0.05, -0.05] {
            let p = continue_profile(a, 0.005, &g).unwrap();
            let mode = p.f.y_derivative();
            let r = apply_linearized(&p, &mode).unwrap().max_abs_within(10.0);
            assert!(r <= 1e-5, "a {a}: {r}");
        }
    }

    #[test]
    fn multiplier_is_minus_half() {
        let g = grid(256);
        for &y in g.nodes() {
            assert!((coercivity_multiplier(y) + 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_coercivity_at_zero_parameter() {
        let g = grid(1024);
        let p = clm_profile(&g);
        for (_, q) in admissible_ensemble(&g, 10, 3) {
            let form = quadratic_form(&p, &q).unwrap();
            let norm = weighted_norm_sq(&q, Weight::Phi).unwrap();
            assert!((form / norm + 0.5).abs() < 1e-6, "{}", form / norm);
            assert!(cross_term(&q).unwrap().abs() <= 1e-7 * norm);
        }
        assert_eq!(quadratic_form(&p, &GridFn::zeros(&g, Parity::Odd)).unwrap(), 0.0);
    }

    #[test]
    fn form_rejects_inadmissible_input() {
        let g = grid(256);
        let p = clm_profile(&g);
        let q = GridFn::from_fn(&g, Parity::Odd, |y| y * y * y * (-y * y).exp()).unwrap();
        assert!(matches!(quadratic_form(&p, &q), Err(Error::Admissibility(_))));
    }

    #[test]
    fn commutator_identity() {
        let g = grid(1024);
        assert_eq!(commutator_residual(&GridFn::zeros(&g, Parity::Odd)).unwrap(), 0.0);
        let q1 = GridFn::from_fn(&g, Parity::Odd, |y| y * (-y * y).exp()).unwrap();
        let q2 = GridFn::from_fn(&g, Parity::Odd, |y| y.powi(3) / (1.0 + y * y).powi(3)).unwrap();
        for q in [q1, q2] {
            let r = commutator_residual(&q).unwrap();
            assert!(r <= 1e-7, "{r}");
        }
    }

    #[test]
    fn probe_reports() {
        let g = grid(512);
        let p = clm_profile(&g);
        let r = coercivity_probe(&p, 12, 1).unwrap();
        assert!((r.worst_ratio + 0.5).abs() < 1e-4, "{r:?}");
        assert_eq!(r.worst_hash.len(), 16);
        assert!(coercivity_probe(&p, 0, 1).is_err());
        let pa = continue_profile(0.02, 0.005, &g).unwrap();
        assert!(coercivity_probe(&pa, 12, 1).unwrap().worst_ratio <= -0.4);
    }

    #[test]
    fn i6_bound() {
        let g = grid(512);
        let p = continue_profile(0.05, 0.005, &g).unwrap();
        for (_, q) in admissible_ensemble(&g, 10, 5) {
            let c = i6_pairing(&p, &q).unwrap().abs() / (0.05 * unit_energy(&q).unwrap());
            assert!(c <= 10.0, "{c}");
        }
    }
}
