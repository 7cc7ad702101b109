use std::sync::OnceLock;

use proptest::prelude::*;

use ssblow_core::grid1d::{hilbert, weighted_norm_sq, Parity, Weight};
use ssblow_core::harness::{energy, RunConfig, TrapStatus};
use ssblow_core::linop::{commutator_residual, Draw};
use ssblow_core::modulation::{decompose, project_admissible, rescaled_profile, ModPair};
use ssblow_core::profiles::{continue_profile, DEFAULT_STEP, PROFILE_SCALE};
use ssblow_core::{Grid, GridFn, Profile};

fn grid() -> &'static Grid {
    static G: OnceLock<Grid> = OnceLock::new();
    G.get_or_init(|| Grid::new(512, 1.0).unwrap())
}

fn profile() -> &'static Profile {
    static P: OnceLock<Profile> = OnceLock::new();
    P.get_or_init(|| continue_profile(0.03, DEFAULT_STEP, &Grid::new(1024, PROFILE_SCALE).unwrap()).unwrap())
}

fn draw(seed: u64, index: u64) -> GridFn {
    let d = Draw::sample(seed, index);
    GridFn::from_fn(grid(), Parity::Odd, |y| d.eval(y)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hilbert_flips_parity_and_is_linear(seed in 1u64..10_000, c in -3.0f64..3.0) {
        let (f, g) = (draw(seed, 0), draw(seed, 1));
        let (hf, hg) = (hilbert(&f).unwrap(), hilbert(&g).unwrap());
        prop_assert_eq!(hf.parity(), Parity::Even);
        let lhs = hilbert(&f.axpy(c, &g)).unwrap();
        let rhs = hf.axpy(c, &hg);
        prop_assert!(lhs.max_diff(&rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn hilbert_squares_to_minus_identity(seed in 1u64..10_000) {
        let f = draw(seed, 0);
        let hh = hilbert(&hilbert(&f).unwrap()).unwrap();
        prop_assert!(hh.axpy(1.0, &f).max_abs() <= 1e-9 * f.max_abs());
    }

    #[test]
    fn weighted_isometry_on_admissible_draws(seed in 1u64..10_000) {
        let q = project_admissible(&draw(seed, 0)).unwrap();
        let n = weighted_norm_sq(&q, Weight::Phi).unwrap();
        let hq = hilbert(&q).unwrap().with_vanishing_order(2).unwrap();
        let nh = weighted_norm_sq(&hq, Weight::Phi).unwrap();
        prop_assert!((nh - n).abs() <= 1e-6 * n, "{} vs {}", nh, n);
    }

    #[test]
    fn projection_is_idempotent(seed in 1u64..10_000) {
        let q = project_admissible(&draw(seed, 2)).unwrap();
        prop_assert!(q.hilbert_at_zero().abs() < 1e-12 * (1.0 + q.max_abs()));
        prop_assert!(q.derivative_at_zero().abs() < 1e-12 * (1.0 + q.max_abs()));
        let again = project_admissible(&q).unwrap();
        prop_assert!(again.max_diff(&q) <= 1e-12 * (1.0 + q.max_abs()));
    }

    #[test]
    fn commutator_identity_holds(seed in 1u64..10_000) {
        prop_assert!(commutator_residual(&draw(seed, 3)).unwrap() <= 1e-7);
    }

    #[test]
    fn energy_is_the_weighted_sum(seed in 1u64..10_000, delta in 0.01f64..1.0) {
        let q = project_admissible(&draw(seed, 4)).unwrap();
        let e = energy(&q, delta).unwrap();
        prop_assert_eq!(e.energy, e.norm_ydq_sq + e.norm_q_sq / delta);
    }

    #[test]
    fn trap_flags_follow_margins(e in -1.0f64..1.0, l in -1.0f64..1.0, m in -1.0f64..1.0) {
        let t = TrapStatus::from_margins(e, l, m);
        prop_assert_eq!(t.energy_ok, e >= 0.0);
        prop_assert_eq!(t.lambda_ok, l >= 0.0);
        prop_assert_eq!(t.mu_ok, m >= 0.0);
        prop_assert_eq!(t.trapped(), e >= 0.0 && l >= 0.0 && m >= 0.0);
    }

    #[test]
    fn config_round_trips(a in -0.1f64..0.1, n in 16usize..512, eps in 0.0f64..0.5,
                          delta in 0.001f64..1.0, k in 1.5f64..1e3, seed in 0u64..=i64::MAX as u64) {
        let mut c = RunConfig::default();
        c.model.a = a;
        c.grid.n = 4 * n;
        c.init.epsilon = eps;
        c.init.seed = seed;
        c.rescale.delta = delta;
        c.trap.k = k;
        prop_assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn modulation_pair_round_trips(lam in 0.9f64..1.1, mu in 0.9f64..1.1) {
        let p = profile();
        let pair = ModPair::new(lam, mu).unwrap();
        let (got, q) = decompose(&rescaled_profile(p, pair), p).unwrap();
        prop_assert!((got.lam - lam).abs() < 1e-8 && (got.mu - mu).abs() < 1e-8, "{:?}", got);
        prop_assert!(q.max_abs() < 1e-8);
    }
}

#[test]
fn seeds_beyond_toml_integers_are_rejected() {
    let mut c = RunConfig::default();
    c.init.seed = u64::MAX;
    assert!(c.validate().is_err());
}
