use ssblow_core::grid1d::{hilbert, Grid, GridFn, Parity};
use ssblow_core::linop::quadratic_form;
use ssblow_core::modulation::project_admissible;
use ssblow_core::profiles::clm_profile;

#[test]
fn core_operators_run_in_f32() {
    let g: Grid<f32> = Grid::new(256, 1.0).unwrap();
    let f = GridFn::from_fn(&g, Parity::Odd, |y| y / (1.0 + y * y)).unwrap();
    let h = hilbert(&f).unwrap();
    let err = h
        .values()
        .iter()
        .zip(g.nodes())
        .map(|(&v, &y)| (v + 1.0 / (1.0 + y * y)).abs())
        .fold(0.0f32, f32::max);
    assert!(err < 1e-5, "{err}");

    let p = clm_profile(&g);
    let q = project_admissible(&GridFn::from_fn(&g, Parity::Odd, |y| y * (-y * y / 4.0).exp()).unwrap()).unwrap();
    let norm = ssblow_core::grid1d::weighted_norm_sq(&q, ssblow_core::grid1d::Weight::Phi).unwrap();
    let r = quadratic_form(&p, &q).unwrap() / norm;
    assert!((r + 0.5).abs() < 1e-3, "{r}");
}
