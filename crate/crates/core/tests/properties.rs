mod common;

use proptest::prelude::*;
use satflow::grid::{discrete_energy, l1_distance, w_minus_1_1_norm, DensityField, Grid1D};
use satflow::scheme::{flux, implicit_step, SchemeConfig};
use satflow::steady::{check_euler_lagrange, solve_mass_constant, ElVerdict, EL_TOL};

fn field(values: Vec<f64>) -> DensityField {
    DensityField::new(Grid1D::new(values.len()).unwrap(), values).unwrap()
}

fn interior(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(|n| prop::collection::vec(0.05..0.95f64, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w11_matches_scan_and_is_a_norm(
        u in prop::collection::vec(-1.0..1.0f64, 2..40),
        a in -4.0..4.0f64,
    ) {
        let grid = Grid1D::new(u.len()).unwrap();
        let nu = w_minus_1_1_norm(&u, grid);
        prop_assert!((nu - common::w11_scan(&u, grid.dx())).abs() <= 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
        prop_assert!((w_minus_1_1_norm(&scaled, grid) - a.abs() * nu).abs() <= 1e-12);
        // dominated by the L¹ norm on the unit interval
        let l1: f64 = grid.dx() * u.iter().map(|x| x.abs()).sum::<f64>();
        prop_assert!(nu <= l1 + 1e-12);
    }

    #[test]
    fn w11_triangle_inequality(
        (u, w) in (2usize..30).prop_flat_map(|n| (
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
        )),
    ) {
        let grid = Grid1D::new(u.len()).unwrap();
        let sum: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
        prop_assert!(w_minus_1_1_norm(&sum, grid) <= w_minus_1_1_norm(&u, grid) + w_minus_1_1_norm(&w, grid) + 1e-12);
    }

    #[test]
    fn step_conserves_mass_and_dissipates(rho in interior(3..24), k in 0.0..20.0f64) {
        let spec = common::harmonic_spec(k);
        let prev = field(rho);
        let (next, report) = implicit_step(&prev, &SchemeConfig::new(2f64.powi(-5)), &spec).unwrap();
        prop_assert!((next.mass() - prev.mass()).abs() <= 1e-12 * prev.mass());
        prop_assert!(next.within_bounds(1.0, 1e-12));
        let (e0, e1) = (discrete_energy(&prev, &spec).unwrap(), discrete_energy(&next, &spec).unwrap());
        prop_assert!(e1 <= e0 + 1e-12, "energy rose from {e0} to {e1}");
        prop_assert_eq!(report.fluxes.first().copied(), Some(0.0));
        prop_assert_eq!(report.fluxes.last().copied(), Some(0.0));
    }

    #[test]
    fn step_is_an_l1_contraction(
        (a, b) in (3usize..16).prop_flat_map(|n| (
            prop::collection::vec(0.05..0.95f64, n),
            prop::collection::vec(0.05..0.95f64, n),
        )),
    ) {
        let spec = common::harmonic_spec(10.0);
        let cfg = SchemeConfig::new(2f64.powi(-4));
        let (rho, eta) = (field(a), field(b));
        let (r1, _) = implicit_step(&rho, &cfg, &spec).unwrap();
        let (e1, _) = implicit_step(&eta, &cfg, &spec).unwrap();
        prop_assert!(l1_distance(&r1, &e1) <= l1_distance(&rho, &eta) + 1e-8);
    }

    #[test]
    fn ordered_data_stay_ordered(rho in interior(3..16), lift in prop::collection::vec(0.0..0.3f64, 16)) {
        let spec = common::harmonic_spec(10.0);
        let cfg = SchemeConfig::new(2f64.powi(-4));
        let upper: Vec<f64> = rho.iter().zip(&lift).map(|(r, l)| (r + l).min(0.97)).collect();
        let (lo, _) = implicit_step(&field(rho), &cfg, &spec).unwrap();
        let (hi, _) = implicit_step(&field(upper), &cfg, &spec).unwrap();
        for (a, b) in lo.values().iter().zip(hi.values()) {
            prop_assert!(a <= &(b + 1e-8));
        }
    }

    #[test]
    fn steady_profile_has_the_target_mass_and_no_flux(mass in 0.02..0.98f64, k in 0.5..20.0f64) {
        let spec = common::harmonic_spec(k);
        let p = solve_mass_constant(mass, &spec, Grid1D::new(48).unwrap()).unwrap();
        prop_assert!((p.mass - mass).abs() <= 1e-12);
        let f = flux(&p.field, &spec).unwrap();
        prop_assert!(f.iter().all(|x| x.abs() <= 1e-10), "{f:?}");
        let is_minimiser = matches!(
            check_euler_lagrange(&p.field, &spec, EL_TOL),
            ElVerdict::MinimiserCompatible { .. }
        );
        prop_assert!(is_minimiser);
    }
}
