use freelab_core::basis::{projections_from_coefficients, projections_from_system, CoefficientLedger};
use freelab_core::metric::build_circle;
use freelab_core::retraction::{lip_constant, random_system, validate_system};
use freelab_core::scalar::q;
use freelab_core::search::{certify_circle_lower_bound, SearchOptions, Target};
use freelab_core::{kr_norm, Measure, PointedMetricSpace, Rational, Scalar};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn measure(space: &PointedMetricSpace<Rational>, coeffs: &[(i64, i64)]) -> Measure<Rational> {
    let mut mu = Measure::zero(space);
    for (x, &(a, b)) in coeffs.iter().enumerate().take(space.len()) {
        mu.add_at(x, q(a, b));
    }
    mu
}

fn coeffs() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-9i64..=9, 1i64..=4), 12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_a_seminorm(n in 3usize..=10, a in coeffs(), b in coeffs(), c in -5i64..=5) {
        let space = build_circle(n).unwrap();
        let mu = measure(&space, &a);
        let nu = measure(&space, &b);
        let k = Rational::from_int(c);
        prop_assert_eq!(kr_norm(&space, &mu.scaled(&k)), k.abs_val() * kr_norm(&space, &mu));
        prop_assert!(kr_norm(&space, &mu.plus(&nu)) <= kr_norm(&space, &mu) + kr_norm(&space, &nu));
    }

    #[test]
    fn molecule_norm_is_distance(n in 3usize..=12, x in 0usize..13, y in 0usize..13) {
        let space = build_circle(n).unwrap();
        let (x, y) = (x % space.len(), y % space.len());
        prop_assume!(x != y);
        prop_assert_eq!(&kr_norm(&space, &Measure::molecule(&space, x, y)), space.d(x, y));
    }

    #[test]
    fn random_systems_satisfy_axioms(n in 3usize..=12, seed in any::<u64>()) {
        let space = build_circle(n).unwrap();
        let sys = random_system(&space, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(validate_system(&sys).is_valid());
        // φ_0 collapses to the base, φ_N is the identity.
        prop_assert_eq!(lip_constant(&space, &sys, 0).unwrap().value, Rational::from_int(0));
        prop_assert_eq!(lip_constant(&space, &sys, sys.last()).unwrap().value, Rational::from_int(1));
        for x in 0..space.len() {
            prop_assert_eq!(sys.chain_to(x), sys.chain_by_phi(x));
        }
    }

    #[test]
    fn ledger_reproduces_projections(n in 3usize..=8, seed in any::<u64>()) {
        let space = build_circle(n).unwrap();
        let sys = random_system(&space, &mut ChaCha8Rng::seed_from_u64(seed));
        let direct = projections_from_system(&space, &sys);
        let ledger = CoefficientLedger::<Rational>::from_system(&sys);
        let built = projections_from_coefficients(&space, sys.order(), &ledger).unwrap();
        prop_assert_eq!(direct, built);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // A certificate at some target implies one at every smaller target.
    #[test]
    fn certification_is_monotone_in_target(n in 4usize..=8, num in 1i64..=12) {
        let opts = SearchOptions::default();
        let hi = Target::exact(q(num, 4)).unwrap();
        let lo = Target::exact(q(num, 5)).unwrap();
        let c_hi = certify_circle_lower_bound(n, &hi, &opts, None).unwrap();
        if c_hi.is_certified() {
            prop_assert!(certify_circle_lower_bound(n, &lo, &opts, None).unwrap().is_certified());
        }
    }
}
