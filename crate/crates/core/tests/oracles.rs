//! Cross-checks against independent brute-force computations.

use freelab_core::basis::projections_from_system;
use freelab_core::extensional::enumerate_circle_union;
use freelab_core::metric::{build_circle, build_circle_union, circle_distance, validate_metric};
use freelab_core::retraction::random_system;
use freelab_core::search::{certify_circle_lower_bound, Outcome, SearchOptions, Target};
use freelab_core::{kr_norm, operator_norm, LinearOperator, LipschitzFunction, Measure, PointedMetricSpace, Rational, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Integer points of the Lipschitz unit ball with `f(base) = 0`. On integer
/// metrics these include every vertex of the ball.
fn integer_ball(space: &PointedMetricSpace<Rational>) -> Vec<Vec<i64>> {
    let n = space.len();
    let d: Vec<Vec<i64>> = (0..n).map(|x| (0..n).map(|y| space.d(x, y).to_integer() as i64).collect()).collect();
    let mut out = Vec::new();
    let mut f = vec![0i64; n];
    fn fill(x: usize, f: &mut [i64], d: &[Vec<i64>], base: usize, out: &mut Vec<Vec<i64>>) {
        if x == f.len() {
            out.push(f.to_vec());
            return;
        }
        let range = if x == base { 0..=0 } else { -d[x][base]..=d[x][base] };
        for v in range {
            f[x] = v;
            if (0..x).all(|y| (v - f[y]).abs() <= d[x][y]) {
                fill(x + 1, f, d, base, out);
            }
        }
    }
    fill(0, &mut f, &d, space.base(), &mut out);
    out
}

fn random_integer_space(rng: &mut ChaCha8Rng, n: usize) -> PointedMetricSpace<Rational> {
    let big = 1_000i64;
    let mut d = vec![vec![big; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let w = rng.gen_range(1..=4);
        d[i][j] = w;
        d[j][i] = w;
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            let w = d[i][j].min(rng.gen_range(1..=4));
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    let dist = d.iter().map(|r| r.iter().map(|&v| Rational::from_int(v)).collect()).collect();
    validate_metric((0..n).map(|i| format!("p{i}")).collect(), dist, 0).unwrap()
}

#[test]
fn kr_norm_matches_lipschitz_ball_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let n = rng.gen_range(2..=5);
        let space = random_integer_space(&mut rng, n);
        let ball = integer_ball(&space);
        for _ in 0..5 {
            let mut mu = Measure::zero(&space);
            for x in 0..n {
                mu.add_at(x, Rational::new(rng.gen_range(-6..=6), rng.gen_range(1..=3)));
            }
            let oracle = ball
                .iter()
                .map(|f| mu.iter().fold(Rational::from_int(0), |a, (x, c)| a + c * Rational::from_int(f[x])))
                .max()
                .unwrap();
            assert_eq!(kr_norm(&space, &mu), oracle);
        }
    }
}

/// `‖T‖ = ‖T*‖ = max Lip(T* f)` over the vertices of the ball.
fn oracle_operator_norm(space: &PointedMetricSpace<Rational>, t: &LinearOperator<Rational>) -> Rational {
    let mut best = Rational::from_int(0);
    for f in integer_ball(space) {
        let fv: Vec<Rational> = f.iter().map(|&v| Rational::from_int(v)).collect();
        let g = LipschitzFunction::new(space, t.adjoint_apply(&fv)).unwrap();
        best = best.max(g.lipschitz_constant(space));
    }
    best
}

#[test]
fn projection_norms_match_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [3, 4, 5] {
        let space = build_circle(n).unwrap();
        for _ in 0..4 {
            let sys = random_system(&space, &mut rng);
            let fam = projections_from_system(&space, &sys);
            for k in 0..sys.len() {
                assert_eq!(operator_norm(&space, fam.get(k)).value, oracle_operator_norm(&space, fam.get(k)));
            }
            let eps: Vec<i8> = (0..sys.last()).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
            let q = fam.signed_sum(&eps).unwrap();
            assert_eq!(operator_norm(&space, &q).value, oracle_operator_norm(&space, &q));
        }
    }
}

/// `min` over all systems on `C_n^0` of `max_i Lip φ_i`, by enumerating every
/// order and parent choice; ratios compared as integer fractions.
fn brute_force_min_max_lip(n: usize) -> (i64, i64) {
    let m = n + 1;
    let mut best = (i64::MAX, 1i64);
    let mut order = vec![0usize];
    let mut parent = vec![usize::MAX; m];
    fn rec(n: usize, order: &mut Vec<usize>, parent: &mut Vec<usize>, best: &mut (i64, i64)) {
        let m = n + 1;
        if order.len() == m {
            let pos = |x: usize| order.iter().position(|&p| p == x).unwrap();
            let mut worst = (0i64, 1i64);
            for i in 0..m {
                let phi = |mut x: usize| {
                    while pos(x) > i {
                        x = parent[x];
                    }
                    x
                };
                for x in 0..m {
                    for y in (x + 1)..m {
                        let a = circle_distance(n, phi(x), phi(y)) as i64;
                        let b = circle_distance(n, x, y) as i64;
                        if a * worst.1 > worst.0 * b {
                            worst = (a, b);
                        }
                    }
                }
            }
            if worst.0 * best.1 < best.0 * worst.1 {
                *best = worst;
            }
            return;
        }
        for z in 1..m {
            if order.contains(&z) {
                continue;
            }
            for k in 0..order.len() {
                parent[z] = order[k];
                order.push(z);
                rec(n, order, parent, best);
                order.pop();
            }
            parent[z] = usize::MAX;
        }
    }
    rec(n, &mut order, &mut parent, &mut best);
    best
}

#[test]
fn search_agrees_with_exhaustive_enumeration() {
    for n in [4, 5, 6] {
        let (a, b) = brute_force_min_max_lip(n);
        let opt = Rational::new(a as i128, b as i128);
        let opts = SearchOptions::default();
        // Every system reaches the optimum, so the search certifies it...
        let at = certify_circle_lower_bound(n, &Target::exact(opt).unwrap(), &opts, None).unwrap();
        assert!(at.is_certified(), "n={n}: optimum {opt} not certified");
        // ...and just above it a system with all constants below exists.
        let above = opt + Rational::new(1, 1000);
        let c = certify_circle_lower_bound(n, &Target::exact(above).unwrap(), &opts, None).unwrap();
        match c.outcome {
            Outcome::Counterexample { max_lip, .. } => assert_eq!(max_lip, opt.to_string(), "n={n}"),
            other => panic!("n={n}: expected counterexample, got {other:?}"),
        }
    }
}

#[test]
fn extensional_predual_is_adjoint_of_interpolation() {
    let en = enumerate_circle_union(2).unwrap();
    let space = build_circle_union(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in [0, 3, 5, 6, 11, 20] {
        let t = en.extension_operator(&space, i).unwrap();
        let mut f = vec![Rational::from_int(0); space.len()];
        for v in f.iter_mut().skip(1) {
            *v = Rational::from_int(rng.gen_range(-30..=30));
        }
        let pf = en.apply_extension(i, &f).unwrap();
        // ⟨T δ_x, f⟩ = (P f)(x) for every x.
        assert_eq!(t.adjoint_apply(&f), pf, "i={i}");
        assert!(pf.iter().all(|v| v.is_finite_value()));
    }
}
