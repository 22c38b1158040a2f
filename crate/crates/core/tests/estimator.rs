use nalgebra::{DMatrix, DVector};
use pivotfda::eigensys::{gram_l2, solve_eigen_functional, solve_eigen_scalar};
use pivotfda::estimator::*;
use pivotfda::funcspace::{cosine_fn, empirical_covariance, Curve, Grid};
use pivotfda::simharness::{gen_sample, DgpSpec, Predictor, Slope};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_design(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DesignScalar {
    let omega = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    let penalty = (0..r).map(|k| if k == 0 { 0.0 } else { rng.random_range(0.5..20.0) }).collect();
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    DesignScalar::new(omega, penalty, y).unwrap()
}

/// `n⁻¹ Σ (y_i − ω_iᵀb)² + λ bᵀΛb`, the objective behind the closed form.
fn objective(d: &DesignScalar, nq: usize, lambda: f64, b: &DVector<f64>) -> f64 {
    let mut loss = 0.0;
    for i in 0..nq {
        let fit: f64 = (0..d.r()).map(|k| d.omega()[(i, k)] * b[k]).sum();
        loss += (d.y()[i] - fit).powi(2);
    }
    let pen: f64 = (0..d.r()).map(|k| d.penalty()[k] * b[k] * b[k]).sum();
    loss / nq as f64 + lambda * pen
}

/// Normal equations assembled entry by entry and solved by LU.
fn brute_force(d: &DesignScalar, nq: usize, lambda: f64) -> DVector<f64> {
    let r = d.r();
    let mut a = DMatrix::zeros(r, r);
    let mut c = DVector::zeros(r);
    for i in 0..nq {
        for j in 0..r {
            c[j] += d.omega()[(i, j)] * d.y()[i];
            for k in 0..r {
                a[(j, k)] += d.omega()[(i, j)] * d.omega()[(i, k)];
            }
        }
    }
    for k in 0..r {
        a[(k, k)] += nq as f64 * lambda * d.penalty()[k];
    }
    a.lu().solve(&c).unwrap()
}

fn fd_gradient(d: &DesignScalar, nq: usize, lambda: f64, b: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6;
    DVector::from_fn(b.len(), |k, _| {
        let mut up = b.clone();
        let mut dn = b.clone();
        up[k] += h;
        dn[k] -= h;
        (objective(d, nq, lambda, &up) - objective(d, nq, lambda, &dn)) / (2.0 * h)
    })
}

#[test]
fn small_instance_matches_brute_force_and_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = random_design(&mut rng, 8, 3);
    let scheme = FractionScheme::new(0.5, 4).unwrap();
    let gram = DMatrix::identity(3, 3);
    let fit = ridge_path_scalar(&d, 0.05, scheme, &gram).unwrap();
    for (q, nq) in fit.sizes().iter().enumerate() {
        let oracle = brute_force(&d, *nq, 0.05);
        assert!((&fit.coeffs()[q] - &oracle).amax() <= 1e-10);
    }
    let b = &fit.coeffs()[3];
    assert!(fd_gradient(&d, 8, 0.05, b).norm() <= 1e-8);
}

#[test]
fn zero_response_gives_zero_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = random_design(&mut rng, 30, 4);
    let zero = DesignScalar::new(d.omega().clone(), d.penalty().iter().copied().collect(), vec![0.0; 30]).unwrap();
    let fit = ridge_path_scalar(&zero, 0.1, FractionScheme::default(), &DMatrix::identity(4, 4)).unwrap();
    assert!(fit.coeffs().iter().all(|b| b.amax() == 0.0));
}

#[test]
fn huge_penalty_shrinks_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let omega = DMatrix::from_fn(40, 4, |_, _| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d = DesignScalar::new(omega, vec![1.0, 2.0, 3.0, 4.0], y).unwrap();
    let fit = ridge_path_scalar(&d, 1e12, FractionScheme::default(), &DMatrix::identity(4, 4)).unwrap();
    let scale = (d.omega().transpose() * d.y()).norm();
    assert!(fit.coeffs().iter().all(|b| b.norm() <= 1e-6 * scale));
}

#[test]
fn unpenalized_trace_is_the_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = random_design(&mut rng, 60, 5);
    let terms = hat_terms(&d, FractionScheme::default(), 0.0).unwrap();
    for (_, tr) in terms {
        assert!((tr - 5.0).abs() < 1e-9);
    }
}

#[test]
fn noise_free_data_selects_smallest_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let omega = DMatrix::from_fn(80, 4, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]);
    let y = (&omega * &b).iter().copied().collect();
    let d = DesignScalar::new(omega, vec![0.0, 1.0, 5.0, 30.0], y).unwrap();
    let grid = default_lambda_grid(80);
    let g = gcv_select_scalar(&d, FractionScheme::default(), &grid).unwrap();
    assert_eq!(g.lambda, grid[0]);
    assert!(g.scores[0] < 1e-12);
}

/// GCV recomputed from explicit `n_q × n_q` hat matrices.
fn direct_gcv(d: &DesignScalar, scheme: FractionScheme, lambda: f64) -> f64 {
    let mut total = 0.0;
    for nq in scheme.sizes(d.n()) {
        let om = d.omega().rows(0, nq).into_owned();
        let mut a = om.transpose() * &om;
        for k in 0..d.r() {
            a[(k, k)] += nq as f64 * lambda * d.penalty()[k];
        }
        let h = &om * a.try_inverse().unwrap() * om.transpose();
        let y = d.y().rows(0, nq).into_owned();
        let resid = (&h * &y - &y).norm_squared();
        total += resid / nq as f64 / (1.0 - h.trace() / nq as f64).powi(2);
    }
    total
}

#[test]
fn gcv_matches_direct_recomputation_on_simulated_data() {
    let spec = DgpSpec::new(Slope::S1, Predictor::Iid, 100, 17);
    let s = gen_sample(&spec).unwrap();
    let sys = solve_eigen_scalar(&empirical_covariance(&s.x).unwrap(), 20, 40).unwrap();
    let d = build_design_scalar(&s.x, s.scalar_y().unwrap(), &sys).unwrap();
    let scheme = FractionScheme::default();
    let grid = default_lambda_grid(100);
    let g = gcv_select_scalar(&d, scheme, &grid).unwrap();
    let direct: Vec<f64> = grid.iter().map(|l| direct_gcv(&d, scheme, *l)).collect();
    for (a, b) in g.scores.iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-6 * b.abs());
    }
    let mut best = 0;
    for i in 1..direct.len() {
        if direct[i] < direct[best] {
            best = i;
        }
    }
    assert_eq!(g.lambda, grid[best]);
}

#[test]
fn gcv_argument_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = random_design(&mut rng, 30, 3);
    let s = FractionScheme::default();
    assert!(gcv_select_scalar(&d, s, &[]).is_err());
    assert!(gcv_select_scalar(&d, s, &[1.0, 0.5]).is_err());
    assert!(gcv_select_scalar(&d, s, &[-1.0]).is_err());
    assert!(ridge_path_scalar(&d, f64::NAN, s, &DMatrix::identity(3, 3)).is_err());
}

#[test]
fn singular_system_names_the_fraction() {
    // Zero penalty and a rank-one design cannot be solved by Cholesky; the
    // pseudo-inverse fallback still returns the minimum-norm solution.
    let omega = DMatrix::from_fn(20, 2, |i, _| i as f64);
    let d = DesignScalar::new(omega, vec![0.0, 0.0], (0..20).map(|i| i as f64).collect()).unwrap();
    let fit = ridge_path_scalar(&d, 0.0, FractionScheme::new(0.5, 2).unwrap(), &DMatrix::identity(2, 2)).unwrap();
    assert!((fit.coeffs()[1][0] - 0.5).abs() < 1e-10);
    let zero = DesignScalar::new(DMatrix::zeros(20, 2), vec![0.0, 0.0], vec![1.0; 20]).unwrap();
    let err = ridge_path_scalar(&zero, 0.0, FractionScheme::new(0.5, 2).unwrap(), &DMatrix::identity(2, 2)).unwrap_err();
    assert!(matches!(err, pivotfda::Error::Singular { q: 1, .. }));
}

fn setting_ii(n: usize, seed: u64) -> (Vec<Curve>, Vec<f64>) {
    let s = gen_sample(&DgpSpec::new(Slope::S2, Predictor::Iid, n, seed)).unwrap();
    let y = s.scalar_y().unwrap().to_vec();
    (s.x, y)
}

#[test]
fn design_entries_and_edge_cases() {
    let (x, y) = setting_ii(60, 7);
    let sys = solve_eigen_scalar(&empirical_covariance(&x).unwrap(), 6, 30).unwrap();
    let zeros = vec![Curve::zeros(Grid::default()); 5];
    let d0 = build_design_scalar(&zeros, &[1.0; 5], &sys).unwrap();
    assert!(d0.omega().iter().all(|v| *v == 0.0));

    let phi = vec![sys.basis()[0].clone(); 4];
    let d1 = build_design_scalar(&phi, &[0.0; 4], &sys).unwrap();
    let gram = gram_l2(&sys);
    for i in 0..4 {
        for k in 0..6 {
            assert!((d1.omega()[(i, k)] - gram[(0, k)]).abs() < 1e-14);
        }
    }
    assert!(build_design_scalar(&x[..3], &y[..2], &sys).is_err());
    let coarse = vec![Curve::zeros(Grid::new(51).unwrap())];
    assert!(matches!(build_design_scalar(&coarse, &[0.0], &sys), Err(pivotfda::Error::GridMismatch(_))));
}

#[test]
fn design_matches_refined_quadrature() {
    // Predictors with closed forms evaluated on a 10x finer grid, against
    // eigenfunctions evaluated there directly from their spline coefficients.
    let (x, _) = setting_ii(80, 8);
    let sys = solve_eigen_scalar(&empirical_covariance(&x).unwrap(), 5, 30).unwrap();
    let grid = Grid::default();
    let fine = Grid::new(1001).unwrap();
    let test_curves: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|s: f64| (3.0 * s).sin() + s * s),
        Box::new(|s: f64| (-(s - 0.3).powi(2) * 8.0).exp()),
        Box::new(|s: f64| cosine_fn(4, s) - 0.5),
    ];
    let coarse: Vec<Curve> = test_curves.iter().map(|f| Curve::from_fn(grid, f).unwrap()).collect();
    let d = build_design_scalar(&coarse, &[0.0; 3], &sys).unwrap();
    for (i, f) in test_curves.iter().enumerate() {
        for k in 0..5 {
            let vals: Vec<f64> = fine.points().iter().map(|s| f(*s) * sys.eval(k, *s, 0)).collect();
            let oracle = fine.integrate(&vals);
            let scale: f64 = fine.integrate(&vals.iter().map(|v| v.abs()).collect::<Vec<_>>());
            assert!((d.omega()[(i, k)] - oracle).abs() < 2e-3 * scale, "i={i} k={k} {} {oracle} {scale}", d.omega()[(i, k)]);
        }
    }
}

#[test]
fn estimate_evaluation() {
    let (x, y) = setting_ii(80, 9);
    let sys = solve_eigen_scalar(&empirical_covariance(&x).unwrap(), 6, 30).unwrap();
    let scheme = FractionScheme::new(0.5, 5).unwrap();
    let gram = gram_l2(&sys);
    let mut coeffs = vec![DVector::zeros(6); 5];
    coeffs[4][0] = 1.0;
    let fit = SequentialFit::from_parts(coeffs, 0.1, scheme, scheme.sizes(80), gram.clone()).unwrap();
    assert_eq!(evaluate_estimate(&fit, &sys, 5).unwrap().values(), sys.basis()[0].values());
    assert!(evaluate_estimate(&fit, &sys, 1).unwrap().values().iter().all(|v| *v == 0.0));
    assert!(evaluate_estimate(&fit, &sys, 0).is_err());
    assert!(evaluate_estimate(&fit, &sys, 6).is_err());

    let d = build_design_scalar(&x, &y, &sys).unwrap();
    let real = ridge_path_scalar(&d, 1e-4, scheme, &gram).unwrap();
    for q in 1..=5 {
        let curve = evaluate_estimate(&real, &sys, q).unwrap();
        let b = &real.coeffs()[q - 1];
        let form = (b.transpose() * &gram * b)[(0, 0)];
        assert!((curve.norm_sq() - form).abs() <= 1e-6 * (1.0 + form));
    }
}

#[test]
fn fit_exports_csv() {
    let (x, y) = setting_ii(60, 10);
    let sys = solve_eigen_scalar(&empirical_covariance(&x).unwrap(), 4, 20).unwrap();
    let d = build_design_scalar(&x, &y, &sys).unwrap();
    let fit = fit_scalar(&d, &sys, FractionScheme::new(0.5, 5).unwrap(), LambdaChoice::Gcv).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fit.csv");
    fit.write_csv(&p).unwrap();
    let text = std::fs::read_to_string(p).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("q,nu,n_q,b1,b2,b3,b4"));
}

fn functional_setup(n: usize, r: usize) -> (Vec<Curve>, pivotfda::eigensys::TensorEigenSystem) {
    let (x, _) = setting_ii(n, 11);
    let tsys = solve_eigen_functional(&empirical_covariance(&x).unwrap(), r, 24).unwrap();
    (x, tsys)
}

#[test]
fn functional_response_projections() {
    let (x, tsys) = functional_setup(40, 4);
    let grid = Grid::default();
    let constant = vec![Curve::constant(grid, 2.5).unwrap(); x.len()];
    let d = build_design_functional(&x, &constant, &tsys).unwrap();
    assert!(d.blocks()[0].y().iter().all(|v| (v - 2.5).abs() < 1e-6));
    for b in &d.blocks()[1..] {
        assert!(b.y().amax() < 1e-6);
    }
    let eta2 = vec![Curve::from_fn(grid, |t| cosine_fn(2, t)).unwrap(); x.len()];
    let d2 = build_design_functional(&x, &eta2, &tsys).unwrap();
    for (l, b) in d2.blocks().iter().enumerate() {
        let want = if l == 1 { 1.0 } else { 0.0 };
        assert!(b.y().iter().all(|v| (v - want).abs() < 1e-6));
    }
    // Responses with a closed form against a refined grid.
    let f = |t: f64| (2.0 * t).exp() - t;
    let y = vec![Curve::from_fn(grid, f).unwrap(); x.len()];
    let d3 = build_design_functional(&x, &y, &tsys).unwrap();
    let fine = Grid::new(1001).unwrap();
    for (l, b) in d3.blocks().iter().enumerate() {
        let vals: Vec<f64> = fine.points().iter().map(|t| f(*t) * cosine_fn(l + 1, *t)).collect();
        assert!((b.y()[0] - fine.integrate(&vals)).abs() < 1e-3);
    }
}

#[test]
fn functional_blocks_decouple() {
    let (x, tsys) = functional_setup(40, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let y: Vec<Curve> = (0..x.len())
        .map(|_| {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            Curve::from_fn(Grid::default(), |t| a[0] + a[1] * t + a[2] * (5.0 * t).sin()).unwrap()
        })
        .collect();
    let d = build_design_functional(&x, &y, &tsys).unwrap();
    let scheme = FractionScheme::new(0.5, 4).unwrap();
    let grams: Vec<_> = tsys.systems().iter().map(gram_l2).collect();
    let lambda = 1e-3;
    let fit = ridge_path_functional(&d, lambda, scheme, &grams).unwrap();

    // Joint block-diagonal system over all ℓ at once.
    let r = 3;
    for (q, nq) in scheme.sizes(x.len()).iter().enumerate() {
        let mut a = DMatrix::zeros(r * r, r * r);
        let mut c = DVector::zeros(r * r);
        for (l, b) in d.blocks().iter().enumerate() {
            let om = b.omega().rows(0, *nq);
            let mut blk = om.transpose() * om;
            for k in 0..r {
                blk[(k, k)] += *nq as f64 * lambda * b.penalty()[k];
            }
            a.view_mut((l * r, l * r), (r, r)).copy_from(&blk);
            c.rows_mut(l * r, r).copy_from(&(om.transpose() * b.y().rows(0, *nq)));
        }
        let joint = a.lu().solve(&c).unwrap();
        for l in 0..r {
            let got = fit.coeff(q, l);
            assert!((got - joint.rows(l * r, r)).amax() <= 1e-12 * (1.0 + joint.amax()));
            let oracle = brute_force(&d.blocks()[l], *nq, lambda);
            assert!((got - oracle).amax() <= 1e-10);
        }
    }

    let zero = vec![Curve::zeros(Grid::default()); x.len()];
    let dz = build_design_functional(&x, &zero, &tsys).unwrap();
    let fz = ridge_path_functional(&dz, lambda, scheme, &grams).unwrap();
    assert!(fz.coeffs().iter().flatten().all(|b| b.amax() == 0.0));
}

#[test]
fn functional_gcv_matches_direct_recomputation() {
    let spec = DgpSpec::new(Slope::F2, Predictor::Iid, 60, 13);
    let s = gen_sample(&spec).unwrap();
    let tsys = solve_eigen_functional(&empirical_covariance(&s.x).unwrap(), 4, 24).unwrap();
    let d = build_design_functional(&s.x, s.functional_y().unwrap(), &tsys).unwrap();
    let scheme = FractionScheme::new(0.5, 5).unwrap();
    let grid = default_lambda_grid(60);
    let g = gcv_select_functional(&d, scheme, &grid).unwrap();
    for (lambda, score) in grid.iter().zip(&g.scores) {
        let mut total = 0.0;
        let mut excluded = false;
        for nq in scheme.sizes(60) {
            let (mut rss, mut tr) = (0.0, 0.0);
            for b in d.blocks() {
                let om = b.omega().rows(0, nq).into_owned();
                let mut a = om.transpose() * &om;
                for k in 0..4 {
                    a[(k, k)] += nq as f64 * lambda * b.penalty()[k];
                }
                let h = &om * a.try_inverse().unwrap() * om.transpose();
                let y = b.y().rows(0, nq).into_owned();
                rss += (&h * &y - &y).norm_squared();
                tr += h.trace();
            }
            excluded |= tr >= nq as f64;
            total += rss / nq as f64 / (1.0 - tr / nq as f64).powi(2);
        }
        if excluded {
            assert!(score.is_infinite());
        } else {
            assert!((score - total).abs() <= 1e-6 * total);
        }
    }
    let finite: Vec<usize> = (0..grid.len()).filter(|i| g.scores[*i].is_finite()).collect();
    let best = finite.iter().copied().min_by(|a, b| g.scores[*a].total_cmp(&g.scores[*b])).unwrap();
    assert_eq!(g.lambda, grid[best]);
}

#[test]
fn surface_estimate_norm_matches_gram_form() {
    let spec = DgpSpec::new(Slope::F2, Predictor::Iid, 60, 14);
    let s = gen_sample(&spec).unwrap();
    let tsys = solve_eigen_functional(&empirical_covariance(&s.x).unwrap(), 4, 24).unwrap();
    let d = build_design_functional(&s.x, s.functional_y().unwrap(), &tsys).unwrap();
    let fit = fit_functional(&d, &tsys, FractionScheme::new(0.5, 5).unwrap(), LambdaChoice::Fixed(1e-4)).unwrap();
    let surf = evaluate_estimate_2d(&fit, &tsys, 5).unwrap();
    let form: f64 = (0..4)
        .map(|l| {
            let b = fit.coeff(4, l);
            (b.transpose() * &fit.grams()[l] * b)[(0, 0)]
        })
        .sum();
    assert!((surf.norm_sq() - form).abs() <= 1e-6 * (1.0 + form));
    assert!(evaluate_estimate_2d(&fit, &tsys, 6).is_err());
}

fn penalty_norm(fit: &SequentialFit, d: &DesignScalar) -> f64 {
    let b = fit.coeffs().last().unwrap();
    (0..b.len()).map(|k| d.penalty()[k] * b[k] * b[k]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_equation_residual_is_tiny(seed in any::<u64>(), n in 12usize..40, r in 1usize..5, lexp in -6.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_design(&mut rng, n, r);
        let scheme = FractionScheme::new(0.5, 5).unwrap();
        let lambda = 10f64.powf(lexp);
        let fit = ridge_path_scalar(&d, lambda, scheme, &DMatrix::identity(r, r)).unwrap();
        for (q, nq) in fit.sizes().iter().enumerate() {
            let om = d.omega().rows(0, *nq);
            let rhs = om.transpose() * d.y().rows(0, *nq);
            let mut a = om.transpose() * om;
            for k in 0..r {
                a[(k, k)] += *nq as f64 * lambda * d.penalty()[k];
            }
            let resid = (a * &fit.coeffs()[q] - &rhs).norm();
            prop_assert!(resid <= 1e-8 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn penalty_shrinks_monotonically(seed in any::<u64>(), l1 in -6.0f64..1.0, gap in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_design(&mut rng, 30, 4);
        let scheme = FractionScheme::new(0.5, 3).unwrap();
        let g = DMatrix::identity(4, 4);
        let a = ridge_path_scalar(&d, 10f64.powf(l1), scheme, &g).unwrap();
        let b = ridge_path_scalar(&d, 10f64.powf(l1 + gap), scheme, &g).unwrap();
        prop_assert!(penalty_norm(&b, &d) <= penalty_norm(&a, &d) + 1e-10);
    }

    #[test]
    fn fits_use_only_their_prefix(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_design(&mut rng, 40, 3);
        let scheme = FractionScheme::new(0.5, 5).unwrap();
        let g = DMatrix::identity(3, 3);
        let fit = ridge_path_scalar(&d, 0.01, scheme, &g).unwrap();
        let sizes = scheme.sizes(40);
        // Shuffle the rows beyond the first fraction's prefix.
        let cut = sizes[0];
        let mut order: Vec<usize> = (0..40).collect();
        let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (cut + 1..40).rev() {
            let j = prng.random_range(cut..=i);
            order.swap(i, j);
        }
        let omega = DMatrix::from_fn(40, 3, |i, k| d.omega()[(order[i], k)]);
        let y = order.iter().map(|&i| d.y()[i]).collect();
        let shuffled = DesignScalar::new(omega, d.penalty().iter().copied().collect(), y).unwrap();
        let refit = ridge_path_scalar(&shuffled, 0.01, scheme, &g).unwrap();
        prop_assert_eq!(&refit.coeffs()[0], &fit.coeffs()[0]);
        prop_assert_eq!(refit.coeffs().last().unwrap().len(), 3);
    }

    #[test]
    fn evaluation_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let (x, _) = setting_ii(40, 15);
        let sys = solve_eigen_scalar(&empirical_covariance(&x).unwrap(), 4, 20).unwrap();
        let scheme = FractionScheme::new(0.5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let mk = |c: DVector<f64>| SequentialFit::from_parts(vec![c], 0.0, scheme, vec![40], gram_l2(&sys)).unwrap();
        let fu = evaluate_estimate(&mk(u.clone()), &sys, 1).unwrap();
        let fv = evaluate_estimate(&mk(v.clone()), &sys, 1).unwrap();
        let fc = evaluate_estimate(&mk(&u * a + &v * b), &sys, 1).unwrap();
        for i in 0..fc.values().len() {
            let want = a * fu.values()[i] + b * fv.values()[i];
            prop_assert!((fc.values()[i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }
}
