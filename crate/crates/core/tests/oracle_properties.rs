use proptest::prelude::*;
use salm::oracles::{oracle_variance, two_sample_combine};
use salm::problem::ObjectiveModel;
use salm::*;

const DRAWS: usize = 100_000;

fn finite_sum_objective(rng: &mut SeededRng, n: usize, m: usize) -> Objective {
    let terms = (0..m)
        .map(|_| {
            let d: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            Objective::Quadratic {
                q: Matrix::diag(&d),
                c: rng.normal_vec(n),
                offset: 0.0,
            }
        })
        .collect();
    Objective::Mean { terms }
}

/// Per-coordinate mean and standard error of `draws` samples.
fn moments(samples: impl Iterator<Item = Vector>, n: usize) -> (Vector, Vector, f64) {
    let mut mean = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut count = 0usize;
    for s in samples {
        count += 1;
        for k in 0..n {
            mean[k] += s[k];
            sq[k] += s[k] * s[k];
        }
    }
    let c = count as f64;
    let mut se = vec![0.0; n];
    let mut total_var = 0.0;
    for k in 0..n {
        mean[k] /= c;
        let var = (sq[k] / c - mean[k] * mean[k]).max(0.0);
        total_var += var;
        se[k] = (var / c).sqrt();
    }
    (mean, se, total_var)
}

fn check_unbiased(kind: OracleKind, f: &Objective, point_seed: u64) {
    let n = f.dim();
    let mut rng = SeededRng::new(point_seed, 9);
    for trial in 0..5 {
        let x = rng.normal_vec(n);
        let g = f.grad(&x);
        let mut o = GradientOracle::new(kind, SeededRng::new(point_seed, 100 + trial)).unwrap();
        let (mean, se, var) = moments((0..DRAWS).map(|_| o.sample(f, &x).unwrap()), n);
        for k in 0..n {
            let err = (mean[k] - g[k]).abs();
            assert!(err <= 4.0 * se[k] + 1e-12, "{kind:?} coord {k}: |mean − ∇f| = {err:e}, 4·se = {:e}", 4.0 * se[k]);
        }
        // Empirical variance against the declared one, with a 5% band for
        // the sampling error of a second moment at this draw count.
        let declared = oracle_variance(kind, f, &x).unwrap();
        assert!(var <= declared * 1.05 + 1e-12, "{kind:?}: variance {var} above declared {declared}");
    }
}

#[test]
fn additive_noise_is_unbiased_with_declared_variance() {
    let f = Objective::quadratic(Matrix::diag(&[1.0, -0.5, 0.25]), vec![0.1, 0.0, -0.3]).unwrap();
    check_unbiased(OracleKind::AdditiveNoise { sigma: 0.7 }, &f, 1);
}

#[test]
fn finite_sum_is_unbiased_with_declared_variance() {
    let mut rng = SeededRng::new(2, 0);
    let f = finite_sum_objective(&mut rng, 3, 4);
    check_unbiased(OracleKind::FiniteSum, &f, 2);
}

#[test]
fn exact_oracle_returns_the_gradient() {
    let f = Objective::quadratic(Matrix::diag(&[2.0, -1.0]), vec![1.0, 1.0]).unwrap();
    let mut o = GradientOracle::exact();
    for x in [[0.0, 0.0], [1.0, -2.0]] {
        assert_eq!(o.sample(&f, &x).unwrap(), f.grad(&x));
    }
}

#[test]
fn consensus_components_are_unbiased() {
    let locals = (0..3).map(|i| Objective::diagonal_quadratic(&[1.0 + i as f64, 0.5])).collect();
    let f = Objective::Consensus { block: 2, locals };
    check_unbiased(OracleKind::FiniteSum, &f, 3);
}

fn random_discrete_sampler(rng: &mut SeededRng, atoms: usize, m: usize, n: usize) -> ConstraintSampler {
    let mut w: Vec<f64> = (0..atoms).map(|_| rng.uniform_in(0.1, 1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let list = (0..atoms)
        .map(|_| {
            let a = Matrix::from_row_major(m, n, rng.normal_vec(m * n)).unwrap();
            (a, rng.normal_vec(m))
        })
        .collect();
    ConstraintSampler::Discrete { atoms: list, probs: w }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Exhaustive enumeration over independent pairs `(ζ¹, ζ²)` of the
    /// two-sample estimator against the deterministic gradient of `K` with
    /// the mean matrix.
    #[test]
    fn two_sample_estimator_is_unbiased(seed in any::<u64>(), atoms in 1usize..5, m in 1usize..4, n in 1usize..5) {
        let mut rng = SeededRng::new(seed, 0);
        let sampler = random_discrete_sampler(&mut rng, atoms, m, n);
        let (a_bar, b_bar) = sampler.mean();
        let list = sampler.atoms().unwrap();
        let obj = ObjectiveModel::new(Objective::zero(n), 1.0, None).unwrap();
        let p = ConstrainedProblem::new(obj, a_bar.clone(), b_bar.clone(), PolyhedralSet::free(n)).unwrap();
        let (x, y, z) = (rng.normal_vec(n), rng.normal_vec(m), rng.normal_vec(n));
        let (rho, mu) = (rng.uniform_in(0.0, 3.0), rng.uniform_in(0.0, 3.0));
        let mut expected = vec![0.0; n];
        for (p1, a1, _) in &list {
            for (p2, a2, b2) in &list {
                let g = two_sample_combine(vec![0.0; n], a1, a2, b2, &x, &y, &z, rho, mu);
                for k in 0..n {
                    expected[k] += p1 * p2 * g[k];
                }
            }
        }
        // Independent route: ∇K by the problem's own deterministic formula.
        let exact = p.prox_al_grad(&x, &y, &z, rho, mu).unwrap();
        let scale = 1.0 + exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            prop_assert!((expected[k] - exact[k]).abs() <= 1e-12 * scale, "coord {k}: {} vs {}", expected[k], exact[k]);
        }
    }

    #[test]
    fn seeded_streams_are_bit_reproducible(seed in any::<u64>(), stream in 0u64..1000) {
        let mut a = SeededRng::new(seed, stream);
        let mut b = SeededRng::new(seed, stream);
        for _ in 0..64 {
            prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        let f = Objective::diagonal_quadratic(&[1.0, 2.0]);
        let mut o1 = GradientOracle::new(OracleKind::AdditiveNoise { sigma: 1.0 }, SeededRng::new(seed, stream)).unwrap();
        let mut o2 = GradientOracle::new(OracleKind::AdditiveNoise { sigma: 1.0 }, SeededRng::new(seed, stream)).unwrap();
        for _ in 0..8 {
            let g1 = o1.sample(&f, &[0.5, -0.5]).unwrap();
            let g2 = o2.sample(&f, &[0.5, -0.5]).unwrap();
            prop_assert!(g1.iter().zip(&g2).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }
}

#[test]
fn gaussian_two_sample_estimator_monte_carlo() {
    // Continuous sampler: 4 standard errors over 10⁵ draws per coordinate.
    let mut rng = SeededRng::new(11, 0);
    let (m, n) = (2, 3);
    let a = Matrix::from_row_major(m, n, rng.normal_vec(m * n)).unwrap();
    let b = rng.normal_vec(m);
    let sampler = ConstraintSampler::Gaussian {
        a: a.clone(),
        b: b.clone(),
        sigma_a: 0.3,
        sigma_b: 0.2,
    };
    let obj = ObjectiveModel::new(Objective::zero(n), 1.0, None).unwrap();
    let p = ConstrainedProblem::new(obj, a, b, PolyhedralSet::free(n)).unwrap();
    let (x, y, z) = (rng.normal_vec(n), rng.normal_vec(m), rng.normal_vec(n));
    let exact = p.prox_al_grad(&x, &y, &z, 2.0, 1.0).unwrap();
    let mut draw_rng = SeededRng::new(11, 5);
    let mut o = GradientOracle::exact();
    let samples = (0..DRAWS).map(|_| {
        salm::oracles::stochastic_k_grad_twosample(&p, &mut o, &sampler, &x, &y, &z, 2.0, 1.0, &mut draw_rng).unwrap()
    });
    let (mean, se, _) = moments(samples, n);
    for k in 0..n {
        assert!((mean[k] - exact[k]).abs() <= 4.0 * se[k], "coord {k}: {} vs {} (se {})", mean[k], exact[k], se[k]);
    }
}
