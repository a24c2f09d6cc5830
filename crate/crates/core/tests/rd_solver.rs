use genbound::measures::{kl_divergence, mutual_information, FiniteDistribution};
use genbound::numeric::linspace;
use genbound::rd_solver::{
    ba_fixed_slope, brute_force_d2, brute_force_d2_many, d1_exact_tiny, d2_at, d2_constrained_at,
    discretize_interval_hypothesis, trace_d2_curve, ConstrainedSolver, D2Solver, LossMatrix, Scenario,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binary(loss: impl Fn(f64, f64) -> f64, p_test: f64, p_train: f64, n: usize) -> Scenario {
    let l = LossMatrix::from_fn(&[0.0, 1.0], &[0.0, 1.0], loss).unwrap();
    Scenario::new(
        FiniteDistribution::bernoulli(p_test).unwrap(),
        FiniteDistribution::bernoulli(p_train).unwrap(),
        vec![0.0, 1.0],
        l,
        n,
    )
    .unwrap()
}

fn fig1() -> Scenario {
    binary(|w, z| w * z, 0.5, 0.5, 1)
}

fn fig3(n: usize) -> Scenario {
    let aux = LossMatrix::from_fn(&[0.0, 1.0], &[0.0, 1.0], |w, z| -((w != z) as u8 as f64)).unwrap();
    binary(|w, z| w * z, 0.5, 0.5, n).with_aux_loss(aux).unwrap()
}

/// E over S ~ Bern(1/2)^n of the smallest empirical auxiliary risk, by direct
/// binomial summation: the minimizer disagrees with the majority label.
fn v_n_mismatch_indicator(n: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        if k > 0 {
            binom *= (n - k + 1) as f64 / k as f64;
        }
        total += binom * 0.5f64.powi(n as i32) * (k.max(n - k) as f64 / n as f64);
    }
    -total
}

fn random_scenario(rng: &mut ChaCha8Rng, nw: usize, nz: usize) -> Scenario {
    let loss = Array2::from_shape_fn((nw, nz), |_| rng.random::<f64>());
    let weights = |rng: &mut ChaCha8Rng| (0..nz).map(|_| rng.random::<f64>() + 0.05).collect::<Vec<_>>();
    let mu = FiniteDistribution::from_weights(&weights(rng)).unwrap();
    let nu = FiniteDistribution::from_weights(&weights(rng)).unwrap();
    Scenario::new(mu, nu, (0..nw).map(|w| w as f64).collect(), LossMatrix::new(loss).unwrap(), 1).unwrap()
}

#[test]
fn fixed_slope_examples() {
    let s = fig1();
    let zero = ba_fixed_slope(&s, 0.0, 1e-10, 10_000).unwrap();
    assert_eq!(zero.rate, 0.0);
    assert!(zero.value.abs() < 1e-15);

    let steep = ba_fixed_slope(&s, 200.0, 1e-10, 10_000).unwrap();
    assert!(steep.converged);
    assert!((steep.rate - 2f64.ln()).abs() < 1e-6);
    assert!((steep.value - 0.25).abs() < 1e-6);

    assert!(ba_fixed_slope(&s, -1.0, 1e-10, 10).is_err());
}

#[test]
fn rate_grows_with_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let s = random_scenario(&mut rng, 3, 3);
        let mut last = 0.0;
        for slope in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 40.0, 200.0] {
            let p = ba_fixed_slope(&s, slope, 1e-10, 10_000).unwrap();
            assert!(p.rate >= last - 1e-8, "slope {slope}: {} < {last}", p.rate);
            last = p.rate;
        }
    }
}

#[test]
fn d2_examples() {
    let s = fig1();
    assert!(d2_at(&s, 0.0).unwrap().abs() < 1e-15);
    assert!((d2_at(&s, 2f64.ln()).unwrap() - 0.25).abs() < 1e-3);
    assert!((d2_at(&s, 2.0).unwrap() - 0.25).abs() < 1e-6);
    assert!(d2_at(&s, -0.1).is_err());
}

#[test]
fn d2_agrees_with_channel_grid_on_figure_one() {
    let s = fig1();
    let exact = d2_at(&s, 0.2).unwrap();
    let grid = brute_force_d2(&s, 0.2, 0.02).unwrap();
    assert!(grid <= exact + 1e-9);
    assert!((exact - grid).abs() < 0.01, "{exact} vs {grid}");
}

#[test]
fn brute_force_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_scenario(&mut rng, 2, 3);
    // unconstrained: each instance takes its best hypothesis
    let g = genbound::rd_solver::gap_matrix(&s);
    let p = s.train_dist().probs();
    let best: f64 = (0..3)
        .map(|z| p[z] * g.values()[[0, z]].max(g.values()[[1, z]]))
        .sum();
    assert!((brute_force_d2(&s, 10.0, 0.1).unwrap() - best).abs() < 1e-12);
    let at_zero = brute_force_d2(&s, 0.0, 0.02).unwrap();
    assert!((at_zero - d2_at(&s, 0.0).unwrap()).abs() < 0.02);

    let big = random_scenario(&mut rng, 4, 4);
    assert!(brute_force_d2(&big, 0.1, 0.1).is_err());
}

#[test]
fn d2_matches_brute_force_on_random_small_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let rates = [0.05, 0.2, 0.5];
    for (nw, nz) in [(2, 2), (2, 3), (3, 2)] {
        for _ in 0..4 {
            let s = random_scenario(&mut rng, nw, nz);
            let grid = brute_force_d2_many(&s, &rates, 0.02).unwrap();
            let mut solver = D2Solver::new(&s);
            for (r, g) in rates.iter().zip(grid) {
                let v = solver.value_at(*r).unwrap();
                assert!(g <= v + 1e-9, "grid beats solver: {g} > {v}");
                assert!(v - g < 1e-2, "{nw}x{nz} r={r}: {v} vs {g}");
            }
        }
    }
}

#[test]
fn envelope_is_monotone_and_concave() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut scenarios = vec![fig1(), binary(|w, z| (w - z).abs(), 0.3, 0.6, 1)];
    scenarios.extend((0..6).map(|_| random_scenario(&mut rng, 3, 4)));
    for s in &scenarios {
        let mut solver = D2Solver::new(s);
        let rs = linspace(0.0, 1.5, 61);
        let vals: Vec<f64> = rs.iter().map(|&r| solver.value_at(r).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
        for w in vals.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-6);
        }
    }
}

#[test]
fn traced_points_report_their_own_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let s = random_scenario(&mut rng, 3, 3);
        let curve = trace_d2_curve(&s);
        for p in curve.points() {
            let joint = p.channel.joint(s.train_dist()).unwrap();
            assert!((mutual_information(&joint) - p.rate).abs() <= 1e-8);
            for row in p.channel.cond().rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mismatch_corollary_bounds_single_sample_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let s = random_scenario(&mut rng, 3, 3);
        let gamma = kl_divergence(s.train_dist(), s.test_dist()).unwrap().nats();
        let mut solver = D2Solver::new(&s);
        for r in linspace(0.0, 1.5, 16) {
            let bound = (2.0 * 0.25 * (gamma + r)).sqrt();
            assert!(solver.value_at(r).unwrap() <= bound + 1e-8);
        }
    }
}

#[test]
fn relabeling_hypotheses_permutes_the_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let s = random_scenario(&mut rng, 3, 3);
    let perm = [2usize, 0, 1];
    let loss = s.loss().values();
    let permuted = Array2::from_shape_fn((3, 3), |(w, z)| loss[[perm[w], z]]);
    let t = Scenario::new(
        s.test_dist().clone(),
        s.train_dist().clone(),
        vec![0.0, 1.0, 2.0],
        LossMatrix::new(permuted).unwrap(),
        1,
    )
    .unwrap();
    for r in [0.0, 0.1, 0.4, 3.0] {
        assert!((d2_at(&s, r).unwrap() - d2_at(&t, r).unwrap()).abs() < 1e-10);
    }
    let a = ba_fixed_slope(&s, 2.0, 1e-12, 10_000).unwrap();
    let b = ba_fixed_slope(&t, 2.0, 1e-12, 10_000).unwrap();
    for z in 0..3 {
        for w in 0..3 {
            assert!((b.channel.cond()[[z, w]] - a.channel.cond()[[z, perm[w]]]).abs() < 1e-9);
        }
    }
}

#[test]
fn constrained_examples() {
    let constant = LossMatrix::new(Array2::from_elem((2, 2), 0.3)).unwrap();
    let s = fig1().with_aux_loss(constant).unwrap();
    for r in [0.0, 0.1, 0.5, 2.0] {
        assert_eq!(d2_constrained_at(&s, r, 0.3).unwrap(), d2_at(&s, r).unwrap());
        assert_eq!(d2_constrained_at(&s, r, -1.0).unwrap(), d2_at(&s, r).unwrap());
    }
    assert!(matches!(
        d2_constrained_at(&s, 0.1, 0.5),
        Err(genbound::Error::Infeasible(_))
    ));
    assert!(d2_constrained_at(&fig1(), 0.1, 0.0).is_err());
}

#[test]
fn auxiliary_constraint_tightens_figure_three() {
    let s = fig3(10);
    let v = v_n_mismatch_indicator(10);
    assert!((v + 0.623046875).abs() < 1e-12);
    let mut free = D2Solver::new(&s);
    let mut tight = ConstrainedSolver::new(&s, v).unwrap();
    let mut improved = false;
    for r in linspace(0.0, 1.5, 20) {
        let a = free.value_at(r / 10.0).unwrap();
        let b = tight.value_at(r / 10.0).unwrap();
        assert!(b.value <= a + 1e-8);
        assert!(b.aux >= v - 1e-8);
        improved |= b.value < a - 1e-3;
    }
    assert!(improved);
}

#[test]
fn constrained_value_matches_channel_grid() {
    // grid oracle with the extra constraint, evaluated directly
    let s = fig3(10);
    let v = v_n_mismatch_indicator(10);
    let r = 0.12;
    let k = 100usize;
    let mut best = f64::NEG_INFINITY;
    for a in 0..=k {
        for b in 0..=k {
            // P(ŵ=1|z=0) = a/k, P(ŵ=1|z=1) = b/k
            let (x, y) = (a as f64 / k as f64, b as f64 / k as f64);
            let joint = Array2::from_shape_vec((2, 2), vec![0.5 * (1.0 - x), 0.5 * x, 0.5 * (1.0 - y), 0.5 * y])
                .unwrap();
            let info = mutual_information(&genbound::JointTable::new(joint).unwrap());
            let aux = -0.5 * (x + (1.0 - y));
            let gain = 0.5 * 0.5 * x + 0.5 * (-0.5) * y;
            if info <= r && aux >= v {
                best = best.max(gain);
            }
        }
    }
    let solved = d2_constrained_at(&s, r, v).unwrap();
    assert!(best <= solved + 1e-9);
    assert!(solved - best < 5e-3, "{solved} vs {best}");
}

#[test]
fn exact_multi_sample_chain() {
    for n in 1..=3 {
        let s = fig3(n);
        let v = v_n_mismatch_indicator(n);
        let mut free = D2Solver::new(&s);
        let mut tight = ConstrainedSolver::new(&s, v).unwrap();
        let mut d1 = genbound::rd_solver::D1Solver::new(&s).unwrap();
        for r in linspace(0.0, 1.5, 8) {
            let a = d1.value_at(r).unwrap();
            let b = tight.value_at(r / n as f64).unwrap().value;
            let c = free.value_at(r / n as f64).unwrap();
            assert!(a <= b + 1e-8, "n={n} r={r}: {a} > {b}");
            assert!(b <= c + 1e-8);
        }
    }
}

#[test]
fn d1_examples() {
    let s = fig1();
    for r in [0.0, 0.05, 0.3, 0.69, 1.0] {
        assert!((d1_exact_tiny(&s, r).unwrap() - d2_at(&s, r).unwrap()).abs() <= 1e-8);
    }
    let two = s.with_n(2).unwrap();
    assert!(d1_exact_tiny(&two, 0.0).unwrap().abs() < 1e-15);
    let d1 = d1_exact_tiny(&two, 0.3).unwrap();
    assert!(d1 <= d2_at(&two, 0.15).unwrap() + 1e-8);
    assert!(d1_exact_tiny(&s.with_n(13).unwrap(), 0.1).is_err());
}

#[test]
fn interval_grid() {
    assert_eq!(discretize_interval_hypothesis(2).unwrap(), vec![0.0, 1.0]);
    assert_eq!(discretize_interval_hypothesis(3).unwrap(), vec![0.0, 0.5, 1.0]);
    assert!(discretize_interval_hypothesis(1).is_err());
}

#[test]
fn interval_grid_refinement_is_stable() {
    let scenario = |g: usize, p: f64| {
        let w = discretize_interval_hypothesis(g).unwrap();
        let loss = LossMatrix::from_fn(&w, &[0.0, 1.0], |w, z| (w - z).abs()).unwrap();
        let mu = FiniteDistribution::bernoulli(p).unwrap();
        Scenario::new(mu.clone(), mu, w, loss, 1).unwrap()
    };
    for p in [0.2, 0.5, 0.8] {
        let mut coarse = D2Solver::new(&scenario(101, p));
        let mut fine = D2Solver::new(&scenario(201, p));
        for r in [0.0, 0.05, 0.3, 0.8, 1.5] {
            let (a, b) = (coarse.value_at(r).unwrap(), fine.value_at(r).unwrap());
            assert!((a - b).abs() < 1e-4, "p={p} r={r}: {a} vs {b}");
        }
    }
}
