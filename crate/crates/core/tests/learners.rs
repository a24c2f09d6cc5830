use genbound::coupling_solver::d3_zero;
use genbound::learners::*;
use genbound::measures::FiniteDistribution;
use genbound::rd_solver::{LossMatrix, Scenario};
use genbound::Error;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

fn bern(p: f64) -> FiniteDistribution {
    FiniteDistribution::bernoulli(p).unwrap()
}

fn product_loss_scenario(test: f64, train: f64, n: usize) -> Scenario {
    let loss = LossMatrix::from_fn(&[0.0, 1.0], &[0.0, 1.0], |w, z| w * z).unwrap();
    Scenario::new(bern(test), bern(train), vec![0.0, 1.0], loss, n).unwrap()
}

fn mismatch_aux_scenario(n: usize) -> Scenario {
    product_loss_scenario(0.5, 0.5, n)
        .with_aux_loss(LossMatrix::from_fn(&[0.0, 1.0], &[0.0, 1.0], |w, z| -((w != z) as u8 as f64)).unwrap())
        .unwrap()
}

fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let m = rng.random_range(2..=3);
    let n = rng.random_range(1..=4);
    let loss = Array2::from_shape_fn((m, 2), |_| rng.random::<f64>());
    let test = bern(rng.random_range(0.1..0.9));
    let train = bern(rng.random_range(0.1..0.9));
    Scenario::new(test, train, (0..m).map(|w| w as f64).collect(), LossMatrix::new(loss).unwrap(), n).unwrap()
}

/// Independent enumeration: nested sampling loops over sequences with the
/// Gibbs weights written out directly.
fn gibbs_oracle(s: &Scenario, beta: f64) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    let (k, n, m) = (s.num_instances(), s.n(), s.num_hypotheses());
    let loss = s.loss().values();
    let mut out = Vec::new();
    let mut seq = vec![0usize; n];
    loop {
        let p: f64 = seq.iter().map(|&z| s.train_dist().probs()[z]).product();
        let risk: Vec<f64> = (0..m).map(|w| seq.iter().map(|&z| loss[[w, z]]).sum::<f64>() / n as f64).collect();
        let weights: Vec<f64> = risk.iter().map(|r| (-beta * n as f64 * r).exp()).collect();
        let total: f64 = weights.iter().sum();
        out.push((p, risk, weights.iter().map(|w| w / total).collect()));
        let mut i = 0;
        while i < n && seq[i] == k - 1 {
            seq[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        seq[i] += 1;
    }
    out
}

#[test]
fn constant_learner_is_independent() {
    let s = product_loss_scenario(0.5, 0.25, 3);
    let j = enumerate_joint(&s, &LearnerSpec::constant(1)).unwrap();
    assert_eq!(exact_mi(&j), 0.0);
    for i in 0..3 {
        assert_eq!(per_sample_mi(&j, i).unwrap(), 0.0);
    }
    let pw = FiniteDistribution::point_mass(2, 1).unwrap();
    close(exact_gen_error(&j), d3_zero(&pw, &s).unwrap(), 1e-15);
    close(exact_gen_error(&j), 0.25, 1e-15);
    assert!(matches!(enumerate_joint(&s, &LearnerSpec::constant(2)), Err(Error::InvalidArgument(_))));
}

#[test]
fn zero_temperature_gibbs_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_scenario(&mut rng);
    let j = enumerate_joint(&s, &LearnerSpec::gibbs(0.0).unwrap()).unwrap();
    close(exact_mi(&j), 0.0, 1e-15);
    let m = s.num_hypotheses();
    for p in j.output_law().probs() {
        close(*p, 1.0 / m as f64, 1e-15);
    }
}

#[test]
fn cold_gibbs_matches_erm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let s = random_scenario(&mut rng);
        let erm = enumerate_joint(&s, &LearnerSpec::erm()).unwrap();
        let cold = enumerate_joint(&s, &LearnerSpec::gibbs(1e6).unwrap()).unwrap();
        let diff = (erm.table() - cold.table()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-9, "max difference {diff}");
    }
}

#[test]
fn enumeration_matches_direct_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let s = random_scenario(&mut rng);
        let beta = rng.random_range(0.1..3.0);
        let j = enumerate_joint(&s, &LearnerSpec::gibbs(beta).unwrap()).unwrap();
        let oracle = gibbs_oracle(&s, beta);
        let pop = s.population_risk();
        let mut gen = 0.0;
        for (d, (p, risk, cond)) in oracle.iter().enumerate() {
            close(j.dataset_probs()[d], *p, 1e-15);
            for w in 0..cond.len() {
                close(j.table()[[d, w]], p * cond[w], 1e-15);
                gen += p * cond[w] * (pop[w] - risk[w]);
            }
        }
        close(exact_gen_error(&j), gen, 1e-13);
    }
}

#[test]
fn training_marginal_is_the_product_law() {
    let s = product_loss_scenario(0.5, 0.3, 4);
    let j = enumerate_joint(&s, &LearnerSpec::gibbs(1.0).unwrap()).unwrap();
    close(j.table().sum(), 1.0, 1e-12);
    for d in 0..j.num_datasets() {
        let row: f64 = j.table().row(d).sum();
        let expect: f64 = j.dataset(d).iter().map(|&z| if z == 1 { 0.3 } else { 0.7 }).product();
        close(row, expect, 1e-12);
    }
}

#[test]
fn erm_on_product_loss_has_no_gap() {
    for p in [0.1, 0.5, 0.9] {
        let s = product_loss_scenario(0.5, p, 4);
        let j = enumerate_joint(&s, &LearnerSpec::erm()).unwrap();
        assert_eq!(exact_gen_error(&j), 0.0);
        assert_eq!(j.output_law().probs(), &[1.0, 0.0]);
    }
}

#[test]
fn matched_laws_constant_learner() {
    let s = product_loss_scenario(0.3, 0.3, 3);
    let j = enumerate_joint(&s, &LearnerSpec::constant(1)).unwrap();
    close(exact_gen_error(&j), 0.0, 1e-15);
}

#[test]
fn information_identities() {
    // ERM copying a single uniform sample
    let loss = LossMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let s = Scenario::new(bern(0.5), bern(0.5), vec![0.0, 1.0], loss, 1).unwrap();
    let j = enumerate_joint(&s, &LearnerSpec::erm()).unwrap();
    close(exact_mi(&j), 2f64.ln(), 1e-15);
    close(per_sample_mi(&j, 0).unwrap(), 2f64.ln(), 1e-15);
    assert!(per_sample_mi(&j, 1).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let s = random_scenario(&mut rng);
        for learner in [LearnerSpec::erm(), LearnerSpec::gibbs(rng.random_range(0.1..5.0)).unwrap()] {
            let j = enumerate_joint(&s, &learner).unwrap();
            let mi = exact_mi(&j);
            let sum: f64 = (0..s.n()).map(|i| per_sample_mi(&j, i).unwrap()).sum();
            assert!(sum <= mi + 1e-10, "{sum} > {mi}");
            if learner == LearnerSpec::erm() {
                close(mi, j.output_law().entropy(), 1e-12);
                assert!(mi <= (s.num_hypotheses() as f64).ln() + 1e-12);
            }
        }
    }
}

#[test]
fn enumeration_cap() {
    let s = product_loss_scenario(0.5, 0.5, 20);
    assert!(matches!(
        enumerate_joint(&s, &LearnerSpec::erm()),
        Err(Error::CapExceeded { .. })
    ));
    let ok = product_loss_scenario(0.5, 0.5, 18);
    assert!(enumerate_joint(&ok, &LearnerSpec::erm()).is_ok());
}

fn binomial_erm_oracle(n: usize) -> f64 {
    // ERM on -1[w≠z] picks the minority label: value -max(K, n-K)/n
    let mut c = 1.0f64;
    let mut acc = 0.0;
    for k in 0..=n {
        if k > 0 {
            c = c * (n + 1 - k) as f64 / k as f64;
        }
        acc += c * 0.5f64.powi(n as i32) * -(k.max(n - k) as f64) / n as f64;
    }
    acc
}

#[test]
fn expected_erm_aux_risk() {
    let s = mismatch_aux_scenario(10);
    let v = v_n_exact(&s).unwrap();
    close(v, binomial_erm_oracle(10), 1e-14);
    close(v, -0.6230469, 1e-7);
    close(v, -0.623046875, 1e-12);

    let c = product_loss_scenario(0.5, 0.3, 5).with_aux_loss(LossMatrix::new(array![[0.7, 0.7], [0.7, 0.7]]).unwrap()).unwrap();
    close(v_n_exact(&c).unwrap(), 0.7, 1e-15);

    let one = product_loss_scenario(0.5, 0.3, 1)
        .with_aux_loss(LossMatrix::new(array![[0.2, 0.9], [0.5, 0.1]]).unwrap())
        .unwrap();
    close(v_n_exact(&one).unwrap(), 0.7 * 0.2 + 0.3 * 0.1, 1e-15);

    assert!(v_n_exact(&product_loss_scenario(0.5, 0.5, 3)).is_err());
    assert!(matches!(v_n_exact(&mismatch_aux_scenario(20)), Err(Error::CapExceeded { .. })));
}

#[test]
fn monte_carlo_point_mass_is_exact() {
    let s = mismatch_aux_scenario(6);
    let s = s.with_distributions(bern(0.5), bern(0.0)).unwrap();
    let mc = v_n_monte_carlo(&s, 1000, 1).unwrap();
    assert_eq!(mc.estimate, v_n_exact(&s).unwrap());
    assert_eq!(mc.std_error, 0.0);
    assert!(mc.margin(0.01) > 0.0);
}

#[test]
fn monte_carlo_estimate() {
    let s = mismatch_aux_scenario(10);
    let mc = v_n_monte_carlo(&s, 100_000, 42).unwrap();
    assert!((mc.estimate + 0.6230469).abs() < 0.01, "{}", mc.estimate);
    assert!(mc.std_error > 0.0 && mc.std_error < 0.001);
    // single-set bounded-differences margin, sensitivity 1 per sample
    close(mc.margin(0.05), (40f64.ln() / 20.0).sqrt(), 1e-15);
}

#[test]
fn monte_carlo_is_seed_deterministic_across_thread_counts() {
    let s = mismatch_aux_scenario(7);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| v_n_monte_carlo(&s, 20_000, 9).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, v_n_monte_carlo(&s, 20_000, 9).unwrap());
    assert_ne!(a.estimate, v_n_monte_carlo(&s, 20_000, 10).unwrap().estimate);
}

#[test]
fn monte_carlo_coverage() {
    let s = mismatch_aux_scenario(10);
    let exact = v_n_exact(&s).unwrap();
    let covered = (0..200u64)
        .filter(|&seed| {
            let mc = v_n_monte_carlo(&s, 500, seed).unwrap();
            (mc.estimate - exact).abs() <= mc.mean_margin(0.01)
        })
        .count();
    assert!(covered >= 198, "covered {covered} of 200");
}

#[test]
fn tail_probability_examples() {
    let s = product_loss_scenario(0.5, 0.5, 3);
    let learner = LearnerSpec::gibbs(1.0).unwrap();
    let j = enumerate_joint(&s, &learner).unwrap();
    assert_eq!(empirical_tail(&j, 0.0), 1.0);
    assert_eq!(empirical_tail(&j, max_abs_gap(&j) + 0.01), 0.0);

    let pop = s.population_risk();
    let oracle: f64 = gibbs_oracle(&s, 1.0)
        .iter()
        .map(|(p, risk, cond)| {
            (0..2).filter(|&w| (pop[w] - risk[w]).abs() >= 0.25 - 1e-12).map(|w| p * cond[w]).sum::<f64>()
        })
        .sum();
    let tail = empirical_tail(&j, 0.25);
    close(tail, oracle, 1e-15);
    let bound = genbound::bounds::high_prob_tail(0.25, 3, 0.25, 0.0, j.renyi_dependence(2.0).unwrap()).unwrap();
    assert!(tail <= bound);
}

#[test]
fn sandwich_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let opts = SandwichOptions::default();
    for _ in 0..6 {
        let s = random_scenario(&mut rng);
        for learner in [LearnerSpec::erm(), LearnerSpec::gibbs(1.0).unwrap(), LearnerSpec::constant(0)] {
            let rep = sandwich_checks(&s, &learner, &opts).unwrap();
            for c in &rep.checks {
                assert!(c.holds, "{} failed: {} > {} on {s:?} / {learner:?}", c.name, c.lhs, c.rhs);
            }
            for c in tail_checks(&s, &learner, 50, &opts).unwrap() {
                assert!(c.holds, "{} failed: {} > {}", c.name, c.lhs, c.rhs);
            }
        }
    }
}

#[test]
fn corrupted_bound_is_caught() {
    let s = product_loss_scenario(0.5, 0.3, 3);
    let learner = LearnerSpec::gibbs(1.0).unwrap();
    let opts = SandwichOptions {
        corrupt: Some(("cor1_upper".into(), -10.0)),
        ..Default::default()
    };
    let rep = sandwich_checks(&s, &learner, &opts).unwrap();
    let failed: Vec<_> = rep.failures().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, vec!["d2_at(I/n) <= cor1_upper"]);
}
