mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use walker_activity::crf::{nll_and_gradient, CrfObjective, PreparedSequence};
use walker_activity::features::{Discretizer, FeatureSequence};
use walker_activity::hmm::{em_step, forward_backward, HmmModel};
use walker_activity::{Behaviour, LabelSet};

use common::*;

fn smoothed_by_enumeration(model: &HmmModel, obs: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let m = model.num_states();
    let mut gamma = vec![vec![0.0; m]; obs.len()];
    let mut total = 0.0;
    for path in all_paths(m, obs.len()) {
        let p = hmm_joint(model, &path, obs);
        total += p;
        for (t, &b) in path.iter().enumerate() {
            gamma[t][b] += p;
        }
    }
    gamma.iter().map(|r| r.iter().map(|x| x / total).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn smoothed_posteriors_match_enumeration(seed in any::<u64>(), m in 1usize..4, n in 1usize..3, d in 1usize..4, len in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_hmm(&mut rng, m, n, d);
        let obs = random_obs(&mut rng, len, n, d);
        let post = forward_backward(&model, &obs).unwrap();
        let want = smoothed_by_enumeration(&model, &obs);
        for (a, b) in post.gamma.iter().flatten().zip(want.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn em_step_reports_likelihood_of_input(seed in any::<u64>(), len in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_hmm(&mut rng, 2, 2, 3);
        let obs = random_obs(&mut rng, len, 2, 3);
        let (_, ll) = em_step(&model, std::slice::from_ref(&obs)).unwrap();
        let (_, want) = hmm_enumerate(&model, &obs);
        prop_assert!((ll - want).abs() < 1e-10);
    }

    #[test]
    fn crf_nll_is_log_z_minus_gold_score(seed in any::<u64>(), m in 2usize..4, n in 1usize..3, len in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = LabelSet::new(Behaviour::ALL[..m].to_vec()).unwrap();
        let bank = random_bank(&mut rng, m, n);
        let values: Vec<Vec<f64>> = (0..len).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let gold: Vec<usize> = (0..len).map(|_| rng.random_range(0..m)).collect();
        let w: Vec<f64> = (0..bank.num_weights()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let seq = FeatureSequence::new(
            "p",
            (0..n).map(|k| format!("f{k}")).collect(),
            values.clone(),
            Some(set.decode(&gold).unwrap()),
        )
        .unwrap();
        let sigma2 = 2.5;
        let (v, _) = nll_and_gradient(&w, &[seq], &bank, &set, sigma2).unwrap();
        let (log_z, _, _) = crf_enumerate(&w, &bank, &values);
        let prior: f64 = w.iter().map(|x| x * x).sum::<f64>() / (2.0 * sigma2);
        let want = log_z - crf_path_score(&w, &bank, &values, &gold) + prior;
        prop_assert!((v - want).abs() < 1e-9, "{} vs {}", v, want);
    }
}

#[test]
fn crf_objective_is_additive_over_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let bank = random_bank(&mut rng, 3, 2);
    let mut seqs = Vec::new();
    for len in [5, 0, 9] {
        let values: Vec<Vec<f64>> = (0..len).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
        seqs.push(PreparedSequence::new(&values, Some(labels), &bank).unwrap());
    }
    let w: Vec<f64> = (0..bank.num_weights()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nw = bank.num_weights();
    let whole = CrfObjective::from_prepared(seqs.clone(), nw, 1.0).value_and_gradient(&w);
    let prior: f64 = w.iter().map(|x| x * x).sum::<f64>() / 2.0;
    let parts: f64 = seqs
        .into_iter()
        .map(|s| CrfObjective::from_prepared(vec![s], nw, 1.0).value_and_gradient(&w).0 - prior)
        .sum();
    assert!((whole.0 - (parts + prior)).abs() < 1e-10);
}

#[test]
fn discretizer_bins_are_equal_frequency() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let values: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
    let seq = FeatureSequence::new("p", vec!["x".into()], values.clone(), None).unwrap();
    let disc = Discretizer::fit(&[seq], 20).unwrap();
    let mut counts = [0usize; 20];
    for row in &values {
        let b = disc.bin(0, row[0]);
        assert!((1..=20).contains(&b));
        counts[b - 1] += 1;
    }
    // distinct values: every bin holds exactly T / D
    assert!(counts.iter().all(|&c| c == 50), "{counts:?}");
    assert_eq!(disc.bin(0, -1e9), 1);
    assert_eq!(disc.bin(0, 1e9), 20);
}
