mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use broncholoc::detector::{detect_branch, percentile_threshold, DetectorParams};
use broncholoc::eval::{topk_accuracy, SequenceResult};
use broncholoc::filter::{predict, ranking, top_k, FilterState, GatePolicy, Posterior};
use broncholoc::imaging::{kmeans_1d, quantize_levels, GrayImage, KMeansInit, KMeansParams};
use broncholoc::likelihood::{normalize, read_likelihoods, write_likelihoods, LikelihoodVector};
use broncholoc::synth::{generate_sequence, random_walk, SynthConfig};
use broncholoc::viterbi::viterbi_decode;
use broncholoc::{TransitionModel, TreeModel};

use common::*;

fn gray_image() -> impl Strategy<Value = GrayImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h).prop_map(move |data| GrayImage::new(w, h, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_add_along_paths(n in 2usize..=10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree_model(n, &mut rng);
        let floyd = floyd_distances(n, tree.edges());
        for i in 0..n {
            for k in 0..n {
                prop_assert_eq!(u64::from(tree.distance(i, k).unwrap()), floyd[i][k]);
                for &j in &tree.path(i, k).unwrap() {
                    let sum = tree.distance(i, j).unwrap() + tree.distance(j, k).unwrap();
                    prop_assert_eq!(tree.distance(i, k).unwrap(), sum);
                }
            }
        }
    }

    #[test]
    fn transition_matches_scripted_prior(n in 2usize..=10, m in 0u32..5, frac in 0.0001f64..0.999, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree_model(n, &mut rng);
        let alpha = frac * TransitionModel::max_alpha(&tree);
        let tm = TransitionModel::new(&tree, alpha, m).unwrap();
        let oracle = transition_oracle(n, tree.edges(), alpha, u64::from(m));
        for i in 0..n {
            prop_assert!((tm.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert!((tm.prob(i, j) - oracle[i][j]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn alpha_outside_range_rejected(n in 2usize..=10, seed in any::<u64>(), over in 1.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree_model(n, &mut rng);
        prop_assert!(TransitionModel::new(&tree, over * TransitionModel::max_alpha(&tree), 1).is_err());
        prop_assert!(TransitionModel::new(&tree, 0.0, 1).is_err());
    }

    #[test]
    fn filter_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=4);
        let tree = random_tree_model(n, &mut rng);
        let tm = TransitionModel::new(&tree, 1e-3, 1).unwrap();
        let steps = rng.random_range(1..=6);
        let likelihoods: Vec<Vec<f64>> = (0..steps).map(|_| random_distribution(n, &mut rng)).collect();
        let gates: Vec<bool> = (0..steps).map(|_| rng.random_bool(0.5)).collect();
        let oracle_t = transition_oracle(n, tree.edges(), 1e-3, 1);
        let mut state = FilterState::new(&tree, &tm, GatePolicy::BranchGated).unwrap();
        for t in 1..steps {
            state.step(&normalize(&likelihoods[t]).unwrap(), gates[t]).unwrap();
        }
        let expected = filter_oracle(&oracle_t, 0, &likelihoods, &gates, steps - 1);
        for (a, b) in state.posterior().probs().iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn permutation_equivariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=8);
        let tree = random_tree_model(n, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let relabeled = tree.permuted(&perm).unwrap();
        let tm = TransitionModel::new(&tree, 1e-4, 1).unwrap();
        let tm2 = TransitionModel::new(&relabeled, 1e-4, 1).unwrap();
        let init = random_distribution(n, &mut rng);
        let mut init2 = vec![0.0; n];
        for i in 0..n {
            init2[perm[i]] = init[i];
        }
        let mut a = FilterState::with_prior(Posterior::from_probs(init).unwrap(), &tm, GatePolicy::BranchGated).unwrap();
        let mut b = FilterState::with_prior(Posterior::from_probs(init2).unwrap(), &tm2, GatePolicy::BranchGated).unwrap();
        for _ in 0..6 {
            let l = random_distribution(n, &mut rng);
            let mut l2 = vec![0.0; n];
            for i in 0..n {
                l2[perm[i]] = l[i];
            }
            let gate = rng.random_bool(0.5);
            a.step(&normalize(&l).unwrap(), gate).unwrap();
            b.step(&normalize(&l2).unwrap(), gate).unwrap();
            for i in 0..n {
                prop_assert!((a.posterior().probs()[i] - b.posterior().probs()[perm[i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gate_closed_keeps_uniform_on_doubly_stochastic(n in 2usize..8, steps in 1usize..20) {
        // symmetric circulant rows: doubly stochastic
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = (i as i64 - j as i64).rem_euclid(n as i64).min((j as i64 - i as i64).rem_euclid(n as i64));
                m[i * n + j] = 1.0 / (1.0 + d as f64);
            }
        }
        let row_sum: f64 = m[..n].iter().sum();
        for v in &mut m {
            *v /= row_sum;
        }
        let tm = TransitionModel::from_matrix(n, m).unwrap();
        let mut state = FilterState::with_prior(
            Posterior::from_probs(vec![1.0; n]).unwrap(),
            &tm,
            GatePolicy::BranchGated,
        ).unwrap();
        for _ in 0..steps {
            state.step(&LikelihoodVector::one_hot(n, 0), false).unwrap();
            for &p in state.posterior().probs() {
                prop_assert!((p - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_likelihood_is_neutral(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = TreeModel::bundled();
        let tm = TransitionModel::new(&tree, 1e-9, 1).unwrap();
        let prior = Posterior::from_probs(random_distribution(tree.len(), &mut rng)).unwrap();
        let expected = predict(prior.probs(), &tm).unwrap();
        let mut state = FilterState::with_prior(prior, &tm, GatePolicy::AlwaysUpdate).unwrap();
        state.step(&LikelihoodVector::uniform(tree.len()), true).unwrap();
        for (a, b) in state.posterior().probs().iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn viterbi_matches_enumeration_and_keeps_endpoints(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=4);
        let tree = random_tree_model(n, &mut rng);
        let tm = TransitionModel::new(&tree, 1e-2, rng.random_range(0..3)).unwrap();
        let steps = rng.random_range(1..=6);
        let rows: Vec<LikelihoodVector> = (0..steps)
            .map(|_| normalize(&random_distribution(n, &mut rng)).unwrap())
            .collect();
        let plain: Vec<Vec<f64>> = rows.iter().map(|r| r.as_slice().to_vec()).collect();
        let log_t: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| tm.prob(a, b).ln()).collect()).collect();
        let got = viterbi_decode(&rows, &tm, 0, true).unwrap();
        let (path, score) = viterbi_oracle(&log_t, 0, &plain, true);
        prop_assert_eq!(&got.states, &path);
        prop_assert!((got.log_score - score).abs() <= 1e-9);
        prop_assert_eq!(got.states[0], 0);
        prop_assert_eq!(*got.states.last().unwrap(), 0);
    }

    #[test]
    fn viterbi_path_ignores_frame_scaling(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = TreeModel::bundled();
        let n = tree.len();
        let tm = TransitionModel::new(&tree, 1e-9, 1).unwrap();
        let steps = rng.random_range(2..12);
        let rows: Vec<Vec<f64>> = (0..steps).map(|_| random_distribution(n, &mut rng)).collect();
        let frame = rng.random_range(0..steps);
        let as_vectors = |rows: &[Vec<f64>]| -> Vec<LikelihoodVector> {
            rows.iter().map(|r| normalize(r).unwrap()).collect()
        };
        let mut scaled = rows.clone();
        for v in &mut scaled[frame] {
            *v *= scale;
        }
        let a = viterbi_decode(&as_vectors(&rows), &tm, 0, true).unwrap();
        let b = viterbi_decode(&as_vectors(&scaled), &tm, 0, true).unwrap();
        prop_assert_eq!(a.states, b.states);
    }

    #[test]
    fn mask_stays_below_rank(img in gray_image(), p in 1.0f64..99.0) {
        let params = DetectorParams { intensity_percentile: p, ..DetectorParams::default() };
        let det = detect_branch(&img, &params).unwrap();
        let th = percentile_threshold(&img, p);
        prop_assert_eq!(th, nearest_rank(img.pixels(), p));
        let rank = ((p / 100.0) * img.area() as f64).ceil() as usize;
        prop_assert!(det.mask.count() < rank.max(1));
        let total: usize = det.instances().iter().map(|i| i.area).sum();
        prop_assert_eq!(total, det.mask.count());
        prop_assert!(det.lumen_count <= det.instances().len());
    }

    #[test]
    fn detector_invariant_under_monotone_map(img in gray_image(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut present = img.pixels().to_vec();
        present.sort_unstable();
        present.dedup();
        let mut targets: Vec<u8> = (0..=255).collect();
        targets.shuffle(&mut rng);
        targets.truncate(present.len());
        targets.sort_unstable();
        let mut lut = [0u8; 256];
        for (&a, &b) in present.iter().zip(&targets) {
            lut[a as usize] = b;
        }
        let params = DetectorParams::default();
        let a = detect_branch(&img, &params).unwrap();
        let b = detect_branch(&img.map(|v| lut[v as usize]), &params).unwrap();
        prop_assert_eq!(a.mask, b.mask);
        prop_assert_eq!(a.lumen_count, b.lumen_count);
    }

    #[test]
    fn kmeans_monotone_and_idempotent(img in gray_image(), k in 1usize..7, quantile in any::<bool>()) {
        let params = KMeansParams {
            init: if quantile { KMeansInit::Quantile } else { KMeansInit::Optimal },
            ..KMeansParams::with_k(k)
        };
        let fit = kmeans_1d(&img.histogram(), &params).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let once = quantize_levels(&img, &params).unwrap();
        prop_assert!(once.levels().len() <= k);
        let twice = quantize_levels(once.image(), &params).unwrap();
        prop_assert_eq!(once.image(), twice.image());
    }

    #[test]
    fn kmeans_optimal_for_small_k(img in gray_image(), k in 1usize..=3) {
        let hist = img.histogram();
        let values: Vec<(u64, u64)> = (0..256u64).filter(|&v| hist[v as usize] > 0).map(|v| (v, hist[v as usize])).collect();
        prop_assume!(values.len() <= 64);
        let fit = kmeans_1d(&hist, &KMeansParams::with_k(k)).unwrap();
        let mut groups: Vec<Vec<(u64, u64)>> = vec![Vec::new(); fit.centroids.len()];
        for &(v, c) in &values {
            groups[fit.assignment[v as usize] as usize].push((v, c));
        }
        let refs: Vec<&[(u64, u64)]> = groups.iter().map(Vec::as_slice).collect();
        prop_assert_eq!(exact_sse(&refs), exhaustive_kmeans(&values, k));
    }

    #[test]
    fn topk_monotone_in_k(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=10);
        let len = rng.random_range(1..30);
        let rankings = (0..len).map(|_| ranking(&random_distribution(n, &mut rng))).collect();
        let truth = (0..len).map(|_| rng.random_range(0..n)).collect();
        let r = SequenceResult::new("r", rankings, truth).unwrap();
        let mut last = 0.0;
        for k in 1..=n {
            let a = topk_accuracy(&r, k).unwrap();
            prop_assert!(a >= last);
            last = a;
        }
        prop_assert_eq!(last, 1.0);
    }

    #[test]
    fn top_k_is_prefix_of_ranking(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=12);
        let p = random_distribution(n, &mut rng);
        let full = top_k(&p, n).unwrap();
        for k in 1..=n {
            prop_assert_eq!(&top_k(&p, k).unwrap()[..], &full[..k]);
        }
        for w in full.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn likelihood_file_round_trip(seed in any::<u64>(), rows in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = TreeModel::bundled();
        let data: Vec<LikelihoodVector> = (0..rows)
            .map(|_| normalize(&random_distribution(tree.len(), &mut rng)).unwrap())
            .collect();
        let mut first = Vec::new();
        write_likelihoods(&mut first, &tree, &data).unwrap();
        let back = read_likelihoods(first.as_slice(), &tree).unwrap();
        let mut second = Vec::new();
        write_likelihoods(&mut second, &tree, &back).unwrap();
        prop_assert_eq!(first, second);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_sequences_are_consistent(seed in any::<u64>(), noise in 0.0f64..=1.0) {
        let tree = TreeModel::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let walk = random_walk(&tree, 4, &mut rng).unwrap();
        let cfg = SynthConfig { noise, size: 64, ..SynthConfig::default() };
        let seq = generate_sequence(&tree, &walk, &cfg, seed).unwrap();
        prop_assert_eq!(seq.truth[0], tree.root_index());
        prop_assert_eq!(seq.frames.len(), seq.truth.len());
        for w in seq.truth.windows(2) {
            prop_assert!(w[0] == w[1] || tree.are_adjacent(w[0], w[1]));
        }
        for l in &seq.likelihoods {
            prop_assert!((l.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(l.as_slice().iter().all(|&p| p >= 0.0));
        }
        let params = DetectorParams::default();
        for (f, &b) in seq.frames.iter().zip(&seq.branch_frames) {
            prop_assert_eq!(detect_branch(f, &params).unwrap().is_branch, b);
        }
        prop_assert_eq!(generate_sequence(&tree, &walk, &cfg, seed).unwrap(), seq);
    }
}
