use ovaib::autodiff::{AdamConfig, AdamState, Graph};
use ovaib::eval::{random_baseline_map, retrieval_map};
use ovaib::info_oracle::{gaussian_kl, gaussian_product, minimality_kl_constant, DiscreteJoint, IsotropicGaussian};
use ovaib::linalg::{ridge_project, Cholesky};
use ovaib::losses::{self, LossConfig, ModalityBundle};
use ovaib::pipeline::RunConfig;
use ovaib::{Matrix, Vector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn joint_strategy(max_vars: usize) -> impl Strategy<Value = DiscreteJoint> {
    (2..=max_vars, any::<u64>()).prop_flat_map(|(m, seed)| {
        proptest::collection::vec(2usize..=4, m).prop_map(move |sizes| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DiscreteJoint::random(&mut rng, &sizes).unwrap()
        })
    })
}

fn bundle_strategy() -> impl Strategy<Value = ModalityBundle> {
    (2usize..=4, 2usize..=6, 3usize..=8).prop_flat_map(|(m, n, d)| {
        proptest::collection::vec(-2.0f64..2.0, m * n * d).prop_map(move |data| {
            ModalityBundle::new(data.chunks(n * d).map(|c| Matrix::new(n, d, c.to_vec()).unwrap()).collect()).unwrap()
        })
    })
}

/// Continuous draws from a seed with d > M - 1, so rest spans are proper,
/// generically well-conditioned subspaces. Shrinking a raw vector instead
/// produces exactly collinear spans on which the ridge term dominates.
fn generic_bundle_strategy() -> impl Strategy<Value = ModalityBundle> {
    (2usize..=4, 2usize..=6, any::<u64>()).prop_flat_map(|(m, n, seed)| (Just(m), Just(n), m + 1..=8usize, Just(seed))).prop_map(|(m, n, d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModalityBundle::new(
            (0..m)
                .map(|_| Matrix::new(n, d, (0..n * d).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect()).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

fn cfg() -> LossConfig {
    LossConfig {
        tau: 0.5,
        ..LossConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_never_expands(d in 1usize..=12, k in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::new(d, k, (0..d * k).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect()).unwrap();
        let z = Vector::new((0..d).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect()).unwrap();
        let zbar = ridge_project(&a, &z, 1e-8).unwrap();
        prop_assert!(zbar.norm() <= z.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn ridge_fixes_vectors_in_a_well_conditioned_span(k in 1usize..=4, extra in 0usize..=4, coef in proptest::collection::vec(-3.0f64..3.0, 4), seed in any::<u64>()) {
        let d = k + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::new(d, k, (0..d * k).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).unwrap();
        let mut gram = a.transpose().matmul(&a).unwrap();
        for i in 0..k {
            gram.set(i, i, gram.get(i, i) - 0.1);
        }
        prop_assume!(Cholesky::factor(&gram).is_ok());
        let zv = a.matmul(&Matrix::new(k, 1, coef[..k].to_vec()).unwrap()).unwrap();
        let z = Vector::new(zv.into_vec()).unwrap();
        let lambda = 1e-6;
        let zbar = ridge_project(&a, &z, lambda).unwrap();
        let diff: Vec<f64> = z.as_slice().iter().zip(zbar.as_slice()).map(|(x, y)| x - y).collect();
        // lambda / sigma_min^2 with sigma_min^2 >= 0.1
        prop_assert!(norm(&diff) <= 10.0 * lambda * z.norm() + 1e-12);
    }

    #[test]
    fn information_quantities_nonnegative(joint in joint_strategy(4)) {
        let m = joint.num_vars();
        prop_assert!(joint.total_correlation_raw() >= -1e-12);
        prop_assert!(joint.dual_total_correlation_raw() >= -1e-12);
        prop_assert!(joint.joint_entropy() >= -1e-12);
        for v in 0..m {
            let rest: Vec<usize> = (0..m).filter(|&u| u != v).collect();
            prop_assert!(joint.mutual_information(&[v], &rest).unwrap() >= -1e-12);
            prop_assert!(joint.entropy(&[v]).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn sandwich_decomposition_and_han(joint in joint_strategy(4)) {
        let m = joint.num_vars() as f64;
        let sum = joint.ova_mi_sum();
        let tc = joint.total_correlation_raw();
        let dtc = joint.dual_total_correlation_raw();
        prop_assert!((sum - tc - dtc).abs() <= 1e-9);
        prop_assert!(sum / m <= dtc + 1e-9);
        prop_assert!(dtc <= (m - 1.0) / m * sum + 1e-9);
        // brute-force leave-one-out form of Han's inequality
        let vars = joint.num_vars();
        let loo: f64 = (0..vars)
            .map(|v| joint.entropy(&(0..vars).filter(|&u| u != v).collect::<Vec<_>>()).unwrap())
            .sum();
        prop_assert!(joint.joint_entropy() <= loo / (m - 1.0) + 1e-9);
    }

    #[test]
    fn two_variables_collapse_to_mutual_information(joint in joint_strategy(2)) {
        let mi = joint.mutual_information(&[0], &[1]).unwrap();
        prop_assert!((joint.total_correlation_raw() - mi).abs() <= 1e-9);
        prop_assert!((joint.dual_total_correlation_raw() - mi).abs() <= 1e-9);
    }

    #[test]
    fn dv_bound_with_random_critics(joint in joint_strategy(3), critic_seed in any::<u64>()) {
        let b = joint.bipartite(&[0], &(1..joint.num_vars()).collect::<Vec<_>>()).unwrap();
        let mi = b.mutual_information();
        let mut rng = ChaCha8Rng::seed_from_u64(critic_seed);
        let critic: Vec<f64> = b.optimal_critic().iter().map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        prop_assert!(b.dv_bound(&critic).unwrap() <= mi + 1e-12);
        prop_assert!((b.dv_bound(&b.optimal_critic()).unwrap() - mi).abs() <= 1e-9);
    }

    #[test]
    fn gaussian_kl_tracks_squared_distance(m in 2usize..=5, d in 1usize..=8, var in 0.2f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || IsotropicGaussian::new(Vector::new((0..d).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect()).unwrap(), var).unwrap();
        let p = draw();
        let rest: Vec<_> = (0..m - 1).map(|_| draw()).collect();
        let q = gaussian_product(&rest).unwrap();
        let kl = gaussian_kl(&p, &q).unwrap();
        prop_assert!(kl >= -1e-12);
        let dist2: f64 = p.mean().as_slice().iter().zip(q.mean().as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
        let want = (m - 1) as f64 / (2.0 * var) * dist2;
        prop_assert!((kl - minimality_kl_constant(d, m) - want).abs() <= 1e-10 * want.max(1.0));
    }

    #[test]
    fn minimality_quadratic_and_sufficiency_scale_free(bundle in generic_bundle_strategy(), c in 0.1f64..5.0) {
        let v = losses::evaluate(&bundle, &cfg(), &[]).unwrap();
        prop_assert!(v.minimality >= 0.0);
        let scaled = ModalityBundle::new(bundle.batches().iter().map(|b| b.scaled(c)).collect()).unwrap();
        let vs = losses::evaluate(&scaled, &cfg(), &[]).unwrap();
        prop_assert!((vs.minimality - c * c * v.minimality).abs() <= 1e-9 * v.minimality.max(1.0) * c * c);
        prop_assert!((vs.sufficiency - v.sufficiency).abs() <= 1e-6);
    }

    #[test]
    fn minimality_vanishes_when_modalities_coincide(n in 2usize..=5, d in 2usize..=6, m in 2usize..=4, data in proptest::collection::vec(-1.0f64..1.0, 30)) {
        let base = Matrix::new(n, d, data[..n * d].to_vec()).unwrap();
        let same = ModalityBundle::new(vec![base.clone(); m]).unwrap();
        prop_assert_eq!(losses::evaluate(&same, &cfg(), &[]).unwrap().minimality, 0.0);
        let mut other = base.clone();
        other.set(0, 0, other.get(0, 0) + 0.5);
        let mut batches = vec![base; m];
        batches[m - 1] = other;
        let differ = ModalityBundle::new(batches).unwrap();
        prop_assert!(losses::evaluate(&differ, &cfg(), &[]).unwrap().minimality > 0.0);
    }

    #[test]
    fn modality_permutation_permutes_terms(bundle in bundle_strategy(), shift in 1usize..4) {
        let m = bundle.num_modalities();
        let order: Vec<usize> = (0..m).map(|i| (i + shift) % m).collect();
        let permuted = ModalityBundle::new(order.iter().map(|&j| bundle.batch(j).clone()).collect()).unwrap();
        let (a, b) = (losses::evaluate(&bundle, &cfg(), &[]).unwrap(), losses::evaluate(&permuted, &cfg(), &[]).unwrap());
        for (i, &j) in order.iter().enumerate() {
            prop_assert!((b.sufficiency_per_modality[i] - a.sufficiency_per_modality[j]).abs() <= 1e-12);
            prop_assert!((b.minimality_per_modality[i] - a.minimality_per_modality[j]).abs() <= 1e-12);
        }
        prop_assert!((a.total - b.total).abs() <= 1e-12);
    }

    #[test]
    fn total_strictly_increasing_in_beta(bundle in bundle_strategy(), b1 in 0.0f64..2.0, gap in 0.01f64..2.0) {
        let lo = losses::evaluate(&bundle, &LossConfig { beta: b1, ..cfg() }, &[]).unwrap();
        let hi = losses::evaluate(&bundle, &LossConfig { beta: b1 + gap, ..cfg() }, &[]).unwrap();
        prop_assume!(lo.minimality > 1e-9);
        prop_assert!(hi.total > lo.total);
    }

    #[test]
    fn map_bounds_and_monotone_transform(k in 2usize..=24, data in proptest::collection::vec(-1.0f64..1.0, 576)) {
        let scores = Matrix::new(k, k, data[..k * k].to_vec()).unwrap();
        let r = retrieval_map(&scores).unwrap();
        prop_assert!(r.map >= 1.0 / k as f64 - 1e-12 && r.map <= 1.0 + 1e-12);
        let affine = scores.scaled(3.0);
        let cubic = Matrix::new(k, k, scores.as_slice().iter().map(|x| x * x * x + x).collect()).unwrap();
        prop_assert_eq!(retrieval_map(&affine).unwrap().map, r.map);
        prop_assert_eq!(retrieval_map(&cubic).unwrap().map, r.map);
        prop_assert!(random_baseline_map(k) >= 1.0 / k as f64);
    }

    #[test]
    fn run_config_round_trips(steps in 1usize..5000, batch in 2usize..128, tau in 0.001f64..1.0, seeds in proptest::collection::vec(any::<u32>(), 1..4)) {
        let mut cfg = RunConfig::default();
        cfg.train.steps = steps;
        cfg.train.batch_size = batch;
        cfg.loss.tau = tau;
        cfg.seeds = seeds.into_iter().map(u64::from).collect();
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn shared_subexpressions_accumulate() {
    let x = Matrix::from_rows(&[vec![0.5, -1.5, 2.0]]).unwrap();
    let mut g = Graph::new();
    let v = g.leaf(x.clone());
    let prod = g.mul(v, v).unwrap();
    let root = g.sum(prod);
    let via_mul = g.backward(root).unwrap().get_or_zeros(v, &x);

    let mut g = Graph::new();
    let v = g.leaf(x.clone());
    let sq = g.square(v);
    let root = g.sum(sq);
    let via_square = g.backward(root).unwrap().get_or_zeros(v, &x);
    assert_eq!(via_mul, via_square);
    assert_eq!(via_mul.as_slice(), &[1.0, -3.0, 4.0]);
}

#[test]
fn adam_trajectories_are_bitwise_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batches: Vec<Matrix> = (0..3)
            .map(|_| Matrix::new(4, 5, (0..20).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).unwrap())
            .collect();
        let mut params = batches;
        let mut state = AdamState::new(AdamConfig::default(), &params.iter().collect::<Vec<_>>());
        for _ in 0..25 {
            let mut g = Graph::new();
            let vars: Vec<_> = params.iter().map(|p| g.leaf(p.clone())).collect();
            let root = losses::total_loss(&mut g, &vars, &cfg(), &[]).unwrap().total;
            let grads = g.backward(root).unwrap();
            let gs: Vec<Matrix> = vars.iter().zip(&params).map(|(&v, p)| grads.get_or_zeros(v, p)).collect();
            state.step(&mut params.iter_mut().collect::<Vec<_>>(), &gs).unwrap();
        }
        params
    };
    assert_eq!(run(), run());
}
