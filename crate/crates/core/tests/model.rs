use fedsel_core::data::SampleSet;
use fedsel_core::model::{accuracy, init_params, loss, loss_and_grad, ModelSpec, ParamVector};
use fedsel_core::rng::{self, Domain};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_batch<R: Rng>(rng: &mut R, dim: usize, classes: usize, n: usize) -> SampleSet {
    let mut set = SampleSet::new(dim);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        set.push(&x, rng.random_range(0..classes)).unwrap();
    }
    set
}

fn random_params<R: Rng>(rng: &mut R, spec: &ModelSpec, scale: f64) -> ParamVector {
    let values = (0..spec.num_params())
        .map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z })
        .collect::<Vec<f64>>();
    ParamVector::from_values(spec.layout(), values).unwrap()
}

/// Central difference of the batch loss along `dir` with step `h`.
fn numeric_directional(spec: &ModelSpec, w: &ParamVector, batch: &SampleSet, dir: &[f64], h: f64) -> f64 {
    let shifted = |sign: f64| {
        let v = w.values().iter().zip(dir).map(|(a, d)| a + sign * h * d).collect();
        ParamVector::from_values(w.layout().clone(), v).unwrap()
    };
    (loss(spec, &shifted(1.0), batch).unwrap() - loss(spec, &shifted(-1.0), batch).unwrap()) / (2.0 * h)
}

fn gradient_check(spec: &ModelSpec, instances: usize, seed: u64) {
    let mut rng = rng::stream(seed, Domain::Init, 99, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..8);
        let batch = random_batch(&mut rng, spec.input_dim, spec.num_classes, n);
        let w = random_params(&mut rng, spec, 0.5);
        let grad = loss_and_grad(spec, &w, &batch).unwrap().gradient;
        for _ in 0..10 {
            let dir: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let analytic: f64 = grad.values().iter().zip(&dir).map(|(g, d)| g * d).sum();
            let numeric = numeric_directional(spec, &w, &batch, &dir, 1e-5);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    gradient_check(&ModelSpec::logistic(7, 4), 100, 1);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    gradient_check(&ModelSpec::mlp(6, [5, 4], 3), 100, 2);
}

#[test]
fn duplicated_batch_has_the_same_mean() {
    let spec = ModelSpec::mlp(5, [6, 4], 3);
    let mut rng = rng::stream(3, Domain::Init, 0, 0);
    let w = random_params(&mut rng, &spec, 0.7);
    let batch = random_batch(&mut rng, 5, 3, 9);
    let doubled = SampleSet::concat(&[&batch, &batch]).unwrap();
    let a = loss_and_grad(&spec, &w, &batch).unwrap();
    let b = loss_and_grad(&spec, &w, &doubled).unwrap();
    assert!((a.mean_loss - b.mean_loss).abs() < 1e-14);
    for (x, y) in a.gradient.values().iter().zip(b.gradient.values()) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn loss_is_finite_for_huge_logits() {
    let spec = ModelSpec::mlp(3, [4, 4], 5);
    let mut rng = rng::stream(4, Domain::Init, 0, 0);
    let w = random_params(&mut rng, &spec, 60.0);
    let batch = random_batch(&mut rng, 3, 5, 16);
    let ev = loss_and_grad(&spec, &w, &batch).unwrap();
    assert!(ev.mean_loss.is_finite());
    assert!(ev.gradient.is_finite());
}

#[test]
fn accuracy_on_noise_labels_is_near_chance() {
    // 10^4 uniformly random labels over 10 classes: any fixed classifier is
    // right with probability 0.1, so the binomial 99.99% interval is
    // roughly 0.1 +- 0.012, well inside [0.07, 0.13].
    let spec = ModelSpec::logistic(20, 10);
    let mut rng = rng::stream(5, Domain::Init, 0, 0);
    let train = random_batch(&mut rng, 20, 10, 200);
    let mut w = init_params(&spec, 0).unwrap();
    for _ in 0..200 {
        let g = loss_and_grad(&spec, &w, &train).unwrap().gradient;
        w.axpy(-0.5, &g).unwrap();
    }
    let fresh = random_batch(&mut rng, 20, 10, 10_000);
    let acc = accuracy(&spec, &w, &fresh).unwrap();
    assert!((0.07..=0.13).contains(&acc), "{acc}");
}

#[test]
fn separable_fixture_is_fully_accurate() {
    let spec = ModelSpec::logistic(2, 2);
    let mut set = SampleSet::new(2);
    for i in 0..20 {
        let t = i as f64 / 10.0;
        set.push(&[1.0 + t, 0.5], 0).unwrap();
        set.push(&[-1.0 - t, 0.5], 1).unwrap();
    }
    let mut w = init_params(&spec, 0).unwrap();
    for _ in 0..100 {
        let g = loss_and_grad(&spec, &w, &set).unwrap().gradient;
        w.axpy(-1.0, &g).unwrap();
    }
    assert_eq!(accuracy(&spec, &w, &set).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_permutation_invariant_and_a_mean(seed in any::<u64>(), n1 in 1usize..12, n2 in 1usize..12) {
        let spec = ModelSpec::mlp(4, [5, 3], 3);
        let mut rng = rng::stream(seed, Domain::Init, 1, 0);
        let w = random_params(&mut rng, &spec, 0.8);
        let a = random_batch(&mut rng, 4, 3, n1);
        let b = random_batch(&mut rng, 4, 3, n2);
        let joined = SampleSet::concat(&[&a, &b]).unwrap();
        let la = loss(&spec, &w, &a).unwrap();
        let lb = loss(&spec, &w, &b).unwrap();
        let lj = loss(&spec, &w, &joined).unwrap();
        let weighted = (n1 as f64 * la + n2 as f64 * lb) / (n1 + n2) as f64;
        prop_assert!((lj - weighted).abs() < 1e-12);

        let mut order: Vec<usize> = (0..joined.len()).collect();
        order.reverse();
        let permuted = joined.subset(&order);
        prop_assert!((loss(&spec, &w, &permuted).unwrap() - lj).abs() < 1e-12);
    }
}
