use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcgan::gan::{
    evaluate, grad_check, lambda_terms, rcgan_terms, Activation, Generator, LossTerms, Phi, ProjectionDiscriminator,
};
use rcgan::ChannelSpec;

const EPS: f64 = 1e-5;

fn nets(seed: u64, m: usize, labels: usize) -> (Generator, ProjectionDiscriminator) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Generator::new(3, m, labels, &[7, 5], 2, Activation::Tanh, &mut rng);
    let d = ProjectionDiscriminator::new(2, labels, &[6], 4, Activation::Tanh, Activation::Tanh, 1.0, &mut rng);
    (g, d)
}

fn batch(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..4).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

/// Worst relative error over both parameter sets.
fn check(terms: &LossTerms, g: &Generator, d: &ProjectionDiscriminator, phi: Phi) -> f64 {
    let eval = evaluate(terms, g, d, phi, true, true);
    let rd = grad_check(
        d.params(),
        |p| {
            let mut d2 = d.clone();
            d2.set_params(p);
            evaluate(terms, g, &d2, phi, false, false).value
        },
        eval.grad_d.as_ref().unwrap(),
        EPS,
    )
    .unwrap();
    let rg = grad_check(
        g.params(),
        |p| {
            let mut g2 = g.clone();
            g2.set_params(p);
            evaluate(terms, &g2, d, phi, false, false).value
        },
        eval.grad_g.as_ref().unwrap(),
        EPS,
    )
    .unwrap();
    rd.max_rel_error.max(rg.max_rel_error)
}

#[test]
fn corrupted_label_loss_gradients() {
    let c = ChannelSpec::missing(&[0.3, 0.6, 0.1]).unwrap().build().unwrap();
    for seed in 0..5 {
        let (g, d) = nets(seed, 3, 4);
        let xs = batch(100 + seed);
        let real: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 4)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = rcgan_terms(&real, &c, &[0.2, 0.5, 0.3], 3, 4, &mut rng).unwrap();
        for phi in [Phi::Linear, Phi::Log] {
            let err = check(&terms, &g, &d, phi);
            assert!(err < 1e-4, "seed {seed} {phi:?}: {err}");
        }
    }
}

#[test]
fn few_label_loss_gradients() {
    for seed in 0..5 {
        let (g, d) = nets(seed, 3, 4);
        let xs = batch(200 + seed);
        let all: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let labeled: Vec<(&[f64], usize)> = vec![(&xs[0], 0), (&xs[1], 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = lambda_terms(&all, &labeled, 0.1, 3, &[0.3, 0.3, 0.4], 3, 4, 2, &mut rng).unwrap();
        for phi in [Phi::Linear, Phi::Log] {
            let err = check(&terms, &g, &d, phi);
            assert!(err < 1e-4, "seed {seed} {phi:?}: {err}");
        }
    }
}

#[test]
fn sign_flipped_layer_is_caught() {
    let c = ChannelSpec::missing_uniform(3, 0.5).unwrap().build().unwrap();
    let (g, d) = nets(9, 3, 4);
    let xs = batch(9);
    let real: Vec<(&[f64], usize)> = xs.iter().map(|x| (x.as_slice(), 3)).collect();
    let terms = rcgan_terms(&real, &c, &[0.2, 0.5, 0.3], 3, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let mut grad = evaluate(&terms, &g, &d, Phi::Log, false, true).grad_g.unwrap();
    let (offset, len) = g.net().layer_ranges()[1];
    for v in &mut grad[offset..offset + len] {
        *v = -*v;
    }
    let report = grad_check(
        g.params(),
        |p| {
            let mut g2 = g.clone();
            g2.set_params(p);
            evaluate(&terms, &g2, &d, Phi::Log, false, false).value
        },
        &grad,
        EPS,
    )
    .unwrap();
    assert!((report.max_rel_error - 2.0).abs() < 1e-3, "{report:?}");
    assert!(report.worst_index >= offset && report.worst_index < offset + len);
}
