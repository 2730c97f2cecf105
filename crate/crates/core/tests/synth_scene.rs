use l2h_core::fusion::{harmonize, intersect_products};
use l2h_core::grid::RasterGrid;
use l2h_core::scheme::TR;
use l2h_core::synth::{generate, majority_downsample, Scene, SceneSpec, COARSE_FACTOR};
use l2h_core::UNLABELED;

fn harmonized(scene: &Scene) -> Vec<RasterGrid> {
    scene
        .products
        .iter()
        .zip(&scene.tables)
        .map(|(p, t)| harmonize(p, t).unwrap())
        .collect()
}

fn roadless(width: usize, noise: f64, seed: u64) -> SceneSpec {
    SceneSpec {
        width,
        height: width,
        roads: 0,
        label_noise: noise,
        seed,
        ..SceneSpec::easy()
    }
}

#[test]
fn class_fractions_within_two_percent() {
    for (seed, fractions) in [(7u64, vec![0.2; 5]), (8, vec![0.4, 0.25, 0.15, 0.1, 0.1])] {
        let spec = SceneSpec {
            fractions: fractions.clone(),
            ..roadless(1000, 0.2, seed)
        };
        let scene = generate(&spec).unwrap();
        let truth = scene.truth.classes().unwrap();
        for (&class, &target) in spec.classes.iter().zip(&fractions) {
            let got = truth.iter().filter(|&&v| v == class).count() as f64 / truth.len() as f64;
            assert!(
                (got - target).abs() <= 0.02,
                "seed {seed} class {class}: {got} vs {target}"
            );
        }
    }
}

#[test]
fn stable_fraction_matches_closed_form_at_delta_03() {
    let delta = 0.3;
    let scene = generate(&roadless(1000, delta, 11)).unwrap();
    let h = harmonized(&scene);
    let stable = intersect_products(&h[0], &h[1], &h[2]).unwrap();
    let data = stable.classes().unwrap();
    let n = data.len() as f64;
    let measured = data.iter().filter(|&&v| v != UNLABELED).count() as f64 / n;
    // all three keep the true class, or all three move to the same other class
    let k = 5.0;
    let expected = (1.0 - delta).powi(3) + delta.powi(3) / (k - 1.0f64).powi(2);
    let se = (expected * (1.0 - expected) / n).sqrt();
    assert!(
        (measured - expected).abs() <= 3.0 * se,
        "measured {measured}, expected {expected} +- {}",
        3.0 * se
    );
}

#[test]
fn noiseless_products_reproduce_majority_truth() {
    let scene = generate(&roadless(300, 0.0, 3)).unwrap();
    let majority = majority_downsample(&scene.truth, COARSE_FACTOR).unwrap();
    let h = harmonized(&scene);
    for p in &h {
        assert_eq!(p.classes().unwrap(), majority.classes().unwrap());
    }
    let stable = intersect_products(&h[0], &h[1], &h[2]).unwrap();
    assert!(stable.classes().unwrap().iter().all(|&v| v != UNLABELED));
    assert_eq!(stable.classes().unwrap(), majority.classes().unwrap());
}

#[test]
fn image_follows_class_means() {
    let spec = roadless(200, 0.2, 5);
    let scene = generate(&spec).unwrap();
    let truth = scene.truth.classes().unwrap();
    let bands = scene.image.band_values().unwrap();
    let plane = truth.len();
    for (i, &class) in spec.classes.iter().enumerate() {
        let members: Vec<usize> = (0..plane).filter(|&p| truth[p] == class).collect();
        assert!(members.len() > 100);
        for b in 0..3 {
            let mean = members
                .iter()
                .map(|&p| f64::from(bands[b * plane + p]))
                .sum::<f64>()
                / members.len() as f64;
            assert!(
                (mean - f64::from(spec.class_means[i][b])).abs() < 0.01,
                "class {class} band {b}: {mean}"
            );
        }
    }
}

#[test]
fn roads_are_burned_into_truth() {
    let spec = SceneSpec {
        width: 300,
        height: 300,
        ..SceneSpec::easy()
    };
    let scene = generate(&spec).unwrap();
    assert_eq!(scene.roads.len(), spec.roads);
    assert!(scene.truth.classes().unwrap().contains(&TR));
    assert_eq!(scene.image.bands(), 3);
    assert_eq!(scene.products[0].width(), 30);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(generate(&SceneSpec {
        width: 105,
        ..SceneSpec::easy()
    })
    .is_err());
    assert!(generate(&SceneSpec {
        label_noise: 1.0,
        ..SceneSpec::easy()
    })
    .is_err());
    let crowded = SceneSpec {
        class_means: vec![
            [0.5, 0.5, 0.5],
            [0.52, 0.5, 0.5],
            [0.1, 0.1, 0.1],
            [0.9, 0.9, 0.9],
            [0.1, 0.9, 0.1],
        ],
        ..SceneSpec::easy()
    };
    assert!(generate(&crowded).is_err());
}
