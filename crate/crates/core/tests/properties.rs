use pmb_nll::assignment::{build_cost_matrix, enumerate_all, murty_k_best};
use pmb_nll::io::predictions::{read_predictions, write_predictions, Predictions, RequestedFamily};
use pmb_nll::ppp::build_pmb;
use pmb_nll::scoring::{decompose, mb_nll, pmb_nll};
use pmb_nll::synth::{random_box, random_box_dist, random_class, random_family, random_instance, InstanceConfig};
use pmb_nll::types::Category;
use pmb_nll::{
    BernoulliComponent, BoundingBox, BoxDistribution, ClassDistribution, GroundTruthObject, IntensityComponent,
    LabelMap, PmbDensity, PoissonIntensity, Target,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (PmbDensity, Vec<GroundTruthObject>) {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), &InstanceConfig::default())
}

fn feasible_count(pmb: &PmbDensity, gts: &[GroundTruthObject]) -> usize {
    enumerate_all(&build_cost_matrix(pmb, gts).unwrap())
        .unwrap()
        .len()
        .max(1)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn order_of_predictions_and_objects_is_irrelevant(seed in any::<u64>()) {
        let (pmb, gts) = instance(seed);
        let q = feasible_count(&pmb, &gts);
        let base = pmb_nll(&pmb, &gts, q).unwrap().nll;
        let base_best = pmb_nll(&pmb, &gts, 1).unwrap().nll;

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        let mut bern = pmb.bernoullis.clone();
        bern.shuffle(&mut rng);
        let mut shuffled_gts = gts.clone();
        shuffled_gts.shuffle(&mut rng);
        let shuffled = PmbDensity::new(bern, pmb.ppp.clone());
        let nll = pmb_nll(&shuffled, &shuffled_gts, q).unwrap().nll;
        prop_assert!(close(base, nll, 1e-9), "{} vs {}", base, nll);
        let best = pmb_nll(&shuffled, &shuffled_gts, 1).unwrap().nll;
        prop_assert!(close(base_best, best, 1e-9), "{} vs {}", base_best, best);
    }

    #[test]
    fn nll_never_increases_with_q(seed in any::<u64>()) {
        let (pmb, gts) = instance(seed);
        let mut last = f64::INFINITY;
        for q in [1, 2, 3, 5, 8, 13, 25, 60] {
            let nll = pmb_nll(&pmb, &gts, q).unwrap().nll;
            prop_assert!(nll <= last);
            last = nll;
        }
    }

    #[test]
    fn murty_prefix_matches_enumeration(seed in any::<u64>(), k in 1usize..40) {
        let (pmb, gts) = instance(seed);
        let costs = build_cost_matrix(&pmb, &gts).unwrap();
        let all = enumerate_all(&costs).unwrap();
        let murty = murty_k_best(&costs, k);
        prop_assert_eq!(murty.len(), k.min(all.len()));
        for (a, b) in murty.iter().zip(&all) {
            prop_assert!((a.total_cost - b.total_cost).abs() <= 1e-9);
        }
    }

    #[test]
    fn decomposition_sums_to_single_assignment_nll(seed in any::<u64>()) {
        let (pmb, gts) = instance(seed);
        let rep = pmb_nll(&pmb, &gts, 1).unwrap();
        match decompose(&pmb, &gts).unwrap() {
            Some(d) => {
                prop_assert!((d.total() - rep.nll).abs() <= 1e-9);
                prop_assert_eq!(d.matched + d.ppp_matched, gts.len());
                prop_assert_eq!(d.matched + d.unmatched, pmb.bernoullis.len());
            }
            None => prop_assert_eq!(rep.nll, f64::INFINITY),
        }
    }

    #[test]
    fn score_is_lowest_at_the_true_box(
        offset in prop::array::uniform4(-6.0f64..6.0),
        scale in 0.5f64..5.0,
        r in 0.05f64..0.95,
    ) {
        let truth = BoundingBox::new(20.0, 30.0, 60.0, 90.0).unwrap();
        let gts = [GroundTruthObject::new(0, truth)];
        let score = |shift: [f64; 4]| {
            let a = truth.to_array();
            let mean = BoundingBox::new(a[0] + shift[0], a[1] + shift[1], a[2] + shift[2], a[3] + shift[3]).unwrap();
            let comp = BernoulliComponent::new(
                r,
                ClassDistribution::new(vec![1.0]).unwrap(),
                BoxDistribution::laplace(mean, [scale; 4]).unwrap(),
            )
            .unwrap();
            mb_nll(&[comp], &gts, 25).unwrap().nll
        };
        prop_assert!(score([0.0; 4]) <= score(offset));
    }

    #[test]
    fn moving_an_unmatched_low_existence_component_into_the_intensity(seed in any::<u64>(), r in 0.001f64..=0.1) {
        let (pmb, gts) = instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let mean = random_box(&mut rng, 100.0, 10.0, 40.0);
        let family = random_family(&mut rng);
        let extra = BernoulliComponent::new(r, random_class(&mut rng, 3), random_box_dist(&mut rng, family, mean, (1.0, 8.0))).unwrap();
        let mut bern = pmb.bernoullis.clone();
        bern.push(extra.clone());
        let with = PmbDensity::new(bern, pmb.ppp.clone());
        let best = pmb_nll(&with, &gts, 1).unwrap();
        let extra_index = with.bernoullis.len() - 1;
        let unmatched = best
            .best_assignment
            .as_ref()
            .is_some_and(|a| !a.gt_to_target.contains(&Target::Bernoulli(extra_index)));
        prop_assume!(unmatched);

        let mut comps = pmb.ppp.components().to_vec();
        comps.push(IntensityComponent { weight: r, cls: extra.class_dist().clone(), bbox: extra.box_dist().clone() });
        let moved = PmbDensity::new(pmb.bernoullis.clone(), PoissonIntensity::new(comps).unwrap());
        let a = pmb_nll(&with, &gts, feasible_count(&with, &gts)).unwrap().nll;
        let b = pmb_nll(&moved, &gts, feasible_count(&moved, &gts)).unwrap().nll;
        prop_assert!(a.is_finite() == b.is_finite());
        if a.is_finite() {
            prop_assert!((a - b).abs() <= 0.06, "moved component changed NLL by {}", (a - b).abs());
        }
    }

    #[test]
    fn splitting_conserves_total_existence(rs in prop::collection::vec(0.0f64..=1.0, 0..40), t in 0.0f64..=1.0) {
        let preds: Vec<BernoulliComponent> = rs
            .iter()
            .map(|&r| {
                BernoulliComponent::new(
                    r,
                    ClassDistribution::new(vec![1.0]).unwrap(),
                    BoxDistribution::laplace(BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), [1.0; 4]).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let pmb = build_pmb(&preds, t).unwrap();
        let before: f64 = rs.iter().sum();
        let after = pmb.bernoullis.iter().map(|b| b.existence()).sum::<f64>() + pmb.ppp.expected_cardinality();
        prop_assert!((before - after).abs() <= 1e-12);
        prop_assert!(pmb.bernoullis.iter().all(|b| b.existence() >= t));
        prop_assert!(pmb.ppp.components().iter().all(|c| c.weight < t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn predictions_round_trip_through_files(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = LabelMap::new((0..4).map(|k| Category { id: 10 + k, name: format!("c{k}") }).collect()).unwrap();
        let mut preds = Predictions::new();
        for image in 0..rng.random_range(0..5u64) {
            let dets = (0..rng.random_range(0..6))
                .map(|_| {
                    let family = random_family(&mut rng);
                    let mean = random_box(&mut rng, 500.0, 5.0, 100.0);
                    BernoulliComponent::new(
                        rng.random_range(0.0..=1.0),
                        random_class(&mut rng, 4),
                        random_box_dist(&mut rng, family, mean, (0.1, 30.0)),
                    )
                    .unwrap()
                })
                .collect();
            preds.insert(image * 7 + 1, dets);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.json");
        write_predictions(&path, &preds).unwrap();
        let back = read_predictions(&path, &labels, RequestedFamily::Native).unwrap();
        prop_assert_eq!(back, preds);
    }
}

#[test]
fn prediction_directory_mode() {
    let labels = LabelMap::new(vec![Category {
        id: 1,
        name: "a".into(),
    }])
    .unwrap();
    let comp = BernoulliComponent::new(
        0.5,
        ClassDistribution::new(vec![1.0]).unwrap(),
        BoxDistribution::laplace(BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap(), [1.0; 4]).unwrap(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    for id in [3u64, 9] {
        let p = Predictions::from([(id, vec![comp.clone()])]);
        write_predictions(&dir.path().join(format!("{id}.json")), &p).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let all = read_predictions(dir.path(), &labels, RequestedFamily::Laplace).unwrap();
    assert_eq!(all.keys().copied().collect::<Vec<_>>(), vec![3, 9]);

    // the same image in two files is rejected
    let p = Predictions::from([(3u64, vec![comp])]);
    write_predictions(&dir.path().join("dup.json"), &p).unwrap();
    assert!(read_predictions(dir.path(), &labels, RequestedFamily::Laplace).is_err());
}
