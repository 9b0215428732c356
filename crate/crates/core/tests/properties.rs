mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use watchdog_core::bssn::{allocate_focus, compress_inputs, invert, partition, run_round};
use watchdog_core::geometry::IntervalBox;
use watchdog_core::scenario::Scenario;
use watchdog_core::shepherd::{assign_regions, PerformanceIndicators, RegionAssignment, Shepherd, ShepherdConfig};
use watchdog_core::sut::{act, GateOutcome, LinearMap, SutKind, SutSpec, Verdict};
use watchdog_core::{
    make_reference_sut, Assignment, BssnParams, Category, Cluster, ConstraintSystem, GateState, SpaceTag, VariableSpace,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn linear_sut(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> watchdog_core::SutHandle {
    let n_in = matrix[0].len();
    let input = VariableSpace::reals("x", &vec![(0.0, 1.0); n_in]).unwrap();
    let bounds: Vec<(f64, f64)> = matrix
        .iter()
        .zip(&offset)
        .map(|(row, b)| {
            let lo: f64 = row.iter().map(|a| a.min(0.0)).sum::<f64>() + b;
            let hi: f64 = row.iter().map(|a| a.max(0.0)).sum::<f64>() + b;
            (lo, hi.max(lo + 1e-9))
        })
        .collect();
    let action = VariableSpace::reals("v", &bounds).unwrap();
    make_reference_sut(&SutSpec::new(
        input,
        action,
        SutKind::Linear(LinearMap { matrix, offset }),
    ))
    .unwrap()
}

fn whole(sut: &watchdog_core::SutHandle, label: Category) -> Cluster {
    Cluster {
        space: SpaceTag::Input,
        bounds: sut.input_space().bounds(),
        label,
        confidence: 0.0,
        support: 0,
        born_t: 1,
        last_confirmed_t: 1,
        stale: false,
        unsettled: true,
    }
}

fn indicators() -> impl Strategy<Value = PerformanceIndicators> {
    (
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..=1.0f64,
        0u64..300_000,
        0u64..50,
        0u64..12,
    )
        .prop_map(|(sv, hv, pm, isr, spend, blocks, stag)| PerformanceIndicators {
            settled_volume: sv,
            h_prime_volume: hv.min(sv),
            purity_mean: pm,
            inversion_success_rate: isr,
            compute_spend: spend,
            gate_blocks: blocks,
            stagnation: stag,
        })
}

fn assert_tiles(parent: &IntervalBox, pieces: &[IntervalBox]) -> Result<(), TestCaseError> {
    let total: f64 = pieces.iter().map(IntervalBox::volume).sum();
    prop_assert!(
        (total - parent.volume()).abs() <= 1e-12 * parent.volume().max(1.0),
        "volume {total} vs {}",
        parent.volume()
    );
    for (i, a) in pieces.iter().enumerate() {
        prop_assert!(parent.contains_box(a));
        for b in &pieces[i + 1..] {
            prop_assert!(a.overlap_volume(b) <= 1e-15, "{a:?} overlaps {b:?}");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checker_agrees_with_the_model(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 5, 2, 2, 6);
        let system = model.parse();
        for _ in 0..64 {
            let p = model.random_point(&mut r);
            common::agree(&model, &system, &p).map_err(TestCaseError::fail)?;
        }
    }

    #[test]
    fn classification_laws(seed in any::<u64>(), k in 0.25f64..4.0) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 5, 2, 2, 6);
        let system = model.parse();
        for _ in 0..16 {
            let p = model.random_point(&mut r);
            common::check_laws(&system, &model.assignment(&p), k).map_err(TestCaseError::fail)?;
        }
    }

    #[test]
    fn partition_leaves_tile_the_parent(seed in any::<u64>(), cut in 0.05f64..0.95, slope in -2.0f64..2.0) {
        let mut sut = linear_sut(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let text = format!("lr hard v0 + {slope:?}*v1 <= {cut:?}");
        let checker = ConstraintSystem::parse_with_space(&text, sut.action_space().clone()).unwrap();
        let params = BssnParams {
            confidence_samples: 12,
            max_partition_depth: 8,
            min_box_fraction: 1.0 / 32.0,
            ..BssnParams::default()
        };
        let root = whole(&sut, Category::Hs);
        let leaves = partition(&root, &mut sut, &checker, &params, 1, &mut rng(seed));
        let boxes: Vec<IntervalBox> = leaves.iter().map(|c| c.bounds.clone()).collect();
        assert_tiles(&root.bounds, &boxes)?;
        for leaf in &leaves {
            prop_assert!(leaf.unsettled || leaf.confidence >= params.epsilon);
        }
    }

    #[test]
    fn compressed_boxes_are_label_hulls(seed in any::<u64>(), cut in 0.1f64..0.9) {
        let mut sut = linear_sut(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let text = format!("lr hard v0 <= {cut:?}\nlr soft weight=1.0 v1 <= 0.5");
        let checker = ConstraintSystem::parse_with_space(&text, sut.action_space().clone()).unwrap();
        let params = BssnParams { round_budget: 80, ..BssnParams::default() };
        let region = sut.input_space().bounds();
        let round = run_round(&params, &mut sut, &checker, &region, &[], 1, &mut rng(seed));
        let clusters = compress_inputs(&round, &params);
        for label in Category::ALL {
            let pts: Vec<Vec<f64>> = round
                .inputs
                .iter()
                .zip(&round.classifications)
                .filter(|(_, c)| c.category == label)
                .map(|(x, _)| x.coords())
                .collect();
            let found: Vec<&Cluster> = clusters.iter().filter(|c| c.label == label).collect();
            if pts.is_empty() {
                prop_assert!(found.is_empty());
                continue;
            }
            prop_assert_eq!(found.len(), 1);
            for d in 0..2 {
                let lo = pts.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(found[0].bounds.lo()[d], lo);
                prop_assert_eq!(found[0].bounds.hi()[d], hi);
            }
        }
    }

    #[test]
    fn focus_follows_severity(budget in 0usize..2000, present in any::<[bool; 3]>()) {
        let out = allocate_focus(budget, present);
        let any = present.iter().any(|&p| p);
        prop_assert_eq!(out.iter().sum::<usize>(), if any { budget } else { 0 });
        for i in 0..3 {
            if !present[i] {
                prop_assert_eq!(out[i], 0);
            }
            for j in 0..3 {
                if present[i] && present[j] && Category::ALL[i].priority() > Category::ALL[j].priority() {
                    prop_assert!(out[i] >= out[j], "{out:?} for {present:?}");
                }
            }
        }
    }

    #[test]
    fn inversions_land_in_their_targets(seed in any::<u64>(), a in 0.5f64..3.0, b in -2.0f64..2.0, u in 0.05f64..0.95, w in 0.05f64..0.95) {
        let mut sut = linear_sut(vec![vec![a, 0.0], vec![b, 1.0]], vec![1.0, 0.0]);
        let x = [u, w];
        let (v, _) = sut.probe_coords(&x).unwrap();
        let target = IntervalBox::new(v.iter().map(|c| c - 0.02).collect(), v.iter().map(|c| c + 0.02).collect()).unwrap();
        let region = sut.input_space().bounds();
        if let Ok(inv) = invert(&mut sut, &region, &target, 2000, &mut rng(seed)) {
            prop_assert!(inv.confirmed);
            let (again, _) = sut.probe_coords(&inv.input.coords()).unwrap();
            prop_assert!(target.contains_with_tolerance(&again, 1e-6));
        }
    }

    #[test]
    fn shepherd_keeps_parameters_in_range(ind in indicators(), eps in 0.55f64..0.99, budget in 1u64..5000, temp in 0.0f64..1.0) {
        let cfg = ShepherdConfig::default();
        let start = BssnParams { epsilon: eps, inversion_budget: budget, explore_temperature: temp, ..BssnParams::default() };
        let shepherd = Shepherd::new(cfg.clone(), vec![start.clone()]);
        let mut p = start.clone();
        for _ in 0..20 {
            p = shepherd.influence(std::slice::from_ref(&p), &[ind])[0].params.clone();
            prop_assert!(p.epsilon >= cfg.epsilon_min && p.epsilon <= cfg.epsilon_max);
            prop_assert!(p.inversion_budget >= 1 && p.inversion_budget <= budget * cfg.budget_cap_factor);
            prop_assert!(p.explore_temperature <= cfg.temperature_cap.max(temp));
            prop_assert!(p.validate().is_ok());
        }
    }

    #[test]
    fn nominal_indicators_change_nothing(eps in 0.55f64..0.99, budget in 1u64..5000, temp in 0.0f64..1.0) {
        let start = BssnParams { epsilon: eps, inversion_budget: budget, explore_temperature: temp, ..BssnParams::default() };
        let shepherd = Shepherd::new(ShepherdConfig::default(), vec![start.clone()]);
        let out = &shepherd.influence(std::slice::from_ref(&start), &[PerformanceIndicators::nominal()])[0];
        prop_assert!(out.fired.is_empty());
        prop_assert_eq!(&out.params, &start);
    }

    #[test]
    fn cost_pressure_never_raises_epsilon(ind in indicators(), eps in 0.55f64..0.99) {
        let cfg = ShepherdConfig::default();
        let start = BssnParams { epsilon: eps, ..BssnParams::default() };
        let shepherd = Shepherd::new(cfg.clone(), vec![start.clone()]);
        let loaded = PerformanceIndicators { compute_spend: cfg.cost_threshold + 1 + ind.compute_spend, ..ind };
        let out = &shepherd.influence(std::slice::from_ref(&start), &[loaded])[0];
        prop_assert!(out.params.epsilon <= start.epsilon);
    }

    #[test]
    fn regions_tile_the_input_space(agents in 1usize..7, settled in proptest::collection::vec(0.0f64..=1.0, 1..7), tol in 0.0f64..0.5) {
        let global = IntervalBox::from_bounds(&[(0.0, 1.0), (-2.0, 3.0)]).unwrap();
        let first = assign_regions(settled.len(), &global, None, tol);
        assert_tiles(&global, &first.boxes)?;
        let inds: Vec<PerformanceIndicators> = settled
            .iter()
            .map(|&s| PerformanceIndicators { settled_volume: s, ..PerformanceIndicators::nominal() })
            .collect();
        let next: RegionAssignment = assign_regions(agents, &global, Some((&first, &inds)), tol);
        prop_assert_eq!(next.len(), agents);
        assert_tiles(&global, &next.boxes)?;
    }

    #[test]
    fn gate_never_releases_unpermissible_actions(seed in any::<u64>(), soft in any::<bool>()) {
        let scenario = Scenario::two_row(seed);
        let mut sut = make_reference_sut(&scenario.epoch_sut(watchdog_core::scenario::Epoch::Pre)).unwrap();
        let mut gate = GateState::new(watchdog_core::sut::GatePolicy { block_soft_violations: soft });
        let mut r = rng(seed);
        for i in 0..60 {
            if i == 40 {
                gate.shutdown();
            }
            let x = Assignment::reals(&[r.random::<f64>(), r.random::<f64>()]);
            let out = act(&mut sut, &x, &mut gate, &scenario.checker).unwrap();
            if i >= 40 {
                prop_assert!(matches!(out, GateOutcome::Blocked(_)));
            }
        }
        for e in gate.events() {
            if e.verdict == Verdict::Released {
                let c = e.classification.as_ref().unwrap();
                prop_assert!(c.category != Category::HPrime);
                prop_assert!(!(soft && c.category == Category::HsPrime));
            }
        }
    }

    #[test]
    fn test_rounds_never_actuate(seed in any::<u64>(), budget in 1usize..200) {
        let scenario = Scenario::two_row(seed);
        let mut sut = make_reference_sut(&scenario.learning_sut(u64::MAX)).unwrap();
        let params = BssnParams { round_budget: budget, ..BssnParams::default() };
        let region = sut.input_space().bounds();
        let round = run_round(&params, &mut sut, &scenario.checker, &region, &[], 1, &mut rng(seed));
        prop_assert_eq!(round.len(), budget);
        prop_assert_eq!(sut.act_count(), 0);
        prop_assert_eq!(sut.probe_count(), budget as u64);
    }
}
