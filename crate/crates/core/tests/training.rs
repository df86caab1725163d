use poplab::influence::{influence_of_group, InfluenceReport};
use poplab::objectives::{FrConfig, LossKind};
use poplab::population::kmeans_groups;
use poplab::synthesis::{gaussian_blobs, noisify, sym_transition};
use poplab::trainer::{
    batch_objective, noisy_priors, train, LrSchedule, Model, ModelSpec, TrainConfig,
};
use poplab::{Error, GroupAssignment, LabeledCorpus};

fn config(epochs: usize, fr: FrConfig) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        lr: LrSchedule::constant(0.05),
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 3,
        fr,
        loss: LossKind::Ce,
    }
}

fn three_blobs(per_class: &[usize], seed: u64) -> LabeledCorpus {
    gaussian_blobs(
        &[vec![-6.0, 0.0], vec![6.0, 0.0], vec![0.0, 8.0]],
        1.0,
        per_class,
        seed,
    )
    .unwrap()
}

#[test]
fn separable_blobs_are_learned() {
    let train_set = three_blobs(&[100, 100, 100], 1);
    let eval_set = three_blobs(&[100, 100, 100], 2);
    for spec in [ModelSpec::linear(2, 3), ModelSpec::one_hidden(2, 16, 3)] {
        let r = train(&train_set, &eval_set, spec, &config(30, FrConfig::off())).unwrap();
        assert!(
            r.final_eval.accuracy >= 0.99,
            "{spec:?}: {}",
            r.final_eval.accuracy
        );
    }
}

#[test]
fn zero_lambda_and_single_group_leave_training_unchanged() {
    let c = noisify(
        &three_blobs(&[80, 50, 30], 4),
        &sym_transition(3, 0.3).unwrap(),
        4,
    )
    .unwrap();
    let spec = ModelSpec::one_hidden(2, 8, 3);
    let plain = train(&c, &c, spec, &config(5, FrConfig::off())).unwrap();

    let grouped = c.with_groups(Some(
        GroupAssignment::new((0..c.len()).map(|i| i % 3).collect(), 3).unwrap(),
    ));
    let zero = train(&grouped, &grouped, spec, &config(5, FrConfig::shared(0.0))).unwrap();
    assert_eq!(plain.model, zero.model);

    let single = c.with_groups(Some(GroupAssignment::single(c.len())));
    let one_group = train(&single, &single, spec, &config(5, FrConfig::shared(3.0))).unwrap();
    assert_eq!(plain.model, one_group.model);
    assert!(one_group.per_epoch.iter().all(|e| e.fr_penalty == 0.0));
}

#[test]
fn full_batch_descent_does_not_increase_the_loss() {
    let c = noisify(
        &three_blobs(&[40, 30, 20], 5),
        &sym_transition(3, 0.2).unwrap(),
        5,
    )
    .unwrap();
    let spec = ModelSpec::linear(2, 3);
    let cfg = TrainConfig {
        batch_size: c.len(),
        momentum: 0.0,
        lr: LrSchedule::constant(0.01),
        ..config(40, FrConfig::off())
    };
    let r = train(&c, &c, spec, &cfg).unwrap();
    for w in r.per_epoch.windows(2) {
        assert!(
            w[1].base_loss <= w[0].base_loss + 1e-12,
            "{} -> {}",
            w[0].base_loss,
            w[1].base_loss
        );
    }
}

#[test]
fn zero_model_has_uniform_cross_entropy() {
    let c = three_blobs(&[20, 20, 20], 6);
    let spec = ModelSpec::linear(2, 3);
    let model = Model::from_params(spec, vec![0.0; spec.param_count()]).unwrap();
    let rows: Vec<usize> = (0..c.len()).collect();
    let out = batch_objective(
        &model,
        &c,
        &rows,
        &LossKind::Ce,
        &FrConfig::off(),
        &noisy_priors(&c),
        None,
    )
    .unwrap();
    assert!((out.objective - 3f64.ln()).abs() < 1e-14);
    assert_eq!(out.penalty, 0.0);
}

#[test]
fn fr_without_groups_is_rejected() {
    let c = three_blobs(&[10, 10, 10], 7);
    let err = train(
        &c,
        &c,
        ModelSpec::linear(2, 3),
        &config(1, FrConfig::shared(1.0)),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingGroupAssignment));
}

#[test]
fn kmeans_converges_to_a_fixed_point() {
    let c = gaussian_blobs(
        &[
            vec![0.0, 0.0],
            vec![5.0, 5.0],
            vec![-5.0, 5.0],
            vec![0.0, -6.0],
        ],
        1.2,
        &[60, 40, 30, 20],
        8,
    )
    .unwrap();
    let r = kmeans_groups(c.features(), 2, 4, 1, 500, 0.0).unwrap();
    let trace = &r.inertia_trace;
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    for g in 0..4 {
        let members = r.assignment.members(g);
        assert!(!members.is_empty());
        for axis in 0..2 {
            let mean = members.iter().map(|&i| c.row(i)[axis]).sum::<f64>() / members.len() as f64;
            assert!((mean - r.centroid(g)[axis]).abs() < 1e-9);
        }
    }
    for (i, &g) in r.assignment.ids().iter().enumerate() {
        let d = |h: usize| {
            (0..2)
                .map(|a| (c.row(i)[a] - r.centroid(h)[a]).powi(2))
                .sum::<f64>()
        };
        assert!((0..4).all(|h| d(g) <= d(h) + 1e-12));
    }
}

fn class_two_fixture() -> (LabeledCorpus, LabeledCorpus) {
    // class 2 lives entirely in group 1; removing group 1 erases the class
    let train_set = three_blobs(&[60, 60, 60], 9);
    let ids = train_set
        .clean_labels()
        .unwrap()
        .iter()
        .map(|&y| usize::from(y == 2))
        .collect();
    let train_set = train_set.with_groups(Some(GroupAssignment::new(ids, 2).unwrap()));
    let eval_set = three_blobs(&[50, 50, 50], 10);
    let eval_ids = eval_set
        .clean_labels()
        .unwrap()
        .iter()
        .map(|&y| usize::from(y == 2))
        .collect();
    (
        train_set,
        eval_set.with_groups(Some(GroupAssignment::new(eval_ids, 2).unwrap())),
    )
}

fn report(i: usize) -> InfluenceReport {
    let (train_set, eval_set) = class_two_fixture();
    influence_of_group(
        &train_set,
        &eval_set,
        i,
        ModelSpec::linear(2, 3),
        &config(15, FrConfig::off()),
    )
    .unwrap()
}

#[test]
fn removing_a_class_population_costs_that_class() {
    let r = report(1);
    let acc_c2 = r.acc_c[2].unwrap();
    assert!(acc_c2 > 0.9, "{acc_c2}");
    assert!(r.acc_p[1].unwrap() > 0.9);
    assert!(r.infl.iter().all(|v| v.is_finite()));
    assert!(r.acc_p_summary.is_some());
}

#[test]
fn influence_rejects_bad_groups() {
    let (train_set, eval_set) = class_two_fixture();
    let spec = ModelSpec::linear(2, 3);
    let cfg = config(1, FrConfig::off());
    assert!(matches!(
        influence_of_group(&train_set, &eval_set, 2, spec, &cfg),
        Err(Error::UnknownGroup {
            group: 2,
            group_count: 2
        })
    ));
    let one = train_set.with_groups(Some(GroupAssignment::single(train_set.len())));
    assert!(matches!(
        influence_of_group(&one, &eval_set, 0, spec, &cfg),
        Err(Error::GroupCoversCorpus(0))
    ));
}
