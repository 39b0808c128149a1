//! Randomized invariants across the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use mvlatent::dataset::*;
use mvlatent::eval::*;
use mvlatent::forest::*;
use mvlatent::mvvae::*;
use mvlatent::nn::{adam_step, grad_check, AdamConfig, AdamState, DenseLayer, Matrix, Rng};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
    Matrix::new(rows, cols, data).unwrap()
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    matrix(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect())
}

// ---- dataset ------------------------------------------------------------------

fn table(modality: Modality, ids: &[String], d: usize, rng: &mut Rng) -> FeatureTable {
    FeatureTable {
        modality,
        subject_ids: ids.to_vec(),
        feature_names: (0..d).map(|j| format!("{}_{j}", modality.as_str())).collect(),
        values: random_matrix(rng, ids.len(), d, 1.0),
        missing: vec![false; ids.len() * d],
    }
}

fn status(code: u8) -> MgmtStatus {
    match code {
        0 => MgmtStatus::Unmethylated,
        1 => MgmtStatus::Methylated,
        _ => MgmtStatus::Unknown,
    }
}

fn pick(mask: u16, order_seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = (0..10).filter(|i| mask & (1 << i) != 0).map(|i| format!("S{i}")).collect();
    Rng::seed_from(order_seed).shuffle(&mut ids);
    ids
}

/// Complete cohort with a few exactly-constant columns mixed in.
fn cohort_from(seed: u64, n: usize, d: usize) -> Cohort {
    let mut rng = Rng::seed_from(seed);
    let mut view = |tag: &str| {
        let mut m = random_matrix(&mut rng, n, d, 3.0);
        for i in 0..n {
            m.set(i, 0, 7.5);
        }
        ViewData::complete((0..d).map(|j| format!("{tag}{j}")).collect(), m)
    };
    let t1gd = view("t");
    let flair = view("f");
    Cohort {
        subject_ids: (0..n).map(|i| format!("S{i:03}")).collect(),
        t1gd,
        flair,
        y: (0..n).map(|i| (i % 2) as u8).collect(),
    }
}

fn with_missing(mut c: Cohort, seed: u64, rate: f64) -> Cohort {
    let mut rng = Rng::seed_from(seed);
    for m in Modality::ALL {
        let v = c.view_mut(m);
        for cell in v.missing.iter_mut() {
            *cell = rng.uniform() < rate;
        }
    }
    c
}

proptest! {
    #[test]
    fn alignment_equals_brute_force_intersection(
        t_mask in any::<u16>(), f_mask in any::<u16>(),
        labels in prop::collection::vec(0u8..3, 10),
        clinical_mask in any::<u16>(), seed in any::<u64>(),
    ) {
        let mut rng = Rng::seed_from(seed);
        let t_ids = pick(t_mask, seed);
        let f_ids = pick(f_mask, seed ^ 1);
        let c_ids = pick(clinical_mask, seed ^ 2);
        let t = table(Modality::T1Gd, &t_ids, 2, &mut rng);
        let f = table(Modality::Flair, &f_ids, 3, &mut rng);
        let clinical = ClinicalTable {
            mgmt: c_ids.iter().map(|id| status(labels[id[1..].parse::<usize>().unwrap()])).collect(),
            subject_ids: c_ids.clone(),
        };
        let known: BTreeMap<&String, u8> = clinical.subject_ids.iter().zip(&clinical.mgmt)
            .filter_map(|(id, s)| s.label().map(|l| (id, l))).collect();
        let expected: Vec<String> = t_ids.iter()
            .filter(|id| f_ids.contains(id) && known.contains_key(id))
            .cloned().collect::<BTreeSet<_>>().into_iter().collect();
        match align_cohort(&t, &f, &clinical) {
            Ok(c) => {
                prop_assert_eq!(&c.subject_ids, &expected);
                for (i, id) in c.subject_ids.iter().enumerate() {
                    prop_assert_eq!(c.y[i], known[id]);
                    let ti = t_ids.iter().position(|x| x == id).unwrap();
                    let fi = f_ids.iter().position(|x| x == id).unwrap();
                    prop_assert_eq!(c.t1gd.values.row(i), t.values.row(ti));
                    prop_assert_eq!(c.flair.values.row(i), f.values.row(fi));
                }
            }
            Err(DatasetError::EmptyCohort) => prop_assert!(expected.is_empty()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn training_rows_are_standardized(seed in any::<u64>(), n in 4usize..30, d in 2usize..6, frac in 0.3f64..0.9) {
        let c = cohort_from(seed, n, d);
        let mut rng = Rng::seed_from(seed ^ 0xabc);
        let k = ((n as f64 * frac) as usize).max(2);
        let train: Vec<usize> = rng.permutation(n)[..k].to_vec();
        let pre = Preprocessor::fit(&c, &train).unwrap();
        let out = pre.apply(&c).unwrap();
        for m in Modality::ALL {
            let raw = &c.view(m).values;
            let z = &out.view(m).values;
            for j in 0..d {
                let col: Vec<f64> = train.iter().map(|&i| z.get(i, j)).collect();
                let mean = col.iter().sum::<f64>() / k as f64;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
                let raw_col: Vec<f64> = train.iter().map(|&i| raw.get(i, j)).collect();
                if raw_col.iter().all(|&v| v == raw_col[0]) {
                    prop_assert!(col.iter().all(|&v| v == 0.0));
                } else {
                    prop_assert!(mean.abs() < 1e-10, "mean {mean}");
                    prop_assert!((sd - 1.0).abs() < 1e-10, "sd {sd}");
                }
            }
        }
        // Statistics never depend on held-out rows.
        let mut shifted = c.clone();
        for i in (0..n).filter(|i| !train.contains(i)) {
            shifted.t1gd.values.row_mut(i).iter_mut().for_each(|v| *v += 1e3);
        }
        prop_assert_eq!(Preprocessor::fit(&shifted, &train).unwrap(), pre);
    }

    #[test]
    fn imputation_is_idempotent(seed in any::<u64>(), n in 3usize..20, rate in 0.0f64..0.5) {
        let c = with_missing(cohort_from(seed, n, 4), seed ^ 7, rate);
        let train: Vec<usize> = (0..n).collect();
        // Columns fully missing are dropped at load time; skip such draws.
        let observed = Modality::ALL.iter().all(|&m| {
            let v = c.view(m);
            (0..4).all(|j| (0..n).any(|i| !v.missing[i * 4 + j]))
        });
        prop_assume!(observed);
        let once = impute_median(&c, &train).unwrap();
        let twice = impute_median(&once, &train).unwrap();
        prop_assert!(!once.has_missing());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn folds_are_stratified(y in prop::collection::vec(0u8..2, 4..80), k in 2usize..6, seed in any::<u64>()) {
        let counts = class_counts(&y);
        prop_assume!(counts[0] >= k && counts[1] >= k);
        let folds = stratified_split(&y, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for f in &folds {
            for class in 0..2u8 {
                let c = f.iter().filter(|&&i| y[i] == class).count() as f64;
                prop_assert!((c - counts[class as usize] as f64 / k as f64).abs() < 1.0);
            }
        }
        prop_assert_eq!(stratified_split(&y, k, seed).unwrap(), folds);
    }

    #[test]
    fn seeded_operations_are_pure(seed in any::<u64>(), frac in 0.1f64..0.9) {
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        prop_assert_eq!(holdout_split(&y, frac, seed).unwrap(), holdout_split(&y, frac, seed).unwrap());
        let p = SynthParams { n: 30, d: 6, seed, ..SynthParams::default() };
        prop_assert_eq!(synth_cohort(&p).unwrap(), synth_cohort(&p).unwrap());
    }
}

// ---- neural core --------------------------------------------------------------

fn layer_from(seed: u64, input: usize, output: usize) -> DenseLayer {
    let mut rng = Rng::seed_from(seed);
    let w = random_matrix(&mut rng, output, input, 1.0);
    let b = (0..output).map(|_| rng.normal()).collect();
    DenseLayer::new(w, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dense_backward_matches_finite_differences(seed in any::<u64>(), input in 1usize..6, output in 1usize..6, batch in 1usize..5) {
        let layer = layer_from(seed, input, output);
        let mut rng = Rng::seed_from(seed ^ 99);
        let x = random_matrix(&mut rng, batch, input, 1.0);
        let r = random_matrix(&mut rng, batch, output, 1.0);
        let (nw, nb) = (output * input, output);
        // loss = ½ Σ r ⊙ y², so dL/dy = r ⊙ y
        let eval = |p: &[f64]| -> (f64, Vec<f64>) {
            let l = DenseLayer::new(matrix(output, input, p[..nw].to_vec()), p[nw..nw + nb].to_vec()).unwrap();
            let xi = matrix(batch, input, p[nw + nb..].to_vec());
            let y = l.forward(&xi).unwrap();
            let loss: f64 = y.data().iter().zip(r.data()).map(|(a, b)| 0.5 * b * a * a).sum();
            let delta = matrix(batch, output, y.data().iter().zip(r.data()).map(|(a, b)| a * b).collect());
            let (g, gx) = l.backward(&xi, &delta).unwrap();
            let mut grad = g.weights.data().to_vec();
            grad.extend_from_slice(&g.bias);
            grad.extend_from_slice(gx.data());
            (loss, grad)
        };
        let mut p = layer.weights.data().to_vec();
        p.extend_from_slice(&layer.bias);
        p.extend_from_slice(x.data());
        prop_assert!(grad_check(eval, &p, 1e-5) < 1e-4);
    }

    #[test]
    fn dense_forward_is_affine(seed in any::<u64>(), input in 1usize..8, output in 1usize..8) {
        let layer = layer_from(seed, input, output);
        let mut rng = Rng::seed_from(seed ^ 5);
        let x: Vec<f64> = (0..input).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..input).map(|_| rng.normal()).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let fx = layer.forward_vec(&x).unwrap();
        let fy = layer.forward_vec(&y).unwrap();
        let fxy = layer.forward_vec(&xy).unwrap();
        for o in 0..output {
            prop_assert!((fxy[o] - fx[o] - fy[o] + layer.bias[o]).abs() < 1e-10);
        }
    }

    #[test]
    fn adam_keeps_shapes_and_finiteness(
        seed in any::<u64>(), sizes in prop::collection::vec(1usize..6, 1..4), steps in 1usize..20, scale in 1e-3f64..1e3,
    ) {
        let mut rng = Rng::seed_from(seed);
        let mut params: Vec<Vec<f64>> = sizes.iter().map(|&n| (0..n).map(|_| rng.normal()).collect()).collect();
        let mut state = AdamState::new(&sizes);
        for _ in 0..steps {
            let grads: Vec<Vec<f64>> = sizes.iter().map(|&n| (0..n).map(|_| scale * rng.normal()).collect()).collect();
            let mut views: Vec<&mut [f64]> = params.iter_mut().map(|p| p.as_mut_slice()).collect();
            let gviews: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            adam_step(&mut views, &gviews, &mut state, &AdamConfig::default()).unwrap();
        }
        prop_assert_eq!(state.t, steps as u64);
        for (p, &n) in params.iter().zip(&sizes) {
            prop_assert_eq!(p.len(), n);
            prop_assert!(p.iter().all(|v| v.is_finite()));
        }
    }
}

// ---- mvvae --------------------------------------------------------------------

#[test]
fn kl_is_non_negative_on_ten_thousand_draws() {
    let mut rng = Rng::seed_from(2024);
    for _ in 0..10_000 {
        let k = 1 + rng.below(4);
        let mu: Vec<f64> = (0..k).map(|_| -3.0 + 6.0 * rng.uniform()).collect();
        let lv: Vec<f64> = (0..k).map(|_| -3.0 + 6.0 * rng.uniform()).collect();
        let kl = kl_diag_gaussian(&mu, &lv);
        assert!(kl >= -1e-12, "kl {kl} at {mu:?} {lv:?}");
        assert!(kl > 0.0, "positive away from the origin");
    }
    assert_eq!(kl_diag_gaussian(&[0.0; 3], &[0.0; 3]), 0.0);
}

proptest! {
    #[test]
    fn kl_vanishes_only_at_the_origin(mu in -3.0f64..3.0, lv in -3.0f64..3.0) {
        let kl = kl_diag_gaussian(&[mu], &[lv]);
        prop_assert!(kl >= -1e-12);
        if mu != 0.0 || lv != 0.0 {
            prop_assert!(kl > 0.0);
        }
    }
}

fn small_vae() -> &'static (MvVaeModel, Matrix, Matrix) {
    static MODEL: OnceLock<(MvVaeModel, Matrix, Matrix)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let mut rng = Rng::seed_from(11);
        let cfg = VaeConfig {
            input_dims: [7, 5],
            encoder_hidden: vec![6, 4],
            decoder_hidden: vec![4, 6],
            latent_dim: 3,
            ..VaeConfig::default()
        };
        let mut model = MvVaeModel::new(cfg).unwrap();
        let p: Vec<f64> = (0..model.param_count()).map(|_| 0.4 * rng.normal()).collect();
        model.set_flat_params(&p).unwrap();
        let t = random_matrix(&mut rng, 40, 7, 1.0);
        let f = random_matrix(&mut rng, 40, 5, 1.0);
        (model, t, f)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_ignores_batch_partitioning(cuts in prop::collection::btree_set(1usize..40, 0..6)) {
        let (model, t, f) = small_vae();
        let whole = model.embed(t, f).unwrap();
        prop_assert_eq!(whole.cols(), 6);
        let mut bounds: Vec<usize> = vec![0];
        bounds.extend(cuts.iter().copied());
        bounds.push(40);
        for w in bounds.windows(2) {
            let rows: Vec<usize> = (w[0]..w[1]).collect();
            let part = model.embed(&t.select_rows(&rows), &f.select_rows(&rows)).unwrap();
            for (k, &r) in rows.iter().enumerate() {
                prop_assert_eq!(part.row(k), whole.row(r));
            }
        }
    }
}

// ---- forest -------------------------------------------------------------------

fn labelled(seed: u64, n: usize, d: usize) -> (Matrix, Vec<u8>) {
    let mut rng = Rng::seed_from(seed);
    let x = random_matrix(&mut rng, n, d, 1.0);
    let mut y: Vec<u8> = (0..n).map(|i| u8::from(x.get(i, 0) + 0.5 * rng.normal() > 0.0)).collect();
    y[0] = 0;
    y[1] = 1;
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_input_reaches_one_leaf(seed in any::<u64>(), n in 4usize..40, d in 1usize..5, depth in prop::option::of(1usize..6)) {
        let (x, y) = labelled(seed, n, d);
        let params = TreeParams { max_depth: depth, ..TreeParams::exhaustive(d) };
        let tree = fit_tree(&x, &y, params, seed).unwrap();
        let mut rng = Rng::seed_from(seed ^ 3);
        for _ in 0..50 {
            let q: Vec<f64> = (0..d).map(|_| 1e3 * rng.normal()).collect();
            let p = tree.predict_row(&q);
            prop_assert!((0.0..=1.0).contains(&p));
        }
        for node in &tree.nodes {
            if let Some(s) = &node.split {
                prop_assert!(s.gain > 0.0);
                prop_assert_eq!(
                    tree.nodes[s.left].n() + tree.nodes[s.right].n(),
                    node.n()
                );
            }
        }
    }

    #[test]
    fn more_trees_keep_perfect_training_accuracy(seed in any::<u64>(), n in 6usize..40) {
        let mut rng = Rng::seed_from(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { -3.0 } else { 3.0 };
                vec![c + 0.3 * rng.normal(), rng.normal()]
            })
            .collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let acc = |k: usize| {
            let cfg = RfConfig { n_estimators: k, seed, ..RfConfig::default() };
            let p = fit_forest(&x, &y, &cfg).unwrap().predict_proba(&x).unwrap();
            p.iter().zip(&y).filter(|(p, &l)| u8::from(**p > 0.5) == l).count() as f64 / n as f64
        };
        if acc(1) == 1.0 {
            for k in 2..12 {
                prop_assert_eq!(acc(k), 1.0);
            }
        }
    }
}

// ---- eval ---------------------------------------------------------------------

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..50)
        .prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(0u8..2, n)))
        .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
}

proptest! {
    #[test]
    fn auc_ignores_increasing_transforms((s, y) in scores_and_labels(), a in 0.01f64..10.0, b in -10.0f64..10.0) {
        // Ties are kept exact by rounding to a coarse grid first.
        let s: Vec<f64> = s.iter().map(|v| (v * 2.0).round() / 2.0).collect();
        let base = auc(&s, &y).unwrap();
        let affine: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        prop_assert_eq!(auc(&affine, &y).unwrap(), base);
        prop_assert_eq!(auc(&exp, &y).unwrap(), base);
    }

    #[test]
    fn flipping_labels_reflects_auc((s, y) in scores_and_labels()) {
        let flipped: Vec<u8> = y.iter().map(|l| 1 - l).collect();
        prop_assert!((auc(&s, &flipped).unwrap() - (1.0 - auc(&s, &y).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone((s, y) in scores_and_labels()) {
        let r = roc_curve(&s, &y).unwrap();
        for w in r.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        prop_assert!((trapezoid_area(&r.points) - r.auc).abs() < 1e-12);
    }

    #[test]
    fn projecting_a_projection_is_rigid(seed in any::<u64>(), n in 3usize..40, d in 2usize..8) {
        let mut rng = Rng::seed_from(seed);
        let x = random_matrix(&mut rng, n, d, 2.0);
        let p = project_2d(&x, seed).unwrap();
        prop_assume!(p.variances[1] > 1e-9);
        let q = project_2d(&p.coords, seed ^ 1).unwrap();
        for i in 0..n {
            for j in 0..n {
                let da = ((p.coords.get(i, 0) - p.coords.get(j, 0)).powi(2) + (p.coords.get(i, 1) - p.coords.get(j, 1)).powi(2)).sqrt();
                let db = ((q.coords.get(i, 0) - q.coords.get(j, 0)).powi(2) + (q.coords.get(i, 1) - q.coords.get(j, 1)).powi(2)).sqrt();
                prop_assert!((da - db).abs() < 1e-8);
            }
        }
        prop_assert!(q.variances[0] >= q.variances[1]);
        for c in 0..2 {
            prop_assert!((q.coords.column(c).iter().sum::<f64>() / n as f64).abs() < 1e-10);
        }
    }
}

fn fitted_small_experiment() -> &'static (FittedModels, Cohort, Vec<usize>) {
    static FIT: OnceLock<(FittedModels, Cohort, Vec<usize>)> = OnceLock::new();
    FIT.get_or_init(|| {
        let s = synth_cohort(&SynthParams { n: 80, d: 8, seed: 5, ..SynthParams::default() }).unwrap();
        let cfg = ExperimentConfig {
            seed: 5,
            vae: VaeConfig { max_epochs: 20, ..VaeConfig::default() },
            rf: RfConfig { n_estimators: 15, ..RfConfig::default() },
            grid: HyperGrid {
                n_estimators: vec![10],
                max_depth: vec![None, Some(3)],
                max_features: vec![MaxFeatures::Sqrt],
                min_samples_split: vec![2],
                min_samples_leaf: vec![1],
            },
            ..ExperimentConfig::default()
        };
        let split = holdout_split(&s.cohort.y, 0.25, 9).unwrap();
        let mut timing = BTreeMap::new();
        let (fitted, prepared) = fit_models(&s.cohort, &split.train, &cfg, &mut timing).unwrap();
        (fitted, prepared, split.test)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn test_row_order_changes_no_metric(seed in any::<u64>()) {
        let (fitted, prepared, test) = fitted_small_experiment();
        let mut perm = test.clone();
        Rng::seed_from(seed).shuffle(&mut perm);
        let a = score_models(fitted, prepared, test).unwrap();
        let b = score_models(fitted, prepared, &perm).unwrap();
        let ya: Vec<u8> = test.iter().map(|&i| prepared.y[i]).collect();
        let yb: Vec<u8> = perm.iter().map(|&i| prepared.y[i]).collect();
        for m in 0..MODEL_NAMES.len() {
            for (k, &row) in perm.iter().enumerate() {
                let pos = test.iter().position(|&r| r == row).unwrap();
                prop_assert_eq!(b[m][k], a[m][pos]);
            }
            prop_assert_eq!(auc(&a[m], &ya).unwrap(), auc(&b[m], &yb).unwrap());
            let ra = roc_curve(&a[m], &ya).unwrap();
            let rb = roc_curve(&b[m], &yb).unwrap();
            prop_assert_eq!(ra, rb);
        }
    }
}
