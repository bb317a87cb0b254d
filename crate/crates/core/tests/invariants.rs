use std::collections::HashSet;

use ndarray::Array2;
use proptest::prelude::*;
use sofanet::data::{differential, impute, make_windows, split_patients, HORIZON, WINDOW};
use sofanet::mmd::{mmd, Estimator, MmdKind};
use sofanet::model::Batch;
use sofanet::nn::serialize_params;
use sofanet::sofa::SystemScores;
use sofanet::{Cohort, FeatureSchema, ModelConfig, PatientSeries, SofaNet};

fn series_strategy() -> impl Strategy<Value = (PatientSeries, Vec<f64>)> {
    (1usize..5, WINDOW..30).prop_flat_map(|(f, m)| {
        (
            proptest::collection::vec(proptest::option::weighted(0.6, -100.0f64..100.0), m * f),
            proptest::option::of(0..m),
            proptest::collection::vec(-10.0f64..10.0, f),
        )
            .prop_map(move |(cells, onset, means)| {
                (PatientSeries::new("p", f, cells, onset).unwrap(), means)
            })
    })
}

fn matrix(rows: std::ops::Range<usize>, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    rows.prop_flat_map(move |n| {
        proptest::collection::vec(-3.0f64..3.0, n * cols)
            .prop_map(move |v| Array2::from_shape_vec((n, cols), v).unwrap())
    })
}

proptest! {
    #[test]
    fn imputation_is_idempotent((s, means) in series_strategy()) {
        let once = impute(&s, &means);
        prop_assert!(once.is_complete());
        prop_assert_eq!(impute(&once, &means), once);
    }

    #[test]
    fn windows_count_labels_and_invert((s, means) in series_strategy()) {
        let filled = impute(&s, &means);
        let m = s.m();
        let windows = make_windows(&filled, &vec![SystemScores::default(); m], WINDOW, HORIZON).unwrap();
        let onset = s.onset_hour();
        let expected = match onset {
            None => m - 5,
            Some(o) => o.min(m - 5),
        };
        prop_assert_eq!(windows.len(), expected);
        for (k, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.start, k);
            let positive = onset.is_some_and(|o| (k + 6..=k + 11).contains(&o));
            prop_assert_eq!(w.sepsis_label, positive as u8);
            let dx = differential(w.x.view());
            let mut row = w.x.row(0).to_owned();
            for t in 1..WINDOW {
                row += &dx.row(t);
                for (a, b) in row.iter().zip(w.x.row(t)) {
                    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn splits_are_deterministic_partitions(n in 2usize..80, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let patients = (0..n)
            .map(|i| PatientSeries::new(format!("p{i}"), 27, vec![Some(0.0); 27 * WINDOW], None).unwrap())
            .collect();
        let cohort = Cohort::new(FeatureSchema::standard(), patients);
        let ids = |c: &Cohort| c.patients.iter().map(|p| p.patient_id.clone()).collect::<HashSet<_>>();
        let (tr, te) = split_patients(&cohort, frac, seed).unwrap();
        let (tr2, te2) = split_patients(&cohort, frac, seed).unwrap();
        prop_assert_eq!(ids(&tr), ids(&tr2));
        prop_assert_eq!(ids(&te), ids(&te2));
        prop_assert!(ids(&tr).is_disjoint(&ids(&te)));
        prop_assert_eq!(tr.len() + te.len(), n);
    }

    #[test]
    fn mmd_is_symmetric_and_nonnegative(a in matrix(1..7, 3), b in matrix(1..7, 3)) {
        for kind in [MmdKind::Linear, MmdKind::Rbf] {
            let ab = mmd(a.view(), b.view(), &Estimator::for_batches(kind, a.view(), b.view())).unwrap();
            let ba = mmd(b.view(), a.view(), &Estimator::for_batches(kind, b.view(), a.view())).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab >= -1e-12);
        }
    }

    #[test]
    fn shifting_one_batch_raises_linear_mmd(a in matrix(1..7, 3), shift in proptest::collection::vec(0.1f64..2.0, 3)) {
        let shifted = &a + &ndarray::Array1::from_vec(shift);
        prop_assert_eq!(mmd(a.view(), a.view(), &Estimator::Linear).unwrap(), 0.0);
        prop_assert!(mmd(a.view(), shifted.view(), &Estimator::Linear).unwrap() > 0.0);
    }

    #[test]
    fn local_loss_is_nonnegative_and_forward_deterministic(
        seed in any::<u64>(),
        variant in 0usize..3,
        alpha in 0.0f64..2.0,
        x in matrix(2..5, 6),
    ) {
        let base = ModelConfig { hidden_dim: 2, alpha, ..ModelConfig::new(3) };
        let cfg = [base, base.without_multi_channel(), base.plain_gru()][variant];
        let net = SofaNet::new(cfg).unwrap();
        let params = net.init_params(seed);
        let n = x.nrows();
        let batch = Batch {
            inputs: (0..WINDOW).map(|t| &x * (t as f64 - 2.5)).collect(),
            sepsis: (0..n).map(|i| (i % 2) as u8).collect(),
            sofa: (0..n).map(|i| [(i % 5) as u8; 4]).collect(),
        };
        let f1 = net.forward(&params, &batch.inputs).unwrap();
        let f2 = net.forward(&params, &batch.inputs).unwrap();
        prop_assert_eq!(&f1.sepsis_logits, &f2.sepsis_logits);
        prop_assert_eq!(&f1.z, &f2.z);
        let loss = net.local_loss(&f1, &batch.sepsis, &batch.sofa).unwrap();
        prop_assert!(loss.total >= 0.0);
        prop_assert_eq!(serialize_params(&params), serialize_params(&net.init_params(seed)));
    }
}
