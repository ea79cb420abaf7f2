//! Evaluation metrics, hypnogram and confidence summaries against counting
//! oracles.

mod common;

use common::{counted_metrics, rng};
use rand::Rng;
use sleepgmu::trainer::{
    confidence_estimate, hypnogram_export, ConfidencePoint, ConfidenceSeries, ConfusionMatrix,
    MetricsReport, DEFAULT_THRESHOLDS,
};
use sleepgmu::Stage;

fn pairs_of(cm: &ConfusionMatrix) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for t in 0..5 {
        for p in 0..5 {
            pairs.extend(std::iter::repeat_n((t, p), cm.counts[t][p] as usize));
        }
    }
    pairs
}

fn random_matrix(r: &mut impl Rng) -> ConfusionMatrix {
    let mut counts = [[0u64; 5]; 5];
    for row in &mut counts {
        for c in row.iter_mut() {
            // Plenty of zeros so empty rows and columns show up.
            *c = if r.random_bool(0.3) { 0 } else { r.random_range(0..=50) };
        }
    }
    counts[0][0] += 1;
    ConfusionMatrix { counts }
}

#[test]
fn report_matches_counting_oracle() {
    let mut r = rng(42);
    for _ in 0..100 {
        let cm = random_matrix(&mut r);
        let got = MetricsReport::from_confusion(&cm).unwrap();
        let want = counted_metrics(&pairs_of(&cm));
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(got.accuracy, want.accuracy));
        assert!(close(got.kappa, want.kappa));
        for k in 0..5 {
            assert!(close(got.per_class_f1[k], want.f1[k]));
            assert!(close(got.per_class_sensitivity[k], want.sensitivity[k]));
            assert!(close(got.per_class_specificity[k], want.specificity[k]));
        }
        assert!(close(got.mf1, want.f1.iter().sum::<f64>() / 5.0));
        assert!(close(got.mean_sensitivity, want.sensitivity.iter().sum::<f64>() / 5.0));
        assert!(close(got.mean_specificity, want.specificity.iter().sum::<f64>() / 5.0));
    }
}

#[test]
fn constant_predictor_on_uniform_truth() {
    let truth: Vec<Stage> = (0..50).map(|i| Stage::ALL[i % 5]).collect();
    let predicted = vec![Stage::N2; 50];
    let (report, _) = MetricsReport::from_predictions(&truth, &predicted).unwrap();
    assert!((report.accuracy - 0.2).abs() < 1e-15);
    assert!(report.kappa.abs() < 1e-15);
}

#[test]
fn perfect_predictions_score_one() {
    let truth: Vec<Stage> = (0..23).map(|i| Stage::ALL[(i * 7) % 5]).collect();
    let (report, _) = MetricsReport::from_predictions(&truth, &truth).unwrap();
    assert_eq!((report.accuracy, report.kappa, report.mf1), (1.0, 1.0, 1.0));
}

#[test]
fn hypnogram_mismatches_agree_with_accuracy() {
    let mut r = rng(3);
    for _ in 0..20 {
        let n = r.random_range(1..200);
        let truth: Vec<Stage> = (0..n).map(|_| Stage::ALL[r.random_range(0..5)]).collect();
        let predicted: Vec<Stage> =
            truth.iter().map(|&s| if r.random_bool(0.7) { s } else { Stage::ALL[r.random_range(0..5)] }).collect();
        let hyp = hypnogram_export(&truth, &predicted).unwrap();
        let (report, _) = MetricsReport::from_predictions(&truth, &predicted).unwrap();
        assert_eq!(hyp.len(), n);
        assert_eq!(hyp.mismatches(), ((1.0 - report.accuracy) * n as f64).round() as usize);
        assert_eq!(hypnogram_export(&truth, &truth).unwrap().mismatches(), 0);
    }
    assert!(hypnogram_export(&[Stage::W], &[]).is_err());
}

fn point(i: usize, truth: Stage, probs: Vec<f64>) -> ConfidencePoint {
    let k = sleepgmu::trainer::argmax(&probs);
    ConfidencePoint {
        epoch_index: i,
        truth,
        predicted: Stage::ALL[k],
        max_prob: probs[k],
        probs,
        correct: Stage::ALL[k] == truth,
    }
}

#[test]
fn confidence_summaries_match_filter_and_count() {
    let mut r = rng(9);
    let points: Vec<ConfidencePoint> = (0..300)
        .map(|i| {
            let raw: Vec<f64> = (0..5).map(|_| r.random::<f64>().powi(3)).collect();
            let s: f64 = raw.iter().sum();
            point(i, Stage::ALL[r.random_range(0..5)], raw.iter().map(|v| v / s).collect())
        })
        .collect();
    let series = ConfidenceSeries { points: points.clone() };
    let summaries = confidence_estimate(&series, &DEFAULT_THRESHOLDS).unwrap();
    for (s, &th) in summaries.iter().zip(&DEFAULT_THRESHOLDS) {
        let above: Vec<&ConfidencePoint> = points.iter().filter(|p| p.max_prob > th).collect();
        let below: Vec<&ConfidencePoint> = points.iter().filter(|p| p.max_prob <= th).collect();
        let acc = |v: &[&ConfidencePoint]| {
            (!v.is_empty()).then(|| v.iter().filter(|p| p.correct).count() as f64 / v.len() as f64)
        };
        assert_eq!(s.threshold, th);
        assert_eq!(s.count_above, above.len());
        assert_eq!(s.fraction_above, above.len() as f64 / 300.0);
        assert_eq!(s.accuracy_above, acc(&above));
        assert_eq!(s.accuracy_below, acc(&below));
        let q = s.quantiles_above.as_ref().unwrap();
        let mut conf: Vec<f64> = above.iter().map(|p| p.max_prob).collect();
        conf.sort_by(f64::total_cmp);
        assert_eq!(q.min, conf[0]);
        assert_eq!(q.max, *conf.last().unwrap());
        assert!((q.mean - conf.iter().sum::<f64>() / conf.len() as f64).abs() < 1e-15);
    }
}

#[test]
fn uniform_predictor_is_never_confident() {
    let points = (0..40).map(|i| point(i, Stage::ALL[i % 5], vec![0.2; 5])).collect();
    let summaries = confidence_estimate(&ConfidenceSeries { points }, &DEFAULT_THRESHOLDS).unwrap();
    assert!(summaries.iter().all(|s| s.count_above == 0 && s.fraction_above == 0.0));
}

#[test]
fn certain_and_correct_series() {
    let points = (0..10)
        .map(|i| {
            let mut p = vec![0.0; 5];
            p[i % 5] = 1.0;
            point(i, Stage::ALL[i % 5], p)
        })
        .collect();
    let summaries = confidence_estimate(&ConfidenceSeries { points }, &DEFAULT_THRESHOLDS).unwrap();
    assert!(summaries.iter().all(|s| s.fraction_above == 1.0 && s.accuracy_above == Some(1.0)));
}
