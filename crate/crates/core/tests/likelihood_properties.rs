mod common;

use common::{covariate_two_state, to_model};
use hsmm_core::model::invert_permutation;
use hsmm_core::{
    joint_loglik, joint_loglik_terms, CovariateSummary, Dataset, DurationModel, EmissionParams, Link,
    ModelParams, SegmentSequence, TransitionMatrix,
};
use hsmm_testkit::enumeration::{segmentations, Fixture};
use proptest::prelude::*;

#[test]
fn every_segmentation_matches_the_reference() {
    let fixture = Fixture {
        y: vec![0.3, -1.1, 2.2, 1.9, 0.4, 0.0],
        ..covariate_two_state()
    };
    let fixture = Fixture {
        covariates: fixture.covariates[..6].to_vec(),
        ..fixture
    };
    let (params, data) = to_model(&fixture);
    for segs in segmentations(6, 2) {
        let seq = SegmentSequence::from_pairs(&segs).unwrap();
        let ours = joint_loglik(&params, &data, &seq).unwrap();
        let reference = fixture.ln_joint(&segs);
        assert!((ours - reference).abs() < 1e-12, "{segs:?}: {ours} vs {reference}");
    }
}

#[test]
fn terms_add_up() {
    let (params, data) = to_model(&covariate_two_state());
    let seq = SegmentSequence::from_pairs(&[(1, 3), (0, 4), (1, 1)]).unwrap();
    let t = joint_loglik_terms(&params, &data, &seq).unwrap();
    let total = t.initial + t.duration + t.transition + t.emission;
    assert_eq!(t.total(), total);
    assert_eq!(joint_loglik(&params, &data, &seq).unwrap(), total);
}

fn simplex(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

prop_compose! {
    fn model_and_path(m: usize)(
        means in prop::collection::vec(-5.0f64..5.0, m),
        vars in prop::collection::vec(0.1f64..4.0, m),
        init in prop::collection::vec(0.05f64..1.0, m),
        trans in prop::collection::vec(0.05f64..1.0, m * m),
        beta in prop::collection::vec(-1.0f64..2.0, m * 2),
        y in prop::collection::vec(-6.0f64..6.0, 12),
        x in prop::collection::vec(-2.0f64..2.0, 13),
        steps in prop::collection::vec((0usize..m - 1, 1usize..5), 1..8),
        perm in Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
    ) -> (ModelParams, Dataset, SegmentSequence, Vec<usize>) {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut row: Vec<f64> = trans[j * m..(j + 1) * m].to_vec();
                row[j] = 0.0;
                simplex(&row)
            })
            .collect();
        let params = ModelParams::new(
            EmissionParams::new(means, vars).unwrap(),
            TransitionMatrix::new(rows, simplex(&init)).unwrap(),
            DurationModel::new(beta.chunks(2).map(<[f64]>::to_vec).collect(), CovariateSummary::LastValue, Link::Exp).unwrap(),
        ).unwrap();

        // Each step moves to a different state; durations are clipped to the series.
        let mut pairs = Vec::new();
        let (mut state, mut used) = (0, 0);
        for (shift, d) in steps {
            if used == y.len() {
                break;
            }
            if !pairs.is_empty() {
                state = (state + 1 + shift) % m;
            }
            let d = d.min(y.len() - used);
            pairs.push((state, d));
            used += d;
        }
        if used < y.len() {
            pairs.push(((state + 1) % m, y.len() - used));
        }
        let data = Dataset::new(y, x[1..].iter().map(|v| vec![*v]).collect(), Some(vec![x[0]])).unwrap();
        (params, data, SegmentSequence::from_pairs(&pairs).unwrap(), perm)
    }
}

proptest! {
    #[test]
    fn relabeling_states_preserves_the_likelihood((params, data, seq, perm) in model_and_path(3)) {
        let before = joint_loglik(&params, &data, &seq).unwrap();
        let permuted = params.permute(&perm).unwrap();
        let relabeled = seq.relabel(&invert_permutation(&perm));
        let after = joint_loglik(&permuted, &data, &relabeled).unwrap();
        prop_assert!((before - after).abs() <= 1e-10 * before.abs().max(1.0));
    }

    #[test]
    fn emission_term_is_additive_over_segments((params, data, seq, _perm) in model_and_path(3)) {
        let terms = joint_loglik_terms(&params, &data, &seq).unwrap();
        let mut by_point = 0.0;
        for (t, s) in seq.to_states().into_iter().enumerate() {
            by_point += hsmm_testkit::normal_ln_pdf(data.y()[t], params.emission.mean(s), params.emission.variance(s));
        }
        prop_assert!((terms.emission - by_point).abs() <= 1e-10 * by_point.abs().max(1.0));
    }
}
