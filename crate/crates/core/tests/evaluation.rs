use lit_core::datasets::{builtin_2d_cases, gen_confounded, DomainBox, GroundTruthRule, RuleForm};
use lit_core::evaluation::{
    agreement, build_report, cos2_stats, grid_logits, match_models, mi_empirical, mi_formula,
    EvaluationReport, GridSpec, Nats, PerturbationSpec, ReportSpec,
};
use lit_core::models::{Activation, LogOddsModel, MlpParams};
use lit_core::rng::rng;
use proptest::prelude::*;
use rand::Rng;

fn square() -> DomainBox {
    DomainBox::cube(2, -10.0, 10.0).unwrap()
}

fn rule_x0() -> GroundTruthRule {
    builtin_2d_cases()[0].rules[0].clone()
}

#[test]
fn exact_model_agrees_everywhere() {
    let model = MlpParams::linear(vec![1.0, 0.0], 0.0).unwrap();
    assert_eq!(agreement(&model, &rule_x0(), &square(), 10_000, 1).unwrap(), 1.0);
}

#[test]
fn constant_half_probability_predicts_one() {
    let model = MlpParams::linear(vec![0.0, 0.0], 0.0).unwrap();
    let a = agreement(&model, &rule_x0(), &square(), 10_000, 2).unwrap();
    assert!((a - 0.5).abs() < 0.02, "agreement {a}");
}

#[test]
fn diagonal_model_agrees_on_three_quarters() {
    // sign(x+y) = sign(x) except in the two eighth-wedges between the axes and the diagonal.
    let model = MlpParams::linear(vec![1.0, 1.0], 0.0).unwrap();
    let a = agreement(&model, &rule_x0(), &square(), 100_000, 3).unwrap();
    assert!((a - 0.75).abs() <= 0.01, "agreement {a}");
}

#[test]
fn agreement_with_negated_rule_is_complementary() {
    let negated = GroundTruthRule::new(
        "-x",
        RuleForm::Linear {
            dims: vec![0],
            coeffs: vec![-1.0],
            offset: 0.0,
        },
    );
    let model = MlpParams::init(&[2, 6, 1], Activation::Softplus, 4).unwrap();
    let a = agreement(&model, &rule_x0(), &square(), 5_000, 9).unwrap();
    let b = agreement(&model, &negated, &square(), 5_000, 9).unwrap();
    assert!((a + b - 1.0).abs() < 1e-12);
}

#[test]
fn cos2_stats_examples() {
    let a = MlpParams::linear(vec![1.0, 0.0], 0.0).unwrap();
    let b = MlpParams::linear(vec![0.0, 1.0], 0.0).unwrap();
    let points = [1.0, 2.0, -3.0, 0.5];
    let m = cos2_stats(&[&a, &b], &points, 2, 1e-6).unwrap();
    assert_eq!(m[0][1], 0.0);
    assert_eq!(m[1][0], 0.0);
    assert!((m[0][0] - 1.0).abs() < 1e-5);

    let rules = &builtin_2d_cases()[2].rules;
    let scorers: Vec<&dyn LogOddsModel> = rules.iter().map(|r| r as &dyn LogOddsModel).collect();
    let points = [1.0, 2.0, -3.0, 0.5, 7.0, -7.5];
    let m = cos2_stats(&scorers, &points, 2, 1e-6).unwrap();
    assert_eq!(m[0][1], 0.0);
}

#[test]
fn mi_at_45_degrees() {
    let spec = PerturbationSpec {
        sigma: 1e-3,
        n_samples: 100_000,
    };
    let v = mi_empirical(&[1.0, 0.0], &[1.0, 1.0], &spec, 5).unwrap().finite().unwrap();
    assert!((v - 0.5 * std::f64::consts::LN_2).abs() <= 0.02, "{v}");
}

#[test]
fn mi_formula_is_increasing() {
    let mut prev = -1.0;
    for i in 0..1000 {
        let v = mi_formula(i as f64 / 1000.0).unwrap().finite().unwrap();
        assert!(v > prev);
        prev = v;
    }
}

#[test]
fn linear_grid_varies_along_first_axis_only() {
    let model = MlpParams::linear(vec![1.0, 0.0], 0.0).unwrap();
    let g = grid_logits(&model, &square(), &GridSpec::plane(7), 0).unwrap();
    for i in 0..7 {
        let row = &g.values[i * 7..(i + 1) * 7];
        assert!(row.iter().all(|&v| v == row[0]));
        assert_eq!(row[0], g.axis0[i]);
    }
    let csv = g.to_csv("linear");
    assert!(csv.lines().next().unwrap().starts_with('#'));
    assert!(csv.contains("\ndim_i,dim_j,value\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 50);
}

#[test]
fn projected_grid_is_deterministic() {
    let model = MlpParams::init(&[4, 5, 1], Activation::Relu, 1).unwrap();
    let domain = DomainBox::cube(4, -1.0, 1.0).unwrap();
    let spec = GridSpec {
        dims: (1, 3),
        resolution: 4,
        projection_samples: Some(16),
    };
    let a = grid_logits(&model, &domain, &spec, 7).unwrap();
    assert_eq!(a, grid_logits(&model, &domain, &spec, 7).unwrap());
    assert_eq!(a.values.len(), 16);
    assert!(a.values.iter().all(|v| v.is_finite()));
}

#[test]
fn perfect_recovery_stub_report() {
    let case = &builtin_2d_cases()[0];
    let data = gen_confounded(&case.rules, &case.domain, 200, 1).unwrap();
    // Listed in the opposite order of the rules so the matching must swap them.
    let models = vec![
        MlpParams::linear(vec![0.0, 1.0], 0.0).unwrap(),
        MlpParams::linear(vec![1.0, 0.0], 0.0).unwrap(),
    ];
    let spec = ReportSpec::for_domain(&case.domain);
    let report = build_report(&models, &case.rules, &data, &case.domain, &spec, 3).unwrap();
    assert_eq!(report.matching.as_ref().unwrap().assignment, vec![1, 0]);
    assert_eq!(report.matched_agreement, Some(vec![1.0, 1.0]));
    assert_eq!(report.train_accuracy, vec![1.0, 1.0]);
    assert_eq!(report.mean_cos2[0][1], 0.0);
    assert!(!report.mi_check.is_empty());
    for check in &report.mi_check {
        assert_eq!(check.formula, Nats::Finite(0.0));
    }

    let json = report.to_json().unwrap();
    assert_eq!(EvaluationReport::from_json(&json).unwrap(), report);
    let csv = report.to_csv();
    assert!(csv.starts_with("section,row,column,value\n"));
    assert!(csv.contains("matched_agreement,model_0,y,1.0"));
}

#[test]
fn report_rejects_dimension_mismatch() {
    let case = &builtin_2d_cases()[0];
    let data = gen_confounded(&case.rules, &case.domain, 50, 1).unwrap();
    let models = vec![MlpParams::linear(vec![1.0, 0.0, 0.0], 0.0).unwrap()];
    let spec = ReportSpec::for_domain(&case.domain);
    assert!(matches!(
        build_report(&models, &case.rules, &data, &case.domain, &spec, 0),
        Err(lit_core::Error::DimensionMismatch(_))
    ));
}

/// All permutations of `0..n`, enumerated by insertion.
fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn score(a: &[Vec<f64>], p: &[usize]) -> f64 {
    p.iter().enumerate().map(|(i, &k)| a[i][k]).sum()
}

proptest! {
    #[test]
    fn matching_beats_every_permutation(values in prop::collection::vec(0.0..1.0f64, 16)) {
        let a: Vec<Vec<f64>> = values.chunks(4).map(<[f64]>::to_vec).collect();
        let m = match_models(&a).unwrap();
        let perms = all_permutations(4);
        prop_assert_eq!(perms.len(), 24);
        let best = perms.iter().map(|p| score(&a, p)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((m.score - best).abs() < 1e-12);
        for p in &perms {
            prop_assert!(m.score >= score(&a, p) - 1e-12);
        }
    }

    #[test]
    fn cos2_stats_symmetric_and_equivariant(seed in 0u64..500) {
        let models: Vec<MlpParams> = (0..3)
            .map(|k| MlpParams::init(&[2, 4, 1], Activation::Softplus, seed * 3 + k).unwrap())
            .collect();
        let mut r = rng(seed);
        let points: Vec<f64> = (0..10).map(|_| r.random_range(-10.0..10.0)).collect();
        let refs: Vec<&dyn LogOddsModel> = models.iter().map(|m| m as &dyn LogOddsModel).collect();
        let m = cos2_stats(&refs, &points, 2, 1e-6).unwrap();
        let perm = [2usize, 0, 1];
        let permuted: Vec<&dyn LogOddsModel> = perm.iter().map(|&i| refs[i]).collect();
        let p = cos2_stats(&permuted, &points, 2, 1e-6).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                prop_assert_eq!(m[a][b], m[b][a]);
                prop_assert!((p[a][b] - m[perm[a]][perm[b]]).abs() < 1e-15);
            }
        }
    }
}
