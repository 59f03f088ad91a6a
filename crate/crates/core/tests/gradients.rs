use samplernn::model::{gradient_suite, SUITE_LAYERS};
use samplernn::numerics::{Fault, GradCheckOptions};

#[test]
fn every_layer_matches_finite_differences() {
    let report = gradient_suite(1e-4, &GradCheckOptions::default()).unwrap();
    let layers: Vec<_> = report.checks.iter().map(|c| c.layer).collect();
    assert_eq!(layers, SUITE_LAYERS);
    assert!(report.passed(), "{report}");
    assert!(report.max_rel_err() < 1e-4);
}

#[test]
fn suite_is_seeded() {
    let a = gradient_suite(1e-4, &GradCheckOptions::default()).unwrap();
    let b = gradient_suite(1e-4, &GradCheckOptions::default()).unwrap();
    assert_eq!(a.to_string(), b.to_string());
}

#[test]
fn corrupted_backward_rule_fails_the_suite() {
    let opts = GradCheckOptions {
        fault: Some(Fault::SigmoidBackward),
        ..Default::default()
    };
    let report = gradient_suite(1e-4, &opts).unwrap();
    assert!(!report.passed());
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.report.passed()).map(|c| c.layer).collect();
    for layer in ["sigmoid", "lstm_cell", "gru_cell", "model_lstm", "model_gru"] {
        assert!(failed.contains(&layer), "{layer} not caught: {report}");
    }
    assert!(!failed.contains(&"tanh") && !failed.contains(&"affine"));
}

#[test]
fn report_has_one_line_per_parameter_group() {
    let report = gradient_suite(1e-4, &GradCheckOptions::default()).unwrap();
    let groups: usize = report.checks.iter().map(|c| c.report.params.len()).sum();
    let text = report.to_string();
    assert_eq!(text.lines().count(), groups);
    assert!(text.lines().all(|l| l.ends_with(" ok")));
    assert!(text.contains("lstm_cell") && text.contains("frame.l1.wx.v"));
}
