use juntawalk::shallow::{self, Phase1Config};
use juntawalk::verify::{self, SuiteOptions};
use juntawalk::walk::PairSample;
use juntawalk::Result;

fn off_by_one_sign(pairs: &[PairSample], cfg: &Phase1Config) -> Result<Vec<f64>> {
    let mut g = shallow::phase1_closed_form_update(pairs, cfg)?;
    if let Some(v) = g.iter_mut().find(|v| **v != 0.0) {
        *v = -*v;
    }
    Ok(g)
}

fn tiny_drift(pairs: &[PairSample], cfg: &Phase1Config) -> Result<Vec<f64>> {
    let mut g = shallow::phase1_closed_form_update(pairs, cfg)?;
    for v in &mut g {
        *v *= 1.0 + 1e-8;
    }
    Ok(g)
}

#[test]
fn reference_closed_form_passes() {
    assert!(verify::closed_form_agreement(shallow::phase1_closed_form_update).unwrap().pass);
}

#[test]
fn corrupted_closed_form_is_caught() {
    for bad in [off_by_one_sign as verify::ClosedForm, tiny_drift] {
        let out = verify::closed_form_agreement(bad).unwrap();
        assert!(!out.pass, "{}", out.detail);
    }
}

#[test]
fn fast_criteria_pass_and_reproduce() {
    let opts = SuiteOptions {
        only: Some(vec![1, 2, 3, 8, 11]),
        determinism: true,
    };
    let results = verify::run_suite(&opts, |_| {});
    assert_eq!(results.len(), 6);
    for r in &results {
        assert!(r.pass, "{}", r.line());
    }
    assert_eq!(results.last().unwrap().id, 12);
}

#[test]
fn result_lines_carry_the_verdict() {
    let r = verify::criteria().into_iter().find(|c| c.id == 11).unwrap().run();
    let line = r.line();
    assert!(line.starts_with("[PASS] C11"), "{line}");
    assert!(verify::suite_passed(&[r]));
}

#[test]
fn baseline_bound_formula() {
    let b = verify::baseline_step_bound(50, 5, 0.9);
    assert!((b - 20.0 * 50.0 / 0.9 * 6f64.ln()).abs() < 1e-9);
}
