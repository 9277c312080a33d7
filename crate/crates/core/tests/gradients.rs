//! Central finite-difference checks of every differentiable op at f64.

use tilesr_core::gradsuite::{cases, SEEDS, TOLERANCE};

#[test]
fn every_op_matches_central_differences() {
    let cases = cases();
    assert!(cases.len() >= 30);
    let mut failures = Vec::new();
    for case in &cases {
        for seed in SEEDS {
            let err = case.check(seed).unwrap();
            if err >= TOLERANCE {
                failures.push(format!("{} seed {seed}: {err:.3e}", case.name));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "relative error above {TOLERANCE:e}:\n{}",
        failures.join("\n")
    );
}

#[test]
fn wrong_gradients_are_detected() {
    use tilesr_core::tensor::gradcheck::grad_check;
    use tilesr_core::tensor::ops;
    use tilesr_core::Tensor;
    // round() has zero analytic gradient but a finite-difference slope of
    // 1/step across a rounding boundary; a correct checker must flag it.
    let x = Tensor::from_vec([1], vec![0.5 - 2e-6]).unwrap();
    let err = grad_check(
        |t| {
            let v = t[0].data()[0].round();
            Ok(ops::sum(&ops::affine(&t[0], 0.0, v)))
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(err > TOLERANCE);
}
