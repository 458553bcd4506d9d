use ergolab::combinatorics::{parse_arc, parse_real, rotation_recurrence_terms, syndeticity_gap, FiniteSet};
use ergolab::PolynomialFamily;

/// Return times `{n : μ(A ∩ T^{-[√2n²]}A) > μ(A)² − ε}` for a quarter arc
/// under rotation by √3 come with bounded gaps.
#[test]
fn return_times_of_a_quarter_arc_are_syndetic() {
    let alpha = parse_real("sqrt(3)").unwrap();
    let arc = parse_arc("0", "0.25").unwrap();
    let family = PolynomialFamily::parse(&["sqrt(2)*t^2"]).unwrap();
    let n = 10_000u64;
    let terms = rotation_recurrence_terms(&alpha, &arc, &family, n).unwrap();
    let threshold = 1.0 / 16.0 - 0.05;

    // same terms from plain floating point: overlap of [0, 1/4) with its shift by d
    let s3 = 3f64.sqrt();
    for (i, t) in terms.iter().enumerate().step_by(97) {
        let m = (i + 1) as f64;
        let k = (std::f64::consts::SQRT_2 * m * m).floor();
        let d = (k * s3).rem_euclid(1.0);
        let overlap = (0.25 - d).max(0.0) + (d - 0.75).max(0.0);
        assert!((t - overlap).abs() < 1e-6, "n = {}: {t} vs {overlap}", i + 1);
    }

    let r = FiniteSet::from_predicate(n, |m| terms[(m - 1) as usize] > threshold);
    let gaps = syndeticity_gap(&r).unwrap();
    assert!(gaps.interior <= 50, "{gaps:?}");
    assert!(gaps.leading <= 50 && gaps.trailing <= 50, "{gaps:?}");
}
