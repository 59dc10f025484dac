//! Number formatting shared by the CSV writers.

/// Rounds to 12 significant digits and prints the shortest form that parses
/// back to the rounded value. Plain notation in `[1e-5, 1e15)`, scientific
/// otherwise.
pub fn fmt_sig12(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if rounded == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}
