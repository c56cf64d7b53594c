/// 17 significant digits; parses back to the identical `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}
