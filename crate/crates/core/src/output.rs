//! Numeric formatting shared by every CSV and JSON artifact.

/// Round to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Shortest decimal rendering of `x` rounded to 9 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    if r != 0.0 && !(1e-5..1e16).contains(&r.abs()) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

pub fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(round_sig).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(123456789.123), "123456789");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(-2.0), "-2");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
        assert_eq!(fmt_sig(4.438715351e-14), "4.43871535e-14");
        assert_eq!(fmt_sig(-2.5e20), "-2.5e20");
    }
}
