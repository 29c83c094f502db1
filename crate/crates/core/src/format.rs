//! Number formatting shared by the CSV writers.

/// Formats `x` like C's `%.{sig}g`: `sig` significant digits, fixed notation
/// for decimal exponents in `[-4, sig)`, scientific otherwise, trailing zeros
/// removed. Non-finite values print as `nan`, `inf`, `-inf`.
pub fn format_g(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::format_g;

    #[test]
    fn matches_c_printf_g() {
        // Expected strings from printf("%.12g").
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333"),
            (2.0 / 3.0, "0.666666666667"),
            (123456.789, "123456.789"),
            (1e-5, "1e-05"),
            (1.5e-7, "1.5e-07"),
            (0.000123456789012345, "0.000123456789012"),
            (0.00012, "0.00012"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (-2.5, "-2.5"),
            (1e100, "1e+100"),
            (9.9999999999999e-6, "1e-05"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g(x, 12), want, "x = {x:e}");
        }
        assert_eq!(format_g(f64::NAN, 12), "nan");
        assert_eq!(format_g(f64::NEG_INFINITY, 12), "-inf");
    }
}
