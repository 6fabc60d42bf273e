//! Number formatting for CSV output: 12 significant digits, shortest form.

/// `x` with 12 significant digits, trailing zeros dropped; fixed notation for
/// exponents in `[-5, 12)`, scientific otherwise.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Join already formatted fields with commas.
pub fn row<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    fields.into_iter().map(|f| f.as_ref().to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn formats() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(num(123456.0), "123456");
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(3.5472470046e-4), "0.00035472470046");
        assert_eq!(num(1.5e20), "1.5e20");
        assert_eq!(num(999999999999.9), "1e12");
        assert_eq!(num(f64::NAN), "nan");
        for &x in &[0.776514, 1e-3, 42.125, 7.0e-6] {
            let back: f64 = num(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-11 * x.abs());
        }
    }
}
