//! Exact rational numbers used for durations, dates and script times.

use num_traits::{CheckedAdd, CheckedMul, ToPrimitive, Zero};

pub type Rational = num_rational::Ratio<i64>;

/// Parses a plain decimal literal (`12`, `0.02`, `-1.5`) into an exact rational.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut numer: i64 = 0;
    for b in int_part.bytes().chain(frac_part.bytes()) {
        numer = numer.checked_mul(10)?.checked_add(i64::from(b - b'0'))?;
    }
    let denom = 10i64.checked_pow(u32::try_from(frac_part.len()).ok()?)?;
    let value = Rational::new(numer, denom);
    Some(if negative { -value } else { value })
}

pub fn checked_sum<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Option<Rational> {
    values
        .into_iter()
        .try_fold(Rational::zero(), |acc, v| acc.checked_add(v))
}

pub fn checked_product(a: &Rational, b: &Rational) -> Option<Rational> {
    a.checked_mul(b)
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Renders as `n/d`, or `n` when the denominator is one.
pub fn format(value: &Rational) -> String {
    if *value.denom() == 1 {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Rounds a float to the nearest thousandth, exactly.
pub fn from_f64_thousandths(value: f64) -> Option<Rational> {
    let thousandths = (value * 1000.0).round();
    if !thousandths.is_finite() || thousandths.abs() > 9.0e15 {
        return None;
    }
    Some(Rational::new(thousandths as i64, 1000))
}

/// Serde helper writing the [`format`] form.
pub fn serialize<S: serde::Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format(value))
}
