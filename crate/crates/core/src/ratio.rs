//! Exact rational helpers shared by the metrics, miners and output code.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact ratio used for every reported quality measure and threshold.
pub type Rational = Ratio<i128>;

/// `num / den`, with `0/0` read as zero (a body that never fires).
pub fn ratio(num: u64, den: u64) -> Rational {
    if den == 0 {
        Rational::zero()
    } else {
        Rational::new(num as i128, den as i128)
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Six fractional digits, the fixed width of every metric column.
pub fn format_decimal(r: &Rational) -> String {
    format!("{:.6}", to_f64(r))
}

/// Parses `0.1`, `1/3`, `1` or `.25` into an exact rational.
pub fn parse_ratio(text: &str) -> Result<Rational> {
    let t = text.trim();
    let bad = || Error::InvalidRatio(text.to_string());
    if let Some((n, d)) = t.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| bad())?;
        let d: i128 = d.trim().parse().map_err(|_| bad())?;
        if d <= 0 || n < 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (int_part, frac_part) = t.split_once('.').unwrap_or((t, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    if frac_part.len() > 30 {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = digits.parse().map_err(|_| bad())?;
    let denom = 10i128.pow(frac_part.len() as u32);
    Ok(Rational::new(numer, denom))
}
