//! Display rounding used by every rendered number.
//!
//! Percentages and percent changes round to the nearest integer (half away
//! from zero); depths and word counts show two decimals. Undefined metrics
//! render as an em dash.

pub const UNDEFINED: &str = "—";
const MINUS: char = '\u{2212}';

/// Integer percent, e.g. `0.15` -> `"15%"`.
pub fn percent(fraction: f64) -> String {
    format!("{}%", signed_int(fraction * 100.0, false))
}

/// Signed integer percent change, e.g. `-40.95` -> `"−41%"`, `54.9` -> `"+55%"`.
pub fn percent_change(pct: f64) -> String {
    format!("{}%", signed_int(pct, true))
}

/// Two-decimal value or the undefined marker.
pub fn two_decimals(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => UNDEFINED.to_string(),
    }
}

/// One-decimal percent, e.g. `0.3095` -> `"31.0%"`.
pub fn percent_one_decimal(fraction: f64) -> String {
    let v = (fraction * 1000.0).round() / 10.0;
    format!("{:.1}%", if v == 0.0 { 0.0 } else { v })
}

fn signed_int(value: f64, plus: bool) -> String {
    let r = value.round() as i64;
    match r.signum() {
        -1 => format!("{MINUS}{}", -r),
        1 if plus => format!("+{r}"),
        _ => format!("{r}"),
    }
}

/// Compact number for chart geometry: at most four decimals, trailing zeros trimmed.
pub fn compact(value: f64) -> String {
    let s = format!("{:.4}", value);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
