//! Number formatting shared by every output format.

use serde::Serialize;
use serde_json::Value;

/// Rounds to `digits` significant digits through decimal formatting, so the
/// printed value is stable across platforms.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits as usize - 1, x)
        .parse()
        .unwrap_or(x)
}

pub fn num(x: f64, digits: u32) -> String {
    let y = round_sig(x, digits);
    if y.is_nan() {
        "nan".to_string()
    } else if y != 0.0 && (y.abs() < 1e-4 || y.abs() >= 1e9) {
        format!("{y:e}")
    } else {
        format!("{y}")
    }
}

fn round_value(v: &mut Value, digits: u32) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(r) = serde_json::Number::from_f64(round_sig(x, digits)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|it| round_value(it, digits)),
        Value::Object(map) => map.values_mut().for_each(|it| round_value(it, digits)),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to `digits` significant digits.
pub fn json<T: Serialize>(value: &T, digits: u32) -> String {
    let mut v = serde_json::to_value(value).expect("output types serialize");
    round_value(&mut v, digits);
    let mut out = serde_json::to_string_pretty(&v).expect("values serialize");
    out.push('\n');
    out
}

/// Comma-separated lines; every cell is already formatted.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Right-aligned columns.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect();
        padded.join("  ") + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
