//! Canonical JSON: sorted keys, no whitespace, floats rounded to 9 significant
//! digits and printed in their shortest round-tripping form, trailing newline.

use serde::Serialize;
use serde_json::{Number, Value};

/// Rounds to 9 significant decimal digits. Idempotent; maps `-0.0` to `0.0`.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let r: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| round_sig(x)).collect()
}

fn write_number(n: &Number, out: &mut String) {
    if n.is_u64() || n.is_i64() {
        out.push_str(&n.to_string());
        return;
    }
    let x = round_sig(n.as_f64().unwrap_or(0.0));
    if x.fract() == 0.0 && x.abs() < 1e15 {
        out.push_str(&format!("{}", x as i64));
    } else {
        // serde_json prints floats with ryu, which is shortest round-trip.
        out.push_str(&Number::from_f64(x).map(|n| n.to_string()).unwrap_or_else(|| "null".into()));
    }
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

pub fn value_to_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, &mut out);
    out.push('\n');
    out
}

pub fn to_canonical_string<T: Serialize>(v: &T) -> Result<String, serde_json::Error> {
    Ok(value_to_string(&serde_json::to_value(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig(123456789012.0), 123456789000.0);
        assert_eq!(round_sig(-0.0).to_bits(), 0.0f64.to_bits());
        for x in [1.0 / 7.0, -2.5e-7, 6.02214076e23, 0.95] {
            assert_eq!(round_sig(round_sig(x)), round_sig(x));
        }
    }

    #[test]
    fn layout() {
        let v = json!({"b": [1.0, 0.5, 1e-7, -0.0], "a": {"z": 3, "y": "q\""}, "c": null});
        assert_eq!(value_to_string(&v), "{\"a\":{\"y\":\"q\\\"\",\"z\":3},\"b\":[1,0.5,1e-7,0],\"c\":null}\n");
    }

    #[test]
    fn reparse_is_stable() {
        let v = json!({"x": [0.1 + 0.2, 1.0 / 3.0, 2.0f64.sqrt() * 1e9, 12345.678901234]});
        let once = value_to_string(&v);
        let back: Value = serde_json::from_str(&once).unwrap();
        assert_eq!(value_to_string(&back), once);
    }
}
