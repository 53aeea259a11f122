//! Deterministic JSON: sorted object keys and floats rounded to nine
//! significant digits.

use serde::Serialize;
use serde_json::{Number, Value};

pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(0.0), 9);
            Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

pub fn to_canonical_value<T: Serialize>(value: &T) -> Value {
    canonicalize(serde_json::to_value(value).unwrap_or(Value::Null))
}

pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_canonical_value(value)).unwrap_or_default();
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_and_sorts() {
        let v = serde_json::json!({"b": 0.1 + 0.2, "a": [1, 2.0000000001]});
        assert_eq!(serde_json::to_string(&canonicalize(v)).unwrap(), r#"{"a":[1,2.0],"b":0.3}"#);
        assert_eq!(round_sig(123456789.123, 9), 123456789.0);
        assert_eq!(round_sig(-0.000123456789123, 3), -0.000123);
    }
}
