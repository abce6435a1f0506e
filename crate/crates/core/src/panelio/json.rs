use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Number, Value};

use super::{check_version, read_file, write_file, PanelIoError, FORMAT_VERSION};

const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to 12 significant decimal digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(round_significant(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        other => other,
    }
}

/// Pretty JSON with sorted object keys and 12-digit floats, newline-terminated.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String, PanelIoError> {
    let tree = serde_json::to_value(value).map_err(|e| PanelIoError::Serialize(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&canonicalize(tree))
        .map_err(|e| PanelIoError::Serialize(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Wraps a report in a versioned envelope: `{format_version, kind, report}`.
pub fn report_to_string<T: Serialize>(kind: &str, report: &T) -> Result<String, PanelIoError> {
    let body = serde_json::to_value(report).map_err(|e| PanelIoError::Serialize(e.to_string()))?;
    let mut envelope = Map::new();
    envelope.insert("format_version".into(), Value::from(FORMAT_VERSION));
    envelope.insert("kind".into(), Value::from(kind));
    envelope.insert("report".into(), body);
    to_canonical_json(&Value::Object(envelope))
}

pub fn report_from_str<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, PanelIoError> {
    check_version(kind, text)?;
    let mut envelope: Map<String, Value> =
        serde_json::from_str(text).map_err(|e| PanelIoError::parse(kind, &e))?;
    match envelope.get("kind").and_then(Value::as_str) {
        Some(k) if k == kind => {}
        other => {
            return Err(PanelIoError::Serialize(format!(
                "expected a '{kind}' report, found {other:?}"
            )))
        }
    }
    let body = envelope.remove("report").unwrap_or(Value::Null);
    serde_json::from_value(body).map_err(|e| PanelIoError::parse(kind, &e))
}

pub fn save_report<T: Serialize>(kind: &str, report: &T, path: &Path) -> Result<(), PanelIoError> {
    write_file(path, &report_to_string(kind, report)?)
}

pub fn load_report<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T, PanelIoError> {
    report_from_str(kind, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding() {
        assert_eq!(round_significant(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_significant(0.1), 0.1);
        assert_eq!(round_significant(123456.7890123456), 123456.789012);
        assert_eq!(round_significant(0.0), 0.0);
    }

    #[test]
    fn canonical_json_sorts_keys_and_rounds() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: u32,
            mid: Vec<f64>,
        }
        let text = to_canonical_json(&S {
            zeta: 2.0 / 3.0,
            alpha: 7,
            mid: vec![1.0, f64::NAN],
        })
        .unwrap();
        assert_eq!(
            text,
            "{\n  \"alpha\": 7,\n  \"mid\": [\n    1.0,\n    null\n  ],\n  \"zeta\": 0.666666666667\n}\n"
        );
    }

    #[test]
    fn report_envelope_checks_kind_and_version() {
        let text = report_to_string("retest", &vec![1.5, 2.5]).unwrap();
        let back: Vec<f64> = report_from_str("retest", &text).unwrap();
        assert_eq!(back, vec![1.5, 2.5]);
        assert!(report_from_str::<Vec<f64>>("evaluation", &text).is_err());
        let future = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            report_from_str::<Vec<f64>>("retest", &future),
            Err(PanelIoError::Version { found: Some(2), .. })
        ));
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent_and_close(x in -1e6f64..1e6) {
            let r = round_significant(x);
            prop_assert_eq!(round_significant(r), r);
            prop_assert!((r - x).abs() <= x.abs() * 1e-11 + f64::MIN_POSITIVE);
        }
    }
}
