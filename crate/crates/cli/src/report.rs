//! JSON reports with sorted keys and floats rounded to 12 significant digits.
//! Non-finite values are written as the strings `"inf"`, `"-inf"`, `"nan"`.

use serde_json::{Map, Value};

const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits, or a string for
/// non-finite input.
pub fn number(x: f64) -> Value {
    if x.is_nan() {
        return Value::String("nan".into());
    }
    if x.is_infinite() {
        return Value::String(if x > 0.0 { "inf" } else { "-inf" }.into());
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().expect("formatted float");
    // Normalize −0 so that equal reports compare byte for byte.
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

pub fn numbers(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| number(x)).collect())
}

/// Key/value builder; `serde_json::Map` keeps keys sorted.
#[derive(Debug, Default)]
pub struct Report(Map<String, Value>);

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn render(self) -> String {
        let mut text = serde_json::to_string_pretty(&Value::Object(self.0)).expect("JSON value");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_and_special_values() {
        assert_eq!(number(0.1 + 0.2).to_string(), "0.3");
        assert_eq!(number(1.0 / 3.0).to_string(), "0.333333333333");
        assert_eq!(number(-2.0e-20 / 3.0).to_string(), "-6.66666666667e-21");
        assert_eq!(number(123456789012345.0).to_string(), "123456789012000.0");
        assert_eq!(number(-0.0).to_string(), "0.0");
        assert_eq!(number(f64::INFINITY), Value::String("inf".into()));
        assert_eq!(number(f64::NEG_INFINITY), Value::String("-inf".into()));
        assert_eq!(number(f64::NAN), Value::String("nan".into()));
    }

    #[test]
    fn keys_are_sorted() {
        let text = Report::new().with("value", number(1.0)).with("h", numbers(&[0.5])).with("b", Value::Null).render();
        let b = text.find("\"b\"").unwrap();
        let h = text.find("\"h\"").unwrap();
        let v = text.find("\"value\"").unwrap();
        assert!(b < h && h < v);
        assert!(text.ends_with("}\n"));
    }
}
