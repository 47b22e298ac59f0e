//! Flat result records and their JSON and CSV encodings.
//!
//! Floats are written in shortest round-trip form and always carry a `.` or
//! an exponent, so both encodings decode back to identical values and types.
//! Non-finite floats become the strings `inf`, `-inf` and `NaN`.

use indexmap::IndexMap;
use serde_json::{Map, Number, Value as Json};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(i64::from(v))
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    let s = if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    };
    if s.contains(['.', 'e', 'N', 'i']) {
        s
    } else {
        s + ".0"
    }
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultRecord {
    pub fields: IndexMap<String, Value>,
}

impl ResultRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn to_json_value(&self) -> Json {
        let mut map = Map::new();
        for (k, v) in &self.fields {
            let j = match v {
                Value::Null => Json::Null,
                Value::Bool(b) => Json::Bool(*b),
                Value::Int(i) => Json::from(*i),
                Value::Float(f) => Number::from_f64(*f)
                    .map_or_else(|| Json::String(format_float(*f)), Json::Number),
                Value::Str(s) => Json::String(s.clone()),
            };
            map.insert(k.clone(), j);
        }
        Json::Object(map)
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    /// Inverse of [`ResultRecord::to_json`]. Strings spelling a non-finite
    /// float decode as floats.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let Json::Object(map) = serde_json::from_str::<Json>(text).map_err(|e| e.to_string())?
        else {
            return Err("expected a JSON object".into());
        };
        let mut r = ResultRecord::new();
        for (k, v) in map {
            let v = match v {
                Json::Null => Value::Null,
                Json::Bool(b) => Value::Bool(b),
                Json::Number(n) if n.is_i64() => Value::Int(n.as_i64().unwrap()),
                Json::Number(n) => Value::Float(n.as_f64().ok_or("number out of range")?),
                Json::String(s) => match s.as_str() {
                    "inf" | "-inf" | "NaN" => Value::Float(parse_float(&s).unwrap()),
                    _ => Value::Str(s),
                },
                other => return Err(format!("key `{k}`: unsupported value {other}")),
            };
            r.fields.insert(k, v);
        }
        Ok(r)
    }

    pub fn csv_header(&self) -> Vec<String> {
        self.fields.keys().cloned().collect()
    }

    pub fn csv_row(&self) -> Vec<String> {
        self.fields.values().map(csv_cell).collect()
    }

    /// Decodes one CSV row. Empty cells are null; integers, floats and
    /// booleans are recognised by their spelling.
    pub fn from_csv(header: &[String], row: &[String]) -> Result<Self, String> {
        if header.len() != row.len() {
            return Err(format!(
                "{} columns in header, {} in row",
                header.len(),
                row.len()
            ));
        }
        let mut r = ResultRecord::new();
        for (k, cell) in header.iter().zip(row) {
            r.fields.insert(k.clone(), decode_cell(cell));
        }
        Ok(r)
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format_float(*f),
        Value::Str(s) => s.clone(),
    }
}

fn decode_cell(cell: &str) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    match cell {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        _ => {}
    }
    let numeric = cell.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '.');
    if numeric && cell.bytes().all(|b| b.is_ascii_digit() || b == b'-') {
        if let Ok(i) = cell.parse() {
            return Value::Int(i);
        }
    }
    if numeric || matches!(cell, "inf" | "NaN") {
        if let Some(f) = parse_float(cell) {
            return Value::Float(f);
        }
    }
    Value::Str(cell.to_string())
}

/// Writes records sharing one header as CSV with LF line endings.
pub fn write_csv(records: &[ResultRecord]) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    if let Some(first) = records.first() {
        w.write_record(first.csv_header())?;
    }
    for r in records {
        w.write_record(r.csv_row())?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

pub fn read_csv(text: &str) -> Result<Vec<ResultRecord>, String> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    rd.records()
        .map(|row| {
            let row: Vec<String> = row
                .map_err(|e| e.to_string())?
                .iter()
                .map(String::from)
                .collect();
            ResultRecord::from_csv(&header, &row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultRecord {
        let mut r = ResultRecord::new();
        r.set("command", "classify")
            .set("p", 2.0)
            .set("value", 0.1 + 0.2)
            .set("tiny", 5e-324)
            .set("huge", 1.7976931348623157e308)
            .set("inf", f64::INFINITY)
            .set("grid", 2000usize)
            .set("agrees", true)
            .set("missing", None::<f64>)
            .set("notes", "a, b; \"quoted\"");
        r
    }

    #[test]
    fn float_spelling() {
        assert_eq!(format_float(2.0), "2.0");
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(1e300), "1e300");
        assert_eq!(format_float(-2.5e-7), "-2.5e-7");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(ResultRecord::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let text = write_csv(std::slice::from_ref(&r)).unwrap();
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert_eq!(read_csv(&text).unwrap(), vec![r]);
    }

    #[test]
    fn nan_round_trips_as_float() {
        let mut r = ResultRecord::new();
        r.set("x", f64::NAN);
        let back = ResultRecord::from_json(&r.to_json()).unwrap();
        assert!(matches!(back.get("x"), Some(Value::Float(v)) if v.is_nan()));
    }
}
