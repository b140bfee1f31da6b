//! Deterministic output: a hand-rolled JSON emitter with frozen field order
//! and floats printed with 17 significant digits, and the CSV table writer
//! for sweeps. Identical inputs produce byte-identical bytes.

use liefloq::models::Stability;

/// 17 significant digits, locale-free; non-finite values are not valid JSON
/// numbers and serialize as null (CSV: empty).
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn fmt_float_csv(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

pub fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn json_float_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
    format!("[{}]", items.join(","))
}

/// Ordered-key JSON object builder; insertion order is the output order.
#[derive(Default)]
pub struct JsonObject {
    fields: Vec<(String, String)>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raw(mut self, key: &str, value: String) -> Self {
        self.fields.push((key.to_string(), value));
        self
    }

    pub fn string(self, key: &str, value: &str) -> Self {
        let encoded = json_string(value);
        self.raw(key, encoded)
    }

    pub fn float(self, key: &str, value: f64) -> Self {
        let encoded = fmt_float(value);
        self.raw(key, encoded)
    }

    pub fn integer(self, key: &str, value: u64) -> Self {
        self.raw(key, value.to_string())
    }

    pub fn boolean(self, key: &str, value: bool) -> Self {
        self.raw(key, value.to_string())
    }

    pub fn null(self, key: &str) -> Self {
        self.raw(key, "null".to_string())
    }

    pub fn floats(self, key: &str, values: &[f64]) -> Self {
        let encoded = json_float_array(values);
        self.raw(key, encoded)
    }

    pub fn optional_floats(self, key: &str, values: Option<&[f64]>) -> Self {
        match values {
            Some(v) => self.floats(key, v),
            None => self.null(key),
        }
    }

    pub fn strings(self, key: &str, values: &[String]) -> Self {
        let items: Vec<String> = values.iter().map(|s| json_string(s)).collect();
        self.raw(key, format!("[{}]", items.join(",")))
    }

    pub fn finish(self) -> String {
        let body: Vec<String> = self
            .fields
            .into_iter()
            .map(|(k, v)| format!("{}:{}", json_string(&k), v))
            .collect();
        format!("{{{}}}", body.join(","))
    }
}

/// One sweep row; `values` are positional and match the header contract.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub values: Vec<Option<f64>>,
    pub stability: Option<Stability>,
    pub status: String,
}

/// Assembles the CSV: `.` decimal, comma separator, header row. Paul-trap
/// sweeps carry the stability column right before status; other models have
/// `values` columns followed by status only.
pub fn sweep_csv(header: &[&str], rows: &[SweepRow], with_stability: bool) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut cells: Vec<String> = row
            .values
            .iter()
            .map(|v| v.map(fmt_float_csv).unwrap_or_default())
            .collect();
        if with_stability {
            cells.push(row.stability.map(|s| s.to_string()).unwrap_or_default());
        }
        cells.push(row.status.clone());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
