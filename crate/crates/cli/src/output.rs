use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cellquant::{Error, Result};
use serde::Serialize;
use serde_json::Value;

use crate::Context;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            a.iter().map(scalar).collect::<Vec<_>>().join(", ")
        }
        Value::Array(a) => format!("[{} items]", a.len()),
        Value::Object(o) => format!("{{{} fields}}", o.len()),
        other => other.to_string(),
    }
}

/// Two-column rendering of an object's top-level fields.
pub fn key_value_table(summary: &Value) -> String {
    let Value::Object(map) = summary else {
        return scalar(summary) + "\n";
    };
    let width = map.keys().map(|k| k.chars().count()).max().unwrap_or(0);
    map.iter().map(|(k, v)| format!("{:<w$}  {}\n", k, scalar(v), w = width)).collect()
}

/// Prints the summary as JSON, or as `table` (falling back to a key/value
/// rendering) when `--table` was given.
pub fn emit(ctx: &Context, summary: &Value, table: Option<String>) {
    if ctx.table {
        print!("{}", table.unwrap_or_else(|| key_value_table(summary)));
    } else {
        println!("{}", serde_json::to_string_pretty(summary).expect("summary serializes"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn table_of_flat_summary() {
        let t = key_value_table(&json!({"n": 2, "name": "x", "ids": [1, 2]}));
        assert_eq!(t, "ids   1, 2\nn     2\nname  x\n");
    }
}
