//! Human-readable rendering of API documents.

use std::fmt::Write;

use serde_json::Value;

fn cell(value: &Value) -> String {
    match value {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Object(map) if map.contains_key("kind") && map.contains_key("id") => {
            format!("{}:{}", cell(&map["kind"]), cell(&map["id"]))
        }
        other => other.to_string(),
    }
}

/// Aligned table with the given columns. An empty list still prints the
/// header row.
pub fn table(rows: &[Value], columns: &[&str]) -> String {
    let mut grid: Vec<Vec<String>> = vec![columns.iter().map(|c| c.to_uppercase()).collect()];
    for row in rows {
        grid.push(
            columns
                .iter()
                .map(|c| row.get(*c).map(cell).unwrap_or_else(|| "-".into()))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..columns.len())
        .map(|i| grid.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in grid {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

const PREFERRED: &[&str] = &[
    "seq", "id", "request_id", "work_item_id", "label", "title", "kind", "state", "priority",
    "rank", "story_points", "score", "action", "actor", "recipient", "delivered",
];

/// Renders any document: lists become tables, objects key/value lines.
pub fn render(value: &Value, columns: Option<&[&str]>) -> String {
    match value {
        Value::Array(rows) => {
            let cols: Vec<&str> = match columns {
                Some(c) => c.to_vec(),
                None => rows
                    .first()
                    .map(|first| PREFERRED.iter().copied().filter(|k| first.get(*k).is_some()).collect())
                    .unwrap_or_default(),
            };
            if cols.is_empty() {
                rows.iter().map(|r| format!("{}\n", cell(r))).collect()
            } else {
                table(rows, &cols)
            }
        }
        Value::Object(map) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            let mut out = String::new();
            for (k, v) in map {
                let _ = writeln!(out, "{k:<width$}  {}", cell(v));
            }
            out
        }
        other => format!("{}\n", cell(other)),
    }
}
