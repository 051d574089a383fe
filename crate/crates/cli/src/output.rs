//! Byte-stable CSV and JSON emission. Floats are always written with 17
//! significant digits in scientific notation.

use serde_json::{Map, Number, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn csv_text(&self) -> String {
        match self {
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) if v.is_finite() => {
                let n: Number = format!("{v:.16e}")
                    .parse()
                    .expect("formatted float is a JSON number");
                Value::Number(n)
            }
            Cell::Float(_) | Cell::Empty => Value::Null,
            Cell::Int(v) => Value::Number((*v).into()),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn json_rows(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (c, cell) in self.columns.iter().zip(row) {
                        obj.insert((*c).to_string(), cell.json());
                    }
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// The result of one subcommand: the main table, plus optional extra
/// tables that appear only in JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    pub extras: Vec<(&'static str, Table)>,
}

pub struct Envelope<'a> {
    pub command: &'a str,
    pub seed: Option<u64>,
    pub config: Vec<(&'static str, String)>,
    pub report: &'a Report,
}

pub fn to_csv(table: &Table) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Config(format!("csv output: {e}"));
    w.write_record(&table.columns).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv_text)).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Config(format!("csv output: {e}")))
}

pub fn to_json(env: &Envelope) -> Vec<u8> {
    let mut root = Map::new();
    root.insert("tool".into(), Value::String("abwv".into()));
    root.insert(
        "version".into(),
        Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    root.insert("command".into(), Value::String(env.command.into()));
    root.insert(
        "seed".into(),
        env.seed.map_or(Value::Null, |s| Value::Number(s.into())),
    );
    let mut config = Map::new();
    for (k, v) in &env.config {
        config.insert((*k).to_string(), Value::String(v.clone()));
    }
    root.insert("config".into(), Value::Object(config));
    let mut result = Map::new();
    result.insert("rows".into(), env.report.table.json_rows());
    for (name, table) in &env.report.extras {
        result.insert((*name).to_string(), table.json_rows());
    }
    root.insert("result".into(), Value::Object(result));
    let mut out = serde_json::to_vec_pretty(&Value::Object(root)).expect("JSON values serialize");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut t = Table::new(&["name", "value", "count", "maybe"]);
        t.push(vec!["a,b".into(), 4e6.into(), 3usize.into(), Cell::Empty]);
        t.push(vec![
            "c".into(),
            (-0.1).into(),
            0usize.into(),
            Some(1.5).into(),
        ]);
        Report {
            table: t,
            extras: Vec::new(),
        }
    }

    #[test]
    fn csv_quotes_and_formats() {
        let text = String::from_utf8(to_csv(&sample().table).unwrap()).unwrap();
        assert_eq!(
            text,
            "name,value,count,maybe\n\"a,b\",4.0000000000000000e6,3,\n\
             c,-1.0000000000000001e-1,0,1.5000000000000000e0\n"
        );
    }

    #[test]
    fn json_keeps_order_and_digits() {
        let report = sample();
        let env = Envelope {
            command: "test",
            seed: Some(7),
            config: vec![("b", "2".into()), ("a", "1".into())],
            report: &report,
        };
        let text = String::from_utf8(to_json(&env)).unwrap();
        assert!(text.contains("4.0000000000000000e+6"));
        let b = text.find("\"b\"").unwrap();
        let a = text.find("\"a\"").unwrap();
        assert!(b < a);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["rows"][0]["maybe"], Value::Null);
        assert_eq!(v["result"]["rows"][1]["value"].as_f64(), Some(-0.1));
    }
}
