use std::io::{self, Write};

use anyhow::Result;
use serde::Serialize;
use serde_json::{Map, Value};

use corrmeta::{builtin, builtin_names};

use crate::args::{DatasetAction, Format};
use crate::report::csv_writer;

#[derive(Debug, Serialize)]
struct ListRow {
    name: &'static str,
    studies: usize,
    participants: usize,
}

pub fn run(action: &DatasetAction) -> Result<()> {
    let mut out = io::stdout().lock();
    match action {
        DatasetAction::List { format } => {
            let rows = builtin_names()
                .into_iter()
                .map(|name| {
                    let d = builtin(name)?;
                    Ok(ListRow {
                        name,
                        studies: d.len(),
                        participants: d.n_total(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            match format {
                Format::Csv => {
                    let mut w = csv_writer(&mut out);
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &rows)?;
                    writeln!(out)?;
                }
            }
        }
        DatasetAction::Show { name, format } => {
            let d = builtin(name)?;
            match format {
                Format::Csv => d.write_csv(&mut out)?,
                Format::Json => {
                    let mut columns = vec!["study", "authors", "year", "n", "r"];
                    columns.extend(d.attribute_columns.iter().map(String::as_str));
                    let records: Vec<Value> = d
                        .records
                        .iter()
                        .map(|rec| {
                            let mut obj = Map::new();
                            for c in &columns {
                                let v = match *c {
                                    "n" => Value::from(rec.n),
                                    "r" => Value::from(rec.r.get()),
                                    "year" => rec.year.map_or(Value::Null, Value::from),
                                    other => rec.field(other).map_or(Value::Null, Value::from),
                                };
                                obj.insert(c.to_string(), v);
                            }
                            Value::Object(obj)
                        })
                        .collect();
                    serde_json::to_writer_pretty(&mut out, &records)?;
                    writeln!(out)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
