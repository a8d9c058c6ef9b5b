use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

/// Standard output or the `--output` file.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `# key: value` lines, one per top-level field.
pub fn write_comment_block<W: Write + ?Sized>(out: &mut W, value: &impl Serialize) -> Result<()> {
    let Value::Object(map) = serde_json::to_value(value)? else {
        anyhow::bail!("config must serialize to an object");
    };
    for (k, v) in map {
        let text = match v {
            Value::String(s) => s,
            other => other.to_string(),
        };
        writeln!(out, "# {k}: {text}")?;
    }
    Ok(())
}

/// `{"config": .., <extra>.., "rows": [..]}` with a trailing newline.
pub fn write_json<W: Write + ?Sized>(
    out: &mut W,
    config: &impl Serialize,
    extra: Vec<(&str, Value)>,
    rows: &[impl Serialize],
) -> Result<()> {
    let mut doc = Map::new();
    doc.insert("config".into(), serde_json::to_value(config)?);
    for (k, v) in extra {
        doc.insert(k.into(), v);
    }
    doc.insert("rows".into(), serde_json::to_value(rows)?);
    serde_json::to_writer_pretty(&mut *out, &Value::Object(doc))?;
    writeln!(out)?;
    Ok(())
}

pub fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}
