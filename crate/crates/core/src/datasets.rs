//! Study-summary tables: CSV ingestion, export, subgroup filters and the
//! three published datasets shipped with the crate.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pooling::{StudySummary, MIN_STUDY_SIZE};
use crate::stats_core::CorrelationValue;

const MOLLOY2014: &str = include_str!("../data/molloy2014.csv");
const SANTOS2016: &str = include_str!("../data/santos2016.csv");
const CHALKIDOU2012: &str = include_str!("../data/chalkidou2012.csv");

/// Built-in dataset names with their raw CSV text.
pub const BUILTINS: [(&str, &str); 3] = [
    ("molloy2014", MOLLOY2014),
    ("santos2016", SANTOS2016),
    ("chalkidou2012", CHALKIDOU2012),
];

const STUDY_COLUMNS: [&str; 2] = ["study", "study_id"];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub study_id: String,
    pub authors: Option<String>,
    pub year: Option<i32>,
    pub n: usize,
    /// As published; clamping happens on the z-scale only.
    pub r: CorrelationValue,
    /// Every other column, keyed by header. Blank cells are omitted.
    pub attributes: BTreeMap<String, String>,
}

impl DatasetRecord {
    pub fn summary(&self) -> StudySummary {
        StudySummary { r: self.r, n: self.n }
    }

    /// Any named field rendered as text.
    pub fn field(&self, name: &str) -> Option<String> {
        match name {
            "study" | "study_id" => Some(self.study_id.clone()),
            "authors" => self.authors.clone(),
            "year" => self.year.map(|y| y.to_string()),
            "n" => Some(self.n.to_string()),
            "r" => Some(self.r.get().to_string()),
            _ => self.attributes.get(name).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<DatasetRecord>,
    /// Attribute columns in file order, for export.
    pub attribute_columns: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.records.iter().map(|r| r.n).sum()
    }

    pub fn studies(&self) -> Vec<StudySummary> {
        self.records.iter().map(DatasetRecord::summary).collect()
    }

    /// Records whose `attribute` equals `value`, in original order.
    pub fn filter(&self, attribute: &str, value: &str) -> Result<Dataset> {
        let mut records = Vec::new();
        for rec in &self.records {
            let field = rec.field(attribute).ok_or_else(|| {
                Error::InvalidParameter(format!("study {} has no value for `{attribute}`", rec.study_id))
            })?;
            if field == value {
                records.push(rec.clone());
            }
        }
        if records.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no studies in {} with {attribute} = {value}",
                self.name
            )));
        }
        Ok(Dataset {
            name: format!("{}[{attribute}={value}]", self.name),
            records,
            attribute_columns: self.attribute_columns.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let has_authors = self.records.iter().any(|r| r.authors.is_some());
        let has_year = self.records.iter().any(|r| r.year.is_some());
        let mut header = vec!["study".to_string()];
        if has_authors {
            header.push("authors".into());
        }
        if has_year {
            header.push("year".into());
        }
        header.push("n".into());
        header.push("r".into());
        header.extend(self.attribute_columns.iter().cloned());

        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![rec.study_id.clone()];
            if has_authors {
                row.push(rec.authors.clone().unwrap_or_default());
            }
            if has_year {
                row.push(rec.year.map(|y| y.to_string()).unwrap_or_default());
            }
            row.push(rec.n.to_string());
            row.push(rec.r.get().to_string());
            for col in &self.attribute_columns {
                row.push(rec.attributes.get(col).cloned().unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(file, &name)
}

/// Parses a study table. Requires `r` and `n` columns; `study`/`study_id`,
/// `authors` and `year` are recognized; anything else becomes an attribute.
pub fn parse_csv<R: Read>(reader: R, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::InvalidParameter(format!("{name}: empty file")));
    }
    let col = |wanted: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(wanted));
    let r_col = col("r").ok_or_else(|| Error::InvalidParameter(format!("{name}: missing column `r`")))?;
    let n_col = col("n").ok_or_else(|| Error::InvalidParameter(format!("{name}: missing column `n`")))?;
    let study_col = STUDY_COLUMNS.iter().find_map(|c| col(c));
    let authors_col = col("authors");
    let year_col = col("year");
    let known = [Some(r_col), Some(n_col), study_col, authors_col, year_col];
    let attribute_idx: Vec<usize> = (0..headers.len()).filter(|i| !known.contains(&Some(*i))).collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line()) as usize;
        let row_err = |message: String| Error::Row { row: line, message };
        let cell = |idx: usize| rec.get(idx).filter(|s| !s.is_empty());

        let r_text = cell(r_col).ok_or_else(|| row_err("missing r".into()))?;
        let r: f64 = r_text
            .parse()
            .map_err(|_| row_err(format!("r is not a number: `{r_text}`")))?;
        let r = CorrelationValue::new(r).map_err(|e| row_err(e.to_string()))?;
        let n_text = cell(n_col).ok_or_else(|| row_err("missing n".into()))?;
        let n: usize = n_text
            .parse()
            .map_err(|_| row_err(format!("n is not a nonnegative integer: `{n_text}`")))?;
        if n < MIN_STUDY_SIZE {
            return Err(row_err(format!("n = {n} is below the minimum of {MIN_STUDY_SIZE}")));
        }
        let study_id = study_col
            .and_then(cell)
            .map(str::to_string)
            .unwrap_or_else(|| (i + 1).to_string());
        if !seen.insert(study_id.clone()) {
            return Err(row_err(format!("duplicate study id `{study_id}`")));
        }
        let year = match year_col.and_then(cell) {
            Some(t) => Some(
                t.parse()
                    .map_err(|_| row_err(format!("year is not an integer: `{t}`")))?,
            ),
            None => None,
        };
        let attributes = attribute_idx
            .iter()
            .filter_map(|&j| cell(j).map(|v| (headers[j].to_string(), v.to_string())))
            .collect();
        records.push(DatasetRecord {
            study_id,
            authors: authors_col.and_then(cell).map(str::to_string),
            year,
            n,
            r,
            attributes,
        });
    }
    if records.is_empty() {
        return Err(Error::InvalidParameter(format!("{name}: no study rows")));
    }
    Ok(Dataset {
        name: name.to_string(),
        records,
        attribute_columns: attribute_idx.iter().map(|&j| headers[j].to_string()).collect(),
    })
}

pub fn builtin(name: &str) -> Result<Dataset> {
    let (name, text) = BUILTINS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| Error::UnknownDataset(name.to_string()))?;
    parse_csv(text.as_bytes(), name)
}

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}
