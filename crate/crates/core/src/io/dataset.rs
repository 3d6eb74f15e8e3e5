//! CSV ingest and export of datasets.
//!
//! Factor columns are read as categorical labels; levels are numbered in
//! order of first appearance. Repeated level combinations are kept as
//! replicates and absent combinations are simply missing cells.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, Record};
use crate::tensor::FactorLayout;
use crate::viz::{csv_err, finish_csv, write_text};

struct Table {
    headers: Vec<String>,
    /// (file line, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e, "header"))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e, "malformed row"))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    Ok(Table { headers, rows })
}

fn parse_err(e: csv::Error, what: &str) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        rows: vec![line],
        message: format!("{what}: {e}"),
    }
}

fn column(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_responses(table: &Table, col: usize, name: &str) -> Result<Vec<f64>> {
    let mut bad = Vec::new();
    let ys: Vec<f64> = table
        .rows
        .iter()
        .map(|(line, fields)| match fields[col].parse::<f64>() {
            Ok(y) if y.is_finite() => y,
            _ => {
                bad.push(*line);
                f64::NAN
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::Parse {
            rows: bad,
            message: format!("response `{name}` is not a finite number"),
        });
    }
    Ok(ys)
}

/// Reads `factors` and `response` from a CSV with a header row.
pub fn parse_dataset_csv(path: &Path, factors: &[&str], response: &str) -> Result<Dataset> {
    if factors.is_empty() {
        return Err(Error::arg("at least one factor column is required"));
    }
    let table = read_table(path)?;
    let fcols = factors
        .iter()
        .map(|f| column(&table.headers, f))
        .collect::<Result<Vec<_>>>()?;
    let ycol = column(&table.headers, response)?;
    let ys = parse_responses(&table, ycol, response)?;

    let mut level_names: Vec<Vec<String>> = vec![Vec::new(); factors.len()];
    let mut lookup: Vec<std::collections::HashMap<String, usize>> = vec![Default::default(); factors.len()];
    let mut empty = Vec::new();
    let mut records = Vec::with_capacity(table.rows.len());
    for ((line, fields), y) in table.rows.iter().zip(ys) {
        let mut cell = Vec::with_capacity(fcols.len());
        for (v, &c) in fcols.iter().enumerate() {
            let label = &fields[c];
            if label.is_empty() {
                empty.push(*line);
            }
            let next = level_names[v].len();
            let idx = *lookup[v].entry(label.clone()).or_insert_with(|| {
                level_names[v].push(label.clone());
                next
            });
            cell.push(idx);
        }
        records.push(Record { cell, y });
    }
    if !empty.is_empty() {
        empty.dedup();
        return Err(Error::Parse {
            rows: empty,
            message: "empty factor label".into(),
        });
    }
    let layout = FactorLayout::new(factors.iter().map(|s| s.to_string()).collect(), level_names)?;
    Dataset::new(layout, records, response)
}

/// Reads a CSV against an existing layout (e.g. a test set for a fitted
/// model). Rows with levels the layout does not know are skipped; their
/// line numbers are returned alongside the dataset.
pub fn parse_dataset_csv_with_layout(
    path: &Path,
    layout: &FactorLayout,
    response: &str,
) -> Result<(Dataset, Vec<usize>)> {
    let table = read_table(path)?;
    let fcols = layout
        .factor_names()
        .iter()
        .map(|f| column(&table.headers, f))
        .collect::<Result<Vec<_>>>()?;
    let ycol = column(&table.headers, response)?;
    let ys = parse_responses(&table, ycol, response)?;
    let mut skipped = Vec::new();
    let mut records = Vec::new();
    'rows: for ((line, fields), y) in table.rows.iter().zip(ys) {
        let mut cell = Vec::with_capacity(fcols.len());
        for (v, &c) in fcols.iter().enumerate() {
            match layout.level_index(v, &fields[c]) {
                Some(i) => cell.push(i),
                None => {
                    skipped.push(*line);
                    continue 'rows;
                }
            }
        }
        records.push(Record { cell, y });
    }
    Ok((Dataset::new(layout.clone(), records, response)?, skipped))
}

/// Reads only factor columns and returns the matching cells of `layout`;
/// unknown labels are an error.
pub fn parse_cells_csv(path: &Path, layout: &FactorLayout) -> Result<Vec<Vec<usize>>> {
    let table = read_table(path)?;
    let fcols = layout
        .factor_names()
        .iter()
        .map(|f| column(&table.headers, f))
        .collect::<Result<Vec<_>>>()?;
    let mut bad = Vec::new();
    let cells: Vec<Vec<usize>> = table
        .rows
        .iter()
        .map(|(line, fields)| {
            fcols
                .iter()
                .enumerate()
                .map(|(v, &c)| {
                    layout.level_index(v, &fields[c]).unwrap_or_else(|| {
                        bad.push(*line);
                        0
                    })
                })
                .collect()
        })
        .collect();
    if !bad.is_empty() {
        bad.dedup();
        return Err(Error::Parse {
            rows: bad,
            message: "level not present in the fitted layout".into(),
        });
    }
    Ok(cells)
}

pub fn dataset_csv(data: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = data.layout.factor_names().to_vec();
    header.push(data.response_name.clone());
    w.write_record(&header).map_err(csv_err)?;
    let names = data.layout.level_names();
    for r in &data.records {
        let mut row: Vec<String> = r.cell.iter().enumerate().map(|(v, &i)| names[v][i].clone()).collect();
        row.push(r.y.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    write_text(path, &dataset_csv(data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn small_ingest_with_replicates() {
        let f = file(
            "genotype,environment,year,yield\n\
             g1,e1,2010,5.5\ng2,e1,2010,6\ng1,e2,2011,4.25\n\
             g1,e1,2010,5.7\ng3,e2,2010,7\ng2,e2,2011,6.5\n",
        );
        let d = parse_dataset_csv(f.path(), &["genotype", "environment", "year"], "yield").unwrap();
        assert_eq!(d.layout.n_factors(), 3);
        assert_eq!(d.len(), 6);
        assert_eq!(d.layout.level_names()[0], ["g1", "g2", "g3"]);
        assert_eq!(d.layout.level_names()[2], ["2010", "2011"]);
        assert_eq!(d.records[0].cell, d.records[3].cell);
        assert_eq!(d.records[2].y, 4.25);
        assert_eq!(d.response_name, "yield");
    }

    #[test]
    fn error_paths() {
        let f = file("genotype,environment\ng1,e1\n");
        assert!(matches!(
            parse_dataset_csv(f.path(), &["genotype"], "yield"),
            Err(Error::MissingColumn(c)) if c == "yield"
        ));
        let f = file("g,y\na,1\nb,x\nc,2\nd,\n");
        match parse_dataset_csv(f.path(), &["g"], "y") {
            Err(Error::Parse { rows, .. }) => assert_eq!(rows, [3, 5]),
            other => panic!("{other:?}"),
        }
        let f = file("");
        assert!(matches!(parse_dataset_csv(f.path(), &["g"], "y"), Err(Error::EmptyFile(_))));
        let f = file("g,y\n");
        assert!(matches!(parse_dataset_csv(f.path(), &["g"], "y"), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn write_then_read_preserves_labels_and_values() {
        let f = file("a,b,y\nx,p,0.1\ny,q,-2.5e-7\nx,q,3\n");
        let d = parse_dataset_csv(f.path(), &["a", "b"], "y").unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_dataset_csv(&d, out.path()).unwrap();
        assert_eq!(parse_dataset_csv(out.path(), &["a", "b"], "y").unwrap(), d);
        let (again, skipped) = parse_dataset_csv_with_layout(
            file("b,a,y\nq,y,1\nz,x,2\n").path(),
            &d.layout,
            "y",
        )
        .unwrap();
        assert_eq!(skipped, [3]);
        assert_eq!(again.records[0].cell, [1, 1]);
    }
}
