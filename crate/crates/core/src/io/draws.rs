//! Newline-delimited JSON persistence of posterior draws.
//!
//! Line 1 is a metadata record carrying the format tag and version, the
//! layout, settings, acceptance rates and diagnostics, and the number of
//! draws per chain. Each following line is one draw:
//! `{"chain": c, "index": k, "state": {...}}`. Floats are written with
//! round-trip precision so a read reproduces every bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParameterState, PriorConfig};
use crate::sampler::{McmcConfig, PosteriorDraws, ScalarDiagnostic};
use crate::tensor::FactorLayout;

pub const DRAWS_FORMAT: &str = "bammit-draws";
pub const DRAWS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    format: String,
    version: u32,
    layout: FactorLayout,
    response_name: String,
    config: McmcConfig,
    priors: PriorConfig,
    ar_time_factor: Option<usize>,
    #[serde(with = "super::float_or_string::map")]
    acceptance_rates: BTreeMap<String, f64>,
    diagnostics: Vec<ScalarDiagnostic>,
    draws_per_chain: Vec<usize>,
}

#[derive(Serialize)]
struct DrawRef<'a> {
    chain: usize,
    index: usize,
    state: &'a ParameterState,
}

#[derive(Deserialize)]
struct DrawOwned {
    chain: usize,
    index: usize,
    state: ParameterState,
}

fn io_json(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_draws(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    let meta = Metadata {
        format: DRAWS_FORMAT.into(),
        version: DRAWS_VERSION,
        layout: draws.layout.clone(),
        response_name: draws.response_name.clone(),
        config: draws.config.clone(),
        priors: draws.priors.clone(),
        ar_time_factor: draws.ar_time_factor,
        acceptance_rates: draws.acceptance_rates.clone(),
        diagnostics: draws.diagnostics.clone(),
        draws_per_chain: draws.draws.iter().map(Vec::len).collect(),
    };
    serde_json::to_writer(&mut w, &meta).map_err(io_json)?;
    w.write_all(b"\n")?;
    for (chain, states) in draws.draws.iter().enumerate() {
        for (index, state) in states.iter().enumerate() {
            serde_json::to_writer(&mut w, &DrawRef { chain, index, state }).map_err(io_json)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn corrupt(line: usize, message: impl Into<String>) -> Error {
    Error::CorruptRecord {
        line,
        message: message.into(),
    }
}

pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::EmptyFile(path.display().to_string())),
    };
    let header: Header = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
    if header.format != DRAWS_FORMAT {
        return Err(corrupt(1, format!("not a draws file (format `{}`)", header.format)));
    }
    if header.version != DRAWS_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: DRAWS_VERSION,
        });
    }
    let meta: Metadata = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
    let mut draws: Vec<Vec<ParameterState>> = meta
        .draws_per_chain
        .iter()
        .map(|&n| Vec::with_capacity(n))
        .collect();
    let mut line_no = 1;
    for line in lines {
        line_no += 1;
        let line = line?;
        let rec: DrawOwned = serde_json::from_str(&line).map_err(|e| corrupt(line_no, e.to_string()))?;
        let Some(chain) = draws.get_mut(rec.chain) else {
            return Err(corrupt(line_no, format!("chain {} out of range", rec.chain)));
        };
        if rec.index != chain.len() || chain.len() >= meta.draws_per_chain[rec.chain] {
            return Err(corrupt(
                line_no,
                format!("unexpected draw {} of chain {}", rec.index, rec.chain),
            ));
        }
        rec.state
            .check_layout(&meta.layout)
            .map_err(|e| corrupt(line_no, e.to_string()))?;
        chain.push(rec.state);
    }
    for (c, (got, &want)) in draws.iter().zip(&meta.draws_per_chain).enumerate() {
        if got.len() != want {
            return Err(corrupt(
                line_no + 1,
                format!("truncated: chain {c} has {} of {want} draws", got.len()),
            ));
        }
    }
    Ok(PosteriorDraws {
        layout: meta.layout,
        response_name: meta.response_name,
        config: meta.config,
        priors: meta.priors,
        ar_time_factor: meta.ar_time_factor,
        draws,
        acceptance_rates: meta.acceptance_rates,
        diagnostics: meta.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::small_state;

    fn sample() -> PosteriorDraws {
        let layout = FactorLayout::from_dims(&[3, 2]).unwrap();
        let chains = (0..2)
            .map(|c| (0..4).map(|k| small_state(&[3, 2], 2, 10 * c + k)).collect())
            .collect();
        let mut d = PosteriorDraws::from_chains(layout, "y", chains).unwrap();
        d.acceptance_rates.insert("theta[0][0]".into(), 0.3141592653589793);
        d.draws[1][2].mu = 0.1 + 0.2;
        d
    }

    #[test]
    fn roundtrip_is_exact() {
        let d = sample();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_draws(&d, f.path()).unwrap();
        let back = read_draws(f.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.draws[1][2].mu.to_bits(), (0.1f64 + 0.2).to_bits());
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
    }

    #[test]
    fn truncation_and_corruption_are_located() {
        let d = sample();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_draws(&d, f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();

        // cut mid-record on line 5
        let cut: usize = text.lines().take(4).map(|l| l.len() + 1).sum::<usize>() + 20;
        std::fs::write(f.path(), &text[..cut]).unwrap();
        assert!(matches!(read_draws(f.path()), Err(Error::CorruptRecord { line: 5, .. })));

        // whole records missing
        let kept: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        std::fs::write(f.path(), kept).unwrap();
        assert!(matches!(read_draws(f.path()), Err(Error::CorruptRecord { line: 7, .. })));

        let bumped = text.replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(f.path(), bumped).unwrap();
        assert!(matches!(
            read_draws(f.path()),
            Err(Error::VersionMismatch { found: 7, expected: 1 })
        ));

        let swapped: Vec<&str> = text.lines().collect();
        let mut lines = swapped.clone();
        lines.swap(2, 3);
        std::fs::write(f.path(), lines.join("\n")).unwrap();
        assert!(matches!(read_draws(f.path()), Err(Error::CorruptRecord { line: 3, .. })));
    }
}
