use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::RankingRecord;
use crate::selection::EnsembleCandidate;

use super::{format_real, parse_real, read_text, write_text};

const HEADER: &str = "ensemble,alpha,accuracy";

/// Writes `rankings.csv`: `ensemble,alpha,accuracy`, the ensemble as
/// semicolon-joined sorted ids and an empty accuracy cell when absent.
pub fn write_scores(rows: &[RankingRecord], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Invalid("no ranking rows to write".into()));
    }
    let mut out = String::from(HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.candidate.sorted_key());
        out.push(',');
        out.push_str(&format_real(row.alpha));
        out.push(',');
        if let Some(acc) = row.accuracy {
            out.push_str(&format_real(acc));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a `rankings.csv` file written by [`write_scores`] or edited by hand.
pub fn read_scores(path: &Path) -> Result<Vec<RankingRecord>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header `{HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (offset, line) in lines {
        let line_no = offset + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::parse(path, line_no, "expected 3 cells"));
        }
        let members: Vec<String> = cells[0].split(';').map(|s| s.trim().to_string()).collect();
        let candidate =
            EnsembleCandidate::new(members).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let alpha = parse_real(cells[1], path, line_no)?;
        let accuracy = match cells[2].trim() {
            "" => None,
            cell => Some(parse_real(cell, path, line_no)?),
        };
        let record = RankingRecord {
            candidate,
            alpha,
            accuracy,
        };
        record
            .validate()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        rows.push(record);
    }
    Ok(rows)
}
