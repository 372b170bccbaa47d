//! Reading `mean ± std` rows from CSV and labelling them against a baseline.

use std::io::{Read, Write};

use serde::Deserialize;

use super::compare::{best_index, compare_oriented, ComparisonSymbol, RunStats};
use super::published::published_cells;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct Row {
    #[serde(default)]
    group: String,
    method: String,
    mean: f64,
    std: f64,
}

/// One row with its symbol; the baseline row has none.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub group: String,
    pub stats: RunStats,
    pub symbol: Option<ComparisonSymbol>,
    pub best: bool,
}

/// Reads `method,mean,std` rows with an optional `group` column.
///
/// The first row of each group is its baseline.
pub fn label_stats_csv<R: Read>(input: R, higher_is_better: bool) -> Result<Vec<LabeledRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut groups: Vec<(String, Vec<RunStats>)> = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let stats = RunStats::from_summary(row.method, row.mean, row.std).map_err(|e| Error::Config(e.to_string()))?;
        match groups.iter_mut().find(|(g, _)| *g == row.group) {
            Some((_, rows)) => rows.push(stats),
            None => groups.push((row.group, vec![stats])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Config("no rows in table".into()));
    }
    let mut out = Vec::new();
    for (group, rows) in groups {
        let best = best_index(&rows, higher_is_better);
        for (i, stats) in rows.iter().enumerate() {
            out.push(LabeledRow {
                group: group.clone(),
                symbol: (i > 0).then(|| compare_oriented(&rows[0], stats, higher_is_better)),
                best: Some(i) == best,
                stats: stats.clone(),
            });
        }
    }
    Ok(out)
}

/// CSV with header `group,method,mean,std,symbol,best`.
pub fn write_labeled_rows<W: Write>(rows: &[LabeledRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "method", "mean", "std", "symbol", "best"])?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.stats.label.clone(),
            r.stats.mean.to_string(),
            r.stats.std.to_string(),
            r.symbol.map_or(String::new(), |s| s.glyph().to_string()),
            r.best.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// The published accuracies in the input format of [`label_stats_csv`].
pub fn published_csv() -> String {
    let mut s = String::from("group,method,mean,std\n");
    for c in published_cells() {
        s.push_str(&format!("{} {},{},{},{}\n", c.dataset, c.network, c.method, c.mean, c.std));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_and_symbols() {
        let text = "method,mean,std\nbase,99.08,0.04\nddc,99.25,0.01\ndropout,99.03,0.08\n";
        let rows = label_stats_csv(text.as_bytes(), true).unwrap();
        assert_eq!(rows[0].symbol, None);
        assert_eq!(rows[1].symbol, Some(ComparisonSymbol::MuchBetter));
        assert_eq!(rows[2].symbol, Some(ComparisonSymbol::Worse));
        assert!(rows[1].best);
    }

    #[test]
    fn published_round_trip_matches_printed() {
        let rows = label_stats_csv(published_csv().as_bytes(), true).unwrap();
        let cells = published_cells();
        assert_eq!(rows.len(), cells.len());
        let mismatches = rows
            .iter()
            .zip(&cells)
            .filter(|(r, c)| r.symbol != c.printed)
            .count();
        assert_eq!(mismatches, 2);
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(label_stats_csv("method,mean,std\nx,abc,1\n".as_bytes(), true).is_err());
        assert!(label_stats_csv("method,mean,std\nx,1,-1\n".as_bytes(), true).is_err());
        assert!(label_stats_csv("method,mean,std\n".as_bytes(), true).is_err());
        let mut buf = Vec::new();
        write_labeled_rows(&label_stats_csv("method,mean,std\na,1,0\n".as_bytes(), true).unwrap(), &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("group,method,mean,std,symbol,best\n"));
    }
}
