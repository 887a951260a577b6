//! Tab-separated dataset manifest.
//!
//! ```text
//! input<TAB>study<TAB>modality<TAB>nucleus<TAB>mitochondria<TAB>tubulin<TAB>actin
//! ```
//!
//! An empty target cell means the organelle is not annotated for that image.
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::TrainError;
use crate::image::{Modality, Organelle, SampleMeta};

pub const MANIFEST_HEADER: &str = "input\tstudy\tmodality\tnucleus\tmitochondria\ttubulin\tactin";

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub input_path: PathBuf,
    pub meta: SampleMeta,
    pub targets: BTreeMap<Organelle, PathBuf>,
}

impl SampleRecord {
    pub fn has(&self, organelle: Organelle) -> bool {
        self.targets.contains_key(&organelle)
    }
}

fn malformed(line: usize, msg: impl Into<String>) -> TrainError {
    TrainError::Manifest { line, message: msg.into() }
}

/// Parses manifest text; `base` is the directory relative paths resolve
/// against.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<SampleRecord>, TrainError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == MANIFEST_HEADER => {}
        _ => return Err(malformed(1, format!("header must be {MANIFEST_HEADER:?}"))),
    }
    let mut records = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 7 {
            return Err(malformed(line_no, format!("expected 7 columns, found {}", cells.len())));
        }
        if cells[0].trim().is_empty() {
            return Err(malformed(line_no, "empty input path"));
        }
        if cells[1].trim().is_empty() {
            return Err(malformed(line_no, "empty study id"));
        }
        let modality: Modality = cells[2].parse().map_err(|e: String| malformed(line_no, e))?;
        let targets: BTreeMap<Organelle, PathBuf> = Organelle::ALL
            .into_iter()
            .zip(&cells[3..])
            .filter(|(_, cell)| !cell.trim().is_empty())
            .map(|(o, cell)| (o, base.join(cell.trim())))
            .collect();
        if targets.is_empty() {
            return Err(malformed(line_no, "record has no target images"));
        }
        records.push(SampleRecord {
            input_path: base.join(cells[0].trim()),
            meta: SampleMeta { study_id: cells[1].trim().to_string(), modality },
            targets,
        });
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>, TrainError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base)
}

/// Renders records with paths written relative to `base` where possible.
pub fn format_manifest(records: &[SampleRecord], base: &Path) -> String {
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/");
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        let mut cells = vec![rel(&r.input_path), r.meta.study_id.clone(), r.meta.modality.to_string()];
        cells.extend(Organelle::ALL.iter().map(|o| r.targets.get(o).map(|p| rel(p)).unwrap_or_default()));
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sparse_rows() {
        let text = format!("{MANIFEST_HEADER}\na.lmci\ts1\tBF\tn.lmci\t\t\t\nb.lmci\ts2\tDIC\t\tm.lmci\t\tx.lmci\n");
        let recs = parse_manifest(&text, Path::new("/data")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].input_path, PathBuf::from("/data/a.lmci"));
        assert_eq!(recs[0].targets.keys().copied().collect::<Vec<_>>(), vec![Organelle::Nucleus]);
        assert_eq!(recs[1].meta.modality, Modality::Dic);
        assert!(recs[1].has(Organelle::Actin) && !recs[1].has(Organelle::Tubulin));
        assert_eq!(format_manifest(&recs, Path::new("/data")), text);
    }

    #[test]
    fn zero_target_row_reports_line() {
        let text = format!("{MANIFEST_HEADER}\na\ts\tBF\tn\t\t\t\nb\ts\tPC\t\t\t\t\n");
        match parse_manifest(&text, Path::new("")) {
            Err(TrainError::Manifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_header_and_columns() {
        assert!(matches!(parse_manifest("x\ty\n", Path::new("")), Err(TrainError::Manifest { line: 1, .. })));
        let text = format!("{MANIFEST_HEADER}\na\ts\tBF\tn\n");
        assert!(matches!(parse_manifest(&text, Path::new("")), Err(TrainError::Manifest { line: 2, .. })));
        let text = format!("{MANIFEST_HEADER}\na\ts\tXX\tn\t\t\t\n");
        assert!(matches!(parse_manifest(&text, Path::new("")), Err(TrainError::Manifest { line: 2, .. })));
    }
}
