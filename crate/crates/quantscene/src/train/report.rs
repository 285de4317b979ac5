//! Report artifacts: machine-readable JSON plus tab-separated tables and
//! x/y series for external plotting. Every file opens with `#` comment
//! lines carrying the provenance the caller passes in (config, seeds).

use super::eval::EvalReport;
use super::EpochStats;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    w.write_all(b"\n")?;
    w.flush()
}

fn open_tsv(path: &Path, provenance: &[String]) -> io::Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in provenance {
        writeln!(w, "# {line}")?;
    }
    Ok(w)
}

pub fn write_confusion_tsv(
    path: &Path,
    report: &EvalReport,
    provenance: &[String],
) -> io::Result<()> {
    let mut w = open_tsv(path, provenance)?;
    writeln!(w, "target\tno\tfew\tsome\tmost\tall")?;
    for stats in &report.per_label {
        let row = report.confusion[stats.label.ordinal()];
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            stats.label, row[0], row[1], row[2], row[3], row[4]
        )?;
    }
    w.flush()
}

pub fn write_accuracy_tsv(
    path: &Path,
    report: &EvalReport,
    provenance: &[String],
) -> io::Result<()> {
    let mut w = open_tsv(path, provenance)?;
    writeln!(w, "label\tcount\tcorrect\taccuracy")?;
    writeln!(
        w,
        "overall\t{}\t{}\t{:.6}",
        report.total,
        report.adjacency[0],
        report.overall_accuracy
    )?;
    for stats in &report.per_label {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.6}",
            stats.label, stats.count, stats.correct, stats.accuracy
        )?;
    }
    w.flush()
}

pub fn write_adjacency_tsv(
    path: &Path,
    report: &EvalReport,
    provenance: &[String],
) -> io::Result<()> {
    let mut w = open_tsv(path, provenance)?;
    writeln!(w, "scale_distance\tcases")?;
    for (distance, cases) in report.adjacency.iter().enumerate() {
        writeln!(w, "{distance}\t{cases}")?;
    }
    w.flush()
}

pub fn write_ratio_bins_tsv(
    path: &Path,
    report: &EvalReport,
    provenance: &[String],
) -> io::Result<()> {
    let mut w = open_tsv(path, provenance)?;
    writeln!(w, "label\tbin_lo\tbin_hi\tcases\tcorrect\taccuracy")?;
    for label_bins in &report.ratio_bins {
        for bin in &label_bins.bins {
            writeln!(
                w,
                "{}\t{:.4}\t{:.4}\t{}\t{}\t{:.6}",
                label_bins.label, bin.lo, bin.hi, bin.cases, bin.correct, bin.accuracy
            )?;
        }
    }
    w.flush()
}

pub fn write_distractor_tsv(
    path: &Path,
    report: &EvalReport,
    provenance: &[String],
) -> io::Result<()> {
    let mut w = open_tsv(path, provenance)?;
    writeln!(w, "distractors_with_scope\tcases\tcorrect\taccuracy")?;
    for row in &report.distractors {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.6}",
            row.cardinality, row.cases, row.correct, row.accuracy
        )?;
    }
    w.flush()
}

pub fn write_history_tsv(
    path: &Path,
    history: &[EpochStats],
    provenance: &[String],
) -> io::Result<()> {
    let mut w = open_tsv(path, provenance)?;
    writeln!(w, "epoch\ttrain_loss\tval_accuracy\timproved")?;
    for e in history {
        writeln!(
            w,
            "{}\t{:.6}\t{:.6}\t{}",
            e.epoch, e.train_loss, e.val_accuracy, e.improved
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::super::eval::report_from_predictions;
    use super::super::Prediction;
    use super::*;
    use crate::quantifier::{QuantifierLabel, ALL_LABELS};

    fn sample_report() -> EvalReport {
        let predictions: Vec<Prediction> = ALL_LABELS
            .into_iter()
            .enumerate()
            .flat_map(|(i, label)| {
                (0..4).map(move |j| Prediction {
                    id: (i * 4 + j) as u64,
                    label,
                    predicted: if j == 0 { QuantifierLabel::No } else { label },
                    ratio: match label {
                        QuantifierLabel::No => 0.0,
                        QuantifierLabel::Few => 0.125,
                        QuantifierLabel::Some => 0.5,
                        QuantifierLabel::Most => 0.8,
                        QuantifierLabel::All => 1.0,
                    },
                    distractors_with_scope: j,
                })
            })
            .collect();
        report_from_predictions(&predictions, 3)
    }

    #[test]
    fn tsv_files_carry_provenance_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        let provenance = vec!["seed = 7".to_string(), "arch = qsan".to_string()];
        let path = dir.path().join("confusion.tsv");
        write_confusion_tsv(&path, &report, &provenance).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# seed = 7\n# arch = qsan\n"));
        assert_eq!(text.lines().count(), 2 + 1 + 5);

        write_ratio_bins_tsv(&dir.path().join("bins.tsv"), &report, &[]).unwrap();
        write_distractor_tsv(&dir.path().join("distractors.tsv"), &report, &[]).unwrap();
        write_adjacency_tsv(&dir.path().join("adjacency.tsv"), &report, &[]).unwrap();
        write_accuracy_tsv(&dir.path().join("accuracy.tsv"), &report, &[]).unwrap();
        write_json(&dir.path().join("report.json"), &report).unwrap();
    }

    #[test]
    fn identical_reports_serialize_identically() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_json(&a, &report).unwrap();
        write_json(&b, &report).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}
