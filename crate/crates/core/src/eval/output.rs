use std::fmt::Write as _;
use std::path::Path;

use super::{EvaluationReport, PredictionTrack};
use crate::binio::write_file;
use crate::data::AU_NAMES;
use crate::error::{Error, Result};

pub const PREDICTION_HEADER: &str = "frame,AU1,AU2,AU4,AU6,AU12,AU15,AU20,AU25";

/// Writes `<id>.csv` (probabilities, 6 decimals) and, when the track holds
/// decisions, `<id>_binary.csv` into `dir`. Returns the written paths.
pub fn write_prediction_csv(track: &PredictionTrack, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    debug_assert_eq!(PREDICTION_HEADER, format!("frame,{}", AU_NAMES.join(",")));
    let mut written = Vec::new();
    let mut text = format!("{PREDICTION_HEADER}\n");
    for (t, p) in track.probabilities.iter().enumerate() {
        write!(text, "{t}").unwrap();
        for v in p {
            write!(text, ",{v:.6}").unwrap();
        }
        text.push('\n');
    }
    let path = dir.join(format!("{}.csv", track.video_id));
    write_file(&path, text.as_bytes())?;
    written.push(path);
    if let Some(binary) = &track.binary {
        let mut text = format!("{PREDICTION_HEADER}\n");
        for (t, d) in binary.iter().enumerate() {
            write!(text, "{t}").unwrap();
            for v in d {
                write!(text, ",{v}").unwrap();
            }
            text.push('\n');
        }
        let path = dir.join(format!("{}_binary.csv", track.video_id));
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `report.txt` (key = value) and `report.csv` (one row per
/// variant) into `dir`.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::Config(format!("{} exists and is not a directory", dir.display())));
    }
    let mut text = format!("smoothing_window = {}\n", report.window);
    text.push_str(&report.unsmoothed.to_key_values("unsmoothed."));
    text.push_str(&report.smoothed.to_key_values("smoothed."));
    writeln!(text, "smoothing_delta = {:.6}", report.smoothing_delta()).unwrap();
    write_file(&dir.join("report.txt"), text.as_bytes())?;
    let csv = format!(
        "variant,{}\nunsmoothed,{}\nsmoothed,{}\n",
        super::MetricsReport::csv_header(),
        report.unsmoothed.csv_row(),
        report.smoothed.csv_row()
    );
    write_file(&dir.join("report.csv"), csv.as_bytes())
}
