//! Ingestion of the 8x8 handwritten digits table from CSV.

use std::path::Path;

use crate::data::{stratified_split, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DIGITS_DIM: usize = 64;
pub const DIGITS_TEST: usize = 503;
pub const DIGITS_PIXEL_MAX: f64 = 16.0;

/// Loads the digits CSV (`label,f0..f63`, labels 0-9, pixels in `[0, 16]`).
pub fn load_digits_csv(path: &Path) -> Result<Dataset> {
    let data = Dataset::load_csv(path, "digits")?;
    let src = path.display().to_string();
    let parse = |line: usize, message: String| Error::Parse {
        path: src.clone(),
        line,
        message,
    };
    if data.dim() != DIGITS_DIM {
        return Err(parse(1, format!("expected {DIGITS_DIM} pixel columns, found {}", data.dim())));
    }
    if data.labels.num_classes() > 10 {
        let line = data.labels.labels().iter().position(|&l| l > 9).unwrap_or(0) + 2;
        return Err(parse(line, "digit labels must lie in 0..=9".into()));
    }
    for (i, row) in data.features.row_iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !(0.0..=DIGITS_PIXEL_MAX).contains(v)) {
            return Err(parse(i + 2, format!("pixel f{j} = {} outside [0, 16]", row[j])));
        }
    }
    let labels = crate::data::LabelVector::new(data.labels.labels().to_vec(), 10)?;
    Dataset::new("digits", data.features, labels, 0)
}

/// Seeded stratified split holding out 503 of the 1797 samples (1294 train).
pub fn digits_split(data: &Dataset, rng: &RngStream) -> Result<(Dataset, Dataset)> {
    let test_count = ((data.len() as f64) * DIGITS_TEST as f64 / 1797.0).round() as usize;
    let (train, test) = stratified_split(&data.labels, test_count.max(1), &rng.derive("digits-split", 0))?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}
