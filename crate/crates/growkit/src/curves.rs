//! Loss curves as CSV (`step,tokens,flops,loss,lr`) and two-column point
//! files for the law fits.

use std::path::Path;

use growkit_core::trainer::{LossCurve, Sample};

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 5] = ["step", "tokens", "flops", "loss", "lr"];

pub fn curve_to_csv(curve: &LossCurve) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).expect("writing to memory");
    for s in curve.samples() {
        w.write_record([
            s.step.to_string(),
            s.tokens.to_string(),
            s.flops.to_string(),
            s.loss.to_string(),
            s.lr.to_string(),
        ])
        .expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn write_curve(path: &Path, curve: &LossCurve) -> Result<()> {
    write_atomic(path, &curve_to_csv(curve))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_owned(), source }
}

pub fn read_curve(path: &Path) -> Result<LossCurve> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::Format(format!("{}: expected header {}", path.display(), CURVE_HEADER.join(","))));
    }
    let mut curve = LossCurve::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |col: &str| Error::Format(format!("{}: row {}: bad {col}", path.display(), i + 2));
        let s = Sample {
            step: rec[0].parse().map_err(|_| bad("step"))?,
            tokens: rec[1].parse().map_err(|_| bad("tokens"))?,
            flops: rec[2].parse().map_err(|_| bad("flops"))?,
            loss: rec[3].parse().map_err(|_| bad("loss"))?,
            lr: rec[4].parse().map_err(|_| bad("lr"))?,
        };
        curve.push(s).map_err(|e| Error::Format(format!("{}: row {}: {e}", path.display(), i + 2)))?;
    }
    Ok(curve)
}

/// Reads `x,y` pairs; the first row is a header.
pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = || Error::Format(format!("{}: row {}: expected two numbers", path.display(), i + 2));
        if rec.len() != 2 {
            return Err(bad());
        }
        out.push((rec[0].parse().map_err(|_| bad())?, rec[1].parse().map_err(|_| bad())?));
    }
    Ok(out)
}
