//! Measure files: CSV with header x1,x2,x3,x4[,weight] and the JSON
//! mirror {"points", "weights", "dimension"}.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{to_vec, Point};
use crate::measure::{BallMass, DiscreteMeasure};

/// Dimension recorded for CSV input, which carries none.
pub const DEFAULT_DIMENSION: usize = 3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureJson {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl MeasureJson {
    pub fn from_measure(mu: &DiscreteMeasure) -> Self {
        MeasureJson { points: mu.points().iter().map(to_vec).collect(), weights: Some(mu.weights().to_vec()), dimension: mu.dimension() }
    }

    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                crate::geom::point_from_slice(p).map_err(|_| Error::DimensionMismatch(format!("point {i} has {} coordinates", p.len())))
            })
            .collect::<Result<Vec<Point>>>()?;
        let weights = self.weights.unwrap_or_else(|| vec![1.0; points.len()]);
        DiscreteMeasure::new(points, weights, self.dimension)
    }
}

pub fn read_measure_csv<R: Read>(reader: R) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let xs = ["x1", "x2", "x3", "x4"]
        .iter()
        .map(|n| col(n).ok_or_else(|| Error::Invalid(format!("measure CSV lacks column {n}"))))
        .collect::<Result<Vec<usize>>>()?;
    let wcol = col("weight");
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<f64> {
            let s = rec.get(c).ok_or_else(|| Error::Invalid(format!("row {}: missing column", row + 1)))?;
            s.parse::<f64>().map_err(|_| Error::Invalid(format!("row {}: bad number {s:?}", row + 1)))
        };
        points.push(Point::new(field(xs[0])?, field(xs[1])?, field(xs[2])?, field(xs[3])?));
        weights.push(match wcol {
            Some(c) if rec.get(c).is_some_and(|s| !s.is_empty()) => field(c)?,
            _ => 1.0,
        });
    }
    DiscreteMeasure::new(points, weights, DEFAULT_DIMENSION)
}

pub fn write_measure_csv<W: Write>(mu: &DiscreteMeasure, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x1", "x2", "x3", "x4", "weight"])?;
    for (p, wt) in mu.points().iter().zip(mu.weights()) {
        w.write_record([p[0], p[1], p[2], p[3], *wt].iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a measure, choosing the format by extension (.json, else CSV).
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let f = BufReader::new(File::open(path)?);
    if is_json(path) {
        let m: MeasureJson = serde_json::from_reader(f)?;
        m.into_measure()
    } else {
        read_measure_csv(f)
    }
}

pub fn write_measure(mu: &DiscreteMeasure, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    if is_json(path) {
        serde_json::to_writer(&mut f, &MeasureJson::from_measure(mu))?;
    } else {
        write_measure_csv(mu, &mut f)?;
    }
    f.flush()?;
    Ok(())
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}
