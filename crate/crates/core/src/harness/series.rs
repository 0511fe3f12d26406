//! Seed-averaged series from result CSVs, the data a plotting front end draws.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// One point of a series: mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub group: String,
    pub points: Vec<SeriesPoint>,
}

/// Groups rows by `group`, then by `x`, and averages `y`. Groups come out in
/// lexicographic order and points in increasing `x`.
pub fn extract<R: std::io::Read>(csv_input: R, x: &str, y: &str, group: &str) -> Result<Vec<Series>> {
    let mut rdr = csv::Reader::from_reader(csv_input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("no column named {name:?}")))
    };
    let (xi, yi, gi) = (col(x)?, col(y)?, col(group)?);
    let parse = |rec: &csv::StringRecord, i: usize, name: &str| -> Result<f64> {
        rec[i].parse::<f64>().map_err(|_| Error::Config(format!("column {name:?} holds non-numeric {:?}", &rec[i])))
    };

    // x keys by bit pattern keep the order total without float comparisons
    let mut groups: BTreeMap<String, BTreeMap<OrderedX, Vec<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let xv = parse(&rec, xi, x)?;
        let yv = parse(&rec, yi, y)?;
        groups.entry(rec[gi].to_string()).or_default().entry(OrderedX(xv)).or_default().push(yv);
    }
    Ok(groups
        .into_iter()
        .map(|(group, cells)| Series {
            group,
            points: cells
                .into_iter()
                .map(|(OrderedX(x), ys)| {
                    let n = ys.len() as f64;
                    let mean = ys.iter().sum::<f64>() / n;
                    let var = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    SeriesPoint { x, mean, std: var.sqrt(), count: ys.len() }
                })
                .collect(),
        })
        .collect())
}

pub fn extract_file(path: &Path, x: &str, y: &str, group: &str) -> Result<Vec<Series>> {
    extract(std::fs::File::open(path)?, x, y, group)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedX(f64);

impl Eq for OrderedX {}

impl PartialOrd for OrderedX {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedX {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
