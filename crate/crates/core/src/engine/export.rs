use std::io::Write;

use super::PathBundle;
use crate::error::Result;

fn coordinate_header(prefix: [&str; 2], bundle: &PathBundle) -> Vec<String> {
    let mut head: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    head.extend((1..=bundle.dims.n).map(|i| format!("x{i}")));
    head.extend((1..=bundle.dims.m).map(|l| format!("y{l}")));
    head
}

/// Recorded states as `path,time,x1..xn,y1..ym`.
pub fn write_paths_csv<W: Write>(bundle: &PathBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coordinate_header(["path", "time"], bundle))?;
    let mut row = Vec::with_capacity(2 + bundle.dims.total());
    for p in 0..bundle.n_paths() {
        for (k, t) in bundle.times.iter().enumerate() {
            row.clear();
            row.push(p.to_string());
            row.push(t.to_string());
            row.extend(bundle.state(p, k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Stored increments as `path,step,dw1..dw(n+m)`; writes only the header
/// when the bundle has no increments.
pub fn write_increments_csv<W: Write>(bundle: &PathBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["path".to_string(), "step".to_string()];
    head.extend((1..=bundle.dims.total()).map(|k| format!("dw{k}")));
    w.write_record(&head)?;
    if bundle.has_increments() {
        let mut row = Vec::with_capacity(head.len());
        for p in 0..bundle.n_paths() {
            for s in 0..bundle.n_steps {
                row.clear();
                row.push(p.to_string());
                row.push(s.to_string());
                row.extend(bundle.increment(p, s).unwrap_or_default().iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate_standard, SimConfig};
    use crate::model::{CoefficientModel, WfWithFreeCoord};

    #[test]
    fn round_trips_through_csv_reader() {
        let m = WfWithFreeCoord::default();
        let cfg = SimConfig::new(0.1, 0.05, 3).seed(4).increments(true);
        let b = simulate_standard(&m, &cfg, &m.default_start()).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&b, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["path", "time", "x1", "y1"]);
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 9);
        let y: f64 = rows[5][3].parse().unwrap();
        assert_eq!(y, b.state(1, 2)[1]);

        let mut buf = Vec::new();
        write_increments_csv(&b, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(r.headers().unwrap().len(), 4);
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 6);
        let dw: f64 = rows[3][2].parse().unwrap();
        assert_eq!(dw, b.increment(1, 1).unwrap()[0]);
    }
}
