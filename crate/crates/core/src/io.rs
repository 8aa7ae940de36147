//! Comma-separated dataset files and number formatting for output tables.
//!
//! Every file has a `cluster` and a `t` column plus model columns:
//! `y,missing,x1..xp` (binary; `y` empty when missing), `time,event,x1..xp`
//! (weibull) or `y` (ar1, where the `t = 0` row holds the initial value).
//! Header names are case-insensitive and rows may come in any order.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::data::{Cluster, ClusteredDataset, DataError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Binary,
    Weibull,
    Ar1,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Binary => "binary",
            DatasetKind::Weibull => "weibull",
            DatasetKind::Ar1 => "ar1",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(DatasetKind::Binary),
            "weibull" => Ok(DatasetKind::Weibull),
            "ar1" => Ok(DatasetKind::Ar1),
            other => Err(format!("unknown model '{other}' (expected binary, weibull or ar1)")),
        }
    }
}

/// Fixed-point (or scientific, for very small or large magnitudes) with ten
/// significant digits; `NaN`, `inf` and `-inf` otherwise.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        return format!("{v:.9e}");
    }
    let mag = if a == 0.0 { 0 } else { a.log10().floor() as i32 };
    let prec = (9 - mag).max(0) as usize;
    format!("{v:.prec$}")
}

struct Row {
    line: u64,
    t: i64,
    values: Vec<String>,
}

fn parse_f64(s: &str, line: u64, col: &str) -> Result<f64, IoError> {
    let v: f64 = s.parse().map_err(|_| IoError::Parse { line, message: format!("{col}: '{s}' is not a number") })?;
    if !v.is_finite() {
        return Err(IoError::Parse { line, message: format!("{col}: '{s}' is not finite") });
    }
    Ok(v)
}

fn parse_flag(s: &str, line: u64, col: &str) -> Result<bool, IoError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(IoError::Parse { line, message: format!("{col}: expected 0 or 1, got '{s}'") }),
    }
}

/// Reads a dataset of the given kind.
pub fn read_dataset<R: Read>(kind: DatasetKind, reader: R) -> Result<ClusteredDataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col =
        |name: &str| header.iter().position(|h| h == name).ok_or_else(|| IoError::MissingColumn(name.to_string()));
    let id_col = col("cluster")?;
    let t_col = col("t")?;
    let value_names: &[&str] = match kind {
        DatasetKind::Binary => &["y", "missing"],
        DatasetKind::Weibull => &["time", "event"],
        DatasetKind::Ar1 => &["y"],
    };
    let mut cols: Vec<usize> = value_names.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let p = if kind == DatasetKind::Ar1 {
        0
    } else {
        let mut p = 0;
        while let Ok(c) = col(&format!("x{}", p + 1)) {
            cols.push(c);
            p += 1;
        }
        if header.iter().any(|h| h.starts_with('x') && h[1..].parse::<usize>().is_ok_and(|j| j > p)) {
            return Err(IoError::MissingColumn(format!("x{}", p + 1)));
        }
        p
    };

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        let id = field(id_col);
        if id.is_empty() {
            return Err(IoError::Parse { line, message: "empty cluster id".into() });
        }
        let t_raw = field(t_col);
        let t: i64 =
            t_raw.parse().map_err(|_| IoError::Parse { line, message: format!("t: '{t_raw}' is not an integer") })?;
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(Row { line, t, values: cols.iter().map(|&c| field(c)).collect() });
    }

    let mut clusters = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).expect("grouped above");
        rows.sort_by_key(|r| r.t);
        for w in rows.windows(2) {
            if w[0].t == w[1].t {
                return Err(IoError::Parse {
                    line: w[1].line,
                    message: format!("cluster {id}: duplicate t = {}", w[1].t),
                });
            }
        }
        clusters.push(build_cluster(kind, id, rows, p)?);
    }
    Ok(ClusteredDataset::new(clusters, p)?)
}

fn build_cluster(kind: DatasetKind, id: String, rows: Vec<Row>, p: usize) -> Result<Cluster, IoError> {
    let mut responses = Vec::with_capacity(rows.len());
    let mut indicators = Vec::with_capacity(rows.len());
    let mut x = Vec::with_capacity(rows.len() * p);
    let mut initial = None;
    for (k, r) in rows.iter().enumerate() {
        let v = &r.values;
        match kind {
            DatasetKind::Binary => {
                let missing = parse_flag(&v[1], r.line, "missing")?;
                let y = if missing {
                    if !v[0].is_empty() {
                        return Err(IoError::Parse {
                            line: r.line,
                            message: "y must be empty when missing = 1".into(),
                        });
                    }
                    None
                } else {
                    Some(if parse_flag(&v[0], r.line, "y")? { 1.0 } else { 0.0 })
                };
                responses.push(y);
                indicators.push(missing);
            }
            DatasetKind::Weibull => {
                let time = parse_f64(&v[0], r.line, "time")?;
                if !(time > 0.0) {
                    return Err(IoError::Parse { line: r.line, message: format!("time must be positive, got {time}") });
                }
                responses.push(Some(time));
                indicators.push(parse_flag(&v[1], r.line, "event")?);
            }
            DatasetKind::Ar1 => {
                if r.t != k as i64 {
                    return Err(IoError::Parse {
                        line: r.line,
                        message: format!("cluster {id}: expected t = {k}, series must run 0, 1, ..., T"),
                    });
                }
                let y = parse_f64(&v[0], r.line, "y")?;
                if k == 0 {
                    initial = Some(y);
                } else {
                    responses.push(Some(y));
                    indicators.push(false);
                }
            }
        }
        for j in 0..p {
            x.push(parse_f64(&v[2 + j], r.line, &format!("x{}", j + 1))?);
        }
    }
    if kind == DatasetKind::Ar1 && responses.len() < 2 {
        let line = rows.last().map_or(0, |r| r.line);
        return Err(IoError::Parse { line, message: format!("cluster {id}: need t = 0 and at least two more rows") });
    }
    Ok(Cluster::new(id, responses, x, indicators, initial))
}

/// Writes `data` in the layout read by [`read_dataset`]; numbers use the
/// shortest representation that reads back to the same value.
pub fn write_dataset<W: Write>(kind: DatasetKind, data: &ClusteredDataset, writer: W) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let p = data.p();
    let mut header: Vec<String> = vec!["cluster".into(), "t".into()];
    match kind {
        DatasetKind::Binary => header.extend(["y".into(), "missing".into()]),
        DatasetKind::Weibull => header.extend(["time".into(), "event".into()]),
        DatasetKind::Ar1 => header.push("y".into()),
    }
    if kind != DatasetKind::Ar1 {
        header.extend((1..=p).map(|j| format!("x{j}")));
    }
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
    for c in data.clusters() {
        if kind == DatasetKind::Ar1 {
            w.write_record([c.id.clone(), "0".into(), num(c.initial)])?;
        }
        for t in 0..c.len() {
            let mut rec = vec![c.id.clone(), (t + 1).to_string()];
            match kind {
                DatasetKind::Binary => {
                    rec.push(num(c.responses[t]));
                    rec.push(if c.indicators[t] { "1" } else { "0" }.into());
                }
                DatasetKind::Weibull => {
                    rec.push(num(c.responses[t]));
                    rec.push(if c.indicators[t] { "1" } else { "0" }.into());
                }
                DatasetKind::Ar1 => rec.push(num(c.responses[t])),
            }
            if kind != DatasetKind::Ar1 {
                rec.extend(c.x(t).iter().map(|v| format!("{v}")));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.5), "0.5000000000");
        assert_eq!(format_number(-123.25), "-123.2500000");
        assert_eq!(format_number(0.0), "0.000000000");
        assert_eq!(format_number(1.5e-7), "1.500000000e-7");
        assert_eq!(format_number(f64::NEG_INFINITY), "-inf");
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    #[test]
    fn binary_file() {
        let text = "Cluster,T,Y,Missing,X1\na,2,,1,0.5\na,1,1,0,-1\nb,1,0,0,2\nb,2,1,0,3\n";
        let d = read_dataset(DatasetKind::Binary, text.as_bytes()).unwrap();
        assert_eq!(d.p(), 1);
        let a = &d.clusters()[0];
        assert_eq!(a.responses, vec![Some(1.0), None]);
        assert_eq!(a.indicators, vec![false, true]);
        assert_eq!(&a.covariates[..], &[-1.0, 0.5]);
    }

    #[test]
    fn malformed_rows_report_lines() {
        let text = "cluster,t,y,missing,x1\na,1,1,0,0.5\na,2,7,0,1\n";
        match read_dataset(DatasetKind::Binary, text.as_bytes()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let missing_y = "cluster,t,y,missing\na,1,1,1\n";
        assert!(matches!(read_dataset(DatasetKind::Binary, missing_y.as_bytes()), Err(IoError::Parse { line: 2, .. })));
        assert!(matches!(
            read_dataset(DatasetKind::Weibull, "cluster,t,time\na,1,2\n".as_bytes()),
            Err(IoError::MissingColumn(c)) if c == "event"
        ));
        let neg = "cluster,t,time,event\na,1,-2,1\n";
        assert!(matches!(read_dataset(DatasetKind::Weibull, neg.as_bytes()), Err(IoError::Parse { .. })));
        let dup = "cluster,t,time,event\na,1,2,1\na,1,3,0\n";
        assert!(matches!(read_dataset(DatasetKind::Weibull, dup.as_bytes()), Err(IoError::Parse { line: 3, .. })));
    }

    #[test]
    fn ar1_needs_initial_row() {
        let ok = "cluster,t,y\na,0,0\na,1,1.5\na,2,0.25\n";
        let d = read_dataset(DatasetKind::Ar1, ok.as_bytes()).unwrap();
        assert_eq!(d.clusters()[0].initial, Some(0.0));
        assert_eq!(d.clusters()[0].responses, vec![Some(1.5), Some(0.25)]);
        let gap = "cluster,t,y\na,1,1.5\na,2,0.25\na,3,1\n";
        assert!(read_dataset(DatasetKind::Ar1, gap.as_bytes()).is_err());
    }

    #[test]
    fn covariate_gap_is_rejected() {
        let text = "cluster,t,time,event,x1,x3\na,1,2,1,0,0\n";
        assert!(
            matches!(read_dataset(DatasetKind::Weibull, text.as_bytes()), Err(IoError::MissingColumn(c)) if c == "x2")
        );
    }

    fn roundtrip(kind: DatasetKind, d: &ClusteredDataset) -> ClusteredDataset {
        let mut buf = Vec::new();
        write_dataset(kind, d, &mut buf).unwrap();
        read_dataset(kind, buf.as_slice()).unwrap()
    }

    proptest! {
        #[test]
        fn weibull_roundtrip(
            rows in prop::collection::vec(
                prop::collection::vec((1e-6f64..1e6, any::<bool>(), -1e3f64..1e3, -1e3f64..1e3), 1..6), 1..5)
        ) {
            let clusters: Vec<Cluster> = rows.iter().enumerate().map(|(i, units)| {
                let y = units.iter().map(|u| Some(u.0)).collect();
                let d = units.iter().map(|u| u.1).collect();
                let x = units.iter().flat_map(|u| [u.2, u.3]).collect();
                Cluster::new(format!("c{i}"), y, x, d, None)
            }).collect();
            let d = ClusteredDataset::new(clusters, 2).unwrap();
            prop_assert_eq!(roundtrip(DatasetKind::Weibull, &d), d);
        }

        #[test]
        fn binary_and_ar1_roundtrip(
            units in prop::collection::vec(prop::collection::vec((any::<bool>(), any::<bool>(), -5.0f64..5.0), 2..6), 1..5)
        ) {
            let clusters: Vec<Cluster> = units.iter().enumerate().map(|(i, u)| {
                let y = u.iter().map(|(m, y, _)| if *m { None } else { Some(if *y { 1.0 } else { 0.0 }) }).collect();
                let m = u.iter().map(|(m, _, _)| *m).collect();
                let x = u.iter().map(|(_, _, x)| *x).collect();
                Cluster::new(i.to_string(), y, x, m, None)
            }).collect();
            let d = ClusteredDataset::new(clusters, 1).unwrap();
            prop_assert_eq!(roundtrip(DatasetKind::Binary, &d), d);

            let series: Vec<Cluster> = units.iter().enumerate().map(|(i, u)| {
                let y = u.iter().map(|(_, _, x)| Some(x * 3.7)).collect();
                Cluster::new(i.to_string(), y, vec![], vec![false; u.len()], Some(u[0].2))
            }).collect();
            let d = ClusteredDataset::new(series, 0).unwrap();
            prop_assert_eq!(roundtrip(DatasetKind::Ar1, &d), d);
        }
    }
}
