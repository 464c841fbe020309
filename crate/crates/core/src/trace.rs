//! Per-tick simulation records and their CSV form.
//!
//! Column order is fixed by [`TraceRecord`]'s field order. Floats are written
//! in shortest round-trip form, so reading a file back reproduces every value
//! bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverter::SwitchState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub w: f64,
    pub v: f64,
    pub i_as: f64,
    pub i_bs: f64,
    pub i_a: f64,
    pub i_b: f64,
    pub i_c: f64,
    pub lam_ar: f64,
    pub lam_br: f64,
    pub lam_ar_hat: f64,
    pub lam_br_hat: f64,
    #[serde(rename = "Fe")]
    pub fe: f64,
    #[serde(rename = "F_L")]
    pub f_load: f64,
    pub u1: u8,
    pub u2: u8,
    pub u3: u8,
    /// Integral error after this tick's update (DTC: PI error integral).
    #[serde(rename = "E")]
    pub e: f64,
    /// Cost of the selected sequence (0 for DTC, `inf` on fallback).
    pub cost: f64,
    /// Stage-cost evaluations spent by the search.
    pub evaluations: u32,
    /// Controller wall time in microseconds; 0 unless timing was requested.
    pub compute_us: f64,
}

pub const TRACE_HEADER: [&str; 21] = [
    "t",
    "w",
    "v",
    "i_as",
    "i_bs",
    "i_a",
    "i_b",
    "i_c",
    "lam_ar",
    "lam_br",
    "lam_ar_hat",
    "lam_br_hat",
    "Fe",
    "F_L",
    "u1",
    "u2",
    "u3",
    "E",
    "cost",
    "evaluations",
    "compute_us",
];

impl TraceRecord {
    pub fn switch_state(&self) -> SwitchState {
        SwitchState::new(self.u1, self.u2, self.u3)
    }

    pub fn flux_magnitude(&self) -> f64 {
        self.lam_ar.hypot(self.lam_br)
    }

    pub fn current_magnitude(&self) -> f64 {
        self.i_as.hypot(self.i_bs)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let records = r.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
        Ok(Trace { records })
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }
}

pub fn write_trace(tr: &Trace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    tr.write_csv(&mut out).map_err(|e| match e {
        Error::Csv(c) if c.is_io_error() => Error::io(path, std::io::Error::other(c.to_string())),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Trace::read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_record() -> impl Strategy<Value = TraceRecord> {
        let f = || prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), Just(f64::INFINITY)];
        (
            proptest::array::uniform12(f()),
            (f(), f(), f(), f(), f()),
            (0u8..2, 0u8..2, 0u8..2, any::<u32>()),
        )
            .prop_map(|(a, b, c)| TraceRecord {
                t: a[0],
                w: a[1],
                v: a[2],
                i_as: a[3],
                i_bs: a[4],
                i_a: a[5],
                i_b: a[6],
                i_c: a[7],
                lam_ar: a[8],
                lam_br: a[9],
                lam_ar_hat: a[10],
                lam_br_hat: a[11],
                fe: b.0,
                f_load: b.1,
                u1: c.0,
                u2: c.1,
                u3: c.2,
                e: b.2,
                cost: b.3,
                evaluations: c.3,
                compute_us: b.4,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(records in proptest::collection::vec(arb_record(), 0..20)) {
            let tr = Trace { records };
            let back = Trace::read_csv(tr.to_csv_bytes().as_slice()).unwrap();
            prop_assert_eq!(back, tr);
        }
    }

    #[test]
    fn header_only_for_empty_trace() {
        let bytes = Trace::default().to_csv_bytes();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end(), TRACE_HEADER.join(","));
    }

    #[test]
    fn unwritable_path_reports_context() {
        let err = write_trace(&Trace::default(), Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
