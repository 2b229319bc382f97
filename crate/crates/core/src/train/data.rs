//! Logged controller data: in-memory sequences and the flight-log CSV format.
//!
//! ```text
//! t_s,setpoint_radps,gyro_radps,p_out,i_out,d_out
//! 0.000,0.10,0.00,0.35,0.0002,0.0
//! ```
//!
//! One row per control tick. A gap of more than twice the nominal period
//! starts a new sequence.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::PathwayKind;
use crate::stats;

use super::TrainError;

/// One contiguous logged sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    /// Sample period in seconds.
    pub dt: f64,
    pub time: Vec<f64>,
    pub setpoint: Vec<f64>,
    pub gyro: Vec<f64>,
    pub p_target: Vec<f64>,
    pub i_target: Vec<f64>,
    pub d_target: Vec<f64>,
}

impl TrainingSequence {
    pub fn with_capacity(dt: f64, n: usize) -> Self {
        Self {
            dt,
            time: Vec::with_capacity(n),
            setpoint: Vec::with_capacity(n),
            gyro: Vec::with_capacity(n),
            p_target: Vec::with_capacity(n),
            i_target: Vec::with_capacity(n),
            d_target: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn push(&mut self, t: f64, setpoint: f64, gyro: f64, p: f64, i: f64, d: f64) {
        self.time.push(t);
        self.setpoint.push(setpoint);
        self.gyro.push(gyro);
        self.p_target.push(p);
        self.i_target.push(i);
        self.d_target.push(d);
    }

    /// Controller input `setpoint - gyro` per sample.
    pub fn errors(&self) -> Vec<f64> {
        self.setpoint.iter().zip(&self.gyro).map(|(s, g)| s - g).collect()
    }

    pub fn target(&self, kind: PathwayKind) -> &[f64] {
        match kind {
            PathwayKind::Proportional => &self.p_target,
            PathwayKind::Integral => &self.i_target,
            PathwayKind::Derivative => &self.d_target,
        }
    }

    /// Sub-sequence `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            dt: self.dt,
            time: self.time[start..end].to_vec(),
            setpoint: self.setpoint[start..end].to_vec(),
            gyro: self.gyro[start..end].to_vec(),
            p_target: self.p_target[start..end].to_vec(),
            i_target: self.i_target[start..end].to_vec(),
            d_target: self.d_target[start..end].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let n = self.len();
        let lens = [
            self.setpoint.len(),
            self.gyro.len(),
            self.p_target.len(),
            self.i_target.len(),
            self.d_target.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(TrainError::InvalidSequence("arrays differ in length".into()));
        }
        if n < 2 {
            return Err(TrainError::TooShort(n));
        }
        if !(self.dt > 0.0) {
            return Err(TrainError::InvalidSequence(format!("dt = {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LogRow {
    t_s: f64,
    setpoint_radps: f64,
    gyro_radps: f64,
    p_out: f64,
    i_out: f64,
    d_out: f64,
}

/// Parse flight-log CSV text into contiguous sequences.
///
/// Segments shorter than two rows cannot form a sequence and are dropped.
pub fn read_flight_log<R: Read>(reader: R) -> Result<Vec<TrainingSequence>, TrainError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, record) in csv.deserialize::<LogRow>().enumerate() {
        let row = record.map_err(|e| TrainError::Parse {
            // header is line 1
            line: e.position().map_or(k as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    for k in 1..rows.len() {
        if !(rows[k].t_s > rows[k - 1].t_s) {
            return Err(TrainError::NonMonotoneTime {
                line: k as u64 + 2,
                previous: rows[k - 1].t_s,
                current: rows[k].t_s,
            });
        }
    }

    let diffs: Vec<f64> = rows.windows(2).map(|w| w[1].t_s - w[0].t_s).collect();
    let dt = if diffs.is_empty() {
        crate::DEFAULT_DT
    } else {
        stats::quantile(&diffs, 0.5)
    };

    let mut sequences = Vec::new();
    let mut current = TrainingSequence::with_capacity(dt, rows.len());
    for (k, row) in rows.iter().enumerate() {
        if k > 0 && row.t_s - rows[k - 1].t_s > 2.0 * dt {
            sequences.push(std::mem::replace(&mut current, TrainingSequence::with_capacity(dt, 0)));
        }
        current.push(row.t_s, row.setpoint_radps, row.gyro_radps, row.p_out, row.i_out, row.d_out);
    }
    sequences.push(current);
    sequences.retain(|s| s.len() >= 2);
    Ok(sequences)
}

pub fn load_flight_log(path: &Path) -> Result<Vec<TrainingSequence>, TrainError> {
    let file = std::fs::File::open(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    read_flight_log(file)
}

/// Write sequences as one CSV. Later sequences are shifted in time so that
/// reading the file back splits them at the same boundaries.
pub fn write_flight_log<W: Write>(writer: W, sequences: &[TrainingSequence]) -> Result<(), TrainError> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut offset = 0.0;
    for seq in sequences {
        let start = seq.time.first().copied().unwrap_or(0.0);
        for k in 0..seq.len() {
            csv.serialize(LogRow {
                t_s: offset + seq.time[k] - start,
                setpoint_radps: seq.setpoint[k],
                gyro_radps: seq.gyro[k],
                p_out: seq.p_target[k],
                i_out: seq.i_target[k],
                d_out: seq.d_target[k],
            })
            .map_err(|e| TrainError::Io(e.to_string()))?;
        }
        let last = seq.time.last().copied().unwrap_or(start);
        offset += last - start + 10.0 * seq.dt.max(crate::DEFAULT_DT) + 1.0;
    }
    csv.flush().map_err(|e| TrainError::Io(e.to_string()))?;
    Ok(())
}

pub fn save_flight_log(path: &Path, sequences: &[TrainingSequence]) -> Result<(), TrainError> {
    let file = std::fs::File::create(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    write_flight_log(std::io::BufWriter::new(file), sequences)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "t_s, setpoint_radps, gyro_radps, p_out, i_out, d_out\n";

    fn rows(times: &[f64]) -> String {
        let mut s = HEADER.to_string();
        for t in times {
            s.push_str(&format!("{t}, 0.1, 0.0, 0.2, 0.0, 0.0\n"));
        }
        s
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(read_flight_log("".as_bytes()).unwrap().is_empty());
        assert!(read_flight_log(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn contiguous_log_is_one_sequence() {
        let times: Vec<f64> = (0..1000).map(|k| k as f64 * 0.002).collect();
        let seqs = read_flight_log(rows(&times).as_bytes()).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].len(), 1000);
        assert!((seqs[0].dt - 0.002).abs() < 1e-12);
    }

    #[test]
    fn gap_splits_sequences() {
        let mut times: Vec<f64> = (0..100).map(|k| k as f64 * 0.002).collect();
        times.extend((0..50).map(|k| 1.0 + k as f64 * 0.002));
        let seqs = read_flight_log(rows(&times).as_bytes()).unwrap();
        assert_eq!(seqs.iter().map(TrainingSequence::len).collect::<Vec<_>>(), [100, 50]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!("{HEADER}0.0, 0.1, 0.0, 0.2, 0.0, 0.0\n0.002, oops, 0.0, 0.2, 0.0, 0.0\n");
        match read_flight_log(text.as_bytes()) {
            Err(TrainError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_time_is_rejected() {
        let text = rows(&[0.0, 0.002, 0.001]);
        assert!(matches!(
            read_flight_log(text.as_bytes()),
            Err(TrainError::NonMonotoneTime { line: 4, .. })
        ));
    }

    #[test]
    fn write_then_read_round_trips() {
        let mut a = TrainingSequence::with_capacity(0.002, 10);
        let mut b = TrainingSequence::with_capacity(0.002, 10);
        for k in 0..10 {
            let t = k as f64 * 0.002;
            a.push(t, 0.5, 0.25 * k as f64, 1.0, 2.0, 3.0);
            b.push(t, -0.5, 0.0, -1.0, 0.125, 7.0);
        }
        let mut buf = Vec::new();
        write_flight_log(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let back = read_flight_log(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].gyro, a.gyro);
        assert_eq!(back[1].d_target, b.d_target);
    }
}
