//! Inertial samples, moving-average smoothing and CSV trace I/O.
//!
//! A trace is one CSV file with the header
//! `t_ms,ax,ay,az,gx,gy,gz,mx,my,mz`: integer millisecond timestamps
//! followed by accelerometer (m/s²), gyroscope (rad/s) and magnetometer
//! (µT) readings. Ground-truth segmentation lives in an optional sidecar
//! with rows `start_idx,end_idx,au_label,move_state`.

use std::io::{Read, Write};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::labels::{AuLabel, MoveState};

/// Default moving-average window, 100 ms at 50 Hz.
pub const DEFAULT_SMOOTH_N: usize = 5;
pub const DEFAULT_RATE_HZ: f64 = 50.0;

pub const CSV_HEADER: [&str; 10] = ["t_ms", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"];
pub const LABEL_HEADER: [&str; 4] = ["start_idx", "end_idx", "au_label", "move_state"];

#[derive(Debug, thiserror::Error)]
pub enum ImuError {
    #[error("stream of {len} samples is shorter than window {window}")]
    EmptyStream { len: usize, window: usize },
    #[error("smoothing window must be at least 1")]
    ZeroWindow,
    #[error("sample {index} has a non-finite component")]
    NonFinite { index: usize },
    #[error("line {line}, column {column}: {message}")]
    ParseError {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("line {line}: timestamp does not increase")]
    TimestampOrder { line: u64 },
    #[error("replay speed must be >= 0, got {0}")]
    InvalidSpeed(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One timestamped 9-axis inertial reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t_ms: i64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    pub mag: [f64; 3],
}

impl ImuSample {
    pub fn new(t_ms: i64, accel: [f64; 3], gyro: [f64; 3], mag: [f64; 3]) -> Self {
        ImuSample {
            t_ms,
            accel,
            gyro,
            mag,
        }
    }

    pub fn from_channels(t_ms: i64, ch: [f64; 9]) -> Self {
        ImuSample {
            t_ms,
            accel: [ch[0], ch[1], ch[2]],
            gyro: [ch[3], ch[4], ch[5]],
            mag: [ch[6], ch[7], ch[8]],
        }
    }

    /// All nine channels in CSV column order.
    pub fn channels(&self) -> [f64; 9] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        let [mx, my, mz] = self.mag;
        [ax, ay, az, gx, gy, gz, mx, my, mz]
    }

    /// The six inertial channels (accelerometer then gyroscope) fed to the
    /// classifiers.
    pub fn inertial(&self) -> [f64; 6] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        [ax, ay, az, gx, gy, gz]
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|v| v.is_finite())
    }
}

/// A filtered trace together with the filter window and sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedStream {
    samples: Vec<ImuSample>,
    window: usize,
    rate_hz: f64,
}

impl SmoothedStream {
    /// Wraps already-filtered samples. Mostly useful for tests and synthetic
    /// signals that need no smoothing.
    pub fn from_samples(samples: Vec<ImuSample>, window: usize, rate_hz: f64) -> Self {
        SmoothedStream {
            samples,
            window: window.max(1),
            rate_hz,
        }
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    /// Emission delay of the forward window: the filter at index `i` needs
    /// samples up to `i + N - 1`.
    pub fn delay_ms(&self) -> f64 {
        (self.window - 1) as f64 * 1000.0 / self.rate_hz
    }

    /// One accelerometer axis as a plain series.
    pub fn accel_axis(&self, axis: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.accel[axis]).collect()
    }

    /// Maps a raw-trace index onto the smoothed index whose window is
    /// centred on it.
    pub fn raw_to_smoothed(&self, raw_idx: usize) -> usize {
        raw_idx
            .saturating_sub((self.window - 1) / 2)
            .min(self.samples.len())
    }
}

/// Forward moving average over every channel:
/// `out[i] = (1/n) · Σ_{k<n} in[i + k]`, timestamps taken from `in[i]`.
pub fn smooth(stream: &[ImuSample], n: usize) -> Result<SmoothedStream, ImuError> {
    if n == 0 {
        return Err(ImuError::ZeroWindow);
    }
    if let Some(index) = stream.iter().position(|s| !s.is_finite()) {
        return Err(ImuError::NonFinite { index });
    }
    if stream.len() < n {
        return Err(ImuError::EmptyStream {
            len: stream.len(),
            window: n,
        });
    }
    let channels: Vec<[f64; 9]> = stream.iter().map(ImuSample::channels).collect();
    let inv = 1.0 / n as f64;
    let samples = (0..=stream.len() - n)
        .map(|i| {
            let mut acc = [0.0; 9];
            for row in &channels[i..i + n] {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            for a in &mut acc {
                *a *= inv;
            }
            ImuSample::from_channels(stream[i].t_ms, acc)
        })
        .collect();
    Ok(SmoothedStream {
        samples,
        window: n,
        rate_hz: infer_rate_hz(stream).unwrap_or(DEFAULT_RATE_HZ),
    })
}

/// Sampling rate from the median timestamp delta. `None` for fewer than two
/// samples.
pub fn infer_rate_hz(samples: &[ImuSample]) -> Option<f64> {
    let mut deltas: Vec<i64> = samples.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect();
    if deltas.is_empty() {
        return None;
    }
    deltas.sort_unstable();
    let median = deltas[deltas.len() / 2];
    (median > 0).then(|| 1000.0 / median as f64)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    column: usize,
    line: u64,
) -> Result<T, ImuError> {
    let text = record.get(column).ok_or_else(|| ImuError::ParseError {
        line,
        column: column + 1,
        message: "missing field".to_string(),
    })?;
    text.trim().parse().map_err(|_| ImuError::ParseError {
        line,
        column: column + 1,
        message: format!("cannot parse `{text}`"),
    })
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source)
}

/// Reads a trace CSV. Line numbers in errors are 1-based file lines.
pub fn ingest_csv<R: Read>(source: R) -> Result<Vec<ImuSample>, ImuError> {
    let mut reader = csv_reader(source);
    let mut out: Vec<ImuSample> = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(ImuError::ParseError {
                line,
                column: record.len().min(CSV_HEADER.len()) + 1,
                message: format!("expected {} fields, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        let t_ms: i64 = parse_field(&record, 0, line)?;
        let mut ch = [0.0; 9];
        for (c, slot) in ch.iter_mut().enumerate() {
            *slot = parse_field::<f64>(&record, c + 1, line)?;
            if !slot.is_finite() {
                return Err(ImuError::ParseError {
                    line,
                    column: c + 2,
                    message: "non-finite value".to_string(),
                });
            }
        }
        if out.last().is_some_and(|prev| prev.t_ms >= t_ms) {
            return Err(ImuError::TimestampOrder { line });
        }
        out.push(ImuSample::from_channels(t_ms, ch));
    }
    Ok(out)
}

/// Writes a trace CSV. Floats use the shortest representation that parses
/// back to the same bits, so `ingest_csv` inverts this exactly.
pub fn emit_csv<W: Write>(samples: &[ImuSample], sink: W) -> Result<(), ImuError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CSV_HEADER)?;
    let mut row: Vec<String> = Vec::with_capacity(10);
    for s in samples {
        row.clear();
        row.push(s.t_ms.to_string());
        row.extend(s.channels().iter().map(|v| format!("{v:?}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// One ground-truth row of a label sidecar, indices into the raw trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRow {
    pub start_idx: usize,
    pub end_idx: usize,
    pub au: AuLabel,
    pub state: MoveState,
}

pub fn ingest_labels<R: Read>(source: R) -> Result<Vec<LabelRow>, ImuError> {
    let mut reader = csv_reader(source);
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let start_idx: usize = parse_field(&record, 0, line)?;
        let end_idx: usize = parse_field(&record, 1, line)?;
        let au: AuLabel = parse_field(&record, 2, line)?;
        let state: MoveState = parse_field(&record, 3, line)?;
        if end_idx <= start_idx {
            return Err(ImuError::ParseError {
                line,
                column: 2,
                message: "end_idx must exceed start_idx".to_string(),
            });
        }
        out.push(LabelRow {
            start_idx,
            end_idx,
            au,
            state,
        });
    }
    Ok(out)
}

pub fn emit_labels<W: Write>(rows: &[LabelRow], sink: W) -> Result<(), ImuError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(LABEL_HEADER)?;
    for r in rows {
        writer.write_record([
            r.start_idx.to_string(),
            r.end_idx.to_string(),
            r.au.to_string(),
            r.state.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// A sample as delivered by [`replay`], with its pacing metadata.
#[derive(Debug, Clone, Copy)]
pub struct Emission {
    pub index: usize,
    pub sample: ImuSample,
    /// Offset from the start of replay at which the sample was due.
    pub due: Duration,
    pub emitted_at: Instant,
}

#[derive(Debug, Clone, Copy)]
pub struct ReplayStats {
    pub emitted: usize,
    pub elapsed: Duration,
}

fn due_offset(first_t: i64, t: i64, speed: f64) -> Duration {
    if speed == 0.0 {
        return Duration::ZERO;
    }
    Duration::from_secs_f64(((t - first_t) as f64 / 1000.0) / speed)
}

fn check_speed(speed: f64) -> Result<(), ImuError> {
    if speed.is_finite() && speed >= 0.0 {
        Ok(())
    } else {
        Err(ImuError::InvalidSpeed(speed))
    }
}

/// Replays a trace in timestamp order, calling `hook` at each emission.
///
/// At `speed` 1 emissions follow the recorded timestamp deltas, at 2 twice
/// as fast; `speed` 0 emits everything immediately. Pacing is measured from
/// the replay start, so sleep overshoot does not accumulate.
pub fn replay<F>(samples: &[ImuSample], speed: f64, mut hook: F) -> Result<ReplayStats, ImuError>
where
    F: FnMut(&Emission),
{
    check_speed(speed)?;
    let start = Instant::now();
    let first_t = samples.first().map_or(0, |s| s.t_ms);
    for (index, sample) in samples.iter().enumerate() {
        let due = due_offset(first_t, sample.t_ms, speed);
        let now = start.elapsed();
        if due > now {
            thread::sleep(due - now);
        }
        hook(&Emission {
            index,
            sample: *sample,
            due,
            emitted_at: Instant::now(),
        });
    }
    Ok(ReplayStats {
        emitted: samples.len(),
        elapsed: start.elapsed(),
    })
}

/// Runs [`replay`] on a producer thread and delivers emissions in order
/// through a channel. The channel closes after the last sample.
pub fn spawn_replay(
    samples: Vec<ImuSample>,
    speed: f64,
) -> Result<mpsc::Receiver<Emission>, ImuError> {
    check_speed(speed)?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = replay(&samples, speed, |e| {
            let _ = tx.send(*e);
        });
    });
    Ok(rx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: i64, v: f64) -> ImuSample {
        ImuSample::from_channels(t, [v; 9])
    }

    #[test]
    fn smoothing_constant_stream() {
        let s: Vec<_> = (0..12).map(|i| sample(i * 20, 3.25)).collect();
        for n in 1..=6 {
            let out = smooth(&s, n).unwrap();
            assert_eq!(out.len(), s.len() - n + 1);
            for o in out.samples() {
                assert!(o.channels().iter().all(|&c| (c - 3.25).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn smoothing_window_one_is_identity() {
        let s: Vec<_> = (0..8).map(|i| sample(i * 20, (i as f64).sin())).collect();
        let out = smooth(&s, 1).unwrap();
        assert_eq!(out.samples(), &s[..]);
    }

    #[test]
    fn smoothing_hand_computed() {
        let s: Vec<_> = [0.0, 1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| ImuSample::new(i as i64 * 20, [v, 0.0, 0.0], [0.0; 3], [0.0; 3]))
            .collect();
        let out = smooth(&s, 2).unwrap();
        let ax: Vec<f64> = out.accel_axis(0);
        assert_eq!(ax, vec![0.5, 1.5, 2.5]);
        assert_eq!(out.samples()[1].t_ms, 20);
    }

    #[test]
    fn smoothing_errors() {
        let s: Vec<_> = (0..3).map(|i| sample(i * 20, 1.0)).collect();
        assert!(matches!(
            smooth(&s, 4),
            Err(ImuError::EmptyStream { len: 3, window: 4 })
        ));
        assert!(matches!(smooth(&s, 0), Err(ImuError::ZeroWindow)));
        let mut bad = s.clone();
        bad[1].gyro[2] = f64::NAN;
        assert!(matches!(
            smooth(&bad, 2),
            Err(ImuError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn ingest_minimal_file() {
        let text = "t_ms,ax,ay,az,gx,gy,gz,mx,my,mz\n0,0,0,9.81,0,0,0,20,0,-40\n";
        let s = ingest_csv(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].accel[2], 9.81);
        assert_eq!(s[0].mag, [20.0, 0.0, -40.0]);
    }

    #[test]
    fn ingest_reports_bad_numeric() {
        let text = "t_ms,ax,ay,az,gx,gy,gz,mx,my,mz\n0,0,0,9.81,0,0,0,20,0,-40\n20,0,abc,9.81,0,0,0,20,0,-40\n";
        match ingest_csv(text.as_bytes()) {
            Err(ImuError::ParseError { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_regressing_time() {
        let text = "t_ms,ax,ay,az,gx,gy,gz,mx,my,mz\n20,0,0,0,0,0,0,0,0,0\n0,0,0,0,0,0,0,0,0,0\n";
        assert!(matches!(
            ingest_csv(text.as_bytes()),
            Err(ImuError::TimestampOrder { line: 3 })
        ));
    }

    #[test]
    fn rate_is_inferred_from_timestamps() {
        let text = "t_ms,ax,ay,az,gx,gy,gz,mx,my,mz\n0,0,0,0,0,0,0,0,0,0\n20,0,0,0,0,0,0,0,0,0\n40,0,0,0,0,0,0,0,0,0\n";
        let s = ingest_csv(text.as_bytes()).unwrap();
        assert_eq!(infer_rate_hz(&s), Some(50.0));
        assert_eq!(infer_rate_hz(&s[..1]), None);
    }

    #[test]
    fn labels_round_trip() {
        let rows = vec![
            LabelRow {
                start_idx: 0,
                end_idx: 40,
                au: AuLabel::Stop,
                state: MoveState::Stop,
            },
            LabelRow {
                start_idx: 40,
                end_idx: 60,
                au: AuLabel::NormalStep,
                state: MoveState::Walking,
            },
        ];
        let mut buf = Vec::new();
        emit_labels(&rows, &mut buf).unwrap();
        assert!(buf.starts_with(b"start_idx,end_idx,au_label,move_state\n"));
        assert_eq!(ingest_labels(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn replay_batch_mode_preserves_order() {
        let s: Vec<_> = (0..50).map(|i| sample(i * 1000, i as f64)).collect();
        let mut seen = Vec::new();
        let stats = replay(&s, 0.0, |e| seen.push(e.index)).unwrap();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
        assert!(stats.elapsed < Duration::from_millis(500));
    }

    #[test]
    fn replay_paces_at_speed_one() {
        let s = vec![sample(0, 0.0), sample(20, 1.0)];
        let mut times = Vec::new();
        replay(&s, 1.0, |e| times.push(e.emitted_at)).unwrap();
        assert!(times[1].duration_since(times[0]) >= Duration::from_millis(20));
    }

    #[test]
    fn replay_rejects_negative_speed() {
        assert!(matches!(
            replay(&[], -1.0, |_| {}),
            Err(ImuError::InvalidSpeed(_))
        ));
        assert!(spawn_replay(vec![], f64::NAN).is_err());
    }

    #[test]
    fn channel_replay_is_in_order_exactly_once() {
        let s: Vec<_> = (0..200).map(|i| sample(i * 20, i as f64)).collect();
        let rx = spawn_replay(s.clone(), 0.0).unwrap();
        let got: Vec<_> = rx.iter().map(|e| e.sample).collect();
        assert_eq!(got, s);
    }
}
