//! Recording files: a small little-endian binary format plus CSV export.
//!
//! Layout: magic `PLRC`, version u16, sample_rate f64, subject_id u32,
//! phase u8, sample count u64, then `count` f32 samples, `count` f32
//! scores, and bit-packed binary labels (LSB first).

use std::io::{Read, Write};
use std::path::Path;

use super::{labels::Phase, Recording};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PLRC";
const VERSION: u16 = 1;

pub fn write_recording(path: &Path, rec: &Recording) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&rec.sample_rate_hz.to_le_bytes())?;
    w.write_all(&rec.subject_id.to_le_bytes())?;
    w.write_all(&[rec.phase.as_u8()])?;
    w.write_all(&(rec.samples.len() as u64).to_le_bytes())?;
    for &s in &rec.samples {
        w.write_all(&(s as f32).to_le_bytes())?;
    }
    for &s in &rec.scores {
        w.write_all(&(s as f32).to_le_bytes())?;
    }
    let mut packed = vec![0u8; rec.binary.len().div_ceil(8)];
    for (i, &b) in rec.binary.iter().enumerate() {
        if b {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&packed)?;
    w.flush()?;
    Ok(())
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format("bad magic; not a recording file".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported recording version {version}")));
    }
    let sample_rate_hz = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let subject_id = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    let phase = Phase::from_u8(cur.take(1)?[0])
        .ok_or_else(|| Error::Format("phase byte must be 1 or 2".into()))?;
    let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;

    let read_f32s = |cur: &mut Cursor| -> Result<Vec<f64>> {
        let bytes = cur.take(4 * n)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    };
    let samples = read_f32s(&mut cur)?;
    let scores = read_f32s(&mut cur)?;
    let packed = cur.take(n.div_ceil(8))?;
    let binary: Vec<bool> = (0..n).map(|i| packed[i / 8] & (1 << (i % 8)) != 0).collect();
    Ok(Recording { subject_id, phase, sample_rate_hz, samples, scores, binary })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// Human-inspectable mirror: `t_s,sample,score,binary` rows.
pub fn export_recording_csv(path: &Path, rec: &Recording) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t_s,sample,score,binary")?;
    for i in 0..rec.samples.len() {
        writeln!(
            w,
            "{:.4},{},{},{}",
            i as f64 / rec.sample_rate_hz,
            rec.samples[i] as f32,
            rec.scores[i] as f32,
            u8::from(rec.binary[i])
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_recording, SyntheticConfig};

    #[test]
    fn round_trip_preserves_content() {
        let cfg = SyntheticConfig { duration_s: 20.0, ..SyntheticConfig::default() };
        let rec = generate_recording(&cfg, 5, Phase::Two).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.plrc");
        write_recording(&path, &rec).unwrap();
        let back = read_recording(&path).unwrap();
        assert_eq!(back.subject_id, 5);
        assert_eq!(back.phase, Phase::Two);
        assert_eq!(back.binary, rec.binary);
        // Samples pass through f32.
        for (a, b) in back.samples.iter().zip(&rec.samples) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // A second round trip is exact.
        let path2 = dir.path().join("rec2.plrc");
        write_recording(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let cfg = SyntheticConfig { duration_s: 20.0, ..SyntheticConfig::default() };
        let rec = generate_recording(&cfg, 1, Phase::One).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.plrc");
        write_recording(&path, &rec).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_recording(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.plrc");
        std::fs::write(&path, b"NOPE then some junk bytes").unwrap();
        assert!(matches!(read_recording(&path), Err(Error::Format(_))));
    }

    #[test]
    fn csv_export_writes_one_row_per_sample() {
        let cfg = SyntheticConfig { duration_s: 10.0, ..SyntheticConfig::default() };
        let rec = generate_recording(&cfg, 2, Phase::One).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        export_recording_csv(&path, &rec).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), rec.samples.len() + 1);
    }
}
