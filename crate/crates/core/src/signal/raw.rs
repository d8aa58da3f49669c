//! Raw signal ingestion: binary little-endian f32 arrays or CSV columns,
//! with the sample rate declared in a sidecar `key = value` file.

use std::path::Path;

use crate::config::KeyValueConfig;
use crate::error::{Error, Result};

/// Sidecar description of a raw signal file.
#[derive(Debug, Clone)]
pub struct RawSignalSpec {
    pub sample_rate_hz: f64,
    /// Column to read when the payload is CSV.
    pub csv_column: usize,
}

impl RawSignalSpec {
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let cfg = KeyValueConfig::load(path)?;
        cfg.reject_unknown_keys(&["sample_rate_hz", "csv_column"])?;
        let sample_rate_hz: f64 = cfg
            .get_parsed("sample_rate_hz")?
            .ok_or_else(|| Error::Parameter("sidecar is missing sample_rate_hz".into()))?;
        if sample_rate_hz <= 0.0 {
            return Err(Error::Parameter("sample_rate_hz must be positive".into()));
        }
        Ok(Self { sample_rate_hz, csv_column: cfg.get_or("csv_column", 0)? })
    }
}

/// Loads a raw signal. `.csv` files are parsed by column (header rows that
/// fail to parse are skipped); anything else is read as packed f32 LE.
pub fn load_raw_signal(path: &Path, spec: &RawSignalSpec) -> Result<Vec<f64>> {
    let is_csv = path.extension().map(|e| e.eq_ignore_ascii_case("csv")).unwrap_or(false);
    if is_csv {
        let text = std::fs::read_to_string(path)?;
        let mut out = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let field = line.split(',').nth(spec.csv_column);
            match field.map(|f| f.trim().parse::<f64>()) {
                Some(Ok(v)) => out.push(v),
                // Tolerate a header row only at the top.
                Some(Err(_)) if out.is_empty() => continue,
                _ => return Err(Error::Format(format!("bad CSV line: `{line}`"))),
            }
        }
        Ok(out)
    } else {
        let bytes = std::fs::read(path)?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Format(format!(
                "raw f32 file length {} is not a multiple of 4",
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    }
}

/// Decimates `samples` from `in_rate` to `out_rate`, keeping indices
/// 0, r, 2r, ... where `r = in_rate / out_rate` must be integral.
pub fn downsample(samples: &[f64], in_rate_hz: f64, out_rate_hz: f64) -> Result<Vec<f64>> {
    if out_rate_hz <= 0.0 || in_rate_hz <= 0.0 {
        return Err(Error::Parameter("sample rates must be positive".into()));
    }
    let ratio = in_rate_hz / out_rate_hz;
    let factor = ratio.round() as usize;
    if factor == 0 || (ratio - factor as f64).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "input rate {in_rate_hz} Hz is not an integer multiple of {out_rate_hz} Hz"
        )));
    }
    Ok(samples.iter().step_by(factor).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_even_indices() {
        let out = downsample(&[1.0, 2.0, 3.0, 4.0], 500.0, 250.0).unwrap();
        assert_eq!(out, vec![1.0, 3.0]);
    }

    #[test]
    fn output_length_is_ceil_half() {
        for n in [0usize, 1, 2, 3, 10, 11] {
            let xs = vec![0.0; n];
            let out = downsample(&xs, 500.0, 250.0).unwrap();
            assert_eq!(out.len(), n.div_ceil(2));
        }
    }

    #[test]
    fn non_integer_ratio_is_rejected() {
        assert!(downsample(&[0.0; 8], 441.0, 250.0).is_err());
    }

    #[test]
    fn tone_survives_decimation() {
        // 10 Hz tone sampled at 500 Hz, decimated to 250 Hz: the dominant
        // DFT bin maps to the same frequency.
        let n = 1000;
        let xs: Vec<f64> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / 500.0).sin()).collect();
        let ys = downsample(&xs, 500.0, 250.0).unwrap();
        let peak_freq = |signal: &[f64], fs: f64| -> f64 {
            let m = signal.len();
            let mut best = (0.0, 0.0);
            // Coarse DFT scan; plenty for a pure tone.
            for k in 1..m / 2 {
                let f = k as f64 * fs / m as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &x) in signal.iter().enumerate() {
                    let w = 2.0 * std::f64::consts::PI * f * i as f64 / fs;
                    re += x * w.cos();
                    im -= x * w.sin();
                }
                let mag = re * re + im * im;
                if mag > best.1 {
                    best = (f, mag);
                }
            }
            best.0
        };
        assert!((peak_freq(&xs, 500.0) - 10.0).abs() < 0.6);
        assert!((peak_freq(&ys, 250.0) - 10.0).abs() < 0.6);
    }

    #[test]
    fn raw_f32_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw_path = dir.path().join("sig.f32");
        let vals = [0.5f32, -1.25, 3.0];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&raw_path, bytes).unwrap();
        let spec = RawSignalSpec { sample_rate_hz: 500.0, csv_column: 0 };
        let loaded = load_raw_signal(&raw_path, &spec).unwrap();
        assert_eq!(loaded, vec![0.5, -1.25, 3.0]);

        let csv_path = dir.path().join("sig.csv");
        std::fs::write(&csv_path, "t,value\n0,0.5\n1,-1.25\n2,3.0\n").unwrap();
        let spec = RawSignalSpec { sample_rate_hz: 500.0, csv_column: 1 };
        assert_eq!(load_raw_signal(&csv_path, &spec).unwrap(), vec![0.5, -1.25, 3.0]);
    }

    #[test]
    fn sidecar_requires_sample_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sig.cfg");
        std::fs::write(&p, "csv_column = 1\n").unwrap();
        assert!(RawSignalSpec::from_sidecar(&p).is_err());
    }
}
