//! Weight files: magic + version header, the spec, then all parameter
//! tensors as little-endian f32 in declaration order.
//!
//! Saving quantizes f64 weights to f32 once; networks whose weights are
//! already f32-representable (anything loaded from disk) round-trip
//! bit-exactly.

use std::io::Write;
use std::path::Path;

use super::{InputMode, Network, NetworkSpec, OutputMode};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PLNW";
const VERSION: u16 = 1;

fn write_spec(w: &mut impl Write, spec: &NetworkSpec) -> Result<()> {
    w.write_all(&spec.sample_rate_hz.to_le_bytes())?;
    w.write_all(&spec.window_size_s.to_le_bytes())?;
    w.write_all(&spec.dilation_s.to_le_bytes())?;
    for v in [
        spec.cnn_layers,
        spec.cnn_channels,
        spec.conv_kernel,
        spec.conv_stride,
        spec.conv_dilation,
        spec.pool_kernel,
        spec.pool_stride,
        spec.pool_dilation,
        spec.rnn_layers,
        spec.rnn_hidden,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[
        match spec.inputs {
            InputMode::Clean => 0,
            InputMode::CleanEnvelope => 1,
        },
        match spec.mode {
            OutputMode::Classifier => 0,
            OutputMode::Regressor => 1,
        },
    ])?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated weights file: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn read_spec(cur: &mut Cursor) -> Result<NetworkSpec> {
    let sample_rate_hz = cur.f64()?;
    let window_size_s = cur.f64()?;
    let dilation_s = cur.f64()?;
    let mut ints = [0usize; 10];
    for v in ints.iter_mut() {
        *v = cur.u32()? as usize;
    }
    let flags = cur.take(2)?;
    let inputs = match flags[0] {
        0 => InputMode::Clean,
        1 => InputMode::CleanEnvelope,
        other => return Err(Error::Format(format!("bad input mode byte {other}"))),
    };
    let mode = match flags[1] {
        0 => OutputMode::Classifier,
        1 => OutputMode::Regressor,
        other => return Err(Error::Format(format!("bad output mode byte {other}"))),
    };
    Ok(NetworkSpec {
        sample_rate_hz,
        window_size_s,
        dilation_s,
        cnn_layers: ints[0],
        cnn_channels: ints[1],
        conv_kernel: ints[2],
        conv_stride: ints[3],
        conv_dilation: ints[4],
        pool_kernel: ints[5],
        pool_stride: ints[6],
        pool_dilation: ints[7],
        rnn_layers: ints[8],
        rnn_hidden: ints[9],
        inputs,
        mode,
    })
}

pub fn save_weights(path: &Path, net: &Network) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_spec(&mut w, net.spec())?;
    let tensors = net.param_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.len() as u64).to_le_bytes())?;
        for &v in t.iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a network, rebuilding it from the spec stored in the file.
pub fn load_weights(path: &Path) -> Result<Network> {
    let buf = std::fs::read(path)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic; not a weights file".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let spec = read_spec(&mut cur)?;
    let mut net = Network::zeros(&spec)?;
    let tensor_count = cur.u32()? as usize;
    let mut params = net.param_tensors_mut();
    if tensor_count != params.len() {
        return Err(Error::Format(format!(
            "file has {tensor_count} tensors, spec implies {}",
            params.len()
        )));
    }
    for t in params.iter_mut() {
        let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        if n != t.len() {
            return Err(Error::Format(format!(
                "tensor length {n} does not match spec shape {}",
                t.len()
            )));
        }
        let bytes = cur.take(4 * n)?;
        for (v, b) in t.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    if cur.pos != buf.len() {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    Ok(net)
}

/// Loads a network and verifies the stored spec matches `expected`.
pub fn load_weights_expecting(path: &Path, expected: &NetworkSpec) -> Result<Network> {
    let net = load_weights(path)?;
    if net.spec() != expected {
        return Err(Error::Format(format!(
            "weights file spec does not match: file has rnn_hidden {}, window {} s; \
             requested rnn_hidden {}, window {} s",
            net.spec().rnn_hidden,
            net.spec().window_size_s,
            expected.rnn_hidden,
            expected.window_size_s
        )));
    }
    Ok(net)
}
