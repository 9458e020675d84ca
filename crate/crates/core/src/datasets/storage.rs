//! Binary dataset container.
//!
//! A plain-text header followed by little-endian payload:
//!
//! ```text
//! logloss-mc dataset v1
//! n <rows>
//! d <raw feature dimension, intercept excluded>
//! k <classes>
//! posteriors <0|1>
//! end
//! ```
//!
//! then `n × (d + 1)` f64 feature values, `n` u64 labels, and when flagged
//! `n × k` f64 posterior values.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

const MAGIC: &str = "logloss-mc dataset v1";

pub fn write_dataset<W: Write>(mut w: W, ds: &LabeledDataset<f64>) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n {}", ds.len())?;
    writeln!(w, "d {}", ds.raw_dim())?;
    writeln!(w, "k {}", ds.num_classes())?;
    writeln!(w, "posteriors {}", u8::from(ds.has_posteriors()))?;
    writeln!(w, "end")?;
    for v in ds.features() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &y in ds.labels() {
        w.write_all(&(y as u64).to_le_bytes())?;
    }
    if let Some(post) = ds.posterior_values() {
        for v in post {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &LabeledDataset<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(BufWriter::new(file), ds).map_err(|e| Error::io(path, e))
}

fn header_field(line: &str, key: &str) -> Result<usize> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|v| v.trim_end().parse().ok())
        .ok_or_else(|| Error::HeaderMismatch(format!("expected `{key} <count>`, got {line:?}")))
}

pub fn read_dataset<R: Read>(r: R) -> Result<LabeledDataset<f64>> {
    let mut r = BufReader::new(r);
    let mut lines = Vec::with_capacity(6);
    for _ in 0..6 {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| Error::HeaderMismatch(format!("unreadable header: {e}")))?;
        lines.push(line.trim_end_matches('\n').to_string());
    }
    if lines[0] != MAGIC {
        return Err(Error::HeaderMismatch(format!("bad magic line {:?}", lines[0])));
    }
    let n = header_field(&lines[1], "n")?;
    let d = header_field(&lines[2], "d")?;
    let k = header_field(&lines[3], "k")?;
    let has_post = match header_field(&lines[4], "posteriors")? {
        0 => false,
        1 => true,
        other => return Err(Error::HeaderMismatch(format!("posteriors flag {other}"))),
    };
    if lines[5] != "end" {
        return Err(Error::HeaderMismatch("missing `end` line".into()));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| Error::HeaderMismatch(format!("unreadable payload: {e}")))?;
    let n_feat = n * (d + 1);
    let n_post = if has_post { n * k } else { 0 };
    let expected = 8 * (n_feat + n + n_post);
    if payload.len() != expected {
        return Err(Error::HeaderMismatch(format!(
            "header promises {expected} payload bytes, file has {}",
            payload.len()
        )));
    }
    let mut words = payload.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("8-byte chunk"));
    let features: Vec<f64> = words.by_ref().take(n_feat).map(f64::from_le_bytes).collect();
    let labels: Vec<usize> = words.by_ref().take(n).map(|b| u64::from_le_bytes(b) as usize).collect();
    let posteriors = has_post.then(|| words.map(f64::from_le_bytes).collect::<Vec<_>>());
    LabeledDataset::new(features, d + 1, labels, k, posteriors)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file)
}
