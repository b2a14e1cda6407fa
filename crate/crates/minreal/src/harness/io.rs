//! Run persistence: Markov containers, checkpoint files, dataset manifests,
//! and CSV writers. Every file is written atomically.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ioutil;
use crate::linops::MarkovSequence;
use crate::system::{GenConfig, SystemKind};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ioutil::atomic_write(path, text.as_bytes())
}

/// Markov container: text header plus little-endian `f64` blocks in time
/// order (row-major within a block).
pub fn write_markov(path: &Path, k: &MarkovSequence) -> Result<()> {
    ioutil::atomic_write(path, &markov_bytes(k))
}

fn markov_bytes(k: &MarkovSequence) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(
        format!("MINREAL-MARKOV v1\nn_y={} n_u={} l={}\n---\n", k.n_y(), k.n_u(), k.l()).as_bytes(),
    );
    ioutil::push_f64_slice(&mut buf, k.flat().transpose().iter().copied());
    buf
}

pub fn read_markov(path: &Path) -> Result<MarkovSequence> {
    markov_from_bytes(&std::fs::read(path)?)
}

fn markov_from_bytes(bytes: &[u8]) -> Result<MarkovSequence> {
    let (lines, payload) = ioutil::split_header(bytes)?;
    if lines.first().map(String::as_str) != Some("MINREAL-MARKOV v1") {
        return Err(Error::Format("bad Markov file magic".into()));
    }
    let fields = ioutil::header_fields(lines.get(1).map(String::as_str).unwrap_or(""));
    let n_y = ioutil::field_as_u64(&fields, "n_y")? as usize;
    let n_u = ioutil::field_as_u64(&fields, "n_u")? as usize;
    let l = ioutil::field_as_u64(&fields, "l")? as usize;
    let mut rd = ioutil::ByteReader::new(payload);
    let mut flat = DMatrix::zeros(n_y, (2 * l + 1) * n_u);
    for i in 0..n_y {
        for j in 0..(2 * l + 1) * n_u {
            flat[(i, j)] = rd.read_f64()?;
        }
    }
    MarkovSequence::from_flat(flat, l, n_y, n_u)
}

/// Checkpoint container: a sequence of `(iteration, MarkovSequence)`
/// snapshots taken along one solver run.
pub fn write_checkpoints(path: &Path, checkpoints: &[(u64, MarkovSequence)]) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("no checkpoints to write"));
    }
    let (l, n_y, n_u) =
        (checkpoints[0].1.l(), checkpoints[0].1.n_y(), checkpoints[0].1.n_u());
    let mut buf = Vec::new();
    buf.extend_from_slice(
        format!(
            "MINREAL-CHECKPOINTS v1\nn_y={n_y} n_u={n_u} l={l} count={}\n---\n",
            checkpoints.len()
        )
        .as_bytes(),
    );
    for (iter, k) in checkpoints {
        ioutil::push_u64(&mut buf, *iter);
        ioutil::push_f64_slice(&mut buf, k.flat().transpose().iter().copied());
    }
    ioutil::atomic_write(path, &buf)
}

pub fn read_checkpoints(path: &Path) -> Result<Vec<(u64, MarkovSequence)>> {
    let bytes = std::fs::read(path)?;
    let (lines, payload) = ioutil::split_header(&bytes)?;
    if lines.first().map(String::as_str) != Some("MINREAL-CHECKPOINTS v1") {
        return Err(Error::Format("bad checkpoint file magic".into()));
    }
    let fields = ioutil::header_fields(lines.get(1).map(String::as_str).unwrap_or(""));
    let n_y = ioutil::field_as_u64(&fields, "n_y")? as usize;
    let n_u = ioutil::field_as_u64(&fields, "n_u")? as usize;
    let l = ioutil::field_as_u64(&fields, "l")? as usize;
    let count = ioutil::field_as_u64(&fields, "count")? as usize;
    let mut rd = ioutil::ByteReader::new(payload);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let iter = rd.read_u64()?;
        let mut flat = DMatrix::zeros(n_y, (2 * l + 1) * n_u);
        for i in 0..n_y {
            for j in 0..(2 * l + 1) * n_u {
                flat[(i, j)] = rd.read_f64()?;
            }
        }
        out.push((iter, MarkovSequence::from_flat(flat, l, n_y, n_u)?));
    }
    Ok(out)
}

/// Dataset manifest: the generator configuration and the file layout, in
/// plain text. The harness treats this as the single source of ground truth
/// and never re-derives the true system from the data files.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub gen: GenConfig,
    pub batch_file: String,
    pub system_file: String,
    pub gstar_file: String,
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BATCH_FILE: &str = "batch.bin";
pub const SYSTEM_FILE: &str = "system.bin";
pub const GSTAR_FILE: &str = "gstar.bin";

pub fn write_manifest(dir: &Path, gen: &GenConfig) -> Result<()> {
    let text = format!(
        "minreal-manifest v1\n\
         n_x_star = {}\nn_u = {}\nn_y = {}\nn_rollouts = {}\nl = {}\n\
         noise_var = {}\nsystem_kind = {}\nspectral_radius_cap = {}\nseed = {}\n\
         batch_file = {BATCH_FILE}\nsystem_file = {SYSTEM_FILE}\ngstar_file = {GSTAR_FILE}\n",
        gen.n_x_star,
        gen.n_u,
        gen.n_y,
        gen.n_rollouts,
        gen.l,
        gen.noise_var,
        gen.system_kind,
        gen.spectral_radius_cap,
        gen.seed
    );
    write_text(&dir.join(MANIFEST_FILE), &text)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut lines = text.lines();
    if lines.next() != Some("minreal-manifest v1") {
        return Err(Error::Format("bad manifest magic".into()));
    }
    let mut get = std::collections::HashMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once('=') {
            get.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let field = |key: &str| -> Result<String> {
        get.get(key).cloned().ok_or_else(|| Error::Format(format!("manifest missing `{key}`")))
    };
    let gen = GenConfig {
        n_x_star: field("n_x_star")?.parse().map_err(|_| Error::Format("bad n_x_star".into()))?,
        n_u: field("n_u")?.parse().map_err(|_| Error::Format("bad n_u".into()))?,
        n_y: field("n_y")?.parse().map_err(|_| Error::Format("bad n_y".into()))?,
        n_rollouts: field("n_rollouts")?.parse().map_err(|_| Error::Format("bad n_rollouts".into()))?,
        l: field("l")?.parse().map_err(|_| Error::Format("bad l".into()))?,
        noise_var: field("noise_var")?.parse().map_err(|_| Error::Format("bad noise_var".into()))?,
        system_kind: field("system_kind")?.parse::<SystemKind>()?,
        spectral_radius_cap: field("spectral_radius_cap")?
            .parse()
            .map_err(|_| Error::Format("bad spectral_radius_cap".into()))?,
        seed: field("seed")?.parse().map_err(|_| Error::Format("bad seed".into()))?,
    };
    Ok(Manifest {
        gen,
        batch_file: field("batch_file")?,
        system_file: field("system_file")?,
        gstar_file: field("gstar_file")?,
    })
}

/// Minimal RFC-4180-style CSV assembly: `,` separator, `\n` rows, fields
/// quoted only when they contain a separator or quote.
pub fn csv_row(fields: &[String]) -> String {
    let mut row = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        if f.contains(',') || f.contains('"') || f.contains('\n') {
            row.push('"');
            row.push_str(&f.replace('"', "\"\""));
            row.push('"');
        } else {
            row.push_str(f);
        }
    }
    row.push('\n');
    row
}
