//! Episode directories.
//!
//! ```text
//! <episode>/
//!   manifest.txt       key = value lines, see below
//!   frame_00000.png    lossless RGB frames, one per observation
//!   frame_00001.png
//!   ...
//!   actions.bin        "FACT" | version u32 | rows u32 | cols u32 | f32 LE data
//! ```
//!
//! Manifest keys: `format`, `task`, `instruction`, `seed`, `success`,
//! `frames`, `height`, `width`, `actions_rows`, `frames_sha256` (over the raw
//! RGB bytes of all frames in order), `actions_sha256` (over the whole
//! actions file), and zero or more `warning` lines. Unknown keys are an
//! error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Episode, ACTION_DIM};
use crate::image::Rgb8Image;
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "cogdesk-episode/1";
pub const ACTIONS_MAGIC: &[u8; 4] = b"FACT";
pub const ACTIONS_VERSION: u32 = 1;

fn frame_name(i: usize) -> String {
    format!("frame_{i:05}.png")
}

fn frames_digest(ep: &Episode) -> String {
    let mut h = Sha256::new();
    for f in &ep.frames {
        h.update(f.as_raw());
    }
    hex::encode(h.finalize())
}

fn encode_actions(actions: &[[f32; ACTION_DIM]]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + actions.len() * ACTION_DIM * 4);
    buf.extend_from_slice(ACTIONS_MAGIC);
    buf.extend_from_slice(&ACTIONS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(actions.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(ACTION_DIM as u32).to_le_bytes());
    for row in actions {
        for x in row {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub fn save_episode(ep: &Episode, dir: impl AsRef<Path>) -> Result<()> {
    ep.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, f) in ep.frames.iter().enumerate() {
        f.save_png(dir.join(frame_name(i)))?;
    }
    let actions = encode_actions(&ep.actions);
    fs::write(dir.join("actions.bin"), &actions)?;
    let (h, w) = ep.frames[0].dims();
    let mut m = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| m.push_str(&format!("{k} = {v}\n"));
    kv("format", &MANIFEST_FORMAT);
    kv("task", &ep.task);
    kv("instruction", &ep.instruction.replace('\n', " "));
    kv("seed", &ep.seed);
    kv("success", &ep.success);
    kv("frames", &ep.frames.len());
    kv("height", &h);
    kv("width", &w);
    kv("actions_rows", &ep.actions.len());
    kv("frames_sha256", &frames_digest(ep));
    kv("actions_sha256", &hex::encode(Sha256::digest(&actions)));
    for warning in &ep.warnings {
        kv("warning", &warning.replace('\n', " "));
    }
    fs::write(dir.join("manifest.txt"), m)?;
    Ok(())
}

struct Manifest {
    path: PathBuf,
    values: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl Manifest {
    fn err(&self, field: &str, msg: impl Into<String>) -> Error {
        Error::Episode {
            path: self.path.clone(),
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| self.err(key, "missing"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|e: T::Err| self.err(key, format!("cannot parse `{raw}`: {e}")))
    }
}

const KNOWN_KEYS: &[&str] = &[
    "format",
    "task",
    "instruction",
    "seed",
    "success",
    "frames",
    "height",
    "width",
    "actions_rows",
    "frames_sha256",
    "actions_sha256",
];

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::Episode {
        path: path.clone(),
        field: "manifest".into(),
        msg: e.to_string(),
    })?;
    let mut m = Manifest {
        path,
        values: BTreeMap::new(),
        warnings: Vec::new(),
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(m.err("manifest", format!("line {}: expected `key = value`", lineno + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k == "warning" {
            m.warnings.push(v.to_string());
        } else if KNOWN_KEYS.contains(&k) {
            if m.values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(m.err(k, "duplicate key"));
            }
        } else {
            return Err(m.err(k, "unknown key"));
        }
    }
    Ok(m)
}

fn decode_actions(m: &Manifest, bytes: &[u8]) -> Result<Vec<[f32; ACTION_DIM]>> {
    if bytes.len() < 16 || &bytes[0..4] != ACTIONS_MAGIC {
        return Err(m.err("actions", "bad magic"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if u32_at(4) != ACTIONS_VERSION {
        return Err(m.err("actions", format!("unsupported version {}", u32_at(4))));
    }
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    if cols != ACTION_DIM {
        return Err(m.err("actions", format!("expected {ACTION_DIM} columns, found {cols}")));
    }
    if bytes.len() != 16 + rows * cols * 4 {
        return Err(m.err("actions", "length does not match header"));
    }
    Ok(bytes[16..]
        .chunks_exact(cols * 4)
        .map(|row| {
            let mut out = [0f32; ACTION_DIM];
            for (j, c) in row.chunks_exact(4).enumerate() {
                out[j] = f32::from_le_bytes(c.try_into().unwrap());
            }
            out
        })
        .collect())
}

pub fn load_episode(dir: impl AsRef<Path>) -> Result<Episode> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let format = m.get("format")?;
    if format != MANIFEST_FORMAT {
        return Err(m.err("format", format!("unsupported `{format}`")));
    }
    let task = m.get("task")?.parse().map_err(|e: Error| m.err("task", e.to_string()))?;
    let n_frames: usize = m.parse("frames")?;
    let rows: usize = m.parse("actions_rows")?;
    if n_frames == 0 {
        return Err(m.err("frames", "zero-length episode"));
    }
    if rows + 1 != n_frames {
        return Err(m.err(
            "actions_rows",
            format!("{rows} actions for {n_frames} frames; expected frames - 1"),
        ));
    }
    let height: usize = m.parse("height")?;
    let width: usize = m.parse("width")?;

    let action_bytes = fs::read(dir.join("actions.bin")).map_err(|e| m.err("actions", e.to_string()))?;
    if hex::encode(Sha256::digest(&action_bytes)) != m.get("actions_sha256")? {
        return Err(m.err("actions_sha256", "checksum mismatch"));
    }
    let actions = decode_actions(&m, &action_bytes)?;
    if actions.len() != rows {
        return Err(m.err("actions_rows", format!("file holds {} rows", actions.len())));
    }

    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let name = frame_name(i);
        let f = Rgb8Image::load_png(dir.join(&name)).map_err(|e| m.err(&name, e.to_string()))?;
        if f.dims() != (height, width) {
            return Err(m.err(&name, format!("size {:?} != {height}x{width}", f.dims())));
        }
        frames.push(f);
    }
    let ep = Episode {
        frames,
        actions,
        instruction: m.get("instruction")?.to_string(),
        task,
        success: m.parse("success")?,
        seed: m.parse("seed")?,
        warnings: m.warnings.clone(),
    };
    if frames_digest(&ep) != m.get("frames_sha256")? {
        return Err(m.err("frames_sha256", "checksum mismatch"));
    }
    Ok(ep)
}
