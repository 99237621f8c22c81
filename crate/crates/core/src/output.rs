//! Artifact writers for the command-line front end: CSV with an embedded
//! config echo, JSON reports, a minimal SVG polyline plot, and a compact
//! binary path format with a round-trip reader.

use crate::error::{Error, Result};
use crate::npoint::Path as SimPath;
use std::fs::File;
use std::io::{BufWriter, Read as _, Write};
use std::path::{Path, PathBuf};

const PATH_MAGIC: &[u8; 8] = b"STKYPATH";
const PATH_FORMAT_VERSION: u32 = 1;
const PATH_HEADER_LEN: usize = 64;

/// Output sink for one CLI invocation: a target directory plus the resolved
/// configuration, which is echoed into every artifact so results are
/// self-describing.
#[derive(Debug, Clone)]
pub struct Artifacts {
    dir: PathBuf,
    meta: Vec<(String, String)>,
    deterministic: bool,
}

impl Artifacts {
    pub fn new(dir: PathBuf, deterministic: bool) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, meta: Vec::new(), deterministic })
    }

    /// Record one resolved config entry for the echo block.
    pub fn set_meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let w = BufWriter::new(File::create(&path)?);
        Ok((path, w))
    }

    fn comment_block(&self, prefix: &str) -> String {
        let mut s = format!("{prefix} generated by sticky-flows {}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.meta {
            s.push_str(&format!("{prefix} {k} = {v}\n"));
        }
        s
    }

    /// CSV with a `#`-commented config preamble, a header row, then data rows.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let (path, mut w) = self.file(name)?;
        w.write_all(self.comment_block("#").as_bytes())?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            if row.len() != header.len() {
                return Err(Error::InvalidConfig(format!(
                    "csv row width {} != header width {}",
                    row.len(),
                    header.len()
                )));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(path)
    }

    /// JSON report with the config echo embedded under a `"config"` key.
    pub fn write_json(&self, name: &str, body: serde_json::Value) -> Result<PathBuf> {
        let mut config = serde_json::Map::new();
        config.insert(
            "version".to_string(),
            serde_json::Value::String(env!("CARGO_PKG_VERSION").to_string()),
        );
        for (k, v) in &self.meta {
            config.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        let mut root = serde_json::Map::new();
        root.insert("config".to_string(), serde_json::Value::Object(config));
        match body {
            serde_json::Value::Object(m) => {
                for (k, v) in m {
                    root.insert(k, v);
                }
            }
            other => {
                root.insert("result".to_string(), other);
            }
        }
        let (path, mut w) = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, &serde_json::Value::Object(root))?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }

    /// Minimal standalone SVG: one polyline per series over shared axes.
    ///
    /// Under `--deterministic` the timestamp comment is suppressed so the
    /// bytes depend only on the data.
    pub fn write_svg(&self, name: &str, series: &[SvgSeries<'_>]) -> Result<PathBuf> {
        const W: f64 = 720.0;
        const H: f64 = 440.0;
        const M: f64 = 50.0;

        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in series {
            for &x in s.xs {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
            }
            for &y in s.ys {
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
        if !(xmin.is_finite() && ymin.is_finite()) {
            return Err(Error::InvalidConfig("svg: no finite data".to_string()));
        }
        if xmax == xmin {
            xmax = xmin + 1.0;
        }
        if ymax == ymin {
            ymax = ymin + 1.0;
        }
        let sx = |x: f64| M + (x - xmin) / (xmax - xmin) * (W - 2.0 * M);
        let sy = |y: f64| H - M - (y - ymin) / (ymax - ymin) * (H - 2.0 * M);

        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
        let (path, mut w) = self.file(name)?;
        writeln!(
            w,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        )?;
        if !self.deterministic {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(w, "<!-- unix time {stamp} -->")?;
        }
        write!(w, "<!--\n{}-->\n", self.comment_block(" "))?;
        writeln!(w, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>")?;
        // axes
        writeln!(
            w,
            "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            H - M,
            W - M,
            H - M
        )?;
        writeln!(w, "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>", H - M)?;
        for (tick, label_x) in [(xmin, M), (xmax, W - M)] {
            writeln!(
                w,
                "<text x=\"{label_x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{tick:.4}</text>",
                H - M + 16.0
            )?;
        }
        for (tick, label_y) in [(ymin, H - M), (ymax, M)] {
            writeln!(
                w,
                "<text x=\"{}\" y=\"{label_y}\" font-size=\"11\" text-anchor=\"end\">{tick:.4}</text>",
                M - 6.0
            )?;
        }
        for (i, s) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = s
                .xs
                .iter()
                .zip(s.ys)
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            writeln!(
                w,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>",
                pts.join(" ")
            )?;
            writeln!(
                w,
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>",
                W - M + 4.0 - 110.0,
                M + 14.0 * (i as f64 + 1.0),
                s.label
            )?;
        }
        writeln!(w, "</svg>")?;
        w.flush()?;
        Ok(path)
    }

    /// Write a simulated path as CSV: `t,x1,...,xN` rows after the preamble.
    pub fn write_path_csv(&self, name: &str, path: &SimPath) -> Result<PathBuf> {
        let n = path.dim();
        let mut header: Vec<String> = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = path
            .times
            .iter()
            .zip(&path.states)
            .map(|(&t, xs)| {
                let mut row = vec![format!("{t:.12e}")];
                row.extend(xs.iter().map(|x| format!("{x:.12e}")));
                row
            })
            .collect();
        self.write_csv(name, &header_refs, &rows)
    }

    /// Write a simulated path in the compact binary format.
    ///
    /// Layout: 64-byte header (magic, format version, coordinate count,
    /// row count, output step, seed, zero padding), then little-endian
    /// `f64` rows of `t, x1, ..., xN`.
    pub fn write_path_binary(
        &self,
        name: &str,
        path: &SimPath,
        dt_out: f64,
        seed: u64,
    ) -> Result<PathBuf> {
        let n = path.dim() as u32;
        let steps = path.len() as u64;
        let mut header = Vec::with_capacity(PATH_HEADER_LEN);
        header.extend_from_slice(PATH_MAGIC);
        header.extend_from_slice(&PATH_FORMAT_VERSION.to_le_bytes());
        header.extend_from_slice(&n.to_le_bytes());
        header.extend_from_slice(&steps.to_le_bytes());
        header.extend_from_slice(&dt_out.to_le_bytes());
        header.extend_from_slice(&seed.to_le_bytes());
        header.resize(PATH_HEADER_LEN, 0);

        let (out, mut w) = self.file(name)?;
        w.write_all(&header)?;
        for (&t, xs) in path.times.iter().zip(&path.states) {
            w.write_all(&t.to_le_bytes())?;
            for &x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(out)
    }
}

/// One labelled polyline for [`Artifacts::write_svg`].
pub struct SvgSeries<'a> {
    pub label: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

/// Metadata recovered from a binary path file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHeader {
    pub coords: u32,
    pub steps: u64,
    pub dt_out: f64,
    pub seed: u64,
}

/// Read back a file written by [`Artifacts::write_path_binary`].
pub fn read_path_binary(file: &Path) -> Result<(PathHeader, SimPath)> {
    let mut bytes = Vec::new();
    File::open(file)?.read_to_end(&mut bytes)?;
    if bytes.len() < PATH_HEADER_LEN || &bytes[..8] != PATH_MAGIC {
        return Err(Error::InvalidConfig("not a sticky-flows path file".to_string()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != PATH_FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!("unsupported path format version {version}")));
    }
    let header = PathHeader {
        coords: u32_at(12),
        steps: u64_at(16),
        dt_out: f64_at(24),
        seed: u64_at(32),
    };
    let n = header.coords as usize;
    let row = 8 * (n + 1);
    let need = PATH_HEADER_LEN + row * header.steps as usize;
    if bytes.len() < need {
        return Err(Error::InvalidConfig("truncated path file".to_string()));
    }
    let mut times = Vec::with_capacity(header.steps as usize);
    let mut states = Vec::with_capacity(header.steps as usize);
    for r in 0..header.steps as usize {
        let base = PATH_HEADER_LEN + r * row;
        times.push(f64_at(base));
        states.push((0..n).map(|i| f64_at(base + 8 * (i + 1))).collect());
    }
    Ok((header, SimPath::new(times, states)?))
}
