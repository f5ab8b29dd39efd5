//! Point clouds in ambient dimension `D` and the decimal text interchange
//! format shared by the CLI subcommands.
//!
//! Coordinates are printed with 17 significant digits so that a write/read
//! round trip reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A dense set of `n` points in `R^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "coordinate buffer length {} is not a multiple of dim {}",
                coords.len(),
                dim
            )));
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        PointCloud { dim, coords: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(1);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::invalid("ragged rows in point cloud"));
            }
            coords.extend_from_slice(row);
        }
        PointCloud::new(dim, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Euclidean distance between points `i` and `j`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        dist(self.point(i), self.point(j))
    }

    /// Largest pairwise distance; 0 for fewer than two points.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.dist(i, j));
            }
        }
        best
    }
}

pub fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    squared_dist(a, b).sqrt()
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Writes one float into `out` using the shared 17-significant-digit format.
pub fn push_f64(out: &mut String, x: f64) {
    let _ = write!(out, "{:.16e}", x);
}

/// One point file: a fingerprint header followed by one point per line.
///
/// Line layout after the header: `D` observed coordinates, then `D` latent
/// coordinates when latent points are present, then an origin tag.
#[derive(Debug, Clone)]
pub struct PointFile {
    pub fingerprint: String,
    pub observed: PointCloud,
    pub latent: Option<PointCloud>,
    pub origin: Vec<String>,
}

impl PointFile {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let n = self.observed.len();
        let dim = self.observed.dim();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# rsltree-points v1 fingerprint={} n={} dim={} latent={}",
            self.fingerprint,
            n,
            dim,
            self.latent.is_some()
        );
        for i in 0..n {
            let mut first = true;
            for &c in self.observed.point(i) {
                if !first {
                    out.push(',');
                }
                push_f64(&mut out, c);
                first = false;
            }
            if let Some(latent) = &self.latent {
                for &c in latent.point(i) {
                    out.push(',');
                    push_f64(&mut out, c);
                }
            }
            out.push(',');
            out.push_str(&self.origin[i]);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format { path: show(path), what: "empty file".into() })?;
        let mut fingerprint = String::new();
        let mut n = 0usize;
        let mut dim = 0usize;
        let mut latent = false;
        if !header.starts_with("# rsltree-points v1") {
            return Err(Error::Format {
                path: show(path),
                what: "missing point-file header".into(),
            });
        }
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("fingerprint=") {
                fingerprint = v.to_string();
            } else if let Some(v) = tok.strip_prefix("n=") {
                n = v.parse().map_err(|_| bad(path, "n"))?;
            } else if let Some(v) = tok.strip_prefix("dim=") {
                dim = v.parse().map_err(|_| bad(path, "dim"))?;
            } else if let Some(v) = tok.strip_prefix("latent=") {
                latent = v.parse().map_err(|_| bad(path, "latent"))?;
            }
        }
        if dim == 0 {
            return Err(bad(path, "dim"));
        }
        let mut observed = Vec::with_capacity(n * dim);
        let mut latent_coords = Vec::new();
        let mut origin = Vec::with_capacity(n);
        let expected = dim + if latent { dim } else { 0 } + 1;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected {
                return Err(Error::Format {
                    path: show(path),
                    what: format!("expected {} fields, got {}", expected, fields.len()),
                });
            }
            for f in &fields[..dim] {
                observed.push(f.parse::<f64>().map_err(|_| bad(path, "coordinate"))?);
            }
            if latent {
                for f in &fields[dim..2 * dim] {
                    latent_coords.push(f.parse::<f64>().map_err(|_| bad(path, "latent"))?);
                }
            }
            origin.push(fields[expected - 1].to_string());
        }
        let observed = PointCloud::new(dim, observed)?;
        if observed.len() != n {
            return Err(Error::Format {
                path: show(path),
                what: format!("header says n={} but file has {}", n, observed.len()),
            });
        }
        let latent = if latent { Some(PointCloud::new(dim, latent_coords)?) } else { None };
        Ok(PointFile { fingerprint, observed, latent, origin })
    }
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn bad(path: &Path, what: &str) -> Error {
    Error::Format { path: show(path), what: format!("unparsable {}", what) }
}
