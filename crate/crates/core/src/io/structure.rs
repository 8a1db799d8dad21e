//! Text serialization of sparse structures (masks only, no weights).
//!
//! ```text
//! sparselab-structure 1
//! algorithm dnw
//! density 0.095
//! seed 1
//! epochs 5
//! layer 128 784 9533
//! 0 5 17 ...
//! layer 10 128 122
//! ...
//! end
//! ```
//!
//! Each `layer <rows> <cols> <nnz>` line is followed by the layer's active
//! flat row-major indices, strictly ascending, at most
//! [`INDICES_PER_LINE`] per line. `nnz` must equal `density_to_k` of the
//! layer shape at the recorded density, and consecutive layers must chain.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::algorithms::{AlgorithmKind, TrainResult};
use crate::error::{Error, Result};
use crate::sparsity::{density_to_k, Mask};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &str = "sparselab-structure";
pub const INDICES_PER_LINE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StructureMeta {
    pub algorithm: AlgorithmKind,
    pub density: f64,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureFile {
    pub format_version: u32,
    pub layer_shapes: Vec<(usize, usize)>,
    /// Active flat indices per layer, ascending.
    pub layers: Vec<Vec<usize>>,
    pub meta: StructureMeta,
}

impl StructureFile {
    pub fn from_masks(masks: &[Mask], meta: StructureMeta) -> Result<Self> {
        let file = StructureFile {
            format_version: FORMAT_VERSION,
            layer_shapes: masks.iter().map(Mask::shape).collect(),
            layers: masks.iter().map(Mask::active_indices).collect(),
            meta,
        };
        file.validate(Path::new("<memory>"))?;
        Ok(file)
    }

    pub fn from_result(result: &TrainResult) -> Result<Self> {
        StructureFile::from_masks(
            &result.final_masks,
            StructureMeta {
                algorithm: result.algorithm,
                density: result.density,
                seed: result.seed,
                epochs: result.epochs,
            },
        )
    }

    pub fn masks(&self) -> Result<Vec<Mask>> {
        self.layer_shapes
            .iter()
            .zip(&self.layers)
            .map(|(&(r, c), idx)| Mask::from_indices(r, c, idx))
            .collect()
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let fail = |msg: String| Err(Error::format(path, msg));
        if self.format_version != FORMAT_VERSION {
            return fail(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.layers.is_empty() || self.layers.len() != self.layer_shapes.len() {
            return fail("structure has no layers".into());
        }
        for (l, (&(rows, cols), idx)) in self.layer_shapes.iter().zip(&self.layers).enumerate() {
            if rows == 0 || cols == 0 {
                return fail(format!("layer {l} has an empty shape"));
            }
            if l > 0 && cols != self.layer_shapes[l - 1].0 {
                return fail(format!(
                    "layer {l} takes {cols} inputs but layer {} has {} outputs",
                    l - 1,
                    self.layer_shapes[l - 1].0
                ));
            }
            if idx.is_empty() {
                return fail(format!("layer {l} has no active connections"));
            }
            if let Some(w) = idx.windows(2).find(|w| w[1] <= w[0]) {
                return fail(format!(
                    "layer {l} indices not strictly ascending ({} then {})",
                    w[0], w[1]
                ));
            }
            if let Some(&last) = idx.last() {
                if last >= rows * cols {
                    return fail(format!("layer {l} index {last} outside {rows}x{cols}"));
                }
            }
            let k = density_to_k(rows, cols, self.meta.density)
                .map_err(|e| Error::format(path, format!("bad density: {e}")))?;
            if idx.len() != k {
                return fail(format!(
                    "layer {l} has {} connections but density {} implies {k}",
                    idx.len(),
                    self.meta.density
                ));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {}", self.format_version);
        let _ = writeln!(s, "algorithm {}", self.meta.algorithm);
        let _ = writeln!(s, "density {}", self.meta.density);
        let _ = writeln!(s, "seed {}", self.meta.seed);
        let _ = writeln!(s, "epochs {}", self.meta.epochs);
        for (&(r, c), idx) in self.layer_shapes.iter().zip(&self.layers) {
            let _ = writeln!(s, "layer {r} {c} {}", idx.len());
            for line in idx.chunks(INDICES_PER_LINE) {
                let parts: Vec<String> = line.iter().map(usize::to_string).collect();
                let _ = writeln!(s, "{}", parts.join(" "));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::format(path, format!("line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::format(path, format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(err(n, &format!("expected `{key}`")));
            }
            let value = parts.next().ok_or_else(|| err(n, &format!("`{key}` needs a value")))?;
            if parts.next().is_some() {
                return Err(err(n, "unexpected trailing fields"));
            }
            Ok((n, value.to_string()))
        };

        let (n, v) = header(MAGIC)?;
        let format_version: u32 = v.parse().map_err(|_| err(n, "bad version"))?;
        if format_version != FORMAT_VERSION {
            return Err(err(
                n,
                &format!("unsupported format version {format_version} (expected {FORMAT_VERSION})"),
            ));
        }
        let (n, v) = header("algorithm")?;
        let algorithm: AlgorithmKind = v.parse().map_err(|_| err(n, "unknown algorithm"))?;
        let (n, v) = header("density")?;
        let density: f64 = v.parse().map_err(|_| err(n, "bad density"))?;
        let (n, v) = header("seed")?;
        let seed: u64 = v.parse().map_err(|_| err(n, "bad seed"))?;
        let (n, v) = header("epochs")?;
        let epochs: usize = v.parse().map_err(|_| err(n, "bad epoch count"))?;

        let mut layer_shapes = Vec::new();
        let mut layers: Vec<Vec<usize>> = Vec::new();
        let mut declared: Vec<usize> = Vec::new();
        let mut ended = false;
        for (n, line) in lines {
            if ended {
                return Err(err(n, "content after `end`"));
            }
            let mut parts = line.split_whitespace().peekable();
            match parts.peek().copied() {
                Some("end") => {
                    if parts.nth(1).is_some() {
                        return Err(err(n, "unexpected fields after `end`"));
                    }
                    ended = true;
                }
                Some("layer") => {
                    let nums: Vec<usize> = parts
                        .skip(1)
                        .map(|t| t.parse().map_err(|_| err(n, "bad layer header")))
                        .collect::<Result<_>>()?;
                    let [r, c, nnz] = nums[..] else {
                        return Err(err(n, "layer header needs rows, cols and nnz"));
                    };
                    layer_shapes.push((r, c));
                    declared.push(nnz);
                    layers.push(Vec::with_capacity(nnz));
                }
                Some(_) => {
                    let current = layers
                        .last_mut()
                        .ok_or_else(|| err(n, "indices before any `layer` line"))?;
                    for t in parts {
                        current.push(t.parse().map_err(|_| err(n, "bad index"))?);
                    }
                }
                None => {}
            }
        }
        if !ended {
            return Err(Error::format(path, "missing `end` line (truncated file?)"));
        }
        for (l, (idx, &nnz)) in layers.iter().zip(&declared).enumerate() {
            if idx.len() != nnz {
                return Err(Error::format(
                    path,
                    format!("layer {l} declares {nnz} indices but lists {}", idx.len()),
                ));
            }
        }
        let file = StructureFile {
            format_version,
            layer_shapes,
            layers,
            meta: StructureMeta {
                algorithm,
                density,
                seed,
                epochs,
            },
        };
        file.validate(path)?;
        Ok(file)
    }
}

pub fn save_structure(result: &TrainResult, path: impl AsRef<Path>) -> Result<StructureFile> {
    let file = StructureFile::from_result(result)?;
    write_structure(&file, path)?;
    Ok(file)
}

pub fn write_structure(file: &StructureFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, file.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_structure(path: impl AsRef<Path>) -> Result<StructureFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StructureFile::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StructureFile {
        let m0 = Mask::from_indices(4, 3, &[0, 5, 11]).unwrap();
        let m1 = Mask::from_indices(2, 4, &[1, 6]).unwrap();
        StructureFile::from_masks(
            &[m0, m1],
            StructureMeta {
                algorithm: AlgorithmKind::Rigl,
                density: 0.25,
                seed: 42,
                epochs: 3,
            },
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<StructureFile> {
        StructureFile::parse(text, Path::new("t.structure"))
    }

    #[test]
    fn text_round_trip() {
        let f = sample();
        let text = f.to_text();
        assert!(text.starts_with("sparselab-structure 1\nalgorithm rigl\n"));
        assert_eq!(parse(&text).unwrap(), f);
    }

    #[test]
    fn duplicate_index_rejected() {
        let text = sample().to_text().replace("0 5 11", "0 5 5");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("ascending"), "{err}");
    }

    #[test]
    fn empty_layer_rejected() {
        let text = sample().to_text().replace("layer 2 4 2\n1 6\n", "layer 2 4 0\n");
        assert!(matches!(parse(&text), Err(Error::Format { .. })));
    }

    #[test]
    fn version_bounds_and_truncation_rejected() {
        let text = sample().to_text();
        assert!(parse(&text.replace("structure 1", "structure 2")).is_err());
        assert!(parse(&text.replace("0 5 11", "0 5 12")).is_err());
        assert!(parse(&text.replace("end\n", "")).is_err());
        assert!(parse(&text.replace("density 0.25", "density 0.5")).is_err());
        assert!(parse(&text.replace("layer 2 4 2", "layer 2 5 2")).is_err());
    }
}
