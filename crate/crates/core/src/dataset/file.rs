//! Dataset container: a text header terminated by `end\n`, then little-endian
//! column blocks per split (inputs, targets, trajectory ids).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Dataset, GenerationReport, Normalization, PairSet, RecipeKind, SamplingRecipe};
use crate::error::{Error, Result};
use crate::model::CONTROL_DIM;

const MAGIC: &str = "GCNLAB-DATASET";
pub const DATASET_VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(msg.into())
}

fn write_split(w: &mut impl Write, set: &PairSet, dim: usize) -> std::io::Result<()> {
    let n = set.len();
    for j in 0..dim {
        for i in 0..n {
            w.write_all(&set.inputs[i * dim + j].to_le_bytes())?;
        }
    }
    for j in 0..CONTROL_DIM {
        for i in 0..n {
            w.write_all(&set.targets[i * CONTROL_DIM + j].to_le_bytes())?;
        }
    }
    for id in &set.trajectory {
        w.write_all(&id.to_le_bytes())?;
    }
    Ok(())
}

fn read_split(r: &mut impl Read, n: usize, dim: usize) -> Result<PairSet> {
    let mut f64s = |count: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf).map_err(|_| corrupt("truncated dataset body"))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let cols_in = f64s(n * dim)?;
    let cols_out = f64s(n * CONTROL_DIM)?;
    let mut inputs = vec![0.0; n * dim];
    let mut targets = vec![0.0; n * CONTROL_DIM];
    for j in 0..dim {
        for i in 0..n {
            inputs[i * dim + j] = cols_in[j * n + i];
        }
    }
    for j in 0..CONTROL_DIM {
        for i in 0..n {
            targets[i * CONTROL_DIM + j] = cols_out[j * n + i];
        }
    }
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|_| corrupt("truncated dataset body"))?;
    let trajectory = buf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(PairSet { inputs, targets, trajectory })
}

impl Dataset {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let n = self.norm.to_array().map(|v| v.to_string()).join(" ");
        let header = format!(
            "{MAGIC}\nversion {DATASET_VERSION}\nkind {}\ninput_dim {}\nnormalization {n}\n\
             train_pairs {}\ntest_pairs {}\ntrain_trajectories {}\ntest_trajectories {}\nend\n",
            self.kind.name(),
            self.input_dim(),
            self.train.len(),
            self.test.len(),
            self.train_trajectories,
            self.test_trajectories,
        );
        let io = |e| Error::io(path, e);
        w.write_all(header.as_bytes()).map_err(io)?;
        write_split(&mut w, &self.train, self.input_dim()).map_err(io)?;
        write_split(&mut w, &self.test, self.input_dim()).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut lines = Vec::new();
        loop {
            let mut line = String::new();
            let got = r.read_line(&mut line).map_err(|_| corrupt("unreadable header"))?;
            if got == 0 {
                return Err(corrupt("header without end marker"));
            }
            let line = line.trim_end().to_string();
            if line == "end" {
                break;
            }
            lines.push(line);
            if lines.len() > 32 {
                return Err(corrupt("header too long"));
            }
        }
        if lines.first().map(String::as_str) != Some(MAGIC) {
            return Err(corrupt("bad magic"));
        }
        let field = |key: &str| -> Result<&str> {
            lines
                .iter()
                .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')))
                .ok_or_else(|| corrupt(format!("missing header field {key}")))
        };
        let num = |key: &str| -> Result<usize> { field(key)?.parse().map_err(|_| corrupt(format!("bad {key}"))) };
        let version: u32 = field("version")?.parse().map_err(|_| corrupt("bad version"))?;
        if version != DATASET_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: DATASET_VERSION });
        }
        let kind = RecipeKind::from_name(field("kind")?).ok_or_else(|| corrupt("unknown kind"))?;
        let dim = num("input_dim")?;
        if dim != kind.input_dim() {
            return Err(Error::DimensionMismatch { expected: kind.input_dim(), got: dim });
        }
        let norm: Vec<f64> = field("normalization")?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| corrupt("bad normalization")))
            .collect::<Result<_>>()?;
        let norm = Normalization::from_array(norm.try_into().map_err(|_| corrupt("normalization needs 7 values"))?);
        let train = read_split(&mut r, num("train_pairs")?, dim)?;
        let test = read_split(&mut r, num("test_pairs")?, dim)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(corrupt("trailing bytes after dataset body"));
        }
        Ok(Dataset {
            kind,
            norm,
            train,
            test,
            train_trajectories: num("train_trajectories")?,
            test_trajectories: num("test_trajectories")?,
        })
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    version: u32,
    recipe: &'a SamplingRecipe,
    report: &'a GenerationReport,
    convergence_rate: f64,
}

/// Human-readable manifest next to a dataset file (`<path>.manifest.json`).
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_manifest(path: &Path, recipe: &SamplingRecipe, report: &GenerationReport) -> Result<PathBuf> {
    let out = manifest_path(path);
    let m = Manifest {
        format: MAGIC,
        version: DATASET_VERSION,
        recipe,
        report,
        convergence_rate: report.convergence_rate(),
    };
    let text = serde_json::to_string_pretty(&m)?;
    std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}
