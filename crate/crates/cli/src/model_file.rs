//! The versioned text model artifact.
//!
//! ```text
//! rank-model v1
//! loss listmle
//! features 3
//! w 0 0.5
//! w 2 -1.25
//! alpha -0.4          (ties-rk only)
//! beta 0.2            (ties-d only)
//! pipeline m.pipeline (optional, relative to the model file)
//! ```
//!
//! Only nonzero weights are written, ascending by index. Reading and
//! rewriting a file reproduces it byte for byte.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use pmop::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossName {
    PmopFd,
    PmopGibbs,
    PmopMh,
    ListMle,
    RankNet,
    RankSvm,
    RankReg,
    TiesRk,
    TiesD,
}

pub const LOSS_NAMES: [&str; 9] = [
    "pmop-fd",
    "pmop-gibbs",
    "pmop-mh",
    "listmle",
    "ranknet",
    "ranksvm",
    "rankreg",
    "ties-rk",
    "ties-d",
];

impl FromStr for LossName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pmop-fd" => LossName::PmopFd,
            "pmop-gibbs" => LossName::PmopGibbs,
            "pmop-mh" => LossName::PmopMh,
            "listmle" => LossName::ListMle,
            "ranknet" => LossName::RankNet,
            "ranksvm" => LossName::RankSvm,
            "rankreg" => LossName::RankReg,
            "ties-rk" => LossName::TiesRk,
            "ties-d" => LossName::TiesD,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown loss `{other}`; expected one of {}",
                    LOSS_NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LossName::PmopFd => "pmop-fd",
            LossName::PmopGibbs => "pmop-gibbs",
            LossName::PmopMh => "pmop-mh",
            LossName::ListMle => "listmle",
            LossName::RankNet => "ranknet",
            LossName::RankSvm => "ranksvm",
            LossName::RankReg => "rankreg",
            LossName::TiesRk => "ties-rk",
            LossName::TiesD => "ties-d",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub loss: LossName,
    pub features: usize,
    pub weights: Vec<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// File name of the feature pipeline, relative to the model file.
    pub pipeline: Option<String>,
}

impl ModelFile {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "rank-model v1")?;
        writeln!(w, "loss {}", self.loss)?;
        writeln!(w, "features {}", self.features)?;
        for (i, v) in self.weights.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "w {i} {v}")?;
            }
        }
        if let Some(a) = self.alpha {
            writeln!(w, "alpha {a}")?;
        }
        if let Some(b) = self.beta {
            writeln!(w, "beta {b}")?;
        }
        if let Some(p) = &self.pipeline {
            writeln!(w, "pipeline {p}")?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        self.write(&mut w)
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty model file".into()))?;
        if header?.trim() != "rank-model v1" {
            return Err(parse_err(1, "expected `rank-model v1` header".into()));
        }

        let mut loss = None;
        let mut features = None;
        let mut sparse: Vec<(usize, f64)> = Vec::new();
        let mut alpha = None;
        let mut beta = None;
        let mut pipeline = None;

        for (lineno, line) in lines {
            let lineno = lineno + 1;
            let line = line?;
            let content = line.trim();
            if content.is_empty() {
                continue;
            }
            let parts: Vec<&str> = content.split_whitespace().collect();
            match parts.as_slice() {
                ["loss", name] => loss = Some(name.parse::<LossName>()?),
                ["features", n] => {
                    features = Some(
                        n.parse::<usize>()
                            .map_err(|_| parse_err(lineno, format!("bad feature count `{n}`")))?,
                    )
                }
                ["w", idx, val] => {
                    let i = idx
                        .parse::<usize>()
                        .map_err(|_| parse_err(lineno, format!("bad weight index `{idx}`")))?;
                    let v = val
                        .parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("bad weight value `{val}`")))?;
                    sparse.push((i, v));
                }
                ["alpha", val] => {
                    alpha = Some(
                        val.parse::<f64>()
                            .map_err(|_| parse_err(lineno, format!("bad alpha value `{val}`")))?,
                    )
                }
                ["beta", val] => {
                    beta = Some(
                        val.parse::<f64>()
                            .map_err(|_| parse_err(lineno, format!("bad beta value `{val}`")))?,
                    )
                }
                ["pipeline", name] => pipeline = Some((*name).to_string()),
                _ => return Err(parse_err(lineno, format!("unrecognized line `{content}`"))),
            }
        }

        let loss = loss.ok_or_else(|| parse_err(0, "model file missing loss line".into()))?;
        let features =
            features.ok_or_else(|| parse_err(0, "model file missing features line".into()))?;
        let mut weights = vec![0.0; features];
        for (i, v) in sparse {
            if i >= features {
                return Err(parse_err(
                    0,
                    format!("weight index {i} out of range for {features} features"),
                ));
            }
            weights[i] = v;
        }
        Ok(ModelFile {
            loss,
            features,
            weights,
            alpha,
            beta,
            pipeline,
        })
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path.as_ref())?;
        Self::read(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn round_trips_byte_identically() {
        let m = ModelFile {
            loss: LossName::TiesRk,
            features: 4,
            weights: vec![0.5, 0.0, -1.25, 1e-300],
            alpha: Some(-0.375),
            beta: None,
            pipeline: Some("m.pipeline".into()),
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = ModelFile::read(Cursor::new(&buf)).unwrap();
        assert_eq!(back, m);
        let mut buf2 = Vec::new();
        back.write(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(ModelFile::read(Cursor::new(b"not a model\n")).is_err());
        assert!(ModelFile::read(Cursor::new(b"rank-model v1\nloss nope\nfeatures 1\n")).is_err());
        assert!(ModelFile::read(Cursor::new(b"rank-model v1\nfeatures 1\n")).is_err());
        let oob = b"rank-model v1\nloss listmle\nfeatures 1\nw 3 0.5\n";
        assert!(ModelFile::read(Cursor::new(&oob[..])).is_err());
    }

    #[test]
    fn all_loss_names_parse() {
        for name in LOSS_NAMES {
            let loss: LossName = name.parse().unwrap();
            assert_eq!(loss.to_string(), name);
        }
        assert!("brand-new".parse::<LossName>().is_err());
    }
}
