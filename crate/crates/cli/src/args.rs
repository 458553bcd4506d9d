use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use ergolab::averages::{Backend, Scheme, DEFAULT_CHECKPOINTS, DEFAULT_GRID};
use ergolab::combinatorics::{FiniteSet, NMode, RotationSet};
use ergolab::dynamics::{Observable, Point, System};
use ergolab::PolynomialFamily;

/// Reads `N` values such as `100000`, `1e5` or `2.5e4`, flooring to an integer.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.trim().parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{s:?} is not a number"))?;
    if !x.is_finite() || x < 0.0 || x >= 9.2e18 {
        return Err(format!("{s:?} is out of range"));
    }
    Ok(x.floor() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    Torus,
    Cyclic,
    Affine,
    Heisenberg,
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// Dynamical system
    #[arg(long, value_enum, default_value_t = SystemKind::Torus)]
    pub system: SystemKind,
    /// Rotation vector for torus (repeat per coordinate) or the affine skew product
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<String>,
    /// Heisenberg generator b = (a1, a2, a3), comma separated
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<String>,
    /// Modulus of the cyclic group
    #[arg(long)]
    pub m: Option<u64>,
    /// Step of the cyclic rotation x -> x + a
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub a: i64,
    /// Start point coordinates (or a residue for cyclic systems); the origin by default
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
}

/// Reals from the command line: decimals become JSON numbers (taken
/// exactly), everything else goes through the coefficient grammar.
fn real_value(s: &str) -> Value {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => json!(v),
        _ => json!(s),
    }
}

impl SystemArgs {
    pub fn build(&self) -> Result<System> {
        let desc = match self.system {
            SystemKind::Torus => {
                if self.alpha.is_empty() {
                    bail!("--alpha is required for a torus rotation");
                }
                json!({"kind": "torus", "alpha": self.alpha.iter().map(|s| real_value(s)).collect::<Vec<_>>()})
            }
            SystemKind::Affine => {
                if self.alpha.len() != 1 {
                    bail!("the affine skew product takes exactly one --alpha");
                }
                json!({"kind": "affine", "alpha": real_value(&self.alpha[0])})
            }
            SystemKind::Cyclic => {
                let m = self.m.ok_or_else(|| anyhow!("--m is required for a cyclic system"))?;
                json!({"kind": "cyclic", "m": m, "a": self.a})
            }
            SystemKind::Heisenberg => {
                if self.b.len() != 3 {
                    bail!("--b needs three comma-separated entries");
                }
                json!({"kind": "heisenberg", "b": self.b.iter().map(|s| real_value(s)).collect::<Vec<_>>()})
            }
        };
        Ok(System::from_json(&desc)?)
    }

    pub fn start(&self, system: &System) -> Result<Option<Point>> {
        if self.x.is_empty() {
            return Ok(None);
        }
        let p = match system {
            System::Cyclic(_) => {
                let [r] = self.x.as_slice() else {
                    bail!("a cyclic start point is a single residue");
                };
                if r.fract() != 0.0 || *r < 0.0 {
                    bail!("residues are non-negative integers");
                }
                Point::Residue(*r as u64)
            }
            _ => Point::from_f64(&self.x),
        };
        system.check_point(&p)?;
        Ok(Some(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeKind {
    Cesaro,
    Uniform,
    Prime,
    Lambda,
    Wtricked,
}

#[derive(Args, Debug, Clone)]
pub struct SchemeArgs {
    /// Summation scheme
    #[arg(long, value_enum, default_value_t = SchemeKind::Cesaro)]
    pub scheme: SchemeKind,
    /// Lower end M of uniform averages over (M, N]
    #[arg(long = "M", value_parser = parse_count)]
    pub big_m: Option<u64>,
    /// W-trick parameter w > 2
    #[arg(long)]
    pub w: Option<u64>,
    /// W-trick residue r, coprime to W
    #[arg(long)]
    pub r: Option<u64>,
}

impl SchemeArgs {
    pub fn build(&self) -> Result<Scheme> {
        Ok(match self.scheme {
            SchemeKind::Cesaro => Scheme::Cesaro,
            SchemeKind::Uniform => Scheme::Uniform {
                m: self.big_m.ok_or_else(|| anyhow!("--M is required for uniform averages"))?,
            },
            SchemeKind::Prime => Scheme::Prime,
            SchemeKind::Lambda => Scheme::LambdaWeighted,
            SchemeKind::Wtricked => Scheme::WTricked {
                w: self.w.ok_or_else(|| anyhow!("--w is required for w-tricked averages"))?,
                r: self.r.ok_or_else(|| anyhow!("--r is required for w-tricked averages"))?,
            },
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    /// Largest N; checkpoints are the default powers of ten below it, then N
    #[arg(long = "N", value_parser = parse_count)]
    pub n: Option<u64>,
    /// Explicit comma-separated checkpoints (overrides the default schedule)
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    pub checkpoints: Vec<u64>,
}

impl ScheduleArgs {
    pub fn build(&self) -> Result<Vec<u64>> {
        if !self.checkpoints.is_empty() {
            return Ok(self.checkpoints.clone());
        }
        Ok(match self.n {
            None => DEFAULT_CHECKPOINTS.to_vec(),
            Some(0) => bail!("--N must be at least 1"),
            Some(n) => {
                let mut cps: Vec<u64> = DEFAULT_CHECKPOINTS.iter().copied().filter(|&c| c < n).collect();
                cps.push(n);
                cps
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Auto,
    Character,
    Sampling,
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    /// Exact character expansion (tori with trig observables) or grid sampling
    #[arg(long, value_enum, default_value_t = BackendKind::Auto)]
    pub backend: BackendKind,
    /// Number of grid points for sampling (also when auto falls back to it)
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
}

impl BackendArgs {
    pub fn build(&self) -> Backend {
        match self.backend {
            BackendKind::Auto => Backend::Auto { grid: self.grid },
            BackendKind::Character => Backend::Character,
            BackendKind::Sampling => Backend::Sampling { grid: self.grid },
        }
    }
}

pub fn family(texts: &[String]) -> Result<PolynomialFamily> {
    if texts.is_empty() {
        bail!("at least one --family polynomial is required");
    }
    Ok(PolynomialFamily::parse(texts)?)
}

pub fn observables(texts: &[String]) -> Result<Vec<Observable>> {
    texts
        .iter()
        .map(|t| Observable::parse(t).with_context(|| format!("observable {t:?}")))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeKind {
    All,
    Prime,
}

impl From<ModeKind> for NMode {
    fn from(m: ModeKind) -> NMode {
        match m {
            ModeKind::All => NMode::All,
            ModeKind::Prime => NMode::Prime,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SetArgs {
    /// Set generator ("evens", "odds", "all", "primes", "interval a b", "beatty ALPHA THETA") or a file of integers
    #[arg(long)]
    pub set: String,
    /// Window length N of the set
    #[arg(long = "N", value_parser = parse_count)]
    pub n: Option<u64>,
}

impl SetArgs {
    pub fn window(&self) -> Result<u64> {
        self.n.ok_or_else(|| anyhow!("--N (window length) is required for generated sets"))
    }

    pub fn build(&self) -> Result<FiniteSet> {
        let path = std::path::Path::new(&self.set);
        if path.is_file() {
            return Ok(FiniteSet::from_file(path, self.n)?);
        }
        Ok(FiniteSet::generate(&self.set, self.window()?)?)
    }

    /// The set as an untruncated rotation set, when it is a Beatty generator.
    pub fn rotation(&self) -> Result<Option<RotationSet>> {
        let words: Vec<&str> = self.set.split_whitespace().collect();
        match words.as_slice() {
            ["beatty", alpha, theta] => Ok(Some(RotationSet::beatty(alpha, theta, self.window()?)?)),
            _ => Ok(None),
        }
    }
}
