use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use ergolab::averages::{
    equidistribution_test, furstenberg_average, gowers_norm, multi_ergodic_average, prime_vs_lambda,
    weyl_report, wtrick_discrepancy, AverageRequest, ConvergenceReport, Iterates, PhasePolynomial,
    DEFAULT_PHI_CAP,
};
use ergolab::combinatorics::{
    cyclic_counterexample_search, density, find_configuration, recurrence_profile, sliding_upper_density,
    solve_dilated_system, syndeticity_gap,
};
use ergolab::dynamics::Observable;
use ergolab::PolynomialFamily;

use crate::args::{
    family, observables, parse_count, BackendArgs, Format, ModeKind, OutputArgs, ScheduleArgs, SchemeArgs,
    SetArgs, SystemArgs,
};
use crate::Outcome;

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

/// Top-level fields as `key<TAB>value` lines.
fn flat_tsv(v: &Value) -> String {
    let mut out = String::new();
    if let Value::Object(map) = v {
        for (k, val) in map {
            let cell = match val {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k}\t{cell}\n"));
        }
    }
    out
}

fn render<T: Serialize>(value: &T, format: Format) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    match format {
        Format::Json => pretty(&v),
        Format::Tsv => flat_tsv(&v),
    }
}

fn render_report(rep: &ConvergenceReport, format: Format) -> Outcome {
    let text = match format {
        Format::Json => format!("{}\n", rep.to_json()),
        Format::Tsv => rep.to_tsv(),
    };
    Outcome {
        text,
        pass: rep.trend.passed(),
    }
}

#[derive(Args, Debug)]
pub struct CheckIndependence {
    /// Family members, e.g. "sqrt(2)*t^2+t" "sqrt(3)*t^2-t"
    #[arg(required = true)]
    pub family: Vec<String>,
}

impl CheckIndependence {
    pub fn run(&self) -> Result<Outcome> {
        let fam = PolynomialFamily::parse(&self.family)?;
        let verdict = fam.is_strongly_independent()?;
        let witness = verdict.witness.as_ref().map(|w| {
            json!({
                "lambda": w.lambda.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "rho": w.rho.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "combination": fam.combine(&w.lambda).map(|p| p.to_string()).unwrap_or_default(),
                "validated": w.validate(&fam).unwrap_or(false),
            })
        });
        let v = json!({
            "family": fam.members().iter().map(ToString::to_string).collect::<Vec<_>>(),
            "verdict": if verdict.independent { "independent" } else { "not independent" },
            "witness": witness,
        });
        Ok(Outcome {
            text: pretty(&v),
            pass: verdict.independent,
        })
    }
}

#[derive(Args, Debug)]
pub struct Weyl {
    /// Phase polynomial q(t) in the coefficient grammar
    #[arg(long, conflicts_with = "coeffs", required_unless_present = "coeffs")]
    pub poly: Option<String>,
    /// Float coefficients of q, constant term first, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub coeffs: Vec<f64>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Weyl {
    pub fn run(&self) -> Result<Outcome> {
        let q = match &self.poly {
            Some(text) => PhasePolynomial::from_real(&PolynomialFamily::parse(&[text])?.members()[0]),
            None => PhasePolynomial::from_f64(&self.coeffs),
        };
        let rep = weyl_report(&q, &self.schedule.build()?)?;
        Ok(render_report(&rep, self.output.format))
    }
}

#[derive(Args, Debug)]
pub struct Average {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Iterate polynomials p_i (repeat per member)
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Observables f_i, one per family member: "e(1x - 2y) + 0.5", "box 0 0.25"
    #[arg(long, required = true)]
    pub obs: Vec<String>,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Average {
    pub fn run(&self) -> Result<Outcome> {
        let system = self.system.build()?;
        let mut req = AverageRequest::new(
            system.clone(),
            Iterates::Family(family(&self.family)?),
            observables(&self.obs)?,
            self.scheme.build()?,
            self.schedule.build()?,
        );
        req.backend = self.backend.build();
        req.start = self.system.start(&system)?;
        let rep = multi_ergodic_average(&req)?;
        Ok(render_report(&rep, self.output.format))
    }
}

#[derive(Args, Debug)]
pub struct Furstenberg {
    #[command(flatten)]
    pub system: SystemArgs,
    /// The polynomial q in the iterates [q(n)], 2[q(n)], ...
    #[arg(long)]
    pub poly: String,
    /// Number of iterates l
    #[arg(long)]
    pub ell: usize,
    /// Observables f_1..f_l
    #[arg(long, required = true)]
    pub obs: Vec<String>,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Furstenberg {
    pub fn run(&self) -> Result<Outcome> {
        let system = self.system.build()?;
        let q = PolynomialFamily::parse(&[&self.poly])?.members()[0].clone();
        let rep = furstenberg_average(
            &system,
            &q,
            self.ell,
            &observables(&self.obs)?,
            &self.scheme.build()?,
            &self.schedule.build()?,
            self.backend.build(),
        )?;
        Ok(render_report(&rep, self.output.format))
    }
}

#[derive(Args, Debug)]
pub struct Equidistribution {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Iterate polynomials p_i
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Orbit length
    #[arg(long = "N", value_parser = parse_count, default_value = "10000")]
    pub n: u64,
    /// Largest frequency |h_i| in the character test
    #[arg(long = "H", default_value_t = 3)]
    pub h: u32,
    /// Cells per axis in the box test
    #[arg(long, default_value_t = 8)]
    pub grid: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Equidistribution {
    pub fn run(&self) -> Result<Outcome> {
        let system = self.system.build()?;
        let x = self.system.start(&system)?.unwrap_or_else(|| system.origin());
        let rep = equidistribution_test(&system, &family(&self.family)?, &x, self.n, self.h, self.grid)?;
        Ok(Outcome {
            text: render(&rep, self.output.format),
            pass: rep.equidistributed,
        })
    }
}

#[derive(Args, Debug)]
pub struct Wtrick {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Iterate polynomials p_i
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Observables f_i
    #[arg(long, required = true)]
    pub obs: Vec<String>,
    /// W-trick parameter: W is the product of the primes below w
    #[arg(long)]
    pub w: u64,
    /// Largest phi(W) (number of residue subruns) allowed
    #[arg(long, default_value_t = DEFAULT_PHI_CAP)]
    pub phi_cap: u64,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Wtrick {
    pub fn run(&self) -> Result<Outcome> {
        let system = self.system.build()?;
        let mut req = AverageRequest::new(
            system.clone(),
            Iterates::Family(family(&self.family)?),
            observables(&self.obs)?,
            ergolab::averages::Scheme::Cesaro,
            self.schedule.build()?,
        );
        req.backend = self.backend.build();
        req.start = self.system.start(&system)?;
        let rep = wtrick_discrepancy(&req, self.w, self.phi_cap)?;
        let text = match self.output.format {
            Format::Json => format!("{}\n", rep.to_json()),
            Format::Tsv => rep.to_tsv(),
        };
        Ok(Outcome {
            text,
            pass: rep.trend.passed(),
        })
    }
}

#[derive(Args, Debug)]
pub struct Recurrence {
    #[command(flatten)]
    pub set: SetArgs,
    /// Iterate polynomials p_i
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Largest n in the profile
    #[arg(long, value_parser = parse_count)]
    pub nmax: u64,
    /// Range over all n or primes only
    #[arg(long, value_enum, default_value_t = ModeKind::All)]
    pub mode: ModeKind,
    /// Treat a Beatty set as a rotation set, so shifts need no window truncation
    #[arg(long)]
    pub rotation: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Recurrence {
    pub fn run(&self) -> Result<Outcome> {
        let fam = family(&self.family)?;
        let profile = if self.rotation {
            let rot = self
                .set
                .rotation()?
                .ok_or_else(|| anyhow!("--rotation needs a \"beatty ALPHA THETA\" set"))?;
            recurrence_profile(&rot, &fam, self.nmax, self.mode.into())?
        } else {
            recurrence_profile(&self.set.build()?, &fam, self.nmax, self.mode.into())?
        };
        let mut v = serde_json::to_value(&profile)?;
        if let Value::Object(map) = &mut v {
            if self.output.format == Format::Tsv {
                map.remove("ns");
                map.remove("terms");
            }
        }
        Ok(Outcome {
            text: match self.output.format {
                Format::Json => pretty(&v),
                Format::Tsv => flat_tsv(&v),
            },
            pass: profile.verdict,
        })
    }
}

#[derive(Args, Debug)]
pub struct Configurations {
    #[command(flatten)]
    pub set: SetArgs,
    /// Iterate polynomials p_i
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Largest n searched
    #[arg(long, value_parser = parse_count)]
    pub nmax: u64,
    /// Range over all n or primes only
    #[arg(long, value_enum, default_value_t = ModeKind::All)]
    pub mode: ModeKind,
    /// Solve c_i x_i - c_0 x_0 = [p_i(n)] instead, with these dilates c_0,...,c_l
    #[arg(long, value_delimiter = ',')]
    pub dilates: Vec<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Configurations {
    pub fn run(&self) -> Result<Outcome> {
        let e = self.set.build()?;
        let fam = family(&self.family)?;
        let v = if self.dilates.is_empty() {
            let found = find_configuration(&e, &fam, self.nmax, self.mode.into())?;
            let validated = found.as_ref().map(|c| c.validate(&e, &fam)).transpose()?;
            json!({"found": found.is_some(), "configuration": found, "validated": validated})
        } else {
            if self.mode == ModeKind::Prime {
                bail!("dilated systems range over all n");
            }
            let found = solve_dilated_system(&e, &self.dilates, &fam, self.nmax)?;
            let validated = found
                .as_ref()
                .map(|s| s.validate(&e, &self.dilates, &fam))
                .transpose()?;
            json!({"found": found.is_some(), "solution": found, "validated": validated})
        };
        Ok(Outcome {
            text: render(&v, self.output.format),
            pass: v["found"] == json!(true) && v["validated"] == json!(true),
        })
    }
}

#[derive(Args, Debug)]
pub struct CounterexampleSearch {
    /// Integer polynomials p_i, e.g. "t^2"
    #[arg(long, required = true)]
    pub poly: Vec<String>,
    /// Largest modulus m searched (at most 16)
    #[arg(long, default_value_t = 8)]
    pub max_m: u64,
    /// Largest subset size |A| searched
    #[arg(long, default_value_t = 16)]
    pub max_size: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl CounterexampleSearch {
    pub fn run(&self) -> Result<Outcome> {
        let fam = PolynomialFamily::parse(&self.poly)?;
        let polys = fam
            .members()
            .iter()
            .map(|p| {
                p.coeffs()
                    .iter()
                    .map(|c| {
                        c.to_rational()
                            .filter(|q| q.is_integer())
                            .and_then(|q| num_traits::ToPrimitive::to_i64(q.numer()))
                            .ok_or_else(|| anyhow!("{p} does not have integer coefficients"))
                    })
                    .collect::<Result<Vec<i64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let found = cyclic_counterexample_search(self.max_m, self.max_size, &polys)?;
        let v = json!({"violations": found.len(), "results": found});
        Ok(Outcome {
            text: render(&v, self.output.format),
            pass: true,
        })
    }
}

#[derive(Args, Debug)]
pub struct Gowers {
    /// Order k of the norm (1 to 4)
    #[arg(long)]
    pub k: u32,
    /// Modulus m; f is the observable evaluated at r/m
    #[arg(long, requires = "obs", conflicts_with = "values")]
    pub m: Option<u64>,
    /// Observable giving f(r) = obs(r/m)
    #[arg(long)]
    pub obs: Option<String>,
    /// File of "re im" lines giving f(0), ..., f(m-1)
    #[arg(long, required_unless_present = "m")]
    pub values: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Gowers {
    pub fn run(&self) -> Result<Outcome> {
        let f: Vec<Complex64> = match (&self.values, self.m, &self.obs) {
            (Some(path), _, _) => std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let parts: Vec<f64> = l
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .with_context(|| format!("bad line {l:?}"))?;
                    match parts.as_slice() {
                        [re] => Ok(Complex64::new(*re, 0.0)),
                        [re, im] => Ok(Complex64::new(*re, *im)),
                        _ => bail!("expected \"re im\", got {l:?}"),
                    }
                })
                .collect::<Result<_>>()?,
            (None, Some(m), Some(obs)) => {
                let f = Observable::parse(obs)?;
                (0..m).map(|r| f.eval_residue(r, m)).collect()
            }
            _ => bail!("give either --values or --m with --obs"),
        };
        let norm = gowers_norm(&f, self.k)?;
        let v = json!({"m": f.len(), "k": self.k, "norm": norm});
        Ok(Outcome {
            text: render(&v, self.output.format),
            pass: true,
        })
    }
}

#[derive(Args, Debug)]
pub struct PrimesAverage {
    /// Phase polynomial q with a(n) = e(q(n))
    #[arg(long)]
    pub poly: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl PrimesAverage {
    pub fn run(&self) -> Result<Outcome> {
        let q = PhasePolynomial::from_real(&PolynomialFamily::parse(&[&self.poly])?.members()[0]);
        let rep = prime_vs_lambda(&q, &self.schedule.build()?)?;
        Ok(render_report(&rep, self.output.format))
    }
}

#[derive(Args, Debug)]
pub struct Density {
    #[command(flatten)]
    pub set: SetArgs,
    /// Width of the sliding window for the upper Banach density approximation
    #[arg(long, value_parser = parse_count)]
    pub width: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Density {
    pub fn run(&self) -> Result<Outcome> {
        let e = self.set.build()?;
        let sliding = self
            .width
            .map(|w| sliding_upper_density(&e, w))
            .transpose()?
            .map(|q| q.to_string());
        let gaps = syndeticity_gap(&e).ok();
        let v = json!({
            "window": e.window(),
            "size": e.len(),
            "density": density(&e).to_string(),
            "sliding_upper_density_approx": sliding,
            "gaps": gaps,
        });
        Ok(Outcome {
            text: render(&v, self.output.format),
            pass: true,
        })
    }
}
