use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lorpl2::lattice::max_exponent;
use lorpl2::moments::{
    analytic_univariate_moments, univariate_moments, AtomicMeasure, MomentProvider,
    QuadraturePolicy, UnivariateMoments, Weight,
};
use serde::Deserialize;

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Lebesgue,
    W1,
    W2,
    W3,
    W4,
    W5,
    W6,
    Atomic,
    Table,
}

impl MeasureKind {
    fn weight(self, param: Option<f64>) -> Result<Option<Weight>, Failure> {
        let need = |name: &str| {
            param.ok_or_else(|| Failure::usage(format!("--measure {name} needs --weight-param")))
        };
        Ok(Some(match self {
            MeasureKind::Lebesgue => Weight::Lebesgue,
            MeasureKind::W1 => Weight::W1,
            MeasureKind::W2 => Weight::W2,
            MeasureKind::W3 => Weight::W3 { mu: need("w3")? },
            MeasureKind::W4 => Weight::W4,
            MeasureKind::W5 => Weight::W5,
            MeasureKind::W6 => Weight::W6 { kappa: need("w6")? },
            MeasureKind::Atomic | MeasureKind::Table => return Ok(None),
        }))
    }
}

/// Flags shared by every subcommand. Anything left unset falls back to the
/// config file, then to the defaults below.
#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// JSON file with any of the options below (snake_case keys); flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub measure: Option<MeasureKind>,
    /// Rectangle a,b,c,d for product measures and for sampling points
    #[arg(long, value_parser = parse_rect)]
    pub rect: Option<[f64; 4]>,
    /// mu for w3, kappa for w6
    #[arg(long, allow_hyphen_values = true)]
    pub weight_param: Option<f64>,
    /// Atom list, one `x,y,weight` per line
    #[arg(long)]
    pub atoms: Option<PathBuf>,
    /// Moment table in the lorpl2-moments-v1 format
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub levels: Option<i64>,
    #[arg(long)]
    pub tol_quad: Option<f64>,
    #[arg(long)]
    pub tol_rank: Option<f64>,
    #[arg(long)]
    pub tol_res: Option<f64>,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for random sample points
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random sample points
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    measure: Option<MeasureKind>,
    rect: Option<[f64; 4]>,
    weight_param: Option<f64>,
    atoms: Option<PathBuf>,
    table: Option<PathBuf>,
    window: Option<i64>,
    levels: Option<i64>,
    tol_quad: Option<f64>,
    tol_rank: Option<f64>,
    tol_res: Option<f64>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    points: Option<usize>,
    pub skip: Option<Vec<String>>,
    pub weight: Option<MeasureKind>,
    pub interval: Option<[f64; 2]>,
    pub count: Option<usize>,
    pub pairs: Option<PathBuf>,
    pub residuals: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub measure: MeasureKind,
    pub rect: [f64; 4],
    pub weight_param: Option<f64>,
    pub atoms: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub window: Option<i64>,
    pub levels: usize,
    pub tol_quad: f64,
    pub tol_rank: f64,
    pub tol_res: f64,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub points: usize,
}

pub fn parse_rect(s: &str) -> Result<[f64; 4], String> {
    let v = parse_list(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 numbers a,b,c,d, got {}", v.len()))
}

pub fn parse_interval(s: &str) -> Result<[f64; 2], String> {
    let v = parse_list(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 2 numbers a,b, got {}", v.len()))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::usage(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn resolve(flags: &Common, file: &FileConfig) -> Result<RunConfig, Failure> {
        let levels = flags.levels.or(file.levels).unwrap_or(6);
        if levels < 0 {
            return Err(Failure::usage(format!("--levels must be >= 0, got {levels}")));
        }
        let window = flags.window.or(file.window);
        if let Some(w) = window {
            if w < 0 {
                return Err(Failure::usage(format!("--window must be >= 0, got {w}")));
            }
        }
        let rect = flags.rect.or(file.rect).unwrap_or([1.0, 2.0, 1.0, 2.0]);
        if !(rect[0] > 0.0 && rect[1] > rect[0] && rect[2] > 0.0 && rect[3] > rect[2]) {
            return Err(Failure::usage(format!(
                "--rect needs 0 < a < b and 0 < c < d, got {rect:?}"
            )));
        }
        Ok(RunConfig {
            measure: flags.measure.or(file.measure).unwrap_or(MeasureKind::Lebesgue),
            rect,
            weight_param: flags.weight_param.or(file.weight_param),
            atoms: flags.atoms.clone().or(file.atoms.clone()),
            table: flags.table.clone().or(file.table.clone()),
            window,
            levels: levels as usize,
            tol_quad: positive("--tol-quad", flags.tol_quad.or(file.tol_quad).unwrap_or(1e-12))?,
            tol_rank: positive("--tol-rank", flags.tol_rank.or(file.tol_rank).unwrap_or(1e-8))?,
            tol_res: positive("--tol-res", flags.tol_res.or(file.tol_res).unwrap_or(1e-8))?,
            out: flags.out.clone().or(file.out.clone()),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            points: flags.points.or(file.points).unwrap_or(200),
        })
    }

    /// Window large enough for the recurrence at `levels`, unless set.
    pub fn window_for(&self, levels: usize) -> i64 {
        self.window.unwrap_or(2 * max_exponent(levels) + 2)
    }

    pub fn policy(&self) -> QuadraturePolicy {
        QuadraturePolicy {
            rel_tol: self.tol_quad,
            ..QuadraturePolicy::default()
        }
    }

    pub fn provider(&self, window: i64) -> Result<MomentProvider, Failure> {
        let [a, b, c, d] = self.rect;
        match self.measure.weight(self.weight_param)? {
            Some(w @ (Weight::Lebesgue | Weight::W2)) => {
                Ok(MomentProvider::analytic_product(w, (a, b), w, (c, d), window)?)
            }
            Some(w) => Ok(MomentProvider::product_weight(
                w,
                (a, b),
                w,
                (c, d),
                window,
                &self.policy(),
            )?),
            None if self.measure == MeasureKind::Atomic => {
                let path = self
                    .atoms
                    .as_ref()
                    .ok_or_else(|| Failure::usage("--measure atomic needs --atoms"))?;
                Ok(MomentProvider::atomic(read_atoms(path)?, window)?)
            }
            None => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Failure::usage("--measure table needs --table"))?;
                let p = MomentProvider::load_table(path)?;
                match self.window {
                    Some(w) if w > p.window() => Err(Failure::usage(format!(
                        "--window {w} exceeds the table window {}",
                        p.window()
                    ))),
                    _ => Ok(p),
                }
            }
        }
    }

    /// Box for random sample points: the atoms' bounding box for atomic
    /// measures, the rectangle otherwise.
    pub fn sample_box(&self, provider: &MomentProvider) -> [f64; 4] {
        match provider.atomic_measure() {
            Some(m) => {
                let mut r = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                for &(x, y, _) in m.atoms() {
                    r = [r[0].min(x), r[1].max(x), r[2].min(y), r[3].max(y)];
                }
                if r[0] == r[1] {
                    r[1] = r[0] * 1.1;
                }
                if r[2] == r[3] {
                    r[3] = r[2] * 1.1;
                }
                r
            }
            None => self.rect,
        }
    }
}

pub fn read_atoms(path: &Path) -> Result<AtomicMeasure, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("atoms {}: {e}", path.display())))?;
    let mut atoms = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::usage(format!("atoms line {}: {e}", k + 1)))?;
        if v.len() != 3 {
            return Err(Failure::usage(format!(
                "atoms line {}: expected x,y,weight",
                k + 1
            )));
        }
        atoms.push((v[0], v[1], v[2]));
    }
    Ok(AtomicMeasure::new(atoms)?)
}

/// One-dimensional moments on `[a, b]`, in closed form where available.
pub fn line_moments(
    kind: MeasureKind,
    param: Option<f64>,
    (a, b): (f64, f64),
    k: i64,
    policy: &QuadraturePolicy,
) -> Result<UnivariateMoments, Failure> {
    match kind.weight(param)? {
        Some(w @ (Weight::Lebesgue | Weight::W2)) => {
            Ok(analytic_univariate_moments(w, a, b, -k, k)?)
        }
        Some(w) => Ok(univariate_moments(w, a, b, -k, k, policy)?),
        None => Err(Failure::usage("--weight must be a one-dimensional weight")),
    }
}
