use std::fmt::Write as _;
use std::path::Path;

use lorpl2::kernels::KernelEvaluator;
use lorpl2::lattice::Axis;
use lorpl2::moments::MomentProvider;
use lorpl2::ortho;
use lorpl2::recurrence::{compute_recurrence, verify_five_term};
use lorpl2::univariate::build_univariate;
use lorpl2::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{line_moments, MeasureKind, RunConfig};
use crate::Failure;

/// Round-trip decimal form of a double.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn random_points(cfg: &RunConfig, provider: &MomentProvider, n: usize) -> Vec<(f64, f64)> {
    let [a, b, c, d] = cfg.sample_box(provider);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..n)
        .map(|_| (rng.gen_range(a..b), rng.gen_range(c..d)))
        .collect()
}

pub fn moments(cfg: &RunConfig) -> Result<String, Failure> {
    let p = cfg.provider(cfg.window_for(cfg.levels))?;
    let w = match cfg.measure {
        MeasureKind::Table => cfg.window.unwrap_or(p.window()),
        _ => cfg.window_for(cfg.levels),
    };
    Ok(p.to_table_json(w)?)
}

pub fn orthonormalize(cfg: &RunConfig) -> Result<String, Failure> {
    let p = cfg.provider(cfg.window_for(cfg.levels))?;
    Ok(ortho::orthonormalize(&p, cfg.levels)?.to_json()?)
}

pub fn recurrence(cfg: &RunConfig, residuals: bool) -> Result<(String, Option<String>), Failure> {
    let p = cfg.provider(cfg.window_for(cfg.levels))?;
    let s = ortho::orthonormalize(&p, cfg.levels)?;
    let d = compute_recurrence(&s, &p)?;
    let csv = if residuals {
        let rows = verify_five_term(&s, &d, &random_points(cfg, &p, cfg.points))?;
        let mut out = String::from("level,axis,max_residual\n");
        for r in rows {
            writeln!(out, "{},{},{}", r.level, r.axis, num(r.max_residual)).unwrap();
        }
        Some(out)
    } else {
        None
    };
    Ok((d.to_json()?, csv))
}

fn read_pairs(path: &Path) -> Result<Vec<[f64; 4]>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("pairs {}: {e}", path.display())))?;
    let mut out = Vec::new();
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
            .map_err(|e| Failure::usage(format!("pairs line {}: {e}", k + 1)))?;
        let row: [f64; 4] = v
            .try_into()
            .map_err(|_| Failure::usage(format!("pairs line {}: expected x1,y1,x2,y2", k + 1)))?;
        out.push(row);
    }
    Ok(out)
}

/// Closed-form value, or `None` when the denominator is degenerate at this
/// pair.
fn closed_form(e: &KernelEvaluator, n: usize, p: [f64; 4], axis: Axis) -> Result<Option<f64>, Failure> {
    match e.kernel_cd(n, p[0], p[1], p[2], p[3], axis) {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateDenominator { .. }) => Ok(None),
        Err(other) => Err(other.into()),
    }
}

fn confluent(e: &KernelEvaluator, n: usize, x: f64, y: f64) -> Result<Option<f64>, Failure> {
    for axis in Axis::BOTH {
        match e.kernel_confluent(n, x, y, axis) {
            Ok(v) => return Ok(Some(v)),
            Err(Error::ConfluentSingular { .. }) => continue,
            Err(other) => return Err(other.into()),
        }
    }
    Ok(None)
}

pub fn kernel_eval(cfg: &RunConfig, pairs: Option<&Path>, count: usize) -> Result<String, Failure> {
    let n = cfg.levels;
    let big_n = n + 2;
    let p = cfg.provider(cfg.window_for(big_n))?;
    let s = ortho::orthonormalize(&p, big_n)?;
    let d = compute_recurrence(&s, &p)?;
    let e = KernelEvaluator::new(s, Some(d));
    let pairs = match pairs {
        Some(path) => read_pairs(path)?,
        None => {
            let pts = random_points(cfg, &p, 2 * count);
            pts.chunks(2).map(|w| [w[0].0, w[0].1, w[1].0, w[1].1]).collect()
        }
    };
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut out = String::from("x1,y1,x2,y2,n,direct,cd_x,cd_y,confluent,status\n");
    for pair in pairs {
        let direct = e.kernel(n, pair[0], pair[1], pair[2], pair[3])?;
        let cx = closed_form(&e, n, pair, Axis::X)?;
        let cy = closed_form(&e, n, pair, Axis::Y)?;
        let diagonal = pair[0] == pair[2] && pair[1] == pair[3];
        let status = match (diagonal, cx.is_none(), cy.is_none()) {
            (true, ..) => "diagonal",
            (false, true, true) => "degenerate",
            (false, true, false) => "degenerate-x",
            (false, false, true) => "degenerate-y",
            (false, false, false) => "ok",
        };
        let conf = if status == "ok" {
            None
        } else {
            confluent(&e, n, pair[0], pair[1])?
        };
        writeln!(
            out,
            "{},{},{},{},{n},{},{},{},{},{status}",
            num(pair[0]),
            num(pair[1]),
            num(pair[2]),
            num(pair[3]),
            num(direct),
            opt(cx),
            opt(cy),
            opt(conf)
        )
        .unwrap();
    }
    Ok(out)
}

pub fn univariate(cfg: &RunConfig, weight: MeasureKind, interval: [f64; 2]) -> Result<String, Failure> {
    let [a, b] = interval;
    if !(a > 0.0 && b > a) {
        return Err(Failure::usage(format!(
            "--interval needs 0 < a < b, got {a},{b}"
        )));
    }
    let n = cfg.levels;
    let m = line_moments(weight, cfg.weight_param, (a, b), n as i64 + 3, &cfg.policy())?;
    let sys = build_univariate(&m, n)?;
    let mut out = String::from("n,omega,c\n");
    for (k, omega, c) in sys.table() {
        writeln!(out, "{k},{},{}", num(omega), num(c)).unwrap();
    }
    Ok(out)
}
