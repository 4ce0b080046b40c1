use std::collections::BTreeMap;
use std::fmt::Write as _;

use lorpl2::kernels::KernelEvaluator;
use lorpl2::lattice::{dim, factorize, level_basis, monomials_up_to, struct_matrices, Axis, Monomial};
use lorpl2::moments::MomentProvider;
use lorpl2::ortho::{orthonormalize, OrthoSystem};
use lorpl2::recurrence::{
    compute_recurrence, favard_reconstruct, structural_report, verify_five_term, RecurrenceData,
    RANK_TOL,
};
use lorpl2::univariate::{
    align_blocks, build_tensor, build_univariate, cross_gram, explicit_f1_blocks,
    explicit_f2_blocks, TensorSystem,
};

use crate::commands::{num, random_points};
use crate::config::RunConfig;
use crate::Failure;

const ORTHONORMALITY_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-10;
const CONFLUENT_TOL: f64 = 1e-7;
const TENSOR_TOL: f64 = 1e-9;

pub const MODULES: [&str; 6] = ["kernels", "lattice", "moments", "ortho", "recurrence", "univariate"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Report {
    checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn to_csv(&self) -> String {
        let mut sorted: Vec<&Check> = self.checks.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let mut out = String::from("check,status,value,tolerance,detail\n");
        for c in sorted {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::NotApplicable => "n/a",
            };
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            writeln!(
                out,
                "{},{status},{},{},{}",
                c.name,
                opt(c.value),
                opt(c.tolerance),
                c.detail.replace([',', '\n'], ";")
            )
            .unwrap();
        }
        out
    }
}

struct Recorder<'a> {
    skip: &'a [String],
    report: Report,
}

impl Recorder<'_> {
    fn enabled(&self, name: &str) -> bool {
        let module = name.split('.').next().unwrap_or(name);
        !self.skip.iter().any(|s| s == module)
    }

    fn push(&mut self, name: &str, status: Status, value: Option<f64>, tolerance: Option<f64>, detail: String) {
        if self.enabled(name) {
            self.report.checks.push(Check {
                name: name.to_string(),
                status,
                value,
                tolerance,
                detail,
            });
        }
    }

    /// `value <= tolerance` passes.
    fn at_most(&mut self, name: &str, value: f64, tolerance: f64, detail: impl Into<String>) {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        self.push(name, status, Some(value), Some(tolerance), detail.into());
    }

    fn fail(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::Fail, None, None, detail.into());
    }

    fn not_applicable(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::NotApplicable, None, None, detail.into());
    }
}

fn lattice_checks(r: &mut Recorder, levels: usize) {
    if r.enabled("lattice") {
        let top = levels + 2;
        let mut mismatches = 0usize;
        for n in 0..=top {
            let basis = level_basis(n);
            for axis in Axis::BOTH {
                let mats = struct_matrices(n, axis);
                let u = axis.unit();
                for (row, &m) in basis.entries.iter().enumerate() {
                    let mut want = BTreeMap::new();
                    *want.entry(m.times(u)).or_insert(0) += 1;
                    *want.entry(m.times(Monomial::new(-u.i, -u.j))).or_insert(0) += 1;
                    let mut got = BTreeMap::new();
                    for b in &mats {
                        let target = level_basis(b.s);
                        for (col, &v) in b.data[row].iter().enumerate() {
                            if v != 0 {
                                *got.entry(target.entries[col]).or_insert(0) += v as i32;
                            }
                        }
                    }
                    mismatches += usize::from(got != want);
                }
            }
        }
        r.at_most(
            "lattice.shift_structure",
            mismatches as f64,
            0.0,
            format!("levels 0..={top}"),
        );

        let top_p = levels.clamp(2, 8);
        let mut failures = 0usize;
        for p in 2..=top_p {
            for m in monomials_up_to(2 * p - 1) {
                let ok = matches!(factorize(m, p), Ok((a, b)) if a.times(b) == m && a.level() < p && b.level() <= p);
                failures += usize::from(!ok);
            }
        }
        r.at_most(
            "lattice.factorization",
            failures as f64,
            0.0,
            format!("p = 2..={top_p}"),
        );
    }
}

fn moment_checks(r: &mut Recorder, p: &MomentProvider) {
    if !r.enabled("moments") {
        return;
    }
    let w = p.window();
    let mut bad = 0usize;
    for i in -w..=w {
        for j in -w..=w {
            match p.moment_f64(i, j) {
                Ok(v) if v.is_finite() && (i % 2 != 0 || j % 2 != 0 || v > 0.0) => {}
                _ => bad += 1,
            }
        }
    }
    r.at_most(
        "moments.finite",
        bad as f64,
        0.0,
        format!("window {w}; even moments positive"),
    );
}

fn kernel_checks(r: &mut Recorder, cfg: &RunConfig, p: &MomentProvider, s: &OrthoSystem, d: &RecurrenceData) {
    let names = ["kernels.christoffel_darboux", "kernels.confluent"];
    if cfg.levels < 2 {
        for n in names {
            r.not_applicable(n, "closed forms need levels >= 2");
        }
        return;
    }
    let top = cfg.levels - 2;
    let e = KernelEvaluator::new(s.clone(), Some(d.clone()));
    let pts = random_points(cfg, p, cfg.points.max(2));
    let admissible = |a: f64, b: f64| (a + 1.0 / a - b - 1.0 / b).abs() > 1e-3;
    let (mut cd, mut conf) = (0.0f64, 0.0f64);
    let (mut pairs, mut diag) = (0usize, 0usize);
    let mut error = None;
    for w in pts.chunks(2) {
        if w.len() < 2 {
            break;
        }
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        let run = || -> lorpl2::Result<(f64, Option<f64>)> {
            let mut cd = 0.0f64;
            let mut conf = None;
            for n in 0..=top {
                let direct = e.kernel(n, x1, y1, x2, y2)?;
                if admissible(x1, x2) && admissible(y1, y2) {
                    for axis in Axis::BOTH {
                        cd = cd.max((direct - e.kernel_cd(n, x1, y1, x2, y2, axis)?).abs());
                    }
                }
                if (x1 - 1.0).abs() > 1e-3 && (y1 - 1.0).abs() > 1e-3 {
                    let k = e.diagonal(n, x1, y1)?;
                    for axis in Axis::BOTH {
                        let c = (k - e.kernel_confluent(n, x1, y1, axis)?).abs();
                        conf = Some(conf.unwrap_or(0.0f64).max(c));
                    }
                }
            }
            Ok((cd, conf))
        };
        match run() {
            Ok((a, b)) => {
                cd = cd.max(a);
                pairs += 1;
                if let Some(b) = b {
                    conf = conf.max(b);
                    diag += 1;
                }
            }
            Err(err) => {
                error = Some(err.to_string());
                break;
            }
        }
    }
    match error {
        Some(err) => {
            for n in names {
                r.fail(n, err.clone());
            }
        }
        None => {
            r.at_most(
                names[0],
                cd,
                cfg.tol_res,
                format!("{pairs} pairs; levels 0..={top}; both axes"),
            );
            r.at_most(
                names[1],
                conf,
                CONFLUENT_TOL,
                format!("{diag} points; levels 0..={top}; both axes"),
            );
        }
    }
}

fn recurrence_checks(r: &mut Recorder, cfg: &RunConfig, p: &MomentProvider, s: &OrthoSystem, d: &RecurrenceData) {
    match verify_five_term(s, d, &random_points(cfg, p, cfg.points)) {
        Ok(rows) => {
            let worst = rows.iter().map(|x| x.max_residual).fold(0.0, f64::max);
            r.at_most(
                "recurrence.five_term",
                worst,
                cfg.tol_res,
                format!("{} points; {} relations", cfg.points, rows.len()),
            );
        }
        Err(e) => r.fail("recurrence.five_term", e.to_string()),
    }
    let rep = structural_report(d, RANK_TOL);
    r.at_most(
        "recurrence.symmetry",
        rep.transpose_symmetry.max(rep.diagonal_symmetry),
        SYMMETRY_TOL,
        "transposed and diagonal blocks",
    );
    let margin = rep.min_margin();
    let status = if margin > cfg.tol_rank && rep.first_rank_failure().is_none() {
        Status::Pass
    } else {
        Status::Fail
    };
    let detail = match rep.first_rank_failure() {
        Some(f) => format!("{} has rank {} < {}", f.condition, f.rank, f.expected),
        None => "smallest required singular value over the largest; must exceed tolerance".into(),
    };
    r.push("recurrence.rank", status, Some(margin), Some(cfg.tol_rank), detail);

    if cfg.levels < 4 {
        r.not_applicable("recurrence.favard", "reconstruction needs levels >= 4");
        return;
    }
    match favard_reconstruct(d) {
        Ok(f) => {
            let (m0, n0) = (p.moment_f64(0, 0).unwrap(), f.provider.moment_f64(0, 0).unwrap());
            let mut worst = 0.0f64;
            let mut failed = None;
            for i in -f.window..=f.window {
                for j in -f.window..=f.window {
                    match (p.moment_f64(i, j), f.provider.moment_f64(i, j)) {
                        (Ok(a), Ok(b)) => worst = worst.max((a / m0 - b / n0).abs()),
                        (Err(e), _) | (_, Err(e)) => failed = Some(e.to_string()),
                    }
                }
            }
            match failed {
                Some(e) => r.fail("recurrence.favard", e),
                None => r.at_most(
                    "recurrence.favard",
                    worst,
                    cfg.tol_res,
                    format!("normalized moments on window {}", f.window),
                ),
            }
        }
        Err(e) => r.fail("recurrence.favard", e.to_string()),
    }
}

fn tensor(p: &MomentProvider, n: usize) -> lorpl2::Result<Option<TensorSystem>> {
    let Some((fx, fy)) = p.univariate_factors() else {
        return Ok(None);
    };
    let sx = build_univariate(fx, n + 1)?;
    let sy = build_univariate(fy, n + 1)?;
    build_tensor(&sx, &sy, n).map(Some)
}

fn univariate_checks(
    r: &mut Recorder,
    cfg: &RunConfig,
    p: &MomentProvider,
    s: &OrthoSystem,
    d: Option<&RecurrenceData>,
) {
    let names = ["univariate.explicit_blocks", "univariate.tensor_kernels"];
    let n = cfg.levels;
    let t = match tensor(p, n) {
        Ok(Some(t)) => t,
        Ok(None) => {
            for name in names {
                r.not_applicable(name, "not a product measure");
            }
            return;
        }
        Err(e) => {
            for name in names {
                r.fail(name, e.to_string());
            }
            return;
        }
    };
    let eg = KernelEvaluator::new(s.clone(), None);
    let et = KernelEvaluator::new(t.system().clone(), None);
    let pts = random_points(cfg, p, cfg.points.max(2));
    let mut worst = 0.0f64;
    for w in pts.chunks(2).filter(|w| w.len() == 2) {
        for lvl in 0..=n {
            let a = eg.kernel(lvl, w[0].0, w[0].1, w[1].0, w[1].1);
            let b = et.kernel(lvl, w[0].0, w[0].1, w[1].0, w[1].1);
            if let (Ok(a), Ok(b)) = (a, b) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    r.at_most(names[1], worst, TENSOR_TOL, format!("levels 0..={n}"));

    let Some(d) = d else {
        r.fail(names[0], "not run: recurrence failed");
        return;
    };
    let (sx, sy) = t.factors();
    let blocks = (|| -> lorpl2::Result<f64> {
        let qs = cross_gram(s, t.system(), p, n)?;
        let aligned = align_blocks(d, &qs);
        let f1 = explicit_f1_blocks(sx, n)?;
        let f2 = explicit_f2_blocks(sy, n)?;
        let mut worst = 0.0f64;
        for (&(a, b, axis), blk) in aligned.iter() {
            let explicit = match axis {
                Axis::X => f1.block(a, b, axis),
                Axis::Y => f2.block(a, b, axis),
            };
            if let Some(e) = explicit {
                worst = worst.max(blk.max_abs_diff(e));
            }
        }
        Ok(worst)
    })();
    match blocks {
        Ok(v) => r.at_most(names[0], v, TENSOR_TOL, "aligned blocks; both axes"),
        Err(e) => r.fail(names[0], e.to_string()),
    }
}

pub fn run(cfg: &RunConfig, skip: &[String]) -> Result<Report, Failure> {
    if let Some(bad) = skip.iter().find(|s| !MODULES.contains(&s.as_str())) {
        return Err(Failure::usage(format!(
            "--skip {bad}: expected one of {}",
            MODULES.join(", ")
        )));
    }
    let mut r = Recorder {
        skip,
        report: Report::default(),
    };
    let n = cfg.levels;
    lattice_checks(&mut r, n);
    let p = cfg.provider(cfg.window_for(n))?;
    moment_checks(&mut r, &p);

    let dependents = [
        "kernels.christoffel_darboux",
        "kernels.confluent",
        "recurrence.favard",
        "recurrence.five_term",
        "recurrence.rank",
        "recurrence.symmetry",
        "univariate.explicit_blocks",
        "univariate.tensor_kernels",
    ];
    let s = match orthonormalize(&p, n) {
        Ok(s) => {
            let ratio = s.min_pivot_ratio().unwrap_or(1.0);
            r.push(
                "ortho.positive_definite",
                Status::Pass,
                Some(ratio),
                None,
                format!("smallest Cholesky pivot ratio through level {n}"),
            );
            s
        }
        Err(e) => {
            r.fail("ortho.positive_definite", e.to_string());
            r.fail("ortho.orthonormality", "not run: no orthonormal system");
            for name in dependents {
                r.fail(name, "not run: no orthonormal system");
            }
            return Ok(r.report);
        }
    };
    match s.orthonormality_defect(&p, n) {
        Ok(v) => r.at_most(
            "ortho.orthonormality",
            v,
            ORTHONORMALITY_TOL,
            format!("Gram blocks through level {n} ({} functions)", dim(n)),
        ),
        Err(e) => r.fail("ortho.orthonormality", e.to_string()),
    }

    let d = compute_recurrence(&s, &p);
    match &d {
        Ok(d) => {
            if r.enabled("recurrence") {
                recurrence_checks(&mut r, cfg, &p, &s, d);
            }
            if r.enabled("kernels") {
                kernel_checks(&mut r, cfg, &p, &s, d);
            }
        }
        Err(e) => {
            for name in &dependents[..6] {
                r.fail(name, format!("not run: {e}"));
            }
        }
    }
    if r.enabled("univariate") {
        univariate_checks(&mut r, cfg, &p, &s, d.as_ref().ok());
    }
    Ok(r.report)
}
