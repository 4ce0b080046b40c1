//! Moment data `mu_{i,j} = L(x^i y^j)` for measures off the coordinate axes.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dd::Dd;
use crate::error::{Error, Result};

pub const TABLE_FORMAT: &str = "lorpl2-moments-v1";

/// Significant digits written to moment tables; enough to carry the
/// double-double values the construction works with.
pub const TABLE_DIGITS: usize = 30;

/// One-dimensional weights on an interval `[a, b]` with `0 < a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Lebesgue,
    /// `1 / sqrt((b-x)(x-a))`
    W1,
    /// `1 / sqrt(x)`
    W2,
    /// `[(b-x)(x-a)]^(mu-1/2) / ((sqrt b - sqrt a) x^mu)`, `mu > -1/2`
    W3 { mu: f64 },
    /// `x (1 + sqrt(ab)/x)^2 / sqrt((b-x)(x-a))`
    W4,
    /// `1 / ((x + sqrt(ab)) sqrt((b-x)(x-a)))`
    W5,
    /// log-normal type density `(1 + 1/t) exp(-(ln t / 2 kappa)^2) / (2 kappa sqrt(pi))`,
    /// restricted to the interval
    W6 { kappa: f64 },
}

impl Weight {
    pub fn name(self) -> &'static str {
        match self {
            Weight::Lebesgue => "lebesgue",
            Weight::W1 => "w1",
            Weight::W2 => "w2",
            Weight::W3 { .. } => "w3",
            Weight::W4 => "w4",
            Weight::W5 => "w5",
            Weight::W6 { .. } => "w6",
        }
    }

    /// Weights with an inverse square root at both endpoints, integrated
    /// in the angle variable `x = mid + half sin(theta)`.
    fn endpoint_singular(self) -> bool {
        matches!(self, Weight::W1 | Weight::W3 { .. } | Weight::W4 | Weight::W5)
    }

    fn validate(self, a: f64, b: f64) -> Result<()> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "interval [{a}, {b}] must satisfy 0 < a < b < inf"
            )));
        }
        match self {
            Weight::W3 { mu } if !(mu > -0.5) => Err(Error::InvalidInput(format!(
                "w3 needs mu > -1/2, got {mu}"
            ))),
            Weight::W6 { kappa } if !(kappa > 0.0) => Err(Error::InvalidInput(format!(
                "w6 needs kappa > 0, got {kappa}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraturePolicy {
    pub start_nodes: usize,
    pub max_nodes: usize,
    pub rel_tol: f64,
}

impl Default for QuadraturePolicy {
    fn default() -> Self {
        QuadraturePolicy {
            start_nodes: 32,
            max_nodes: 4096,
            rel_tol: 1e-12,
        }
    }
}

const PANEL_ORDER: usize = 16;

/// A positive discrete measure on the line: nodes and weights in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Composite Gauss–Legendre rule with `total` nodes for `weight` on `[a, b]`.
    pub fn for_weight(weight: Weight, a: f64, b: f64, total: usize) -> QuadratureRule {
        let panels = (total / PANEL_ORDER).max(1);
        let base = GaussLegendre::new(PANEL_ORDER.try_into().expect("nonzero order"));
        let (lo, hi) = if weight.endpoint_singular() {
            (-FRAC_PI_2, FRAC_PI_2)
        } else {
            (a, b)
        };
        let width = (hi - lo) / panels as f64;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let sab = (a * b).sqrt();
        let mut nodes = Vec::with_capacity(panels * PANEL_ORDER);
        let mut weights = Vec::with_capacity(panels * PANEL_ORDER);
        for p in 0..panels {
            let p_lo = lo + width * p as f64;
            for (xi, w) in base.iter() {
                let u = p_lo + 0.5 * width * (xi + 1.0);
                let du = 0.5 * width * w;
                let (x, wt) = if weight.endpoint_singular() {
                    let x = mid + half * u.sin();
                    let c = half * u.cos();
                    // dx / sqrt((b-x)(x-a)) = dtheta
                    let factor = match weight {
                        Weight::W1 => 1.0,
                        Weight::W3 { mu } => {
                            c.powf(2.0 * mu) / ((b.sqrt() - a.sqrt()) * x.powf(mu))
                        }
                        Weight::W4 => x * (1.0 + sab / x).powi(2),
                        Weight::W5 => 1.0 / (x + sab),
                        _ => unreachable!(),
                    };
                    (x, du * factor)
                } else {
                    let x = u;
                    let factor = match weight {
                        Weight::Lebesgue => 1.0,
                        Weight::W2 => 1.0 / x.sqrt(),
                        Weight::W6 { kappa } => {
                            let z = x.ln() / (2.0 * kappa);
                            (1.0 + 1.0 / x) * (-z * z).exp()
                                / (2.0 * kappa * std::f64::consts::PI.sqrt())
                        }
                        _ => unreachable!(),
                    };
                    (x, du * factor)
                };
                nodes.push(x);
                weights.push(wt);
            }
        }
        QuadratureRule { nodes, weights }
    }

    pub fn moment(&self, k: i64) -> Dd {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| Dd::from_f64(x).powi(k as i32) * w)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Moments `m_k`, `kmin <= k <= kmax`, of a one-dimensional measure.
#[derive(Clone, Debug, PartialEq)]
pub struct UnivariateMoments {
    pub kmin: i64,
    pub values: Vec<Dd>,
}

impl UnivariateMoments {
    pub fn kmax(&self) -> i64 {
        self.kmin + self.values.len() as i64 - 1
    }

    pub fn get(&self, k: i64) -> Option<Dd> {
        if k < self.kmin {
            return None;
        }
        self.values.get((k - self.kmin) as usize).copied()
    }

    pub fn from_rule(rule: &QuadratureRule, kmin: i64, kmax: i64) -> Self {
        UnivariateMoments {
            kmin,
            values: (kmin..=kmax).map(|k| rule.moment(k)).collect(),
        }
    }
}

/// Smallest composite rule (by doubling) whose moments over `kmin..=kmax`
/// agree with the previous rule to `policy.rel_tol`. All moments come from
/// the same final rule, so they are exact moments of one positive measure.
pub fn converged_rule(
    weight: Weight,
    a: f64,
    b: f64,
    kmin: i64,
    kmax: i64,
    policy: &QuadraturePolicy,
) -> Result<(QuadratureRule, f64)> {
    weight.validate(a, b)?;
    let mut total = policy.start_nodes.max(PANEL_ORDER);
    let mut rule = QuadratureRule::for_weight(weight, a, b, total);
    let mut prev = UnivariateMoments::from_rule(&rule, kmin, kmax);
    let mut achieved = f64::INFINITY;
    while total < policy.max_nodes {
        total *= 2;
        let next_rule = QuadratureRule::for_weight(weight, a, b, total);
        let next = UnivariateMoments::from_rule(&next_rule, kmin, kmax);
        achieved = prev
            .values
            .iter()
            .zip(&next.values)
            .map(|(&p, &q)| ((q - p) / q).abs().to_f64())
            .fold(0.0, f64::max);
        rule = next_rule;
        prev = next;
        if achieved <= policy.rel_tol {
            return Ok((rule, achieved));
        }
    }
    Err(Error::QuadratureNonConvergence {
        achieved,
        tolerance: policy.rel_tol,
    })
}

pub fn univariate_moments(
    weight: Weight,
    a: f64,
    b: f64,
    kmin: i64,
    kmax: i64,
    policy: &QuadraturePolicy,
) -> Result<UnivariateMoments> {
    let (rule, _) = converged_rule(weight, a, b, kmin, kmax, policy)?;
    Ok(UnivariateMoments::from_rule(&rule, kmin, kmax))
}

/// Closed-form moments, available for the Lebesgue and `1/sqrt(x)` weights.
pub fn analytic_univariate_moments(
    weight: Weight,
    a: f64,
    b: f64,
    kmin: i64,
    kmax: i64,
) -> Result<UnivariateMoments> {
    weight.validate(a, b)?;
    let (da, db) = (Dd::from_f64(a), Dd::from_f64(b));
    let values = match weight {
        Weight::Lebesgue => (kmin..=kmax)
            .map(|k| {
                if k == -1 {
                    (db / da).ln()
                } else {
                    let e = (k + 1) as i32;
                    (db.powi(e) - da.powi(e)) / Dd::from(k + 1)
                }
            })
            .collect(),
        Weight::W2 => {
            let (sa, sb) = (da.sqrt(), db.sqrt());
            (kmin..=kmax)
                .map(|k| {
                    // integral of x^(k - 1/2) is x^(k + 1/2) / (k + 1/2)
                    let e = k as i32;
                    (db.powi(e) * sb - da.powi(e) * sa) / (Dd::from(2 * k + 1) * 0.5)
                })
                .collect()
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "no closed-form moments for weight {}",
                other.name()
            )))
        }
    };
    Ok(UnivariateMoments { kmin, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("atomic measure needs atoms".into()));
        }
        for (k, &(x, y, w)) in atoms.iter().enumerate() {
            if !(x.is_finite() && y.is_finite() && w.is_finite()) {
                return Err(Error::InvalidInput(format!("atom {k} is not finite")));
            }
            if x == 0.0 || y == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "atom {k} at ({x}, {y}) lies on an axis"
                )));
            }
            if !(w > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "atom {k} has non-positive weight {w}"
                )));
            }
        }
        for a in 0..atoms.len() {
            for b in a + 1..atoms.len() {
                if atoms[a].0 == atoms[b].0 && atoms[a].1 == atoms[b].1 {
                    return Err(Error::InvalidInput(format!("atoms {a} and {b} coincide")));
                }
            }
        }
        Ok(AtomicMeasure { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64, f64)] {
        &self.atoms
    }

    pub fn moment(&self, i: i64, j: i64) -> Dd {
        self.atoms
            .iter()
            .map(|&(x, y, w)| {
                Dd::from_f64(x).powi(i as i32) * Dd::from_f64(y).powi(j as i32) * w
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Analytic,
    ProductWeight,
    Atomic,
    Table,
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Product {
        x: UnivariateMoments,
        y: UnivariateMoments,
    },
    Atomic(AtomicMeasure),
    Table(BTreeMap<(i64, i64), Dd>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentProvider {
    kind: ProviderKind,
    window: i64,
    source: Source,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    window: i64,
    entries: Vec<TableEntry>,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    i: i64,
    j: i64,
    value: String,
}

impl MomentProvider {
    /// Product of closed-form one-dimensional moments (Lebesgue or `1/sqrt(x)`).
    pub fn analytic_product(
        wx: Weight,
        (a, b): (f64, f64),
        wy: Weight,
        (c, d): (f64, f64),
        window: i64,
    ) -> Result<Self> {
        check_window(window)?;
        Ok(MomentProvider {
            kind: ProviderKind::Analytic,
            window,
            source: Source::Product {
                x: analytic_univariate_moments(wx, a, b, -window, window)?,
                y: analytic_univariate_moments(wy, c, d, -window, window)?,
            },
        })
    }

    pub fn lebesgue(rect: [f64; 4], window: i64) -> Result<Self> {
        MomentProvider::analytic_product(
            Weight::Lebesgue,
            (rect[0], rect[1]),
            Weight::Lebesgue,
            (rect[2], rect[3]),
            window,
        )
    }

    /// Product measure with one-dimensional moments from quadrature.
    pub fn product_weight(
        wx: Weight,
        (a, b): (f64, f64),
        wy: Weight,
        (c, d): (f64, f64),
        window: i64,
        policy: &QuadraturePolicy,
    ) -> Result<Self> {
        check_window(window)?;
        Ok(MomentProvider {
            kind: ProviderKind::ProductWeight,
            window,
            source: Source::Product {
                x: univariate_moments(wx, a, b, -window, window, policy)?,
                y: univariate_moments(wy, c, d, -window, window, policy)?,
            },
        })
    }

    /// Product of two given one-dimensional moment sequences.
    pub fn from_univariate(x: UnivariateMoments, y: UnivariateMoments) -> Result<Self> {
        let window = [-x.kmin, x.kmax(), -y.kmin, y.kmax()]
            .into_iter()
            .min()
            .unwrap_or(0);
        check_window(window)?;
        Ok(MomentProvider {
            kind: ProviderKind::ProductWeight,
            window,
            source: Source::Product { x, y },
        })
    }

    /// Atomic measures have every moment; `window` only bounds queries.
    pub fn atomic(measure: AtomicMeasure, window: i64) -> Result<Self> {
        check_window(window)?;
        Ok(MomentProvider {
            kind: ProviderKind::Atomic,
            window,
            source: Source::Atomic(measure),
        })
    }

    /// Table provider; every `(i, j)` with `|i|, |j| <= window` must be present.
    pub fn from_table(window: i64, entries: BTreeMap<(i64, i64), Dd>) -> Result<Self> {
        check_window(window)?;
        for i in -window..=window {
            for j in -window..=window {
                if !entries.contains_key(&(i, j)) {
                    return Err(Error::MissingEntry { i, j });
                }
            }
        }
        if let Some(&(i, j)) = entries.keys().find(|(i, j)| i.abs() > window || j.abs() > window)
        {
            return Err(Error::TableFormat(format!(
                "entry ({i},{j}) lies outside the declared window {window}"
            )));
        }
        Ok(MomentProvider {
            kind: ProviderKind::Table,
            window,
            source: Source::Table(entries),
        })
    }

    pub fn kind(&self) -> ProviderKind {
        self.kind
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    pub fn atomic_measure(&self) -> Option<&AtomicMeasure> {
        match &self.source {
            Source::Atomic(m) => Some(m),
            _ => None,
        }
    }

    /// The one-dimensional factors of a product provider.
    pub fn univariate_factors(&self) -> Option<(&UnivariateMoments, &UnivariateMoments)> {
        match &self.source {
            Source::Product { x, y } => Some((x, y)),
            _ => None,
        }
    }

    pub fn moment(&self, i: i64, j: i64) -> Result<Dd> {
        if i.abs() > self.window || j.abs() > self.window {
            return Err(Error::WindowExceeded {
                i,
                j,
                window: self.window,
            });
        }
        match &self.source {
            Source::Product { x, y } => {
                let mx = x.get(i).ok_or(Error::WindowExceeded { i, j, window: self.window })?;
                let my = y.get(j).ok_or(Error::WindowExceeded { i, j, window: self.window })?;
                Ok(mx * my)
            }
            Source::Atomic(m) => Ok(m.moment(i, j)),
            Source::Table(t) => t.get(&(i, j)).copied().ok_or(Error::MissingEntry { i, j }),
        }
    }

    pub fn moment_f64(&self, i: i64, j: i64) -> Result<f64> {
        self.moment(i, j).map(Dd::to_f64)
    }

    /// All moments on `|i|, |j| <= window` as a table provider.
    pub fn to_table(&self, window: i64) -> Result<MomentProvider> {
        let mut entries = BTreeMap::new();
        for i in -window..=window {
            for j in -window..=window {
                entries.insert((i, j), self.moment(i, j)?);
            }
        }
        MomentProvider::from_table(window, entries)
    }

    pub fn to_table_json(&self, window: i64) -> Result<String> {
        let mut entries = Vec::new();
        for i in -window..=window {
            for j in -window..=window {
                entries.push(TableEntry {
                    i,
                    j,
                    value: self.moment(i, j)?.to_decimal(TABLE_DIGITS),
                });
            }
        }
        let file = TableFile {
            format: TABLE_FORMAT.to_string(),
            window,
            entries,
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_table_json(text: &str) -> Result<MomentProvider> {
        let file: TableFile = serde_json::from_str(text)?;
        if file.format != TABLE_FORMAT {
            return Err(Error::TableFormat(format!(
                "unknown format {:?}, expected {TABLE_FORMAT:?}",
                file.format
            )));
        }
        let mut entries = BTreeMap::new();
        for e in file.entries {
            let v = Dd::parse_decimal(&e.value).ok_or_else(|| {
                Error::TableFormat(format!("entry ({},{}) has value {:?}", e.i, e.j, e.value))
            })?;
            if entries.insert((e.i, e.j), v).is_some() {
                return Err(Error::TableFormat(format!(
                    "duplicate entry ({},{})",
                    e.i, e.j
                )));
            }
        }
        MomentProvider::from_table(file.window, entries)
    }

    pub fn save_table(&self, path: impl AsRef<Path>, window: i64) -> Result<()> {
        std::fs::write(path, self.to_table_json(window)?)?;
        Ok(())
    }

    pub fn load_table(path: impl AsRef<Path>) -> Result<MomentProvider> {
        MomentProvider::from_table_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the decimal moment values on `|i|, |j| <= window`.
    pub fn fingerprint(&self, window: i64) -> Result<String> {
        let mut h = Sha256::new();
        for i in -window..=window {
            for j in -window..=window {
                h.update(format!("{i},{j},{};", self.moment(i, j)?.to_decimal(TABLE_DIGITS)));
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn check_window(window: i64) -> Result<()> {
    if window < 0 {
        return Err(Error::InvalidInput(format!(
            "window must be nonnegative, got {window}"
        )));
    }
    Ok(())
}
