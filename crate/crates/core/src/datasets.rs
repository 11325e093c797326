//! Confounded synthetic datasets and single-rule test sets.
//!
//! A confounded dataset keeps only the points of a box where every
//! ground-truth rule assigns the same label, so each rule on its own explains
//! the training labels perfectly. Test sets sample the whole box and label
//! points by one rule.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::LogOddsModel;
use crate::{Error, Result};

/// Axis-aligned box `Ω = [lower, upper)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidData(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l >= u || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidData(format!(
                "box needs finite lower < upper componentwise, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Writes one uniform sample into `out`.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, l), u) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *o = l + (u - l) * rng.random::<f64>();
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.sample_into(rng, &mut x);
        x
    }

    /// Smallest box holding every row, widened by 0.5 on axes where it is flat.
    pub fn bounding(x: &[f64], dim: usize) -> Result<Self> {
        if x.is_empty() || dim == 0 {
            return Err(Error::InvalidData("no data rows".into()));
        }
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for row in x.chunks_exact(dim) {
            for (k, &v) in row.iter().enumerate() {
                lower[k] = lower[k].min(v);
                upper[k] = upper[k].max(v);
            }
        }
        for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
            if l == u {
                *l -= 0.5;
                *u += 0.5;
            }
        }
        Self::new(lower, upper)
    }
}

/// Closed-form real-valued function of the input; the label is `value > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RuleForm {
    /// `Σ coeffs[k]·x[dims[k]] + offset`
    Linear {
        dims: Vec<usize>,
        coeffs: Vec<f64>,
        offset: f64,
    },
    /// `scale·x[i]·x[j]`
    Product { dims: [usize; 2], scale: f64 },
    /// `x[i]² − x[j]²`
    DifferenceOfSquares { dims: [usize; 2] },
    /// `x[i]² + x[j]² − radius_sq`
    Circle { dims: [usize; 2], radius_sq: f64 },
    /// `x[i] − x[j]³ / divisor`
    Cubic { dims: [usize; 2], divisor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRule {
    pub name: String,
    #[serde(flatten)]
    pub form: RuleForm,
}

impl GroundTruthRule {
    pub fn new(name: impl Into<String>, form: RuleForm) -> Self {
        Self {
            name: name.into(),
            form,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.form {
            RuleForm::Linear {
                dims,
                coeffs,
                offset,
            } => dims.iter().zip(coeffs).map(|(&d, c)| c * x[d]).sum::<f64>() + offset,
            RuleForm::Product { dims: [i, j], scale } => scale * x[*i] * x[*j],
            RuleForm::DifferenceOfSquares { dims: [i, j] } => x[*i] * x[*i] - x[*j] * x[*j],
            RuleForm::Circle {
                dims: [i, j],
                radius_sq,
            } => x[*i] * x[*i] + x[*j] * x[*j] - radius_sq,
            RuleForm::Cubic { dims: [i, j], divisor } => x[*i] - x[*j].powi(3) / divisor,
        }
    }

    pub fn label(&self, x: &[f64]) -> u8 {
        u8::from(self.value(x) > 0.0)
    }

    /// Analytic gradient of [`value`](Self::value), with the length of `x`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match &self.form {
            RuleForm::Linear { dims, coeffs, .. } => {
                for (&d, c) in dims.iter().zip(coeffs) {
                    g[d] += c;
                }
            }
            RuleForm::Product { dims: [i, j], scale } => {
                g[*i] += scale * x[*j];
                g[*j] += scale * x[*i];
            }
            RuleForm::DifferenceOfSquares { dims: [i, j] } => {
                g[*i] += 2.0 * x[*i];
                g[*j] -= 2.0 * x[*j];
            }
            RuleForm::Circle { dims: [i, j], .. } => {
                g[*i] += 2.0 * x[*i];
                g[*j] += 2.0 * x[*j];
            }
            RuleForm::Cubic { dims: [i, j], divisor } => {
                g[*i] += 1.0;
                g[*j] -= 3.0 * x[*j] * x[*j] / divisor;
            }
        }
        g
    }

    /// Input dimensions the rule reads.
    pub fn arity_dims(&self) -> Vec<usize> {
        match &self.form {
            RuleForm::Linear { dims, .. } => dims.clone(),
            RuleForm::Product { dims, .. }
            | RuleForm::DifferenceOfSquares { dims }
            | RuleForm::Circle { dims, .. }
            | RuleForm::Cubic { dims, .. } => dims.to_vec(),
        }
    }

    fn max_dim(&self) -> usize {
        self.arity_dims().into_iter().max().unwrap_or(0)
    }
}

impl LogOddsModel for GroundTruthRule {
    fn input_dim(&self) -> usize {
        self.max_dim() + 1
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.value(x)
    }

    fn logit_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient(x)
    }
}

/// A named set of ground-truth rules over a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub name: String,
    pub rules: Vec<GroundTruthRule>,
    pub domain: DomainBox,
}

fn linear(name: &str, dims: &[usize], coeffs: &[f64]) -> GroundTruthRule {
    GroundTruthRule::new(
        name,
        RuleForm::Linear {
            dims: dims.to_vec(),
            coeffs: coeffs.to_vec(),
            offset: 0.0,
        },
    )
}

/// The three 2D rule pairs over `[-10, 10]²`:
/// `{x, y}`, `{½x + (√3/2)y, −(√3/2)x + ½y}` and `{2xy, x² − y²}`.
pub fn builtin_2d_cases() -> [Case; 3] {
    let domain = DomainBox::cube(2, -10.0, 10.0).expect("static box");
    let h = 3f64.sqrt() / 2.0;
    [
        Case {
            name: "case1".into(),
            rules: vec![linear("x", &[0], &[1.0]), linear("y", &[1], &[1.0])],
            domain: domain.clone(),
        },
        Case {
            name: "case2".into(),
            rules: vec![
                linear("x/2+sqrt3*y/2", &[0, 1], &[0.5, h]),
                linear("-sqrt3*x/2+y/2", &[0, 1], &[-h, 0.5]),
            ],
            domain: domain.clone(),
        },
        Case {
            name: "case3".into(),
            rules: vec![
                GroundTruthRule::new(
                    "2xy",
                    RuleForm::Product {
                        dims: [0, 1],
                        scale: 2.0,
                    },
                ),
                GroundTruthRule::new("x^2-y^2", RuleForm::DifferenceOfSquares { dims: [0, 1] }),
            ],
            domain,
        },
    ]
}

/// Four rules on the disjoint axis pairs (0,1), (2,3), (4,5), (6,7) of
/// `[-20, 20]⁸`: a line, a product, a circle of radius √200 and a cubic.
pub fn builtin_8d_case() -> Case {
    Case {
        name: "toy8d".into(),
        rules: vec![
            linear("x0+x1", &[0, 1], &[1.0, 1.0]),
            GroundTruthRule::new(
                "x2*x3",
                RuleForm::Product {
                    dims: [2, 3],
                    scale: 1.0,
                },
            ),
            GroundTruthRule::new(
                "x4^2+x5^2-200",
                RuleForm::Circle {
                    dims: [4, 5],
                    radius_sq: 200.0,
                },
            ),
            GroundTruthRule::new(
                "x6-x7^3/100",
                RuleForm::Cubic {
                    dims: [6, 7],
                    divisor: 100.0,
                },
            ),
        ],
        domain: DomainBox::cube(8, -20.0, 20.0).expect("static box"),
    }
}

/// Where a dataset came from; written next to dataset CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub rules: Vec<GroundTruthRule>,
    pub domain: DomainBox,
    /// Uniform draws consumed by rejection sampling.
    pub drawn: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<u8>,
    dim: usize,
    domain: DomainBox,
    provenance: Provenance,
}

/// Draws after which a low acceptance rate is treated as a degenerate rule set.
pub const ACCEPTANCE_PROBE_DRAWS: u64 = 1_000_000;
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-4;

/// Classifies a point against every rule: `Some(label)` iff all rule values
/// are nonzero and share one sign.
pub fn agreed_label(rules: &[GroundTruthRule], x: &[f64]) -> Option<u8> {
    let mut sign = None;
    for r in rules {
        let v = r.value(x);
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
            0
        } else {
            return None;
        };
        match sign {
            None => sign = Some(s),
            Some(prev) if prev != s => return None,
            _ => {}
        }
    }
    sign
}

fn check_rules_fit(rules: &[GroundTruthRule], domain: &DomainBox) -> Result<()> {
    if let Some(r) = rules.iter().find(|r| r.max_dim() >= domain.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "rule {:?} reads dimensions {:?} outside a {}-dimensional domain",
            r.name,
            r.arity_dims(),
            domain.dim()
        )));
    }
    Ok(())
}

/// Rejection-samples `n` uniform points of `domain` on which all rules agree.
pub fn gen_confounded(
    rules: &[GroundTruthRule],
    domain: &DomainBox,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if rules.len() < 2 {
        return Err(Error::InvalidConfig(
            "confounded generation needs at least two rules".into(),
        ));
    }
    check_rules_fit(rules, domain)?;
    let dim = domain.dim();
    let mut rng = crate::rng::rng(seed);
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    let mut point = vec![0.0; dim];
    let mut drawn: u64 = 0;
    while y.len() < n {
        domain.sample_into(&mut rng, &mut point);
        drawn += 1;
        if let Some(label) = agreed_label(rules, &point) {
            x.extend_from_slice(&point);
            y.push(label);
        }
        if drawn == ACCEPTANCE_PROBE_DRAWS
            && (y.len() as f64) < MIN_ACCEPTANCE_RATE * drawn as f64
        {
            return Err(Error::DegenerateRules {
                kept: y.len(),
                drawn: drawn as usize,
            });
        }
    }
    Ok(Dataset {
        x,
        y,
        dim,
        domain: domain.clone(),
        provenance: Provenance {
            generator: "confounded".into(),
            seed: Some(seed),
            n,
            rules: rules.to_vec(),
            domain: domain.clone(),
            drawn: Some(drawn),
        },
    })
}

/// `n` uniform samples of the whole domain labelled by one rule.
pub fn gen_rule_testset(
    rule: &GroundTruthRule,
    domain: &DomainBox,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    check_rules_fit(std::slice::from_ref(rule), domain)?;
    let dim = domain.dim();
    let mut rng = crate::rng::rng(seed);
    let mut x = vec![0.0; n * dim];
    let y = x
        .chunks_exact_mut(dim)
        .map(|row| {
            domain.sample_into(&mut rng, row);
            rule.label(row)
        })
        .collect();
    Ok(Dataset {
        x,
        y,
        dim,
        domain: domain.clone(),
        provenance: Provenance {
            generator: "rule_testset".into(),
            seed: Some(seed),
            n,
            rules: vec![rule.clone()],
            domain: domain.clone(),
            drawn: Some(n as u64),
        },
    })
}

impl Dataset {
    /// Checks labels are binary and every row lies inside `domain`.
    pub fn new(x: Vec<f64>, y: Vec<u8>, domain: DomainBox, provenance: Provenance) -> Result<Self> {
        let dim = domain.dim();
        if x.len() != y.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} rows of dimension {dim}",
                x.len(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!("row {i}: label {} is not 0/1", y[i])));
        }
        if let Some(i) = x.chunks_exact(dim).position(|row| !domain.contains(row)) {
            return Err(Error::InvalidData(format!("row {i} lies outside the domain")));
        }
        Ok(Self {
            x,
            y,
            dim,
            domain,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `N × D` inputs.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.x.chunks_exact(self.dim)
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn positive_fraction(&self) -> f64 {
        self.y.iter().filter(|&&v| v == 1).count() as f64 / self.len() as f64
    }

    pub fn has_both_labels(&self) -> bool {
        self.y.contains(&0) && self.y.contains(&1)
    }

    /// Replaces the domain, re-checking containment.
    pub fn with_domain(self, domain: DomainBox) -> Result<Self> {
        Self::new(self.x, self.y, domain, self.provenance)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Writes `x0,…,x{D−1},y` rows; floats use the shortest representation
    /// that parses back to the same bits.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.len() * (self.dim + 1) * 20);
        let header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",y\n");
        for (row, label) in self.rows().zip(&self.y) {
            for v in row {
                out.push_str(&format!("{v:?},"));
            }
            out.push_str(&format!("{label}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`save_csv`](Self::save_csv) or produced
    /// externally. The domain is the data's bounding box unless a sidecar
    /// provenance file (see [`sidecar_path`]) supplies one.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let csv_err = |line: u64, message: String| Error::Csv {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(1, e.to_string()))?;
        let headers = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
        let cols = headers.len();
        if cols == 0 || (cols == 1 && headers[0].is_empty()) {
            return Err(csv_err(1, "no data rows".into()));
        }
        let dim = cols - 1;
        let expected: Vec<String> = (0..dim)
            .map(|k| format!("x{k}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        if dim == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(csv_err(
                1,
                format!("expected header {:?}, found {:?}", expected.join(","), headers),
            ));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                csv_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != cols {
                return Err(csv_err(
                    line,
                    format!("expected {cols} fields, found {}", record.len()),
                ));
            }
            for field in record.iter().take(dim) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| csv_err(line, format!("malformed number {field:?}")))?;
                if !v.is_finite() {
                    return Err(csv_err(line, format!("non-finite value {field:?}")));
                }
                x.push(v);
            }
            let label = &record[dim];
            match label {
                "0" => y.push(0),
                "1" => y.push(1),
                other => return Err(csv_err(line, format!("label {other:?} is not 0 or 1"))),
            }
        }
        if y.is_empty() {
            return Err(csv_err(1, "no data rows".into()));
        }
        let sidecar = sidecar_path(path);
        let provenance = if sidecar.exists() {
            let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            serde_json::from_str::<Provenance>(&text)?
        } else {
            Provenance {
                generator: format!("csv:{}", path.display()),
                seed: None,
                n: y.len(),
                rules: Vec::new(),
                domain: DomainBox::bounding(&x, dim)?,
                drawn: None,
            }
        };
        if provenance.domain.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{} declares a {}-dimensional domain for {dim}-dimensional rows",
                sidecar.display(),
                provenance.domain.dim()
            )));
        }
        let domain = provenance.domain.clone();
        Self::new(x, y, domain, provenance)
    }

    pub fn save_provenance(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.provenance)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(i: usize) -> Case {
        builtin_2d_cases()[i].clone()
    }

    #[test]
    fn case1_sign_agreement() {
        let c = case(0);
        assert_eq!(agreed_label(&c.rules, &[3.0, 4.0]), Some(1));
        assert_eq!(agreed_label(&c.rules, &[3.0, -4.0]), None);
        assert_eq!(agreed_label(&c.rules, &[0.0, -4.0]), None);
    }

    #[test]
    fn case3_forced_arithmetic() {
        let c = case(2);
        assert_eq!(c.rules[0].value(&[1.0, -2.0]), -4.0);
        assert_eq!(c.rules[1].value(&[1.0, -2.0]), -3.0);
        assert_eq!(agreed_label(&c.rules, &[1.0, -2.0]), Some(0));
        assert_eq!(agreed_label(&c.rules, &[1.0, 2.0]), None);
    }

    #[test]
    fn case2_rules_and_gradients() {
        let c = case(1);
        let h = 3f64.sqrt() / 2.0;
        assert_eq!(c.rules[0].value(&[1.0, 0.0]), 0.5);
        assert_eq!(c.rules[1].value(&[1.0, 0.0]), -h);
        let (g0, g1) = (c.rules[0].gradient(&[0.0, 0.0]), c.rules[1].gradient(&[0.0, 0.0]));
        assert!((g0[0] * g1[0] + g0[1] * g1[1]).abs() < 1e-15);
    }

    #[test]
    fn case3_gradients_orthogonal_everywhere() {
        let c = case(2);
        for &(x, y) in &[(1.0, 2.0), (-3.5, 0.25), (7.0, -7.0)] {
            let p = [x, y];
            let (a, b) = (c.rules[0].gradient(&p), c.rules[1].gradient(&p));
            assert_eq!(a, vec![2.0 * y, 2.0 * x]);
            assert_eq!(b, vec![2.0 * x, -2.0 * y]);
            assert_eq!(a[0] * b[0] + a[1] * b[1], 0.0);
        }
    }

    #[test]
    fn toy8d_rule_values() {
        let c = builtin_8d_case();
        let mut x = [0.0; 8];
        x[0] = 5.0;
        x[1] = -2.0;
        assert_eq!(c.rules[0].value(&x), 3.0);
        assert_eq!(c.rules[0].label(&x), 1);
        assert_eq!(c.rules[2].value(&x), -200.0);
        assert_eq!(c.rules[2].label(&x), 0);
        for (k, r) in c.rules.iter().enumerate() {
            assert_eq!(r.arity_dims(), vec![2 * k, 2 * k + 1]);
        }
    }

    #[test]
    fn rule_gradients_match_finite_differences() {
        let mut rules = builtin_8d_case().rules;
        rules.extend(case(2).rules);
        let x = [1.3, -0.7, 2.2, 3.1, -4.0, 0.5, 1.0, 2.5];
        for r in &rules {
            let fd = crate::autodiff::central_differences(|p| r.value(p), &x, 1e-5);
            assert!(crate::autodiff::max_relative_error(&r.gradient(&x), &fd) < 1e-6);
        }
    }

    #[test]
    fn confounded_points_agree_and_stay_inside() {
        for c in builtin_2d_cases().iter().chain([&builtin_8d_case()]) {
            let d = gen_confounded(&c.rules, &c.domain, 500, 3).unwrap();
            assert_eq!(d.len(), 500);
            for (row, &label) in d.rows().zip(d.y()) {
                assert!(c.domain.contains(row));
                for r in &c.rules {
                    assert_eq!(r.label(row), label);
                    assert_ne!(r.value(row), 0.0);
                }
            }
        }
    }

    #[test]
    fn degenerate_rules_rejected() {
        let domain = DomainBox::cube(1, -1.0, 1.0).unwrap();
        let rules = vec![linear("x", &[0], &[1.0]), linear("-x", &[0], &[-1.0])];
        assert!(matches!(
            gen_confounded(&rules, &domain, 10, 0),
            Err(Error::DegenerateRules { kept: 0, .. })
        ));
        assert!(gen_confounded(&rules[..1], &domain, 10, 0).is_err());
    }

    #[test]
    fn testset_labels_and_determinism() {
        let domain = DomainBox::cube(2, -10.0, 10.0).unwrap();
        let rule = linear("x", &[0], &[1.0]);
        assert_eq!(rule.label(&[-1.0, 9.0]), 0);
        let a = gen_rule_testset(&rule, &domain, 100, 4).unwrap();
        assert_eq!(a, gen_rule_testset(&rule, &domain, 100, 4).unwrap());
        for (row, &l) in a.rows().zip(a.y()) {
            assert_eq!(l, u8::from(row[0] > 0.0));
        }
    }

    #[test]
    fn domain_validation() {
        assert!(DomainBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(DomainBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(DomainBox::new(vec![], vec![]).is_err());
        let b = DomainBox::bounding(&[1.0, 2.0, 1.0, 5.0], 2).unwrap();
        assert_eq!(b.lower(), &[0.5, 2.0]);
        assert_eq!(b.upper(), &[1.5, 5.0]);
    }
}
