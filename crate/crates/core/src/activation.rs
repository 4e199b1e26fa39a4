//! Activation functions `f_i(y, w, z)`, their `(a, b, c, d)` decomposition
//! and the Lipschitz / self-feedback / contraction constants.
//!
//! Cells are indexed `2y + w`, i.e. in the order `(0,0), (0,1), (1,0), (1,1)`.
//! All curves are functions of a real `z ≥ 0`; the feasible range of unit `i`
//! is `[0, degree(i)]`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::graph::InterferenceGraph;

/// Activation values must lie in `[RANGE_MARGIN, 1 - RANGE_MARGIN]`.
pub const RANGE_MARGIN: f64 = 1e-9;

/// `smoothness_ok` requires `L2_n · D_n² ≤ SMOOTHNESS_LIMIT`.
pub const SMOOTHNESS_LIMIT: f64 = 1.0;

#[inline]
pub fn cell(y: u8, w: u8) -> usize {
    debug_assert!(y <= 1 && w <= 1);
    ((y << 1) | w) as usize
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sigmoid_d1(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

#[inline]
fn sigmoid_d2(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s) * (1.0 - 2.0 * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Affine,
    Logistic,
    Tabulated,
}

/// The four curves of one unit.
#[derive(Clone, Debug, PartialEq)]
pub enum Curves {
    /// `f(y,w,z) = base[c] + slope[c]·z`
    Affine { base: [f64; 4], slope: [f64; 4] },
    /// `f(y,w,z) = sigmoid(intercept[c] + slope[c]·z/scale)`
    Logistic {
        intercept: [f64; 4],
        slope: [f64; 4],
        scale: f64,
    },
    /// Values on the integer grid `0, 1, ..`, linearly interpolated and held
    /// constant beyond the last knot.
    Tabulated { table: [Vec<f64>; 4] },
}

impl Curves {
    pub fn family(&self) -> Family {
        match self {
            Curves::Affine { .. } => Family::Affine,
            Curves::Logistic { .. } => Family::Logistic,
            Curves::Tabulated { .. } => Family::Tabulated,
        }
    }

    pub fn value(&self, c: usize, z: f64) -> f64 {
        match self {
            Curves::Affine { base, slope } => base[c] + slope[c] * z,
            Curves::Logistic {
                intercept,
                slope,
                scale,
            } => sigmoid(intercept[c] + slope[c] * z / scale),
            Curves::Tabulated { table } => interpolate(&table[c], z),
        }
    }

    pub fn deriv(&self, c: usize, z: f64) -> f64 {
        match self {
            Curves::Affine { slope, .. } => slope[c],
            Curves::Logistic {
                intercept,
                slope,
                scale,
            } => {
                let k = slope[c] / scale;
                sigmoid_d1(intercept[c] + k * z) * k
            }
            Curves::Tabulated { table } => {
                let t = &table[c];
                let last = (t.len() - 1) as f64;
                if z - 1.0 < 0.0 {
                    interpolate(t, z + 1.0) - interpolate(t, z)
                } else if z + 1.0 > last {
                    interpolate(t, z) - interpolate(t, z - 1.0)
                } else {
                    (interpolate(t, z + 1.0) - interpolate(t, z - 1.0)) / 2.0
                }
            }
        }
    }

    pub fn second_deriv(&self, c: usize, z: f64) -> f64 {
        match self {
            Curves::Logistic {
                intercept,
                slope,
                scale,
            } => {
                let k = slope[c] / scale;
                sigmoid_d2(intercept[c] + k * z) * k * k
            }
            _ => 0.0,
        }
    }

    /// `sup |∂f/∂z|` over all cells and `z ∈ [0, zmax]`.
    fn lipschitz(&self, zmax: f64) -> f64 {
        (0..4)
            .map(|c| match self {
                Curves::Affine { slope, .. } => slope[c].abs(),
                Curves::Logistic {
                    intercept,
                    slope,
                    scale,
                } => {
                    let k = slope[c] / scale;
                    let (x0, x1) = (intercept[c], intercept[c] + k * zmax);
                    let nearest = 0.0f64.clamp(x0.min(x1), x0.max(x1));
                    sigmoid_d1(nearest) * k.abs()
                }
                Curves::Tabulated { table } => {
                    let t = &table[c];
                    let top = (zmax.floor() as usize).min(t.len() - 1);
                    t[..=top].windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
                }
            })
            .fold(0.0, f64::max)
    }

    /// `sup |∂²f/∂z²|` over all cells and `z ∈ [0, zmax]`.
    fn second_bound(&self, zmax: f64) -> f64 {
        let Curves::Logistic {
            intercept,
            slope,
            scale,
        } = self
        else {
            return 0.0;
        };
        let peak = (2.0 + 3f64.sqrt()).ln();
        (0..4)
            .map(|c| {
                let k = slope[c] / scale;
                let (x0, x1) = (intercept[c], intercept[c] + k * zmax);
                let (lo, hi) = (x0.min(x1), x0.max(x1));
                [lo, hi, peak, -peak]
                    .into_iter()
                    .filter(|x| (lo..=hi).contains(x))
                    .map(|x| sigmoid_d2(x).abs() * k * k)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `max_w sup_z |c(z) + d(z) w| = max_w sup_z |f(1,w,z) − f(0,w,z)|`.
    fn feedback_bound(&self, zmax: f64) -> f64 {
        let gap = |w: u8, z: f64| (self.value(cell(1, w), z) - self.value(cell(0, w), z)).abs();
        let mut best = 0.0f64;
        for w in 0..2u8 {
            let mut points: Vec<f64> = match self {
                Curves::Affine { .. } => vec![0.0, zmax],
                Curves::Tabulated { .. } => {
                    let mut p: Vec<f64> = (0..=zmax.floor() as usize).map(|k| k as f64).collect();
                    p.push(zmax);
                    p
                }
                Curves::Logistic { .. } => {
                    let steps = ((zmax * 8.0).ceil() as usize).clamp(1, 4096);
                    (0..=steps).map(|k| zmax * k as f64 / steps as f64).collect()
                }
            };
            if let Curves::Logistic { .. } = self {
                // refine around the best sample by golden-section search
                let (k, _) = points
                    .iter()
                    .enumerate()
                    .map(|(k, &z)| (k, gap(w, z)))
                    .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                let h = if points.len() > 1 { points[1] - points[0] } else { 0.0 };
                let (mut lo, mut hi) = ((points[k] - h).max(0.0), (points[k] + h).min(zmax));
                let phi = (5f64.sqrt() - 1.0) / 2.0;
                for _ in 0..60 {
                    let m1 = hi - phi * (hi - lo);
                    let m2 = lo + phi * (hi - lo);
                    if gap(w, m1) < gap(w, m2) {
                        lo = m1;
                    } else {
                        hi = m2;
                    }
                }
                points.push((lo + hi) / 2.0);
            }
            for z in points {
                best = best.max(gap(w, z));
            }
        }
        best
    }
}

fn interpolate(t: &[f64], z: f64) -> f64 {
    let last = t.len() - 1;
    if z <= 0.0 {
        return t[0];
    }
    if z >= last as f64 {
        return t[last];
    }
    let k = z.floor() as usize;
    let frac = z - k as f64;
    t[k] + (t[k + 1] - t[k]) * frac
}

/// Coefficients of `f = a + b·w + c·y + d·w·y` at one `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Abcd {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Abcd {
    /// From the four cell values `f(0,0), f(0,1), f(1,0), f(1,1)`.
    pub fn from_cells(f: [f64; 4]) -> Self {
        Self {
            a: f[0],
            b: f[1] - f[0],
            c: f[2] - f[0],
            d: f[3] - f[1] - f[2] + f[0],
        }
    }

    pub fn to_cells(&self) -> [f64; 4] {
        [
            self.a,
            self.a + self.b,
            self.a + self.c,
            self.a + self.b + self.c + self.d,
        ]
    }

    /// Bilinear extension `a + b·w + c·y + d·w·y` at real `y, w`.
    pub fn eval(&self, y: f64, w: f64) -> f64 {
        self.a + self.b * w + self.c * y + self.d * w * y
    }
}

/// Whether the four parameter vectors of a spec are per-cell values or
/// `(a, b, c, d)` coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    #[default]
    Cells,
    Abcd,
}

/// Curve parameters as written in a model spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub family: Family,
    #[serde(default)]
    pub parametrization: Parametrization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

impl CurveSpec {
    pub fn affine(parametrization: Parametrization, base: [f64; 4], slope: [f64; 4]) -> Self {
        Self {
            family: Family::Affine,
            parametrization,
            base: Some(base),
            slope: Some(slope),
            intercept: None,
            scale: None,
            table: None,
        }
    }

    pub fn logistic(intercept: [f64; 4], slope: [f64; 4], scale: f64) -> Self {
        Self {
            family: Family::Logistic,
            parametrization: Parametrization::Cells,
            base: None,
            slope: Some(slope),
            intercept: Some(intercept),
            scale: Some(scale),
            table: None,
        }
    }

    pub fn tabulated(parametrization: Parametrization, table: Vec<Vec<f64>>) -> Self {
        Self {
            family: Family::Tabulated,
            parametrization,
            base: None,
            slope: None,
            intercept: None,
            scale: None,
            table: Some(table),
        }
    }

    fn to_curves(&self) -> Result<Curves> {
        let need = |v: Option<[f64; 4]>, name: &str| {
            v.ok_or_else(|| Error::InvalidSpec(format!("{:?} family requires `{name}`", self.family)))
        };
        let finite = |vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidSpec("non-finite parameter".into()))
            }
        };
        let to_cells = |v: [f64; 4]| match self.parametrization {
            Parametrization::Cells => v,
            Parametrization::Abcd => Abcd {
                a: v[0],
                b: v[1],
                c: v[2],
                d: v[3],
            }
            .to_cells(),
        };
        match self.family {
            Family::Affine => {
                let (base, slope) = (need(self.base, "base")?, need(self.slope, "slope")?);
                finite(&base)?;
                finite(&slope)?;
                Ok(Curves::Affine {
                    base: to_cells(base),
                    slope: to_cells(slope),
                })
            }
            Family::Logistic => {
                if self.parametrization == Parametrization::Abcd {
                    return Err(Error::InvalidSpec(
                        "logistic curves are parametrized per cell only".into(),
                    ));
                }
                let (intercept, slope) = (need(self.intercept, "intercept")?, need(self.slope, "slope")?);
                let scale = self.scale.unwrap_or(1.0);
                finite(&intercept)?;
                finite(&slope)?;
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::InvalidSpec(format!("logistic scale must be positive, got {scale}")));
                }
                Ok(Curves::Logistic {
                    intercept,
                    slope,
                    scale,
                })
            }
            Family::Tabulated => {
                let rows = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("tabulated family requires `table`".into()))?;
                if rows.len() != 4 || rows.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidSpec("`table` needs four non-empty rows".into()));
                }
                for r in rows {
                    finite(r)?;
                }
                let table: [Vec<f64>; 4] = match self.parametrization {
                    Parametrization::Cells => [rows[0].clone(), rows[1].clone(), rows[2].clone(), rows[3].clone()],
                    Parametrization::Abcd => {
                        let len = rows[0].len();
                        if rows.iter().any(|r| r.len() != len) {
                            return Err(Error::InvalidSpec("abcd table rows must share a length".into()));
                        }
                        let mut out: [Vec<f64>; 4] = Default::default();
                        for k in 0..len {
                            let cells = Abcd {
                                a: rows[0][k],
                                b: rows[1][k],
                                c: rows[2][k],
                                d: rows[3][k],
                            }
                            .to_cells();
                            for (o, v) in out.iter_mut().zip(cells) {
                                o.push(v);
                            }
                        }
                        out
                    }
                };
                Ok(Curves::Tabulated { table })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitOverride {
    pub units: Vec<usize>,
    #[serde(flatten)]
    pub curve: CurveSpec,
}

/// Model spec file contents: default curves plus optional per-unit overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub curve: CurveSpec,
    #[serde(default, rename = "override", skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<UnitOverride>,
}

impl ModelSpec {
    pub fn uniform(curve: CurveSpec) -> Self {
        Self {
            curve,
            overrides: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }
}

/// Validated activation model bound to a unit count.
#[derive(Clone, Debug)]
pub struct ActivationModel {
    n: usize,
    curves: Vec<Curves>,
    unit_curve: Vec<usize>,
    spec: ModelSpec,
    fingerprint: Fingerprint,
}

impl ActivationModel {
    /// Builds the model and checks `0 < f < 1` (with margin) on every unit's
    /// integer grid `0..=degree(i)`.
    pub fn build(spec: &ModelSpec, graph: &InterferenceGraph) -> Result<Self> {
        let n = graph.n();
        let mut curves = vec![spec.curve.to_curves()?];
        let mut unit_curve = vec![0usize; n];
        for ov in &spec.overrides {
            curves.push(ov.curve.to_curves()?);
            for &u in &ov.units {
                if u >= n {
                    return Err(Error::InvalidSpec(format!("override unit {u} out of range for {n} units")));
                }
                unit_curve[u] = curves.len() - 1;
            }
        }
        let mut checked = std::collections::HashSet::new();
        for i in 0..n {
            let (k, deg) = (unit_curve[i], graph.degree(i));
            if !checked.insert((k, deg)) {
                continue;
            }
            for z in 0..=deg {
                for y in 0..2u8 {
                    for w in 0..2u8 {
                        let value = curves[k].value(cell(y, w), z as f64);
                        if !(RANGE_MARGIN..=1.0 - RANGE_MARGIN).contains(&value) {
                            return Err(Error::RangeViolation {
                                unit: i,
                                y,
                                w,
                                z: z as f64,
                                value,
                            });
                        }
                    }
                }
            }
        }
        let fingerprint = Fingerprint::of_bytes(
            format!("{n}\n{}", serde_json::to_string(spec).expect("spec serializes")).as_bytes(),
        );
        Ok(Self {
            n,
            curves,
            unit_curve,
            spec: spec.clone(),
            fingerprint,
        })
    }

    pub fn from_toml_str(text: &str, graph: &InterferenceGraph) -> Result<Self> {
        Self::build(&ModelSpec::from_toml_str(text)?, graph)
    }

    pub fn from_file(path: impl AsRef<Path>, graph: &InterferenceGraph) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, graph)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn curves(&self, i: usize) -> &Curves {
        &self.curves[self.unit_curve[i]]
    }

    pub fn family(&self, i: usize) -> Family {
        self.curves(i).family()
    }

    #[inline]
    pub fn eval_f(&self, i: usize, y: u8, w: u8, z: f64) -> f64 {
        self.curves(i).value(cell(y, w), z)
    }

    pub fn eval_cells(&self, i: usize, z: f64) -> [f64; 4] {
        let c = self.curves(i);
        [c.value(0, z), c.value(1, z), c.value(2, z), c.value(3, z)]
    }

    pub fn eval_abcd(&self, i: usize, z: f64) -> Abcd {
        Abcd::from_cells(self.eval_cells(i, z))
    }

    /// `∂f/∂z`: analytic for affine/logistic, step-1 finite difference for
    /// tabulated curves.
    pub fn eval_f_deriv(&self, i: usize, y: u8, w: u8, z: f64) -> f64 {
        self.curves(i).deriv(cell(y, w), z)
    }

    /// `(a', b', c', d')` at `z`.
    pub fn eval_abcd_deriv(&self, i: usize, z: f64) -> Abcd {
        let c = self.curves(i);
        Abcd::from_cells([c.deriv(0, z), c.deriv(1, z), c.deriv(2, z), c.deriv(3, z)])
    }

    pub fn assumption_constants(&self, g: &InterferenceGraph) -> AssumptionReport {
        assert_eq!(g.n(), self.n, "graph and model disagree on the unit count");
        let mut memo: HashMap<(usize, usize), (f64, f64, f64)> = HashMap::new();
        let mut lipschitz_per_unit = Vec::with_capacity(self.n);
        let (mut b, mut l2) = (0.0f64, 0.0f64);
        for i in 0..self.n {
            let key = (self.unit_curve[i], g.degree(i));
            let &mut (li, bi, l2i) = memo.entry(key).or_insert_with(|| {
                let c = &self.curves[key.0];
                let zmax = key.1 as f64;
                (c.lipschitz(zmax), c.feedback_bound(zmax), c.second_bound(zmax))
            });
            lipschitz_per_unit.push(li);
            b = b.max(bi);
            l2 = l2.max(l2i);
        }
        let lipschitz = lipschitz_per_unit.iter().copied().fold(0.0, f64::max);
        let mut report = AssumptionReport::from_constants(lipschitz, b, l2, g.max_degree());
        report.lipschitz_per_unit = lipschitz_per_unit;
        report
    }
}

/// Constants of the contraction and smoothness conditions for one
/// (model, graph) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `L_n`
    pub lipschitz: f64,
    pub lipschitz_per_unit: Vec<f64>,
    /// `B`
    pub self_feedback: f64,
    /// `L_{2,n}`
    pub second_derivative: f64,
    /// `D_n`
    pub max_degree: usize,
    /// `C = B + L_n·D_n`
    pub contraction: f64,
    /// `L_{2,n}·D_n²`
    pub smoothness: f64,
    pub contraction_ok: bool,
    pub smoothness_ok: bool,
}

impl AssumptionReport {
    /// Report from already-known constants; per-unit Lipschitz values are
    /// left empty.
    pub fn from_constants(lipschitz: f64, self_feedback: f64, second_derivative: f64, max_degree: usize) -> Self {
        let contraction = self_feedback + lipschitz * max_degree as f64;
        let smoothness = second_derivative * (max_degree as f64).powi(2);
        Self {
            lipschitz,
            lipschitz_per_unit: Vec::new(),
            self_feedback,
            second_derivative,
            max_degree,
            contraction,
            smoothness,
            contraction_ok: contraction < 1.0,
            smoothness_ok: smoothness <= SMOOTHNESS_LIMIT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ABCD: [f64; 4] = [0.1, 0.2, 0.3, 0.1];

    fn constant_model(g: &InterferenceGraph) -> ActivationModel {
        ActivationModel::build(
            &ModelSpec::uniform(CurveSpec::affine(Parametrization::Abcd, ABCD, [0.0; 4])),
            g,
        )
        .unwrap()
    }

    fn a_slope_model(slope: f64, g: &InterferenceGraph) -> Result<ActivationModel> {
        ActivationModel::build(
            &ModelSpec::uniform(CurveSpec::affine(Parametrization::Abcd, ABCD, [slope, 0.0, 0.0, 0.0])),
            g,
        )
    }

    #[test]
    fn constant_model_values() {
        let g = InterferenceGraph::path(3);
        let m = constant_model(&g);
        for z in [0.0, 0.5, 2.0] {
            assert!((m.eval_f(1, 1, 1, z) - 0.7).abs() < 1e-12);
            let abcd = m.eval_abcd(0, z);
            for (got, want) in [abcd.a, abcd.b, abcd.c, abcd.d].into_iter().zip(ABCD) {
                assert!((got - want).abs() < 1e-12);
            }
            assert_eq!(m.eval_f_deriv(0, 0, 0, z), 0.0);
        }
    }

    #[test]
    fn affine_accept_and_reject() {
        let star = InterferenceGraph::star(5); // center has degree 4
        let m = a_slope_model(0.01, &star).unwrap();
        assert!((m.eval_f(0, 1, 1, 4.0) - 0.74).abs() < 1e-12);
        assert!((m.eval_f(0, 0, 0, 2.0) - 0.12).abs() < 1e-12);
        assert_eq!(m.eval_f_deriv(0, 0, 0, 3.3), 0.01);

        let spec = ModelSpec::uniform(CurveSpec::affine(Parametrization::Abcd, [0.5, 0.2, 0.3, 0.1], [0.2, 0.0, 0.0, 0.0]));
        match ActivationModel::build(&spec, &star) {
            Err(Error::RangeViolation { unit, value, .. }) => {
                assert_eq!(unit, 0);
                assert!(value >= 1.0 - RANGE_MARGIN);
            }
            other => panic!("expected RangeViolation, got {other:?}"),
        }
    }

    #[test]
    fn tabulated_interpolation_and_derivative() {
        let g = InterferenceGraph::path(2);
        let table = vec![vec![0.2, 0.4], vec![0.3, 0.3], vec![0.5, 0.5], vec![0.6, 0.6]];
        let m = ActivationModel::build(&ModelSpec::uniform(CurveSpec::tabulated(Parametrization::Cells, table)), &g).unwrap();
        assert!((m.eval_f(0, 0, 0, 0.5) - 0.3).abs() < 1e-12);
        assert_eq!(m.eval_f(0, 0, 0, 7.0), 0.4);
        assert!((m.eval_f_deriv(0, 0, 0, 0.0) - 0.2).abs() < 1e-12);
        assert!((m.eval_f_deriv(0, 0, 0, 1.0) - 0.2).abs() < 1e-12);
        let rep = m.assumption_constants(&g);
        assert!((rep.lipschitz - 0.2).abs() < 1e-12);
        assert_eq!(rep.second_derivative, 0.0);
    }

    #[test]
    fn tabulated_central_difference_inside_grid() {
        let g = InterferenceGraph::complete(5);
        let row = vec![0.1, 0.2, 0.4, 0.5, 0.5];
        let table = vec![row.clone(), row.clone(), row.clone(), row];
        let m = ActivationModel::build(&ModelSpec::uniform(CurveSpec::tabulated(Parametrization::Cells, table)), &g).unwrap();
        assert!((m.eval_f_deriv(0, 1, 0, 2.0) - 0.15).abs() < 1e-12);
        assert!((m.eval_f_deriv(0, 1, 0, 4.0) - 0.0).abs() < 1e-12);
        assert!((m.assumption_constants(&g).lipschitz - 0.2).abs() < 1e-12);
    }

    #[test]
    fn assumption_constant_examples() {
        let g = InterferenceGraph::path(3);
        let rep = constant_model(&g).assumption_constants(&g);
        assert_eq!(rep.lipschitz, 0.0);
        assert!((rep.self_feedback - 0.4).abs() < 1e-12);
        assert!((rep.contraction - 0.4).abs() < 1e-12);
        assert!(rep.contraction_ok);

        let k5 = InterferenceGraph::complete(5);
        let rep = a_slope_model(0.01, &k5).unwrap().assumption_constants(&k5);
        assert!((rep.lipschitz - 0.01).abs() < 1e-12);
        assert!((rep.contraction - 0.44).abs() < 1e-12);
        assert!(rep.contraction_ok);
    }

    #[test]
    fn contraction_violation_is_reported() {
        // a-slope 0.2 with B = 0.4 on D_n = 4 cannot stay inside (0, 1), so
        // that example is checked on the constants directly.
        let rep = AssumptionReport::from_constants(0.2, 0.4, 0.0, 4);
        assert!((rep.contraction - 1.2).abs() < 1e-12);
        assert!(!rep.contraction_ok);

        // Opposite-signed slopes keep every curve in range while C > 1.
        let g = InterferenceGraph::star(6);
        let spec = ModelSpec::uniform(CurveSpec::affine(
            Parametrization::Cells,
            [0.05, 0.05, 0.95, 0.95],
            [0.18, 0.18, -0.18, -0.18],
        ));
        let rep = ActivationModel::build(&spec, &g).unwrap().assumption_constants(&g);
        assert!((rep.self_feedback - 0.9).abs() < 1e-12);
        assert!((rep.contraction - 1.8).abs() < 1e-12);
        assert!(!rep.contraction_ok);
        assert!(rep.contraction >= rep.self_feedback);
    }

    #[test]
    fn malformed_models_rejected() {
        let g = InterferenceGraph::path(2);
        let missing = CurveSpec {
            slope: None,
            ..CurveSpec::affine(Parametrization::Cells, [0.5; 4], [0.0; 4])
        };
        assert!(matches!(ActivationModel::build(&ModelSpec::uniform(missing), &g), Err(Error::InvalidSpec(_))));
        let bad_scale = CurveSpec::logistic([0.0; 4], [1.0; 4], 0.0);
        assert!(matches!(ActivationModel::build(&ModelSpec::uniform(bad_scale), &g), Err(Error::InvalidSpec(_))));
        let mut abcd_logistic = CurveSpec::logistic([0.0; 4], [1.0; 4], 1.0);
        abcd_logistic.parametrization = Parametrization::Abcd;
        assert!(matches!(ActivationModel::build(&ModelSpec::uniform(abcd_logistic), &g), Err(Error::InvalidSpec(_))));
        let short_table = CurveSpec::tabulated(Parametrization::Cells, vec![vec![0.5]; 3]);
        assert!(matches!(ActivationModel::build(&ModelSpec::uniform(short_table), &g), Err(Error::InvalidSpec(_))));
        let spec = ModelSpec {
            curve: CurveSpec::affine(Parametrization::Cells, [0.5; 4], [0.0; 4]),
            overrides: vec![UnitOverride {
                units: vec![5],
                curve: CurveSpec::affine(Parametrization::Cells, [0.5; 4], [0.0; 4]),
            }],
        };
        assert!(matches!(ActivationModel::build(&spec, &g), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn toml_spec_with_overrides() {
        let text = r#"
            family = "affine"
            parametrization = "abcd"
            base = [0.1, 0.2, 0.3, 0.1]
            slope = [0.01, 0.0, 0.0, 0.0]

            [[override]]
            units = [2]
            family = "logistic"
            intercept = [-1.0, 0.0, 0.0, 1.0]
            slope = [1.0, 1.0, 1.0, 1.0]
            scale = 4.0
        "#;
        let g = InterferenceGraph::path(4);
        let m = ActivationModel::from_toml_str(text, &g).unwrap();
        assert_eq!(m.family(0), Family::Affine);
        assert_eq!(m.family(2), Family::Logistic);
        assert!((m.eval_f(2, 0, 0, 0.0) - sigmoid(-1.0)).abs() < 1e-15);
        let back = ModelSpec::from_toml_str(&m.spec().to_toml_string()).unwrap();
        assert_eq!(&back, m.spec());
    }

    #[test]
    fn logistic_bounds_match_dense_scan() {
        let g = InterferenceGraph::complete(9);
        let spec = ModelSpec::uniform(CurveSpec::logistic([-2.0, -0.5, 0.5, 1.5], [3.0, -1.0, 2.0, 4.0], 8.0));
        let m = ActivationModel::build(&spec, &g).unwrap();
        let rep = m.assumption_constants(&g);
        let (mut l, mut b, mut l2) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..=80_000 {
            let z = 8.0 * k as f64 / 80_000.0;
            let c = m.curves(0);
            for cc in 0..4 {
                l = l.max(c.deriv(cc, z).abs());
                l2 = l2.max(c.second_deriv(cc, z).abs());
            }
            let abcd = m.eval_abcd(0, z);
            b = b.max(abcd.c.abs()).max((abcd.c + abcd.d).abs());
        }
        assert!((rep.lipschitz - l).abs() < 1e-9, "{} vs {}", rep.lipschitz, l);
        assert!((rep.self_feedback - b).abs() < 1e-9, "{} vs {}", rep.self_feedback, b);
        assert!((rep.second_derivative - l2).abs() < 1e-9);
        assert!((rep.smoothness - l2 * 64.0).abs() < 1e-9);
    }

    fn arb_logistic() -> impl Strategy<Value = CurveSpec> {
        (
            proptest::array::uniform4(-3.0f64..3.0),
            proptest::array::uniform4(-4.0f64..4.0),
            5.0f64..20.0,
        )
            .prop_map(|(i, s, sc)| CurveSpec::logistic(i, s, sc))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_identity_logistic(spec in arb_logistic(), zs in proptest::collection::vec(0.0f64..10.0, 16)) {
            let g = InterferenceGraph::complete(11);
            let m = ActivationModel::build(&ModelSpec::uniform(spec), &g).unwrap();
            for z in zs {
                let abcd = m.eval_abcd(3, z);
                for y in 0..2u8 {
                    for w in 0..2u8 {
                        let f = m.eval_f(3, y, w, z);
                        prop_assert!((abcd.eval(y as f64, w as f64) - f).abs() < 1e-15);
                    }
                }
            }
        }

        #[test]
        fn logistic_derivative_matches_finite_difference(spec in arb_logistic(), z in 1e-3f64..10.0, y in 0u8..2, w in 0u8..2) {
            let g = InterferenceGraph::complete(11);
            let m = ActivationModel::build(&ModelSpec::uniform(spec), &g).unwrap();
            let h = 1e-4;
            let fd = (m.eval_f(0, y, w, z + h) - m.eval_f(0, y, w, z - h)) / (2.0 * h);
            prop_assert!((m.eval_f_deriv(0, y, w, z) - fd).abs() < 1e-6);
        }

        #[test]
        fn affine_nonnegative_slopes_are_monotone(slope in proptest::array::uniform4(0.0f64..0.02), zs in proptest::collection::vec(0.0f64..10.0, 2)) {
            let g = InterferenceGraph::complete(11);
            let m = ActivationModel::build(&ModelSpec::uniform(CurveSpec::affine(Parametrization::Cells, [0.3, 0.4, 0.5, 0.55], slope)), &g).unwrap();
            let (lo, hi) = (zs[0].min(zs[1]), zs[0].max(zs[1]));
            for c in 0..4u8 {
                prop_assert!(m.eval_f(0, c >> 1, c & 1, lo) <= m.eval_f(0, c >> 1, c & 1, hi));
            }
        }

        #[test]
        fn contraction_is_monotone_in_degree(spec in arb_logistic(), seed in any::<u64>()) {
            let big = InterferenceGraph::erdos_renyi(12, 0.6, seed).unwrap();
            let keep: Vec<(usize, usize)> = big.edges().enumerate().filter(|(k, _)| k % 2 == 0).map(|(_, e)| e).collect();
            let sub = InterferenceGraph::from_edges(12, &keep).unwrap();
            let m_big = ActivationModel::build(&ModelSpec::uniform(spec.clone()), &big).unwrap();
            let m_sub = ActivationModel::build(&ModelSpec::uniform(spec), &sub).unwrap();
            let (rb, rs) = (m_big.assumption_constants(&big), m_sub.assumption_constants(&sub));
            prop_assert!(rb.contraction >= rs.contraction - 1e-12);
            prop_assert!(rb.contraction >= rb.self_feedback);
            prop_assert_eq!(rb.contraction_ok, rb.contraction < 1.0);
        }
    }
}
