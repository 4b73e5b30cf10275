//! JSON scene files: named point sets, flats, measures, graphs and frames,
//! with every rational written as a string (`"1/3"`, `"-2"`, `"0.125"`).
//!
//! ```json
//! {
//!   "ambient_dim": 2,
//!   "seed": 7,
//!   "points":   { "X": [["0", "1/2"], ["1", "0"]] },
//!   "flats":    { "L": { "basepoint": ["0", "0"], "directions": [["1", "0"]] } },
//!   "measures": {
//!     "mu":  { "resolution": "1/64", "atoms": [{ "point": ["0", "0"], "weight": "1/2" }] },
//!     "nu":  { "resolution": "1/64", "points": "X" },
//!     "seg": { "segment": { "from": ["0", "0"], "to": ["1", "0"], "bits": 6 } }
//!   },
//!   "graphs":   { "G": { "measures": ["mu", "seg"], "tuples": "full", "sigma": 1.0, "K": 8.0, "c": 1.0 } },
//!   "frames":   { "F": { "flats": ["L"], "measures": [["mu"]] } },
//!   "parameters": { "sigma": 1.0, "K": 8.0, "epsilon": 0.25, "w": "1/1000", "scales": [1, 6] }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::exactlin::{dyadic, parse_scalar, sub, Scalar};
use crate::flats::AffineFlat;
use crate::measures::{Atom, DiscreteMeasure};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("malformed JSON at line {line}, column {column}: {msg}")]
    Json { line: usize, column: usize, msg: String },
    #[error("{field}: malformed rational {value:?}")]
    Rational { field: String, value: String },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error("{field}: reference to missing {kind} {name:?}")]
    Dangling { field: String, kind: &'static str, name: String },
    #[error("{field}: dimension mismatch ({msg})")]
    Dimension { field: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub measures: Vec<String>,
    /// `None` means the full product.
    pub tuples: Option<Vec<Vec<usize>>>,
    pub sigma: Option<f64>,
    pub big_k: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub flats: Vec<String>,
    pub measures: Vec<Vec<String>>,
}

/// Free-form parameters; numbers stay as JSON so each command decides
/// whether it wants a float or an exact rational.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(pub Map<String, Value>);

impl Params {
    pub fn f64(&self, key: &str) -> Result<Option<f64>, SceneError> {
        let field = format!("parameters.{key}");
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(x)) => Ok(x.as_f64()),
            Some(Value::String(s)) => {
                parse_scalar(s).map(|q| Some(crate::exactlin::to_f64(&q))).map_err(|_| SceneError::Rational { field, value: s.clone() })
            }
            Some(_) => Err(SceneError::Invalid { field, msg: "expected a number".into() }),
        }
    }

    pub fn scalar(&self, key: &str) -> Result<Option<Scalar>, SceneError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => scalar(v, &format!("parameters.{key}")).map(Some),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, SceneError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(SceneError::Invalid { field: format!("parameters.{key}"), msg: "expected a string".into() }),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, SceneError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(_) => Err(SceneError::Invalid { field: format!("parameters.{key}"), msg: "expected a boolean".into() }),
        }
    }

    /// Dyadic exponent range `[lo, hi]` for scales `2^-lo .. 2^-hi`.
    pub fn scales(&self) -> Result<Option<(u32, u32)>, SceneError> {
        let field = "parameters.scales".to_string();
        match self.0.get("scales") {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => parse_scale_range(s).map(Some).ok_or(SceneError::Invalid { field, msg: format!("bad range {s:?}") }),
            Some(Value::Array(a)) if a.len() == 2 => {
                let lo = a[0].as_u64().and_then(|x| u32::try_from(x).ok());
                let hi = a[1].as_u64().and_then(|x| u32::try_from(x).ok());
                match (lo, hi) {
                    (Some(lo), Some(hi)) if lo <= hi && hi < 63 => Ok(Some((lo, hi))),
                    _ => Err(SceneError::Invalid { field, msg: "expected [lo, hi] with lo <= hi < 63".into() }),
                }
            }
            Some(_) => Err(SceneError::Invalid { field, msg: "expected [lo, hi] or \"lo..hi\"".into() }),
        }
    }
}

/// Parses `"1..6"` (or a single `"4"`) into an exponent range.
pub fn parse_scale_range(s: &str) -> Option<(u32, u32)> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().ok()?, b.trim().trim_start_matches('=').parse().ok()?),
        None => {
            let x = s.trim().parse().ok()?;
            (x, x)
        }
    };
    (lo <= hi && hi < 63).then_some((lo, hi))
}

/// `2^-lo, …, 2^-hi`.
pub fn dyadic_scales((lo, hi): (u32, u32)) -> Vec<Scalar> {
    (lo..=hi).map(dyadic).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ambient_dim: usize,
    pub seed: Option<u64>,
    pub points: BTreeMap<String, Vec<Vec<Scalar>>>,
    pub flats: BTreeMap<String, AffineFlat>,
    pub measures: BTreeMap<String, DiscreteMeasure>,
    pub graphs: BTreeMap<String, GraphSpec>,
    pub frames: BTreeMap<String, FrameSpec>,
    pub params: Params,
}

impl Scene {
    /// The single object of a kind when `name` is absent, else the named one.
    fn pick<'a, T>(map: &'a BTreeMap<String, T>, name: Option<&str>, kind: &'static str, field: &str) -> Result<(&'a str, &'a T), SceneError> {
        match name {
            Some(n) => map
                .get_key_value(n)
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| SceneError::Dangling { field: field.into(), kind, name: n.into() }),
            None if map.len() == 1 => Ok(map.iter().next().map(|(k, v)| (k.as_str(), v)).unwrap()),
            None => Err(SceneError::Invalid {
                field: field.into(),
                msg: format!("{} {kind}s defined; name one in parameters", map.len()),
            }),
        }
    }

    pub fn measure(&self, name: Option<&str>) -> Result<(&str, &DiscreteMeasure), SceneError> {
        Self::pick(&self.measures, name, "measure", "parameters.measure")
    }

    pub fn graph(&self, name: Option<&str>) -> Result<(&str, &GraphSpec), SceneError> {
        Self::pick(&self.graphs, name, "graph", "parameters.graph")
    }

    pub fn frame(&self, name: Option<&str>) -> Result<(&str, &FrameSpec), SceneError> {
        Self::pick(&self.frames, name, "frame", "parameters.frame")
    }

    pub fn point_set(&self, name: Option<&str>) -> Result<(&str, &Vec<Vec<Scalar>>), SceneError> {
        Self::pick(&self.points, name, "point set", "parameters.points")
    }

    pub fn flat(&self, name: &str, field: &str) -> Result<&AffineFlat, SceneError> {
        self.flats.get(name).ok_or_else(|| SceneError::Dangling { field: field.into(), kind: "flat", name: name.into() })
    }
}

pub fn parse_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_scene_str(&text)
}

pub fn parse_scene_str(text: &str) -> Result<Scene, SceneError> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| SceneError::Json { line: e.line(), column: e.column(), msg: e.to_string() })?;
    let root = obj(&v, "scene")?;
    let n = root
        .get("ambient_dim")
        .and_then(Value::as_u64)
        .filter(|&n| n >= 1)
        .ok_or_else(|| SceneError::Invalid { field: "ambient_dim".into(), msg: "expected a positive integer".into() })?
        as usize;
    let seed = match root.get("seed") {
        None | Some(Value::Null) => None,
        Some(s) => Some(s.as_u64().ok_or_else(|| SceneError::Invalid { field: "seed".into(), msg: "expected an unsigned integer".into() })?),
    };

    let mut points = BTreeMap::new();
    for (name, val) in section(root, "points")? {
        let field = format!("points.{name}");
        let pts = arr(val, &field)?.iter().enumerate().map(|(i, p)| vector(p, &format!("{field}[{i}]"), n)).collect::<Result<_, _>>()?;
        points.insert(name.clone(), pts);
    }

    let mut flats = BTreeMap::new();
    for (name, val) in section(root, "flats")? {
        let field = format!("flats.{name}");
        let o = obj(val, &field)?;
        let base = vector(get(o, "basepoint", &field)?, &format!("{field}.basepoint"), n)?;
        let dirs = match o.get("directions") {
            None => vec![],
            Some(d) => arr(d, &format!("{field}.directions"))?
                .iter()
                .enumerate()
                .map(|(i, x)| vector(x, &format!("{field}.directions[{i}]"), n))
                .collect::<Result<_, _>>()?,
        };
        let f = AffineFlat::new(base, dirs).map_err(|e| SceneError::Invalid { field: field.clone(), msg: e.to_string() })?;
        flats.insert(name.clone(), f);
    }

    let mut measures = BTreeMap::new();
    for (name, val) in section(root, "measures")? {
        let field = format!("measures.{name}");
        measures.insert(name.clone(), measure(val, &field, n, &points)?);
    }

    let mut graphs = BTreeMap::new();
    for (name, val) in section(root, "graphs")? {
        let field = format!("graphs.{name}");
        let o = obj(val, &field)?;
        let names = names(get(o, "measures", &field)?, &format!("{field}.measures"))?;
        for (i, m) in names.iter().enumerate() {
            if !measures.contains_key(m) {
                return Err(SceneError::Dangling { field: format!("{field}.measures[{i}]"), kind: "measure", name: m.clone() });
            }
        }
        let tuples = match o.get("tuples") {
            None => None,
            Some(Value::String(s)) if s == "full" => None,
            Some(t) => {
                let tf = format!("{field}.tuples");
                let mut out = Vec::new();
                for (i, row) in arr(t, &tf)?.iter().enumerate() {
                    let rf = format!("{tf}[{i}]");
                    let idx: Vec<usize> = arr(row, &rf)?
                        .iter()
                        .map(|x| x.as_u64().map(|x| x as usize).ok_or_else(|| SceneError::Invalid { field: rf.clone(), msg: "expected atom indices".into() }))
                        .collect::<Result<_, _>>()?;
                    if idx.len() != names.len() {
                        return Err(SceneError::Dimension { field: rf, msg: format!("arity {} but {} measures", idx.len(), names.len()) });
                    }
                    for (j, &a) in idx.iter().enumerate() {
                        if a >= measures[&names[j]].len() {
                            return Err(SceneError::Dangling { field: rf.clone(), kind: "atom", name: format!("{}[{a}]", names[j]) });
                        }
                    }
                    out.push(idx);
                }
                Some(out)
            }
        };
        let num = |k: &str| -> Result<Option<f64>, SceneError> {
            match o.get(k) {
                None => Ok(None),
                Some(x) => x.as_f64().map(Some).ok_or_else(|| SceneError::Invalid { field: format!("{field}.{k}"), msg: "expected a number".into() }),
            }
        };
        graphs.insert(name.clone(), GraphSpec { measures: names, tuples, sigma: num("sigma")?, big_k: num("K")?, c: num("c")? });
    }

    let mut frames = BTreeMap::new();
    for (name, val) in section(root, "frames")? {
        let field = format!("frames.{name}");
        let o = obj(val, &field)?;
        let fl = names(get(o, "flats", &field)?, &format!("{field}.flats"))?;
        for (i, f) in fl.iter().enumerate() {
            if !flats.contains_key(f) {
                return Err(SceneError::Dangling { field: format!("{field}.flats[{i}]"), kind: "flat", name: f.clone() });
            }
        }
        let mf = format!("{field}.measures");
        let ms: Vec<Vec<String>> =
            arr(get(o, "measures", &field)?, &mf)?.iter().enumerate().map(|(i, x)| names(x, &format!("{mf}[{i}]"))).collect::<Result<_, _>>()?;
        if ms.len() != fl.len() {
            return Err(SceneError::Dimension { field: mf, msg: format!("{} measure lists for {} flats", ms.len(), fl.len()) });
        }
        for (i, row) in ms.iter().enumerate() {
            for (j, m) in row.iter().enumerate() {
                if !measures.contains_key(m) {
                    return Err(SceneError::Dangling { field: format!("{mf}[{i}][{j}]"), kind: "measure", name: m.clone() });
                }
            }
        }
        frames.insert(name.clone(), FrameSpec { flats: fl, measures: ms });
    }

    let params = match root.get("parameters") {
        None => Params::default(),
        Some(p) => Params(obj(p, "parameters")?.clone()),
    };
    params.scales()?;
    Ok(Scene { ambient_dim: n, seed, points, flats, measures, graphs, frames, params })
}

fn obj<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>, SceneError> {
    v.as_object().ok_or_else(|| SceneError::Invalid { field: field.into(), msg: "expected an object".into() })
}

fn arr<'a>(v: &'a Value, field: &str) -> Result<&'a Vec<Value>, SceneError> {
    v.as_array().ok_or_else(|| SceneError::Invalid { field: field.into(), msg: "expected an array".into() })
}

fn get<'a>(o: &'a Map<String, Value>, key: &str, field: &str) -> Result<&'a Value, SceneError> {
    o.get(key).ok_or_else(|| SceneError::Invalid { field: format!("{field}.{key}"), msg: "missing".into() })
}

fn section<'a>(root: &'a Map<String, Value>, key: &str) -> Result<Vec<(&'a String, &'a Value)>, SceneError> {
    match root.get(key) {
        None => Ok(vec![]),
        Some(v) => Ok(obj(v, key)?.iter().collect()),
    }
}

fn names(v: &Value, field: &str) -> Result<Vec<String>, SceneError> {
    arr(v, field)?
        .iter()
        .enumerate()
        .map(|(i, x)| x.as_str().map(str::to_owned).ok_or_else(|| SceneError::Invalid { field: format!("{field}[{i}]"), msg: "expected a name".into() }))
        .collect()
}

fn scalar(v: &Value, field: &str) -> Result<Scalar, SceneError> {
    let s = match v {
        Value::String(s) => s.clone(),
        // integers are exact; other JSON numbers would go through a float
        Value::Number(x) if x.is_i64() || x.is_u64() => x.to_string(),
        _ => return Err(SceneError::Rational { field: field.into(), value: v.to_string() }),
    };
    parse_scalar(&s).map_err(|_| SceneError::Rational { field: field.into(), value: s })
}

fn vector(v: &Value, field: &str, n: usize) -> Result<Vec<Scalar>, SceneError> {
    let a = arr(v, field)?;
    if a.len() != n {
        return Err(SceneError::Dimension { field: field.into(), msg: format!("{} coordinates in Q^{n}", a.len()) });
    }
    a.iter().enumerate().map(|(i, x)| scalar(x, &format!("{field}[{i}]"))).collect()
}

fn measure(v: &Value, field: &str, n: usize, points: &BTreeMap<String, Vec<Vec<Scalar>>>) -> Result<DiscreteMeasure, SceneError> {
    let o = obj(v, field)?;
    let invalid = |msg: String| SceneError::Invalid { field: field.into(), msg };
    if let Some(s) = o.get("segment") {
        let sf = format!("{field}.segment");
        let so = obj(s, &sf)?;
        let a = vector(get(so, "from", &sf)?, &format!("{sf}.from"), n)?;
        let b = vector(get(so, "to", &sf)?, &format!("{sf}.to"), n)?;
        let bits = get(so, "bits", &sf)?
            .as_u64()
            .filter(|&b| b <= 20)
            .ok_or_else(|| SceneError::Invalid { field: format!("{sf}.bits"), msg: "expected an integer in 0..=20".into() })? as u32;
        let m = 1i64 << bits;
        let d = sub(&b, &a);
        let pts = (0..=m)
            .map(|i| {
                let t = crate::exactlin::q(i, m);
                a.iter().zip(&d).map(|(x, y)| x + y * &t).collect()
            })
            .collect();
        return DiscreteMeasure::uniform(pts, dyadic(bits)).map_err(|e| invalid(e.to_string()));
    }
    let resolution = match o.get("resolution") {
        Some(r) => scalar(r, &format!("{field}.resolution"))?,
        None => return Err(SceneError::Invalid { field: format!("{field}.resolution"), msg: "missing".into() }),
    };
    if let Some(p) = o.get("points") {
        let name = p.as_str().ok_or_else(|| SceneError::Invalid { field: format!("{field}.points"), msg: "expected a point-set name".into() })?;
        let pts = points
            .get(name)
            .ok_or_else(|| SceneError::Dangling { field: format!("{field}.points"), kind: "point set", name: name.into() })?;
        return DiscreteMeasure::uniform(pts.clone(), resolution).map_err(|e| invalid(e.to_string()));
    }
    let af = format!("{field}.atoms");
    let mut atoms = Vec::new();
    for (i, a) in arr(get(o, "atoms", field)?, &af)?.iter().enumerate() {
        let f = format!("{af}[{i}]");
        let ao = obj(a, &f)?;
        let point = vector(get(ao, "point", &f)?, &format!("{f}.point"), n)?;
        let weight = scalar(get(ao, "weight", &f)?, &format!("{f}.weight"))?;
        atoms.push(Atom { point, weight });
    }
    DiscreteMeasure::new(n, atoms, resolution).map_err(|e| invalid(e.to_string()))
}
