//! JSON system and pair files, the built-in registry, and the check suites
//! behind the command-line tool.

mod suites;

pub use suites::*;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::{ControlSubset, FiberMap, RclSystem};
use crate::error::{Error, Result};
use crate::geometry::{ConfigSpace, Interval, PointMap};
use crate::lagrangian::{LagrangianSystem, Tolerances};
use crate::reduction::{orbit_reduce, point_reduce, ReduceOptions, ReducedSystem};
use crate::symmetry::SymmetrySpec;

/// Shipped example files, by name.
pub const BUILTINS: &[(&str, &str)] = &[
    ("free_particle", include_str!("../../../../systems/free_particle.json")),
    ("harmonic_oscillator", include_str!("../../../../systems/harmonic_oscillator.json")),
    ("central_force", include_str!("../../../../systems/central_force.json")),
    ("pendulum_cart", include_str!("../../../../systems/pendulum_cart.json")),
    ("ho_scaling_pair", include_str!("../../../../systems/ho_scaling_pair.json")),
    ("ho_scaling_bad", include_str!("../../../../systems/ho_scaling_bad.json")),
    ("translation_pair", include_str!("../../../../systems/translation_pair.json")),
    ("translation_bad", include_str!("../../../../systems/translation_bad.json")),
];

/// Names of the shipped single-system files.
pub const BUILTIN_SYSTEMS: &[&str] = &["free_particle", "harmonic_oscillator", "central_force", "pendulum_cart"];

/// Names of the shipped pair files.
pub const BUILTIN_PAIRS: &[&str] = &["ho_scaling_pair", "ho_scaling_bad", "translation_pair", "translation_bad"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub q: Vec<[f64; 2]>,
    pub q_dot: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDef {
    pub coords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<Vec<bool>>,
    #[serde(rename = "box")]
    pub bounds: BoxDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlDef {
    pub actuated: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<String>>,
    /// `null` ends are unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[Option<f64>; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraDef {
    pub dim: usize,
    /// `structure_constants[k][i][j] = C^k_ij`.
    pub structure_constants: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SymmetryDef {
    Cyclic(Vec<String>),
    Algebra(AlgebraDef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub space: SpaceDef,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    pub lagrangian: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetryDef>,
    /// Default momentum value for reduction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    Point,
    Orbit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedDef {
    pub name: String,
    pub kind: ReductionKind,
    pub mu: Vec<f64>,
    pub section_offsets: Vec<f64>,
    /// Reduced chart coordinates, for reference.
    pub shape: Vec<String>,
    pub parent: SystemFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedFile {
    pub reduced: ReducedDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Path(String),
    Inline(Box<SystemFile>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    pub forward: Vec<String>,
    #[serde(default)]
    pub inverse: Option<Vec<String>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairFile {
    pub a: SystemRef,
    pub b: SystemRef,
    pub map: MapDef,
    #[serde(default)]
    pub mu_a: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_b: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Document {
    System(SystemFile),
    Reduced(ReducedFile),
}

/// Source text of a file argument: an existing path, or a built-in name
/// (with or without `.json`).
pub fn resolve(arg: &str) -> Result<(String, Option<PathBuf>)> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: arg.to_string(),
            message: e.to_string(),
        })?;
        return Ok((text, path.parent().map(Path::to_path_buf)));
    }
    let stem = arg.strip_suffix(".json").unwrap_or(arg);
    let stem = stem.rsplit('/').next().unwrap_or(stem);
    match BUILTINS.iter().find(|(name, _)| *name == stem) {
        Some((_, text)) => Ok((text.to_string(), None)),
        None => Err(Error::Io {
            path: arg.to_string(),
            message: "no such file or built-in system".into(),
        }),
    }
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Json {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn parse_document(text: &str, origin: &str) -> Result<Document> {
    let value: serde_json::Value = from_json(text, origin)?;
    if value.get("reduced").is_some() {
        Ok(Document::Reduced(from_json(text, origin)?))
    } else {
        Ok(Document::System(from_json(text, origin)?))
    }
}

/// A fully built system file.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub name: String,
    pub file: SystemFile,
    pub rcl: RclSystem,
    pub symmetry: Option<SymmetrySpec>,
    pub mu: Option<Vec<f64>>,
}

impl LoadedSystem {
    /// Symmetry for reduction; systems without one get the trivial group.
    pub fn symmetry_or_trivial(&self) -> Result<SymmetrySpec> {
        match &self.symmetry {
            Some(s) => Ok(s.clone()),
            None => SymmetrySpec::abelian(vec![], self.rcl.dim()),
        }
    }

    pub fn momentum_names(&self) -> Vec<String> {
        match &self.symmetry {
            Some(s @ SymmetrySpec::Abelian { .. }) => {
                let names = self.rcl.sys.space().names();
                s.cyclic().map(|c| c.iter().map(|&i| names[i].clone()).collect()).unwrap_or_default()
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedReduced {
    pub def: ReducedDef,
    pub parent: LoadedSystem,
    pub red: ReducedSystem,
}

#[derive(Debug, Clone)]
pub enum Loaded {
    Full(LoadedSystem),
    Reduced(Box<LoadedReduced>),
}

impl Loaded {
    pub fn name(&self) -> &str {
        match self {
            Loaded::Full(s) => &s.name,
            Loaded::Reduced(r) => &r.def.name,
        }
    }
}

fn index_of(names: &[String], name: &str, what: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Invalid(format!("{what} '{name}' is not a coordinate")))
}

fn build_space(def: &SpaceDef) -> Result<ConfigSpace> {
    let n = def.coords.len();
    let periodic = def.periodic.clone().unwrap_or_else(|| vec![false; n]);
    let iv = |b: &[[f64; 2]]| b.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect();
    ConfigSpace::new(def.coords.clone(), periodic, iv(&def.bounds.q), iv(&def.bounds.q_dot)).map_err(|e| e.at("space"))
}

fn fiber_map(table: &crate::expr::SymbolTable, srcs: &[String], location: &str) -> Result<FiberMap> {
    let refs: Vec<&str> = srcs.iter().map(String::as_str).collect();
    FiberMap::parse(table, &refs).map_err(|e| e.at(location))
}

/// Build a system file: parse every expression and certify
/// hyperregularity (and the law's membership in the control subset).
pub fn build_system(file: &SystemFile, fallback_name: &str) -> Result<LoadedSystem> {
    let name = file.name.clone().unwrap_or_else(|| fallback_name.to_string());
    let space = build_space(&file.space)?;
    let params: Vec<(&str, f64)> = file.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let tol = file.tolerances.unwrap_or_default();
    let sys = LagrangianSystem::new(&name, space.clone(), &file.lagrangian, &params, tol).map_err(|e| match e {
        e @ Error::NotHyperregular { .. } => e,
        e => e.at("lagrangian"),
    })?;
    let table = sys.table().clone();
    let names = space.names().to_vec();
    let force = match &file.force {
        Some(f) => Some(fiber_map(&table, f, "force")?),
        None => None,
    };
    let subset = match &file.control {
        Some(c) => {
            let actuated = c
                .actuated
                .iter()
                .map(|a| index_of(&names, a, "actuated direction"))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at("control.actuated"))?;
            let offset = match &c.offset {
                Some(o) => fiber_map(&table, o, "control.offset")?,
                None => FiberMap::zero(&table),
            };
            let bounds = c.bounds.as_ref().map(|b| {
                b.iter()
                    .map(|[lo, hi]| (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
                    .collect()
            });
            Some(ControlSubset::new(actuated, offset, bounds).map_err(|e| e.at("control"))?)
        }
        None => None,
    };
    let law = match &file.law {
        Some(l) => Some(fiber_map(&table, l, "law")?),
        None => None,
    };
    let rcl = RclSystem::new(sys, force, subset, law, 64, 0).map_err(|e| e.at("law"))?;
    let symmetry = match &file.symmetry {
        Some(SymmetryDef::Cyclic(cs)) => {
            let idx = cs
                .iter()
                .map(|c| index_of(&names, c, "cyclic coordinate"))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at("symmetry.cyclic"))?;
            Some(SymmetrySpec::abelian(idx, names.len()).map_err(|e| e.at("symmetry"))?)
        }
        Some(SymmetryDef::Algebra(a)) => {
            Some(SymmetrySpec::algebra(a.dim, a.structure_constants.clone()).map_err(|e| e.at("symmetry.algebra"))?)
        }
        None => None,
    };
    Ok(LoadedSystem {
        name,
        file: file.clone(),
        rcl,
        symmetry,
        mu: file.mu.clone(),
    })
}

fn reduce_with(kind: ReductionKind, sys: &LoadedSystem, mu: &[f64], opts: ReduceOptions) -> Result<ReducedSystem> {
    let spec = sys
        .symmetry
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("{} declares no symmetry", sys.name)))?;
    match kind {
        ReductionKind::Point => point_reduce(&sys.rcl, spec, mu, opts),
        ReductionKind::Orbit => orbit_reduce(&sys.rcl, spec, mu, opts),
    }
}

pub fn build_reduced(def: &ReducedDef) -> Result<LoadedReduced> {
    let parent = build_system(&def.parent, &format!("{}_parent", def.name)).map_err(|e| e.at("reduced.parent"))?;
    let red = reduce_with(def.kind, &parent, &def.mu, ReduceOptions::default())?;
    let k = def.section_offsets.len();
    let red = if def.section_offsets.iter().any(|&o| o != 0.0) {
        let s = red.section().shape.len();
        red.with_section(def.section_offsets.clone(), DMatrix::zeros(k, s))?
    } else {
        red
    };
    Ok(LoadedReduced {
        def: def.clone(),
        parent,
        red,
    })
}

/// Load a file argument (path or built-in name).
pub fn load(arg: &str) -> Result<Loaded> {
    let (text, _) = resolve(arg)?;
    let fallback = Path::new(arg)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("system")
        .to_string();
    match parse_document(&text, arg)? {
        Document::System(f) => Ok(Loaded::Full(build_system(&f, &fallback)?)),
        Document::Reduced(r) => Ok(Loaded::Reduced(Box::new(build_reduced(&r.reduced)?))),
    }
}

/// Reduce a loaded system and describe the result as a reduced file.
pub fn reduce_to_file(sys: &LoadedSystem, mu: &[f64], kind: ReductionKind, opts: ReduceOptions) -> Result<(ReducedFile, ReducedSystem)> {
    let red = reduce_with(kind, sys, mu, opts)?;
    let names = sys.rcl.sys.space().names();
    let shape = red.section().shape.iter().map(|&i| names[i].clone()).collect();
    let mut parent = sys.file.clone();
    parent.name = Some(sys.name.clone());
    let file = ReducedFile {
        reduced: ReducedDef {
            name: format!("{}_reduced", sys.name),
            kind,
            mu: mu.to_vec(),
            section_offsets: red.section().offsets.clone(),
            shape,
            parent,
        },
    };
    Ok((file, red))
}

#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub a: LoadedSystem,
    pub b: LoadedSystem,
    pub map: PointMap,
    pub mu_a: Option<Vec<f64>>,
    pub mu_b: Option<Vec<f64>>,
}

fn load_ref(r: &SystemRef, dir: Option<&Path>, fallback: &str) -> Result<LoadedSystem> {
    match r {
        SystemRef::Inline(f) => build_system(f, fallback),
        SystemRef::Path(p) => {
            let joined = dir.map(|d| d.join(p)).filter(|j| j.exists());
            let arg = joined.as_deref().and_then(Path::to_str).unwrap_or(p);
            match load(arg)? {
                Loaded::Full(s) => Ok(s),
                Loaded::Reduced(_) => Err(Error::Invalid(format!("{p}: pair members must be unreduced systems"))),
            }
        }
    }
}

/// Load a pair file; the inverse map is required and checked on samples of
/// a's box.
pub fn load_pair(arg: &str) -> Result<LoadedPair> {
    let (text, dir) = resolve(arg)?;
    let file: PairFile = from_json(&text, arg)?;
    let a = load_ref(&file.a, dir.as_deref(), "a").map_err(|e| e.at("a"))?;
    let b = load_ref(&file.b, dir.as_deref(), "b").map_err(|e| e.at("b"))?;
    let inverse = file.map.inverse.as_ref().ok_or(Error::MissingInverse)?;
    let sa: Vec<&str> = a.rcl.sys.space().names().iter().map(String::as_str).collect();
    let sb: Vec<&str> = b.rcl.sys.space().names().iter().map(String::as_str).collect();
    let fwd: Vec<&str> = file.map.forward.iter().map(String::as_str).collect();
    let inv: Vec<&str> = inverse.iter().map(String::as_str).collect();
    let params: Vec<(&str, f64)> = file.map.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let map = PointMap::new(&sa, &sb, &fwd, Some(&inv), &params).map_err(|e| e.at("map"))?;
    let defect = map.inverse_defect(a.rcl.sys.space(), 64, 0)?;
    if !(defect <= 1e-9) {
        return Err(Error::InverseMismatch(defect).at("map.inverse"));
    }
    let mu_a = file.mu_a.or_else(|| a.mu.clone());
    let mu_b = file.mu_b.or_else(|| b.mu.clone());
    Ok(LoadedPair { a, b, map, mu_a, mu_b })
}

/// Exit code for an error, per the command-line contract.
pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::BlowUp(_) => 3,
        Error::Unsupported(_) => 4,
        Error::Irreducible(_) => 5,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in BUILTIN_SYSTEMS {
            assert!(matches!(load(name).unwrap(), Loaded::Full(_)), "{name}");
        }
        for name in BUILTIN_PAIRS {
            load_pair(name).unwrap();
        }
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = parse_document("{\n  \"space\": [1,\n", "x.json").unwrap_err();
        match err {
            Error::Json { line, .. } => assert!(line >= 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn degenerate_lagrangian_is_rejected() {
        let text = r#"{"space": {"coords": ["x", "y"], "box": {"q": [[-1,1],[-1,1]], "q_dot": [[-1,1],[-1,1]]}},
                       "lagrangian": "x_dot^2/2"}"#;
        let Document::System(f) = parse_document(text, "d").unwrap() else { panic!() };
        let err = build_system(&f, "d").unwrap_err();
        assert!(err.to_string().contains("hyperregularity failed"));
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn unknown_names_are_located() {
        let text = r#"{"space": {"coords": ["x"], "box": {"q": [[-1,1]], "q_dot": [[-1,1]]}},
                       "lagrangian": "x_dot^2/2", "force": ["y"]}"#;
        let Document::System(f) = parse_document(text, "d").unwrap() else { panic!() };
        let err = build_system(&f, "d").unwrap_err();
        assert!(err.to_string().starts_with("force"), "{err}");
    }

    #[test]
    fn reduced_file_round_trip() {
        let Loaded::Full(cf) = load("central_force").unwrap() else { panic!() };
        let (file, red) = reduce_to_file(&cf, &[1.0], ReductionKind::Point, ReduceOptions::default()).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let Document::Reduced(back) = parse_document(&text, "r").unwrap() else { panic!() };
        let loaded = build_reduced(&back.reduced).unwrap();
        assert_eq!(loaded.red.section(), red.section());
    }
}
