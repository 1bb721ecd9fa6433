//! Per-logic inventory of tactics, parameters, probes and try-for budgets.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ast::{CmpOp, ParamValue, Predicate};
use super::LangError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TacticKind {
    Preprocessing,
    SolverWrapper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub candidates: Vec<ParamValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TacticSpec {
    pub name: String,
    pub kind: TacticKind,
    pub params: Vec<ParamSpec>,
}

impl TacticSpec {
    pub fn is_solver_wrapper(&self) -> bool {
        self.kind == TacticKind::SolverWrapper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Boolean,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub name: String,
    pub kind: ProbeKind,
    #[serde(default)]
    pub thresholds: Vec<i64>,
}

/// Operators emitted when enumerating numeric predicates for synthesis.
/// The parser accepts all six.
pub const SYNTHESIS_OPS: [CmpOp; 2] = [CmpOp::Gt, CmpOp::Le];

#[derive(Debug, Clone, PartialEq)]
pub struct TacticCatalog {
    pub logic: String,
    pub tactics: Vec<TacticSpec>,
    pub probes: Vec<ProbeSpec>,
    pub try_for_candidates: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    logic: String,
    tactics: Vec<TacticEntry>,
    #[serde(default)]
    probes: Vec<ProbeSpec>,
    #[serde(default)]
    try_for_ms: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TacticEntry {
    name: String,
    #[serde(default)]
    solver_wrapper: bool,
    #[serde(default)]
    params: Vec<ParamSpec>,
}

impl TacticCatalog {
    /// Validates and normalizes a catalog.
    ///
    /// Boolean parameters always get the candidates `[true, false]`;
    /// parameters left with fewer than two candidates are dropped.
    pub fn new(
        logic: impl Into<String>,
        tactics: Vec<TacticSpec>,
        probes: Vec<ProbeSpec>,
        try_for_candidates: Vec<u64>,
    ) -> Result<Self, LangError> {
        let logic = logic.into();
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(tactics.len());
        for mut t in tactics {
            if !seen.insert(t.name.clone()) {
                return Err(LangError::Catalog(format!("duplicate tactic `{}`", t.name)));
            }
            t.params = t.params.into_iter().filter_map(normalize_param).collect();
            normalized.push(t);
        }
        if !normalized.iter().any(TacticSpec::is_solver_wrapper) {
            return Err(LangError::Catalog(format!("catalog `{logic}` has no solver-wrapper tactic")));
        }
        let mut probe_names = HashSet::new();
        for p in &probes {
            if !probe_names.insert(p.name.as_str()) {
                return Err(LangError::Catalog(format!("duplicate probe `{}`", p.name)));
            }
            match p.kind {
                ProbeKind::Boolean if !p.thresholds.is_empty() => {
                    return Err(LangError::Catalog(format!("boolean probe `{}` has thresholds", p.name)))
                }
                ProbeKind::Numeric if p.thresholds.is_empty() => {
                    return Err(LangError::Catalog(format!("numeric probe `{}` has no thresholds", p.name)))
                }
                _ => {}
            }
        }
        if try_for_candidates.contains(&0) {
            return Err(LangError::Catalog("try-for candidates must be positive".into()));
        }
        Ok(TacticCatalog { logic, tactics: normalized, probes, try_for_candidates })
    }

    pub fn from_json(text: &str) -> Result<Self, LangError> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| LangError::Catalog(e.to_string()))?;
        let tactics = file
            .tactics
            .into_iter()
            .map(|t| TacticSpec {
                name: t.name,
                kind: if t.solver_wrapper { TacticKind::SolverWrapper } else { TacticKind::Preprocessing },
                params: t.params,
            })
            .collect();
        TacticCatalog::new(file.logic, tactics, file.probes, file.try_for_ms)
    }

    pub fn load(path: &Path) -> Result<Self, LangError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LangError::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            logic: self.logic.clone(),
            tactics: self
                .tactics
                .iter()
                .map(|t| TacticEntry {
                    name: t.name.clone(),
                    solver_wrapper: t.is_solver_wrapper(),
                    params: t.params.clone(),
                })
                .collect(),
            probes: self.probes.clone(),
            try_for_ms: self.try_for_candidates.clone(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    /// Fills empty try-for candidates with 1/16, 1/8, 1/4 and 1/2 of the
    /// evaluation timeout.
    pub fn with_default_try_for(mut self, timeout_ms: u64) -> Self {
        if self.try_for_candidates.is_empty() {
            let mut c: Vec<u64> = [16, 8, 4, 2]
                .iter()
                .map(|d| ((timeout_ms as f64) / (*d as f64)).round() as u64)
                .filter(|&ms| ms > 0)
                .collect();
            c.dedup();
            self.try_for_candidates = c;
        }
        self
    }

    pub fn tactic(&self, name: &str) -> Option<&TacticSpec> {
        self.tactics.iter().find(|t| t.name == name)
    }

    pub fn probe(&self, name: &str) -> Option<&ProbeSpec> {
        self.probes.iter().find(|p| p.name == name)
    }

    pub fn is_solver_wrapper(&self, name: &str) -> bool {
        self.tactic(name).is_some_and(TacticSpec::is_solver_wrapper)
    }

    pub fn solver_wrappers(&self) -> impl Iterator<Item = &TacticSpec> {
        self.tactics.iter().filter(|t| t.is_solver_wrapper())
    }

    pub fn preprocessing(&self) -> impl Iterator<Item = &TacticSpec> {
        self.tactics.iter().filter(|t| !t.is_solver_wrapper())
    }

    /// All boolean probes, then every numeric probe crossed with its
    /// thresholds and the synthesis operators.
    pub fn predicate_pool(&self) -> Vec<Predicate> {
        let mut out: Vec<Predicate> = self
            .probes
            .iter()
            .filter(|p| p.kind == ProbeKind::Boolean)
            .map(|p| Predicate::Probe(p.name.clone()))
            .collect();
        for p in self.probes.iter().filter(|p| p.kind == ProbeKind::Numeric) {
            for &c in &p.thresholds {
                for op in SYNTHESIS_OPS {
                    out.push(Predicate::Cmp { probe: p.name.clone(), op, constant: c });
                }
            }
        }
        out
    }

    /// Checks that every name used by the predicate exists with the right kind.
    pub fn check_predicate(&self, pred: &Predicate) -> Result<(), LangError> {
        let want = match pred {
            Predicate::Probe(_) => ProbeKind::Boolean,
            Predicate::Cmp { .. } => ProbeKind::Numeric,
        };
        match self.probe(pred.probe_name()) {
            Some(p) if p.kind == want => Ok(()),
            _ => Err(LangError::UnknownSymbol(pred.probe_name().to_string())),
        }
    }
}

fn normalize_param(mut p: ParamSpec) -> Option<ParamSpec> {
    if p.candidates.iter().any(|v| matches!(v, ParamValue::Bool(_))) {
        p.candidates = vec![ParamValue::Bool(true), ParamValue::Bool(false)];
    } else {
        let mut seen = HashSet::new();
        p.candidates.retain(|v| seen.insert(*v));
    }
    (p.candidates.len() >= 2).then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(probes: Vec<ProbeSpec>) -> TacticCatalog {
        TacticCatalog::new(
            "TEST",
            vec![TacticSpec { name: "smt".into(), kind: TacticKind::SolverWrapper, params: vec![] }],
            probes,
            vec![],
        )
        .unwrap()
    }

    fn numeric(name: &str, thresholds: &[i64]) -> ProbeSpec {
        ProbeSpec { name: name.into(), kind: ProbeKind::Numeric, thresholds: thresholds.to_vec() }
    }

    fn boolean(name: &str) -> ProbeSpec {
        ProbeSpec { name: name.into(), kind: ProbeKind::Boolean, thresholds: vec![] }
    }

    #[test]
    fn predicate_pool_single_threshold() {
        let c = catalog(vec![boolean("is-pb"), numeric("num-consts", &[100])]);
        let pool: Vec<String> = c.predicate_pool().iter().map(|p| p.to_string()).collect();
        assert_eq!(pool, ["is-pb", "(> num-consts 100)", "(<= num-consts 100)"]);
    }

    #[test]
    fn predicate_pool_empty() {
        assert!(catalog(vec![]).predicate_pool().is_empty());
    }

    #[test]
    fn predicate_pool_count_matches_enumeration() {
        let c = catalog(vec![numeric("a", &[1, 2, 3]), boolean("b"), numeric("c", &[4, 5, 6])]);
        // brute-force count: booleans + sum over numeric probes of |thresholds| * |ops|
        let mut expected = 0;
        for p in &c.probes {
            match p.kind {
                ProbeKind::Boolean => expected += 1,
                ProbeKind::Numeric => {
                    for _ in &p.thresholds {
                        for _ in SYNTHESIS_OPS {
                            expected += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(expected, 13);
        assert_eq!(c.predicate_pool().len(), expected);
    }

    #[test]
    fn rejects_catalog_without_solver_wrapper() {
        let err = TacticCatalog::new(
            "X",
            vec![TacticSpec { name: "simplify".into(), kind: TacticKind::Preprocessing, params: vec![] }],
            vec![],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn normalizes_params() {
        let c = TacticCatalog::from_json(
            r#"{"logic":"X","tactics":[
                {"name":"smt","solver_wrapper":true,"params":[{"name":"random_seed","candidates":[0]}]},
                {"name":"simplify","params":[{"name":"som","candidates":[true]},{"name":"max_degree","candidates":[16,32,64]}]}
            ]}"#,
        )
        .unwrap();
        assert!(c.tactic("smt").unwrap().params.is_empty());
        let simplify = c.tactic("simplify").unwrap();
        assert_eq!(simplify.params[0].candidates, vec![ParamValue::Bool(true), ParamValue::Bool(false)]);
        assert_eq!(simplify.params[1].candidates.len(), 3);
    }

    #[test]
    fn default_try_for_fractions() {
        let c = catalog(vec![]).with_default_try_for(10_000);
        assert_eq!(c.try_for_candidates, vec![625, 1250, 2500, 5000]);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(TacticCatalog::from_json(r#"{"logic":"X","tactics":[],"bogus":1}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = catalog(vec![boolean("is-pb"), numeric("size", &[10])]).with_default_try_for(1000);
        assert_eq!(TacticCatalog::from_json(&c.to_json()).unwrap(), c);
    }
}
