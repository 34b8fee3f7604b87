//! Stage 1: flat, order-stable summary of a model (the matcher's only input).

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_string};
use crate::sysml::ast::{Direction, Element, ElementKind, Model, QualifiedName, RelationKind};
use crate::sysml::resolve::resolve_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelIR {
    pub model_name: String,
    pub source_name: String,
    pub source_digest: String,
    pub elements: Vec<IrElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrElement {
    pub uid: String,
    pub name: Option<String>,
    pub qualified_name: String,
    pub kind: ElementKind,
    pub owner_uid: Option<String>,
    pub typed_by: Vec<String>,
    /// Specialization, subsetting and redefinition targets.
    pub specializes: Vec<String>,
    pub ports: Vec<IrPort>,
    pub attributes: Vec<IrAttribute>,
    pub doc: Option<String>,
    pub metadata_tags: Vec<String>,
}

/// An interface feature: a port usage, or any directed usage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrPort {
    pub name: String,
    pub direction: Option<Direction>,
    #[serde(rename = "type")]
    pub type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrAttribute {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedElement {
    pub qualified_name: String,
    pub reason: String,
}

/// Completeness accounting for one extraction: `extracted + skipped == total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub model_name: String,
    pub total_ast_elements: usize,
    pub extracted: usize,
    pub skipped: Vec<SkippedElement>,
}

impl ExtractionReport {
    pub fn is_complete(&self) -> bool {
        self.extracted + self.skipped.len() == self.total_ast_elements
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy")]
pub enum UidPolicy {
    /// `<prefix><12 hex of sha256(kind|qualified name)>`.
    Derived { prefix: String },
    /// User-supplied UIDs keyed by qualified name; unlisted elements get derived UIDs.
    Provided {
        prefix: String,
        uids: BTreeMap<String, String>,
    },
}

impl UidPolicy {
    pub fn derived(prefix: impl Into<String>) -> Self {
        UidPolicy::Derived {
            prefix: prefix.into(),
        }
    }

    fn prefix(&self) -> &str {
        match self {
            UidPolicy::Derived { prefix } | UidPolicy::Provided { prefix, .. } => prefix,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrError {
    #[error("uid `{uid}` is assigned to both `{first}` and `{second}`")]
    UidCollision {
        uid: String,
        first: String,
        second: String,
    },
    #[error("IR schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
}

pub fn derived_uid(prefix: &str, kind: ElementKind, qualified_name: &str) -> String {
    let digest = sha256_hex(format!("{kind}|{qualified_name}"));
    format!("{prefix}{}", &digest[..12])
}

/// Whether an AST element becomes an IR element (others are folded into their owner).
pub fn is_extracted_kind(kind: ElementKind) -> bool {
    kind == ElementKind::Package || kind.is_definition() || kind.is_usage()
}

pub fn extract_ir(
    model: &Model,
    policy: &UidPolicy,
) -> Result<(ModelIR, ExtractionReport), IrError> {
    let mut elements = Vec::new();
    let mut skipped = Vec::new();
    let mut total = 0usize;
    let mut assigned: HashMap<String, String> = HashMap::new();

    let mut stack: Vec<(&Element, Option<String>)> = vec![(&model.root, None)];
    while let Some((el, owner_uid)) = stack.pop() {
        total += 1;
        let qname = el.qualified_name.to_string();
        if !is_extracted_kind(el.kind) {
            skipped.push(SkippedElement {
                qualified_name: qname,
                reason: "folded".to_string(),
            });
            continue;
        }
        let uid = match policy {
            UidPolicy::Provided { uids, .. } if uids.contains_key(&qname) => uids[&qname].clone(),
            _ => derived_uid(policy.prefix(), el.kind, &qname),
        };
        if let Some(first) = assigned.insert(uid.clone(), qname.clone()) {
            return Err(IrError::UidCollision {
                uid,
                first,
                second: qname,
            });
        }
        let (ports, attributes) = features(model, el);
        elements.push(IrElement {
            uid: uid.clone(),
            name: el.name.clone(),
            qualified_name: qname,
            kind: el.kind,
            owner_uid,
            typed_by: el
                .targets(RelationKind::TypedBy)
                .map(ToString::to_string)
                .collect(),
            specializes: el
                .relations
                .iter()
                .filter(|r| {
                    matches!(
                        r.kind,
                        RelationKind::Specializes | RelationKind::Subsets | RelationKind::Redefines
                    )
                })
                .map(|r| r.target.to_string())
                .collect(),
            ports,
            attributes,
            doc: el.doc.clone(),
            metadata_tags: el.metadata_tags.clone(),
        });
        for child in el.children.iter().rev() {
            stack.push((child, Some(uid.clone())));
        }
    }

    let report = ExtractionReport {
        model_name: model.name().to_string(),
        total_ast_elements: total,
        extracted: elements.len(),
        skipped,
    };
    let ir = ModelIR {
        model_name: model.name().to_string(),
        source_name: model.source_name.clone(),
        source_digest: model.source_digest.clone(),
        elements,
    };
    Ok((ir, report))
}

/// Own interface features and attributes, then those inherited through typing
/// and specialization (resolved within the same model); own ones win by name.
fn features(model: &Model, el: &Element) -> (Vec<IrPort>, Vec<IrAttribute>) {
    let mut ports = Vec::new();
    let mut attributes = Vec::new();
    let mut visited = HashSet::new();
    collect_features(model, el, &mut ports, &mut attributes, &mut visited);
    (ports, attributes)
}

fn collect_features(
    model: &Model,
    el: &Element,
    ports: &mut Vec<IrPort>,
    attributes: &mut Vec<IrAttribute>,
    visited: &mut HashSet<QualifiedName>,
) {
    if !visited.insert(el.qualified_name.clone()) {
        return;
    }
    for child in &el.children {
        let Some(name) = child.name.clone() else {
            continue;
        };
        let type_name = child.target(RelationKind::TypedBy).map(ToString::to_string);
        if child.kind == ElementKind::PortUsage
            || (child.kind.is_usage() && child.direction.is_some())
        {
            if !ports.iter().any(|p: &IrPort| p.name == name) {
                ports.push(IrPort {
                    name,
                    direction: child.direction,
                    type_name,
                });
            }
        } else if child.kind == ElementKind::AttributeUsage
            && !attributes.iter().any(|a: &IrAttribute| a.name == name)
        {
            attributes.push(IrAttribute { name, type_name });
        }
    }
    let scope = el
        .qualified_name
        .parent()
        .unwrap_or_else(|| el.qualified_name.clone());
    for target in el
        .relations
        .iter()
        .filter(|r| matches!(r.kind, RelationKind::TypedBy | RelationKind::Specializes))
        .map(|r| &r.target)
    {
        if let Ok(resolved) = resolve_from(&[model], 0, &scope, target) {
            if resolved.element.kind.is_definition() {
                collect_features(model, resolved.element, ports, attributes, visited);
            }
        }
    }
}

pub fn ir_to_json(ir: &ModelIR) -> String {
    to_canonical_string(ir)
}

pub fn json_to_ir(text: &str) -> Result<ModelIR, IrError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let ir: ModelIR = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        IrError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    validate(&ir)?;
    Ok(ir)
}

fn validate(ir: &ModelIR) -> Result<(), IrError> {
    let mut seen: HashMap<&str, &str> = HashMap::new();
    for (i, el) in ir.elements.iter().enumerate() {
        if let Some(first) = seen.insert(&el.uid, &el.qualified_name) {
            return Err(IrError::UidCollision {
                uid: el.uid.clone(),
                first: first.to_string(),
                second: el.qualified_name.clone(),
            });
        }
        if let Some(owner) = &el.owner_uid {
            if !seen.contains_key(owner.as_str()) {
                return Err(IrError::Schema {
                    path: format!("elements[{i}].owner_uid"),
                    message: format!("owner `{owner}` does not precede this element"),
                });
            }
        }
    }
    Ok(())
}

impl ModelIR {
    pub fn get(&self, uid: &str) -> Option<&IrElement> {
        self.elements.iter().find(|e| e.uid == uid)
    }

    pub fn index(&self) -> HashMap<&str, &IrElement> {
        self.elements.iter().map(|e| (e.uid.as_str(), e)).collect()
    }
}

impl IrElement {
    /// Number of owners above this element (the root package has depth 0).
    pub fn depth(&self) -> usize {
        self.qualified_name.matches("::").count()
    }

    /// Qualified-name segments of the owners, root first.
    pub fn owner_chain(&self) -> Vec<&str> {
        let mut segments: Vec<&str> = self.qualified_name.split("::").collect();
        segments.pop();
        segments
    }

    pub fn local_name(&self) -> &str {
        self.qualified_name
            .rsplit("::")
            .next()
            .unwrap_or(&self.qualified_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysml::parse_model;

    fn ir_of(text: &str) -> (ModelIR, ExtractionReport) {
        let m = parse_model(text, "m.sysml").unwrap();
        extract_ir(&m, &UidPolicy::derived("m-")).unwrap()
    }

    #[test]
    fn minimal_model() {
        let (ir, report) = ir_of("package P { part def A; }");
        assert_eq!(ir.elements.len(), 2);
        assert_eq!(report.extracted, 2);
        assert!(report.is_complete());
        assert_eq!(
            ir.elements[1].owner_uid.as_deref(),
            Some(ir.elements[0].uid.as_str())
        );
        assert_eq!(ir.elements[0].owner_uid, None);
    }

    #[test]
    fn doc_is_carried() {
        let (ir, _) = ir_of("package P { part def S { doc /* temperature sensor */ } }");
        assert_eq!(ir.elements[1].doc.as_deref(), Some("temperature sensor"));
    }

    #[test]
    fn imports_aliases_comments_are_folded() {
        let (ir, report) =
            ir_of("package P { import Q::*; alias X for Q::Y; comment /* c */ part a; }");
        assert_eq!(ir.elements.len(), 2);
        assert_eq!(report.total_ast_elements, 5);
        assert_eq!(report.skipped.len(), 3);
        assert!(report.skipped.iter().all(|s| s.reason == "folded"));
    }

    #[test]
    fn ports_are_inherited_from_types() {
        let (ir, _) = ir_of(
            "package P {
                port def DataPort { out item reading : Reading; }
                part def Sensor { port dataOut : DataPort; attribute range : Real; }
                part s : Sensor;
                port p : DataPort;
            }",
        );
        let s = ir
            .elements
            .iter()
            .find(|e| e.qualified_name == "P::s")
            .unwrap();
        assert_eq!(
            s.ports,
            vec![IrPort {
                name: "dataOut".into(),
                direction: None,
                type_name: Some("DataPort".into())
            }]
        );
        assert_eq!(s.attributes.len(), 1);
        let p = ir
            .elements
            .iter()
            .find(|e| e.qualified_name == "P::p")
            .unwrap();
        assert_eq!(p.ports[0].direction, Some(Direction::Out));
    }

    #[test]
    fn provided_uids_win_and_collisions_fail() {
        let m = parse_model("package P { part def A; part def B; }", "m").unwrap();
        let mut uids = BTreeMap::new();
        uids.insert("P::A".to_string(), "UID-A".to_string());
        let (ir, _) = extract_ir(
            &m,
            &UidPolicy::Provided {
                prefix: "m-".into(),
                uids: uids.clone(),
            },
        )
        .unwrap();
        assert_eq!(ir.elements[1].uid, "UID-A");
        uids.insert("P::B".to_string(), "UID-A".to_string());
        let err = extract_ir(
            &m,
            &UidPolicy::Provided {
                prefix: "m-".into(),
                uids,
            },
        )
        .unwrap_err();
        assert!(matches!(err, IrError::UidCollision { .. }));
    }

    #[test]
    fn derived_uids_ignore_whitespace() {
        let (a, _) = ir_of("package P { part def A; }");
        let (b, _) = ir_of("package   P\n{\n\n  part   def A ;\n}\n");
        let ua: Vec<_> = a.elements.iter().map(|e| &e.uid).collect();
        let ub: Vec<_> = b.elements.iter().map(|e| &e.uid).collect();
        assert_eq!(ua, ub);
    }

    #[test]
    fn json_round_trip_and_schema_errors() {
        let (ir, _) = ir_of("package P { part def A { port p : D; } }");
        let json = ir_to_json(&ir);
        assert_eq!(json_to_ir(&json).unwrap(), ir);

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["elements"][1].as_object_mut().unwrap().remove("uid");
        let err = json_to_ir(&value.to_string()).unwrap_err();
        match err {
            IrError::Schema { path, message } => {
                assert_eq!(path, "elements[1]");
                assert!(message.contains("uid"), "{message}");
            }
            other => panic!("{other:?}"),
        }

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["elements"][0]["kind"] = "Widget".into();
        assert!(matches!(
            json_to_ir(&value.to_string()),
            Err(IrError::Schema { .. })
        ));
    }
}
