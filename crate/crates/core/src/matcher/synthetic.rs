//! Seeded model pairs with known correspondences, for measuring matcher quality.
//!
//! Each pair is a generated source model and a transformed copy whose every
//! name is re-styled (camelCase, snake_case, PascalCase) and possibly has its
//! tokens permuted. Tiers add further perturbation:
//!
//! 1. rename only;
//! 2. rename plus restructuring (sub-packages nested one level deeper or
//!    flattened into the root);
//! 3. rename plus port perturbation (ports dropped, added or renamed).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sysml::{
    render_model, Direction, Element, ElementKind, Model, QualifiedName, RelationKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    RenameOnly = 1,
    Restructure = 2,
    PortPerturbation = 3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::RenameOnly, Tier::Restructure, Tier::PortPerturbation];
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub tier: Tier,
    pub source_text: String,
    pub target_text: String,
    /// Source qualified name → target qualified name, for every element that
    /// survives the transformation.
    pub ground_truth: BTreeMap<String, String>,
}

const QUALIFIERS: &[&str] = &[
    "primary",
    "secondary",
    "thermal",
    "pressure",
    "coolant",
    "signal",
    "power",
    "data",
    "control",
    "main",
    "backup",
    "analog",
    "digital",
    "front",
    "rear",
    "upper",
    "lower",
    "inner",
    "outer",
    "rapid",
    "ambient",
    "auxiliary",
    "reference",
    "remote",
];

const NOUNS: &[&str] = &[
    "sensor",
    "valve",
    "pump",
    "controller",
    "converter",
    "filter",
    "amplifier",
    "display",
    "housing",
    "bus",
    "link",
    "gauge",
    "probe",
    "actuator",
    "regulator",
    "monitor",
    "logger",
    "switch",
    "relay",
    "module",
    "reading",
    "sample",
    "voltage",
    "current",
    "frame",
    "mount",
];

const WORDS: &[&str] = &[
    "shall",
    "measure",
    "provide",
    "within",
    "range",
    "accuracy",
    "response",
    "temperature",
    "output",
    "input",
    "calibrated",
    "limit",
    "operate",
    "continuous",
];

struct NameSource {
    used: BTreeSet<BTreeSet<&'static str>>,
}

impl NameSource {
    /// Fresh token list whose token *set* was not handed out before.
    fn fresh(&mut self, rng: &mut impl Rng) -> Vec<&'static str> {
        loop {
            let mut tokens = vec![*QUALIFIERS.choose(rng).expect("non-empty")];
            if rng.gen_bool(0.3) {
                let q = *QUALIFIERS.choose(rng).expect("non-empty");
                if !tokens.contains(&q) {
                    tokens.push(q);
                }
            }
            tokens.push(*NOUNS.choose(rng).expect("non-empty"));
            let set: BTreeSet<&str> = tokens.iter().copied().collect();
            if self.used.insert(set) {
                return tokens;
            }
        }
    }
}

fn camel(tokens: &[&str]) -> String {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| if i == 0 { t.to_string() } else { capitalize(t) })
        .collect()
}

fn pascal(tokens: &[&str]) -> String {
    tokens.iter().map(|t| capitalize(t)).collect()
}

fn snake(tokens: &[&str]) -> String {
    tokens.join("_")
}

fn capitalize(t: &str) -> String {
    let mut c = t.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

fn sentence(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(4..8);
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The source model, plus the token list behind every name it uses.
struct Generated {
    root: Element,
    tokens: BTreeMap<String, Vec<&'static str>>,
}

struct Namer {
    source: NameSource,
    tokens: BTreeMap<String, Vec<&'static str>>,
}

impl Namer {
    fn name(&mut self, rng: &mut impl Rng, pascal_case: bool) -> String {
        let t = self.source.fresh(rng);
        let n = if pascal_case { pascal(&t) } else { camel(&t) };
        self.tokens.insert(n.clone(), t);
        n
    }
}

fn generate_source(rng: &mut impl Rng) -> Generated {
    let mut namer = Namer {
        source: NameSource {
            used: BTreeSet::new(),
        },
        tokens: BTreeMap::new(),
    };
    let mut root = Element::new(ElementKind::Package, Some(namer.name(rng, true)));

    // Interface vocabulary at the root so every nested scope sees it.
    let mut port_defs = Vec::new();
    for _ in 0..rng.gen_range(3..6) {
        let name = namer.name(rng, true);
        let mut def = Element::new(ElementKind::PortDef, Some(name.clone()));
        for _ in 0..rng.gen_range(1..3) {
            let mut item = Element::new(ElementKind::ItemUsage, Some(namer.name(rng, false)));
            item.direction = Some(
                *[Direction::In, Direction::Out]
                    .choose(rng)
                    .expect("non-empty"),
            );
            def.children.push(item);
        }
        port_defs.push(name);
        root.children.push(def);
    }

    for _ in 0..rng.gen_range(2..4) {
        let mut pkg = Element::new(ElementKind::Package, Some(namer.name(rng, true)));
        let mut part_defs = Vec::new();
        for _ in 0..rng.gen_range(2..5) {
            let name = namer.name(rng, true);
            let mut def = Element::new(ElementKind::PartDef, Some(name.clone()));
            for _ in 0..rng.gen_range(0..4) {
                let port = namer.name(rng, false);
                let ty = port_defs.choose(rng).expect("non-empty").clone();
                def.children.push(typed(ElementKind::PortUsage, port, ty));
            }
            part_defs.push(name);
            pkg.children.push(def);
        }
        for _ in 0..rng.gen_range(2..5) {
            let name = namer.name(rng, false);
            let ty = part_defs.choose(rng).expect("non-empty").clone();
            pkg.children.push(typed(ElementKind::PartUsage, name, ty));
        }
        for _ in 0..rng.gen_range(0..3) {
            let mut req = Element::new(ElementKind::RequirementUsage, Some(namer.name(rng, false)));
            req.doc = Some(sentence(rng));
            pkg.children.push(req);
        }
        root.children.push(pkg);
    }
    Generated {
        root,
        tokens: namer.tokens,
    }
}

fn typed(kind: ElementKind, name: String, ty: String) -> Element {
    Element::new(kind, Some(name)).with_relation(RelationKind::TypedBy, QualifiedName::single(ty))
}

fn restyle(tokens: &[&'static str], pascal_case: bool, rng: &mut impl Rng) -> String {
    let mut t = tokens.to_vec();
    if t.len() > 1 && rng.gen_bool(0.3) {
        t.reverse();
    }
    match (pascal_case, rng.gen_range(0..2)) {
        (true, 0) => pascal(&t),
        (true, _) => capitalize(&snake(&t)),
        (false, 0) => snake(&t),
        (false, _) => camel(&t),
    }
}

fn rename_tree(el: &Element, map: &BTreeMap<String, String>) -> Element {
    let mut out = el.clone();
    out.name = el
        .name
        .as_ref()
        .map(|n| map.get(n).cloned().unwrap_or_else(|| n.clone()));
    for rel in &mut out.relations {
        rel.target = QualifiedName::new(
            rel.target
                .segments()
                .iter()
                .map(|s| map.get(s).cloned().unwrap_or_else(|| s.clone()))
                .collect(),
        );
    }
    out.children = el.children.iter().map(|c| rename_tree(c, map)).collect();
    out
}

fn finish(mut root: Element) -> (Model, String) {
    let name = root.name.clone().expect("root is named");
    root.assign_qualified_names(QualifiedName::single(name));
    let model = Model::new(root, "synthetic.sysml", "");
    let text = render_model(&model);
    (model, text)
}

/// Qualified name of every named element, keyed by its source-side name.
/// Names are unique per model by construction, so the name is a stable
/// identity even when restructuring moves the element.
fn by_source_name(
    el: &Element,
    to_source: &BTreeMap<String, String>,
    out: &mut BTreeMap<String, String>,
) {
    if let Some(name) = &el.name {
        if let Some(id) = to_source.get(name) {
            out.insert(id.clone(), el.qualified_name.to_string());
        }
    }
    for c in &el.children {
        by_source_name(c, to_source, out);
    }
}

pub fn generate_pair(tier: Tier, rng: &mut impl Rng) -> SyntheticPair {
    let generated = generate_source(rng);
    let mut map = BTreeMap::new();
    for (name, tokens) in &generated.tokens {
        let pascal_case = name.chars().next().is_some_and(char::is_uppercase);
        map.insert(name.clone(), restyle(tokens, pascal_case, rng));
    }
    let mut target = rename_tree(&generated.root, &map);

    match tier {
        Tier::RenameOnly => {}
        Tier::Restructure => {
            let packages: Vec<usize> = target
                .children
                .iter()
                .enumerate()
                .filter(|(_, c)| c.kind == ElementKind::Package)
                .map(|(i, _)| i)
                .collect();
            let flatten = *packages.choose(rng).expect("at least two sub-packages");
            let mut wrapper = Element::new(ElementKind::Package, Some("Subsystems".to_string()));
            let mut kept = Vec::new();
            for (i, child) in std::mem::take(&mut target.children).into_iter().enumerate() {
                if i == flatten {
                    kept.extend(child.children);
                } else if packages.contains(&i) {
                    wrapper.children.push(child);
                } else {
                    kept.push(child);
                }
            }
            kept.push(wrapper);
            target.children = kept;
        }
        Tier::PortPerturbation => {
            let mut names = NameSource {
                used: generated
                    .tokens
                    .values()
                    .map(|t| t.iter().copied().collect())
                    .collect(),
            };
            let port_types: Vec<String> = target
                .children
                .iter()
                .filter(|c| c.kind == ElementKind::PortDef)
                .filter_map(|c| c.name.clone())
                .collect();
            for pkg in target
                .children
                .iter_mut()
                .filter(|c| c.kind == ElementKind::Package)
            {
                for def in pkg
                    .children
                    .iter_mut()
                    .filter(|c| c.kind == ElementKind::PartDef)
                {
                    match rng.gen_range(0..4) {
                        0 if !def.children.is_empty() => {
                            let i = rng.gen_range(0..def.children.len());
                            def.children.remove(i);
                        }
                        1 => {
                            let n = camel(&names.fresh(rng));
                            let ty = port_types.choose(rng).expect("non-empty").clone();
                            def.children.push(
                                Element::new(ElementKind::PortUsage, Some(n)).with_relation(
                                    RelationKind::TypedBy,
                                    QualifiedName::single(ty),
                                ),
                            );
                        }
                        2 if !def.children.is_empty() => {
                            let i = rng.gen_range(0..def.children.len());
                            let n = camel(&names.fresh(rng));
                            def.children[i].name = Some(n);
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    let (source_model, source_text) = finish(generated.root);
    let (target_model, target_text) = finish(target);

    let identity: BTreeMap<String, String> = map.keys().map(|k| (k.clone(), k.clone())).collect();
    let reverse: BTreeMap<String, String> =
        map.iter().map(|(k, v)| (v.clone(), k.clone())).collect();
    let mut src = BTreeMap::new();
    by_source_name(&source_model.root, &identity, &mut src);
    let mut tgt = BTreeMap::new();
    by_source_name(&target_model.root, &reverse, &mut tgt);
    let ground_truth = src
        .iter()
        .filter_map(|(id, sq)| tgt.get(id).map(|tq| (sq.clone(), tq.clone())))
        .collect();

    SyntheticPair {
        tier,
        source_text,
        target_text,
        ground_truth,
    }
}

/// `pairs_per_tier` pairs for each tier, all drawn from one seeded stream.
pub fn synthetic_corpus(seed: u64, pairs_per_tier: usize) -> Vec<SyntheticPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for tier in Tier::ALL {
        for _ in 0..pairs_per_tier {
            out.push(generate_pair(tier, &mut rng));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysml::parse_model;

    #[test]
    fn pairs_parse_and_ground_truth_points_at_real_elements() {
        for pair in synthetic_corpus(7, 2) {
            let s = parse_model(&pair.source_text, "s")
                .unwrap_or_else(|d| panic!("{d}\n{}", pair.source_text));
            let t = parse_model(&pair.target_text, "t")
                .unwrap_or_else(|d| panic!("{d}\n{}", pair.target_text));
            assert!(!pair.ground_truth.is_empty());
            for (sq, tq) in &pair.ground_truth {
                assert!(s.find(&sq.parse().unwrap()).is_some(), "{sq}");
                assert!(t.find(&tq.parse().unwrap()).is_some(), "{tq}");
            }
        }
    }

    #[test]
    fn corpus_is_seed_stable() {
        let a = synthetic_corpus(11, 1);
        let b = synthetic_corpus(11, 1);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.source_text, y.source_text);
            assert_eq!(x.target_text, y.target_text);
        }
    }
}
