//! Seeded generator of random, structurally valid models for round-trip testing.

use rand::seq::SliceRandom;
use rand::Rng;

use super::ast::{Direction, Element, ElementKind, Model, QualifiedName, RelationKind, Visibility};
use super::render::render_model;

const WORDS: &[&str] = &[
    "sensor",
    "valve",
    "pump",
    "data",
    "signal",
    "power",
    "supply",
    "controller",
    "unit",
    "frame",
    "bus",
    "temp",
    "pressure",
    "flow",
    "gauge",
    "module",
    "link",
    "cable",
    "probe",
    "display",
    "housing",
];

fn word(rng: &mut impl Rng) -> &'static str {
    WORDS.choose(rng).expect("non-empty")
}

fn identifier(rng: &mut impl Rng) -> String {
    let parts = rng.gen_range(1..=3);
    let mut name = String::new();
    for i in 0..parts {
        let w = word(rng);
        match rng.gen_range(0..3) {
            0 if i > 0 => {
                name.push('_');
                name.push_str(w);
            }
            1 => {
                let mut c = w.chars();
                let first = c.next().expect("non-empty").to_ascii_uppercase();
                name.push(first);
                name.push_str(c.as_str());
            }
            _ => name.push_str(w),
        }
    }
    if rng.gen_bool(0.2) {
        name.push_str(&rng.gen_range(1..100).to_string());
    }
    name
}

fn qualified(rng: &mut impl Rng) -> QualifiedName {
    let len = rng.gen_range(1..=3);
    QualifiedName::new((0..len).map(|_| identifier(rng)).collect())
}

fn text(rng: &mut impl Rng) -> String {
    let lines = if rng.gen_bool(0.2) { 2 } else { 1 };
    (0..lines)
        .map(|_| {
            let n = rng.gen_range(1..6);
            (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

struct Names {
    used: Vec<String>,
}

impl Names {
    fn fresh(&mut self, rng: &mut impl Rng) -> String {
        loop {
            let name = identifier(rng);
            if !self.used.contains(&name) {
                self.used.push(name.clone());
                return name;
            }
        }
    }
}

const DEFS: &[ElementKind] = &[
    ElementKind::PartDef,
    ElementKind::PortDef,
    ElementKind::AttributeDef,
    ElementKind::ItemDef,
    ElementKind::RequirementDef,
    ElementKind::InterfaceDef,
    ElementKind::MetadataDef,
];

const USAGES: &[ElementKind] = &[
    ElementKind::PartUsage,
    ElementKind::PortUsage,
    ElementKind::AttributeUsage,
    ElementKind::ItemUsage,
    ElementKind::RequirementUsage,
];

fn usage(rng: &mut impl Rng, names: &mut Names, depth: usize) -> Element {
    let kind = *USAGES.choose(rng).expect("non-empty");
    let mut el = Element::new(kind, Some(names.fresh(rng)));
    if rng.gen_bool(0.7) {
        el = el.with_relation(RelationKind::TypedBy, qualified(rng));
    }
    if rng.gen_bool(0.2) {
        el = el.with_relation(RelationKind::Subsets, qualified(rng));
    }
    if rng.gen_bool(0.1) {
        el = el.with_relation(RelationKind::Redefines, qualified(rng));
    }
    if rng.gen_bool(0.2) {
        el.metadata_tags.push(identifier(rng));
    }
    if rng.gen_bool(0.2) {
        el.direction = Some(
            *[Direction::In, Direction::Out, Direction::InOut]
                .choose(rng)
                .expect("non-empty"),
        );
    }
    el.is_end = rng.gen_bool(0.05);
    if rng.gen_bool(0.15) {
        el.multiplicity = Some(
            ["1", "0..1", "*", "1..*", "4"]
                .choose(rng)
                .expect("non-empty")
                .to_string(),
        );
    }
    if rng.gen_bool(0.1) {
        el.short_name = Some(names.fresh(rng));
    }
    if rng.gen_bool(0.2) {
        el.doc = Some(text(rng));
    }
    if depth < 3 && rng.gen_bool(0.2) {
        el.children = members(rng, depth + 1, false);
    }
    el
}

fn members(rng: &mut impl Rng, depth: usize, in_package: bool) -> Vec<Element> {
    let mut names = Names { used: Vec::new() };
    let count = rng.gen_range(0..if depth == 0 { 8 } else { 5 });
    let mut out = Vec::new();
    for _ in 0..count {
        let el = match rng.gen_range(0..12) {
            0 if in_package && depth < 3 => {
                let mut p = Element::new(ElementKind::Package, Some(names.fresh(rng)));
                p.children = members(rng, depth + 1, true);
                if rng.gen_bool(0.3) {
                    p.doc = Some(text(rng));
                }
                p
            }
            1 | 2 => {
                let kind = *DEFS.choose(rng).expect("non-empty");
                let mut d = Element::new(kind, Some(names.fresh(rng)));
                if rng.gen_bool(0.3) {
                    d = d.with_relation(RelationKind::Specializes, qualified(rng));
                }
                if rng.gen_bool(0.1) {
                    d.short_name = Some(names.fresh(rng));
                }
                if rng.gen_bool(0.3) {
                    d.doc = Some(text(rng));
                }
                if depth < 3 {
                    d.children = members(rng, depth + 1, false);
                }
                d
            }
            3 if in_package => {
                let mut i = Element::new(ElementKind::Import, None)
                    .with_relation(RelationKind::ImportTarget, qualified(rng));
                i.visibility = Some(if rng.gen_bool(0.5) {
                    Visibility::Public
                } else {
                    Visibility::Private
                });
                i.wildcard = rng.gen_bool(0.5);
                i
            }
            4 => Element::new(ElementKind::Alias, Some(names.fresh(rng)))
                .with_relation(RelationKind::AliasTarget, qualified(rng)),
            5 => {
                let mut c = Element::new(ElementKind::Comment, None);
                if rng.gen_bool(0.5) {
                    c = c.with_relation(RelationKind::CommentAbout, qualified(rng));
                }
                if rng.gen_bool(0.2) {
                    c.name = Some(names.fresh(rng));
                }
                c.text = Some(text(rng));
                c
            }
            6 => {
                let name = rng.gen_bool(0.5).then(|| names.fresh(rng));
                let mut a = Element::new(ElementKind::AllocationUsage, name);
                if rng.gen_bool(0.2) {
                    a = a.with_relation(RelationKind::TypedBy, qualified(rng));
                }
                if rng.gen_bool(0.5) {
                    a.metadata_tags.push(identifier(rng));
                }
                a.with_relation(RelationKind::AllocatedFrom, qualified(rng))
                    .with_relation(RelationKind::AllocatedTo, qualified(rng))
            }
            7 => {
                let name = rng.gen_bool(0.5).then(|| names.fresh(rng));
                let mut c = Element::new(ElementKind::ConnectionUsage, name);
                if rng.gen_bool(0.3) {
                    c = c.with_relation(RelationKind::TypedBy, qualified(rng));
                }
                c.with_relation(RelationKind::ConnectEnd, qualified(rng))
                    .with_relation(RelationKind::ConnectEnd, qualified(rng))
            }
            _ => usage(rng, &mut names, depth),
        };
        out.push(el);
    }
    out
}

/// A random valid model. Its rendering parses back to an equal structure.
pub fn random_model(rng: &mut impl Rng) -> Model {
    let name = identifier(rng);
    let mut root = Element::new(ElementKind::Package, Some(name.clone()));
    root.children = members(rng, 0, true);
    if rng.gen_bool(0.3) {
        root.doc = Some(text(rng));
    }
    root.assign_qualified_names(QualifiedName::single(name));
    let mut model = Model::new(root, "generated.sysml", "");
    let text = render_model(&model);
    model.source_digest = super::ast::digest_source(&text);
    model
}
