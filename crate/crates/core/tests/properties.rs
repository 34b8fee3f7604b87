//! Randomized properties, each checked against an independent oracle rather
//! than against the code under test.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softalign_core::checker::check_coverage;
use softalign_core::ir::{extract_ir, is_extracted_kind, ModelIR, UidPolicy};
use softalign_core::matcher::similarity::{name_similarity, tokenize};
use softalign_core::matcher::{merge_candidate_sets, propose_heuristic, MatchConfig, Weights};
use softalign_core::sysml::{bundled_library, parse_model, render_model, Element, Model};
use softalign_core::testkit::oracles::{check_coverage_case, end_kind_case};
use softalign_core::testkit::{candidate_between, random_coverage_case, random_model, random_pair};
use softalign_core::verifier::{
    detect_conflicts, verify_candidate, ConflictConfig, ConflictKind, Construct, Verdict,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- round trip

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_render_parse_is_structurally_stable(seed in any::<u64>()) {
        let model = random_model(&mut rng(seed));
        let text = render_model(&model);
        let reparsed = parse_model(&text, "again").map_err(|d| TestCaseError::fail(format!("{d}\n{text}")))?;
        prop_assert!(model.structurally_eq(&reparsed), "{}", text);
        prop_assert_eq!(render_model(&reparsed), text);
    }
}

// ---------------------------------------------------------------- extraction counts

fn count(el: &Element, total: &mut usize, extracted: &mut usize) {
    *total += 1;
    if is_extracted_kind(el.kind) {
        *extracted += 1;
    }
    for c in &el.children {
        count(c, total, extracted);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extraction_accounts_for_every_element(seed in any::<u64>()) {
        let model = random_model(&mut rng(seed));
        let (ir, report) = extract_ir(&model, &UidPolicy::derived("x-")).unwrap();
        let (mut total, mut extracted) = (0, 0);
        count(&model.root, &mut total, &mut extracted);
        prop_assert_eq!(report.total_ast_elements, total);
        prop_assert_eq!(report.extracted, extracted);
        prop_assert_eq!(ir.elements.len(), extracted);
        prop_assert!(report.is_complete());
        let uids: BTreeSet<&str> = ir.elements.iter().map(|e| e.uid.as_str()).collect();
        prop_assert_eq!(uids.len(), ir.elements.len());
    }
}

// ---------------------------------------------------------------- name similarity

/// Textbook dynamic-programming Levenshtein over chars.
fn levenshtein(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut row = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            row[j] = (prev[j] + 1).min(row[j - 1] + 1).min(prev[j - 1] + cost);
        }
        prev = row;
    }
    prev[b.len()]
}

/// Multiset Jaccard by explicit counting.
fn multiset_jaccard(a: &[String], b: &[String]) -> f64 {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in a {
        counts.entry(t).or_default().0 += 1;
    }
    for t in b {
        counts.entry(t).or_default().1 += 1;
    }
    let inter: usize = counts.values().map(|(x, y)| x.min(y)).sum();
    let union: usize = counts.values().map(|(x, y)| x.max(y)).sum();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn similarity_oracle(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokenize(a), tokenize(b));
    let (na, nb) = (ta.join(" "), tb.join(" "));
    let longest = na.chars().count().max(nb.chars().count());
    let edit = if longest == 0 {
        0.0
    } else {
        levenshtein(&na, &nb) as f64 / longest as f64
    };
    0.5 * multiset_jaccard(&ta, &tb) + 0.5 * (1.0 - edit)
}

#[test]
fn tokenizer_examples() {
    assert_eq!(
        tokenize("HTTPServer2_port"),
        ["http", "server", "2", "port"]
    );
    assert_eq!(tokenize("tempSensor"), ["temp", "sensor"]);
    assert_eq!(tokenize("temp-sensor  unit"), ["temp", "sensor", "unit"]);
}

#[test]
fn similarity_extremes() {
    assert_eq!(
        name_similarity("TemperatureSensor", "temperature_sensor"),
        1.0
    );
    // Disjoint tokens at maximal edit distance.
    assert_eq!(name_similarity("abc", "xyz"), 0.0);
}

proptest! {
    #[test]
    fn name_similarity_is_symmetric_bounded_and_matches_the_formula(
        a in "[A-Za-z][A-Za-z0-9_]{0,14}",
        b in "[A-Za-z][A-Za-z0-9_]{0,14}",
    ) {
        let (ab, ba) = (name_similarity(&a, &b), name_similarity(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - similarity_oracle(&a, &b)).abs() < 1e-12, "{} vs {}: {}", a, b, ab);
        prop_assert_eq!(name_similarity(&a, &a), 1.0);
    }
}

// ---------------------------------------------------------------- candidate merge

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn merge_is_a_max_confidence_union_with_exact_unmatched_lists(seed in any::<u64>()) {
        let (_, sir, _, tir) = random_pair(&mut rng(seed));
        let low = MatchConfig { threshold: 0.3, ..MatchConfig::default() };
        let other = MatchConfig {
            weights: Weights { name: 0.7, kind: 0.1, ports: 0.1, context: 0.1 },
            threshold: 0.4,
            ..MatchConfig::default()
        };
        let a = propose_heuristic(&sir, &tir, &low).unwrap();
        let b = propose_heuristic(&sir, &tir, &other).unwrap();
        let merged = merge_candidate_sets(&a, &b).unwrap();

        let mut expected: BTreeMap<(String, String), f64> = BTreeMap::new();
        for c in a.candidates.iter().chain(&b.candidates) {
            let e = expected.entry((c.source_uid.clone(), c.target_uid.clone())).or_insert(c.confidence);
            *e = e.max(c.confidence);
        }
        let got: BTreeMap<(String, String), f64> =
            merged.candidates.iter().map(|c| ((c.source_uid.clone(), c.target_uid.clone()), c.confidence)).collect();
        prop_assert_eq!(got.len(), merged.candidates.len(), "pairs are unique");
        prop_assert_eq!(&got, &expected);

        // Eligibility is identical under both configs, so the universe is the eligible set.
        let eligible = |ir: &ModelIR| -> Vec<String> {
            let mut v: Vec<String> = ir.elements.iter().filter(|e| low.is_eligible(e)).map(|e| e.uid.clone()).collect();
            v.sort();
            v
        };
        let src_used: BTreeSet<&String> = expected.keys().map(|(s, _)| s).collect();
        let tgt_used: BTreeSet<&String> = expected.keys().map(|(_, t)| t).collect();
        let want_s: Vec<String> = eligible(&sir).into_iter().filter(|u| !src_used.contains(u)).collect();
        let want_t: Vec<String> = eligible(&tir).into_iter().filter(|u| !tgt_used.contains(u)).collect();
        let mut got_s = merged.unmatched_source.clone();
        let mut got_t = merged.unmatched_target.clone();
        got_s.sort();
        got_t.sort();
        prop_assert_eq!(got_s, want_s);
        prop_assert_eq!(got_t, want_t);

        // Candidate order is confidence descending.
        prop_assert!(merged.candidates.windows(2).all(|w| w[0].confidence >= w[1].confidence));
    }
}

// ---------------------------------------------------------------- conflicts

const VOCABULARY: [&str; 4] = ["Alpha", "Beta", "Gamma", "Delta"];

/// A package whose members are definitions and usages drawn from a tiny
/// vocabulary, each wrapped in a uniquely named package chain of random
/// depth, so that shared local names (alias cycles) and depth differences
/// (abstraction mismatches) are common.
fn small_model(rng: &mut impl Rng, name: &str) -> Model {
    let mut text = format!("package {name} {{\n");
    for i in 0..rng.gen_range(2..8) {
        let depth = rng.gen_range(1..6);
        for d in 0..depth {
            text.push_str(&format!("package P{i}_{d} {{ "));
        }
        let word = VOCABULARY.choose(rng).unwrap();
        if rng.gen_bool(0.6) {
            text.push_str(&format!("part def {word};"));
        } else {
            text.push_str(&format!("part {}{i};", word.to_lowercase()));
        }
        text.push_str(&" }".repeat(depth));
        text.push('\n');
    }
    text.push_str("}\n");
    parse_model(&text, name).unwrap_or_else(|d| panic!("{d}\n{text}"))
}

fn local(q: &str) -> &str {
    q.rsplit("::").next().unwrap()
}

/// Conflicts recomputed by pairwise enumeration and explicit path search.
fn conflict_oracle(
    mappings: &[softalign_core::verifier::VerifiedMapping],
    limit: usize,
) -> BTreeSet<(ConflictKind, Vec<String>)> {
    let active: Vec<_> = mappings
        .iter()
        .filter(|m| match &m.verdict {
            Verdict::Pending | Verdict::Accepted => true,
            Verdict::Modified(t) => t != "FullyUnmatched",
            Verdict::Rejected => false,
        })
        .collect();
    let mut out = BTreeSet::new();
    for (kind, pick) in [
        (
            ConflictKind::OneToMany,
            (|m: &softalign_core::verifier::VerifiedMapping| m.candidate.source_uid.clone())
                as fn(&_) -> String,
        ),
        (
            ConflictKind::ManyToOne,
            |m: &softalign_core::verifier::VerifiedMapping| m.candidate.target_uid.clone(),
        ),
    ] {
        for m in &active {
            let mut members: Vec<String> = active
                .iter()
                .filter(|o| pick(o) == pick(m))
                .map(|o| o.id.clone())
                .collect();
            if members.len() >= 2 {
                members.sort();
                out.insert((kind, members));
            }
        }
    }
    for m in &active {
        let ds = m.candidate.source_qualified_name.split("::").count() - 1;
        let dt = m.candidate.target_qualified_name.split("::").count() - 1;
        if ds.abs_diff(dt) > limit {
            out.insert((ConflictKind::AbstractionMismatch, vec![m.id.clone()]));
        }
    }
    let aliases: Vec<_> = active
        .iter()
        .filter(|m| m.effective_construct() == Construct::AliasBinding)
        .collect();
    let n = aliases.len();
    let edge = |i: usize, j: usize| {
        i != j
            && local(&aliases[i].candidate.source_qualified_name)
                == local(&aliases[j].candidate.target_qualified_name)
    };
    // Floyd–Warshall closure.
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| edge(i, j)).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let mut members: Vec<String> = (0..n)
            .filter(|&j| j == i || (reach[i][j] && reach[j][i]))
            .map(|j| aliases[j].id.clone())
            .collect();
        if members.len() >= 2 {
            members.sort();
            out.insert((ConflictKind::CycleViaAlias, members));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conflicts_match_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = small_model(&mut r, "S");
        let t = small_model(&mut r, "T");
        let (sir, _) = extract_ir(&s, &UidPolicy::derived("s-")).unwrap();
        let (tir, _) = extract_ir(&t, &UidPolicy::derived("t-")).unwrap();
        let library = bundled_library();
        let mut mappings = Vec::new();
        let mut seen = BTreeSet::new();
        for _ in 0..r.gen_range(0..12) {
            let a = sir.elements.choose(&mut r).unwrap();
            let b = tir.elements.choose(&mut r).unwrap();
            if !seen.insert((a.uid.clone(), b.uid.clone())) {
                continue;
            }
            let mut m = verify_candidate(&candidate_between(&mut r, a, b), &sir, &tir, &library).unwrap();
            m.verdict = match r.gen_range(0..4) {
                0 => Verdict::Pending,
                1 => Verdict::Accepted,
                2 => Verdict::Rejected,
                _ => Verdict::Modified("FullyUnmatched".into()),
            };
            mappings.push(m);
        }
        let limit = r.gen_range(0..3);
        let report = detect_conflicts(&mappings, &ConflictConfig { depth_limit: limit });
        let got: BTreeSet<(ConflictKind, Vec<String>)> =
            report.conflicts.iter().map(|c| (c.kind, c.members.clone())).collect();
        prop_assert_eq!(got.len(), report.conflicts.len(), "no duplicate conflicts");
        prop_assert_eq!(got, conflict_oracle(&mappings, limit));
    }
}

// ---------------------------------------------------------------- coverage

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coverage_is_a_partition_of_the_eligible_set(seed in any::<u64>()) {
        let case = random_coverage_case(&mut rng(seed));
        prop_assert_eq!(check_coverage_case(&case), Ok(()));
    }
}

#[test]
fn coverage_extremes() {
    let mut case = random_coverage_case(&mut rng(7));
    while case.eligible_kinds.is_empty() {
        case = random_coverage_case(&mut rng(case.mappings.len() as u64 + 11));
    }
    case.mappings.clear();
    let report = check_coverage(
        &case.mappings,
        &case.source,
        &case.target,
        &case.eligible_kinds,
    );
    assert_eq!(
        report.source.unprocessed.len(),
        report.source.total_eligible
    );
    assert!(report.source.matched.is_empty() && report.target.matched.is_empty());
}

// ---------------------------------------------------------------- end-kind rule

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn no_path_allocates_a_definition(seed in any::<u64>()) {
        prop_assert!(end_kind_case(seed).is_ok(), "{:?}", end_kind_case(seed));
    }
}

/// Guards against vacuous properties: the seeded generators do reach alias
/// cycles, depth mismatches and every definition/usage end combination.
#[test]
fn generators_reach_the_interesting_cases() {
    let library = bundled_library();
    let mut kinds = BTreeSet::new();
    let mut combos = BTreeSet::new();
    for seed in 0..150u64 {
        let mut r = rng(seed);
        let s = small_model(&mut r, "S");
        let t = small_model(&mut r, "T");
        let (sir, _) = extract_ir(&s, &UidPolicy::derived("s-")).unwrap();
        let (tir, _) = extract_ir(&t, &UidPolicy::derived("t-")).unwrap();
        let mappings: Vec<_> = sir
            .elements
            .iter()
            .flat_map(|a| tir.elements.iter().map(move |b| (a, b)))
            .map(|(a, b)| {
                verify_candidate(
                    &candidate_between(&mut rng(seed), a, b),
                    &sir,
                    &tir,
                    &library,
                )
                .unwrap()
            })
            .collect();
        for c in detect_conflicts(&mappings, &ConflictConfig::default()).conflicts {
            kinds.insert(c.kind);
        }
        let (_, sir, _, tir) = random_pair(&mut r);
        for a in &sir.elements {
            for b in &tir.elements {
                combos.insert((
                    a.kind.is_definition(),
                    a.kind.is_usage(),
                    b.kind.is_definition(),
                    b.kind.is_usage(),
                ));
            }
        }
    }
    assert!(kinds.contains(&ConflictKind::CycleViaAlias), "{kinds:?}");
    assert!(
        kinds.contains(&ConflictKind::AbstractionMismatch),
        "{kinds:?}"
    );
    assert!(kinds.contains(&ConflictKind::OneToMany) && kinds.contains(&ConflictKind::ManyToOne));
    for combo in [
        (true, false, false, true),
        (false, true, true, false),
        (true, false, true, false),
        (false, true, false, true),
    ] {
        assert!(combos.contains(&combo), "missing {combo:?}");
    }
}
