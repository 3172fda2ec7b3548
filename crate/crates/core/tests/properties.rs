mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tooldc::evalharness::{ast_match, inject_noise, EvalInstance};
use tooldc::grouping::{build_plan, GroupingConfig};
use tooldc::retrieval::{bm25_rank, Bm25Params, RankedTools};
use tooldc::{
    parse_invocations, serialize_invocations, ParamSpec, ParamType, ToolDefinition, ToolLibrary,
};

fn library(names: &[String], words: &[Vec<String>]) -> ToolLibrary {
    let tools = names
        .iter()
        .zip(words)
        .map(|(n, w)| {
            ToolDefinition::new(
                n.clone(),
                w.join(" "),
                vec![ParamSpec::new("x", ParamType::String, true)],
            )
            .unwrap()
        })
        .collect();
    ToolLibrary::new(tools).unwrap()
}

fn arb_library(max: usize) -> impl Strategy<Value = ToolLibrary> {
    proptest::collection::btree_set("[a-z]{2,8}", 1..max).prop_flat_map(|names| {
        let names: Vec<String> = names.into_iter().collect();
        let n = names.len();
        proptest::collection::vec(
            proptest::collection::vec("(alpha|beta|gamma|delta|eps|[a-z]{2,5})", 0..8),
            n,
        )
        .prop_map(move |words| library(&names, &words))
    })
}

fn ranked(n: usize, seed: u64) -> RankedTools {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    RankedTools::from_scores(
        order
            .iter()
            .enumerate()
            .map(|(rank, &p)| (p, (n - rank) as f64)),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialized_calls_parse_back(list in arb_invocations()) {
        prop_assume!(!list.is_null());
        let text = serialize_invocations(&list);
        let back = parse_invocations(&text).into_calls().expect("canonical text parses");
        prop_assert!(back.coerced_eq(&list));
        prop_assert_eq!(serialize_invocations(&back), text);
    }

    #[test]
    fn parser_never_panics(raw in any::<String>()) {
        if let Some(list) = parse_invocations(&raw).into_calls() {
            let again = serialize_invocations(&list);
            let reparsed = parse_invocations(&again).into_calls().unwrap();
            prop_assert_eq!(serialize_invocations(&reparsed), again);
        }
    }

    #[test]
    fn call_shaped_noise_never_panics(raw in r#"\[?[a-z_.]{0,6}\(?([a-z]{0,3}=?("[^"]{0,4}"?|[0-9.eE+-]{0,6}|True|None|\[|\{|\}|\]|, ?)){0,6}\)?\]?"#) {
        let _ = parse_invocations(&raw);
    }

    #[test]
    fn groups_cover_the_library(n in 1usize..80, k in 1usize..9, seed in any::<u64>(), cap in proptest::option::of(2usize..12)) {
        let plan = build_plan(&ranked(n, seed), n, &GroupingConfig { k, max_group_size: cap });
        let k_eff = k.min(n);
        prop_assert_eq!(plan.groups.len(), k_eff + 1);
        prop_assert_eq!(&plan.groups[0].members, &plan.t_top);
        prop_assert_eq!(plan.t_top.len() + plan.t_tail.len(), n);

        let mut tail_seen = Vec::new();
        for (j, g) in plan.groups[1..].iter().enumerate() {
            prop_assert_eq!(g.anchor, Some(plan.t_top[j]));
            prop_assert_eq!(g.members[0], plan.t_top[j]);
            if let Some(cap) = cap {
                prop_assert!(g.members.len() <= cap.max(1));
            }
            tail_seen.extend_from_slice(g.distractors());
        }
        let mut sorted = tail_seen.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), tail_seen.len(), "chunks are disjoint");
        if cap.is_none() {
            prop_assert_eq!(&tail_seen, &plan.t_tail, "chunks tile the tail in rank order");
            let sizes: Vec<usize> = plan.groups[1..].iter().map(|g| g.members.len()).collect();
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
        }
    }

    #[test]
    fn bm25_scores_are_nonnegative_and_ranking_total(lib in arb_library(20), query in "[a-z ]{0,30}") {
        let r = bm25_rank(&query, &lib, Bm25Params::default()).unwrap();
        let mut seen: Vec<usize> = r.positions().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..lib.len()).collect::<Vec<_>>());
        let oracle = oracle_bm25(&query, &lib);
        prop_assert!(oracle.iter().all(|s| *s >= 0.0));
        for e in &r.entries {
            prop_assert!((e.score - oracle[e.position]).abs() < 1e-9);
        }
        for w in r.entries.windows(2) {
            prop_assert!(oracle[w[0].position] >= oracle[w[1].position] - 1e-9);
        }
    }

    #[test]
    fn bm25_follows_the_tool_not_its_position(lib in arb_library(16), query in "(alpha|beta|gamma|[a-z]{2,4})( (alpha|beta|delta|[a-z]{2,4})){0,4}", seed in any::<u64>()) {
        let before = bm25_rank(&query, &lib, Bm25Params::default()).unwrap();
        let mut order: Vec<usize> = (0..lib.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = lib.subset(&order);
        let after = bm25_rank(&query, &shuffled, Bm25Params::default()).unwrap();
        let score_of = |r: &RankedTools, lib: &ToolLibrary| {
            let mut v: Vec<(String, u64)> = r
                .entries
                .iter()
                .map(|e| (lib.tools()[e.position].name.clone(), e.score.to_bits()))
                .collect();
            v.sort();
            v
        };
        let a = score_of(&before, &lib);
        let b = score_of(&after, &shuffled);
        prop_assert_eq!(a.len(), b.len());
        for ((na, sa), (nb, sb)) in a.iter().zip(&b) {
            prop_assert_eq!(na, nb);
            prop_assert!((f64::from_bits(*sa) - f64::from_bits(*sb)).abs() < 1e-9);
        }
    }

    #[test]
    fn injection_keeps_original_tools_in_order(extra in 0usize..40, seed in any::<u64>()) {
        let base = library(
            &["alpha".into(), "beta".into(), "gamma".into()],
            &[vec![], vec![], vec![]],
        );
        let pool_names: Vec<String> = (0..40).map(|i| format!("pool_{i}")).chain(["beta".to_string()]).collect();
        let pool = library(&pool_names, &vec![vec![]; pool_names.len()]);
        let inst = EvalInstance {
            id: "x".into(),
            category: "simple".into(),
            query: "q".into(),
            library: base.clone(),
            golden: vec![],
            answers: vec![],
        };
        let target = 3 + extra;
        let out = inject_noise(&inst, &pool, target, seed).unwrap();
        prop_assert_eq!(out.library.len(), target);
        let kept: Vec<&str> = out.library.names().filter(|n| base.contains(n)).collect();
        prop_assert_eq!(kept, vec!["alpha", "beta", "gamma"]);
        prop_assert_eq!(inject_noise(&inst, &pool, target, seed).unwrap(), out);
    }

    #[test]
    fn ast_match_ignores_call_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (pred, spec) = gen_ast_fixture(&mut r);
        let expected = oracle_ast_match(Some(&pred), &spec);
        prop_assert_eq!(ast_match(Some(&pred), &spec), expected);
        let mut calls = pred.calls.clone();
        calls.shuffle(&mut r);
        let shuffled = tooldc::InvocationList::new(calls);
        prop_assert_eq!(ast_match(Some(&shuffled), &spec), expected);
    }
}
