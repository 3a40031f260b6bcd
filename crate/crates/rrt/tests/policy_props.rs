//! Policy-store properties: resolution agrees with a naive linear scan,
//! outcomes never depend on insertion order, every resolution is counted,
//! and the canonical policy file round-trips byte-stably.

use proptest::prelude::*;
use rrt::policy::{Decision, FieldCacheRule, MethodCacheRule, PolicyRule, PolicyStore};
use rrt::registry::MethodSignature;
use rrt_testkit::{oracle_decide, question, rule_set, Question, CLASSES, FIELDS, METHODS, TYPES};

fn store_with(rules: &[PolicyRule]) -> PolicyStore {
    let store = PolicyStore::new();
    for rule in rules {
        store.set_rule(rule.clone()).expect("generated rules are well-formed");
    }
    store
}

fn decide(store: &PolicyStore, q: &Question) -> Decision {
    match q {
        Question::Argument { method, index, value_class } => {
            store.resolve_argument(method, *index, value_class)
        }
        Question::Return { method, value_class } => store.resolve_return(method, value_class),
        Question::Nested { value_class } => store.resolve_nested(value_class),
    }
}

fn name_from(pool: &'static [&'static str]) -> impl Strategy<Value = String> {
    proptest::sample::select(pool).prop_map(str::to_string)
}

fn field_cache_rule() -> impl Strategy<Value = FieldCacheRule> {
    (name_from(CLASSES), name_from(FIELDS), proptest::option::of(name_from(FIELDS))).prop_map(
        |(class_name, field, setter)| FieldCacheRule {
            getter_name: format!("get_{field}"),
            setter_name: setter.map(|s| format!("set_{s}")),
            class_name,
            field,
        },
    )
}

// The policy file carries no return types for cached methods, so only
// signatures without one survive a round trip unchanged.
fn method_cache_rule() -> impl Strategy<Value = MethodCacheRule> {
    (
        name_from(CLASSES),
        name_from(METHODS),
        proptest::collection::vec(name_from(TYPES), 0..3),
    )
        .prop_map(|(class_name, name, param_type_names)| MethodCacheRule {
            class_name,
            method: MethodSignature { name, param_type_names, return_type_name: String::new() },
        })
}

proptest! {
    #[test]
    fn the_store_agrees_with_a_linear_scan(
        rules in rule_set(20),
        questions in proptest::collection::vec(question(), 1..40),
    ) {
        let store = store_with(&rules);
        let before = store.evaluation_count();
        for q in &questions {
            let decision = decide(&store, q);
            let (mechanism, winner) = oracle_decide(&rules, q);
            prop_assert_eq!(decision.mechanism, mechanism, "question: {:?}", q);
            prop_assert_eq!(decision.winner, winner, "question: {:?}", q);
        }
        // Every question costs exactly one counted resolution.
        prop_assert_eq!(store.evaluation_count() - before, questions.len() as u64);
    }

    #[test]
    fn insertion_order_is_irrelevant(
        (rules, reordered) in rule_set(20)
            .prop_flat_map(|r| (Just(r.clone()), Just(r).prop_shuffle())),
        questions in proptest::collection::vec(question(), 1..30),
    ) {
        let a = store_with(&rules);
        let b = store_with(&reordered);
        for q in &questions {
            prop_assert_eq!(decide(&a, q), decide(&b, q), "question: {:?}", q);
        }
    }

    #[test]
    fn the_policy_file_round_trips(
        rules in rule_set(20),
        fields in proptest::collection::vec(field_cache_rule(), 0..4),
        methods in proptest::collection::vec(method_cache_rule(), 0..4),
    ) {
        let store = store_with(&rules);
        for rule in &fields {
            store.set_field_cache(rule.clone());
        }
        for rule in &methods {
            store.set_method_cache(rule.clone());
        }
        let saved = store.save();
        let loaded = PolicyStore::new();
        loaded.load(&saved).expect("a store's own save output loads");
        prop_assert_eq!(loaded.transmission_rules(), store.transmission_rules());
        prop_assert_eq!(loaded.field_cache_rules(), store.field_cache_rules());
        prop_assert_eq!(loaded.method_cache_rules(), store.method_cache_rules());
        prop_assert_eq!(loaded.save(), saved);
    }
}
