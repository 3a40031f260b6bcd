//! Random generators and independent reference implementations shared by
//! the rrt test suites.
//!
//! Two things live here:
//!
//! * [`value_tree`] — a proptest strategy producing canonical wire value
//!   documents of bounded depth, including aliasing back-references,
//!   reference cycles and embedded remote references;
//! * [`oracle_decide`] plus the rule/question generators — a deliberately
//!   naive linear-scan resolver used to cross-check the indexed policy
//!   store. It implements the documented contract (highest priority wins,
//!   more specific scope breaks ties) with none of the store's machinery.

use proptest::prelude::*;
use proptest::sample::Index;

use rrt::policy::{Depth, MethodKey, PassingMechanism, PolicyRule, RuleTarget};
use rrt::registry::{Guid, MethodSignature};
use rrt::remoteref::{RemoteObjectRef, RemoteTypeInfo};
use rrt::wire::Value;

// ── Name pools ──────────────────────────────────────────────────────────────
//
// Small pools on purpose: random rules and queries should collide often
// enough to exercise priorities and tie-breaking, not drown in misses.

pub const CLASSES: &[&str] = &["Pair", "Wrap", "Key", "Message", "Counter", "Node9"];
pub const FIELDS: &[&str] = &["a", "b", "x", "y", "next", "body"];
pub const METHODS: &[&str] = &["get", "route", "ping", "m0"];
pub const TYPES: &[&str] = &["i32", "i64", "f64", "bool", "text", "Pair", "Key"];

fn class_name() -> impl Strategy<Value = String> {
    proptest::sample::select(CLASSES).prop_map(str::to_string)
}

fn field_name() -> impl Strategy<Value = String> {
    proptest::sample::select(FIELDS).prop_map(str::to_string)
}

fn type_name() -> impl Strategy<Value = String> {
    proptest::sample::select(TYPES).prop_map(str::to_string)
}

pub fn method_key() -> impl Strategy<Value = MethodKey> {
    (
        class_name(),
        proptest::sample::select(METHODS).prop_map(str::to_string),
        proptest::collection::vec(type_name(), 0..3),
    )
        .prop_map(|(class_name, method_name, param_type_names)| MethodKey {
            class_name,
            method_name,
            param_type_names,
        })
}

// ── Wire value trees ────────────────────────────────────────────────────────

/// Blueprint for a value document. Aliases carry an abstract index that
/// [`realize`] maps onto whichever ids exist at that point, so every
/// generated document is valid by construction.
#[derive(Debug, Clone)]
pub enum Shape {
    Null,
    I32(i32),
    I64(i64),
    F64(f64),
    Bool(bool),
    Text(String),
    Struct { class: String, fields: Vec<(String, Shape)> },
    List { elem_class: String, items: Vec<Shape> },
    /// A back-reference to some earlier node (an alias, possibly forming
    /// a cycle when it lands on an ancestor). Realized as `Null` while no
    /// node has been numbered yet.
    Alias(Index),
    Ref(RemoteObjectRef),
}

fn text_content() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        // Plain words, the five escaped characters, and some unicode.
        "[a-z0-9 ]{1,12}",
        "[&<>'\"]{1,4}",
        "[\u{e9}\u{3b1}\u{4e16}]{1,4}",
    ]
}

fn method_signature() -> impl Strategy<Value = MethodSignature> {
    (
        proptest::sample::select(METHODS).prop_map(str::to_string),
        proptest::collection::vec(type_name(), 0..3),
        type_name(),
    )
        .prop_map(|(name, param_type_names, return_type_name)| MethodSignature {
            name,
            param_type_names,
            return_type_name,
        })
}

fn remote_ref() -> impl Strategy<Value = RemoteObjectRef> {
    (
        proptest::sample::select(&["127.0.0.1", "10.9.8.7", "peer.test"]),
        1..=u16::MAX,
        "[0-9a-f]{40}",
        class_name(),
        class_name(),
        prop_oneof![
            Just(None),
            proptest::collection::vec(method_signature(), 0..3).prop_map(Some),
        ],
    )
        .prop_map(|(host, port, guid, rt_name, real_class_name, methods)| RemoteObjectRef {
            host: host.to_string(),
            port,
            guid: Guid::parse(&guid).expect("generated guid"),
            remote_type: RemoteTypeInfo { name: format!("I{rt_name}"), methods },
            real_class_name,
            cached_fields: Vec::new(),
            cached_methods: Vec::new(),
            cached_values: Vec::new(),
        })
}

fn leaf_shape() -> impl Strategy<Value = Shape> {
    prop_oneof![
        2 => Just(Shape::Null),
        4 => any::<i32>().prop_map(Shape::I32),
        2 => any::<i64>().prop_map(Shape::I64),
        2 => any::<f64>().prop_map(Shape::F64),
        2 => any::<bool>().prop_map(Shape::Bool),
        4 => text_content().prop_map(Shape::Text),
        3 => any::<Index>().prop_map(Shape::Alias),
        2 => remote_ref().prop_map(Shape::Ref),
    ]
}

/// A strategy over blueprints nesting at most `max_depth` levels of
/// structure.
pub fn shape(max_depth: u32) -> impl Strategy<Value = Shape> {
    leaf_shape().prop_recursive(max_depth, 64, 4, |inner| {
        prop_oneof![
            (class_name(), proptest::collection::vec((field_name(), inner.clone()), 0..4))
                .prop_map(|(class, fields)| Shape::Struct { class, fields }),
            (type_name(), proptest::collection::vec(inner, 0..4))
                .prop_map(|(elem_class, items)| Shape::List { elem_class, items }),
        ]
    })
}

/// Numbers a blueprint into a canonical document: strict pre-order ids
/// from 1, aliases resolved against the ids assigned so far.
pub fn realize(shape: &Shape) -> Value {
    fn go(shape: &Shape, next: &mut u32, seen: &mut Vec<u32>) -> Value {
        match shape {
            Shape::Null => Value::Null,
            Shape::I32(v) => Value::i32(*v),
            Shape::I64(v) => Value::i64(*v),
            Shape::F64(v) => Value::f64(*v),
            Shape::Bool(v) => Value::bool(*v),
            Shape::Text(s) => Value::Text(s.clone()),
            Shape::Ref(r) => Value::Ref(r.clone()),
            Shape::Alias(ix) => {
                if seen.is_empty() {
                    Value::Null
                } else {
                    Value::BackRef(seen[ix.index(seen.len())])
                }
            }
            Shape::Struct { class, fields } => {
                let id = *next;
                *next += 1;
                seen.push(id);
                let fields = fields
                    .iter()
                    .map(|(name, child)| (name.clone(), go(child, next, seen)))
                    .collect();
                Value::Struct { class: class.clone(), id, fields }
            }
            Shape::List { elem_class, items } => {
                let id = *next;
                *next += 1;
                seen.push(id);
                let items = items.iter().map(|item| go(item, next, seen)).collect();
                Value::List { elem_class: elem_class.clone(), id, items }
            }
        }
    }
    go(shape, &mut 1, &mut Vec::new())
}

/// Canonical wire documents: at most `max_depth` nesting levels, ids in
/// strict pre-order, any aliasing the format allows (including cycles).
pub fn value_tree(max_depth: u32) -> impl Strategy<Value = Value> {
    shape(max_depth).prop_map(|s| realize(&s))
}

// ── Policy rules, questions and the reference resolver ─────────────────────

fn rule_target() -> impl Strategy<Value = RuleTarget> {
    prop_oneof![
        class_name().prop_map(|class_name| RuleTarget::Class { class_name }),
        method_key().prop_map(RuleTarget::Method),
        method_key().prop_map(RuleTarget::Return),
        (method_key(), 0u32..4).prop_map(|(method, index)| RuleTarget::Argument { method, index }),
    ]
}

/// One well-formed rule: depth bounds only ever appear on by-value
/// method/return/argument rules, exactly what the store accepts.
pub fn policy_rule() -> impl Strategy<Value = PolicyRule> {
    (rule_target(), any::<bool>(), proptest::option::of(0u32..4), -3..=3i32).prop_map(
        |(target, by_value, raw_depth, priority)| {
            let mechanism =
                if by_value { PassingMechanism::ByValue } else { PassingMechanism::ByReference };
            let class_scoped = matches!(target, RuleTarget::Class { .. });
            let depth = match raw_depth {
                Some(n) if by_value && !class_scoped => Depth::Bounded(n),
                _ => Depth::Unbounded,
            };
            PolicyRule { target, mechanism, depth, priority }
        },
    )
}

/// Up to `max` rules with no two sharing a (target, priority) slot — the
/// one configuration whose outcome is promised to be insertion-order
/// independent (a same-slot redeclaration deliberately replaces).
pub fn rule_set(max: usize) -> impl Strategy<Value = Vec<PolicyRule>> {
    proptest::collection::vec(policy_rule(), 0..=max).prop_map(|rules| {
        let mut seen = std::collections::HashSet::new();
        rules
            .into_iter()
            .filter(|r| seen.insert((format!("{:?}", r.target), r.priority)))
            .collect()
    })
}

/// One resolution question, as the marshaller would ask it.
#[derive(Debug, Clone)]
pub enum Question {
    Argument { method: MethodKey, index: u32, value_class: String },
    Return { method: MethodKey, value_class: String },
    Nested { value_class: String },
}

pub fn question() -> impl Strategy<Value = Question> {
    prop_oneof![
        (method_key(), 0u32..4, class_name()).prop_map(|(method, index, value_class)| {
            Question::Argument { method, index, value_class }
        }),
        (method_key(), class_name())
            .prop_map(|(method, value_class)| Question::Return { method, value_class }),
        class_name().prop_map(|value_class| Question::Nested { value_class }),
    ]
}

impl Question {
    /// The mechanism that applies when no rule matches.
    pub fn default_mechanism(&self) -> PassingMechanism {
        match self {
            Question::Nested { .. } => PassingMechanism::ByValue,
            _ => PassingMechanism::ByReference,
        }
    }
}

fn specificity(target: &RuleTarget) -> u8 {
    match target {
        RuleTarget::Class { .. } => 1,
        RuleTarget::Method(_) | RuleTarget::Return(_) => 2,
        RuleTarget::Argument { .. } => 3,
    }
}

fn applies(rule: &PolicyRule, q: &Question) -> bool {
    match (q, &rule.target) {
        (Question::Argument { method, index, .. }, RuleTarget::Argument { method: m, index: i }) => {
            m == method && i == index
        }
        (Question::Argument { method, .. }, RuleTarget::Method(m)) => m == method,
        (Question::Return { method, .. }, RuleTarget::Return(m)) => m == method,
        (
            Question::Argument { value_class, .. } | Question::Return { value_class, .. },
            RuleTarget::Class { class_name },
        ) => class_name == value_class,
        (Question::Nested { value_class }, RuleTarget::Class { class_name }) => {
            class_name == value_class
        }
        _ => false,
    }
}

/// Reference resolution: scan every rule, keep the applicable ones, pick
/// the winner by (priority, specificity). With rule sets from
/// [`rule_set`] the maximum is unique, so no further tie-breaking exists.
pub fn oracle_decide(rules: &[PolicyRule], q: &Question) -> (PassingMechanism, Option<PolicyRule>) {
    let winner = rules
        .iter()
        .filter(|r| applies(r, q))
        .max_by_key(|r| (r.priority, specificity(&r.target)));
    match winner {
        Some(rule) => (rule.mechanism, Some(rule.clone())),
        None => (q.default_mechanism(), None),
    }
}
