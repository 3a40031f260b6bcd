//! Transmission policy: the rules deciding how object graphs cross
//! runtime boundaries.
//!
//! Whenever an object is about to be marshalled, the runtime asks this
//! store whether to pass it **by value** (serialize its state) or **by
//! reference** (expose it and send a remote reference). Rules target four
//! scopes, from broadest to most specific:
//!
//! * **class** — any value of a class, wherever it appears;
//! * **method** — every argument of one specific method;
//! * **return** — the return value of one specific method;
//! * **argument** — one positional argument of one specific method.
//!
//! Each rule carries an `i32` priority (larger wins). Between rules of
//! equal priority the more specific scope wins: argument over method over
//! class, and return over class. Ties cannot remain after that, because
//! at most one rule per scope participates (per target, the store keeps
//! one rule per priority and consults only the strongest). The outcome of
//! resolution therefore never depends on the order rules were added in.
//!
//! Method-scoped targets name the *implementation class* of the object
//! the method is invoked on, together with the exact overload; class
//! rules name the implementation class of the value being passed.
//!
//! By-value rules may bound how deep the copy reaches: a depth of `n`
//! serializes `n` levels of nested structures, and anything deeper is
//! passed by reference instead. Depth attaches to method/return/argument
//! rules only — a class rule always applies in full.
//!
//! Two further rule kinds do not steer marshalling but declare cacheable
//! members, picked up when a reference to an instance of the class is
//! produced: **field-cache** (a field plus its accessor names, shipped
//! with a value snapshot) and **method-cache** (a method the receiver may
//! run locally). They have no priority; re-declaring one replaces it in
//! place, and declaration order is preserved on the wire.
//!
//! The whole store can be saved to and loaded from a canonical XML file:
//!
//! ```xml
//! <policy>
//!   <rule kind="class" class="Key" mechanism="by-value" priority="10"/>
//!   <rule kind="argument" class="P2PNode" method="route" sig="Key,Message"
//!         arg="1" mechanism="by-value" depth="2" priority="5"/>
//!   <rule kind="field-cache" class="P2PNode" field="key" getter="getKey"/>
//! </policy>
//! ```

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use thiserror::Error;

use crate::registry::MethodSignature;
use crate::wire::xml::{XmlReader, XmlWriter};

/// Policy failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    /// The rule is internally inconsistent (e.g. a class rule with a
    /// depth bound, or a depth-bounded by-reference rule).
    #[error("malformed rule: {0}")]
    MalformedRule(String),
    /// A policy file does not conform to the grammar.
    #[error("malformed policy file: {0}")]
    MalformedFile(String),
}

/// How a value crosses the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassingMechanism {
    ByValue,
    ByReference,
}

impl PassingMechanism {
    pub fn name(self) -> &'static str {
        match self {
            PassingMechanism::ByValue => "by-value",
            PassingMechanism::ByReference => "by-reference",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "by-value" => Some(PassingMechanism::ByValue),
            "by-reference" => Some(PassingMechanism::ByReference),
            _ => None,
        }
    }
}

/// How many levels of nested structure a by-value transmission copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Unbounded,
    Bounded(u32),
}

impl Depth {
    pub fn decremented(self) -> Depth {
        match self {
            Depth::Unbounded => Depth::Unbounded,
            Depth::Bounded(n) => Depth::Bounded(n.saturating_sub(1)),
        }
    }

    /// True when no further level may be copied by value.
    pub fn exhausted(self) -> bool {
        matches!(self, Depth::Bounded(0))
    }
}

/// Identifies one method overload on one implementation class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodKey {
    pub class_name: String,
    pub method_name: String,
    pub param_type_names: Vec<String>,
}

impl MethodKey {
    pub fn new<S: AsRef<str>>(class_name: &str, method_name: &str, params: &[S]) -> MethodKey {
        MethodKey {
            class_name: class_name.to_string(),
            method_name: method_name.to_string(),
            param_type_names: params.iter().map(|p| p.as_ref().to_string()).collect(),
        }
    }

    pub fn of(class_name: &str, sig: &MethodSignature) -> MethodKey {
        MethodKey {
            class_name: class_name.to_string(),
            method_name: sig.name.clone(),
            param_type_names: sig.param_type_names.clone(),
        }
    }

    /// `Class#name(p1,p2)`.
    pub fn canonical(&self) -> String {
        format!(
            "{}#{}({})",
            self.class_name,
            self.method_name,
            self.param_type_names.join(",")
        )
    }
}

/// What one transmission rule applies to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleTarget {
    /// Values of this implementation class, anywhere.
    Class { class_name: String },
    /// Every argument of this method.
    Method(MethodKey),
    /// The return value of this method.
    Return(MethodKey),
    /// One positional argument of this method.
    Argument { method: MethodKey, index: u32 },
}

impl RuleTarget {
    /// Specificity rank for tie-breaking at equal priority. Argument and
    /// return rules never compete (different resolution questions), so
    /// sharing a rank is fine.
    fn rank(&self) -> u8 {
        match self {
            RuleTarget::Class { .. } => 1,
            RuleTarget::Method(_) | RuleTarget::Return(_) => 2,
            RuleTarget::Argument { .. } => 3,
        }
    }

    /// Store key, unique per target.
    fn canonical(&self) -> String {
        match self {
            RuleTarget::Class { class_name } => format!("C:{class_name}"),
            RuleTarget::Method(m) => format!("M:{}", m.canonical()),
            RuleTarget::Return(m) => format!("R:{}", m.canonical()),
            RuleTarget::Argument { method, index } => {
                format!("A:{}#{}", method.canonical(), index)
            }
        }
    }
}

/// One transmission rule. Validated by [`PolicyStore::set_rule`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRule {
    pub target: RuleTarget,
    pub mechanism: PassingMechanism,
    pub depth: Depth,
    pub priority: i32,
}

/// Declares one cacheable field of a class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldCacheRule {
    pub class_name: String,
    pub field: String,
    pub getter_name: String,
    pub setter_name: Option<String>,
}

/// Declares one method of a class runnable on the receiving side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodCacheRule {
    pub class_name: String,
    pub method: MethodSignature,
}

/// The verdict of one resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub mechanism: PassingMechanism,
    /// The rule that decided, absent when the scope's default applied.
    pub winner: Option<PolicyRule>,
}

impl Decision {
    fn default_for(mechanism: PassingMechanism) -> Decision {
        Decision { mechanism, winner: None }
    }

    /// Depth budget this decision installs; `None` means the surrounding
    /// context's budget stays in force.
    pub fn depth(&self) -> Option<Depth> {
        self.winner.as_ref().map(|r| r.depth)
    }
}

// ── Store ───────────────────────────────────────────────────────────────────

#[derive(Default)]
struct StoreInner {
    /// One map per scope, keyed by canonical target; per target, one rule
    /// per priority (resolution consults only the strongest).
    class_rules: HashMap<String, BTreeMap<i32, PolicyRule>>,
    method_rules: HashMap<String, BTreeMap<i32, PolicyRule>>,
    return_rules: HashMap<String, BTreeMap<i32, PolicyRule>>,
    argument_rules: HashMap<String, BTreeMap<i32, PolicyRule>>,
    field_cache: Vec<FieldCacheRule>,
    method_cache: Vec<MethodCacheRule>,
}

impl StoreInner {
    fn map_for(&mut self, target: &RuleTarget) -> &mut HashMap<String, BTreeMap<i32, PolicyRule>> {
        match target {
            RuleTarget::Class { .. } => &mut self.class_rules,
            RuleTarget::Method(_) => &mut self.method_rules,
            RuleTarget::Return(_) => &mut self.return_rules,
            RuleTarget::Argument { .. } => &mut self.argument_rules,
        }
    }
}

/// Thread-safe rule store plus resolution engine.
///
/// Every `resolve_*` call bumps an evaluation counter, so callers can
/// verify exactly how many policy decisions a workload incurred.
#[derive(Default)]
pub struct PolicyStore {
    inner: RwLock<StoreInner>,
    evaluations: AtomicU64,
}

impl PolicyStore {
    pub fn new() -> PolicyStore {
        PolicyStore::default()
    }

    /// Installs a transmission rule. A rule with the same target and
    /// priority as an existing one replaces it.
    pub fn set_rule(&self, rule: PolicyRule) -> Result<(), PolicyError> {
        if matches!(rule.target, RuleTarget::Class { .. }) && rule.depth != Depth::Unbounded {
            return Err(PolicyError::MalformedRule(
                "class rules cannot bound depth".into(),
            ));
        }
        if rule.mechanism == PassingMechanism::ByReference && rule.depth != Depth::Unbounded {
            return Err(PolicyError::MalformedRule(
                "depth bounds apply to by-value rules only".into(),
            ));
        }
        let key = rule.target.canonical();
        let mut inner = self.inner.write().unwrap();
        inner
            .map_for(&rule.target)
            .entry(key)
            .or_default()
            .insert(rule.priority, rule);
        Ok(())
    }

    /// Declares a cacheable field. Redeclaring (same class and field)
    /// replaces in place, keeping the original position.
    pub fn set_field_cache(&self, rule: FieldCacheRule) {
        let mut inner = self.inner.write().unwrap();
        match inner
            .field_cache
            .iter_mut()
            .find(|r| r.class_name == rule.class_name && r.field == rule.field)
        {
            Some(slot) => *slot = rule,
            None => inner.field_cache.push(rule),
        }
    }

    /// Declares a cacheable method. Redeclaring (same class and overload)
    /// replaces in place.
    pub fn set_method_cache(&self, rule: MethodCacheRule) {
        let mut inner = self.inner.write().unwrap();
        match inner
            .method_cache
            .iter_mut()
            .find(|r| r.class_name == rule.class_name && r.method == rule.method)
        {
            Some(slot) => *slot = rule,
            None => inner.method_cache.push(rule),
        }
    }

    pub fn clear(&self) {
        let mut inner = self.inner.write().unwrap();
        *inner = StoreInner::default();
    }

    /// Number of `resolve_*` calls made so far.
    pub fn evaluation_count(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    // ── Resolution ─────────────────────────────────────────────────────

    /// Decides how argument `index` of `method`, holding a value of class
    /// `value_class`, is passed. Defaults to by-reference.
    pub fn resolve_argument(&self, method: &MethodKey, index: u32, value_class: &str) -> Decision {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let arg_key = format!("A:{}#{}", method.canonical(), index);
        let method_key = format!("M:{}", method.canonical());
        let class_key = format!("C:{value_class}");
        let inner = self.inner.read().unwrap();
        let candidates = [
            strongest(&inner.argument_rules, &arg_key),
            strongest(&inner.method_rules, &method_key),
            strongest(&inner.class_rules, &class_key),
        ];
        pick(candidates, PassingMechanism::ByReference)
    }

    /// Decides how the return value of `method`, of class `value_class`,
    /// is passed. Defaults to by-reference.
    pub fn resolve_return(&self, method: &MethodKey, value_class: &str) -> Decision {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let return_key = format!("R:{}", method.canonical());
        let class_key = format!("C:{value_class}");
        let inner = self.inner.read().unwrap();
        let candidates = [
            strongest(&inner.return_rules, &return_key),
            strongest(&inner.class_rules, &class_key),
            None,
        ];
        pick(candidates, PassingMechanism::ByReference)
    }

    /// Decides how a value of class `value_class` nested inside a
    /// structure already being copied is passed. Only class rules apply;
    /// defaults to by-value (the copy keeps copying).
    pub fn resolve_nested(&self, value_class: &str) -> Decision {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let class_key = format!("C:{value_class}");
        let inner = self.inner.read().unwrap();
        let candidates = [strongest(&inner.class_rules, &class_key), None, None];
        pick(candidates, PassingMechanism::ByValue)
    }

    // ── Cache membership ───────────────────────────────────────────────

    /// The cacheable fields and methods declared for a class, in
    /// declaration order.
    pub fn cached_members(&self, class_name: &str) -> (Vec<FieldCacheRule>, Vec<MethodSignature>) {
        let inner = self.inner.read().unwrap();
        let fields = inner
            .field_cache
            .iter()
            .filter(|r| r.class_name == class_name)
            .cloned()
            .collect();
        let methods = inner
            .method_cache
            .iter()
            .filter(|r| r.class_name == class_name)
            .map(|r| r.method.clone())
            .collect();
        (fields, methods)
    }

    // ── Introspection / persistence ────────────────────────────────────

    /// All transmission rules in canonical order (scope, target,
    /// priority), as written to a policy file.
    pub fn transmission_rules(&self) -> Vec<PolicyRule> {
        let inner = self.inner.read().unwrap();
        let mut rules: Vec<PolicyRule> = [
            &inner.class_rules,
            &inner.method_rules,
            &inner.return_rules,
            &inner.argument_rules,
        ]
        .iter()
        .flat_map(|m| m.values())
        .flat_map(|by_prio| by_prio.values().cloned())
        .collect();
        rules.sort_by(|a, b| {
            (a.target.rank(), a.target.canonical(), a.priority).cmp(&(
                b.target.rank(),
                b.target.canonical(),
                b.priority,
            ))
        });
        rules
    }

    pub fn field_cache_rules(&self) -> Vec<FieldCacheRule> {
        self.inner.read().unwrap().field_cache.clone()
    }

    pub fn method_cache_rules(&self) -> Vec<MethodCacheRule> {
        self.inner.read().unwrap().method_cache.clone()
    }

    /// Renders the whole store as a canonical policy file.
    pub fn save(&self) -> Vec<u8> {
        let mut w = XmlWriter::new();
        w.start("policy");
        w.finish_start();
        w.raw("\n");
        for rule in self.transmission_rules() {
            w.raw("  ");
            write_rule(&mut w, &rule);
            w.raw("\n");
        }
        for rule in self.field_cache_rules() {
            w.raw("  ");
            w.start("rule");
            w.attr("kind", "field-cache");
            w.attr("class", &rule.class_name);
            w.attr("field", &rule.field);
            w.attr("getter", &rule.getter_name);
            if let Some(s) = &rule.setter_name {
                w.attr("setter", s);
            }
            w.finish_empty();
            w.raw("\n");
        }
        for rule in self.method_cache_rules() {
            w.raw("  ");
            w.start("rule");
            w.attr("kind", "method-cache");
            w.attr("class", &rule.class_name);
            w.attr("method", &rule.method.name);
            if !rule.method.param_type_names.is_empty() {
                w.attr("sig", &rule.method.param_type_names.join(","));
            }
            w.finish_empty();
            w.raw("\n");
        }
        w.end("policy");
        w.raw("\n");
        w.into_bytes()
    }

    /// Loads rules from a policy file into this store, merging with (and
    /// replacing on collision) whatever is already present.
    pub fn load(&self, input: &[u8]) -> Result<(), PolicyError> {
        let mut r = XmlReader::new_lenient(input)
            .map_err(|e| PolicyError::MalformedFile(e.to_string()))?;
        let file_err = |e: crate::wire::xml::XmlError| PolicyError::MalformedFile(e.to_string());
        let policy = r.open("policy").map_err(file_err)?;
        policy.check_attrs(&[]).map_err(file_err)?;
        if !policy.self_closed {
            while !r.at_close("policy") {
                let el = r.open("rule").map_err(file_err)?;
                if !el.self_closed {
                    return Err(PolicyError::MalformedFile("rule elements must be empty".into()));
                }
                self.apply_rule_element(&el)?;
            }
            r.close("policy").map_err(file_err)?;
        }
        r.expect_eof().map_err(file_err)?;
        Ok(())
    }

    fn apply_rule_element(&self, el: &crate::wire::xml::Element) -> Result<(), PolicyError> {
        let attr = |name: &str| el.attr(name).map(str::to_string);
        let required = |name: &str| {
            attr(name).ok_or_else(|| {
                PolicyError::MalformedFile(format!("rule missing `{name}` attribute"))
            })
        };
        let kind = required("kind")?;
        let class_name = required("class")?;
        let method_key = || -> Result<MethodKey, PolicyError> {
            let method_name = required("method")?;
            let params = parse_sig_attr(el.attr("sig"))?;
            Ok(MethodKey {
                class_name: class_name.clone(),
                method_name,
                param_type_names: params,
            })
        };
        match kind.as_str() {
            "class" | "method" | "return" | "argument" => {
                el.check_attrs(&[
                    "kind", "class", "method", "sig", "arg", "mechanism", "depth", "priority",
                ])
                .map_err(|e| PolicyError::MalformedFile(e.to_string()))?;
                let target = match kind.as_str() {
                    "class" => RuleTarget::Class { class_name: class_name.clone() },
                    "method" => RuleTarget::Method(method_key()?),
                    "return" => RuleTarget::Return(method_key()?),
                    _ => {
                        let index = required("arg")?.parse().map_err(|_| {
                            PolicyError::MalformedFile("bad `arg` index".into())
                        })?;
                        RuleTarget::Argument { method: method_key()?, index }
                    }
                };
                if kind != "argument" && el.attr("arg").is_some() {
                    return Err(PolicyError::MalformedFile(
                        "`arg` only applies to argument rules".into(),
                    ));
                }
                if kind == "class" && (el.attr("method").is_some() || el.attr("sig").is_some()) {
                    return Err(PolicyError::MalformedFile(
                        "`method`/`sig` do not apply to class rules".into(),
                    ));
                }
                let mechanism = PassingMechanism::from_name(&required("mechanism")?)
                    .ok_or_else(|| PolicyError::MalformedFile("unknown mechanism".into()))?;
                let depth = match el.attr("depth") {
                    None => Depth::Unbounded,
                    Some(d) => Depth::Bounded(d.parse().map_err(|_| {
                        PolicyError::MalformedFile("bad `depth` value".into())
                    })?),
                };
                let priority: i32 = required("priority")?
                    .parse()
                    .map_err(|_| PolicyError::MalformedFile("bad `priority` value".into()))?;
                self.set_rule(PolicyRule { target, mechanism, depth, priority })?;
            }
            "field-cache" => {
                el.check_attrs(&["kind", "class", "field", "getter", "setter"])
                    .map_err(|e| PolicyError::MalformedFile(e.to_string()))?;
                self.set_field_cache(FieldCacheRule {
                    class_name,
                    field: required("field")?,
                    getter_name: required("getter")?,
                    setter_name: attr("setter"),
                });
            }
            "method-cache" => {
                el.check_attrs(&["kind", "class", "method", "sig"])
                    .map_err(|e| PolicyError::MalformedFile(e.to_string()))?;
                let method_name = required("method")?;
                let params = parse_sig_attr(el.attr("sig"))?;
                self.set_method_cache(MethodCacheRule {
                    class_name,
                    method: MethodSignature {
                        name: method_name,
                        param_type_names: params,
                        return_type_name: String::new(),
                    },
                });
            }
            other => {
                return Err(PolicyError::MalformedFile(format!("unknown rule kind `{other}`")));
            }
        }
        Ok(())
    }
}

fn parse_sig_attr(sig: Option<&str>) -> Result<Vec<String>, PolicyError> {
    match sig {
        None => Ok(Vec::new()),
        Some("") => Err(PolicyError::MalformedFile("empty `sig` attribute".into())),
        Some(s) => {
            let parts: Vec<String> = s.split(',').map(str::to_string).collect();
            if parts.iter().any(String::is_empty) {
                return Err(PolicyError::MalformedFile("empty type name in `sig`".into()));
            }
            Ok(parts)
        }
    }
}

fn write_rule(w: &mut XmlWriter, rule: &PolicyRule) {
    w.start("rule");
    let method: Option<&MethodKey> = match &rule.target {
        RuleTarget::Class { class_name } => {
            w.attr("kind", "class");
            w.attr("class", class_name);
            None
        }
        RuleTarget::Method(m) => {
            w.attr("kind", "method");
            Some(m)
        }
        RuleTarget::Return(m) => {
            w.attr("kind", "return");
            Some(m)
        }
        RuleTarget::Argument { method, .. } => {
            w.attr("kind", "argument");
            Some(method)
        }
    };
    if let Some(m) = method {
        w.attr("class", &m.class_name);
        w.attr("method", &m.method_name);
        if !m.param_type_names.is_empty() {
            w.attr("sig", &m.param_type_names.join(","));
        }
    }
    if let RuleTarget::Argument { index, .. } = &rule.target {
        w.attr_u32("arg", *index);
    }
    w.attr("mechanism", rule.mechanism.name());
    if let Depth::Bounded(n) = rule.depth {
        w.attr_u32("depth", n);
    }
    w.attr("priority", &rule.priority.to_string());
    w.finish_empty();
}

/// Strongest (highest-priority) rule for one exact target.
fn strongest<'a>(
    map: &'a HashMap<String, BTreeMap<i32, PolicyRule>>,
    key: &str,
) -> Option<&'a PolicyRule> {
    map.get(key).and_then(|by_prio| by_prio.last_key_value()).map(|(_, r)| r)
}

/// Winner among per-scope candidates: highest priority, then most
/// specific scope.
fn pick(candidates: [Option<&PolicyRule>; 3], default: PassingMechanism) -> Decision {
    let winner = candidates
        .into_iter()
        .flatten()
        .max_by_key(|r| (r.priority, r.target.rank()));
    match winner {
        Some(rule) => Decision { mechanism: rule.mechanism, winner: Some(rule.clone()) },
        None => Decision::default_for(default),
    }
}
