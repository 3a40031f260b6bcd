//! Service registry: the per-runtime table of objects exposed for remote
//! access.
//!
//! An object becomes remotely callable by registering a [`ServiceAdaptor`]
//! — a bundle of dispatch closures over one concrete instance — under a
//! caller-chosen service name, together with the *remote type* it is
//! published as. The remote type is purely structural: a named list of
//! method signatures, with no inheritance or identity beyond its content.
//! A service may be published under a narrower type than its class
//! provides, hiding the remaining methods from remote callers.
//!
//! Every exposure also mints a GUID (40 hex characters). Services are
//! addressable by name *or* by GUID; since names that look like GUIDs are
//! rejected at exposure time, the two key spaces never collide and a
//! single lookup key is unambiguous.
//!
//! Exposure also happens implicitly: when a live object reference is
//! marshalled by reference, the runtime exposes the referent on the fly
//! ([`Registry::expose_auto`]), publishing it under its GUID alone. The
//! remote type used is the one associated with the object's class via
//! [`Registry::associate`], falling back to the full set of adapted
//! methods. Auto-exposure is idempotent per (object identity, effective
//! remote type): marshalling the same object twice hands out the same
//! GUID rather than minting a fresh service each time.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::RngCore;
use thiserror::Error;

use crate::object::{AppException, Instance, Obj};

/// Registry failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    /// Service names must be non-empty and must not be mistakable for a
    /// GUID (40 lowercase hex characters).
    #[error("invalid service name `{0}`")]
    InvalidName(String),
    /// Another service already holds this name.
    #[error("service name `{0}` is already taken")]
    NameTaken(String),
    /// The object does not implement every method of the requested remote
    /// type; the unmet signatures are listed.
    #[error("object does not implement remote type `{type_name}`: missing {missing:?}")]
    TypeMismatch { type_name: String, missing: Vec<String> },
    /// A remote type declared two methods with the same name and
    /// parameter list.
    #[error("remote type `{0}` declares duplicate method `{1}`")]
    DuplicateMethod(String, String),
    /// No service is registered under the given key.
    #[error("no service registered under `{0}`")]
    NotFound(String),
}

// ── Identifiers and signatures ──────────────────────────────────────────────

/// Globally unique service identifier: 40 lowercase hex characters
/// (160 random bits).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Guid(String);

impl Guid {
    pub const LEN: usize = 40;

    /// Mints a fresh random GUID.
    pub fn fresh() -> Guid {
        let mut bytes = [0u8; 20];
        rand::thread_rng().fill_bytes(&mut bytes);
        Guid(hex::encode(bytes))
    }

    /// Accepts exactly 40 lowercase hex characters.
    pub fn parse(s: &str) -> Option<Guid> {
        if Self::is_guid_shaped(s) {
            Some(Guid(s.to_string()))
        } else {
            None
        }
    }

    /// Shape test used both for parsing and for keeping service names out
    /// of the GUID key space.
    pub fn is_guid_shaped(s: &str) -> bool {
        s.len() == Self::LEN
            && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Guid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A method signature: name, parameter type names and return type name.
///
/// Equality and hashing cover the name and parameter list only — that
/// pair is what identifies an overload at dispatch time. Return types
/// still matter for structural compliance and are compared explicitly
/// where needed.
#[derive(Debug, Clone)]
pub struct MethodSignature {
    pub name: String,
    pub param_type_names: Vec<String>,
    pub return_type_name: String,
}

impl MethodSignature {
    pub fn new<S: AsRef<str>>(name: &str, params: &[S], returns: &str) -> MethodSignature {
        MethodSignature {
            name: name.to_string(),
            param_type_names: params.iter().map(|p| p.as_ref().to_string()).collect(),
            return_type_name: returns.to_string(),
        }
    }

    /// Canonical rendering `name(p1,p2)`, unique per overload.
    pub fn canonical(&self) -> String {
        format!("{}({})", self.name, self.param_type_names.join(","))
    }

    pub fn matches(&self, name: &str, param_type_names: &[String]) -> bool {
        self.name == name && self.param_type_names == param_type_names
    }
}

impl PartialEq for MethodSignature {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.param_type_names == other.param_type_names
    }
}

impl Eq for MethodSignature {}

impl std::hash::Hash for MethodSignature {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.param_type_names.hash(state);
    }
}

/// A remote type: the structural interface a service is published under.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteType {
    type_name: String,
    methods: Vec<MethodSignature>,
}

impl RemoteType {
    /// Builds a remote type, rejecting duplicate overloads.
    pub fn new(
        type_name: impl Into<String>,
        methods: Vec<MethodSignature>,
    ) -> Result<RemoteType, RegistryError> {
        let type_name = type_name.into();
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return Err(RegistryError::DuplicateMethod(type_name, m.canonical()));
            }
        }
        Ok(RemoteType { type_name, methods })
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    pub fn methods(&self) -> &[MethodSignature] {
        &self.methods
    }

    pub fn find(&self, name: &str, param_type_names: &[String]) -> Option<&MethodSignature> {
        self.methods.iter().find(|m| m.matches(name, param_type_names))
    }

    /// Stable identity string: type name plus every canonical signature
    /// and return type. Two remote types with equal keys are
    /// interchangeable.
    pub fn canonical_key(&self) -> String {
        let mut key = self.type_name.clone();
        for m in &self.methods {
            key.push('|');
            key.push_str(&m.canonical());
            key.push(':');
            key.push_str(&m.return_type_name);
        }
        key
    }
}

// ── Service adaptors ────────────────────────────────────────────────────────

/// Dispatch closure for one adapted method.
pub type MethodFn = Arc<dyn Fn(&[Obj]) -> Result<Obj, AppException> + Send + Sync>;

/// Read (and optionally write) access to one adapted field.
#[derive(Clone)]
pub struct FieldAccessor {
    pub getter: Arc<dyn Fn() -> Obj + Send + Sync>,
    pub setter: Option<Arc<dyn Fn(Obj) + Send + Sync>>,
}

/// Bridges one concrete instance to the runtime: method dispatch by
/// signature, field access by name, and a display string for the
/// browsing pages.
///
/// Adaptors are passive — registering one with the registry is what makes
/// the object remotely reachable.
pub struct ServiceAdaptor {
    instance: Instance,
    methods: Vec<(MethodSignature, MethodFn)>,
    fields: Vec<(String, FieldAccessor)>,
    display: Arc<dyn Fn() -> String + Send + Sync>,
}

impl ServiceAdaptor {
    pub fn builder(instance: Instance) -> AdaptorBuilder {
        AdaptorBuilder {
            instance,
            methods: Vec::new(),
            fields: Vec::new(),
            display: None,
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    /// The implementation class of the underlying object.
    pub fn class_name(&self) -> &str {
        self.instance.class_name()
    }

    /// All adapted method signatures, in registration order.
    pub fn method_signatures(&self) -> Vec<MethodSignature> {
        self.methods.iter().map(|(sig, _)| sig.clone()).collect()
    }

    /// The widest remote type this adaptor supports: its class name over
    /// every adapted method.
    pub fn full_type(&self) -> RemoteType {
        RemoteType {
            type_name: self.instance.class_name().to_string(),
            methods: self.method_signatures(),
        }
    }

    pub fn method_fn(&self, sig: &MethodSignature) -> Option<MethodFn> {
        self.methods
            .iter()
            .find(|(s, _)| s == sig)
            .map(|(_, f)| Arc::clone(f))
    }

    pub fn field_accessor(&self, name: &str) -> Option<&FieldAccessor> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn field_names(&self) -> Vec<&str> {
        self.fields.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn display_string(&self) -> String {
        (self.display)()
    }

    /// Canonical signatures of `remote_type` this adaptor does not
    /// provide (empty means structurally compliant). A signature matches
    /// only if name, parameters *and* return type agree.
    pub fn missing_from(&self, remote_type: &RemoteType) -> Vec<String> {
        remote_type
            .methods()
            .iter()
            .filter(|wanted| {
                !self.methods.iter().any(|(have, _)| {
                    have == *wanted && have.return_type_name == wanted.return_type_name
                })
            })
            .map(|m| m.canonical())
            .collect()
    }
}

/// Builder for [`ServiceAdaptor`].
pub struct AdaptorBuilder {
    instance: Instance,
    methods: Vec<(MethodSignature, MethodFn)>,
    fields: Vec<(String, FieldAccessor)>,
    display: Option<Arc<dyn Fn() -> String + Send + Sync>>,
}

impl AdaptorBuilder {
    pub fn method(
        mut self,
        sig: MethodSignature,
        f: impl Fn(&[Obj]) -> Result<Obj, AppException> + Send + Sync + 'static,
    ) -> Self {
        debug_assert!(
            !self.methods.iter().any(|(s, _)| *s == sig),
            "duplicate adapted method {}",
            sig.canonical()
        );
        self.methods.push((sig, Arc::new(f)));
        self
    }

    pub fn field(
        mut self,
        name: &str,
        getter: impl Fn() -> Obj + Send + Sync + 'static,
        setter: Option<Arc<dyn Fn(Obj) + Send + Sync>>,
    ) -> Self {
        debug_assert!(
            !self.fields.iter().any(|(n, _)| n == name),
            "duplicate adapted field {name}"
        );
        self.fields
            .push((name.to_string(), FieldAccessor { getter: Arc::new(getter), setter }));
        self
    }

    pub fn display(mut self, f: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.display = Some(Arc::new(f));
        self
    }

    pub fn build(self) -> ServiceAdaptor {
        let display = self.display.unwrap_or_else(|| {
            let class = self.instance.class_name().to_string();
            Arc::new(move || format!("{class} instance"))
        });
        ServiceAdaptor {
            instance: self.instance,
            methods: self.methods,
            fields: self.fields,
            display,
        }
    }
}

// ── Registry ────────────────────────────────────────────────────────────────

/// One registered service.
pub struct ServiceRecord {
    pub guid: Guid,
    /// Caller-chosen name; auto-exposed services have none and answer to
    /// their GUID only.
    pub name: Option<String>,
    pub remote_type: RemoteType,
    pub adaptor: Arc<ServiceAdaptor>,
}

impl ServiceRecord {
    /// The key remote callers address this service by.
    pub fn service_key(&self) -> &str {
        self.name.as_deref().unwrap_or_else(|| self.guid.as_str())
    }
}

impl fmt::Debug for ServiceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ServiceRecord({} as {}, guid {})",
            self.adaptor.class_name(),
            self.remote_type.type_name(),
            self.guid
        )
    }
}

#[derive(Default)]
struct RegistryInner {
    by_name: HashMap<String, Guid>,
    by_guid: HashMap<Guid, Arc<ServiceRecord>>,
    /// class name → remote type to publish instances of that class under.
    associations: HashMap<String, RemoteType>,
    /// (object identity, remote-type key) → GUID of the auto-exposed
    /// service, making implicit exposure idempotent.
    auto: HashMap<(usize, String), Guid>,
    /// Exposure order, for stable browsing output.
    order: Vec<Guid>,
}

/// Thread-safe table of everything this runtime has exposed.
#[derive(Default)]
pub struct Registry {
    inner: RwLock<RegistryInner>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    /// Publishes an object under `name`. With `remote_type` absent the
    /// full adapted interface is published, named after the object's
    /// class. The same object may be exposed any number of times under
    /// different names; the name itself must be fresh.
    pub fn expose(
        &self,
        name: &str,
        adaptor: Arc<ServiceAdaptor>,
        remote_type: Option<RemoteType>,
    ) -> Result<Arc<ServiceRecord>, RegistryError> {
        if name.is_empty() || Guid::is_guid_shaped(name) {
            return Err(RegistryError::InvalidName(name.to_string()));
        }
        let remote_type = match remote_type {
            Some(rt) => {
                let missing = adaptor.missing_from(&rt);
                if !missing.is_empty() {
                    return Err(RegistryError::TypeMismatch {
                        type_name: rt.type_name().to_string(),
                        missing,
                    });
                }
                rt
            }
            None => adaptor.full_type(),
        };
        let mut inner = self.inner.write().unwrap();
        if inner.by_name.contains_key(name) {
            return Err(RegistryError::NameTaken(name.to_string()));
        }
        let guid = Guid::fresh();
        let record = Arc::new(ServiceRecord {
            guid: guid.clone(),
            name: Some(name.to_string()),
            remote_type,
            adaptor,
        });
        inner.by_name.insert(name.to_string(), guid.clone());
        inner.by_guid.insert(guid.clone(), Arc::clone(&record));
        inner.order.push(guid);
        Ok(record)
    }

    /// Implicit exposure of an object being marshalled by reference.
    /// Publishes under the class's associated remote type (full interface
    /// otherwise) and returns the existing record when this object is
    /// already exposed under that exact type.
    pub fn expose_auto(
        &self,
        adaptor: Arc<ServiceAdaptor>,
    ) -> Result<Arc<ServiceRecord>, RegistryError> {
        let mut inner = self.inner.write().unwrap();
        let remote_type = match inner.associations.get(adaptor.class_name()) {
            Some(rt) => rt.clone(),
            None => adaptor.full_type(),
        };
        let missing = adaptor.missing_from(&remote_type);
        if !missing.is_empty() {
            return Err(RegistryError::TypeMismatch {
                type_name: remote_type.type_name().to_string(),
                missing,
            });
        }
        let key = (adaptor.instance().identity(), remote_type.canonical_key());
        if let Some(guid) = inner.auto.get(&key) {
            return Ok(Arc::clone(&inner.by_guid[guid]));
        }
        let guid = Guid::fresh();
        let record = Arc::new(ServiceRecord {
            guid: guid.clone(),
            name: None,
            remote_type,
            adaptor,
        });
        inner.auto.insert(key, guid.clone());
        inner.by_guid.insert(guid.clone(), Arc::clone(&record));
        inner.order.push(guid);
        Ok(record)
    }

    /// Declares which remote type instances of `class_name` are published
    /// under when marshalled by reference. Later declarations replace
    /// earlier ones; already-exposed services keep the type they were
    /// exposed with.
    pub fn associate(&self, class_name: &str, remote_type: RemoteType) {
        let mut inner = self.inner.write().unwrap();
        inner.associations.insert(class_name.to_string(), remote_type);
    }

    pub fn association(&self, class_name: &str) -> Option<RemoteType> {
        self.inner.read().unwrap().associations.get(class_name).cloned()
    }

    /// Looks a service up by name or by GUID.
    pub fn lookup(&self, key: &str) -> Result<Arc<ServiceRecord>, RegistryError> {
        let inner = self.inner.read().unwrap();
        let guid = match inner.by_name.get(key) {
            Some(guid) => guid.clone(),
            None => match Guid::parse(key) {
                Some(guid) => guid,
                None => return Err(RegistryError::NotFound(key.to_string())),
            },
        };
        inner
            .by_guid
            .get(&guid)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(key.to_string()))
    }

    /// Whether a GUID belongs to this registry (used to short-circuit
    /// references that point back at the local runtime).
    pub fn contains_guid(&self, guid: &Guid) -> bool {
        self.inner.read().unwrap().by_guid.contains_key(guid)
    }

    /// All records in exposure order.
    pub fn records(&self) -> Vec<Arc<ServiceRecord>> {
        let inner = self.inner.read().unwrap();
        inner.order.iter().map(|g| Arc::clone(&inner.by_guid[g])).collect()
    }
}
