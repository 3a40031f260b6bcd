//! Language-side object model: the values application code hands to (and
//! receives from) the runtime.
//!
//! [`Obj`] is deliberately small: the four wire primitives, text, typed
//! lists, concrete local instances and proxies for remote objects. An
//! [`Instance`] pairs a class name with a shared, type-erased payload —
//! the class name is what policy rules and marshalling decisions key on,
//! and the `Arc` pointer doubles as object identity (aliasing detection,
//! idempotent exposure).
//!
//! What the runtime *can do* with a class is registered separately in a
//! [`ClassRegistry`]:
//!
//! * a by-value codec — decompose an instance into named fields and
//!   rebuild one from fields received off the wire;
//! * an adaptor factory — wrap an instance in a [`ServiceAdaptor`] so it
//!   can be exposed when marshalled by reference;
//! * local bodies for cached methods — run on the caller when a proxy's
//!   remote reference names the method as cacheable.
//!
//! A class may register any subset; marshalling fails with a descriptive
//! error when a needed capability is missing.

use std::any::Any;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::registry::{MethodSignature, ServiceAdaptor};
use crate::remoteref::ProxyHandle;

/// An exception raised by application code (as opposed to a failure of
/// the distribution machinery). Carries the exception's class name and
/// message across the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppException {
    pub type_name: String,
    pub message: String,
}

impl AppException {
    pub fn new(type_name: impl Into<String>, message: impl Into<String>) -> AppException {
        AppException { type_name: type_name.into(), message: message.into() }
    }
}

impl fmt::Display for AppException {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.type_name, self.message)
    }
}

impl std::error::Error for AppException {}

// ── Values ──────────────────────────────────────────────────────────────────

/// A value as seen by application code.
#[derive(Clone)]
pub enum Obj {
    Null,
    I32(i32),
    I64(i64),
    F64(f64),
    Bool(bool),
    Text(String),
    List(Arc<ObjList>),
    /// A concrete object living in this process.
    Instance(Instance),
    /// A smart proxy for an object living elsewhere.
    Proxy(Arc<ProxyHandle>),
}

/// A typed, immutable sequence. Lists are containers, not objects: they
/// always travel by value, element by element.
pub struct ObjList {
    pub elem_class: String,
    pub items: Vec<Obj>,
}

impl Obj {
    pub fn text(s: impl Into<String>) -> Obj {
        Obj::Text(s.into())
    }

    pub fn list(elem_class: impl Into<String>, items: Vec<Obj>) -> Obj {
        Obj::List(Arc::new(ObjList { elem_class: elem_class.into(), items }))
    }

    pub fn as_i32(&self) -> Option<i32> {
        match self {
            Obj::I32(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Obj::I64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Obj::F64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Obj::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Obj::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&ObjList> {
        match self {
            Obj::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_instance(&self) -> Option<&Instance> {
        match self {
            Obj::Instance(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_proxy(&self) -> Option<&Arc<ProxyHandle>> {
        match self {
            Obj::Proxy(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Obj::Null)
    }
}

impl fmt::Debug for Obj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Obj::Null => write!(f, "Null"),
            Obj::I32(v) => write!(f, "I32({v})"),
            Obj::I64(v) => write!(f, "I64({v})"),
            Obj::F64(v) => write!(f, "F64({v})"),
            Obj::Bool(v) => write!(f, "Bool({v})"),
            Obj::Text(s) => write!(f, "Text({s:?})"),
            Obj::List(l) => write!(f, "List<{}>[{}]", l.elem_class, l.items.len()),
            Obj::Instance(i) => write!(f, "Instance({} @{:#x})", i.class_name(), i.identity()),
            Obj::Proxy(p) => write!(f, "Proxy({})", p.guid()),
        }
    }
}

/// Structural equality; instances and proxies compare by identity.
impl PartialEq for Obj {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Obj::Null, Obj::Null) => true,
            (Obj::I32(a), Obj::I32(b)) => a == b,
            (Obj::I64(a), Obj::I64(b)) => a == b,
            (Obj::F64(a), Obj::F64(b)) => a == b,
            (Obj::Bool(a), Obj::Bool(b)) => a == b,
            (Obj::Text(a), Obj::Text(b)) => a == b,
            (Obj::List(a), Obj::List(b)) => {
                a.elem_class == b.elem_class && a.items == b.items
            }
            (Obj::Instance(a), Obj::Instance(b)) => a.identity() == b.identity(),
            (Obj::Proxy(a), Obj::Proxy(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// A class-named, shared, type-erased local object.
#[derive(Clone)]
pub struct Instance {
    class_name: Arc<str>,
    inner: Arc<dyn Any + Send + Sync>,
}

impl Instance {
    pub fn new<T: Any + Send + Sync>(class_name: &str, value: Arc<T>) -> Instance {
        Instance { class_name: Arc::from(class_name), inner: value }
    }

    /// The implementation class, as policy rules and codecs know it.
    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn downcast<T: Any + Send + Sync>(&self) -> Option<Arc<T>> {
        Arc::clone(&self.inner).downcast::<T>().ok()
    }

    /// Object identity: the payload's address. Two `Instance` handles
    /// over the same `Arc` are the same object.
    pub fn identity(&self) -> usize {
        Arc::as_ptr(&self.inner) as *const () as usize
    }
}

impl fmt::Debug for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Instance({} @{:#x})", self.class_name, self.identity())
    }
}

// ── Per-class capabilities ──────────────────────────────────────────────────

/// How to pass instances of one class by value.
#[derive(Clone)]
pub struct ByValueCodec {
    /// Decomposes an instance into named fields; `None` when the payload
    /// is not actually of this class.
    pub to_fields: Arc<dyn Fn(&Instance) -> Option<Vec<(String, Obj)>> + Send + Sync>,
    /// Rebuilds an instance from received fields; the error string names
    /// what was missing or mistyped.
    pub from_fields: Arc<dyn Fn(Vec<(String, Obj)>) -> Result<Instance, String> + Send + Sync>,
}

/// Builds a [`ServiceAdaptor`] for an instance of one class, so the
/// runtime can expose it when it is marshalled by reference.
pub type AdaptorFactory = Arc<dyn Fn(&Instance) -> Option<Arc<ServiceAdaptor>> + Send + Sync>;

/// A caller-side body for a cached method. Runs against the proxy it was
/// invoked on and may call back through it — cached-field reads stay
/// local, so a body built on them costs no network traffic.
pub type CachedMethodFn =
    Arc<dyn Fn(&Arc<ProxyHandle>, &[Obj]) -> Result<Obj, AppException> + Send + Sync>;

#[derive(Default, Clone)]
struct ClassInfo {
    by_value: Option<ByValueCodec>,
    adaptor_factory: Option<AdaptorFactory>,
    /// canonical signature → local body.
    cached_impls: HashMap<String, CachedMethodFn>,
}

/// Thread-safe map from class name to registered capabilities.
#[derive(Default)]
pub struct ClassRegistry {
    classes: RwLock<HashMap<String, ClassInfo>>,
}

impl ClassRegistry {
    pub fn new() -> ClassRegistry {
        ClassRegistry::default()
    }

    pub fn register_by_value(&self, class_name: &str, codec: ByValueCodec) {
        let mut classes = self.classes.write().unwrap();
        classes.entry(class_name.to_string()).or_default().by_value = Some(codec);
    }

    pub fn register_adaptor_factory(&self, class_name: &str, factory: AdaptorFactory) {
        let mut classes = self.classes.write().unwrap();
        classes.entry(class_name.to_string()).or_default().adaptor_factory = Some(factory);
    }

    /// Registers the local body run when `sig` is invoked on a proxy
    /// whose remote reference marks the method as cached.
    pub fn register_cached_impl(
        &self,
        class_name: &str,
        sig: &MethodSignature,
        body: CachedMethodFn,
    ) {
        let mut classes = self.classes.write().unwrap();
        classes
            .entry(class_name.to_string())
            .or_default()
            .cached_impls
            .insert(sig.canonical(), body);
    }

    pub fn by_value(&self, class_name: &str) -> Option<ByValueCodec> {
        self.classes.read().unwrap().get(class_name).and_then(|c| c.by_value.clone())
    }

    pub fn adaptor_factory(&self, class_name: &str) -> Option<AdaptorFactory> {
        self.classes
            .read()
            .unwrap()
            .get(class_name)
            .and_then(|c| c.adaptor_factory.clone())
    }

    pub fn cached_impl(&self, class_name: &str, sig: &MethodSignature) -> Option<CachedMethodFn> {
        self.classes
            .read()
            .unwrap()
            .get(class_name)
            .and_then(|c| c.cached_impls.get(&sig.canonical()).cloned())
    }

    pub fn has_cached_impl(&self, class_name: &str, sig: &MethodSignature) -> bool {
        self.cached_impl(class_name, sig).is_some()
    }
}
