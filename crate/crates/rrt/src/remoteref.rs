//! Remote object references and the proxies built from them.
//!
//! A [`RemoteObjectRef`] is the transmissible identity of one exposed
//! object: where it lives (host, port, GUID), what it is (remote type,
//! implementation class) and which of its members the receiving side may
//! answer locally (cached fields with value snapshots, cached methods).
//! It is pure data — resolution into something callable happens in the
//! runtime, which turns an incoming reference into either the local
//! object itself (when the reference points back home) or a
//! [`ProxyHandle`].
//!
//! A proxy keeps its own copy of the cached-field snapshots. Reads of a
//! cached field are answered from that copy and writes update only that
//! copy — there is deliberately no coherency protocol. The copy is
//! replaced wholesale whenever a fresh reference for the same object
//! arrives, so re-transmission is also the refresh mechanism.
//!
//! Proxies sharing the same cache shape (class plus cached members) share
//! one immutable [`ProxyConfig`], deduplicated per runtime.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, Weak};

use thiserror::Error;

use crate::node::Node;
use crate::registry::{Guid, MethodSignature};
use crate::wire::Value;

/// Proxy-side dispatch failure (before any network activity).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProxyError {
    /// The invoked method is not part of the reference's remote type.
    #[error("method `{0}` is not in remote type `{1}`")]
    NotInRemoteType(String, String),
    /// Several overloads match the name and argument count; the caller
    /// must disambiguate (not supported over this entry point).
    #[error("call to `{0}` is ambiguous")]
    Ambiguous(String),
    /// The reference marks a method as cached but no local body is
    /// registered for it on this runtime.
    #[error("no local body registered for cached method `{0}`")]
    NoLocalImpl(String),
    /// The owning runtime has been dropped.
    #[error("runtime has shut down")]
    NodeGone,
}

// ── Reference data ──────────────────────────────────────────────────────────

/// The remote type as carried inside a reference. Signatures may be
/// embedded directly or deferred, in which case the receiver fetches them
/// from the object's home runtime on first need.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteTypeInfo {
    pub name: String,
    pub methods: Option<Vec<MethodSignature>>,
}

/// References embed remote-type signatures only up to this many methods;
/// wider interfaces are deferred to keep routinely-copied references
/// small. Fetching a reference directly from its home runtime always
/// embeds the full list.
pub const MAX_EMBEDDED_METHODS: usize = 16;

/// One cacheable field: its name and the accessor method names a caller
/// may invoke to read (and optionally write) it locally. Getters take no
/// arguments; setters take exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedFieldSpec {
    pub name: String,
    pub getter_name: String,
    pub setter_name: Option<String>,
}

/// The transmissible identity of one exposed object.
///
/// `cached_values` holds one snapshot per entry of `cached_fields`, in
/// the same order — taken on the exposing side at marshalling time.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteObjectRef {
    pub host: String,
    pub port: u16,
    pub guid: Guid,
    pub remote_type: RemoteTypeInfo,
    pub real_class_name: String,
    pub cached_fields: Vec<CachedFieldSpec>,
    pub cached_methods: Vec<MethodSignature>,
    pub cached_values: Vec<(String, Value)>,
}

impl RemoteObjectRef {
    /// `host:port` of the runtime holding the real object.
    pub fn endpoint(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }

    /// The cache shape of this reference, shared by all proxies with
    /// equal shapes.
    pub fn cache_config(&self) -> ProxyConfig {
        ProxyConfig {
            real_class_name: self.real_class_name.clone(),
            cached_fields: self.cached_fields.clone(),
            cached_methods: self.cached_methods.clone(),
        }
    }
}

// ── Proxy configuration ─────────────────────────────────────────────────────

/// The immutable cache shape of a family of proxies: which class they
/// stand in for and which members are answered locally. Runtimes keep one
/// instance per distinct shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyConfig {
    pub real_class_name: String,
    pub cached_fields: Vec<CachedFieldSpec>,
    pub cached_methods: Vec<MethodSignature>,
}

impl ProxyConfig {
    /// Stable identity string used for deduplication.
    pub fn canonical_key(&self) -> String {
        let mut key = self.real_class_name.clone();
        for f in &self.cached_fields {
            key.push('|');
            key.push_str(&f.name);
            key.push(':');
            key.push_str(&f.getter_name);
            if let Some(s) = &f.setter_name {
                key.push(':');
                key.push_str(s);
            }
        }
        key.push('#');
        for m in &self.cached_methods {
            key.push('|');
            key.push_str(&m.canonical());
        }
        key
    }

    /// The cached field whose getter method this call matches, if any.
    pub fn field_by_getter(&self, method: &str, argc: usize) -> Option<&CachedFieldSpec> {
        if argc != 0 {
            return None;
        }
        self.cached_fields.iter().find(|f| f.getter_name == method)
    }

    /// The cached field whose setter method this call matches, if any.
    pub fn field_by_setter(&self, method: &str, argc: usize) -> Option<&CachedFieldSpec> {
        if argc != 1 {
            return None;
        }
        self.cached_fields
            .iter()
            .find(|f| f.setter_name.as_deref() == Some(method))
    }

    /// The cached method this call matches, if any (by name and arity).
    pub fn cached_method(&self, method: &str, argc: usize) -> Option<&MethodSignature> {
        self.cached_methods
            .iter()
            .find(|m| m.name == method && m.param_type_names.len() == argc)
    }
}

// ── Proxies ─────────────────────────────────────────────────────────────────

/// A smart stand-in for a remote object.
///
/// Calls on a proxy are routed in this order: cached-field getter (local
/// read), cached-field setter (local write), cached method (local body),
/// then a remote invocation — which requires the method to be part of the
/// remote type. The embedded reference and the local cache are behind
/// locks; a proxy is freely shareable across threads.
pub struct ProxyHandle {
    ior: Mutex<RemoteObjectRef>,
    local_cache: Mutex<HashMap<String, Value>>,
    config: Arc<ProxyConfig>,
    node: Weak<Node>,
}

impl ProxyHandle {
    pub(crate) fn new(ior: RemoteObjectRef, config: Arc<ProxyConfig>, node: Weak<Node>) -> ProxyHandle {
        let local_cache = ior.cached_values.iter().cloned().collect();
        ProxyHandle {
            ior: Mutex::new(ior),
            local_cache: Mutex::new(local_cache),
            config,
            node,
        }
    }

    pub fn guid(&self) -> Guid {
        self.ior.lock().unwrap().guid.clone()
    }

    pub fn remote_type_name(&self) -> String {
        self.ior.lock().unwrap().remote_type.name.clone()
    }

    pub fn real_class_name(&self) -> String {
        self.ior.lock().unwrap().real_class_name.clone()
    }

    pub fn endpoint(&self) -> String {
        self.ior.lock().unwrap().endpoint()
    }

    pub fn host_port(&self) -> (String, u16) {
        let ior = self.ior.lock().unwrap();
        (ior.host.clone(), ior.port)
    }

    pub fn config(&self) -> &Arc<ProxyConfig> {
        &self.config
    }

    /// A copy of the embedded reference with cached-value snapshots
    /// replaced by this proxy's current local cache — what gets written
    /// to the wire when the proxy itself is re-transmitted.
    pub fn current_ior(&self) -> RemoteObjectRef {
        let mut ior = self.ior.lock().unwrap().clone();
        let cache = self.local_cache.lock().unwrap();
        ior.cached_values = ior
            .cached_fields
            .iter()
            .map(|f| {
                let v = cache.get(&f.name).cloned().unwrap_or(Value::Null);
                (f.name.clone(), v)
            })
            .collect();
        ior
    }

    /// Replaces the embedded reference and the entire local cache with a
    /// freshly received reference for the same object.
    pub(crate) fn refresh_from(&self, fresh: &RemoteObjectRef) {
        let mut cache = self.local_cache.lock().unwrap();
        cache.clear();
        cache.extend(fresh.cached_values.iter().cloned());
        *self.ior.lock().unwrap() = fresh.clone();
    }

    pub fn cached_value(&self, field: &str) -> Option<Value> {
        self.local_cache.lock().unwrap().get(field).cloned()
    }

    pub fn set_cached_value(&self, field: &str, value: Value) {
        self.local_cache.lock().unwrap().insert(field.to_string(), value);
    }

    /// Whether remote-type signatures are locally known (embedded or
    /// already fetched).
    pub fn methods_known(&self) -> bool {
        self.ior.lock().unwrap().remote_type.methods.is_some()
    }

    /// Picks the remote-type overload a (name, argument count) call
    /// addresses. Requires signatures to be known.
    pub fn select_signature(
        &self,
        method: &str,
        argc: usize,
    ) -> Result<MethodSignature, ProxyError> {
        let ior = self.ior.lock().unwrap();
        let methods = ior
            .remote_type
            .methods
            .as_deref()
            .expect("remote-type signatures must be fetched before selection");
        let by_name: Vec<&MethodSignature> =
            methods.iter().filter(|m| m.name == method).collect();
        match by_name.len() {
            0 => Err(ProxyError::NotInRemoteType(
                method.to_string(),
                ior.remote_type.name.clone(),
            )),
            1 if by_name[0].param_type_names.len() == argc => Ok(by_name[0].clone()),
            1 => Err(ProxyError::NotInRemoteType(
                format!("{method}/{argc}"),
                ior.remote_type.name.clone(),
            )),
            _ => {
                let by_arity: Vec<&&MethodSignature> = by_name
                    .iter()
                    .filter(|m| m.param_type_names.len() == argc)
                    .collect();
                match by_arity.len() {
                    0 => Err(ProxyError::NotInRemoteType(
                        format!("{method}/{argc}"),
                        ior.remote_type.name.clone(),
                    )),
                    1 => Ok((*by_arity[0]).clone()),
                    _ => Err(ProxyError::Ambiguous(method.to_string())),
                }
            }
        }
    }

    /// Invokes a method through this proxy. Cached members are answered
    /// locally; everything else goes over the wire to the object's home
    /// runtime.
    pub fn invoke(
        self: &Arc<Self>,
        method: &str,
        args: Vec<crate::object::Obj>,
    ) -> Result<crate::object::Obj, crate::node::CallError> {
        let node = self.node.upgrade().ok_or(ProxyError::NodeGone)?;
        node.proxy_invoke(self, method, args)
    }
}

impl fmt::Debug for ProxyHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ior = self.ior.lock().unwrap();
        write!(
            f,
            "ProxyHandle({} as {} @ {})",
            ior.guid,
            ior.remote_type.name,
            ior.endpoint()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ref() -> RemoteObjectRef {
        RemoteObjectRef {
            host: "127.0.0.1".into(),
            port: 9000,
            guid: Guid::parse("00112233445566778899aabbccddeeff00112233").unwrap(),
            remote_type: RemoteTypeInfo { name: "IThing".into(), methods: None },
            real_class_name: "Thing".into(),
            cached_fields: vec![CachedFieldSpec {
                name: "size".into(),
                getter_name: "getSize".into(),
                setter_name: Some("setSize".into()),
            }],
            cached_methods: vec![],
            cached_values: vec![("size".into(), Value::i32(5))],
        }
    }

    #[test]
    fn cache_config_identity() {
        let a = sample_ref().cache_config();
        let b = sample_ref().cache_config();
        assert_eq!(a, b);
        assert_eq!(a.canonical_key(), b.canonical_key());

        let mut c = sample_ref();
        c.cached_fields[0].setter_name = None;
        assert_ne!(a.canonical_key(), c.cache_config().canonical_key());
    }

    #[test]
    fn config_member_matching_checks_arity() {
        let cfg = sample_ref().cache_config();
        assert!(cfg.field_by_getter("getSize", 0).is_some());
        assert!(cfg.field_by_getter("getSize", 1).is_none());
        assert!(cfg.field_by_setter("setSize", 1).is_some());
        assert!(cfg.field_by_setter("setSize", 0).is_none());
        assert!(cfg.field_by_getter("getOther", 0).is_none());
    }
}
