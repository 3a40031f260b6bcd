//! The runtime node: everything one process needs to expose objects and
//! call remote ones.
//!
//! A [`Node`] bundles the four per-process singletons — service
//! [`Registry`], [`PolicyStore`], [`ClassRegistry`] and the proxy table —
//! with an HTTP transport. Exposed services are reachable under
//! `http://host:port/<name-or-guid>`: `POST` carries call envelopes,
//! `GET` with `Accept: application/xml` returns the service's remote
//! reference, and plain browser `GET`s render human-readable pages.
//!
//! ## Marshalling
//!
//! Arguments and results are turned into wire values by a policy-driven
//! walk. Primitives, text and `null` are copied as-is and lists are
//! copied element by element (elements are resolved under the same
//! context as the list itself). For each object the runtime consults the
//! policy store — argument, method and class rules for arguments; return
//! and class rules for results; class rules alone for objects nested
//! inside a copy — and then either:
//!
//! * **copies** it (`by-value`): its registered codec decomposes it into
//!   fields, which are marshalled as nested values with the depth budget
//!   decremented; when the budget hits zero the walk switches to
//!   references for anything deeper; or
//! * **exposes** it (`by-reference`): the object is implicitly registered
//!   (idempotently) and a remote reference is emitted, including value
//!   snapshots for every field the policy declares cacheable.
//!
//! Within one document, a value-copied object appearing twice is encoded
//! once and back-referenced after that, so aliasing and cycles survive
//! the trip. The receiving side rebuilds copies through registered
//! codecs, with one caveat: a back-reference that points *upward* into a
//! structure still being rebuilt cannot be satisfied (objects are
//! constructed bottom-up) and is reported as unresolvable — only the wire
//! layer itself round-trips truly cyclic documents.
//!
//! ## Incoming references
//!
//! A received reference resolves in three steps: if it names a service of
//! this very node, the local object itself is handed out (loopback);
//! otherwise an existing proxy for the same GUID is reused — its cache
//! refreshed wholesale from the incoming snapshots — and only then is a
//! new proxy created. Proxies with the same cache shape share one
//! interned [`ProxyConfig`].
//!
//! ## Failure handling
//!
//! Exceptions raised by the target object always come back as
//! application faults. Failures of the machinery itself (unreachable
//! peer, unknown service, undecodable traffic) either propagate as
//! [`CallError::Dist`] or — in [`FailureMode::SuppressWithDefaults`] —
//! are swallowed, turning the call into a no-op that returns zero, false
//! or null according to the method's declared return type.

mod browse;
mod http;

use std::collections::HashMap;
use std::io;
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use rand::RngCore;
use thiserror::Error;

use crate::object::{AppException, ClassRegistry, Instance, Obj};
use crate::policy::{Depth, MethodKey, PassingMechanism, PolicyStore};
use crate::registry::{
    Guid, Registry, RegistryError, RemoteType, ServiceAdaptor, ServiceRecord,
};
use crate::remoteref::{
    CachedFieldSpec, ProxyConfig, ProxyError, ProxyHandle, RemoteObjectRef, RemoteTypeInfo,
    MAX_EMBEDDED_METHODS,
};
use crate::wire::{
    self, CallEnvelope, DistFaultCode, PrimKind, ReplyBody, ReplyEnvelope, Value,
};

/// What happens when the distribution machinery fails mid-call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    /// Swallow the failure; the call returns the declared return type's
    /// default (0, 0.0, false, null). Application exceptions still
    /// surface.
    SuppressWithDefaults,
    /// Surface the failure to the caller as [`CallError::Dist`].
    Propagate,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    /// Address this node advertises in the references it hands out (and
    /// binds its server to).
    pub host: String,
    /// Port to bind; 0 picks a free one at [`Node::serve`] time.
    pub port: u16,
    pub failure_mode: FailureMode,
    /// Whether browser pages may reveal implementation details (full
    /// class interface and live field values) of exposed objects.
    pub browse_details: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            host: "127.0.0.1".into(),
            port: 0,
            failure_mode: FailureMode::Propagate,
            browse_details: false,
        }
    }
}

/// Failure while turning objects into wire values or back.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarshalError {
    #[error("class `{0}` has no by-value codec registered")]
    NotByValueAdapted(String),
    #[error("class `{0}` has no adaptor factory registered")]
    NotReferenceAdapted(String),
    #[error("registered codec rejected a `{0}` payload")]
    CodecMismatch(String),
    #[error("class `{0}` is unknown to this runtime")]
    UnknownClass(String),
    #[error("cannot rebuild `{class}`: {reason}")]
    BadFields { class: String, reason: String },
    #[error("primitive lexical `{0}` is unusable")]
    BadLexical(String),
    #[error("snapshot of `{class}` needs an accessor for field `{field}`")]
    AccessorMissing { class: String, field: String },
    #[error("cannot hand out a reference to `{0}`: this node is not serving")]
    NotServing(String),
    #[error("cached-field snapshot of `{0}` cycles back into the object")]
    SnapshotCycle(String),
    #[error("alias target {0} points into a structure still being rebuilt")]
    UnresolvableAlias(u32),
    #[error("implicit exposure failed: {0}")]
    Expose(#[from] RegistryError),
}

/// Failure of an invocation through the runtime.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CallError {
    /// The target object raised; never suppressed.
    #[error("application fault: {0}")]
    App(AppException),
    /// The distribution machinery failed (subject to [`FailureMode`]).
    #[error("distribution fault {}: {message}", code.name())]
    Dist { code: DistFaultCode, message: String },
    /// Local marshalling problem; always surfaces.
    #[error(transparent)]
    Marshal(#[from] MarshalError),
    /// Local proxy dispatch problem; always surfaces.
    #[error(transparent)]
    Proxy(#[from] ProxyError),
}

/// The value a suppressed call yields, per declared return type.
fn default_return(return_type: &str) -> Obj {
    match return_type {
        "i32" => Obj::I32(0),
        "i64" => Obj::I64(0),
        "f64" => Obj::F64(0.0),
        "bool" => Obj::Bool(false),
        _ => Obj::Null,
    }
}

// ── Marshalling context ─────────────────────────────────────────────────────

/// Where in a call the value being marshalled sits; decides which policy
/// question gets asked.
#[derive(Clone, Copy)]
pub(crate) enum Ctx<'a> {
    Argument { method: &'a MethodKey, index: u32 },
    Return { method: &'a MethodKey },
    Nested,
}

/// Encoder-side walk state. `seen` and `next_id` implement document
/// pre-order numbering and aliasing (scoped: cached-value snapshots use a
/// nested scope); `ior_stack` guards against snapshots that recursively
/// require a snapshot of the same object.
pub(crate) struct MarshalState {
    seen: HashMap<usize, u32>,
    next_id: u32,
    ior_stack: Vec<usize>,
}

impl MarshalState {
    pub fn new() -> MarshalState {
        MarshalState { seen: HashMap::new(), next_id: 1, ior_stack: Vec::new() }
    }

    fn assign_id(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Runs `f` in a fresh id scope (ids restart at 1, aliasing does not
    /// cross the boundary); the snapshot-cycle guard stays shared.
    fn scoped<T>(&mut self, f: impl FnOnce(&mut MarshalState) -> T) -> T {
        let seen = std::mem::take(&mut self.seen);
        let next_id = std::mem::replace(&mut self.next_id, 1);
        let out = f(self);
        self.seen = seen;
        self.next_id = next_id;
        out
    }
}

/// Decoder-side walk state: wire id → rebuilt object, for aliasing.
pub(crate) struct UnmarshalState {
    by_id: HashMap<u32, Obj>,
}

impl UnmarshalState {
    pub fn new() -> UnmarshalState {
        UnmarshalState { by_id: HashMap::new() }
    }
}

struct ServerState {
    shutdown: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

// ── Node ────────────────────────────────────────────────────────────────────

/// One distribution runtime. Construct with [`Node::new`], optionally
/// start its server with [`Node::serve`].
pub struct Node {
    host: String,
    port: RwLock<u16>,
    failure_mode: RwLock<FailureMode>,
    browse_details: bool,
    registry: Registry,
    policy: PolicyStore,
    classes: ClassRegistry,
    proxies: Mutex<HashMap<Guid, Arc<ProxyHandle>>>,
    proxy_configs: Mutex<HashMap<String, Arc<ProxyConfig>>>,
    /// When set, every object is passed by reference without consulting
    /// the policy store at all (measurement aid).
    bypass_policy: AtomicBool,
    outbound_requests: AtomicU64,
    capture: Mutex<Option<Vec<Vec<u8>>>>,
    server: Mutex<Option<ServerState>>,
}

impl Node {
    pub fn new(config: NodeConfig) -> Arc<Node> {
        Arc::new(Node {
            host: config.host,
            port: RwLock::new(config.port),
            failure_mode: RwLock::new(config.failure_mode),
            browse_details: config.browse_details,
            registry: Registry::new(),
            policy: PolicyStore::new(),
            classes: ClassRegistry::new(),
            proxies: Mutex::new(HashMap::new()),
            proxy_configs: Mutex::new(HashMap::new()),
            bypass_policy: AtomicBool::new(false),
            outbound_requests: AtomicU64::new(0),
            capture: Mutex::new(None),
            server: Mutex::new(None),
        })
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn port(&self) -> u16 {
        *self.port.read().unwrap()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn policy(&self) -> &PolicyStore {
        &self.policy
    }

    pub fn classes(&self) -> &ClassRegistry {
        &self.classes
    }

    pub fn failure_mode(&self) -> FailureMode {
        *self.failure_mode.read().unwrap()
    }

    pub fn set_failure_mode(&self, mode: FailureMode) {
        *self.failure_mode.write().unwrap() = mode;
    }

    pub fn policy_bypass(&self) -> bool {
        self.bypass_policy.load(Ordering::Relaxed)
    }

    /// Toggles the policy short-circuit: when on, every object goes by
    /// reference and the policy store is never consulted.
    pub fn set_policy_bypass(&self, on: bool) {
        self.bypass_policy.store(on, Ordering::Relaxed);
    }

    /// Total outbound HTTP requests (calls and reference fetches) made by
    /// this node since construction.
    pub fn outbound_request_count(&self) -> u64 {
        self.outbound_requests.load(Ordering::SeqCst)
    }

    /// Starts recording outbound request bodies (test aid).
    pub fn begin_outbound_capture(&self) {
        *self.capture.lock().unwrap() = Some(Vec::new());
    }

    pub fn take_outbound_capture(&self) -> Vec<Vec<u8>> {
        self.capture.lock().unwrap().take().unwrap_or_default()
    }

    fn count_outbound(&self, body: &[u8]) {
        self.outbound_requests.fetch_add(1, Ordering::SeqCst);
        if let Some(captured) = self.capture.lock().unwrap().as_mut() {
            captured.push(body.to_vec());
        }
    }

    /// Publishes an object under a name (see [`Registry::expose`]).
    pub fn expose(
        &self,
        name: &str,
        adaptor: Arc<ServiceAdaptor>,
        remote_type: Option<RemoteType>,
    ) -> Result<Arc<ServiceRecord>, RegistryError> {
        self.registry.expose(name, adaptor, remote_type)
    }

    /// Declares the remote type instances of a class are published under
    /// when marshalled by reference.
    pub fn associate(&self, class_name: &str, remote_type: RemoteType) {
        self.registry.associate(class_name, remote_type);
    }

    // ── Server lifecycle ───────────────────────────────────────────────

    /// Binds the listener and starts answering requests; returns the
    /// bound port. A port of 0 in the config picks a free one, which is
    /// then also what handed-out references advertise.
    pub fn serve(self: &Arc<Self>) -> io::Result<u16> {
        let mut server = self.server.lock().unwrap();
        if server.is_some() {
            return Err(io::Error::new(io::ErrorKind::AlreadyExists, "already serving"));
        }
        let listener = TcpListener::bind((self.host.as_str(), self.port()))?;
        let port = listener.local_addr()?.port();
        *self.port.write().unwrap() = port;
        let shutdown = Arc::new(AtomicBool::new(false));
        let node = Arc::clone(self);
        let flag = Arc::clone(&shutdown);
        let join = std::thread::spawn(move || http::serve(node, listener, flag));
        *server = Some(ServerState { shutdown, join: Some(join) });
        log::info!("serving on {}:{}", self.host, port);
        Ok(port)
    }

    /// Stops the server (idempotent). In-flight connections finish on
    /// their own threads.
    pub fn shutdown(&self) {
        let state = self.server.lock().unwrap().take();
        if let Some(mut state) = state {
            state.shutdown.store(true, Ordering::SeqCst);
            // Wake the accept loop so it observes the flag.
            let _ = TcpStream::connect((self.host.as_str(), self.port()));
            if let Some(join) = state.join.take() {
                let _ = join.join();
            }
        }
    }

    // ── Marshalling: objects → wire values ────────────────────────────

    pub(crate) fn marshal_obj(
        &self,
        obj: &Obj,
        ctx: Ctx<'_>,
        budget: Depth,
        st: &mut MarshalState,
    ) -> Result<Value, MarshalError> {
        match obj {
            Obj::Null => Ok(Value::Null),
            Obj::I32(v) => Ok(Value::i32(*v)),
            Obj::I64(v) => Ok(Value::i64(*v)),
            Obj::F64(v) => Ok(Value::f64(*v)),
            Obj::Bool(v) => Ok(Value::bool(*v)),
            Obj::Text(s) => Ok(Value::Text(s.clone())),
            Obj::List(list) => {
                let identity = Arc::as_ptr(list) as *const () as usize;
                if let Some(&id) = st.seen.get(&identity) {
                    return Ok(Value::BackRef(id));
                }
                let id = st.assign_id();
                st.seen.insert(identity, id);
                let mut items = Vec::with_capacity(list.items.len());
                for item in &list.items {
                    items.push(self.marshal_obj(item, ctx, budget, st)?);
                }
                Ok(Value::List { elem_class: list.elem_class.clone(), id, items })
            }
            // A proxy re-transmits as the reference it holds, with its
            // current cache as the snapshots; no policy question arises.
            Obj::Proxy(p) => Ok(Value::Ref(p.current_ior())),
            Obj::Instance(inst) => self.marshal_instance(inst, ctx, budget, st),
        }
    }

    fn marshal_instance(
        &self,
        inst: &Instance,
        ctx: Ctx<'_>,
        budget: Depth,
        st: &mut MarshalState,
    ) -> Result<Value, MarshalError> {
        let identity = inst.identity();
        if let Some(&id) = st.seen.get(&identity) {
            return Ok(Value::BackRef(id));
        }
        let class = inst.class_name();
        let (mut mechanism, effective_budget) = if self.policy_bypass() {
            (PassingMechanism::ByReference, Depth::Unbounded)
        } else {
            let decision = match ctx {
                Ctx::Argument { method, index } => {
                    self.policy.resolve_argument(method, index, class)
                }
                Ctx::Return { method } => self.policy.resolve_return(method, class),
                Ctx::Nested => self.policy.resolve_nested(class),
            };
            match decision.winner {
                // A winning rule installs its own depth budget.
                Some(rule) => (rule.mechanism, rule.depth),
                // Defaults leave the surrounding budget in force.
                None => (decision.mechanism, budget),
            }
        };
        if mechanism == PassingMechanism::ByValue && effective_budget.exhausted() {
            mechanism = PassingMechanism::ByReference;
        }
        match mechanism {
            PassingMechanism::ByValue => {
                let codec = self
                    .classes
                    .by_value(class)
                    .ok_or_else(|| MarshalError::NotByValueAdapted(class.to_string()))?;
                let fields = (codec.to_fields)(inst)
                    .ok_or_else(|| MarshalError::CodecMismatch(class.to_string()))?;
                let id = st.assign_id();
                // Record before descending so cycles become back-references.
                st.seen.insert(identity, id);
                let child_budget = effective_budget.decremented();
                let mut out = Vec::with_capacity(fields.len());
                for (name, value) in fields {
                    out.push((name, self.marshal_obj(&value, Ctx::Nested, child_budget, st)?));
                }
                Ok(Value::Struct { class: class.to_string(), id, fields: out })
            }
            PassingMechanism::ByReference => {
                let record = self.expose_for_reference(inst)?;
                Ok(Value::Ref(self.make_ior(&record, false, st)?))
            }
        }
    }

    fn expose_for_reference(&self, inst: &Instance) -> Result<Arc<ServiceRecord>, MarshalError> {
        let class = inst.class_name();
        let factory = self
            .classes
            .adaptor_factory(class)
            .ok_or_else(|| MarshalError::NotReferenceAdapted(class.to_string()))?;
        let adaptor =
            factory(inst).ok_or_else(|| MarshalError::CodecMismatch(class.to_string()))?;
        Ok(self.registry.expose_auto(adaptor)?)
    }

    /// Builds the transmissible reference for a service record: endpoint,
    /// identity, remote type (embedded when small or when `force_embed`),
    /// and the policy-declared cached members with fresh value snapshots.
    pub(crate) fn make_ior(
        &self,
        record: &ServiceRecord,
        force_embed: bool,
        st: &mut MarshalState,
    ) -> Result<RemoteObjectRef, MarshalError> {
        let class = record.adaptor.class_name().to_string();
        // A reference must name a reachable endpoint; before `serve` this
        // node has none.
        if self.port() == 0 {
            return Err(MarshalError::NotServing(class));
        }
        let identity = record.adaptor.instance().identity();
        if st.ior_stack.contains(&identity) {
            return Err(MarshalError::SnapshotCycle(class));
        }
        let (field_rules, cached_methods) = self.policy.cached_members(&class);
        let mut cached_fields = Vec::with_capacity(field_rules.len());
        let mut cached_values = Vec::with_capacity(field_rules.len());
        if !field_rules.is_empty() {
            st.ior_stack.push(identity);
            let snapshot: Result<(), MarshalError> = (|| {
                for rule in &field_rules {
                    let accessor = record.adaptor.field_accessor(&rule.field).ok_or_else(|| {
                        MarshalError::AccessorMissing {
                            class: class.clone(),
                            field: rule.field.clone(),
                        }
                    })?;
                    let obj = (accessor.getter)();
                    // Every snapshot is its own id scope: self-contained,
                    // so proxies can re-emit it into any later document.
                    let value = st.scoped(|inner| {
                        self.marshal_obj(&obj, Ctx::Nested, Depth::Unbounded, inner)
                    })?;
                    cached_values.push((rule.field.clone(), value));
                    cached_fields.push(CachedFieldSpec {
                        name: rule.field.clone(),
                        getter_name: rule.getter_name.clone(),
                        setter_name: rule.setter_name.clone(),
                    });
                }
                Ok(())
            })();
            st.ior_stack.pop();
            snapshot?;
        }
        let methods = record.remote_type.methods();
        let embedded = if force_embed || methods.len() <= MAX_EMBEDDED_METHODS {
            Some(methods.to_vec())
        } else {
            None
        };
        Ok(RemoteObjectRef {
            host: self.host.clone(),
            port: self.port(),
            guid: record.guid.clone(),
            remote_type: RemoteTypeInfo {
                name: record.remote_type.type_name().to_string(),
                methods: embedded,
            },
            real_class_name: class,
            cached_fields,
            cached_methods,
            cached_values,
        })
    }

    // ── Unmarshalling: wire values → objects ──────────────────────────

    pub(crate) fn unmarshal_value(
        self: &Arc<Self>,
        value: &Value,
        st: &mut UnmarshalState,
    ) -> Result<Obj, MarshalError> {
        match value {
            Value::Null => Ok(Obj::Null),
            Value::Prim { kind, lexical } => {
                let bad = || MarshalError::BadLexical(lexical.clone());
                Ok(match kind {
                    PrimKind::I32 => Obj::I32(lexical.parse().map_err(|_| bad())?),
                    PrimKind::I64 => Obj::I64(lexical.parse().map_err(|_| bad())?),
                    PrimKind::F64 => Obj::F64(lexical.parse().map_err(|_| bad())?),
                    PrimKind::Bool => Obj::Bool(lexical.parse().map_err(|_| bad())?),
                })
            }
            Value::Text(s) => Ok(Obj::Text(s.clone())),
            Value::Struct { class, id, fields } => {
                let codec = self
                    .classes
                    .by_value(class)
                    .ok_or_else(|| MarshalError::UnknownClass(class.clone()))?;
                let mut rebuilt = Vec::with_capacity(fields.len());
                for (name, value) in fields {
                    rebuilt.push((name.clone(), self.unmarshal_value(value, st)?));
                }
                let instance = (codec.from_fields)(rebuilt).map_err(|reason| {
                    MarshalError::BadFields { class: class.clone(), reason }
                })?;
                let obj = Obj::Instance(instance);
                st.by_id.insert(*id, obj.clone());
                Ok(obj)
            }
            Value::List { elem_class, id, items } => {
                let mut rebuilt = Vec::with_capacity(items.len());
                for item in items {
                    rebuilt.push(self.unmarshal_value(item, st)?);
                }
                let obj = Obj::list(elem_class.clone(), rebuilt);
                st.by_id.insert(*id, obj.clone());
                Ok(obj)
            }
            Value::Ref(ior) => self.resolve_ior(ior),
            Value::BackRef(target) => st
                .by_id
                .get(target)
                .cloned()
                .ok_or(MarshalError::UnresolvableAlias(*target)),
        }
    }

    /// Turns an incoming reference into something callable: the local
    /// object itself for loopback references, an existing proxy (cache
    /// refreshed) when one is already tracking the GUID, or a fresh
    /// proxy.
    pub(crate) fn resolve_ior(
        self: &Arc<Self>,
        ior: &RemoteObjectRef,
    ) -> Result<Obj, MarshalError> {
        if ior.host == self.host && ior.port == self.port() {
            if let Ok(record) = self.registry.lookup(ior.guid.as_str()) {
                return Ok(Obj::Instance(record.adaptor.instance().clone()));
            }
        }
        let mut proxies = self.proxies.lock().unwrap();
        if let Some(existing) = proxies.get(&ior.guid) {
            existing.refresh_from(ior);
            return Ok(Obj::Proxy(Arc::clone(existing)));
        }
        let config = self.intern_config(ior.cache_config());
        for method in &config.cached_methods {
            if !self.classes.has_cached_impl(&ior.real_class_name, method) {
                log::warn!(
                    "reference to {} caches `{}` but no local body is registered for {}",
                    ior.guid,
                    method.canonical(),
                    ior.real_class_name
                );
            }
        }
        let handle = Arc::new(ProxyHandle::new(ior.clone(), config, Arc::downgrade(self)));
        proxies.insert(ior.guid.clone(), Arc::clone(&handle));
        Ok(Obj::Proxy(handle))
    }

    fn intern_config(&self, config: ProxyConfig) -> Arc<ProxyConfig> {
        let mut configs = self.proxy_configs.lock().unwrap();
        Arc::clone(
            configs
                .entry(config.canonical_key())
                .or_insert_with(|| Arc::new(config)),
        )
    }

    // ── Server-side dispatch ───────────────────────────────────────────

    /// Runs one decoded call envelope against the local registry.
    pub(crate) fn dispatch(self: &Arc<Self>, call: &CallEnvelope) -> ReplyEnvelope {
        let reply = |body: ReplyBody| ReplyEnvelope { request_id: call.request_id.clone(), body };
        let fault = |code: DistFaultCode, message: String| {
            reply(ReplyBody::DistFault { code, message })
        };
        let record = match self.registry.lookup(&call.service) {
            Ok(record) => record,
            Err(_) => {
                return fault(
                    DistFaultCode::ServiceNotFound,
                    format!("no service `{}`", call.service),
                )
            }
        };
        let sig = match record.remote_type.find(&call.method, &call.signature) {
            Some(sig) => sig.clone(),
            None => {
                return fault(
                    DistFaultCode::MethodNotFound,
                    format!(
                        "remote type `{}` has no method {}({})",
                        record.remote_type.type_name(),
                        call.method,
                        call.signature.join(",")
                    ),
                )
            }
        };
        // One shared state across the argument list: aliasing may span
        // arguments.
        let mut st = UnmarshalState::new();
        let mut args = Vec::with_capacity(call.args.len());
        for value in &call.args {
            match self.unmarshal_value(value, &mut st) {
                Ok(obj) => args.push(obj),
                Err(e) => return fault(DistFaultCode::BadArguments, e.to_string()),
            }
        }
        let method_fn = match record.adaptor.method_fn(&sig) {
            Some(f) => f,
            None => {
                return fault(
                    DistFaultCode::Internal,
                    format!("service lost adapted method {}", sig.canonical()),
                )
            }
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| method_fn(&args)));
        let result = match outcome {
            Err(_) => {
                return fault(
                    DistFaultCode::Internal,
                    format!("method {} panicked", sig.canonical()),
                )
            }
            Ok(Err(e)) => {
                return reply(ReplyBody::AppFault { class: e.type_name, message: e.message })
            }
            Ok(Ok(obj)) => obj,
        };
        let method_key = MethodKey::of(record.adaptor.class_name(), &sig);
        let mut mst = MarshalState::new();
        match self.marshal_obj(&result, Ctx::Return { method: &method_key }, Depth::Unbounded, &mut mst)
        {
            Ok(value) => reply(ReplyBody::Result(value)),
            Err(e) => fault(DistFaultCode::Internal, format!("result marshalling failed: {e}")),
        }
    }

    pub(crate) fn handle_http(self: &Arc<Self>, request: &http::Request) -> http::Response {
        match request.method.as_str() {
            "POST" => match wire::decode_call(&request.body) {
                Ok(call) => http::Response::xml(wire::encode_reply(&self.dispatch(&call))),
                Err(e) => http::Response::xml(wire::encode_reply(&ReplyEnvelope {
                    request_id: String::new(),
                    body: ReplyBody::DistFault {
                        code: DistFaultCode::BadArguments,
                        message: format!("undecodable call envelope: {e}"),
                    },
                })),
            },
            "GET" => {
                let key = request.path.trim_start_matches('/');
                let wants_xml = request
                    .header("accept")
                    .map_or(false, |a| a.contains("application/xml"));
                if key.is_empty() {
                    return http::Response::html(browse::index_page(self));
                }
                match self.registry.lookup(key) {
                    Ok(record) => {
                        if wants_xml {
                            // A directly fetched reference always embeds
                            // the full signature list.
                            let mut st = MarshalState::new();
                            match self.make_ior(&record, true, &mut st) {
                                Ok(ior) => {
                                    http::Response::xml(wire::encode_value(&Value::Ref(ior)))
                                }
                                Err(e) => http::Response {
                                    status: 500,
                                    content_type: "text/plain",
                                    body: format!("reference unavailable: {e}").into_bytes(),
                                },
                            }
                        } else {
                            http::Response::html(browse::service_page(self, &record))
                        }
                    }
                    Err(_) => http::Response::not_found("no such service"),
                }
            }
            _ => http::Response::method_not_allowed(),
        }
    }

    // ── Client side ────────────────────────────────────────────────────

    fn request_id() -> String {
        let mut bytes = [0u8; 8];
        rand::thread_rng().fill_bytes(&mut bytes);
        hex::encode(bytes)
    }

    fn transport_error(host: &str, port: u16, e: io::Error) -> CallError {
        CallError::Dist {
            code: DistFaultCode::Transport,
            message: format!("{host}:{port}: {e}"),
        }
    }

    fn send_call(
        &self,
        host: &str,
        port: u16,
        call: &CallEnvelope,
    ) -> Result<ReplyEnvelope, CallError> {
        let body = wire::encode_call(call);
        self.count_outbound(&body);
        let path = format!("/{}", call.service);
        let (status, reply) =
            http::send_request(host, port, "POST", &path, Some("application/xml"), &body)
                .map_err(|e| Self::transport_error(host, port, e))?;
        if status != 200 {
            return Err(CallError::Dist {
                code: DistFaultCode::Transport,
                message: format!("{host}:{port} answered HTTP {status}"),
            });
        }
        let reply = wire::decode_reply(&reply).map_err(|e| CallError::Dist {
            code: DistFaultCode::Internal,
            message: format!("undecodable reply: {e}"),
        })?;
        // An empty request id marks an envelope-level fault minted before the
        // call could be decoded; let it flow into normal fault handling.
        if !reply.request_id.is_empty() && reply.request_id != call.request_id {
            return Err(CallError::Dist {
                code: DistFaultCode::Internal,
                message: "reply for a different request".into(),
            });
        }
        Ok(reply)
    }

    fn fetch_ior(&self, host: &str, port: u16, key: &str) -> Result<RemoteObjectRef, CallError> {
        self.count_outbound(&[]);
        let (status, body) = http::send_request(
            host,
            port,
            "GET",
            &format!("/{key}"),
            Some("application/xml"),
            &[],
        )
        .map_err(|e| Self::transport_error(host, port, e))?;
        match status {
            200 => match wire::decode_value(&body) {
                Ok(Value::Ref(ior)) => Ok(ior),
                Ok(_) => Err(CallError::Dist {
                    code: DistFaultCode::Internal,
                    message: "reference fetch returned a non-reference".into(),
                }),
                Err(e) => Err(CallError::Dist {
                    code: DistFaultCode::Internal,
                    message: format!("undecodable reference: {e}"),
                }),
            },
            404 => Err(CallError::Dist {
                code: DistFaultCode::ServiceNotFound,
                message: format!("{host}:{port} has no service `{key}`"),
            }),
            other => Err(CallError::Dist {
                code: DistFaultCode::Transport,
                message: format!("{host}:{port} answered HTTP {other}"),
            }),
        }
    }

    /// Fetches the reference a peer publishes under `key` (name or GUID)
    /// and resolves it. Lookup failures always propagate.
    pub fn get_remote_reference(
        self: &Arc<Self>,
        host: &str,
        port: u16,
        key: &str,
    ) -> Result<Obj, CallError> {
        let ior = self.fetch_ior(host, port, key)?;
        Ok(self.resolve_ior(&ior)?)
    }

    /// Applies the failure mode to a distribution fault.
    fn absorb_dist(
        &self,
        code: DistFaultCode,
        message: String,
        return_type: &str,
    ) -> Result<Obj, CallError> {
        match self.failure_mode() {
            FailureMode::Propagate => Err(CallError::Dist { code, message }),
            FailureMode::SuppressWithDefaults => {
                log::debug!("suppressed {} fault: {message}", code.name());
                Ok(default_return(return_type))
            }
        }
    }

    /// The proxy invocation path; see [`ProxyHandle::invoke`].
    pub(crate) fn proxy_invoke(
        self: &Arc<Self>,
        proxy: &Arc<ProxyHandle>,
        method: &str,
        args: Vec<Obj>,
    ) -> Result<Obj, CallError> {
        let config = Arc::clone(proxy.config());

        // 1. Cached-field read: answered from the local snapshot.
        if let Some(field) = config.field_by_getter(method, args.len()) {
            let value = proxy.cached_value(&field.name).unwrap_or(Value::Null);
            let mut st = UnmarshalState::new();
            return Ok(self.unmarshal_value(&value, &mut st)?);
        }

        // 2. Cached-field write: updates only the local snapshot.
        if let Some(field) = config.field_by_setter(method, args.len()) {
            let mut st = MarshalState::new();
            let value = self.marshal_obj(&args[0], Ctx::Nested, Depth::Unbounded, &mut st)?;
            proxy.set_cached_value(&field.name, value);
            return Ok(Obj::Null);
        }

        // 3. Cached method: runs the registered local body.
        if let Some(sig) = config.cached_method(method, args.len()) {
            let class = proxy.real_class_name();
            let body = self
                .classes
                .cached_impl(&class, sig)
                .ok_or_else(|| ProxyError::NoLocalImpl(sig.canonical()))?;
            return body(proxy, &args).map_err(CallError::App);
        }

        // 4. Remote invocation. Signatures may need fetching first.
        if !proxy.methods_known() {
            let (host, port) = proxy.host_port();
            let guid = proxy.guid();
            match self.fetch_ior(&host, port, guid.as_str()) {
                Ok(fresh) => proxy.refresh_from(&fresh),
                Err(CallError::Dist { code, message }) => {
                    return self.absorb_dist(code, message, "");
                }
                Err(e) => return Err(e),
            }
            if !proxy.methods_known() {
                return self.absorb_dist(
                    DistFaultCode::Internal,
                    "fetched reference does not embed signatures".into(),
                    "",
                );
            }
        }
        let sig = proxy.select_signature(method, args.len())?;
        let method_key = MethodKey::of(&proxy.real_class_name(), &sig);
        let mut st = MarshalState::new();
        let mut values = Vec::with_capacity(args.len());
        for (index, arg) in args.iter().enumerate() {
            values.push(self.marshal_obj(
                arg,
                Ctx::Argument { method: &method_key, index: index as u32 },
                Depth::Unbounded,
                &mut st,
            )?);
        }
        let call = CallEnvelope {
            service: proxy.guid().as_str().to_string(),
            method: method.to_string(),
            signature: sig.param_type_names.clone(),
            request_id: Self::request_id(),
            args: values,
        };
        let (host, port) = proxy.host_port();
        let reply = match self.send_call(&host, port, &call) {
            Ok(reply) => reply,
            Err(CallError::Dist { code, message }) => {
                return self.absorb_dist(code, message, &sig.return_type_name);
            }
            Err(e) => return Err(e),
        };
        match reply.body {
            ReplyBody::Result(value) => {
                let mut ust = UnmarshalState::new();
                match self.unmarshal_value(&value, &mut ust) {
                    Ok(obj) => Ok(obj),
                    Err(e) => self.absorb_dist(
                        DistFaultCode::Internal,
                        format!("reply unusable: {e}"),
                        &sig.return_type_name,
                    ),
                }
            }
            ReplyBody::AppFault { class, message } => {
                Err(CallError::App(AppException::new(class, message)))
            }
            ReplyBody::DistFault { code, message } => {
                self.absorb_dist(code, message, &sig.return_type_name)
            }
        }
    }
}
