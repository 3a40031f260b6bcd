//! Self-describing XML wire format for values and call/reply envelopes.
//!
//! Every transmissible value renders as one of seven elements:
//!
//! ```xml
//! <null/>
//! <prim type="i32">42</prim>              (types: i32, i64, f64, bool)
//! <text>hello</text>
//! <struct class="Point" id="1">
//!   <field name="x"><prim type="i32">3</prim></field>
//! </struct>
//! <list elem-class="Point" id="1">...</list>
//! <ref>...</ref>                          (remote-object reference)
//! <backref target="1"/>
//! ```
//!
//! `struct` and `list` nodes are numbered in document pre-order starting at
//! 1; a document that repeats or skips an id is rejected. When the same
//! node would appear a second time (shared subtree or cycle) the encoder
//! emits `<backref target="N"/>` pointing at the first occurrence, so
//! object graphs survive a round trip with aliasing intact. A `backref`
//! whose target has not been opened yet is rejected as dangling.
//!
//! Encoding is canonical: fixed attribute order, single-quote-free
//! escaping of the five XML entities, no inter-element whitespace, and
//! self-closing tags for empty elements. Two equal values therefore
//! always serialize to identical bytes, which keeps documents directly
//! comparable and golden-testable.
//!
//! Call and reply envelopes wrap values for transport:
//!
//! ```xml
//! <rrt-envelope version="1">
//!   <call service="S" method="m" sig="i32,Point" request-id="R">
//!     <arg index="0">...</arg>
//!   </call>
//! </rrt-envelope>
//! ```
//!
//! with replies carrying exactly one of `<result>`, `<app-fault>` (an
//! exception raised by the target object) or `<dist-fault>` (a failure of
//! the distribution machinery itself). The `sig` attribute lists the
//! parameter type names of the method overload being invoked and is
//! omitted for zero-argument calls.

pub(crate) mod ior;
pub(crate) mod xml;

use std::collections::HashMap;

use thiserror::Error;

use crate::remoteref::RemoteObjectRef;
use xml::{XmlError, XmlReader, XmlWriter};

/// Wire codec failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    /// Input does not conform to the canonical grammar.
    #[error("malformed document: {0}")]
    Malformed(String),
    /// A `backref` names an id no open or completed node carries.
    #[error("back-reference to unseen id {0}")]
    DanglingBackRef(u32),
}

impl From<XmlError> for WireError {
    fn from(e: XmlError) -> Self {
        WireError::Malformed(e.to_string())
    }
}

// ── Value model ─────────────────────────────────────────────────────────────

/// The four primitive wire types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimKind {
    I32,
    I64,
    F64,
    Bool,
}

impl PrimKind {
    pub fn name(self) -> &'static str {
        match self {
            PrimKind::I32 => "i32",
            PrimKind::I64 => "i64",
            PrimKind::F64 => "f64",
            PrimKind::Bool => "bool",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "i32" => Some(PrimKind::I32),
            "i64" => Some(PrimKind::I64),
            "f64" => Some(PrimKind::F64),
            "bool" => Some(PrimKind::Bool),
            _ => None,
        }
    }

    /// Checks that a lexical form denotes a value of this type.
    fn validate(self, lexical: &str) -> bool {
        match self {
            PrimKind::I32 => lexical.parse::<i32>().is_ok(),
            PrimKind::I64 => lexical.parse::<i64>().is_ok(),
            PrimKind::F64 => lexical.parse::<f64>().is_ok(),
            PrimKind::Bool => lexical == "true" || lexical == "false",
        }
    }
}

/// A decoded wire value.
///
/// Primitives keep their lexical form as a string: equality and
/// re-encoding are then exact and total (no NaN special cases), and the
/// typed accessors parse on demand. `Struct` and `List` carry the id they
/// were (or will be) numbered with; builders may leave it 0 and let the
/// encoder assign fresh pre-order ids.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Prim { kind: PrimKind, lexical: String },
    Text(String),
    Struct { class: String, id: u32, fields: Vec<(String, Value)> },
    List { elem_class: String, id: u32, items: Vec<Value> },
    Ref(RemoteObjectRef),
    BackRef(u32),
}

impl Value {
    pub fn i32(v: i32) -> Value {
        Value::Prim { kind: PrimKind::I32, lexical: v.to_string() }
    }

    pub fn i64(v: i64) -> Value {
        Value::Prim { kind: PrimKind::I64, lexical: v.to_string() }
    }

    pub fn f64(v: f64) -> Value {
        Value::Prim { kind: PrimKind::F64, lexical: v.to_string() }
    }

    pub fn bool(v: bool) -> Value {
        Value::Prim { kind: PrimKind::Bool, lexical: v.to_string() }
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    /// A struct with encoder-assigned id.
    pub fn structure(class: impl Into<String>, fields: Vec<(String, Value)>) -> Value {
        Value::Struct { class: class.into(), id: 0, fields }
    }

    /// A list with encoder-assigned id.
    pub fn list(elem_class: impl Into<String>, items: Vec<Value>) -> Value {
        Value::List { elem_class: elem_class.into(), id: 0, items }
    }

    pub fn as_i32(&self) -> Option<i32> {
        match self {
            Value::Prim { kind: PrimKind::I32, lexical } => lexical.parse().ok(),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Prim { kind: PrimKind::I64, lexical } => lexical.parse().ok(),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Prim { kind: PrimKind::F64, lexical } => lexical.parse().ok(),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Prim { kind: PrimKind::Bool, lexical } => lexical.parse().ok(),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

// ── Id bookkeeping ──────────────────────────────────────────────────────────

/// Encoder-side id allocator. Ids are assigned in document pre-order
/// starting at 1; builder-supplied ids are remapped so back-references
/// keep pointing at the same node after renumbering.
pub(crate) struct IdSpace {
    next: u32,
    remap: HashMap<u32, u32>,
}

impl IdSpace {
    pub fn new() -> Self {
        IdSpace { next: 1, remap: HashMap::new() }
    }

    pub fn assign(&mut self, builder_id: u32) -> u32 {
        let id = self.next;
        self.next += 1;
        if builder_id != 0 {
            self.remap.insert(builder_id, id);
        }
        id
    }

    pub fn resolve(&self, target: u32) -> u32 {
        *self.remap.get(&target).unwrap_or(&target)
    }
}

/// Decoder-side id checker: enforces strict pre-order numbering and
/// validates back-reference targets against the ids opened so far.
pub(crate) struct IdTracker {
    count: u32,
}

impl IdTracker {
    pub fn new() -> Self {
        IdTracker { count: 0 }
    }

    pub fn begin(&mut self, id: u32) -> Result<(), WireError> {
        if id != self.count + 1 {
            return Err(WireError::Malformed(format!(
                "node id {} out of order (expected {})",
                id,
                self.count + 1
            )));
        }
        self.count += 1;
        Ok(())
    }

    pub fn check_target(&self, target: u32) -> Result<(), WireError> {
        if target == 0 || target > self.count {
            return Err(WireError::DanglingBackRef(target));
        }
        Ok(())
    }
}

// ── Value codec ─────────────────────────────────────────────────────────────

/// Encodes one standalone value document.
pub fn encode_value(v: &Value) -> Vec<u8> {
    let mut w = XmlWriter::new();
    let mut ids = IdSpace::new();
    write_value(&mut w, v, &mut ids);
    w.into_bytes()
}

/// Decodes one standalone value document.
pub fn decode_value(input: &[u8]) -> Result<Value, WireError> {
    let mut r = XmlReader::new(input)?;
    let mut ids = IdTracker::new();
    let v = read_value(&mut r, &mut ids)?;
    r.expect_eof()?;
    Ok(v)
}

pub(crate) fn write_value(w: &mut XmlWriter, v: &Value, ids: &mut IdSpace) {
    match v {
        Value::Null => {
            w.start("null");
            w.finish_empty();
        }
        Value::Prim { kind, lexical } => {
            w.start("prim");
            w.attr("type", kind.name());
            w.finish_start();
            w.text(lexical);
            w.end("prim");
        }
        Value::Text(s) => {
            w.start("text");
            if s.is_empty() {
                w.finish_empty();
            } else {
                w.finish_start();
                w.text(s);
                w.end("text");
            }
        }
        Value::Struct { class, id, fields } => {
            let assigned = ids.assign(*id);
            w.start("struct");
            w.attr("class", class);
            w.attr_u32("id", assigned);
            if fields.is_empty() {
                w.finish_empty();
            } else {
                w.finish_start();
                for (name, value) in fields {
                    w.start("field");
                    w.attr("name", name);
                    w.finish_start();
                    write_value(w, value, ids);
                    w.end("field");
                }
                w.end("struct");
            }
        }
        Value::List { elem_class, id, items } => {
            let assigned = ids.assign(*id);
            w.start("list");
            w.attr("elem-class", elem_class);
            w.attr_u32("id", assigned);
            if items.is_empty() {
                w.finish_empty();
            } else {
                w.finish_start();
                for item in items {
                    write_value(w, item, ids);
                }
                w.end("list");
            }
        }
        Value::Ref(r) => ior::write_ior(w, r),
        Value::BackRef(target) => {
            w.start("backref");
            w.attr_u32("target", ids.resolve(*target));
            w.finish_empty();
        }
    }
}

pub(crate) fn read_value(r: &mut XmlReader, ids: &mut IdTracker) -> Result<Value, WireError> {
    let tag = r
        .peek_open()
        .ok_or_else(|| WireError::Malformed("expected a value element".into()))?
        .to_string();
    match tag.as_str() {
        "null" => {
            let el = r.open("null")?;
            el.check_attrs(&[])?;
            require_empty(r, el.self_closed, "null")?;
            Ok(Value::Null)
        }
        "prim" => {
            let el = r.open("prim")?;
            el.check_attrs(&["type"])?;
            let kind = el
                .attr("type")
                .and_then(PrimKind::from_name)
                .ok_or_else(|| WireError::Malformed("prim with unknown type".into()))?;
            let lexical = if el.self_closed { String::new() } else { r.text()? };
            if !el.self_closed {
                r.close("prim")?;
            }
            if !kind.validate(&lexical) {
                return Err(WireError::Malformed(format!(
                    "`{}` is not a valid {}",
                    lexical,
                    kind.name()
                )));
            }
            Ok(Value::Prim { kind, lexical })
        }
        "text" => {
            let el = r.open("text")?;
            el.check_attrs(&[])?;
            if el.self_closed {
                return Ok(Value::Text(String::new()));
            }
            let s = r.text()?;
            r.close("text")?;
            Ok(Value::Text(s))
        }
        "struct" => {
            let el = r.open("struct")?;
            el.check_attrs(&["class", "id"])?;
            let class = required_attr(&el, "class", "struct")?;
            let id = parse_id(&el, "struct")?;
            ids.begin(id)?;
            let mut fields = Vec::new();
            if !el.self_closed {
                while !r.at_close("struct") {
                    let f = r.open("field")?;
                    f.check_attrs(&["name"])?;
                    let name = required_attr(&f, "name", "field")?;
                    if f.self_closed {
                        return Err(WireError::Malformed("field without a value".into()));
                    }
                    let value = read_value(r, ids)?;
                    r.close("field")?;
                    fields.push((name, value));
                }
                r.close("struct")?;
            }
            Ok(Value::Struct { class, id, fields })
        }
        "list" => {
            let el = r.open("list")?;
            el.check_attrs(&["elem-class", "id"])?;
            let elem_class = required_attr(&el, "elem-class", "list")?;
            let id = parse_id(&el, "list")?;
            ids.begin(id)?;
            let mut items = Vec::new();
            if !el.self_closed {
                while !r.at_close("list") {
                    items.push(read_value(r, ids)?);
                }
                r.close("list")?;
            }
            Ok(Value::List { elem_class, id, items })
        }
        "ref" => Ok(Value::Ref(ior::read_ior(r)?)),
        "backref" => {
            let el = r.open("backref")?;
            el.check_attrs(&["target"])?;
            let target: u32 = el
                .attr("target")
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| WireError::Malformed("backref without numeric target".into()))?;
            require_empty(r, el.self_closed, "backref")?;
            ids.check_target(target)?;
            Ok(Value::BackRef(target))
        }
        other => Err(WireError::Malformed(format!("unknown value element `{other}`"))),
    }
}

pub(crate) fn required_attr(el: &xml::Element, name: &str, tag: &str) -> Result<String, WireError> {
    el.attr(name)
        .map(str::to_string)
        .ok_or_else(|| WireError::Malformed(format!("{tag} missing `{name}` attribute")))
}

fn parse_id(el: &xml::Element, tag: &str) -> Result<u32, WireError> {
    el.attr("id")
        .and_then(|v| v.parse().ok())
        .filter(|&v| v != 0)
        .ok_or_else(|| WireError::Malformed(format!("{tag} missing positive `id` attribute")))
}

fn require_empty(r: &mut XmlReader, self_closed: bool, tag: &str) -> Result<(), WireError> {
    if self_closed {
        return Ok(());
    }
    r.close(tag)
        .map_err(|_| WireError::Malformed(format!("`{tag}` must be empty")))
}

// ── Envelopes ───────────────────────────────────────────────────────────────

/// A method invocation in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct CallEnvelope {
    pub service: String,
    pub method: String,
    /// Parameter type names of the target overload, in order.
    pub signature: Vec<String>,
    pub request_id: String,
    pub args: Vec<Value>,
}

/// The outcome of a dispatched call.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplyEnvelope {
    pub request_id: String,
    pub body: ReplyBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplyBody {
    /// Normal completion; void methods yield `Value::Null`.
    Result(Value),
    /// The target object raised an exception.
    AppFault { class: String, message: String },
    /// The distribution machinery failed.
    DistFault { code: DistFaultCode, message: String },
}

/// Failure categories of the runtime itself (never of application code).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistFaultCode {
    ServiceNotFound,
    MethodNotFound,
    BadArguments,
    Transport,
    Internal,
}

impl DistFaultCode {
    pub fn name(self) -> &'static str {
        match self {
            DistFaultCode::ServiceNotFound => "SERVICE_NOT_FOUND",
            DistFaultCode::MethodNotFound => "METHOD_NOT_FOUND",
            DistFaultCode::BadArguments => "BAD_ARGUMENTS",
            DistFaultCode::Transport => "TRANSPORT",
            DistFaultCode::Internal => "INTERNAL",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "SERVICE_NOT_FOUND" => Some(DistFaultCode::ServiceNotFound),
            "METHOD_NOT_FOUND" => Some(DistFaultCode::MethodNotFound),
            "BAD_ARGUMENTS" => Some(DistFaultCode::BadArguments),
            "TRANSPORT" => Some(DistFaultCode::Transport),
            "INTERNAL" => Some(DistFaultCode::Internal),
            _ => None,
        }
    }
}

fn open_envelope(r: &mut XmlReader) -> Result<(), WireError> {
    let el = r.open("rrt-envelope")?;
    el.check_attrs(&["version"])?;
    match el.attr("version") {
        Some("1") => {}
        Some(v) => {
            return Err(WireError::Malformed(format!("unsupported envelope version `{v}`")))
        }
        None => return Err(WireError::Malformed("envelope missing version".into())),
    }
    if el.self_closed {
        return Err(WireError::Malformed("empty envelope".into()));
    }
    Ok(())
}

/// Encodes a call envelope. All `struct`/`list` ids across the argument
/// list are assigned from a single pre-order sequence, so an argument may
/// back-reference a node first transmitted in an earlier argument.
pub fn encode_call(call: &CallEnvelope) -> Vec<u8> {
    debug_assert_eq!(call.signature.len(), call.args.len());
    let mut w = XmlWriter::new();
    let mut ids = IdSpace::new();
    w.start("rrt-envelope");
    w.attr("version", "1");
    w.finish_start();
    w.start("call");
    w.attr("service", &call.service);
    w.attr("method", &call.method);
    if !call.signature.is_empty() {
        w.attr("sig", &call.signature.join(","));
    }
    w.attr("request-id", &call.request_id);
    if call.args.is_empty() {
        w.finish_empty();
    } else {
        w.finish_start();
        for (index, arg) in call.args.iter().enumerate() {
            w.start("arg");
            w.attr_u32("index", index as u32);
            w.finish_start();
            write_value(&mut w, arg, &mut ids);
            w.end("arg");
        }
        w.end("call");
    }
    w.end("rrt-envelope");
    w.into_bytes()
}

pub fn decode_call(input: &[u8]) -> Result<CallEnvelope, WireError> {
    let mut r = XmlReader::new(input)?;
    open_envelope(&mut r)?;
    let el = r.open("call")?;
    el.check_attrs(&["service", "method", "sig", "request-id"])?;
    let service = required_attr(&el, "service", "call")?;
    let method = required_attr(&el, "method", "call")?;
    let request_id = required_attr(&el, "request-id", "call")?;
    let signature = ior::parse_sig(&el)?;
    let mut args = Vec::new();
    let mut ids = IdTracker::new();
    if !el.self_closed {
        while !r.at_close("call") {
            let a = r.open("arg")?;
            a.check_attrs(&["index"])?;
            let index: u32 = a
                .attr("index")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| WireError::Malformed("arg without numeric index".into()))?;
            if index as usize != args.len() {
                return Err(WireError::Malformed(format!(
                    "arg index {} out of order (expected {})",
                    index,
                    args.len()
                )));
            }
            if a.self_closed {
                return Err(WireError::Malformed("arg without a value".into()));
            }
            args.push(read_value(&mut r, &mut ids)?);
            r.close("arg")?;
        }
        r.close("call")?;
    }
    if args.len() != signature.len() {
        return Err(WireError::Malformed(format!(
            "{} args do not match signature of {} parameters",
            args.len(),
            signature.len()
        )));
    }
    r.close("rrt-envelope")?;
    r.expect_eof()?;
    Ok(CallEnvelope { service, method, signature, request_id, args })
}

pub fn encode_reply(reply: &ReplyEnvelope) -> Vec<u8> {
    let mut w = XmlWriter::new();
    w.start("rrt-envelope");
    w.attr("version", "1");
    w.finish_start();
    match &reply.body {
        ReplyBody::Result(value) => {
            let mut ids = IdSpace::new();
            w.start("result");
            w.attr("request-id", &reply.request_id);
            w.finish_start();
            write_value(&mut w, value, &mut ids);
            w.end("result");
        }
        ReplyBody::AppFault { class, message } => {
            w.start("app-fault");
            w.attr("class", class);
            w.attr("request-id", &reply.request_id);
            write_fault_message(&mut w, "app-fault", message);
        }
        ReplyBody::DistFault { code, message } => {
            w.start("dist-fault");
            w.attr("code", code.name());
            w.attr("request-id", &reply.request_id);
            write_fault_message(&mut w, "dist-fault", message);
        }
    }
    w.end("rrt-envelope");
    w.into_bytes()
}

fn write_fault_message(w: &mut XmlWriter, tag: &str, message: &str) {
    if message.is_empty() {
        w.finish_empty();
    } else {
        w.finish_start();
        w.text(message);
        w.end(tag);
    }
}

pub fn decode_reply(input: &[u8]) -> Result<ReplyEnvelope, WireError> {
    let mut r = XmlReader::new(input)?;
    open_envelope(&mut r)?;
    let tag = r
        .peek_open()
        .ok_or_else(|| WireError::Malformed("expected a reply element".into()))?
        .to_string();
    let (request_id, body) = match tag.as_str() {
        "result" => {
            let el = r.open("result")?;
            el.check_attrs(&["request-id"])?;
            let request_id = required_attr(&el, "request-id", "result")?;
            if el.self_closed {
                return Err(WireError::Malformed("result without a value".into()));
            }
            let mut ids = IdTracker::new();
            let value = read_value(&mut r, &mut ids)?;
            r.close("result")?;
            (request_id, ReplyBody::Result(value))
        }
        "app-fault" => {
            let el = r.open("app-fault")?;
            el.check_attrs(&["class", "request-id"])?;
            let class = required_attr(&el, "class", "app-fault")?;
            let request_id = required_attr(&el, "request-id", "app-fault")?;
            let message = read_fault_message(&mut r, "app-fault", el.self_closed)?;
            (request_id, ReplyBody::AppFault { class, message })
        }
        "dist-fault" => {
            let el = r.open("dist-fault")?;
            el.check_attrs(&["code", "request-id"])?;
            let code = el
                .attr("code")
                .and_then(DistFaultCode::from_name)
                .ok_or_else(|| WireError::Malformed("dist-fault with unknown code".into()))?;
            let request_id = required_attr(&el, "request-id", "dist-fault")?;
            let message = read_fault_message(&mut r, "dist-fault", el.self_closed)?;
            (request_id, ReplyBody::DistFault { code, message })
        }
        other => {
            return Err(WireError::Malformed(format!("unknown reply element `{other}`")))
        }
    };
    r.close("rrt-envelope")?;
    r.expect_eof()?;
    Ok(ReplyEnvelope { request_id, body })
}

fn read_fault_message(
    r: &mut XmlReader,
    tag: &str,
    self_closed: bool,
) -> Result<String, WireError> {
    if self_closed {
        return Ok(String::new());
    }
    let message = r.text()?;
    r.close(tag)?;
    Ok(message)
}

#[cfg(test)]
mod tests;
