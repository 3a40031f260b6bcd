//! Wire form of remote object references.
//!
//! ```xml
//! <ref>
//!   <ior host="10.0.0.1" port="9001" guid="…40 hex…"
//!        remote-type="IP2PNode" real-class="P2PNode">
//!     <rt-method name="route" sig="Key,Message" returns="void"/>
//!     <cached-field name="key" getter="getKey">…value…</cached-field>
//!     <cached-method name="distanceTo" sig="Key"/>
//!   </ior>
//! </ref>
//! ```
//!
//! `rt-method` children spell out the remote type's signatures. When the
//! type is too wide to embed, the `ior` element instead carries
//! `type-deferred="true"` and the receiver fetches the signatures from
//! the object's home runtime on first need; a reference served directly
//! by that runtime always embeds them. `sig` lists parameter type names
//! comma-separated and is omitted for parameterless methods.
//!
//! Cached-field elements carry a value snapshot taken when the reference
//! was produced. Each snapshot forms its own id scope: `struct`/`list`
//! numbering restarts at 1 inside every `cached-field` and
//! back-references cannot cross the snapshot boundary in either
//! direction. A stored snapshot is therefore self-contained and can be
//! re-emitted verbatim into any later document (proxies are
//! re-transmitted with their current cache, field by field).

use crate::registry::{Guid, MethodSignature};
use crate::remoteref::{CachedFieldSpec, RemoteObjectRef, RemoteTypeInfo};

use super::xml::{Element, XmlReader, XmlWriter};
use super::{read_value, required_attr, write_value, IdSpace, IdTracker, WireError};

pub(crate) fn write_ior(w: &mut XmlWriter, ior: &RemoteObjectRef) {
    w.start("ref");
    w.finish_start();
    w.start("ior");
    w.attr("host", &ior.host);
    w.attr_u32("port", ior.port as u32);
    w.attr("guid", ior.guid.as_str());
    w.attr("remote-type", &ior.remote_type.name);
    w.attr("real-class", &ior.real_class_name);
    if ior.remote_type.methods.is_none() {
        w.attr("type-deferred", "true");
    }
    let empty = ior.remote_type.methods.as_ref().map_or(true, Vec::is_empty)
        && ior.cached_fields.is_empty()
        && ior.cached_methods.is_empty();
    if empty {
        w.finish_empty();
    } else {
        w.finish_start();
        for m in ior.remote_type.methods.as_deref().unwrap_or(&[]) {
            write_method(w, "rt-method", m, true);
        }
        for field in &ior.cached_fields {
            // Each snapshot is its own id scope, keeping it self-contained.
            let mut ids = IdSpace::new();
            let value = ior
                .cached_values
                .iter()
                .find(|(name, _)| *name == field.name)
                .map(|(_, v)| v);
            w.start("cached-field");
            w.attr("name", &field.name);
            w.attr("getter", &field.getter_name);
            if let Some(setter) = &field.setter_name {
                w.attr("setter", setter);
            }
            w.finish_start();
            write_value(w, value.unwrap_or(&super::Value::Null), &mut ids);
            w.end("cached-field");
        }
        for m in &ior.cached_methods {
            write_method(w, "cached-method", m, false);
        }
        w.end("ior");
    }
    w.end("ref");
}

fn write_method(w: &mut XmlWriter, tag: &str, m: &MethodSignature, with_returns: bool) {
    w.start(tag);
    w.attr("name", &m.name);
    if !m.param_type_names.is_empty() {
        w.attr("sig", &m.param_type_names.join(","));
    }
    if with_returns {
        w.attr("returns", &m.return_type_name);
    }
    w.finish_empty();
}

pub(crate) fn read_ior(r: &mut XmlReader) -> Result<RemoteObjectRef, WireError> {
    let ref_el = r.open("ref")?;
    ref_el.check_attrs(&[])?;
    if ref_el.self_closed {
        return Err(WireError::Malformed("ref without ior".into()));
    }
    let el = r.open("ior")?;
    el.check_attrs(&["host", "port", "guid", "remote-type", "real-class", "type-deferred"])?;
    let host = required_attr(&el, "host", "ior")?;
    if host.is_empty() {
        return Err(WireError::Malformed("ior with empty host".into()));
    }
    let port: u16 = el
        .attr("port")
        .and_then(|p| p.parse().ok())
        .filter(|&p| p != 0)
        .ok_or_else(|| WireError::Malformed("ior without usable port".into()))?;
    let guid = el
        .attr("guid")
        .and_then(Guid::parse)
        .ok_or_else(|| WireError::Malformed("ior without well-formed guid".into()))?;
    let type_name = required_attr(&el, "remote-type", "ior")?;
    let real_class_name = required_attr(&el, "real-class", "ior")?;
    let deferred = match el.attr("type-deferred") {
        None => false,
        Some("true") => true,
        Some(other) => {
            return Err(WireError::Malformed(format!("bad type-deferred value `{other}`")))
        }
    };

    let mut methods = Vec::new();
    let mut cached_fields = Vec::new();
    let mut cached_methods = Vec::new();
    let mut cached_values = Vec::new();
    if !el.self_closed {
        while let Some("rt-method") = r.peek_open() {
            methods.push(read_method(r, "rt-method", true)?);
        }
        while let Some("cached-field") = r.peek_open() {
            let mut ids = IdTracker::new();
            let f = r.open("cached-field")?;
            f.check_attrs(&["name", "getter", "setter"])?;
            let name = required_attr(&f, "name", "cached-field")?;
            let getter_name = required_attr(&f, "getter", "cached-field")?;
            let setter_name = f.attr("setter").map(str::to_string);
            if f.self_closed {
                return Err(WireError::Malformed("cached-field without a value".into()));
            }
            let value = read_value(r, &mut ids)?;
            r.close("cached-field")?;
            if cached_fields.iter().any(|c: &CachedFieldSpec| c.name == name) {
                return Err(WireError::Malformed(format!("duplicate cached-field `{name}`")));
            }
            cached_values.push((name.clone(), value));
            cached_fields.push(CachedFieldSpec { name, getter_name, setter_name });
        }
        while let Some("cached-method") = r.peek_open() {
            cached_methods.push(read_method(r, "cached-method", false)?);
        }
        r.close("ior")?;
    }
    if deferred && !methods.is_empty() {
        return Err(WireError::Malformed("deferred remote type with embedded methods".into()));
    }
    r.close("ref")?;
    Ok(RemoteObjectRef {
        host,
        port,
        guid,
        remote_type: RemoteTypeInfo {
            name: type_name,
            methods: if deferred { None } else { Some(methods) },
        },
        real_class_name,
        cached_fields,
        cached_methods,
        cached_values,
    })
}

fn read_method(r: &mut XmlReader, tag: &str, with_returns: bool) -> Result<MethodSignature, WireError> {
    let el = r.open(tag)?;
    let allowed: &[&str] = if with_returns {
        &["name", "sig", "returns"]
    } else {
        &["name", "sig"]
    };
    el.check_attrs(allowed)?;
    let name = required_attr(&el, "name", tag)?;
    let param_type_names = parse_sig(&el)?;
    let return_type_name = if with_returns {
        required_attr(&el, "returns", tag)?
    } else {
        String::new()
    };
    if !el.self_closed {
        r.close(tag)
            .map_err(|_| WireError::Malformed(format!("`{tag}` must be empty")))?;
    }
    Ok(MethodSignature { name, param_type_names, return_type_name })
}

/// Shared parse of the comma-separated `sig` attribute (absent = no
/// parameters; empty names are rejected).
pub(crate) fn parse_sig(el: &Element) -> Result<Vec<String>, WireError> {
    match el.attr("sig") {
        None => Ok(Vec::new()),
        Some("") => Err(WireError::Malformed("empty `sig` attribute".into())),
        Some(s) => {
            let parts: Vec<String> = s.split(',').map(str::to_string).collect();
            if parts.iter().any(String::is_empty) {
                return Err(WireError::Malformed("empty type name in `sig`".into()));
            }
            Ok(parts)
        }
    }
}
