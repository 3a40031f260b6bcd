//! Service manifests for the `node` daemon.
//!
//! A manifest is a plain-text file naming the services a daemon offers,
//! one per line, as whitespace-separated triples:
//!
//! ```text
//! # constructor  remote-type  service-name
//! P2PNode        IP2PNode     P2P
//! P2PNode        IManage      Manage
//! P2PNode        IMonitor     Monitor
//! ```
//!
//! Blank lines and `#` comments are ignored. A `-` in the remote-type
//! column publishes the object's full adapted interface. Repeating a
//! constructor name reuses the instance built for its first line, so the
//! triple above is one object behind three narrow surfaces, not three
//! objects.

use std::collections::HashMap;
use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use rrt::node::Node;
use rrt::registry::{RegistryError, RemoteType, ServiceAdaptor, ServiceRecord};

use crate::bench::{bench_target_adaptor, ibench_control_type, ibench_type};
use crate::demo::{
    imanage_type, imessage_type, imonitor_type, ip2pnode_type, message_adaptor, message_instance,
    p2pnode_adaptor, p2pnode_instance, KEY_BYTES,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub constructor: String,
    /// `None` publishes the full adapted interface.
    pub remote_type: Option<String>,
    pub service_name: String,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("manifest names unknown constructor `{0}`")]
    UnknownConstructor(String),
    #[error("manifest names unknown remote type `{0}`")]
    UnknownType(String),
    #[error(transparent)]
    Expose(#[from] RegistryError),
}

/// Parses manifest text into entries, without touching any runtime.
pub fn parse(text: &str) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [constructor, remote_type, service_name] = fields[..] else {
            return Err(ManifestError::Malformed {
                line: i + 1,
                reason: format!(
                    "expected `constructor remote-type service-name`, got {} fields",
                    fields.len()
                ),
            });
        };
        entries.push(ManifestEntry {
            constructor: constructor.to_string(),
            remote_type: (remote_type != "-").then(|| remote_type.to_string()),
            service_name: service_name.to_string(),
        });
    }
    Ok(entries)
}

fn construct(node: &Arc<Node>, constructor: &str) -> Result<Arc<ServiceAdaptor>, ManifestError> {
    match constructor {
        "P2PNode" => {
            let mut key = [0u8; KEY_BYTES];
            rand::thread_rng().fill_bytes(&mut key);
            Ok(p2pnode_adaptor(&p2pnode_instance(key)).expect("fresh instance adapts"))
        }
        "Message" => Ok(message_adaptor(&message_instance(0, "hello")).expect("fresh instance adapts")),
        "BenchTarget" => Ok(bench_target_adaptor(node)),
        other => Err(ManifestError::UnknownConstructor(other.to_string())),
    }
}

fn known_type(name: &str) -> Result<RemoteType, ManifestError> {
    match name {
        "IP2PNode" => Ok(ip2pnode_type()),
        "IManage" => Ok(imanage_type()),
        "IMonitor" => Ok(imonitor_type()),
        "IMessage" => Ok(imessage_type()),
        "IBench" => Ok(ibench_type()),
        "IBenchControl" => Ok(ibench_control_type()),
        other => Err(ManifestError::UnknownType(other.to_string())),
    }
}

/// Builds and exposes every entry on `node`, in manifest order. Returns
/// the resulting records. Nothing is rolled back on error; callers treat
/// a failed manifest as fatal at startup.
pub fn apply(
    node: &Arc<Node>,
    entries: &[ManifestEntry],
) -> Result<Vec<Arc<ServiceRecord>>, ManifestError> {
    let mut built: HashMap<&str, Arc<ServiceAdaptor>> = HashMap::new();
    let mut records = Vec::with_capacity(entries.len());
    for entry in entries {
        let adaptor = match built.get(entry.constructor.as_str()) {
            Some(a) => Arc::clone(a),
            None => {
                let a = construct(node, &entry.constructor)?;
                built.insert(&entry.constructor, Arc::clone(&a));
                a
            }
        };
        let remote_type = entry.remote_type.as_deref().map(known_type).transpose()?;
        let record = node.expose(&entry.service_name, adaptor, remote_type)?;
        log::info!(
            "exposed `{}` as {} ({})",
            entry.service_name,
            record.remote_type.type_name(),
            record.guid.as_str()
        );
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rrt::node::NodeConfig;

    #[test]
    fn parsing_skips_comments_and_blanks() {
        let text = "\n# services\nP2PNode IP2PNode P2P\n\n  Message - Msg  \n";
        let entries = parse(text).unwrap();
        assert_eq!(
            entries,
            vec![
                ManifestEntry {
                    constructor: "P2PNode".into(),
                    remote_type: Some("IP2PNode".into()),
                    service_name: "P2P".into(),
                },
                ManifestEntry {
                    constructor: "Message".into(),
                    remote_type: None,
                    service_name: "Msg".into(),
                },
            ]
        );
    }

    #[test]
    fn short_lines_are_rejected_with_their_line_number() {
        let err = parse("P2PNode IP2PNode P2P\nMessage Msg\n").unwrap_err();
        match err {
            ManifestError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn repeated_constructors_share_one_instance() {
        let node = Node::new(NodeConfig::default());
        let entries = parse(
            "P2PNode IP2PNode P2P\nP2PNode IManage Manage\nP2PNode IMonitor Monitor\n",
        )
        .unwrap();
        let records = apply(&node, &entries).unwrap();
        assert_eq!(records.len(), 3);
        let identity = records[0].adaptor.instance().identity();
        assert!(records.iter().all(|r| r.adaptor.instance().identity() == identity));
        assert_eq!(records[1].remote_type.type_name(), "IManage");
        assert!(node.registry().lookup("Monitor").is_ok());
    }

    #[test]
    fn unknown_names_fail_before_anything_is_exposed() {
        let node = Node::new(NodeConfig::default());
        let bad_ctor = parse("Widget - W\n").unwrap();
        assert!(matches!(
            apply(&node, &bad_ctor),
            Err(ManifestError::UnknownConstructor(name)) if name == "Widget"
        ));
        let bad_type = parse("Message IWidget Msg\n").unwrap();
        assert!(matches!(
            apply(&node, &bad_type),
            Err(ManifestError::UnknownType(name)) if name == "IWidget"
        ));
        assert!(node.registry().records().is_empty());
    }

    #[test]
    fn the_full_interface_is_published_for_a_dash() {
        let node = Node::new(NodeConfig::default());
        let records = apply(&node, &parse("Message - Msg\n").unwrap()).unwrap();
        assert_eq!(records[0].remote_type.type_name(), "Message");
        assert_eq!(records[0].remote_type.methods().len(), 4);
    }
}
