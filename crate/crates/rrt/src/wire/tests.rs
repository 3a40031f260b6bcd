use super::*;
use crate::registry::{Guid, MethodSignature};
use crate::remoteref::{CachedFieldSpec, RemoteObjectRef, RemoteTypeInfo};

fn round_trip(value: &Value) -> Value {
    decode_value(&encode_value(value)).expect("decode")
}

/// Encode → decode → encode must reproduce the bytes exactly.
fn assert_fixed_point(bytes: &[u8]) {
    let decoded = decode_value(bytes).expect("decode");
    assert_eq!(encode_value(&decoded), bytes, "re-encoding changed the document");
}

fn guid_a() -> Guid {
    Guid::parse(&"ab".repeat(20)).unwrap()
}

#[test]
fn primitives_encode_canonically_and_round_trip() {
    assert_eq!(encode_value(&Value::i32(42)), b"<prim type=\"i32\">42</prim>");
    assert_eq!(encode_value(&Value::bool(false)), b"<prim type=\"bool\">false</prim>");
    assert_eq!(encode_value(&Value::Null), b"<null/>");
    for v in [
        Value::i32(-2147483648),
        Value::i64(9007199254740993),
        Value::f64(2.5),
        Value::f64(-0.125),
        Value::bool(true),
        Value::text(""),
        Value::text("café & <tags>"),
    ] {
        assert_eq!(round_trip(&v), v);
    }
    assert_eq!(encode_value(&Value::text("")), b"<text/>");
}

#[test]
fn bad_primitive_lexicals_are_rejected() {
    for doc in [
        &b"<prim type=\"i32\">abc</prim>"[..],
        b"<prim type=\"i32\">2147483648</prim>",
        b"<prim type=\"bool\">TRUE</prim>",
        b"<prim type=\"u8\">7</prim>",
        b"<prim type=\"i32\"/>",
    ] {
        assert!(decode_value(doc).is_err(), "accepted {:?}", String::from_utf8_lossy(doc));
    }
}

#[test]
fn struct_encodes_fields_in_declared_order() {
    let v = Value::structure(
        "Key",
        vec![("bits".to_string(), Value::text("00ff"))],
    );
    let bytes = encode_value(&v);
    assert_eq!(
        bytes,
        &b"<struct class=\"Key\" id=\"1\"><field name=\"bits\"><text>00ff</text></field></struct>"[..]
    );
    assert_fixed_point(&bytes);
}

#[test]
fn nested_nodes_are_numbered_in_preorder() {
    let inner = Value::structure("Point", vec![("x".into(), Value::i32(1))]);
    let v = Value::list("Point", vec![inner.clone(), inner, Value::Null]);
    let bytes = encode_value(&v);
    let decoded = decode_value(&bytes).unwrap();
    match &decoded {
        Value::List { id, items, .. } => {
            assert_eq!(*id, 1);
            match (&items[0], &items[1], &items[2]) {
                (Value::Struct { id: a, .. }, Value::Struct { id: b, .. }, Value::Null) => {
                    assert_eq!((*a, *b), (2, 3));
                }
                other => panic!("unexpected shape {other:?}"),
            }
        }
        other => panic!("unexpected shape {other:?}"),
    }
    assert_fixed_point(&bytes);
}

#[test]
fn builder_ids_are_renumbered_and_backrefs_follow() {
    // Builder numbered its nodes 7 and 9; the encoder renumbers to 1 and 2
    // and the alias keeps pointing at the right node.
    let shared = Value::Struct {
        class: "Key".into(),
        id: 9,
        fields: vec![("bits".into(), Value::text("aa"))],
    };
    let v = Value::List {
        elem_class: "Key".into(),
        id: 7,
        items: vec![shared, Value::BackRef(9)],
    };
    let bytes = encode_value(&v);
    let expected: &[u8] = b"<list elem-class=\"Key\" id=\"1\">\
        <struct class=\"Key\" id=\"2\"><field name=\"bits\"><text>aa</text></field></struct>\
        <backref target=\"2\"/>\
        </list>";
    assert_eq!(bytes, expected);
    assert_fixed_point(&bytes);
}

#[test]
fn cycles_round_trip_via_backrefs() {
    // A node whose `next` field aliases the node itself.
    let v = Value::Struct {
        class: "Cell".into(),
        id: 1,
        fields: vec![("next".into(), Value::BackRef(1))],
    };
    let bytes = encode_value(&v);
    assert_eq!(
        bytes,
        &b"<struct class=\"Cell\" id=\"1\"><field name=\"next\"><backref target=\"1\"/></field></struct>"[..]
    );
    assert_eq!(decode_value(&bytes).unwrap(), v);
}

#[test]
fn dangling_backrefs_are_rejected() {
    assert_eq!(
        decode_value(b"<backref target=\"1\"/>"),
        Err(WireError::DanglingBackRef(1))
    );
    let doc = b"<list elem-class=\"A\" id=\"1\"><backref target=\"2\"/></list>";
    assert_eq!(decode_value(doc), Err(WireError::DanglingBackRef(2)));
    assert!(decode_value(b"<backref target=\"0\"/>").is_err());
}

#[test]
fn non_preorder_ids_are_rejected() {
    assert!(decode_value(b"<struct class=\"A\" id=\"2\"/>").is_err());
    assert!(decode_value(b"<struct class=\"A\" id=\"0\"/>").is_err());
    let skipped = b"<list elem-class=\"A\" id=\"1\"><struct class=\"B\" id=\"3\"/></list>";
    assert!(decode_value(skipped).is_err());
    let repeated = b"<list elem-class=\"A\" id=\"1\"><struct class=\"B\" id=\"1\"/></list>";
    assert!(decode_value(repeated).is_err());
}

#[test]
fn unknown_attributes_and_elements_are_rejected() {
    assert!(decode_value(b"<null foo=\"1\"/>").is_err());
    assert!(decode_value(b"<struct class=\"A\" id=\"1\" extra=\"x\"/>").is_err());
    assert!(decode_value(b"<blob/>").is_err());
    // Trailing content after the document is also an error.
    assert!(decode_value(b"<null/><null/>").is_err());
}

#[test]
fn zero_arg_call_is_a_single_self_closed_element() {
    let call = CallEnvelope {
        service: "counter".into(),
        method: "get".into(),
        signature: vec![],
        request_id: "r1".into(),
        args: vec![],
    };
    let bytes = encode_call(&call);
    assert_eq!(
        bytes,
        &b"<rrt-envelope version=\"1\"><call service=\"counter\" method=\"get\" request-id=\"r1\"/></rrt-envelope>"[..]
    );
    assert_eq!(decode_call(&bytes).unwrap(), call);
}

#[test]
fn call_ids_span_the_whole_argument_list() {
    // The second argument aliases a node first sent in the first one.
    let key = Value::Struct {
        class: "Key".into(),
        id: 3,
        fields: vec![("bits".into(), Value::text("aa"))],
    };
    let call = CallEnvelope {
        service: "s".into(),
        method: "m".into(),
        signature: vec!["Key".into(), "Key".into()],
        request_id: "r2".into(),
        args: vec![key, Value::BackRef(3)],
    };
    let bytes = encode_call(&call);
    let decoded = decode_call(&bytes).unwrap();
    assert_eq!(decoded.args[1], Value::BackRef(1));
    assert_eq!(encode_call(&decoded), bytes);
}

#[test]
fn malformed_calls_are_rejected() {
    // Signature promises one parameter, none sent.
    let missing_arg = b"<rrt-envelope version=\"1\"><call service=\"s\" method=\"m\" sig=\"i32\" request-id=\"r\"/></rrt-envelope>";
    assert!(decode_call(missing_arg).is_err());
    // Argument indices must be sequential from zero.
    let bad_index = b"<rrt-envelope version=\"1\"><call service=\"s\" method=\"m\" sig=\"i32\" request-id=\"r\"><arg index=\"1\"><prim type=\"i32\">5</prim></arg></call></rrt-envelope>";
    assert!(decode_call(bad_index).is_err());
    // Unknown envelope version.
    let bad_version = b"<rrt-envelope version=\"2\"><call service=\"s\" method=\"m\" request-id=\"r\"/></rrt-envelope>";
    assert!(decode_call(bad_version).is_err());
}

#[test]
fn replies_round_trip() {
    let cases = [
        ReplyEnvelope { request_id: "a".into(), body: ReplyBody::Result(Value::i32(7)) },
        ReplyEnvelope { request_id: "b".into(), body: ReplyBody::Result(Value::Null) },
        ReplyEnvelope {
            request_id: "c".into(),
            body: ReplyBody::AppFault { class: "KeyCollision".into(), message: "key exists".into() },
        },
        ReplyEnvelope {
            request_id: "d".into(),
            body: ReplyBody::DistFault {
                code: DistFaultCode::ServiceNotFound,
                message: "no such service".into(),
            },
        },
    ];
    for reply in cases {
        assert_eq!(decode_reply(&encode_reply(&reply)).unwrap(), reply);
    }
}

#[test]
fn faults_with_empty_messages_self_close() {
    let reply = ReplyEnvelope {
        request_id: "r9".into(),
        body: ReplyBody::DistFault { code: DistFaultCode::Transport, message: String::new() },
    };
    let bytes = encode_reply(&reply);
    assert_eq!(
        bytes,
        &b"<rrt-envelope version=\"1\"><dist-fault code=\"TRANSPORT\" request-id=\"r9\"/></rrt-envelope>"[..]
    );
    assert_eq!(decode_reply(&bytes).unwrap(), reply);
}

fn sample_ior(methods: Option<Vec<MethodSignature>>) -> RemoteObjectRef {
    RemoteObjectRef {
        host: "127.0.0.1".into(),
        port: 9001,
        guid: guid_a(),
        remote_type: RemoteTypeInfo { name: "ICounter".into(), methods },
        real_class_name: "Counter".into(),
        cached_fields: vec![],
        cached_methods: vec![],
        cached_values: vec![],
    }
}

#[test]
fn references_round_trip_with_embedded_type() {
    let mut ior = sample_ior(Some(vec![
        MethodSignature::new::<&str>("get", &[], "i32"),
        MethodSignature::new("add", &["i32"], "i32"),
    ]));
    ior.cached_methods.push(MethodSignature::new("distanceTo", &["Key"], ""));
    let v = Value::Ref(ior);
    let bytes = encode_value(&v);
    assert_eq!(round_trip(&v), v);
    assert_fixed_point(&bytes);
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.contains("<rt-method name=\"get\" returns=\"i32\"/>"));
    assert!(text.contains("<rt-method name=\"add\" sig=\"i32\" returns=\"i32\"/>"));
    assert!(text.contains("<cached-method name=\"distanceTo\" sig=\"Key\"/>"));
    assert!(!text.contains("type-deferred"));
}

#[test]
fn deferred_references_carry_no_signatures() {
    let v = Value::Ref(sample_ior(None));
    let bytes = encode_value(&v);
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.contains("type-deferred=\"true\""));
    assert!(!text.contains("rt-method"));
    assert_eq!(round_trip(&v), v);
    // A document claiming deferral while embedding signatures is torn.
    let contradictory = b"<ref><ior host=\"h\" port=\"1\" guid=\"GUID\" remote-type=\"I\" real-class=\"C\" type-deferred=\"true\"><rt-method name=\"m\" returns=\"void\"/></ior></ref>";
    let doc = String::from_utf8_lossy(contradictory).replace("GUID", &"ab".repeat(20));
    assert!(decode_value(doc.as_bytes()).is_err());
}

#[test]
fn cached_field_snapshots_form_isolated_id_scopes() {
    let snapshot = |hex: &str| Value::Struct {
        class: "Key".into(),
        id: 1,
        fields: vec![("bits".into(), Value::text(hex))],
    };
    let mut ior = sample_ior(Some(vec![MethodSignature::new::<&str>("getKey", &[], "Key")]));
    ior.cached_fields = vec![
        CachedFieldSpec { name: "key".into(), getter_name: "getKey".into(), setter_name: None },
        CachedFieldSpec {
            name: "spare".into(),
            getter_name: "getSpare".into(),
            setter_name: Some("setSpare".into()),
        },
    ];
    ior.cached_values = vec![
        ("key".into(), snapshot("aa")),
        ("spare".into(), snapshot("bb")),
    ];
    let v = Value::Ref(ior);
    let bytes = encode_value(&v);
    // Both snapshots restart numbering at 1.
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.matches("id=\"1\"").count(), 2);
    assert_eq!(round_trip(&v), v);
    assert_fixed_point(&bytes);

    // A snapshot may not reach across into its neighbour's scope.
    let cross = text.replace(
        "<struct class=\"Key\" id=\"1\"><field name=\"bits\"><text>bb</text></field></struct>",
        "<backref target=\"1\"/>",
    );
    assert_eq!(decode_value(cross.as_bytes()), Err(WireError::DanglingBackRef(1)));
}

#[test]
fn references_nested_inside_documents_round_trip() {
    // A reference sitting inside a list next to plain values.
    let v = Value::List {
        elem_class: "Object".into(),
        id: 1,
        items: vec![Value::i32(1), Value::Ref(sample_ior(Some(vec![]))), Value::text("x")],
    };
    assert_eq!(round_trip(&v), v);
    assert_fixed_point(&encode_value(&v));
}

#[test]
fn reference_endpoint_validation() {
    let good = encode_value(&Value::Ref(sample_ior(Some(vec![]))));
    let good = String::from_utf8(good).unwrap();
    for (from, to) in [
        ("port=\"9001\"", "port=\"0\""),
        ("host=\"127.0.0.1\"", "host=\"\""),
        (r#"guid="abababababababababababababababababababab""#, r#"guid="xyz""#),
    ] {
        let bad = good.replace(from, to);
        assert_ne!(bad, good, "replacement `{from}` did not apply");
        assert!(decode_value(bad.as_bytes()).is_err(), "accepted {bad}");
    }
}
