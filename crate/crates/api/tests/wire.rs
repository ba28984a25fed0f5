use css_api::*;
use serde_json::json;

#[test]
fn message_request_accepts_bare_text() {
    let r: MessageRequest = serde_json::from_value(json!({"text": "hi"})).unwrap();
    assert_eq!(r.text, "hi");
    assert!(r.decode.is_none());
}

#[test]
fn partial_decode_knobs_keep_defaults() {
    let r: MessageRequest =
        serde_json::from_value(json!({"text": "hi", "decode": {"strategy": "greedy"}})).unwrap();
    let d = r.decode.unwrap();
    assert_eq!(d.strategy, Strategy::Greedy);
    assert_eq!((d.beam_width, d.chosen_beam), (3, 3));
}

#[test]
fn unknown_fields_are_rejected() {
    assert!(serde_json::from_value::<MessageRequest>(json!({"text": "a", "txt": 1})).is_err());
    assert!(serde_json::from_value::<DecodeKnobs>(json!({"width": 2})).is_err());
    assert!(serde_json::from_value::<MessageRequest>(json!({})).is_err());
}

#[test]
fn message_response_shape() {
    let r = MessageResponse {
        response: "fine .".into(),
        user_act: Some(ActPrediction {
            label: "Question".into(),
            probs: vec![0.1; 10],
        }),
        beams: vec![BeamText {
            text: "fine .".into(),
            logprob: -1.5,
        }],
        chosen: 0,
        context_norm: 0.0,
    };
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["user_act"]["label"], "Question");
    assert_eq!(v["user_act"]["probs"].as_array().unwrap().len(), 10);
    assert_eq!(v["beams"][0]["logprob"], -1.5);
    assert_eq!(v["context_norm"], 0.0);
    assert_eq!(serde_json::from_value::<MessageResponse>(v).unwrap(), r);
}

#[test]
fn speakers_are_lowercase() {
    assert_eq!(serde_json::to_value(Speaker::Bot).unwrap(), "bot");
}

#[test]
fn create_session_body_is_optional_object() {
    let c: CreateSession = serde_json::from_str("{}").unwrap();
    assert!(c.decode.is_none());
    assert_eq!(
        serde_json::to_string(&CreateSession::default()).unwrap(),
        "{}"
    );
}
