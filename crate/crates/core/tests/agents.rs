use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use dixit_core::agents::{
    act, parse_reply, render_prompt, AgentBinding, AgentError, AgentRuntime, Answer, AnswerShape, Hint, HttpTransport,
    ModelEndpointConfig, PolicyId, ReplyError, ScriptedPolicy, TaskContext,
};
use dixit_core::engine::Card;
use dixit_core::rng::{self, Lane};
use proptest::prelude::*;
use serde_json::{json, Value};

#[test]
fn replies_in_prose_and_fences_parse() {
    let choice = AnswerShape::Choice { n: 4 };
    let cases = [
        ("{\"reasoning\": \"r\", \"answer\": 3}", Answer::Choice(3)),
        ("Sure!\n```json\n{\"reasoning\": \"r\", \"answer\": \"2\"}\n```", Answer::Choice(2)),
        ("{\"answer\": \"Card 4\"} trailing", Answer::Choice(4)),
    ];
    for (raw, want) in cases {
        assert_eq!(parse_reply(raw, choice).unwrap().answer, want, "{raw}");
    }
    assert!(matches!(
        parse_reply("{\"answer\": 5}", choice),
        Err(ReplyError::AnswerOutOfRange { .. })
    ));
    assert!(matches!(parse_reply("no json here", choice), Err(ReplyError::MalformedReply(_))));
    assert!(matches!(parse_reply("{\"answer\": \"  \"}", AnswerShape::Text), Err(ReplyError::EmptyAnswer)));
    assert_eq!(
        parse_reply("{\"answer\": 101}", AnswerShape::Score).map(|r| r.answer).ok(),
        None
    );
    assert_eq!(parse_reply("{\"answer\": \"85\"}", AnswerShape::Score).unwrap().answer, Answer::Score(85));
}

proptest! {
    #[test]
    fn distinct_clues_render_distinct_prompts(a in "\\PC{1,40}", b in "\\PC{1,40}") {
        prop_assume!(a != b && !a.trim().is_empty() && !b.trim().is_empty());
        let candidates = Card::placeholder_deck(4);
        let ctx = |clue: &str| TaskContext::GuessDirect { clue: clue.into(), candidates: candidates.clone(), own_position: Some(2) };
        let pa = render_prompt(&ctx(&a)).unwrap();
        let pb = render_prompt(&ctx(&b)).unwrap();
        prop_assert_ne!(pa.text, pb.text);
        prop_assert_eq!(pa.images.len(), 4);
    }

    #[test]
    fn scripted_decisions_are_seed_deterministic(seed in any::<u64>()) {
        let agent = AgentBinding::scripted("r", ScriptedPolicy::new(PolicyId::RandomUniform));
        let ctx = TaskContext::GuessDirect { clue: "c".into(), candidates: Card::placeholder_deck(4), own_position: Some(3) };
        let runtime = AgentRuntime::offline();
        let run = || {
            let mut r = rng::stream(seed, 9, Lane::Seat(2));
            (0..20).map(|_| act(&agent, &ctx, &Hint::default(), &mut r, &runtime).unwrap().answer).collect::<Vec<_>>()
        };
        let first = run();
        prop_assert!(first.iter().all(|a| a.choice() != Some(3)));
        prop_assert_eq!(first, run());
    }
}

#[test]
fn oracle_without_hint_is_an_error() {
    let agent = AgentBinding::scripted("o", ScriptedPolicy::new(PolicyId::OracleListener));
    let ctx = TaskContext::GuessDirect {
        clue: "c".into(),
        candidates: Card::placeholder_deck(4),
        own_position: None,
    };
    let mut r = rng::stream(1, 1, Lane::Engine);
    assert!(matches!(
        act(&agent, &ctx, &Hint::default(), &mut r, &AgentRuntime::offline()),
        Err(AgentError::MissingContextField(_))
    ));
}

struct Seen {
    requests: Vec<(String, Value)>,
}

/// Serves `replies` (status, body) in order, one connection each, recording the requests.
fn fake_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen { requests: Vec::new() }));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .requests
                .push((headers, serde_json::from_slice(&buf).unwrap_or(Value::Null)));
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn remote_agent_retries_then_answers() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("1.jpg");
    std::fs::write(&img, [0xffu8, 0xd8, 0xff, 0x00]).unwrap();
    let card = Card::new(1, img.to_str().unwrap());

    let (url, seen) = fake_server(vec![
        (500, "{\"error\": \"busy\"}".into()),
        (200, completion("not json at all")),
        (200, completion("{\"reasoning\": \"dreamy\", \"answer\": \"a quiet departure\"}")),
    ]);
    std::env::set_var("DIXIT_TEST_KEY", "sk-test");
    let mut endpoint = ModelEndpointConfig::new(url, "vision-1");
    endpoint.api_key_env = Some("DIXIT_TEST_KEY".into());
    let agent = AgentBinding::remote("m", endpoint);
    let runtime = AgentRuntime::new(Arc::new(HttpTransport::new()));
    let mut r = rng::stream(1, 1, Lane::Seat(1));
    let d = act(&agent, &TaskContext::GenerateClue { target: card }, &Hint::default(), &mut r, &runtime).unwrap();

    assert_eq!(d.answer, Answer::Text("a quiet departure".into()));
    assert_eq!(d.record.attempts, 3);
    assert!(!d.record.fallback);
    assert_eq!(d.record.errors.len(), 2);
    assert_eq!(d.record.reasoning, "dreamy");

    let seen = seen.lock().unwrap();
    let (headers, body) = &seen.requests[0];
    assert!(headers.starts_with("POST /v1/chat/completions"));
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    assert_eq!(body["model"], "vision-1");
    assert_eq!(body["temperature"], 0.7);
    let url = body.pointer("/messages/0/content/2/image_url/url").unwrap().as_str().unwrap();
    assert_eq!(url, "data:image/jpeg;base64,/9j/AA==");
}

#[test]
fn exhausted_budget_falls_back_or_aborts() {
    let unreachable = ModelEndpointConfig::new("http://127.0.0.1:9", "m");
    let agent = AgentBinding::remote("m", unreachable);
    let ctx = TaskContext::GuessDirect {
        clue: "c".into(),
        candidates: Card::placeholder_deck(4),
        own_position: Some(1),
    };
    let runtime = AgentRuntime::new(Arc::new(HttpTransport::new()));
    let mut r = rng::stream(1, 1, Lane::Seat(1));
    let d = act(&agent, &ctx, &Hint::default(), &mut r, &runtime).unwrap();
    assert!(d.record.fallback);
    assert_eq!(d.record.attempts, 3);
    assert_ne!(d.answer, Answer::Choice(1));

    let strict = runtime.with_abort_on_failure(true);
    assert!(matches!(
        act(&agent, &ctx, &Hint::default(), &mut r, &strict),
        Err(AgentError::EndpointUnreachable { attempts: 3, .. })
    ));
}
