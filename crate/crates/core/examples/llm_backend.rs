//! Drive the agents through an OpenAI-compatible chat endpoint.
//!
//! Without arguments a small local stand-in server answers for all three
//! agents, so the example runs offline. Point it at a real service with
//!
//!     OPENAI_API_KEY=... cargo run --example llm_backend -- --endpoint https://api.openai.com/v1/chat/completions --model gpt-4o-mini

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use serde_json::{json, Value};

use corrective_planner::orchestrator::{
    handle_request, ConfigSymbol, EngineConfig, LlmBackend, LlmSettings, REPORT_PREFIX,
};
use corrective_planner::scenario::ScenarioSpec;

/// Plays Alex, Travi and Ropa well enough to show one failed attempt and a
/// corrected replan.
fn stand_in_reply(body: &Value) -> String {
    let messages = body["messages"].as_array().cloned().unwrap_or_default();
    let system = messages.first().and_then(|m| m["content"].as_str()).unwrap_or("");
    let last = messages.last().and_then(|m| m["content"].as_str()).unwrap_or("");
    if system.starts_with("You are Alex") {
        if last.starts_with(REPORT_PREFIX) {
            return format!("Finished. ({})", last.trim_start_matches(REPORT_PREFIX).trim());
        }
        return "TASK: put a glass on the tray".into();
    }
    if system.starts_with("You are Travi") {
        let mut spec = "Goal: a glass stands on the tray\nObjects: glass, tray\nState: the glass is on the table\nRemaining steps: move the glass".to_string();
        if let Some((_, fb)) = last.split_once("Feedback from earlier attempts:") {
            spec.push_str(&format!("\nFeedback:{fb}"));
        }
        return spec;
    }
    if last.contains("Feedback:") {
        "get glass table\nput glass tray".into()
    } else {
        "put glass tray".into()
    }
}

fn serve_stand_in() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let reply = json!({"choices": [{"message": {"role": "assistant", "content": stand_in_reply(&request)}}]}).to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    url
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flag = |name: &str| args.iter().position(|a| a == name).and_then(|i| args.get(i + 1)).cloned();

    let mut settings = LlmSettings::default();
    match flag("--endpoint") {
        Some(url) => settings.endpoint = url,
        None => settings.endpoint = serve_stand_in(),
    }
    if let Some(m) = flag("--model") {
        settings.model = m;
    }
    println!("endpoint {} model {}", settings.endpoint, settings.model);

    let spec = ScenarioSpec::bundled("barman").unwrap();
    let backend = LlmBackend::new(settings);
    let config = EngineConfig::preset(ConfigSymbol::H2, 0);
    let ep = handle_request("Please put a glass on the tray.", &spec.initial_state, &config, &backend, &spec);

    for record in &ep.plans {
        println!("plan {}:\n{}", record.revision, record.text);
        if let Some(f) = &record.failure {
            println!("  -> {} ({:?})", f.what, f.kind);
        }
    }
    for f in &ep.feedback_msgs {
        println!("feedback: {f}");
    }
    println!("outcome: {:?}", ep.outcome);
    println!("Alex: {}", ep.reply);
}
