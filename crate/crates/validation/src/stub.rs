//! Fault-injecting chat-completion stub on a local socket.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    Valid,
    Prose,
    Fenced,
    Garbage,
    Truncated,
    Timeout,
    ServerError,
}

impl Fault {
    fn parses(self) -> bool {
        matches!(self, Fault::Valid | Fault::Prose | Fault::Fenced)
    }
}

/// First-attempt and retry behavior for invocation `n`.
pub type Schedule = fn(u64) -> (Fault, Fault);

/// Ten-step cycle: mostly usable replies in three wrappings, one recovered
/// malformed reply, one timeout, one unrecovered malformed reply and one
/// server error.
pub fn mixed(n: u64) -> (Fault, Fault) {
    match n % 10 {
        0 | 3 => (Fault::Valid, Fault::Valid),
        1 | 9 => (Fault::Prose, Fault::Valid),
        2 | 4 => (Fault::Fenced, Fault::Valid),
        5 => (Fault::Garbage, Fault::Prose),
        6 => (Fault::Timeout, Fault::Valid),
        7 => (Fault::Garbage, Fault::Truncated),
        _ => (Fault::ServerError, Fault::Valid),
    }
}

pub fn always_valid(_: u64) -> (Fault, Fault) {
    (Fault::Valid, Fault::Valid)
}

pub fn always_garbage(_: u64) -> (Fault, Fault) {
    (Fault::Garbage, Fault::Garbage)
}

#[derive(Debug, Default)]
pub struct Tally {
    pub invocations: u64,
    pub requests: u64,
    /// Expected commander failures by typed reason.
    pub failures: BTreeMap<&'static str, u64>,
}

pub struct Stub {
    pub url: String,
    pub tally: Arc<Mutex<Tally>>,
}

/// Delay after which a `Timeout` reply is abandoned; well above any client
/// timeout used with the stub.
pub const HANG: Duration = Duration::from_millis(600);

impl Stub {
    pub fn start(schedule: Schedule) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let tally = Arc::new(Mutex::new(Tally::default()));
        let shared = Arc::clone(&tally);
        thread::spawn(move || {
            // Fault of the pending retry, if the last first attempt failed to parse.
            let mut pending = None;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let Some(body) = read_request(&mut stream) else { continue };
                let messages = body["messages"].as_array().cloned().unwrap_or_default();
                let report: Value = serde_json::from_str(messages.get(1).and_then(|m| m["content"].as_str()).unwrap_or("{}")).unwrap_or(Value::Null);
                let fault = {
                    let mut t = shared.lock().unwrap();
                    t.requests += 1;
                    if messages.len() <= 2 {
                        let n = t.invocations;
                        t.invocations += 1;
                        let (first, retry) = schedule(n);
                        let failure = match first {
                            Fault::Timeout => Some("timeout"),
                            Fault::ServerError => Some("http_status"),
                            f if f.parses() => None,
                            _ => match retry {
                                Fault::Timeout => Some("timeout"),
                                Fault::ServerError => Some("http_status"),
                                r if r.parses() => None,
                                _ => Some("malformed_reply"),
                            },
                        };
                        if let Some(kind) = failure {
                            *t.failures.entry(kind).or_insert(0) += 1;
                        }
                        pending = (!first.parses()).then_some(retry);
                        first
                    } else {
                        pending.take().unwrap_or(Fault::Valid)
                    }
                };
                thread::spawn(move || respond(stream, fault, &report));
            }
        });
        Stub { url, tally }
    }
}

fn read_request(stream: &mut TcpStream) -> Option<Value> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut reader = BufReader::new(stream);
    let mut length = 0usize;
    let mut chunked = false;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().ok()?;
        }
        if lower.starts_with("transfer-encoding:") && lower.contains("chunked") {
            chunked = true;
        }
    }
    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            reader.read_line(&mut size).ok()?;
            let n = usize::from_str_radix(size.trim(), 16).ok()?;
            let mut chunk = vec![0; n + 2];
            reader.read_exact(&mut chunk).ok()?;
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }
    } else {
        body.resize(length, 0);
        reader.read_exact(&mut body).ok()?;
    }
    serde_json::from_slice(&body).ok()
}

/// A plan attacking the first reported opponent with every own unit.
pub fn plan_for(report: &Value) -> Value {
    let side = report["side"].as_str().unwrap_or("allied");
    let units = report["units"].as_array().cloned().unwrap_or_default();
    let alive = |u: &&Value| u["status"] == "alive";
    let enemy = units.iter().filter(alive).find(|u| u["team"] != side && u["id"].is_number());
    let instructions: Vec<Value> = units
        .iter()
        .filter(alive)
        .filter(|u| u["team"] == side)
        .map(|u| match enemy {
            Some(e) => json!({"agent": u["id"], "action": "Attack", "waypoint": e["position"], "target": e["id"], "partner": null}),
            None => json!({"agent": u["id"], "action": "Retreat", "waypoint": u["position"], "target": null, "partner": null}),
        })
        .collect();
    json!({ "instructions": instructions })
}

fn respond(mut stream: TcpStream, fault: Fault, report: &Value) {
    let plan = plan_for(report).to_string();
    let content = match fault {
        Fault::Valid => plan,
        Fault::Prose => format!("Understood. Here is the plan: {plan} Good luck out there."),
        Fault::Fenced => format!("Plan below.\n```json\n{plan}\n```\n"),
        Fault::Garbage => "I am unable to produce orders for this situation.".to_string(),
        Fault::Truncated => plan[..plan.len() / 2].to_string(),
        Fault::Timeout => {
            thread::sleep(HANG);
            return;
        }
        Fault::ServerError => {
            let _ = stream.write_all(b"HTTP/1.1 500 Internal Server Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
            return;
        }
    };
    let body = json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
    let _ = write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
}
