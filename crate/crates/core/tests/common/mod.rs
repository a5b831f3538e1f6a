#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use videominer::frames::{Frame, FrameSequence};

/// One scripted reply of [`MockServer`].
#[derive(Debug, Clone)]
pub enum Reply {
    Json(u16, String),
    /// Sleep, then drop the connection without answering.
    Hang(Duration),
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

/// Minimal HTTP/1.1 server answering from a script; once the script runs
/// out the last reply repeats.
pub struct MockServer {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
}

impl MockServer {
    pub fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let mut queue: VecDeque<Reply> = script.into();
        thread::spawn(move || {
            let mut last = None;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() {
                    continue;
                }
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut headers = Vec::new();
                let mut len = 0;
                loop {
                    let mut h = String::new();
                    if reader.read_line(&mut h).unwrap_or(0) == 0 || h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.trim().split_once(':') {
                        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                        if k == "content-length" {
                            len = v.parse().unwrap_or(0);
                        }
                        headers.push((k, v));
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                log.lock().unwrap().push(Recorded {
                    path,
                    headers,
                    body: String::from_utf8_lossy(&body).into_owned(),
                });
                let reply = queue.pop_front().or_else(|| last.clone()).expect("empty script");
                last = Some(reply.clone());
                match reply {
                    Reply::Json(code, text) => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                            text.len()
                        );
                    }
                    Reply::Hang(d) => {
                        thread::spawn(move || {
                            thread::sleep(d);
                            drop(stream);
                        });
                    }
                }
            }
        });
        Self {
            base_url: format!("http://{addr}/v1"),
            requests,
        }
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

pub fn chat_reply(text: &str) -> Reply {
    Reply::Json(
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
    )
}

pub fn solid(index: usize, level: u8) -> Frame {
    Frame::new(index, 8, 8, vec![level; 64]).unwrap()
}

/// One solid frame per entry of `levels`.
pub fn sequence(levels: &[u8]) -> FrameSequence {
    let frames = levels.iter().enumerate().map(|(i, &l)| solid(i, l)).collect();
    FrameSequence::new(frames, "test", levels.len()).unwrap()
}

/// Textbook DBSCAN by exhaustive search: closed-ball neighborhoods that
/// include the point itself, clusters seeded from the lowest-index
/// unvisited core point, border points claimed by the first cluster that
/// reaches them, labels numbered in discovery order.
pub fn dbscan_oracle(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nbrs: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();
    let mut label = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if label[i].is_some() || !core[i] {
            continue;
        }
        label[i] = Some(next);
        let mut stack = vec![i];
        while let Some(p) = stack.pop() {
            for &q in &nbrs[p] {
                if label[q].is_none() {
                    label[q] = Some(next);
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    label
}

/// Canonical partition form: sets of member indices, sorted.
pub fn partition(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut noise = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => groups.entry(*c).or_default().push(i),
            None => noise.push(vec![i]),
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().chain(noise).collect();
    out.sort();
    out
}
