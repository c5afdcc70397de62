//! HTTP predictor speaking the JSON continuation protocol.
//!
//! Request, POSTed to `<endpoint>/predict`:
//! `{"context_id":"…","prefix":["…"],"k":4}` (plus `"aux":[…]` after a
//! context shift). Response: `{"items":[{"cont":["…"],"p":0.4,"tr":["…"]}]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PredictError, PredictQuery, Prediction, PredictionSet, Predictor, WireItem};
use crate::Token;

pub struct RemotePredictor {
    url: String,
    budget_ms: u64,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct Request<'a> {
    context_id: &'a str,
    prefix: &'a [Token],
    k: usize,
    #[serde(skip_serializing_if = "<[Token]>::is_empty")]
    aux: &'a [Token],
}

#[derive(Deserialize)]
struct Response {
    items: Vec<WireItem>,
}

impl RemotePredictor {
    /// `endpoint` is a base URL such as `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str, budget_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(budget_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/predict", endpoint.trim_end_matches('/')),
            budget_ms,
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn call(&self, q: &PredictQuery<'_>) -> Result<String, PredictError> {
        let body = serde_json::to_string(&Request {
            context_id: &q.context.id,
            prefix: q.prefix,
            k: q.k,
            aux: q.aux,
        })
        .expect("request serializes");
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body.as_str())
            .map_err(|e| self.classify(e))?;
        if !resp.status().is_success() {
            return Err(PredictError::Unreachable(format!("HTTP {}", resp.status())));
        }
        resp.body_mut()
            .read_to_string()
            .map_err(|e| self.classify(e))
    }

    fn classify(&self, e: ureq::Error) -> PredictError {
        match e {
            ureq::Error::Timeout(_) => PredictError::Timeout(self.budget_ms),
            other => PredictError::Unreachable(other.to_string()),
        }
    }
}

/// Validates a wire response into a set, rescaling probabilities
/// proportionally when they sum past one.
pub(crate) fn decode_response(text: &str, k: usize) -> Result<PredictionSet, PredictError> {
    let resp: Response =
        serde_json::from_str(text).map_err(|e| PredictError::MalformedResponse(e.to_string()))?;
    let mut items: Vec<Prediction> = resp.items.into_iter().map(Prediction::from).collect();
    let sum: f64 = items.iter().map(|p| p.p).sum();
    if sum > 1.0 && sum.is_finite() {
        for p in &mut items {
            p.p /= sum;
        }
    }
    PredictionSet::new(items, k).map_err(|v| PredictError::MalformedResponse(v.to_string()))
}

impl Predictor for RemotePredictor {
    fn predict(&self, q: &PredictQuery<'_>) -> Result<PredictionSet, PredictError> {
        let text = self.call(q)?;
        decode_response(&text, q.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ContextDoc;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    #[test]
    fn well_formed_response() {
        let set = decode_response(
            r#"{"items":[{"cont":["a"],"p":0.5,"tr":["A"]},{"cont":["b"],"p":0.3,"tr":["B"]}]}"#,
            4,
        )
        .unwrap();
        assert_eq!(set.len(), 2);
        assert!((set.other_mass() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn overshooting_probabilities_are_rescaled() {
        let set = decode_response(
            r#"{"items":[{"cont":["a"],"p":0.8,"tr":[]},{"cont":["b"],"p":0.4,"tr":[]}]}"#,
            4,
        )
        .unwrap();
        let sum: f64 = set.items().iter().map(|p| p.p).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(set.other_mass(), 0.0);
        assert!((set.items()[0].p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_responses() {
        assert!(matches!(
            decode_response("{\"nope\":1}", 4),
            Err(PredictError::MalformedResponse(_))
        ));
        assert!(matches!(
            decode_response(r#"{"items":[{"cont":[],"p":0.5}]}"#, 4),
            Err(PredictError::MalformedResponse(_))
        ));
    }

    /// Serves exactly one HTTP request, returning the request body.
    fn one_shot_server(reply: &'static str, delay_ms: u64) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            thread::sleep(Duration::from_millis(delay_ms));
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                reply.len(),
                reply
            );
            String::from_utf8(body).unwrap()
        });
        (addr, handle)
    }

    #[test]
    fn round_trip_over_http() {
        let (addr, server) =
            one_shot_server(r#"{"items":[{"cont":["a","</s>"],"p":0.4,"tr":["A"]}]}"#, 0);
        let remote = RemotePredictor::new(&addr, 2000);
        let ctx = ContextDoc::new("ctx", vec![]);
        let prefix = crate::tokens("私は 昨日");
        let set = remote
            .predict(&PredictQuery {
                context: &ctx,
                aux: &[],
                prefix: &prefix,
                k: 4,
            })
            .unwrap();
        assert!((set.other_mass() - 0.6).abs() < 1e-12);
        let body = server.join().unwrap();
        assert_eq!(body, r#"{"context_id":"ctx","prefix":["私は","昨日"],"k":4}"#);
    }

    #[test]
    fn slow_server_times_out() {
        let (addr, _server) = one_shot_server(r#"{"items":[]}"#, 1500);
        let remote = RemotePredictor::new(&addr, 100);
        let ctx = ContextDoc::default();
        let err = remote
            .predict(&PredictQuery {
                context: &ctx,
                aux: &[],
                prefix: &[],
                k: 4,
            })
            .unwrap_err();
        assert_eq!(err, PredictError::Timeout(100));
    }

    #[test]
    fn unreachable_endpoint() {
        // Bind then drop to get a port with nothing listening.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let remote = RemotePredictor::new(&format!("http://127.0.0.1:{port}"), 500);
        let ctx = ContextDoc::default();
        let err = remote
            .predict(&PredictQuery {
                context: &ctx,
                aux: &[],
                prefix: &[],
                k: 4,
            })
            .unwrap_err();
        assert!(matches!(err, PredictError::Unreachable(_)));
    }
}
