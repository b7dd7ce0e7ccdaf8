//! HTTP adapter around [`Service`]. Each request is converted to a
//! `WireRequest`, handled, and logged as one JSON line on stderr.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::{to_bytes, Body};
use axum::extract::{ConnectInfo, Request, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Router;
use photoauth_core::service::{Config, Service, WireRequest};
use photoauth_core::session::{Clock, Millis};
use serde_json::json;

const MAX_BODY: usize = 1 << 20;

struct MonotonicClock(Instant);

impl Clock for MonotonicClock {
    fn now_ms(&self) -> Millis {
        self.0.elapsed().as_millis() as Millis
    }
}

fn log(v: serde_json::Value) {
    eprintln!("{v}");
}

async fn handle(State(service): State<Arc<Service>>, ConnectInfo(peer): ConnectInfo<SocketAddr>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let bytes = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(_) => {
            return Response::builder()
                .status(StatusCode::PAYLOAD_TOO_LARGE)
                .body(Body::empty())
                .expect("static response");
        }
    };
    let headers: BTreeMap<String, String> = parts
        .headers
        .iter()
        .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
        .collect();
    let wire = WireRequest {
        method: parts.method.as_str().to_string(),
        path: parts.uri.path().to_string(),
        headers,
        body: String::from_utf8_lossy(&bytes).into_owned(),
        peer: peer.ip(),
    };
    let (resp, notes) = service.handle_with_notifications(&wire);
    for n in &notes {
        log(json!({ "event": "notification", "username": n.username, "via": n.via, "session_id": n.session_id }));
    }
    log(json!({
        "event": "request",
        "method": wire.method,
        "path": wire.path,
        "peer": wire.peer,
        "status": resp.status,
    }));

    let mut builder = Response::builder()
        .status(StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR))
        .header("content-type", "application/json");
    for (k, v) in &resp.headers {
        if let (Ok(k), Ok(v)) = (HeaderName::try_from(k.as_str()), HeaderValue::try_from(v.as_str())) {
            builder = builder.header(k, v);
        }
    }
    builder
        .body(Body::from(resp.body.to_string()))
        .expect("valid response parts")
}

pub fn run(config: Config, bind: &str, port: u16) -> Result<(), String> {
    let service = Service::new(&config, Arc::new(MonotonicClock(Instant::now()))).map_err(|e| e.to_string())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((bind, port))
            .await
            .map_err(|e| format!("bind {bind}:{port}: {e}"))?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        log(json!({ "event": "listening", "addr": addr.to_string(), "test_mode": config.test_mode, "seed": config.seed }));
        let app = Router::new().fallback(handle).with_state(Arc::new(service));
        axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}
