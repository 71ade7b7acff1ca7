//! REST API over a shared [`Service`].

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{on, MethodFilter, MethodRouter};
use axum::{Json, Router};
use rcm_core::{ActorId, RcmError};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::command::{Command, Method, Route, ACTOR_HEADER, IDEMPOTENCY_HEADER, ROUTES};
use crate::service::Service;

#[derive(Clone)]
pub struct App {
    service: Arc<Mutex<Service>>,
    draining: Arc<AtomicBool>,
}

impl App {
    pub fn new(service: Service) -> Self {
        Self {
            service: Arc::new(Mutex::new(service)),
            draining: Arc::new(AtomicBool::new(false)),
        }
    }

    /// From now on the health check reports the service as going away.
    pub fn drain(&self) {
        self.draining.store(true, Ordering::SeqCst);
    }

    pub fn service(&self) -> &Arc<Mutex<Service>> {
        &self.service
    }
}

pub fn status_for(error: &RcmError) -> StatusCode {
    use RcmError::*;
    match error {
        Authorization { .. } => StatusCode::FORBIDDEN,
        UnknownRequest(_) | UnknownRequirement(_) | UnknownWorkItem(_) | UnknownSprint(_)
        | UnknownSite(_) => StatusCode::NOT_FOUND,
        IllegalTransition { .. }
        | IllegalWorkItemTransition { .. }
        | GuardFailed(_)
        | IllegalState(_)
        | QuorumNotMet { .. }
        | TieDeferred { .. }
        | SprintClosed(_)
        | DuplicateLink { .. } => StatusCode::CONFLICT,
        CorruptLog { .. } | StorageFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

/// `{"error": {"code", "message", ...}}` with structured extras where the
/// caller can act on them.
pub fn error_body(error: &RcmError) -> Value {
    let mut body = json!({ "code": error.code(), "message": error.to_string() });
    let extra = match error {
        RcmError::QuorumNotMet { missing } => json!({ "missing": missing }),
        RcmError::TieDeferred { approve, reject } => json!({ "approve": approve, "reject": reject }),
        RcmError::CorruptLog { seq, .. } => json!({ "seq": seq }),
        _ => Value::Null,
    };
    if let (Value::Object(b), Value::Object(x)) = (&mut body, extra) {
        b.extend(x);
    }
    json!({ "error": body })
}

fn failure(status: StatusCode, error: &RcmError) -> Response {
    (status, Json(error_body(error))).into_response()
}

fn header(headers: &HeaderMap, name: &str) -> Option<String> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_owned)
}

async fn handle(
    app: App,
    route: &'static Route,
    path: BTreeMap<String, String>,
    query: BTreeMap<String, String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if route.op == "health" && app.draining.load(Ordering::SeqCst) {
        let mut doc = app.service.lock().expect("service").health();
        doc["status"] = json!("shutting_down");
        return (StatusCode::SERVICE_UNAVAILABLE, Json(doc)).into_response();
    }
    let body = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(v) => Some(v),
            Err(e) => {
                return failure(StatusCode::BAD_REQUEST, &RcmError::Validation(format!("body: {e}")))
            }
        }
    };
    let command = match Command::from_http(route, &path, &query, header(&headers, IDEMPOTENCY_HEADER), body) {
        Ok(c) => c,
        Err(e) => return failure(StatusCode::BAD_REQUEST, &RcmError::Validation(e)),
    };
    let actor = ActorId::new(header(&headers, ACTOR_HEADER).unwrap_or_default());
    let service = Arc::clone(&app.service);
    let result = tokio::task::spawn_blocking(move || {
        service.lock().expect("service").execute(&actor, command)
    })
    .await;
    match result {
        Ok(Ok(value)) => (StatusCode::OK, Json(value)).into_response(),
        Ok(Err(error)) => failure(status_for(&error), &error),
        Err(join) => failure(
            StatusCode::INTERNAL_SERVER_ERROR,
            &RcmError::StorageFailure(join.to_string()),
        ),
    }
}

fn endpoint(route: &'static Route) -> MethodRouter<App> {
    let filter = match route.method {
        Method::Get => MethodFilter::GET,
        Method::Post => MethodFilter::POST,
    };
    on(
        filter,
        move |State(app): State<App>,
              path: Option<Path<BTreeMap<String, String>>>,
              Query(query): Query<BTreeMap<String, String>>,
              headers: HeaderMap,
              body: Bytes| async move {
            let path = path.map(|Path(p)| p).unwrap_or_default();
            handle(app, route, path, query, headers, body).await
        },
    )
}

pub fn router(app: App) -> Router {
    let mut by_path: BTreeMap<&str, MethodRouter<App>> = BTreeMap::new();
    for route in ROUTES {
        let next = endpoint(route);
        let merged = match by_path.remove(route.path) {
            Some(existing) => existing.merge(next),
            None => next,
        };
        by_path.insert(route.path, merged);
    }
    by_path
        .into_iter()
        .fold(Router::new(), |router, (path, methods)| router.route(path, methods))
        .with_state(app)
}

/// Serves until `shutdown` resolves, then reports 503 from the health check
/// for `grace` before closing connections.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: App,
    grace: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let draining = app.clone();
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async move {
            shutdown.await;
            draining.drain();
            tokio::time::sleep(grace).await;
        })
        .await
}

/// A server on its own runtime thread.
pub struct Server {
    addr: SocketAddr,
    app: App,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl Server {
    pub fn start(service: Service, listen: SocketAddr) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let app = App::new(service);
        let (stop, stopped) = oneshot::channel::<()>();
        let serving = app.clone();
        let thread = std::thread::Builder::new()
            .name("rcm-http".into())
            .spawn(move || {
                let runtime = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(2)
                    .enable_all()
                    .build()?;
                runtime.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    serve(listener, serving, Duration::ZERO, async move {
                        let _ = stopped.await;
                    })
                    .await
                })
            })?;
        Ok(Self {
            addr,
            app,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn drain(&self) {
        self.app.drain();
    }

    /// Shuts down gracefully and hands back the service, whose data
    /// directory lock is still held until it is dropped.
    pub fn stop(mut self) -> Service {
        self.shutdown();
        let app = self.app.clone();
        drop(self);
        let service = Arc::try_unwrap(app.service).unwrap_or_else(|_| panic!("service still shared"));
        let service = service.into_inner().expect("service");
        service.flush_notifications();
        service
    }

    fn shutdown(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}
