//! WebSocket front end for [`push_core::session`].
//!
//! `GET /ws` upgrades to the JSON envelope protocol. Every other path is served from the
//! static asset directory when one is configured.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use push_core::session::{Envelope, SessionError, SessionManager};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

#[derive(Clone)]
struct AppState {
    sessions: Arc<SessionManager>,
    next_conn: Arc<AtomicU64>,
}

const INDEX: &str = "<!doctype html><title>push</title><p>Session service. Connect a client to <code>/ws</code>.</p>";

/// Router with the WebSocket endpoint and optional static assets.
pub fn router(sessions: Arc<SessionManager>, assets: Option<PathBuf>) -> Router {
    let state = AppState { sessions, next_conn: Arc::new(AtomicU64::new(1)) };
    let app = Router::new().route("/ws", get(upgrade)).with_state(state);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(INDEX) })),
    }
}

/// Bind and serve until the process ends.
pub async fn serve(addr: SocketAddr, sessions: Arc<SessionManager>, assets: Option<PathBuf>) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(sessions, assets)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    let conn = state.next_conn.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| connection(socket, state.sessions, conn))
}

/// Requests on one connection are handled strictly in order.
async fn connection(socket: WebSocket, sessions: Arc<SessionManager>, conn: u64) {
    let (mut tx, mut rx) = socket.split();
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<Envelope>(&text) {
            Ok(env) => {
                let mgr = sessions.clone();
                match tokio::task::spawn_blocking(move || mgr.handle(conn, env)).await {
                    Ok(r) => r,
                    Err(e) => Envelope::error(None, 0, &SessionError::BadRequest(format!("handler failed: {e}"))),
                }
            }
            Err(e) => Envelope::error(None, 0, &SessionError::BadRequest(format!("malformed envelope: {e}"))),
        };
        let out = serde_json::to_string(&reply).expect("envelope serializes");
        if tx.send(Message::Text(out.into())).await.is_err() {
            break;
        }
    }
    sessions.release(conn);
}
