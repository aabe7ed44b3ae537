//! JSON HTTP API over a [`Store`].

use std::future::Future;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::state::{InventoryError, Order, PalletItem};
use crate::store::{Store, StoreError};

/// Milliseconds since the epoch; injectable so tests and demos are repeatable.
pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    })
}

#[derive(Clone)]
struct ApiState {
    store: Arc<Store>,
    clock: Clock,
}

#[derive(Debug, Deserialize)]
pub struct OrderRequest {
    pub category: String,
    pub quantity: i64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.to_string(),
                message: message.into(),
            },
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let (status, kind) = match &e {
            StoreError::Inventory(inv) => match inv {
                InventoryError::InsufficientStock { .. } => (StatusCode::CONFLICT, "InsufficientStock"),
                InventoryError::InvalidQuantity(_) => (StatusCode::BAD_REQUEST, "InvalidQuantity"),
                InventoryError::UnknownCategory(_) => (StatusCode::NOT_FOUND, "UnknownCategory"),
                InventoryError::OrderNotFound(_) => (StatusCode::NOT_FOUND, "OrderNotFound"),
                InventoryError::InvalidTransition { .. } => (StatusCode::CONFLICT, "InvalidTransition"),
                _ => (StatusCode::BAD_REQUEST, "InvalidRequest"),
            },
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "StorageError"),
        };
        Self::new(status, kind, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(store: Arc<Store>, clock: Clock) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/components", get(components))
        .route("/orders", get(list_orders).post(place_order))
        .route("/orders/{id}", get(get_order))
        .route("/orders/{id}/fulfill", post(fulfill_order))
        .route("/orders/{id}/cancel", post(cancel_order))
        .layer(middleware::from_fn(cors))
        .with_state(ApiState { store, clock })
}

/// Lets a browser UI on another origin call the API.
async fn cors(request: Request, next: Next) -> Response {
    let mut response = if request.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(request).await
    };
    let headers = response.headers_mut();
    headers.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    headers.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    response
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn components(State(api): State<ApiState>) -> Json<Vec<PalletItem>> {
    Json(api.store.list_components())
}

async fn list_orders(State(api): State<ApiState>) -> Json<Vec<Order>> {
    Json(api.store.orders())
}

async fn place_order(
    State(api): State<ApiState>,
    body: Result<Json<OrderRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Order>), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.body_text()))?;
    let order = api.store.place_order(&req.category, req.quantity, (api.clock)())?;
    Ok((StatusCode::CREATED, Json(order)))
}

async fn get_order(State(api): State<ApiState>, Path(id): Path<String>) -> Result<Json<Order>, ApiError> {
    api.store
        .order(&id)
        .map(Json)
        .ok_or_else(|| StoreError::from(InventoryError::OrderNotFound(id)).into())
}

async fn fulfill_order(State(api): State<ApiState>, Path(id): Path<String>) -> Result<Json<Order>, ApiError> {
    Ok(Json(api.store.fulfill_order(&id, (api.clock)())?))
}

async fn cancel_order(State(api): State<ApiState>, Path(id): Path<String>) -> Result<Json<Order>, ApiError> {
    Ok(Json(api.store.cancel_order(&id, (api.clock)())?))
}

/// Serves `router` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    router: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}
