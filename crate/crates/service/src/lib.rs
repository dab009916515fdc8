//! HTTP API over a precomputed lattice.
//!
//! Endpoints (all `GET`, JSON responses, CORS open):
//!
//! - `/v1/next-appointment?mean=&scv=&omega=&n=&i=&k=&u=`: optimal gap until
//!   client `i+1` given client `i` just arrived, `k` clients are present and
//!   the one in service has been served for `u`. `mean` defaults to 1 and
//!   `u` to 0.
//! - `/v1/policies/compare?<same>&policies=dynamic,sequential,static`:
//!   the three policies side by side; `policies` is optional.
//! - `/v1/manifest`: the lattice manifest.
//!
//! Validation failures return 400 with `{"error", "field"}`; a state whose
//! archive is missing returns 404. Nothing is solved at request time.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use dynsched_core::store::{CellRef, StateQuery, Store};
use dynsched_core::Error;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

/// Environment variable naming the lattice directory.
pub const ARCHIVE_DIR_ENV: &str = "DYNSCHED_ARCHIVE_DIR";

pub const MAX_CLIENTS: usize = 20;
pub const SCV_RANGE: (f64, f64) = (0.2, 2.0);

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/v1/next-appointment", get(next_appointment))
        .route("/v1/policies/compare", get(compare))
        .route("/v1/manifest", get(manifest))
        .layer(CorsLayer::permissive())
        .with_state(AppState { store })
}

/// Load every archive and serve on `addr` until the process ends.
pub async fn serve(store: Store, addr: SocketAddr) -> std::io::Result<()> {
    store.preload().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    serve_on(tokio::net::TcpListener::bind(addr).await?, store).await
}

/// Serve on an already bound listener.
pub async fn serve_on(listener: tokio::net::TcpListener, store: Store) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(store))).await
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ApiError {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct Failure(StatusCode, ApiError);

impl Failure {
    fn bad(field: &str, msg: impl Into<String>) -> Self {
        Failure(StatusCode::BAD_REQUEST, ApiError { error: msg.into(), field: Some(field.into()) })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) => StatusCode::BAD_REQUEST,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Failure(code, ApiError { error: e.to_string(), field: None })
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

/// Raw query string; parsed by hand so every failure names its field.
#[derive(Debug, Default, Deserialize)]
pub struct RawParams {
    mean: Option<String>,
    scv: Option<String>,
    omega: Option<String>,
    n: Option<String>,
    i: Option<String>,
    k: Option<String>,
    u: Option<String>,
    policies: Option<String>,
}

fn num<T: std::str::FromStr>(field: &str, v: &Option<String>, default: Option<T>) -> Result<T, Failure> {
    match v {
        Some(s) => s.trim().parse().map_err(|_| Failure::bad(field, format!("{field} is not a valid number: {s:?}"))),
        None => default.ok_or_else(|| Failure::bad(field, format!("{field} is required"))),
    }
}

/// Check a request against the lattice's parameter space.
pub fn validate(p: &RawParams) -> Result<StateQuery, Failure> {
    let q = StateQuery {
        mean: num("mean", &p.mean, Some(1.0))?,
        scv: num("scv", &p.scv, None)?,
        omega: num("omega", &p.omega, None)?,
        n: num("n", &p.n, None)?,
        i: num("i", &p.i, None)?,
        k: num("k", &p.k, None)?,
        u: num("u", &p.u, Some(0.0))?,
    };
    if !(q.mean > 0.0 && q.mean.is_finite()) {
        return Err(Failure::bad("mean", "mean must be a positive number"));
    }
    if !(q.scv >= SCV_RANGE.0 - 1e-12 && q.scv <= SCV_RANGE.1 + 1e-12) {
        return Err(Failure::bad("scv", format!("scv must lie in [{}, {}]", SCV_RANGE.0, SCV_RANGE.1)));
    }
    let tenth = q.omega * 10.0;
    if !(q.omega > 0.0 && q.omega < 1.0) || (tenth - tenth.round()).abs() > 1e-9 {
        return Err(Failure::bad("omega", "omega must be one of 0.1, 0.2, .., 0.9"));
    }
    if q.n < 2 || q.n > MAX_CLIENTS {
        return Err(Failure::bad("n", format!("n must lie in [2, {MAX_CLIENTS}]")));
    }
    if q.i < 1 || q.i >= q.n {
        return Err(Failure::bad("i", "i must lie in [1, n-1]"));
    }
    if q.k < 1 || q.k > q.i {
        return Err(Failure::bad("k", "k must lie in [1, i]"));
    }
    if !(q.u >= 0.0 && q.u.is_finite()) {
        return Err(Failure::bad("u", "u must be a nonnegative number"));
    }
    Ok(StateQuery { omega: tenth.round() / 10.0, ..q })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NextAppointment {
    /// Gap until the next appointment.
    pub tau: f64,
    pub cost_to_go: f64,
    /// Optimal expected cost of the whole day under the dynamic policy.
    pub total_cost: f64,
    pub policy: String,
    pub archive_cell: CellRef,
    /// The SCV was not on the lattice; the nearest cell answered.
    pub nearest_cell: bool,
    /// `u` exceeded the stored ages and the last stored value was used.
    pub extrapolated: bool,
    /// Grid step of the answering table, in the request's time unit.
    /// `tau` is interpolated linearly between stored ages.
    pub delta: f64,
}

async fn next_appointment(State(st): State<AppState>, Query(p): Query<RawParams>) -> Result<Json<NextAppointment>, Failure> {
    let q = validate(&p)?;
    let a = st.store.query(&q)?;
    Ok(Json(NextAppointment {
        tau: a.tau,
        cost_to_go: a.cost_to_go,
        total_cost: a.total_cost,
        policy: "dynamic-dp".into(),
        archive_cell: a.cell,
        nearest_cell: a.nearest_cell,
        extrapolated: a.extrapolated,
        delta: a.delta,
    }))
}

const POLICY_NAMES: [(&str, &str); 3] = [("dynamic", "dynamic-dp"), ("sequential", "sequential"), ("static", "static")];

async fn compare(
    State(st): State<AppState>,
    Query(p): Query<RawParams>,
) -> Result<Json<dynsched_core::store::Comparison>, Failure> {
    let q = validate(&p)?;
    let wanted: Vec<&str> = match &p.policies {
        None => POLICY_NAMES.iter().map(|x| x.1).collect(),
        Some(list) => list
            .split(',')
            .map(|s| {
                let s = s.trim();
                POLICY_NAMES
                    .iter()
                    .find(|x| x.0 == s || x.1 == s)
                    .map(|x| x.1)
                    .ok_or_else(|| Failure::bad("policies", format!("unknown policy {s:?}; use dynamic, sequential, static")))
            })
            .collect::<Result<_, _>>()?,
    };
    let mut c = st.store.compare(&q)?;
    c.policies.retain(|a| wanted.contains(&a.policy.as_str()));
    Ok(Json(c))
}

async fn manifest(State(st): State<AppState>) -> Json<dynsched_core::store::Manifest> {
    Json(st.store.manifest().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawParams {
        let q: String = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("&");
        serde_json::from_value(serde_json::Value::Object(
            q.split('&').map(|kv| {
                let (k, v) = kv.split_once('=').unwrap();
                (k.to_string(), serde_json::Value::String(v.to_string()))
            }).collect(),
        ))
        .unwrap()
    }

    fn base() -> Vec<(&'static str, &'static str)> {
        vec![("scv", "1"), ("omega", "0.5"), ("n", "15"), ("i", "1"), ("k", "1")]
    }

    #[test]
    fn defaults_fill_mean_and_u() {
        let q = validate(&raw(&base())).unwrap();
        assert_eq!((q.mean, q.u, q.n, q.i, q.k), (1.0, 0.0, 15, 1, 1));
    }

    #[test]
    fn each_bad_field_is_named() {
        for (f, v) in [("scv", "2.5"), ("omega", "0.55"), ("n", "21"), ("i", "15"), ("k", "2"), ("u", "-1"), ("mean", "0"), ("n", "x")] {
            let mut p = base();
            p.retain(|x| x.0 != f);
            p.push((f, v));
            let e = validate(&raw(&p)).unwrap_err();
            assert_eq!(e.0, StatusCode::BAD_REQUEST);
            assert_eq!(e.1.field.as_deref(), Some(f), "{f}={v}");
        }
    }

    #[test]
    fn missing_field_is_named() {
        let mut p = base();
        p.retain(|x| x.0 != "omega");
        assert_eq!(validate(&raw(&p)).unwrap_err().1.field.as_deref(), Some("omega"));
    }
}
