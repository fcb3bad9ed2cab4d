//! HTTP API over the annotation pipeline.
//!
//! * `POST /process` with `{"text": ..., "processors": [...], "decoder"?: "greedy" | "mst"}`
//!   returns the annotated document.
//! * `GET /health` reports status and loaded processors.
//! * `GET /openapi.json` serves the API description.
//!
//! Errors are `{"code": ..., "message": ...}` with status 400 for bad
//! processor lists, 413 for oversize bodies and 422 for malformed bodies.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use grnlp::doc::{MorphCategory, UPOS_TAGS};
use grnlp::ner::EntityType;
use grnlp::parser::Decoder;
use grnlp::pipeline::{DocumentJson, Models, PipelineSpec, Processor};
use grnlp::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Default request body cap in bytes.
pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024;

#[derive(Clone, Debug)]
pub struct AppState {
    pub models: Models,
    pub body_limit: usize,
}

impl AppState {
    pub fn new(models: Models) -> Self {
        AppState {
            models,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessRequest {
    pub text: String,
    pub processors: Vec<String>,
    #[serde(default)]
    pub decoder: Decoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_owned(),
                message: message.into(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownProcessor { .. } | Error::DuplicateProcessor(_) | Error::MissingModel(_) => {
                StatusCode::BAD_REQUEST
            }
            Error::InSentence { .. } | Error::SentenceTooLong { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", r.body_text())
        } else {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", r.body_text())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.body_limit;
    Router::new()
        .route("/process", post(process))
        .route("/health", get(health))
        .route("/openapi.json", get(|| async { Json(openapi()) }))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn process(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ProcessRequest>, JsonRejection>,
) -> Result<Json<DocumentJson>, ApiError> {
    let Json(req) = body?;
    let spec = PipelineSpec::from_names(&req.processors)?;
    let pipeline = state.models.pipeline(&spec, req.decoder)?;
    let out = tokio::task::spawn_blocking(move || pipeline.run(&req.text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(out.to_document()))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let processors: Vec<&str> = state.models.available().into_iter().map(Processor::name).collect();
    Json(json!({ "status": "ok", "processors": processors }))
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// OpenAPI 3.1 description of the service.
pub fn openapi() -> Value {
    let processors: Vec<&str> = Processor::ALL.iter().map(|p| p.name()).collect();
    let types: Vec<&str> = EntityType::ALL.iter().map(|t| t.name()).collect();
    let ner_pattern = format!("^(O|[BIES]-({}))$", types.join("|"));
    let categories: Vec<&str> = MorphCategory::ALL.iter().map(|c| c.name()).collect();
    let error_response = |description: &str| {
        json!({
            "description": description,
            "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } }
        })
    };
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "grnlp",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Greek tagging, parsing, named entities and Greeklish transliteration."
        },
        "paths": {
            "/process": {
                "post": {
                    "operationId": "process",
                    "requestBody": {
                        "required": true,
                        "content": { "application/json": { "schema": { "$ref": "#/components/schemas/ProcessRequest" } } }
                    },
                    "responses": {
                        "200": {
                            "description": "Annotated document",
                            "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Document" } } }
                        },
                        "400": error_response("Unknown, duplicate or unavailable processor"),
                        "413": error_response("Request body too large"),
                        "422": error_response("Malformed body or unprocessable text")
                    }
                }
            },
            "/health": {
                "get": {
                    "operationId": "health",
                    "responses": {
                        "200": {
                            "description": "Service status",
                            "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Health" } } }
                        }
                    }
                }
            },
            "/openapi.json": {
                "get": {
                    "operationId": "openapi",
                    "responses": { "200": { "description": "This document" } }
                }
            }
        },
        "components": {
            "schemas": {
                "ProcessRequest": {
                    "type": "object",
                    "required": ["text", "processors"],
                    "additionalProperties": false,
                    "properties": {
                        "text": { "type": "string" },
                        "processors": { "type": "array", "items": { "type": "string", "enum": processors } },
                        "decoder": { "type": "string", "enum": ["greedy", "mst"], "default": "greedy" }
                    }
                },
                "Document": {
                    "type": "object",
                    "required": ["text", "sentences"],
                    "additionalProperties": false,
                    "properties": {
                        "text": { "type": "string" },
                        "transliteration": { "type": "string" },
                        "sentences": { "type": "array", "items": { "$ref": "#/components/schemas/Sentence" } }
                    }
                },
                "Sentence": {
                    "type": "object",
                    "required": ["text", "tokens"],
                    "additionalProperties": false,
                    "properties": {
                        "text": { "type": "string" },
                        "tokens": { "type": "array", "minItems": 1, "items": { "$ref": "#/components/schemas/Token" } }
                    }
                },
                "Token": {
                    "type": "object",
                    "required": ["index", "form"],
                    "additionalProperties": false,
                    "properties": {
                        "index": { "type": "integer", "minimum": 1 },
                        "form": { "type": "string", "minLength": 1 },
                        "upos": { "type": "string", "enum": UPOS_TAGS },
                        "feats": {
                            "type": "object",
                            "propertyNames": { "enum": categories },
                            "additionalProperties": { "type": "string", "minLength": 1 }
                        },
                        "ner": { "type": "string", "pattern": ner_pattern },
                        "head": { "type": "integer", "minimum": 0 },
                        "deprel": { "type": "string", "minLength": 1 }
                    }
                },
                "Health": {
                    "type": "object",
                    "required": ["status", "processors"],
                    "properties": {
                        "status": { "type": "string", "const": "ok" },
                        "processors": { "type": "array", "items": { "type": "string", "enum": processors } }
                    }
                },
                "Error": {
                    "type": "object",
                    "required": ["code", "message"],
                    "additionalProperties": false,
                    "properties": {
                        "code": { "type": "string" },
                        "message": { "type": "string" }
                    }
                }
            }
        }
    })
}
