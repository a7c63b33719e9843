//! Newline-delimited JSON-RPC 2.0 front end for the registry: methods
//! tools/list, tools/describe, tools/invoke over stdio or a Unix socket.
//! Responses are deterministic; no timing or environment data is included.

use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Value};

use super::builtin::default_directive;
use super::{distill, DistillDirective, InvocationRequest, RegistryError, ToolRegistry};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;

fn error_response(id: Value, code: i64, message: String) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}})
}

fn ok_response(id: Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

fn app_error(id: Value, err: &RegistryError) -> Value {
    error_response(id, err.wire_code(), err.to_string())
}

/// Handles one request frame and returns the response frame (without the
/// trailing newline). Pure with respect to the registry contents.
pub fn handle_frame(registry: &ToolRegistry, line: &str) -> String {
    let response = handle_value(registry, line);
    serde_json::to_string(&response).expect("responses serialize")
}

fn handle_value(registry: &ToolRegistry, line: &str) -> Value {
    let frame: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_response(Value::Null, PARSE_ERROR, format!("parse error: {e}")),
    };
    let Value::Object(obj) = &frame else {
        return error_response(Value::Null, INVALID_REQUEST, "request must be an object".into());
    };
    // The id is echoed on every reply; a missing or non-scalar id makes the
    // frame invalid (notifications are not supported).
    let id = match obj.get("id") {
        Some(v @ (Value::Number(_) | Value::String(_))) => v.clone(),
        Some(other) => {
            return error_response(
                Value::Null,
                INVALID_REQUEST,
                format!("id must be a number or string, got {other}"),
            )
        }
        None => return error_response(Value::Null, INVALID_REQUEST, "missing id".into()),
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return error_response(id, INVALID_REQUEST, "jsonrpc must be \"2.0\"".into());
    }
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return error_response(id, INVALID_REQUEST, "missing method".into());
    };
    let params = obj.get("params").cloned().unwrap_or(Value::Null);
    match method {
        "tools/list" => {
            let names: Vec<&str> = registry.names();
            ok_response(id, json!({ "tools": names }))
        }
        "tools/describe" => {
            let Some(name) = params.get("name").and_then(Value::as_str) else {
                return error_response(id, INVALID_PARAMS, "params.name required".into());
            };
            match registry.describe(name) {
                Some(d) => ok_response(id, serde_json::to_value(d).expect("descriptors serialize")),
                None => app_error(id, &RegistryError::UnknownTool(name.to_string())),
            }
        }
        "tools/invoke" => {
            let request: InvocationRequest = match serde_json::from_value(params.clone()) {
                Ok(r) => r,
                Err(e) => {
                    return error_response(id, INVALID_PARAMS, format!("invalid params: {e}"))
                }
            };
            let directive: Option<DistillDirective> = match params.get("distill") {
                None | Some(Value::Null) => None,
                Some(v) => match serde_json::from_value(v.clone()) {
                    Ok(d) => Some(d),
                    Err(e) => {
                        return error_response(
                            id,
                            INVALID_PARAMS,
                            format!("invalid distill directive: {e}"),
                        )
                    }
                },
            };
            let raw = match registry.invoke(&request) {
                Ok(raw) => raw,
                Err(e) => return app_error(id, &e),
            };
            let directive = directive.unwrap_or_else(|| default_directive(raw.kind));
            match distill(&request.tool, &raw, &directive) {
                Ok(d) => ok_response(
                    id,
                    json!({
                        "kind": raw.kind,
                        "stats": raw.stats,
                        "distilled": d,
                    }),
                ),
                Err(e) => app_error(id, &e),
            }
        }
        other => error_response(id, METHOD_NOT_FOUND, format!("unknown method: {other}")),
    }
}

/// Serves frames from `reader` to `writer` until EOF; blank lines are
/// skipped. Used for stdio transport and per-connection socket loops.
pub fn serve_lines<R: BufRead, W: Write>(
    registry: &ToolRegistry,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_frame(registry, &line);
        writer.write_all(response.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Blocks serving stdin/stdout until EOF.
pub fn serve_stdio(registry: &ToolRegistry) -> std::io::Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_lines(registry, stdin.lock(), stdout.lock())
}

/// A running Unix-socket server; dropping without `shutdown` leaves the
/// accept thread running until process exit.
pub struct ServerHandle {
    path: PathBuf,
    accept: Option<JoinHandle<()>>,
    stop: Arc<AtomicBool>,
}

impl ServerHandle {
    pub fn socket_path(&self) -> &Path {
        &self.path
    }

    /// Stops accepting and joins the accept loop. In-flight connection
    /// threads finish their current frames independently.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock accept() with a throwaway connection.
        let _ = UnixStream::connect(&self.path);
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Binds a Unix socket and serves each connection on its own thread.
pub fn serve_socket(
    registry: Arc<ToolRegistry>,
    path: &Path,
) -> Result<ServerHandle, RegistryError> {
    if path.exists() {
        std::fs::remove_file(path)
            .map_err(|e| RegistryError::TransportError(format!("{}: {e}", path.display())))?;
    }
    let listener = UnixListener::bind(path)
        .map_err(|e| RegistryError::TransportError(format!("{}: {e}", path.display())))?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let accept = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if stop_flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let registry = Arc::clone(&registry);
            std::thread::spawn(move || {
                let reader = BufReader::new(match stream.try_clone() {
                    Ok(s) => s,
                    Err(_) => return,
                });
                let _ = serve_lines(&registry, reader, stream);
            });
        }
    });
    Ok(ServerHandle { path: path.to_path_buf(), accept: Some(accept), stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::builtin_registry;

    #[test]
    fn malformed_json_gets_parse_error_with_null_id() {
        let reg = builtin_registry();
        let resp: Value = serde_json::from_str(&handle_frame(&reg, "{nope")).unwrap();
        assert_eq!(resp["error"]["code"], json!(PARSE_ERROR));
        assert_eq!(resp["id"], Value::Null);
    }

    #[test]
    fn missing_id_is_an_invalid_request() {
        let reg = builtin_registry();
        let resp: Value = serde_json::from_str(&handle_frame(
            &reg,
            r#"{"jsonrpc":"2.0","method":"tools/list"}"#,
        ))
        .unwrap();
        assert_eq!(resp["error"]["code"], json!(INVALID_REQUEST));
    }

    #[test]
    fn unknown_method_and_bad_params_use_protocol_codes() {
        let reg = builtin_registry();
        let resp: Value = serde_json::from_str(&handle_frame(
            &reg,
            r#"{"jsonrpc":"2.0","id":1,"method":"tools/destroy"}"#,
        ))
        .unwrap();
        assert_eq!(resp["error"]["code"], json!(METHOD_NOT_FOUND));
        let resp: Value = serde_json::from_str(&handle_frame(
            &reg,
            r#"{"jsonrpc":"2.0","id":2,"method":"tools/describe","params":{}}"#,
        ))
        .unwrap();
        assert_eq!(resp["error"]["code"], json!(INVALID_PARAMS));
    }

    #[test]
    fn list_echoes_request_id() {
        let reg = builtin_registry();
        let resp: Value = serde_json::from_str(&handle_frame(
            &reg,
            r#"{"jsonrpc":"2.0","id":"req-7","method":"tools/list"}"#,
        ))
        .unwrap();
        assert_eq!(resp["id"], json!("req-7"));
        assert_eq!(resp["result"]["tools"].as_array().unwrap().len(), 7);
    }
}
