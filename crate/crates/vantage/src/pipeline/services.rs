//! Optional HTTP clients for the segmentation and reconstruction services in
//! front of the pipeline. Both speak plain JSON-over-POST with the same
//! retry/backoff policy as the agent transport. When unconfigured, the
//! pipeline requires a pre-built scene manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::PipelineError;

/// Connection settings for one auxiliary service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceEndpoint {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: Vec<u64>,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_backoff() -> Vec<u64> {
    vec![1000, 4000]
}

/// The optional service pair. Both `None` means the desk-scale path: scenes
/// arrive as pre-built manifests.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ServiceClients {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<ServiceEndpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ServiceEndpoint>,
}

fn post_json(service: &ServiceEndpoint, body: &Value) -> Result<Value, PipelineError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(service.timeout_secs))
        .build()
        .map_err(|e| PipelineError::Service(e.to_string()))?;
    let mut attempt = 0usize;
    loop {
        let result = client
            .post(&service.endpoint)
            .json(body)
            .send()
            .map_err(|e| PipelineError::Service(format!("transport: {e}")))
            .and_then(|resp| {
                let status = resp.status().as_u16();
                if status >= 400 {
                    return Err(PipelineError::Service(format!(
                        "http status {status} from {}",
                        service.endpoint
                    )));
                }
                resp.json::<Value>()
                    .map_err(|e| PipelineError::Service(format!("bad json: {e}")))
            });
        match result {
            Ok(v) => return Ok(v),
            Err(err) => {
                let retryable = match &err {
                    PipelineError::Service(m) => {
                        m.starts_with("transport:")
                            || m.starts_with("http status 5")
                    }
                    _ => false,
                };
                if !retryable || attempt >= service.retry_backoff_ms.len() {
                    return Err(err);
                }
                std::thread::sleep(Duration::from_millis(service.retry_backoff_ms[attempt]));
                attempt += 1;
            }
        }
    }
}

fn b64(data: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(data)
}

fn from_b64(data: &str, what: &str) -> Result<Vec<u8>, PipelineError> {
    base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| PipelineError::Service(format!("{what} is not valid base64: {e}")))
}

/// Request one mask for a text query: POST {image, query} -> {mask}. The
/// reply mask is PNG bytes.
pub fn segment(
    service: &ServiceEndpoint,
    image_png: &[u8],
    query: &str,
) -> Result<Vec<u8>, PipelineError> {
    let reply = post_json(service, &json!({"image": b64(image_png), "query": query}))?;
    let mask = reply
        .get("mask")
        .and_then(Value::as_str)
        .ok_or_else(|| PipelineError::Service("segmentation reply lacks 'mask'".into()))?;
    from_b64(mask, "mask")
}

/// Reconstruction reply: a scene manifest plus mesh/mask files keyed by
/// relative name, all base64.
#[derive(Debug, Deserialize)]
pub struct ReconstructionReply {
    pub manifest: Value,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

/// Request meshes for an image and its masks: POST {image, masks[]} ->
/// {manifest, files}. Writes everything under `out_dir` and returns the
/// manifest path.
pub fn reconstruct(
    service: &ServiceEndpoint,
    image_png: &[u8],
    masks: &[Vec<u8>],
    out_dir: &Path,
) -> Result<PathBuf, PipelineError> {
    let body = json!({
        "image": b64(image_png),
        "masks": masks.iter().map(|m| b64(m)).collect::<Vec<_>>(),
    });
    let reply = post_json(service, &body)?;
    let reply: ReconstructionReply = serde_json::from_value(reply)
        .map_err(|e| PipelineError::Service(format!("bad reconstruction reply: {e}")))?;

    fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::Io(format!("create {}: {e}", out_dir.display())))?;
    for (name, data) in &reply.files {
        if name.contains("..") || name.starts_with('/') {
            return Err(PipelineError::Service(format!(
                "reconstruction file name {name:?} escapes the output directory"
            )));
        }
        let bytes = from_b64(data, name)?;
        let path = out_dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| PipelineError::Io(format!("create {}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes)
            .map_err(|e| PipelineError::Io(format!("write {}: {e}", path.display())))?;
    }
    let manifest_path = out_dir.join("scene.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&reply.manifest)
            .map_err(|e| PipelineError::Service(format!("manifest: {e}")))?,
    )
    .map_err(|e| PipelineError::Io(format!("write {}: {e}", manifest_path.display())))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn serve_once(body: String) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 65536];
            let _ = stream.read(&mut buf);
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        format!("http://{addr}/api")
    }

    fn fast(endpoint: String) -> ServiceEndpoint {
        ServiceEndpoint {
            endpoint,
            timeout_secs: 5,
            retry_backoff_ms: vec![10],
        }
    }

    #[test]
    fn segmentation_roundtrip() {
        let mask_bytes = vec![1u8, 2, 3, 4];
        let body = serde_json::to_string(&json!({"mask": b64(&mask_bytes)})).unwrap();
        let service = fast(serve_once(body));
        let got = segment(&service, &[9, 9], "chair").unwrap();
        assert_eq!(got, mask_bytes);
    }

    #[test]
    fn reconstruction_writes_tree() {
        let dir = tempfile::tempdir().unwrap();
        let obj = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let body = serde_json::to_string(&json!({
            "manifest": {"objects": [{"id": "o1", "label": "thing", "mesh": "o1.obj"}]},
            "files": {"o1.obj": b64(obj)},
        }))
        .unwrap();
        let service = fast(serve_once(body));
        let manifest = reconstruct(&service, &[1], &[vec![2]], dir.path()).unwrap();
        assert!(manifest.exists());
        let scene = crate::geometry::load_scene(&manifest).unwrap();
        assert_eq!(scene.objects.len(), 1);
    }

    #[test]
    fn hostile_file_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = serde_json::to_string(&json!({
            "manifest": {"objects": []},
            "files": {"../evil.obj": b64(b"x")},
        }))
        .unwrap();
        let service = fast(serve_once(body));
        let err = reconstruct(&service, &[1], &[], dir.path()).unwrap_err();
        assert!(matches!(err, PipelineError::Service(_)));
    }
}
