//! Full reconstruction front end against canned HTTP services: keyword
//! extraction, per-keyword segmentation, IoU dedup, reconstruction, then the
//! regular view-synthesis loop.

use std::fs;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;

use base64::Engine as _;
use vantage::agents::{AgentSet, MockEntry, TemplateId};
use vantage::camera::Intrinsics;
use vantage::fixtures;
use vantage::knowledge::default_kb;
use vantage::pipeline::{
    load_trace, run_sample, PipelineConfig, SampleSpec, ServiceClients, ServiceEndpoint,
};

fn b64(data: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(data)
}

// Serves `bodies` as sequential HTTP 200 JSON responses on a fresh port.
fn canned_service(bodies: Vec<String>) -> (ServiceEndpoint, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        for body in bodies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 1 << 20];
            let _ = stream.read(&mut buf);
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (
        ServiceEndpoint {
            endpoint: format!("http://{addr}/api"),
            timeout_secs: 10,
            retry_backoff_ms: vec![10],
        },
        handle,
    )
}

fn mask_png(fill: &[(u32, u32, u32, u32)]) -> Vec<u8> {
    // 32x32 binary mask with white rectangles
    let mut img = image::GrayImage::new(32, 32);
    for &(x0, y0, x1, y1) in fill {
        for y in y0..y1 {
            for x in x0..x1 {
                img.put_pixel(x, y, image::Luma([255]));
            }
        }
    }
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn scene_files(dir: &Path) -> (serde_json::Value, Vec<(String, Vec<u8>)>) {
    // reuse the boxes fixture meshes as the "reconstruction output"
    let scene = fixtures::three_box_scene();
    let manifest_path = fixtures::write_scene_manifest(&scene, dir, "boxes").unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let mut files = Vec::new();
    for entry in manifest["objects"].as_array().unwrap() {
        let name = entry["mesh"].as_str().unwrap().to_string();
        let bytes = fs::read(dir.join(&name)).unwrap();
        files.push((name, bytes));
    }
    (manifest, files)
}

#[test]
fn reconstruction_front_end_builds_scene_and_answers() {
    let dir = tempfile::tempdir().unwrap();
    let image_path = dir.path().join("original.png");
    fixtures::write_reference_image(&fixtures::three_box_scene(), &image_path).unwrap();

    // P1 yields three granularities -> three distinct segmentation queries
    let keywords = r#"{"Keywords":["red box"],"Abbreviated keywords":["box"],"Expanded keywords":["tall green box"]}"#;
    let entries = vec![
        MockEntry {
            template: TemplateId::P1Extract,
            index: 0,
            sample: None,
            reply: keywords.to_string(),
        },
        MockEntry {
            template: TemplateId::P2Perspective,
            index: 0,
            sample: None,
            reply: r#"{"Think":"t","Perspective":"an elevated corner view"}"#.to_string(),
        },
        MockEntry {
            template: TemplateId::P3Coords,
            index: 0,
            sample: None,
            reply: r#"{"Think":"t","Coords":[2,-2,35]}"#.to_string(),
        },
        MockEntry {
            template: TemplateId::P4Answer,
            index: 0,
            sample: None,
            reply: r#"{"Observation":"o","Reasoning":"r","Answer":"B"}"#.to_string(),
        },
    ];

    // three masks; the first two overlap heavily (IoU > 0.7) so dedup keeps
    // two masks overall
    let masks = [
        mask_png(&[(2, 2, 14, 14)]),
        mask_png(&[(2, 2, 14, 13)]),
        mask_png(&[(20, 20, 30, 30)]),
    ];
    let seg_bodies: Vec<String> = masks
        .iter()
        .map(|m| serde_json::json!({ "mask": b64(m) }).to_string())
        .collect();
    let (seg_endpoint, seg_thread) = canned_service(seg_bodies);

    let scene_dir = tempfile::tempdir().unwrap();
    let (manifest, files) = scene_files(scene_dir.path());
    let file_map: serde_json::Map<String, serde_json::Value> = files
        .iter()
        .map(|(name, bytes)| (name.clone(), serde_json::json!(b64(bytes))))
        .collect();
    let recon_body =
        serde_json::json!({ "manifest": manifest, "files": file_map }).to_string();
    let (recon_endpoint, recon_thread) = canned_service(vec![recon_body]);

    let services = ServiceClients {
        segmentation: Some(seg_endpoint),
        reconstruction: Some(recon_endpoint),
    };
    let out_root = dir.path().join("out");
    let spec = SampleSpec {
        sample_id: "s1",
        scene_manifest: None,
        image: &image_path,
        question: "Which box is the tallest?\nOptions:\nA. red\nB. green\nC. blue",
        subtask_hint: Some("Height_Higher"),
    };
    let result = run_sample(
        &spec,
        &PipelineConfig::default(),
        &AgentSet::mock(entries),
        &default_kb(),
        &services,
        &Intrinsics::default(),
        &out_root,
    )
    .unwrap();
    seg_thread.join().unwrap();
    recon_thread.join().unwrap();

    assert!(result.answered, "{:?}", result.error);
    assert_eq!(result.answer.as_deref(), Some("B"));

    let sample_dir = out_root.join("s1");
    let steps = load_trace(&sample_dir).unwrap();
    let names: Vec<&str> = steps.iter().map(|s| s.step.as_str()).collect();
    assert!(names.starts_with(&[
        "extract_keywords",
        "segmentation",
        "reconstruction",
        "load_scene"
    ]));

    // dedup dropped the near-duplicate mask and reported the collision
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(sample_dir.join("dedup_report.json")).unwrap(),
    )
    .unwrap();
    let decisions = report["decisions"].as_array().unwrap();
    assert_eq!(decisions.len(), 3);
    let kept = decisions.iter().filter(|d| d["kept"] == true).count();
    assert_eq!(kept, 2);
    let dropped = decisions.iter().find(|d| d["kept"] == false).unwrap();
    assert!(dropped["triggering_iou"].as_f64().unwrap() > 0.7);

    // reconstruction output is a loadable scene on disk
    let manifest_path = sample_dir.join("recon/scene.json");
    assert!(manifest_path.exists());
    assert_eq!(
        vantage::geometry::load_scene(&manifest_path).unwrap().objects.len(),
        3
    );
}
