//! Regenerate the `fixtures/` tree at the repository root: demo scenes, the
//! 12-question benchmark, reference images, mock agent scripts, and config
//! files wiring them together.
//!
//! Run from anywhere inside the workspace:
//!
//! ```text
//! cargo run -p vantage --example gen_fixtures [-- <output-dir>]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use vantage::agents::{MockEntry, TemplateId};
use vantage::camera::Intrinsics;
use vantage::fixtures::{self, FIXTURE_QUESTIONS};
use vantage::pipeline::push_out_of_footprints;
use vantage::render::{geometric_view_check, rasterize, RenderOptions, DEFAULT_COVERAGE_THRESHOLD};

/// Scripted coordinate choices; each must pass the geometric check on every
/// fixture scene so mock runs are stable (asserted below).
const COORD_CHOICES: [(f64, f64, f64); 4] = [
    (2.0, -2.0, 35.0),
    (2.0, -2.0, 50.0),
    (-2.0, 2.0, 35.0),
    (-2.0, 2.0, 50.0),
];

fn p2(think: &str, perspective: &str) -> String {
    serde_json::json!({"Think": think, "Perspective": perspective}).to_string()
}

fn p3(think: &str, coords: (f64, f64, f64)) -> String {
    serde_json::json!({"Think": think, "Coords": [coords.0, coords.1, coords.2]}).to_string()
}

fn p4(observation: &str, reasoning: &str, answer: &str) -> String {
    serde_json::json!({"Observation": observation, "Reasoning": reasoning, "Answer": answer})
        .to_string()
}

fn p5(reasoning: &str, answer: &str) -> String {
    serde_json::json!({"Reasoning": reasoning, "Answer": answer}).to_string()
}

fn entry(template: TemplateId, index: usize, reply: String) -> MockEntry {
    MockEntry {
        template,
        index,
        sample: None,
        reply,
    }
}

fn entry_for(template: TemplateId, index: usize, sample: &str, reply: String) -> MockEntry {
    MockEntry {
        template,
        index,
        sample: Some(sample.to_string()),
        reply,
    }
}

fn write_script(path: &Path, entries: &[MockEntry]) {
    fs::write(
        path,
        serde_json::to_string_pretty(entries).expect("serialize script") + "\n",
    )
    .expect("write script");
}

fn solve_accept_script() -> Vec<MockEntry> {
    vec![
        entry(
            TemplateId::P2Perspective,
            0,
            p2(
                "Comparing heights needs an eye-level view where every box is visible at once.",
                "an elevated view from the front-right corner showing all three boxes",
            ),
        ),
        entry(
            TemplateId::P3Coords,
            0,
            p3(
                "The boxes cluster around the center; a camera at (2, -2) with a moderate pitch keeps everything in frame.",
                COORD_CHOICES[0],
            ),
        ),
        entry(
            TemplateId::P4Answer,
            0,
            p4(
                "The three boxes are visible but the viewing angle is flatter than the requested elevated view.",
                "The displayed perspective is not consistent with the perspective description from step 1.",
                "None",
            ),
        ),
        entry(
            TemplateId::P3Coords,
            1,
            p3("Retry from the same quadrant with a steeper pitch.", COORD_CHOICES[1]),
        ),
        entry(
            TemplateId::P4Answer,
            1,
            p4(
                "All three boxes are fully visible from the elevated viewpoint.",
                "The green box extends clearly higher than the red and blue boxes.",
                "B",
            ),
        ),
    ]
}

fn solve_always_reject_script() -> Vec<MockEntry> {
    let mut entries = vec![entry(
        TemplateId::P2Perspective,
        0,
        p2("Need a view of all objects.", "an elevated corner view"),
    )];
    for (i, coords) in COORD_CHOICES.iter().enumerate() {
        entries.push(entry(
            TemplateId::P3Coords,
            i,
            p3("Trying another corner.", *coords),
        ));
        entries.push(entry(
            TemplateId::P4Answer,
            i,
            p4(
                "The view is rendered.",
                "The perspective still does not match the description.",
                "None",
            ),
        ));
    }
    entries
}

fn eval_baseline_script() -> Vec<MockEntry> {
    let mut entries = Vec::new();
    // nine correct answers, two wrong, one malformed reply
    let wrong = |label: &str| if label == "A" { "B" } else { "A" };
    for (id, _, _, _, _, answer) in FIXTURE_QUESTIONS {
        let reply = match id {
            "q10" | "q11" => p5("Going with the other option.", wrong(answer)),
            "q12" => "I think the answer is B, but I cannot say for sure.".to_string(),
            _ => p5("The rendered geometry makes this unambiguous.", answer),
        };
        entries.push(entry_for(TemplateId::P5Baseline, 0, id, reply));
    }
    entries
}

fn eval_pipeline_script() -> Vec<MockEntry> {
    let mut entries = vec![
        entry(
            TemplateId::P2Perspective,
            0,
            p2(
                "Pick a corner view that shows every object of the scene.",
                "an elevated corner view showing all objects",
            ),
        ),
        entry(
            TemplateId::P3Coords,
            0,
            p3("A camera at (2, -2) above the scene covers everything.", COORD_CHOICES[0]),
        ),
    ];
    for (id, _, _, _, _, answer) in FIXTURE_QUESTIONS {
        entries.push(entry_for(
            TemplateId::P4Answer,
            0,
            id,
            p4(
                "All objects relevant to the question are visible in the synthesized view.",
                "The spatial relation can be read directly off the novel view.",
                answer,
            ),
        ));
    }
    entries
}

fn assert_coords_pass_everywhere() {
    let intr = Intrinsics::default();
    let scenes = [
        ("boxes", fixtures::three_box_scene()),
        ("stacked", fixtures::stacked_scene()),
        ("planks", fixtures::parallel_scene()),
    ];
    for (x, y, pitch) in COORD_CHOICES {
        for (name, scene) in &scenes {
            let (ax, ay) = push_out_of_footprints(scene, x, y);
            let pose = vantage::camera::pose_from_agent_coords(ax, ay, pitch, scene)
                .expect("fixture pose");
            let img = rasterize(scene, &pose.extrinsics, &intr, &RenderOptions::default());
            let report = geometric_view_check(
                scene,
                &pose.extrinsics,
                &intr,
                &img,
                DEFAULT_COVERAGE_THRESHOLD,
            );
            assert!(
                report.pass,
                "scripted coords ({x}, {y}, {pitch}) fail on scene {name}: {report:?}"
            );
        }
    }
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures"));

    assert_coords_pass_everywhere();
    fixtures::write_benchmark_fixture(&out).expect("write benchmark fixture");

    let mock_dir = out.join("mock");
    fs::create_dir_all(&mock_dir).expect("create mock dir");
    write_script(&mock_dir.join("solve_accept.json"), &solve_accept_script());
    write_script(
        &mock_dir.join("solve_always_reject.json"),
        &solve_always_reject_script(),
    );
    write_script(&mock_dir.join("eval_baseline.json"), &eval_baseline_script());
    write_script(&mock_dir.join("eval_pipeline.json"), &eval_pipeline_script());

    let config_dir = out.join("config");
    fs::create_dir_all(&config_dir).expect("create config dir");
    for (file, script) in [
        ("mock_solve.json", "solve_accept.json"),
        ("mock_eval_baseline.json", "eval_baseline.json"),
        ("mock_eval_pipeline.json", "eval_pipeline.json"),
    ] {
        let config = serde_json::json!({
            "mock_script": out.join("mock").join(script).display().to_string(),
        });
        fs::write(
            config_dir.join(file),
            serde_json::to_string_pretty(&config).expect("serialize config") + "\n",
        )
        .expect("write config");
    }

    println!("fixtures written to {}", out.display());
}
