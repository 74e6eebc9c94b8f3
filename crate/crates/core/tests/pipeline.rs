use scaffold_brace::brace::{detect_unit, detect_unit_detailed, DetectParams};
use scaffold_brace::coco::{parse_coco, to_coco_json, DEFAULT_UNIT_CATEGORY};
use scaffold_brace::monitor::{FrameSnapshot, Monitor};
use scaffold_brace::overlay::{draw_overlay, ABSENT_COLOR, PRESENT_COLOR};
use scaffold_brace::synth::{render_frame, render_unit, ClutterParams, ScaffoldSpec};

fn clean() -> ClutterParams {
    ClutterParams {
        n_clutter_lines: 0,
        noise_sigma: 0.0,
        jitter_px: 0.0,
    }
}

#[test]
fn braced_unit_is_found_near_its_crossing() {
    let spec = ScaffoldSpec::default();
    let (img, truth) = render_unit(&spec, true, &clean(), 3).unwrap();
    let frame = render_frame(&spec, 1, 1, &[vec![true]], &clean(), 3).unwrap();
    let v = detect_unit(&img, &frame.annotations.regions[0], &DetectParams::default()).unwrap();
    assert!(v.brace_present);
    assert!(v.n_lines_a >= 1 && v.n_lines_b >= 1);
    let [tx, ty] = truth.crossing.unwrap();
    let nearest = v
        .intersections
        .iter()
        .map(|p| (p.x - tx).hypot(p.y - ty))
        .fold(f64::INFINITY, f64::min);
    assert!(nearest <= 5.0, "nearest intersection {nearest} px from crossing");
}

#[test]
fn removing_the_brace_flips_the_verdict() {
    let spec = ScaffoldSpec::default();
    let params = DetectParams::default();
    let with = render_frame(&spec, 1, 1, &[vec![true]], &clean(), 8).unwrap();
    let without = render_frame(&spec, 1, 1, &[vec![false]], &clean(), 8).unwrap();
    let region = &with.annotations.regions[0];
    assert!(detect_unit(&with.image, region, &params).unwrap().brace_present);
    let v = detect_unit(&without.image, region, &params).unwrap();
    assert!(!v.brace_present);
    assert_eq!(v.central_hits, 0);
}

#[test]
fn grid_frame_verdicts_follow_presence() {
    let spec = ScaffoldSpec::default();
    let presence = vec![vec![true, false, true], vec![false, true, false]];
    let frame = render_frame(&spec, 3, 2, &presence, &clean(), 11).unwrap();
    let params = DetectParams::default();
    let expected: Vec<bool> = presence.iter().flatten().copied().collect();
    let dets: Vec<_> = frame
        .annotations
        .regions
        .iter()
        .map(|r| detect_unit_detailed(&frame.image, r, &params).unwrap())
        .collect();
    let got: Vec<bool> = dets.iter().map(|d| d.verdict.brace_present).collect();
    assert_eq!(got, expected);

    let overlay = draw_overlay(&frame.image, &dets);
    for d in &dets {
        let color = if d.verdict.brace_present {
            PRESENT_COLOR
        } else {
            ABSENT_COLOR
        };
        let (x, y) = ((d.crop.x_min + d.crop.x_max) / 2.0, d.crop.y_min);
        assert_eq!(overlay.get(x as usize, y as usize), color);
    }
}

#[test]
fn annotations_survive_a_coco_round_trip_before_detection() {
    let spec = ScaffoldSpec::default();
    let frame = render_frame(&spec, 2, 1, &[vec![true, false]], &clean(), 4).unwrap();
    let text = serde_json::to_string(&to_coco_json(&frame.annotations)).unwrap();
    let parsed = parse_coco(&text, DEFAULT_UNIT_CATEGORY).unwrap();
    assert_eq!(parsed, frame.annotations);
    let params = DetectParams::default();
    let got: Vec<bool> = parsed
        .regions
        .iter()
        .map(|r| detect_unit(&frame.image, r, &params).unwrap().brace_present)
        .collect();
    assert_eq!(got, vec![true, false]);
}

#[test]
fn monitor_raises_one_alarm_when_a_brace_is_taken_down() {
    let spec = ScaffoldSpec::default();
    let params = DetectParams::default();
    let sequence = [vec![true, true], vec![true, true], vec![true, false], vec![true, false]];
    let mut monitor = Monitor::new(1).unwrap();
    let mut alarms = Vec::new();
    for (i, presence) in sequence.iter().enumerate() {
        let frame = render_frame(&spec, 2, 1, std::slice::from_ref(presence), &clean(), 20 + i as u64).unwrap();
        let verdicts = frame
            .annotations
            .regions
            .iter()
            .map(|r| detect_unit(&frame.image, r, &params).unwrap())
            .collect();
        let snap = FrameSnapshot::new(format!("f{i}"), i as i64, verdicts).unwrap();
        alarms.extend(monitor.observe(snap).unwrap());
    }
    assert_eq!(alarms.len(), 1);
    assert_eq!(alarms[0].unit_id, 2);
    assert_eq!(
        (alarms[0].prev_frame.as_str(), alarms[0].curr_frame.as_str()),
        ("f1", "f2")
    );
}
