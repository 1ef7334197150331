mod common;

use common::scenes::{tiny, two_region};
use doodle_core::optimize::{LevelContext, LevelInputs};
use doodle_core::{render, Error, FeatureExtractor, Gamma, RenderConfig, RenderInputs, RenderLog, SemanticMap, Silent, Tensor};

fn scene_inputs(size: usize, maps: bool) -> RenderInputs {
    let s = two_region(size, 21);
    RenderInputs {
        content: s.content,
        style: s.style,
        content_map: maps.then_some(s.content_map),
        style_map: maps.then_some(s.style_map),
    }
}

fn quick(iters: usize) -> RenderConfig {
    RenderConfig {
        iters_per_resolution: iters,
        ..RenderConfig::default()
    }
}

#[test]
fn same_seed_same_output() {
    let net = FeatureExtractor::default_net();
    let inputs = scene_inputs(40, true);
    let a = render(&inputs, &net, &quick(4), &mut Silent).unwrap();
    let b = render(&inputs, &net, &quick(4), &mut Silent).unwrap();
    assert_eq!(a, b);
    let c = render(&inputs, &net, &RenderConfig { seed: 9, ..quick(4) }, &mut Silent).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_gamma_is_bitwise_no_map() {
    let net = FeatureExtractor::default_net();
    let cfg = RenderConfig {
        gamma: Gamma::Fixed(0.0),
        ..quick(4)
    };
    let with_map = render(&scene_inputs(40, true), &net, &cfg, &mut Silent).unwrap();
    let without = render(&scene_inputs(40, false), &net, &cfg, &mut Silent).unwrap();
    assert_eq!(with_map.data(), without.data());
}

#[test]
fn render_log_invariants() {
    let net = FeatureExtractor::default_net();
    let inputs = scene_inputs(64, true);
    let cfg = RenderConfig {
        resolutions: Some(vec![(16, 16), (32, 32), (64, 64)]),
        ..quick(5)
    };
    let mut log = RenderLog::default();
    let out = render(&inputs, &net, &cfg, &mut log).unwrap();
    assert_eq!(out.shape(), (3, 64, 64));
    assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));

    let sizes: Vec<_> = log.level_inits.iter().map(|t| (t.height(), t.width())).collect();
    assert_eq!(sizes, vec![(16, 16), (32, 32), (64, 64)]);
    for (prev, next) in log.level_outputs.iter().zip(&log.level_inits[1..]) {
        let (h, w) = (prev.height() - 1, prev.width() - 1);
        let (nh, nw) = (next.height() - 1, next.width() - 1);
        for c in 0..3 {
            for (y, x, ny, nx) in [(0, 0, 0, 0), (0, w, 0, nw), (h, 0, nh, 0), (h, w, nh, nw)] {
                assert_eq!(prev.at(c, y, x), next.at(c, ny, nx));
            }
        }
        assert_eq!(*next, prev.resize_bilinear(next.height(), next.width()));
    }

    assert_eq!(log.records.len(), 15);
    for r in &log.records {
        let want = cfg.alpha * r.report.content + cfg.beta * r.report.style_sum();
        assert!((r.report.total - want).abs() <= 1e-9 * want.abs());
        assert!(r.report.total.is_finite());
        let accepted = r.accepted.expect("line search succeeded");
        assert!(accepted <= r.report.total, "{accepted} > {}", r.report.total);
    }
}

#[test]
fn style_term_scales_linearly_with_beta() {
    let net = FeatureExtractor::default_net();
    let s = tiny(32, 4);
    let inputs = LevelInputs {
        content: &s.content,
        style: &s.style,
        content_map: Some(&s.content_map),
        style_map: Some(&s.style_map),
    };
    let taps = net.tap_names();
    let eval = |beta: f64| {
        let ctx = LevelContext::build(&net, &inputs, &taps, "relu3_1", 10.0, beta, 20.0, 3).unwrap();
        ctx.evaluate(&s.image, None).unwrap()
    };
    let (one, two) = (eval(100.0), eval(200.0));
    assert_eq!(one.report.style, two.report.style);
    assert_eq!(one.report.content, two.report.content);
    let d1 = one.report.total - 10.0 * one.report.content;
    let d2 = two.report.total - 10.0 * two.report.content;
    assert!((d2 - 2.0 * d1).abs() <= 1e-9 * d2.abs());
}

#[test]
fn semantic_channels_stay_fixed() {
    let net = FeatureExtractor::default_net();
    let s = tiny(32, 6);
    let inputs = LevelInputs {
        content: &s.content,
        style: &s.style,
        content_map: Some(&s.content_map),
        style_map: Some(&s.style_map),
    };
    let ctx = LevelContext::build(&net, &inputs, &net.tap_names(), "relu3_1", 10.0, 100.0, 30.0, 3).unwrap();
    let a = ctx.evaluate(&s.image, None).unwrap();
    let b = ctx.evaluate(&s.content, None).unwrap();
    for i in 0..2 {
        let want = ctx.semantic(i).unwrap();
        assert_eq!(&a.features[i].semantic().unwrap(), want);
        assert_eq!(&b.features[i].semantic().unwrap(), want);
        assert_ne!(a.features[i].tensor(), b.features[i].tensor());
    }
}

#[test]
fn style_on_itself_converges_towards_zero_style_loss() {
    let net = FeatureExtractor::default_net();
    let s = two_region(32, 8);
    let inputs = RenderInputs {
        content: s.style.clone(),
        style: s.style.clone(),
        content_map: None,
        style_map: None,
    };
    let mut log = RenderLog::default();
    let cfg = RenderConfig {
        resolutions: Some(vec![(32, 32)]),
        ..quick(30)
    };
    render(&inputs, &net, &cfg, &mut log).unwrap();
    let first = log.records.first().unwrap().report.total;
    let last = log.records.last().unwrap().accepted.unwrap();
    assert!(last < 0.25 * first, "{first} -> {last}");
}

#[test]
fn input_validation() {
    let net = FeatureExtractor::default_net();
    let mut inputs = scene_inputs(32, true);
    inputs.style_map = None;
    let err = render(&inputs, &net, &quick(1), &mut Silent).unwrap_err();
    assert!(matches!(err, Error::Validation(ref m) if m.contains("same M")));

    let mut inputs = scene_inputs(32, true);
    inputs.style_map = Some(SemanticMap::new(Tensor::zeros(1, 32, 32)));
    assert!(matches!(render(&inputs, &net, &quick(1), &mut Silent), Err(Error::Validation(_))));

    let mut inputs = scene_inputs(32, true);
    inputs.content_map = Some(SemanticMap::new(Tensor::zeros(3, 32, 40)));
    assert!(matches!(render(&inputs, &net, &quick(1), &mut Silent), Err(Error::Validation(_))));

    let inputs = RenderInputs {
        content: Tensor::filled(3, 8, 8, 1.0),
        style: Tensor::filled(3, 32, 32, 1.0),
        content_map: None,
        style_map: None,
    };
    assert!(matches!(render(&inputs, &net, &quick(1), &mut Silent), Err(Error::Size(_))));

    let mut inputs = scene_inputs(32, true);
    inputs.style_map = Some(SemanticMap::new(Tensor::zeros(3, 32, 32)));
    inputs.content_map = Some(SemanticMap::new(Tensor::zeros(3, 32, 32)));
    assert!(matches!(render(&inputs, &net, &quick(1), &mut Silent), Err(Error::DegenerateMap(_))));
}

#[test]
fn stepping_reports_each_iteration() {
    let net = FeatureExtractor::default_net();
    let inputs = scene_inputs(40, true);
    let cfg = RenderConfig {
        resolutions: Some(vec![(20, 20), (40, 40)]),
        ..quick(3)
    };
    let mut r = doodle_core::Renderer::new(&net, inputs.clone(), cfg.clone()).unwrap();
    assert_eq!(r.plan().levels, vec![(20, 20), (40, 40)]);
    let mut seen = Vec::new();
    while let Some(rec) = r.step(&mut Silent).unwrap() {
        assert!(r.output().is_none() || r.is_done());
        seen.push((rec.report.level, rec.report.iteration));
    }
    assert_eq!(seen, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]);
    assert_eq!(r.output().unwrap(), render(&inputs, &net, &cfg, &mut Silent).unwrap());
}
