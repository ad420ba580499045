use std::time::Instant;

use plotsieve::gan::{
    train, DiscriminatorConfig, Gan, GeneratorConfig, InspectionDecision, InspectionHook, ProxyOnly, RecognizerKind,
    RecognizerModel, TrainingConfig,
};
use plotsieve::raster::PlotImage;
use plotsieve::raster::{raster_wafer, rotate_augment, WaferRasterSpec};
use plotsieve::yielddata::synth_class_wafers;

fn images(class: &str, n: usize, seed: u64) -> Vec<plotsieve::raster::PlotImage> {
    let spec = WaferRasterSpec::default();
    synth_class_wafers(class, 52, n, seed)
        .unwrap()
        .iter()
        .map(|w| raster_wafer(&w.wafer, &spec).unwrap())
        .collect()
}

const CLASSES: [&str; 7] = ["sparse_random", "dense_random", "high_density", "grid", "edge_ring", "stripe", "quadrant"];

/// Scores held-out plots of every class at each validation pass and keeps
/// training (`probe` mode).
struct Probe {
    class: String,
    sets: Vec<(&'static str, Vec<PlotImage>)>,
}

impl InspectionHook for Probe {
    fn inspect(&mut self, iteration: usize, gan: &Gan) -> InspectionDecision {
        let m = RecognizerModel::new(gan.discriminator.clone(), 0.5, &self.class, RecognizerKind::Interesting, Default::default()).unwrap();
        let rates: Vec<String> = self
            .sets
            .iter()
            .map(|(c, ims)| {
                let s = m.scores(&ims.iter().collect::<Vec<_>>()).unwrap();
                format!("{c} {:.2}", s.iter().filter(|&&v| v > 0.5).count() as f64 / ims.len() as f64)
            })
            .collect();
        println!("  pass @{iteration}: {}", rates.join(", "));
        InspectionDecision::Continue
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let class = args.get(1).map_or("edge_ring", String::as_str);
    let iters: usize = args.get(2).map_or(400, |s| s.parse().unwrap());
    let bn = args.get(3).is_some_and(|s| s == "bn");
    let seed: u64 = args.get(4).map_or(1, |s| s.parse().unwrap());
    let train_set: Vec<_> = images(class, 5, 100).iter().flat_map(|im| rotate_augment(im, 12)).collect();
    let val_set: Vec<_> = images(class, 5, 200).iter().flat_map(|im| rotate_augment(im, 12)).collect();
    let d = DiscriminatorConfig { batchnorm: bn, ..DiscriminatorConfig::reduced() };
    let g = GeneratorConfig::reduced();
    let mut t = TrainingConfig { max_iterations: iters, seed, ..TrainingConfig::reduced() };
    if let Some(lr) = args.get(6) {
        t.g_adam.lr = lr.parse().unwrap();
    }
    let start = Instant::now();
    let out = if args.get(5).is_some_and(|s| s == "probe") {
        let sets = CLASSES.iter().map(|c| (*c, images(c, 60, 700))).collect();
        let mut probe = Probe { class: class.to_string(), sets };
        train(&train_set, &val_set, class, RecognizerKind::Interesting, &d, &g, &t, &mut probe).unwrap()
    } else {
        train(&train_set, &val_set, class, RecognizerKind::Interesting, &d, &g, &t, &mut ProxyOnly).unwrap()
    };
    println!("trained {} iters in {:.1}s stop {:?} complete {}", out.report.iterations, start.elapsed().as_secs_f64(), out.report.stop_reason, out.report.validation_complete);
    for c in out.report.checks.iter() {
        println!("  it {} d {:.4} fm {:.5} rel {:.4} train {:.2} val {:.2}", c.iteration, c.discriminator_loss, c.feature_matching_loss, c.relative_feature_matching, c.train_fraction, c.validation_fraction);
    }
    let edge = images(class, 250, 300);
    let sparse = images("sparse_random", 250, 400);
    let m = &out.model;
    let es = m.scores(&edge.iter().collect::<Vec<_>>()).unwrap();
    let ss = m.scores(&sparse.iter().collect::<Vec<_>>()).unwrap();
    let recall = es.iter().filter(|&&s| s > 0.5).count() as f64 / 250.0;
    let fa = ss.iter().filter(|&&s| s > 0.5).count() as f64 / 250.0;
    println!("{class} recall {recall:.3} sparse false-accept {fa:.3}");
    let mut sorted = ss.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    println!("top sparse scores {:?}", &sorted[..5]);
    let mut sorted = es.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    println!("low {class} scores {:?}", &sorted[..5]);
    for (i, im) in plotsieve::gan::sample_generator(&out.gan.generator, 2, 5).unwrap().iter().enumerate() {
        println!("sample {i}: +1 {} -1 {} 0 {}", im.count(1), im.count(-1), im.count(0));
        for r in (0..48).step_by(3) {
            let row: String = (0..48).step_by(2).map(|c| match im.get(r, c) { 1 => '#', -1 => '.', _ => ' ' }).collect();
            println!("{row}");
        }
    }
    for d in ["dense_random", "high_density", "grid", "edge_ring", "stripe", "quadrant"] {
        let ims = images(d, 100, 500);
        if d == class {
            continue;
        }
        let s = m.scores(&ims.iter().collect::<Vec<_>>()).unwrap();
        println!("{d} accept {:.2}", s.iter().filter(|&&v| v > 0.5).count() as f64 / 100.0);
    }
}
