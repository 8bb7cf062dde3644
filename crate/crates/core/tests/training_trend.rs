use pga_core::config::ExperimentConfig;
use pga_core::models::ModelKind;
use pga_core::pipeline::{self, Stage, WindowIndex};

fn block_medians(values: &[f64], width: usize) -> Vec<f64> {
    values
        .chunks_exact(width)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_by(f64::total_cmp);
            c[width / 2]
        })
        .collect()
}

#[test]
fn smoothed_training_loss_never_rises() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text("epochs = 60\npatience = 60\nae_epochs = 10")
        .unwrap();
    let prep = pipeline::prepare(pipeline::synthetic_dataset(&cfg).unwrap(), &cfg).unwrap();
    let windows = WindowIndex::new(&prep, &cfg);
    let (encoder, _) = pipeline::pretrain_encoder(&prep, &windows, &cfg).unwrap();
    let stage = Stage {
        prep: &prep,
        windows: &windows,
        encoder: &encoder,
    };
    for kind in ModelKind::ALL {
        let (_, report) = pipeline::train_run(&stage, kind, &cfg, 0).unwrap();
        let totals: Vec<f64> = report.epochs.iter().map(|e| e.total).collect();
        assert_eq!(totals.len(), 60);
        let medians = block_medians(&totals, 5);
        for pair in medians.windows(2) {
            assert!(pair[1] <= pair[0], "{kind}: {medians:?}");
        }
        assert!(
            medians[medians.len() - 1] < 0.5 * medians[0],
            "{kind}: {medians:?}"
        );
    }
}

#[test]
fn identical_seeds_give_identical_reports_and_checkpoints() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(
        "years = 2\ndepths = 6\ntrain_years = 1\nepochs = 5\nae_epochs = 2\npadding = 3",
    )
    .unwrap();
    let run = || {
        let prep = pipeline::prepare(pipeline::synthetic_dataset(&cfg).unwrap(), &cfg).unwrap();
        let windows = WindowIndex::new(&prep, &cfg);
        let (encoder, _) = pipeline::pretrain_encoder(&prep, &windows, &cfg).unwrap();
        let stage = Stage {
            prep: &prep,
            windows: &windows,
            encoder: &encoder,
        };
        let (model, report) = pipeline::train_run(&stage, ModelKind::Pgl, &cfg, 0).unwrap();
        (
            pipeline::model_checkpoint(&model, &prep.norm).to_bytes(),
            report,
        )
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert!(ra.same_trajectory(&rb));
}
